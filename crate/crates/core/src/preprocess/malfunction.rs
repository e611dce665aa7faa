use chrono::{DateTime, Duration, Utc};

use crate::error::{Error, Result};

/// Removes every maximal run of zero-production rows lasting strictly longer
/// than `max_zero_run`.
///
/// A run of `k` rows starting at `t0` and ending at `t1` lasts
/// `t1 - t0 + resolution`, i.e. each row covers one resolution interval.
/// Rows with missing production break a run but are never removed.
pub fn filter_malfunction<T: Clone>(
    rows: &[T],
    timestamp: impl Fn(&T) -> DateTime<Utc>,
    production: impl Fn(&T) -> Option<f64>,
    resolution: Duration,
    max_zero_run: Duration,
) -> Result<Vec<T>> {
    for (i, pair) in rows.windows(2).enumerate() {
        if timestamp(&pair[1]) < timestamp(&pair[0]) {
            return Err(Error::Ordering { row: i + 1 });
        }
    }
    let mut keep = vec![true; rows.len()];
    let mut i = 0;
    while i < rows.len() {
        if production(&rows[i]) != Some(0.0) {
            i += 1;
            continue;
        }
        let start = i;
        while i < rows.len() && production(&rows[i]) == Some(0.0) {
            i += 1;
        }
        let span = timestamp(&rows[i - 1]) - timestamp(&rows[start]) + resolution;
        if span > max_zero_run {
            keep[start..i].iter_mut().for_each(|k| *k = false);
        }
    }
    Ok(rows
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(r, _)| r.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn hourly(values: &[f64]) -> Vec<(DateTime<Utc>, f64)> {
        let t0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (t0 + Duration::hours(i as i64), v))
            .collect()
    }

    fn run(rows: &[(DateTime<Utc>, f64)]) -> Result<Vec<(DateTime<Utc>, f64)>> {
        filter_malfunction(rows, |r| r.0, |r| Some(r.1), Duration::hours(1), Duration::hours(24))
    }

    fn with_zero_run(zeros: usize) -> Vec<f64> {
        let mut v = vec![0.4, 0.5];
        v.extend(std::iter::repeat_n(0.0, zeros));
        v.extend([0.3, 0.2]);
        v
    }

    #[test]
    fn twenty_five_zero_hours_dropped() {
        let rows = hourly(&with_zero_run(25));
        let out = run(&rows).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|r| r.1 != 0.0));
    }

    #[test]
    fn exactly_twenty_four_zero_hours_kept() {
        let rows = hourly(&with_zero_run(24));
        assert_eq!(run(&rows).unwrap(), rows);
    }

    #[test]
    fn no_zero_runs_is_identity() {
        let rows = hourly(&[0.1, 0.2, 0.3]);
        assert_eq!(run(&rows).unwrap(), rows);
    }

    #[test]
    fn unordered_timestamps_rejected() {
        let mut rows = hourly(&[0.1, 0.2, 0.3]);
        rows.swap(1, 2);
        assert!(matches!(run(&rows), Err(Error::Ordering { row: 2 })));
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeStrategy {
    #[default]
    LinearInterpolate,
    ForwardFill,
    DropRow,
}

/// Per-column missing-value rule. Leading gaps are always backfilled from
/// the first valid value; trailing gaps under interpolation are forward filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ImputeRule {
    pub strategy: ImputeStrategy,
}

/// Fills missing entries of one series. `DropRow` leaves the gaps in place
/// for the caller to drop whole rows.
pub fn fill_missing(series: &[Option<f64>], rule: ImputeRule) -> Result<Vec<Option<f64>>> {
    if rule.strategy == ImputeStrategy::DropRow {
        return Ok(series.to_vec());
    }
    let Some(first) = series.iter().position(Option::is_some) else {
        if series.is_empty() {
            return Ok(Vec::new());
        }
        return Err(Error::Impute(format!(
            "all {} values of the series are missing",
            series.len()
        )));
    };
    let mut out: Vec<f64> = Vec::with_capacity(series.len());
    let first_value = series[first].expect("position found a value");
    out.extend(std::iter::repeat_n(first_value, first));

    let mut last_valid = first;
    out.push(first_value);
    for i in first + 1..series.len() {
        match series[i] {
            Some(v) => {
                if rule.strategy == ImputeStrategy::LinearInterpolate && i - last_valid > 1 {
                    let start = out[last_valid];
                    let span = (i - last_valid) as f64;
                    for (k, slot) in out[last_valid + 1..i].iter_mut().enumerate() {
                        *slot = start + (v - start) * (k + 1) as f64 / span;
                    }
                }
                out.push(v);
                last_valid = i;
            }
            None => out.push(out[last_valid]),
        }
    }
    Ok(out.into_iter().map(Some).collect())
}

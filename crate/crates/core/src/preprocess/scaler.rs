//! Min-max and standard scalers with streaming parameter updates.
//!
//! Fitted scalers are values: `partial_update` returns a new scaler and leaves
//! the original untouched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerKind {
    MinMax,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub count: u64,
}

impl Moments {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        let values: Vec<f64> = values.collect();
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            variance,
            count: values.len() as u64,
        })
    }

    /// Pairwise combination of two sets of moments.
    fn merge(self, other: Moments) -> Moments {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * nb / n;
        let m2 = self.variance * na + other.variance * nb + delta * delta * na * nb / n;
        Moments {
            mean,
            variance: (m2 / n).max(0.0),
            count: self.count + other.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureParams {
    MinMax(Range),
    Standard(Moments),
}

/// A fitted per-feature scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    names: Vec<String>,
    params: Vec<FeatureParams>,
}

fn column<'a>(rows: &'a [Vec<Option<f64>>], j: usize) -> impl Iterator<Item = f64> + 'a {
    rows.iter().filter_map(move |r| r[j]).filter(|v| v.is_finite())
}

impl Scaler {
    /// Fits one parameter set per column of `rows`. Missing cells are skipped.
    pub fn fit(kind: ScalerKind, names: &[String], rows: &[Vec<Option<f64>>]) -> Result<Self> {
        check_widths(names.len(), rows)?;
        let mut params = Vec::with_capacity(names.len());
        for (j, name) in names.iter().enumerate() {
            let fitted = match kind {
                ScalerKind::MinMax => range_of(column(rows, j)).map(FeatureParams::MinMax),
                ScalerKind::Standard => Moments::of(column(rows, j)).map(FeatureParams::Standard),
            };
            params.push(fitted.ok_or_else(|| Error::Fit {
                column: name.clone(),
            })?);
        }
        Ok(Self {
            names: names.to_vec(),
            params,
        })
    }

    /// Convenience for complete data.
    pub fn fit_dense(kind: ScalerKind, names: &[String], rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Option<f64>>> =
            rows.iter().map(|r| r.iter().copied().map(Some).collect()).collect();
        Self::fit(kind, names, &rows)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[FeatureParams] {
        &self.params
    }

    pub fn feature_count(&self) -> usize {
        self.params.len()
    }

    /// Returns the scaler that has seen both the old data and `rows`.
    ///
    /// Min-max parameters widen to the element-wise extrema; standard
    /// parameters become the exact moments of the union.
    pub fn partial_update(&self, rows: &[Vec<Option<f64>>]) -> Result<Self> {
        check_widths(self.params.len(), rows)?;
        let params = self
            .params
            .iter()
            .enumerate()
            .map(|(j, p)| match p {
                FeatureParams::MinMax(r) => {
                    let mut r = *r;
                    for v in column(rows, j) {
                        r.min = r.min.min(v);
                        r.max = r.max.max(v);
                    }
                    FeatureParams::MinMax(r)
                }
                FeatureParams::Standard(m) => match Moments::of(column(rows, j)) {
                    Some(batch) => FeatureParams::Standard(m.merge(batch)),
                    None => FeatureParams::Standard(*m),
                },
            })
            .collect();
        Ok(Self {
            names: self.names.clone(),
            params,
        })
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x.iter()
            .zip(&self.params)
            .map(|(&v, p)| match p {
                FeatureParams::MinMax(r) => {
                    let span = r.max - r.min;
                    if span > 0.0 {
                        (v - r.min) / span
                    } else {
                        0.0
                    }
                }
                FeatureParams::Standard(m) => {
                    if m.variance > 0.0 {
                        (v - m.mean) / m.variance.sqrt()
                    } else {
                        0.0
                    }
                }
            })
            .collect())
    }

    /// Inverse of [`transform`](Self::transform); constant columns map back to their single value.
    pub fn inverse_transform(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        Ok(z.iter()
            .zip(&self.params)
            .map(|(&v, p)| match p {
                FeatureParams::MinMax(r) => r.min + v * (r.max - r.min),
                FeatureParams::Standard(m) => m.mean + v * m.variance.sqrt(),
            })
            .collect())
    }

    /// Representative raw value of feature `j` (range midpoint or mean).
    pub fn center(&self, j: usize) -> f64 {
        match &self.params[j] {
            FeatureParams::MinMax(r) => 0.5 * (r.min + r.max),
            FeatureParams::Standard(m) => m.mean,
        }
    }

    /// Text record, one line per feature: `v1<TAB>name<TAB>type<TAB>key=value...`.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        for (name, p) in self.names.iter().zip(&self.params) {
            let line = match p {
                FeatureParams::MinMax(r) => {
                    format!("v1\t{name}\tmin_max\tmin={:?}\tmax={:?}\n", r.min, r.max)
                }
                FeatureParams::Standard(m) => format!(
                    "v1\t{name}\tstandard\tmean={:?}\tvariance={:?}\tcount={}\n",
                    m.mean, m.variance, m.count
                ),
            };
            out.push_str(&line);
        }
        out
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut params = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |msg: &str| Error::Format(format!("scaler record line {}: {msg}", n + 1));
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 3 || fields[0] != "v1" {
                return Err(bad("expected `v1<TAB>name<TAB>type`"));
            }
            let lookup = |key: &str| -> Result<&str> {
                fields[3..]
                    .iter()
                    .find_map(|f| f.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                    .ok_or_else(|| bad(&format!("missing `{key}`")))
            };
            let real = |key: &str| -> Result<f64> {
                lookup(key)?
                    .parse()
                    .map_err(|_| bad(&format!("`{key}` is not a number")))
            };
            let p = match fields[2] {
                "min_max" => FeatureParams::MinMax(Range {
                    min: real("min")?,
                    max: real("max")?,
                }),
                "standard" => FeatureParams::Standard(Moments {
                    mean: real("mean")?,
                    variance: real("variance")?,
                    count: lookup("count")?
                        .parse()
                        .map_err(|_| bad("`count` is not an integer"))?,
                }),
                other => return Err(bad(&format!("unknown scaler type `{other}`"))),
            };
            names.push(fields[1].to_string());
            params.push(p);
        }
        Ok(Self { names, params })
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.params.len() {
            return Err(Error::shape(format!(
                "scaler has {} features, row has {}",
                self.params.len(),
                x.len()
            )));
        }
        Ok(())
    }
}

fn range_of(values: impl Iterator<Item = f64>) -> Option<Range> {
    values.fold(None, |acc, v| match acc {
        None => Some(Range { min: v, max: v }),
        Some(r) => Some(Range {
            min: r.min.min(v),
            max: r.max.max(v),
        }),
    })
}

fn check_widths(width: usize, rows: &[Vec<Option<f64>>]) -> Result<()> {
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(Error::shape(format!(
            "row {i} has {} features, expected {width}",
            row.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|j| format!("f{j}")).collect()
    }

    fn col(values: &[f64]) -> Vec<Vec<Option<f64>>> {
        values.iter().map(|&v| vec![Some(v)]).collect()
    }

    #[test]
    fn min_max_fit_and_transform() {
        let s = Scaler::fit(ScalerKind::MinMax, &names(1), &col(&[0.0, 5.0, 10.0])).unwrap();
        assert_eq!(s.params()[0], FeatureParams::MinMax(Range { min: 0.0, max: 10.0 }));
        assert_eq!(s.transform(&[5.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn constant_standard_column_maps_to_zero() {
        let s = Scaler::fit(ScalerKind::Standard, &names(1), &col(&[1.0, 1.0, 1.0])).unwrap();
        match s.params()[0] {
            FeatureParams::Standard(m) => {
                assert_eq!(m.mean, 1.0);
                assert_eq!(m.variance, 0.0);
            }
            _ => unreachable!(),
        }
        assert_eq!(s.transform(&[1.0]).unwrap(), vec![0.0]);
        assert_eq!(s.transform(&[7.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn constant_min_max_column_maps_to_zero() {
        let s = Scaler::fit(ScalerKind::MinMax, &names(1), &col(&[3.0, 3.0])).unwrap();
        assert_eq!(s.transform(&[3.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn empty_or_all_missing_column_names_the_column() {
        let err = Scaler::fit(ScalerKind::MinMax, &names(1), &[]).unwrap_err();
        assert!(matches!(err, Error::Fit { ref column } if column == "f0"));
        let rows = vec![vec![Some(1.0), None], vec![Some(2.0), None]];
        let err = Scaler::fit(ScalerKind::Standard, &names(2), &rows).unwrap_err();
        assert!(matches!(err, Error::Fit { ref column } if column == "f1"));
    }

    #[test]
    fn min_max_extrema_update() {
        let s = Scaler::fit(ScalerKind::MinMax, &names(1), &col(&[0.0, 10.0])).unwrap();
        let wider = s.partial_update(&col(&[20.0])).unwrap();
        assert_eq!(wider.params()[0], FeatureParams::MinMax(Range { min: 0.0, max: 20.0 }));
        assert_eq!(wider.transform(&[5.0]).unwrap(), vec![0.25]);
        let same = s.partial_update(&col(&[3.0, 7.0])).unwrap();
        assert_eq!(same, s);
    }

    #[test]
    fn standard_update_over_halves_matches_refit() {
        let data: Vec<f64> = (0..101).map(|i| ((i * 37) % 23) as f64 * 0.7 - 3.0).collect();
        let full = Scaler::fit(ScalerKind::Standard, &names(1), &col(&data)).unwrap();
        let first = Scaler::fit(ScalerKind::Standard, &names(1), &col(&data[..40])).unwrap();
        let merged = first.partial_update(&col(&data[40..])).unwrap();
        let (FeatureParams::Standard(a), FeatureParams::Standard(b)) =
            (&full.params()[0], &merged.params()[0])
        else {
            unreachable!()
        };
        assert_eq!(a.count, b.count);
        assert!((a.mean - b.mean).abs() < 1e-9);
        assert!((a.variance - b.variance).abs() < 1e-9);
    }

    #[test]
    fn update_width_mismatch() {
        let s = Scaler::fit(ScalerKind::MinMax, &names(1), &col(&[0.0, 1.0])).unwrap();
        assert!(matches!(
            s.partial_update(&[vec![Some(1.0), Some(2.0)]]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn record_round_trip() {
        let rows = vec![vec![Some(0.1), Some(3.0)], vec![Some(0.7), Some(-1.5)]];
        for kind in [ScalerKind::MinMax, ScalerKind::Standard] {
            let s = Scaler::fit(kind, &names(2), &rows).unwrap();
            let text = s.to_record();
            assert_eq!(text.lines().count(), 2);
            assert_eq!(Scaler::from_record(&text).unwrap(), s);
        }
        assert!(Scaler::from_record("v2\tx\tmin_max\tmin=0\tmax=1").is_err());
    }
}

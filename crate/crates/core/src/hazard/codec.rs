//! Standardization + one-hot encoding fitted on training rows only.

use std::collections::{BTreeSet, HashMap};

use log::warn;
use serde::{Deserialize, Serialize};

use super::features::{Feature, FeatureRow, FeatureSet};
use crate::error::{Error, Result};

/// Marker for a categorical value outside the fitted levels.
pub const UNSEEN: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericColumn {
    pub feature: Feature,
    pub mean: f64,
    /// Population standard deviation; always > 0.
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalColumn {
    pub feature: Feature,
    pub levels: Vec<String>,
    #[serde(skip)]
    lookup: HashMap<String, u32>,
}

impl CategoricalColumn {
    fn new(feature: Feature, levels: Vec<String>) -> Self {
        let lookup = levels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as u32))
            .collect();
        CategoricalColumn {
            feature,
            levels,
            lookup,
        }
    }

    pub fn level_index(&self, value: &str) -> Option<u32> {
        if self.lookup.len() == self.levels.len() {
            self.lookup.get(value).copied()
        } else {
            self.levels.iter().position(|l| l == value).map(|i| i as u32)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCodec {
    pub numeric: Vec<NumericColumn>,
    pub categorical: Vec<CategoricalColumn>,
}

/// Encoded design: dense standardized numerics plus one global column index
/// per categorical block (`UNSEEN` for an all-zero block). Column 0 of the
/// coefficient space is not stored; the intercept is handled separately.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Design {
    pub n_rows: usize,
    pub n_num: usize,
    pub n_cat: usize,
    /// Number of encoded columns (numerics + all one-hot levels).
    pub dim: usize,
    pub num: Vec<f64>,
    pub cat: Vec<u32>,
}

impl Design {
    pub fn numeric_row(&self, r: usize) -> &[f64] {
        &self.num[r * self.n_num..(r + 1) * self.n_num]
    }

    pub fn cat_row(&self, r: usize) -> &[u32] {
        &self.cat[r * self.n_cat..(r + 1) * self.n_cat]
    }

    /// `x · beta`, excluding the intercept.
    pub fn dot(&self, r: usize, beta: &[f64]) -> f64 {
        let mut z = 0.0;
        for (x, b) in self.numeric_row(r).iter().zip(beta) {
            z += x * b;
        }
        for &c in self.cat_row(r) {
            if c != UNSEEN {
                z += beta[c as usize];
            }
        }
        z
    }
}

impl FeatureCodec {
    /// Fits means, population stddevs and category levels on `rows`.
    /// Constant numeric columns are dropped.
    pub fn fit<'a, I>(features: &FeatureSet, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = FeatureRow<'a>>,
    {
        let numeric_features: Vec<Feature> = features.numeric().collect();
        let cat_features: Vec<Feature> = features.categorical().collect();
        let mut sums = vec![0.0; numeric_features.len()];
        let mut sq = vec![0.0; numeric_features.len()];
        let mut levels: Vec<BTreeSet<String>> = vec![BTreeSet::new(); cat_features.len()];
        let mut n = 0usize;
        let mut buffered = Vec::new();
        for row in rows {
            n += 1;
            let vals: Vec<f64> = numeric_features.iter().map(|&f| row.numeric(f)).collect();
            for (j, v) in vals.iter().enumerate() {
                sums[j] += v;
            }
            buffered.push(vals);
            for (j, &f) in cat_features.iter().enumerate() {
                let v = row.categorical(f);
                if !levels[j].contains(v.as_ref()) {
                    levels[j].insert(v.into_owned());
                }
            }
        }
        if n == 0 {
            return Err(Error::Argument("cannot fit feature codec on zero rows".into()));
        }
        let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        for vals in &buffered {
            for (j, v) in vals.iter().enumerate() {
                sq[j] += (v - means[j]).powi(2);
            }
        }
        let mut numeric = Vec::new();
        for (j, &f) in numeric_features.iter().enumerate() {
            let stddev = (sq[j] / n as f64).sqrt();
            if stddev > 1e-12 {
                numeric.push(NumericColumn {
                    feature: f,
                    mean: means[j],
                    stddev,
                });
            } else {
                warn!("dropping constant numeric column `{f}`");
            }
        }
        let categorical = cat_features
            .iter()
            .zip(levels)
            .map(|(&f, l)| CategoricalColumn::new(f, l.into_iter().collect()))
            .collect();
        Ok(FeatureCodec {
            numeric,
            categorical,
        })
    }

    /// Restores lookup tables after deserialization.
    pub fn rebuild_lookups(&mut self) {
        for c in &mut self.categorical {
            *c = CategoricalColumn::new(c.feature, std::mem::take(&mut c.levels));
        }
    }

    pub fn dim(&self) -> usize {
        self.numeric.len() + self.categorical.iter().map(|c| c.levels.len()).sum::<usize>()
    }

    /// Encoded column names in coefficient order.
    pub fn column_names(&self) -> Vec<String> {
        let mut out: Vec<String> = self.numeric.iter().map(|c| c.feature.to_string()).collect();
        for c in &self.categorical {
            out.extend(c.levels.iter().map(|l| format!("{}={}", c.feature, l)));
        }
        out
    }

    fn encode_into(&self, row: &FeatureRow<'_>, num: &mut Vec<f64>, cat: &mut Vec<u32>) {
        for c in &self.numeric {
            num.push((row.numeric(c.feature) - c.mean) / c.stddev);
        }
        let mut offset = self.numeric.len() as u32;
        for c in &self.categorical {
            let v = row.categorical(c.feature);
            cat.push(match c.level_index(&v) {
                Some(i) => offset + i,
                None => UNSEEN,
            });
            offset += c.levels.len() as u32;
        }
    }

    /// `x · beta` for one row without materializing the encoding.
    pub fn linear(&self, row: &FeatureRow<'_>, beta: &[f64]) -> f64 {
        let mut z = 0.0;
        for (c, b) in self.numeric.iter().zip(beta) {
            z += (row.numeric(c.feature) - c.mean) / c.stddev * b;
        }
        let mut offset = self.numeric.len();
        for c in &self.categorical {
            if let Some(i) = c.level_index(&row.categorical(c.feature)) {
                z += beta[offset + i as usize];
            }
            offset += c.levels.len();
        }
        z
    }

    pub fn encode<'a, I>(&self, rows: I) -> Design
    where
        I: IntoIterator<Item = FeatureRow<'a>>,
    {
        let mut d = Design {
            n_rows: 0,
            n_num: self.numeric.len(),
            n_cat: self.categorical.len(),
            dim: self.dim(),
            num: Vec::new(),
            cat: Vec::new(),
        };
        for row in rows {
            self.encode_into(&row, &mut d.num, &mut d.cat);
            d.n_rows += 1;
        }
        d
    }

    pub fn encode_one(&self, row: &FeatureRow<'_>) -> Design {
        self.encode(std::iter::once(*row))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::{Enrollment, EnrollmentKey, FinalResult, Statics};

    fn enrollment(gender: &str, credits: f64) -> Enrollment {
        Enrollment {
            key: EnrollmentKey::new(1, "AAA", "2013J"),
            final_result: FinalResult::Pass,
            date_unregistration: None,
            event: false,
            t_event: None,
            t_last_obs: 3,
            t_final: 3,
            statics: Statics {
                gender: gender.into(),
                highest_education: "x".into(),
                age_band: "0-35".into(),
                num_of_prev_attempts: 0.0,
                studied_credits: credits,
            },
        }
    }

    fn row(e: &Enrollment, clicks: f64) -> FeatureRow<'_> {
        FeatureRow {
            week: 0,
            total_clicks: clicks,
            recency: 0.0,
            streak: 1.0,
            submitted: 0.0,
            enrollment: e,
        }
    }

    #[test]
    fn population_stddev() {
        let e = enrollment("F", 60.0);
        let fs = FeatureSet(vec![Feature::TotalClicks]);
        let codec = FeatureCodec::fit(&fs, [1.0, 2.0, 3.0].map(|c| row(&e, c))).unwrap();
        assert_eq!(codec.numeric.len(), 1);
        assert!((codec.numeric[0].mean - 2.0).abs() < 1e-15);
        assert!((codec.numeric[0].stddev - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn unseen_category_is_zero_block() {
        let a = enrollment("A", 60.0);
        let b = enrollment("B", 60.0);
        let c = enrollment("C", 60.0);
        let fs = FeatureSet(vec![Feature::Gender]);
        let codec = FeatureCodec::fit(&fs, [row(&a, 1.0), row(&b, 1.0)]).unwrap();
        assert_eq!(codec.dim(), 2);
        let d = codec.encode_one(&row(&c, 1.0));
        assert_eq!(d.cat_row(0), &[UNSEEN]);
        assert_eq!(d.dot(0, &[5.0, 7.0]), 0.0);
        let d = codec.encode_one(&row(&b, 1.0));
        assert_eq!(d.dot(0, &[5.0, 7.0]), 7.0);
    }

    #[test]
    fn constant_numeric_dropped() {
        let e = enrollment("F", 60.0);
        let fs = FeatureSet(vec![Feature::StudiedCredits, Feature::TotalClicks]);
        let codec = FeatureCodec::fit(&fs, [row(&e, 1.0), row(&e, 4.0)]).unwrap();
        assert_eq!(codec.numeric.len(), 1);
        assert_eq!(codec.numeric[0].feature, Feature::TotalClicks);
    }

    #[test]
    fn empty_fit_is_argument_error() {
        let fs = FeatureSet::full();
        let err = FeatureCodec::fit(&fs, std::iter::empty()).unwrap_err();
        assert_eq!(err.code(), "E_ARGUMENT");
    }
}

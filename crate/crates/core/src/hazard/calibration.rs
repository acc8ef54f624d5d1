//! Sigmoid (Platt) calibration of raw decision scores:
//! `p = 1 / (1 + exp(a·s + b))`.

use serde::{Deserialize, Serialize};

use super::logistic::{sigmoid, softplus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Platt {
    pub a: f64,
    pub b: f64,
}

impl Platt {
    pub fn apply(&self, s: f64) -> f64 {
        sigmoid(-(self.a * s + self.b))
    }
}

/// Fits `a, b` by Newton's method on the cross-entropy against Platt's
/// smoothed targets `(N₊+1)/(N₊+2)` and `1/(N₋+2)`.
pub fn fit_platt(scores: &[f64], labels: &[bool]) -> Result<Platt> {
    if scores.len() != labels.len() {
        return Err(Error::Contract("scores and labels differ in length".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::Calibration("calibration scores contain a single class".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Calibration("non-finite raw score".into()));
    }
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = labels.iter().map(|&y| if y { hi } else { lo }).collect();

    // loss per row with f = a s + b: softplus(f) − (1 − t) f
    let loss = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&targets)
            .map(|(&s, &t)| {
                let f = a * s + b;
                softplus(f) - (1.0 - t) * f
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let mut value = loss(a, b);
    for _ in 0..200 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&s, &t) in scores.iter().zip(&targets) {
            let p = sigmoid(-(a * s + b));
            let d = t - p;
            let w = p * (1.0 - p);
            ga += d * s;
            gb += d;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        if ga.abs() < 1e-10 * scores.len() as f64 && gb.abs() < 1e-10 * scores.len() as f64 {
            break;
        }
        let ridge = 1e-12;
        let (haa, hbb) = (haa + ridge, hbb + ridge);
        let det = haa * hbb - hab * hab;
        let (da, db) = if det > 0.0 {
            (-(hbb * ga - hab * gb) / det, -(haa * gb - hab * ga) / det)
        } else {
            (-ga, -gb)
        };
        let slope = da * ga + db * gb;
        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let v = loss(na, nb);
            if v <= value + 1e-4 * step * slope {
                a = na;
                b = nb;
                value = v;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Calibration("sigmoid fit diverged".into()));
    }
    Ok(Platt { a, b })
}

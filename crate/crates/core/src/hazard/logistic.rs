//! Class-balanced, L2-penalized logistic regression.
//!
//! Objective over parameters `θ = (β₀, β)`:
//!
//! ```text
//! J(θ) = Σᵢ cᵢ [softplus(zᵢ) − yᵢ zᵢ] + (λ/2)‖β‖²,   zᵢ = β₀ + xᵢ·β
//! ```
//!
//! with balanced class weights `c = n / (2 n_class)` and an unpenalized
//! intercept. Minimized by damped Newton iterations; the Hessian is small
//! (one row/column per encoded column) while rows are many, so accumulation
//! is chunked across threads and reduced in a fixed order.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::codec::{Design, UNSEEN};
use crate::error::{Error, Result};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lambda: f64,
    pub max_iter: usize,
    /// Relative gradient-norm tolerance.
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lambda: 1.0,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub class_weights: (f64, f64),
}

pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `(w_pos, w_neg)` with `w_c = n / (2 n_c)`.
pub fn class_weights(labels: &[bool]) -> Result<(f64, f64)> {
    let n = labels.len();
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Training(format!(
            "labels contain a single class ({n_pos} positive, {n_neg} negative)"
        )));
    }
    Ok((n as f64 / (2.0 * n_pos as f64), n as f64 / (2.0 * n_neg as f64)))
}

pub struct Objective<'a> {
    design: &'a Design,
    labels: &'a [bool],
    weights: (f64, f64),
    lambda: f64,
}

struct Partial {
    value: f64,
    grad: Vec<f64>,
    hess: Option<Vec<f64>>,
}

impl<'a> Objective<'a> {
    pub fn new(design: &'a Design, labels: &'a [bool], lambda: f64) -> Result<Self> {
        if design.n_rows != labels.len() {
            return Err(Error::Contract(format!(
                "design has {} rows but {} labels",
                design.n_rows,
                labels.len()
            )));
        }
        if design.dim == 0 {
            return Err(Error::Training("empty design: no encoded feature columns".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Argument(format!("lambda must be finite and ≥ 0, got {lambda}")));
        }
        Ok(Objective {
            design,
            labels,
            weights: class_weights(labels)?,
            lambda,
        })
    }

    pub fn n_params(&self) -> usize {
        self.design.dim + 1
    }

    pub fn class_weights(&self) -> (f64, f64) {
        self.weights
    }

    fn accumulate(&self, theta: &[f64], with_hessian: bool) -> Partial {
        let d = self.design;
        let p = self.n_params();
        let beta = &theta[1..];
        let chunks: Vec<Partial> = (0..d.n_rows)
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|rows| {
                let mut part = Partial {
                    value: 0.0,
                    grad: vec![0.0; p],
                    hess: with_hessian.then(|| vec![0.0; p * p]),
                };
                let mut idx: Vec<usize> = Vec::with_capacity(1 + d.n_num + d.n_cat);
                let mut val: Vec<f64> = Vec::with_capacity(1 + d.n_num + d.n_cat);
                for &r in rows {
                    let y = self.labels[r];
                    let c = if y { self.weights.0 } else { self.weights.1 };
                    let z = theta[0] + d.dot(r, beta);
                    part.value += c * (softplus(z) - if y { z } else { 0.0 });
                    let mu = sigmoid(z);
                    let resid = c * (mu - if y { 1.0 } else { 0.0 });
                    idx.clear();
                    val.clear();
                    idx.push(0);
                    val.push(1.0);
                    for (j, &x) in d.numeric_row(r).iter().enumerate() {
                        idx.push(1 + j);
                        val.push(x);
                    }
                    for &cc in d.cat_row(r) {
                        if cc != UNSEEN {
                            idx.push(1 + cc as usize);
                            val.push(1.0);
                        }
                    }
                    for (&i, &v) in idx.iter().zip(&val) {
                        part.grad[i] += resid * v;
                    }
                    if let Some(h) = part.hess.as_mut() {
                        let s = c * mu * (1.0 - mu);
                        for (&i, &vi) in idx.iter().zip(&val) {
                            let row = &mut h[i * p..(i + 1) * p];
                            for (&j, &vj) in idx.iter().zip(&val) {
                                row[j] += s * vi * vj;
                            }
                        }
                    }
                }
                part
            })
            .collect();

        let mut total = Partial {
            value: 0.0,
            grad: vec![0.0; p],
            hess: with_hessian.then(|| vec![0.0; p * p]),
        };
        for part in chunks {
            total.value += part.value;
            for (a, b) in total.grad.iter_mut().zip(&part.grad) {
                *a += b;
            }
            if let (Some(a), Some(b)) = (total.hess.as_mut(), part.hess.as_ref()) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
        }
        for j in 1..p {
            total.value += 0.5 * self.lambda * theta[j] * theta[j];
            total.grad[j] += self.lambda * theta[j];
            if let Some(h) = total.hess.as_mut() {
                h[j * p + j] += self.lambda;
            }
        }
        total
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.accumulate(theta, false).value
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.accumulate(theta, false).grad
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn newton_direction(hess: Vec<f64>, grad: &[f64]) -> Result<Vec<f64>> {
    let p = grad.len();
    let h = DMatrix::from_row_slice(p, p, &hess);
    let rhs = DVector::from_iterator(p, grad.iter().map(|g| -g));
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut m = h.clone();
        if ridge > 0.0 {
            for i in 0..p {
                m[(i, i)] += ridge;
            }
        }
        if let Some(chol) = m.cholesky() {
            return Ok(chol.solve(&rhs).iter().copied().collect());
        }
        ridge = if ridge == 0.0 { 1e-10 } else { ridge * 100.0 };
    }
    Err(Error::Training("Hessian is not positive definite".into()))
}

/// Minimizes the penalized class-weighted objective.
pub fn fit_logistic(design: &Design, labels: &[bool], cfg: &FitConfig) -> Result<LogisticFit> {
    let obj = Objective::new(design, labels, cfg.lambda)?;
    let p = obj.n_params();
    let mut theta = vec![0.0; p];
    let mut state = obj.accumulate(&theta, true);
    let scale = norm(&state.grad).max(1.0);
    let mut iterations = 0;
    loop {
        let gnorm = norm(&state.grad);
        if gnorm <= cfg.tol * scale {
            return Ok(LogisticFit {
                beta0: theta[0],
                beta: theta[1..].to_vec(),
                iterations,
                grad_norm: gnorm,
                class_weights: obj.class_weights(),
            });
        }
        if iterations >= cfg.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: gnorm,
            });
        }
        iterations += 1;
        let dir = newton_direction(state.hess.take().expect("hessian requested"), &state.grad)?;
        let slope: f64 = dir.iter().zip(&state.grad).map(|(d, g)| d * g).sum();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let v = obj.value(&cand);
            if v.is_finite() && v <= state.value + 1e-4 * step * slope {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some(cand) => theta = cand,
            None => {
                // no further decrease representable in floating point
                let gnorm = norm(&state.grad);
                return Err(Error::NonConvergence {
                    iterations,
                    grad_norm: gnorm,
                });
            }
        }
        state = obj.accumulate(&theta, true);
    }
}

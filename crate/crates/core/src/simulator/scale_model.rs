//! Runtime as a function of data scale and cluster size:
//! `rt = θ1·scale/machines + θ2·ln(machines) + θ3·machines + θ4`, all θ ≥ 0.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScaleModelError {
    #[error("need at least 4 observations, got {0}")]
    TooFewObservations(usize),
    #[error("invalid observation {index}: {reason}")]
    InvalidObservation { index: usize, reason: String },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub scale: f64,
    pub machines: f64,
    pub rt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleModel {
    pub theta: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFit {
    pub model: ScaleModel,
    /// Euclidean norm of the training residuals.
    pub residual_norm: f64,
    pub observations: usize,
}

fn features(scale: f64, machines: f64) -> [f64; 4] {
    [scale / machines, machines.ln(), machines, 1.0]
}

pub fn predict_rt(m: &ScaleModel, scale: f64, machines: f64) -> f64 {
    features(scale, machines)
        .iter()
        .zip(&m.theta)
        .map(|(x, t)| x * t)
        .sum()
}

/// Non-negative least-squares fit of the scale model.
pub fn fit_scale_model(obs: &[Observation]) -> Result<ScaleFit, ScaleModelError> {
    if obs.len() < 4 {
        return Err(ScaleModelError::TooFewObservations(obs.len()));
    }
    for (index, o) in obs.iter().enumerate() {
        let reason = if !(o.machines >= 1.0) {
            Some(format!("machines must be ≥ 1 (got {})", o.machines))
        } else if !(o.scale > 0.0) {
            Some(format!("scale must be > 0 (got {})", o.scale))
        } else if !o.rt.is_finite() || o.rt < 0.0 {
            Some(format!("rt must be finite and ≥ 0 (got {})", o.rt))
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(ScaleModelError::InvalidObservation { index, reason });
        }
    }
    let mut machine_counts: Vec<f64> = obs.iter().map(|o| o.machines).collect();
    machine_counts.sort_by(f64::total_cmp);
    machine_counts.dedup();
    if machine_counts.len() < 2 {
        return Err(ScaleModelError::DegenerateFit(format!(
            "all observations use {} machine(s); ln(machines), machines and the constant are indistinguishable",
            machine_counts[0]
        )));
    }

    let a = DMatrix::from_fn(obs.len(), 4, |i, j| {
        features(obs[i].scale, obs[i].machines)[j]
    });
    let b = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.rt));

    // rank check on unit-norm columns so the feature magnitudes do not matter
    let mut scaled = a.clone();
    for mut col in scaled.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    let sv = scaled.singular_values();
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > smax * 1e-10).count();
    if rank < 4 {
        return Err(ScaleModelError::DegenerateFit(format!(
            "design matrix has rank {rank} < 4 over {} distinct machine count(s); \
             at least 3 machine counts and a varying scale/machine ratio are needed",
            machine_counts.len()
        )));
    }

    let theta = nnls(&a, &b);
    let residual_norm = (&a * &theta - &b).norm();
    Ok(ScaleFit {
        model: ScaleModel {
            theta: [theta[0], theta[1], theta[2], theta[3]],
        },
        residual_norm,
        observations: obs.len(),
    })
}

/// Unconstrained least squares restricted to the columns in `passive`.
fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(passive);
    let svd = sub.svd(true, true);
    let z = svd.solve(b, 1e-14).expect("svd computed with u and v");
    let mut out = DVector::zeros(a.ncols());
    for (k, &j) in passive.iter().enumerate() {
        out[j] = z[k];
    }
    out
}

/// Lawson-Hanson active-set solver for `min ||A x - b||` subject to `x ≥ 0`.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive: Vec<usize> = Vec::new();
    let tol = 1e-12 * a.norm() * b.norm().max(1.0);

    for _ in 0..(30 * n) {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|j| !passive.contains(j))
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate.filter(|&t| w[t] > tol) else {
            break;
        };
        passive.push(t);

        loop {
            let z = solve_passive(a, b, &passive);
            if passive.iter().all(|&j| z[j] > 0.0) {
                x = z;
                break;
            }
            // step back toward the previous feasible point until a coefficient hits zero
            let alpha = passive
                .iter()
                .filter(|&&j| z[j] <= 0.0)
                .map(|&j| x[j] / (x[j] - z[j]))
                .fold(f64::INFINITY, f64::min);
            x += (z - &x) * alpha;
            passive.retain(|&j| x[j] > 0.0);
            for j in 0..n {
                if !passive.contains(&j) {
                    x[j] = 0.0;
                }
            }
            if passive.is_empty() {
                break;
            }
        }
    }
    x
}

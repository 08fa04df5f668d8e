//! Full degree-2 polynomial regression, the passive polynomial baseline's
//! level model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq_qr, Cholesky, SquareMatrix};

/// Basis terms in order: constant, linears, pairwise products (i < j), squares.
pub fn quadratic_basis(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut out = Vec::with_capacity(basis_len(n));
    out.push(1.0);
    out.extend_from_slice(f);
    for i in 0..n {
        for j in i + 1..n {
            out.push(f[i] * f[j]);
        }
    }
    out.extend(f.iter().map(|v| v * v));
    out
}

pub fn basis_len(dim: usize) -> usize {
    1 + dim + dim * (dim - 1) / 2 + dim
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyModel {
    dim: usize,
    coeffs: Vec<f64>,
    /// Ridge weight used when the design was rank deficient, zero otherwise.
    ridge: f64,
}

impl PolyModel {
    /// Least-squares fit; falls back to a ridge-stabilized solve (with a
    /// warning) when the design is rank deficient.
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64]) -> Result<PolyModel> {
        let m = Self::fit_quiet(inputs, targets)?;
        if m.ridge > 0.0 {
            log::warn!(
                "rank-deficient polynomial design ({} points, {} terms); ridge {:.2e}",
                inputs.len(),
                basis_len(m.dim),
                m.ridge
            );
        }
        Ok(m)
    }

    pub(crate) fn fit_quiet(inputs: &[Vec<f64>], targets: &[f64]) -> Result<PolyModel> {
        if inputs.is_empty() {
            return Err(Error::Precondition("polynomial fit needs at least one point".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::dim(inputs.len(), targets.len()));
        }
        let dim = inputs[0].len();
        if let Some(bad) = inputs.iter().find(|x| x.len() != dim) {
            return Err(Error::dim(dim, bad.len()));
        }
        if inputs.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
            return Err(Error::Domain("polynomial training data must be finite".into()));
        }
        let design: Vec<Vec<f64>> = inputs.iter().map(|x| quadratic_basis(x)).collect();
        if let Some(coeffs) = lstsq_qr(&design, targets) {
            return Ok(PolyModel { dim, coeffs, ridge: 0.0 });
        }
        // Rank deficient: ridge-stabilized normal equations.
        let p = basis_len(dim);
        let mut ata = SquareMatrix::from_fn(p, |i, j| design.iter().map(|r| r[i] * r[j]).sum());
        let atb: Vec<f64> = (0..p).map(|i| design.iter().zip(targets).map(|(r, t)| r[i] * t).sum()).collect();
        let trace: f64 = (0..p).map(|i| ata[(i, i)]).sum();
        let ridge = 1e-8 * (trace / p as f64).max(1e-12);
        for i in 0..p {
            ata[(i, i)] += ridge;
        }
        let coeffs = Cholesky::new(&ata)?.solve(&atb);
        Ok(PolyModel { dim, coeffs, ridge })
    }

    pub fn input_dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn predict(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.dim {
            return Err(Error::dim(self.dim, f.len()));
        }
        Ok(self.predict_unchecked(f))
    }

    pub(crate) fn predict_unchecked(&self, f: &[f64]) -> f64 {
        quadratic_basis(f).iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }

    /// Leave-one-out residuals by refitting without each point.
    pub fn loo_residuals(inputs: &[Vec<f64>], targets: &[f64]) -> Result<Vec<f64>> {
        if inputs.len() < 2 {
            return Ok(vec![0.0; inputs.len()]);
        }
        (0..inputs.len())
            .map(|i| {
                let xs: Vec<Vec<f64>> =
                    inputs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x.clone()).collect();
                let ts: Vec<f64> = targets.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, t)| *t).collect();
                let m = Self::fit_quiet(&xs, &ts)?;
                m.predict(&inputs[i]).map(|p| targets[i] - p)
            })
            .collect()
    }
}

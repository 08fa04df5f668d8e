//! Zero-mean, noise-free Gaussian process regression with a squared
//! exponential kernel `theta1 * exp(-theta2 / 2 * |p - q|^2)`.
//!
//! The kernel matrix is factorized once at fit time. A small diagonal jitter
//! keeps the factorization alive when training inputs repeat; it starts at
//! `1e-10 * theta1` and is escalated by decades up to `1e-4 * theta1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, Cholesky, SquareMatrix};

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_CEILING: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GprHyperParams {
    pub theta1: f64,
    pub theta2: f64,
    /// Initial diagonal regularizer.
    pub jitter: f64,
}

impl GprHyperParams {
    pub fn new(theta1: f64, theta2: f64) -> Result<Self> {
        Self::with_jitter(theta1, theta2, JITTER_START * theta1)
    }

    pub fn with_jitter(theta1: f64, theta2: f64, jitter: f64) -> Result<Self> {
        let h = GprHyperParams { theta1, theta2, jitter };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta1 > 0.0 && self.theta1.is_finite()) {
            return Err(Error::Domain(format!("theta1 must be positive, got {}", self.theta1)));
        }
        if !(self.theta2 > 0.0 && self.theta2.is_finite()) {
            return Err(Error::Domain(format!("theta2 must be positive, got {}", self.theta2)));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Domain(format!("jitter must be non-negative, got {}", self.jitter)));
        }
        Ok(())
    }
}

/// Squared exponential covariance between `p` and `q`.
pub fn kernel(h: &GprHyperParams, p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim(p.len(), q.len()));
    }
    Ok(kernel_unchecked(h, p, q))
}

#[inline]
fn kernel_unchecked(h: &GprHyperParams, p: &[f64], q: &[f64]) -> f64 {
    let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
    h.theta1 * (-0.5 * h.theta2 * d2).exp()
}

/// `1 / median pairwise squared distance`, or `None` when fewer than two
/// distinct inputs exist.
pub fn median_inverse_sq_distance(inputs: &[Vec<f64>]) -> Option<f64> {
    let mut d2: Vec<f64> = Vec::new();
    for i in 0..inputs.len() {
        for j in i + 1..inputs.len() {
            let v: f64 = inputs[i].iter().zip(&inputs[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.push(v);
        }
    }
    if d2.is_empty() {
        return None;
    }
    d2.sort_by(f64::total_cmp);
    let n = d2.len();
    let med = if n % 2 == 1 { d2[n / 2] } else { 0.5 * (d2[n / 2 - 1] + d2[n / 2]) };
    (med > 0.0 && med.is_finite()).then(|| 1.0 / med)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GprDoc", into = "GprDoc")]
pub struct GprModel {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    hyper: GprHyperParams,
    jitter_used: f64,
    chol: Cholesky,
    alpha: Vec<f64>,
}

/// Stored form: the data and the jitter that factorized; the factor is
/// rebuilt on load.
#[derive(Serialize, Deserialize)]
struct GprDoc {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    hyper: GprHyperParams,
    jitter_used: f64,
}

impl TryFrom<GprDoc> for GprModel {
    type Error = Error;
    fn try_from(doc: GprDoc) -> Result<GprModel> {
        let start = GprHyperParams { jitter: doc.jitter_used, ..doc.hyper };
        let mut m = GprModel::fit(doc.inputs, doc.targets, start)?;
        if m.jitter_used != doc.jitter_used {
            return Err(Error::Corrupt(format!(
                "stored kernel matrix no longer factorizes at jitter {:e}",
                doc.jitter_used
            )));
        }
        m.hyper = doc.hyper;
        Ok(m)
    }
}

impl From<GprModel> for GprDoc {
    fn from(m: GprModel) -> GprDoc {
        GprDoc { inputs: m.inputs, targets: m.targets, hyper: m.hyper, jitter_used: m.jitter_used }
    }
}

impl GprModel {
    pub fn fit(inputs: Vec<Vec<f64>>, targets: Vec<f64>, hyper: GprHyperParams) -> Result<GprModel> {
        hyper.validate()?;
        if inputs.is_empty() {
            return Err(Error::Precondition("GPR needs at least one training point".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::dim(inputs.len(), targets.len()));
        }
        let dim = inputs[0].len();
        if let Some(bad) = inputs.iter().find(|x| x.len() != dim) {
            return Err(Error::dim(dim, bad.len()));
        }
        if inputs.iter().flatten().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::Domain("GPR training data must be finite".into()));
        }
        let n = inputs.len();
        let k = SquareMatrix::from_fn(n, |i, j| kernel_unchecked(&hyper, &inputs[i], &inputs[j]));
        let ceiling = (JITTER_CEILING * hyper.theta1).max(hyper.jitter);
        let mut jitter = hyper.jitter;
        loop {
            let mut kj = k.clone();
            for i in 0..n {
                kj[(i, i)] += jitter;
            }
            match Cholesky::new(&kj) {
                Ok(chol) => {
                    let alpha = chol.solve(&targets);
                    return Ok(GprModel { inputs, targets, hyper, jitter_used: jitter, chol, alpha });
                }
                Err(_) if jitter < ceiling => {
                    jitter = if jitter == 0.0 { JITTER_START * hyper.theta1 } else { (jitter * 10.0).min(ceiling) };
                }
                Err(_) => return Err(Error::Conditioning { condition: condition_number(&kj) }),
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn hyper(&self) -> &GprHyperParams {
        &self.hyper
    }

    /// Diagonal regularizer actually used by the factorization.
    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// Dual weights `K⁻¹ t`.
    pub fn weights(&self) -> &[f64] {
        &self.alpha
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// Predictive mean and (non-negative) variance at `f`.
    pub fn predict(&self, f: &[f64]) -> Result<(f64, f64)> {
        if f.len() != self.input_dim() {
            return Err(Error::dim(self.input_dim(), f.len()));
        }
        Ok(self.predict_unchecked(f))
    }

    pub(crate) fn predict_unchecked(&self, f: &[f64]) -> (f64, f64) {
        let kv: Vec<f64> = self.inputs.iter().map(|x| kernel_unchecked(&self.hyper, f, x)).collect();
        let mean = kv.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = self.chol.solve_lower(&kv);
        let var = self.hyper.theta1 - v.iter().map(|x| x * x).sum::<f64>();
        (mean, var.max(0.0))
    }

    pub(crate) fn mean_unchecked(&self, f: &[f64]) -> f64 {
        self.inputs.iter().zip(&self.alpha).map(|(x, a)| kernel_unchecked(&self.hyper, f, x) * a).sum()
    }

    /// Leave-one-out residuals `alpha_i / (K^-1)_ii`.
    pub fn loo_residuals(&self) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                let y = self.chol.solve_lower(&e);
                self.alpha[i] / y.iter().map(|v| v * v).sum::<f64>()
            })
            .collect()
    }
}

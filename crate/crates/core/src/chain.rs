//! The chained front model: a constant lower bound on `f1` followed by one
//! regression per further metric, each conditioned on the metrics before it.
//!
//! Membership walks the chain and stops at the first violated level;
//! generation samples the chain coordinate by coordinate.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr::GprModel;
use crate::nbi::FMatrix;
use crate::pareto::{MetricSet, MetricVector};
use crate::poly::PolyModel;

pub const MODEL_FORMAT: &str = "pfchain-model";
pub const MODEL_VERSION: u32 = 1;
/// Prefix resamples allowed per generated point.
pub const RESAMPLE_RETRIES: usize = 20;
/// Floor of the final-level equality band.
pub const MIN_EQ_TOL: f64 = 1e-3;

/// Regression for one level, in shifted metric coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LevelModel {
    Gpr(GprModel),
    Poly(PolyModel),
}

impl LevelModel {
    pub fn input_dim(&self) -> usize {
        match self {
            LevelModel::Gpr(g) => g.input_dim(),
            LevelModel::Poly(p) => p.input_dim(),
        }
    }

    fn mean(&self, f: &[f64]) -> f64 {
        match self {
            LevelModel::Gpr(g) => g.mean_unchecked(f),
            LevelModel::Poly(p) => p.predict_unchecked(f),
        }
    }

    fn variance(&self, f: &[f64]) -> f64 {
        match self {
            LevelModel::Gpr(g) => g.predict_unchecked(f).1,
            LevelModel::Poly(_) => 0.0,
        }
    }
}

/// `max(1e-3, 2 * rms(residuals))`.
pub fn default_eq_tol(residuals: &[f64]) -> f64 {
    if residuals.is_empty() {
        return MIN_EQ_TOL;
    }
    let ms = residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64;
    let tol = 2.0 * ms.sqrt();
    if tol.is_finite() {
        tol.max(MIN_EQ_TOL)
    } else {
        MIN_EQ_TOL
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Membership {
    pub on_front: bool,
    /// First violated level (1-based) when rejected.
    pub reject_level: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainedPfModel {
    problem: String,
    l1: f64,
    f_min: MetricVector,
    f_max: MetricVector,
    f_matrix: FMatrix,
    levels: Vec<LevelModel>,
    eq_tol: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: ChainedPfModel,
}

impl ChainedPfModel {
    /// `levels[j]` models metric `j + 2` from the first `j + 1` metrics.
    pub fn new(problem: impl Into<String>, f_matrix: FMatrix, levels: Vec<LevelModel>, eq_tol: f64) -> Result<Self> {
        let model = ChainedPfModel {
            problem: problem.into(),
            l1: f_matrix.f_min()[0],
            f_min: f_matrix.f_min().clone(),
            f_max: f_matrix.f_max().clone(),
            f_matrix,
            levels,
            eq_tol,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let m = self.f_min.len();
        if m < 2 || self.f_max.len() != m || self.f_matrix.m() != m {
            return Err(Error::Corrupt(format!("inconsistent metric dimension {m}")));
        }
        if self.f_matrix.f_min() != &self.f_min || self.f_matrix.f_max() != &self.f_max {
            return Err(Error::Corrupt("F matrix bounds disagree with the model bounds".into()));
        }
        if self.levels.len() != m - 1 {
            return Err(Error::Corrupt(format!("{} level models for {m} metrics", self.levels.len())));
        }
        if let Some(j) = (0..m - 1).find(|&j| self.levels[j].input_dim() != j + 1) {
            return Err(Error::Corrupt(format!("level {} model takes {} inputs", j + 2, self.levels[j].input_dim())));
        }
        if self.l1 != self.f_min[0] || self.l1 > self.f_max[0] {
            return Err(Error::Corrupt(format!("L1 = {} is not f_min[1] within [.., {}]", self.l1, self.f_max[0])));
        }
        if !(self.eq_tol > 0.0 && self.eq_tol.is_finite()) {
            return Err(Error::Corrupt(format!("equality tolerance {} must be positive", self.eq_tol)));
        }
        Ok(())
    }

    pub fn problem(&self) -> &str {
        &self.problem
    }

    pub fn m(&self) -> usize {
        self.f_min.len()
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn f_min(&self) -> &MetricVector {
        &self.f_min
    }

    pub fn f_max(&self) -> &MetricVector {
        &self.f_max
    }

    pub fn f_matrix(&self) -> &FMatrix {
        &self.f_matrix
    }

    pub fn levels(&self) -> &[LevelModel] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &LevelModel {
        &self.levels[k - 2]
    }

    pub fn eq_tol(&self) -> f64 {
        self.eq_tol
    }

    pub fn set_eq_tol(&mut self, eq_tol: f64) -> Result<()> {
        if !(eq_tol > 0.0 && eq_tol.is_finite()) {
            return Err(Error::Domain(format!("equality tolerance must be positive, got {eq_tol}")));
        }
        self.eq_tol = eq_tol;
        Ok(())
    }

    fn shifted_prefix(&self, prefix: &[f64]) -> Vec<f64> {
        prefix.iter().zip(self.f_min.as_slice()).map(|(a, b)| a - b).collect()
    }

    fn check_prefix(&self, k: usize, prefix: &[f64]) -> Result<()> {
        if k < 2 || k > self.m() {
            return Err(Error::IndexRange { index: k, max: self.m() });
        }
        if prefix.len() != k - 1 {
            return Err(Error::dim(k - 1, prefix.len()));
        }
        Ok(())
    }

    /// Mean of level `k` (unshifted) at the first `k - 1` metrics.
    pub fn level_mean(&self, k: usize, prefix: &[f64]) -> Result<f64> {
        self.check_prefix(k, prefix)?;
        Ok(self.mean_unchecked(k, prefix))
    }

    /// Predictive variance of level `k`; zero for polynomial levels.
    pub fn level_variance(&self, k: usize, prefix: &[f64]) -> Result<f64> {
        self.check_prefix(k, prefix)?;
        Ok(self.level(k).variance(&self.shifted_prefix(prefix)))
    }

    pub(crate) fn mean_unchecked(&self, k: usize, prefix: &[f64]) -> f64 {
        self.level(k).mean(&self.shifted_prefix(prefix)) + self.f_min[k - 1]
    }

    pub(crate) fn variance_unchecked(&self, k: usize, prefix: &[f64]) -> f64 {
        self.level(k).variance(&self.shifted_prefix(prefix))
    }

    pub fn check_membership(&self, f: &[f64]) -> Result<Membership> {
        let m = self.m();
        if f.len() != m {
            return Err(Error::dim(m, f.len()));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("metric vector must be finite".into()));
        }
        let reject = |level| Ok(Membership { on_front: false, reject_level: Some(level) });
        if f[0] < self.l1 || f[0] > self.f_max[0] {
            return reject(1);
        }
        for k in 2..=m {
            let mu = self.mean_unchecked(k, &f[..k - 1]);
            let ok = if k < m {
                mu <= f[k - 1] && f[k - 1] <= self.f_max[k - 1]
            } else {
                (mu - f[k - 1]).abs() <= self.eq_tol && f[k - 1] <= self.f_max[k - 1]
            };
            if !ok {
                return reject(k);
            }
        }
        Ok(Membership { on_front: true, reject_level: None })
    }

    /// Draws one point through the chain, or the level whose interval was
    /// empty.
    fn draw(&self, rng: &mut impl Rng) -> std::result::Result<Vec<f64>, usize> {
        let m = self.m();
        let mut f = Vec::with_capacity(m);
        f.push(uniform(rng, self.l1, self.f_max[0]));
        for k in 2..m {
            let mu = self.mean_unchecked(k, &f);
            if !(mu <= self.f_max[k - 1]) {
                return Err(k);
            }
            f.push(uniform(rng, mu, self.f_max[k - 1]));
        }
        let last = self.mean_unchecked(m, &f);
        if !(last <= self.f_max[m - 1]) {
            return Err(m);
        }
        f.push(last);
        Ok(f)
    }

    /// `n` distinct points that pass [`Self::check_membership`] by construction.
    pub fn generate(&self, n: usize, seed: u64) -> Result<MetricSet> {
        if n == 0 {
            return Err(Error::Precondition("generate needs n >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = MetricSet::new();
        let mut duplicates = 0usize;
        while out.len() < n {
            let mut failed_at = 0;
            let mut point = None;
            for _ in 0..=RESAMPLE_RETRIES {
                match self.draw(&mut rng) {
                    Ok(f) => {
                        point = Some(f);
                        break;
                    }
                    Err(level) => failed_at = level,
                }
            }
            let Some(f) = point else {
                return Err(Error::ModelInconsistency {
                    level: failed_at,
                    detail: format!("mean above f_max after {RESAMPLE_RETRIES} prefix resamples"),
                });
            };
            if !out.insert(MetricVector::new(f)?)? {
                duplicates += 1;
                if duplicates > n {
                    return Err(Error::ModelInconsistency {
                        level: 1,
                        detail: "generator keeps repeating points".into(),
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile { format: MODEL_FORMAT.into(), version: MODEL_VERSION, model: self.clone() };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Corrupt(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Corrupt(e.to_string()))?;
        if value.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
            return Err(Error::Corrupt("not a pfchain model file".into()));
        }
        let version =
            value.get("version").and_then(|v| v.as_u64()).ok_or_else(|| Error::Corrupt("missing version".into()))?;
        if version != MODEL_VERSION as u64 {
            return Err(Error::Version { found: version.min(u32::MAX as u64) as u32, expected: MODEL_VERSION });
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
        file.model.validate()?;
        Ok(file.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    (lo + rng.gen::<f64>() * (hi - lo)).clamp(lo, hi)
}

//! Training drivers: chain initialization from random-weight front solves,
//! the max-variance active loop, and the two passive baselines.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{default_eq_tol, ChainedPfModel, LevelModel};
use crate::error::{Error, Result};
use crate::gpr::{median_inverse_sq_distance, GprHyperParams, GprModel, JITTER_START};
use crate::nbi::{
    acquire_pf_point_with_starts, build_f_matrix, random_simplex, solve_anchors, solve_nbi_with_starts, Branch, FMatrix,
};
use crate::pareto::MetricVector;
use crate::poly::PolyModel;
use crate::solver::SolverConfig;
use crate::testbench::{DesignVector, Problem};

/// Weight redraws allowed for one initial sample whose solve is infeasible.
pub const WEIGHT_REDRAWS: usize = 20;

/// Stream offset separating query draws from weight draws.
const QUERY_STREAM: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    /// Active GPR chain.
    PAgpr,
    /// Passive GPR chain.
    PPgpr,
    /// Passive quadratic-polynomial chain.
    PPpr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::PAgpr, Method::PPgpr, Method::PPpr];

    pub fn is_active(self) -> bool {
        self == Method::PAgpr
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Method::PAgpr => "p_agpr",
            Method::PPgpr => "p_pgpr",
            Method::PPpr => "p_ppr",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "p_agpr" | "agpr" => Ok(Method::PAgpr),
            "p_pgpr" | "pgpr" => Ok(Method::PPgpr),
            "p_ppr" | "ppr" => Ok(Method::PPpr),
            _ => Err(Error::Config(format!("unknown method `{s}` (known: p_agpr, p_pgpr, p_ppr)"))),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Method> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GprConfig {
    pub theta1: f64,
    /// Fixed inverse squared length scale; the median heuristic when absent.
    pub theta2: Option<f64>,
    /// Number of leading samples per level the median heuristic looks at;
    /// defaults to the active initial sample count so every method shares it.
    pub theta_window: Option<usize>,
    /// Initial jitter relative to `theta1`.
    pub jitter: f64,
}

impl Default for GprConfig {
    fn default() -> Self {
        GprConfig { theta1: 1.0, theta2: None, theta_window: None, jitter: JITTER_START }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryConfig {
    pub candidates: usize,
    pub sweeps: usize,
}

impl Default for QueryConfig {
    fn default() -> Self {
        QueryConfig { candidates: 2000, sweeps: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_max: usize,
    pub n0: Option<usize>,
    pub seed: u64,
    pub method: Method,
    /// Final-level equality band; derived from leave-one-out residuals when absent.
    pub eq_tol: Option<f64>,
    pub solver: SolverConfig,
    pub gpr: GprConfig,
    pub query: QueryConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_max: 10,
            n0: None,
            seed: 0,
            method: Method::PAgpr,
            eq_tol: None,
            solver: SolverConfig::default(),
            gpr: GprConfig::default(),
            query: QueryConfig::default(),
        }
    }
}

/// `min(max(3, ceil(n_max / 2)), n_max - 1)`.
pub fn default_n0(n_max: usize) -> usize {
    3.max(n_max.div_ceil(2)).min(n_max.saturating_sub(1))
}

impl TrainConfig {
    pub fn new(method: Method, n_max: usize, seed: u64) -> Self {
        TrainConfig { method, n_max, seed, ..Default::default() }
    }

    /// Samples acquired by random weights before any querying.
    pub fn initial_samples(&self) -> usize {
        if self.method.is_active() {
            self.n0.unwrap_or_else(|| default_n0(self.n_max))
        } else {
            self.n_max
        }
    }

    pub fn theta_window(&self) -> usize {
        self.gpr.theta_window.unwrap_or_else(|| self.n0.unwrap_or_else(|| default_n0(self.n_max)).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if self.method.is_active() {
            let n0 = self.initial_samples();
            if n0 == 0 || n0 >= self.n_max {
                return Err(Error::Config(format!(
                    "active training needs 1 <= n0 < n_max, got n0 = {n0}, n_max = {}",
                    self.n_max
                )));
            }
        }
        if let Some(t) = self.eq_tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("eq_tol must be positive, got {t}")));
            }
        }
        if self.query.candidates == 0 {
            return Err(Error::Config("query.candidates must be positive".into()));
        }
        GprHyperParams::with_jitter(self.gpr.theta1, self.gpr.theta2.unwrap_or(1.0), self.gpr.jitter * self.gpr.theta1)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// Wall-clock split of one training run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Anchor and front-point solves.
    pub acquisition: f64,
    /// Max-variance query searches (active only).
    pub query_overhead: f64,
    /// Regression fits.
    pub fitting: f64,
}

impl Timing {
    pub fn total(&self) -> f64 {
        self.acquisition + self.query_overhead + self.fitting
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Designs acquired earlier at the same level, nearest to the target first,
/// that seed each new solve.
const NEAREST_STARTS: usize = 3;

/// Training pairs for one level in shifted coordinates, with their designs.
#[derive(Clone, Debug, Default)]
struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    designs: Vec<DesignVector>,
}

impl Dataset {
    fn push(&mut self, shifted: &[f64], design: DesignVector) {
        let k = shifted.len();
        self.inputs.push(shifted[..k - 1].to_vec());
        self.targets.push(shifted[k - 1]);
        self.designs.push(design);
    }

    /// Anchor designs followed by the stored designs closest to `target` (shifted).
    fn starts(&self, anchors: &[DesignVector], target: &[f64]) -> Vec<DesignVector> {
        let k = target.len();
        let mut order: Vec<(f64, usize)> = (0..self.len())
            .map(|i| {
                let d2 = (0..k - 1).map(|j| (self.inputs[i][j] - target[j]).powi(2)).sum::<f64>()
                    + (self.targets[i] - target[k - 1]).powi(2);
                (d2, i)
            })
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut out = anchors.to_vec();
        out.extend(order.iter().take(NEAREST_STARTS).map(|&(_, i)| self.designs[i].clone()));
        out
    }

    fn len(&self) -> usize {
        self.targets.len()
    }
}

#[derive(Clone, Debug)]
pub struct TraceRow {
    pub level: usize,
    pub iter: usize,
    pub branch: Branch,
    pub sigma2: f64,
    pub residual: f64,
    pub iterations: usize,
    pub f_query: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TraceLog {
    pub m: usize,
    pub rows: Vec<TraceRow>,
}

impl TraceLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV with header `level,iter,branch,sigma2,residual,f_query1..,iterations`;
    /// query columns beyond a row's level are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let width = self.m.saturating_sub(1);
        let mut header: Vec<String> = ["level", "iter", "branch", "sigma2", "residual"].map(String::from).to_vec();
        header.extend((1..=width).map(|i| format!("f_query{i}")));
        header.push("iterations".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.level.to_string(),
                r.iter.to_string(),
                r.branch.to_string(),
                r.sigma2.to_string(),
                r.residual.to_string(),
            ];
            rec.extend((0..width).map(|i| r.f_query.get(i).map_or(String::new(), f64::to_string)));
            rec.push(r.iterations.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct QueryPoint {
    pub f_query: Vec<f64>,
    pub sigma2: f64,
    pub f_around: Vec<f64>,
}

/// Everything a training run produces.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: ChainedPfModel,
    pub trace: TraceLog,
    pub timing: Timing,
    /// Acquired front points per level (`training_sets[j]` has length-`j + 2` points), unshifted.
    pub training_sets: Vec<Vec<MetricVector>>,
    /// Inverse squared length scale used at each level.
    pub theta2: Vec<f64>,
}

/// A failed run with whatever was built before the failure.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub partial: Option<Box<TrainOutput>>,
}

impl From<TrainFailure> for Error {
    fn from(f: TrainFailure) -> Error {
        f.error
    }
}

impl From<Error> for TrainFailure {
    fn from(error: Error) -> TrainFailure {
        TrainFailure { error, partial: None }
    }
}

struct Initial {
    f_matrix: FMatrix,
    /// Anchor designs, reused as extra solver starts.
    anchors: Vec<DesignVector>,
    data: Vec<Dataset>,
    timing: Timing,
}

fn level_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Anchors, F, and `n` random-weight diagonal solves per level. Each level
/// draws weights from its own stream so the first draws do not depend on `n`.
fn acquire_initial(p: &Problem, cfg: &TrainConfig, n: usize) -> Result<Initial> {
    let mut timing = Timing::default();
    let t = Instant::now();
    let (f_min, anchor_solutions) = solve_anchors(p, &cfg.solver)?;
    let anchors: Vec<DesignVector> = anchor_solutions.into_iter().map(|a| a.x_opt).collect();
    let f_matrix = build_f_matrix(&f_min, p.f_max())?;
    let mut data = Vec::with_capacity(p.m() - 1);
    for k in 2..=p.m() {
        let mut rng = level_rng(cfg.seed, k as u64);
        let dir = f_matrix.diagonal_direction(k);
        let mut ds = Dataset::default();
        for i in 0..n {
            let mut attempt = 0;
            let sol = loop {
                let s = random_simplex(&mut rng, k);
                let starts = ds.starts(&anchors, &f_matrix.leading(k).mul_vec(&s));
                let sol = solve_nbi_with_starts(p, &f_matrix, k, &s, &dir, &cfg.solver, &starts)?;
                if sol.status.accepted() {
                    break sol;
                }
                attempt += 1;
                log::debug!(
                    "level {k} sample {}: weights {s:?} {} (residual {:.2e}), redrawing",
                    i + 1,
                    sol.status,
                    sol.residual
                );
                if attempt > WEIGHT_REDRAWS {
                    return Err(Error::Acquisition {
                        level: k,
                        detail: format!("initial sample {} infeasible after {WEIGHT_REDRAWS} weight redraws", i + 1),
                    });
                }
            };
            ds.push(&f_matrix.shift(sol.f_opt.as_slice()), sol.x_opt);
        }
        data.push(ds);
    }
    timing.acquisition = secs(t.elapsed());
    Ok(Initial { f_matrix, anchors, data, timing })
}

fn hyper_for(cfg: &TrainConfig, ds: &Dataset) -> Result<GprHyperParams> {
    let theta2 = match cfg.gpr.theta2 {
        Some(t) => t,
        None => {
            let w = cfg.theta_window().min(ds.len());
            median_inverse_sq_distance(&ds.inputs[..w]).unwrap_or(1.0)
        }
    };
    GprHyperParams::with_jitter(cfg.gpr.theta1, theta2, cfg.gpr.jitter * cfg.gpr.theta1)
}

fn fit_level(method: Method, ds: &Dataset, hyper: &GprHyperParams) -> Result<LevelModel> {
    Ok(match method {
        Method::PPpr => LevelModel::Poly(PolyModel::fit(&ds.inputs, &ds.targets)?),
        _ => LevelModel::Gpr(GprModel::fit(ds.inputs.clone(), ds.targets.clone(), *hyper)?),
    })
}

fn eq_tol_for(cfg: &TrainConfig, last: &LevelModel, ds: &Dataset) -> Result<f64> {
    if let Some(t) = cfg.eq_tol {
        return Ok(t);
    }
    let residuals = match last {
        LevelModel::Gpr(g) => g.loo_residuals(),
        LevelModel::Poly(_) => PolyModel::loo_residuals(&ds.inputs, &ds.targets)?,
    };
    let interior = interior_points(&ds.inputs);
    if interior.len() >= 2 {
        let kept: Vec<f64> = interior.iter().map(|&i| residuals[i]).collect();
        return Ok(default_eq_tol(&kept));
    }
    Ok(default_eq_tol(&residuals))
}

/// Indices of inputs holding no per-coordinate minimum or maximum; leaving
/// such an extreme point out turns interpolation into extrapolation.
fn interior_points(inputs: &[Vec<f64>]) -> Vec<usize> {
    let Some(first) = inputs.first() else { return Vec::new() };
    let dim = first.len();
    let lo: Vec<f64> = (0..dim).map(|j| inputs.iter().map(|x| x[j]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..dim).map(|j| inputs.iter().map(|x| x[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    (0..inputs.len()).filter(|&i| (0..dim).all(|j| inputs[i][j] > lo[j] && inputs[i][j] < hi[j])).collect()
}

fn assemble(
    p: &Problem,
    cfg: &TrainConfig,
    init: &Initial,
    method: Method,
) -> Result<(ChainedPfModel, Vec<GprHyperParams>, f64)> {
    let t = Instant::now();
    let hypers = init.data.iter().map(|ds| hyper_for(cfg, ds)).collect::<Result<Vec<_>>>()?;
    let levels = init.data.iter().zip(&hypers).map(|(ds, h)| fit_level(method, ds, h)).collect::<Result<Vec<_>>>()?;
    let last = init.data.last().expect("m >= 2");
    let eq_tol = eq_tol_for(cfg, levels.last().expect("m >= 2"), last)?;
    let model = ChainedPfModel::new(p.name(), init.f_matrix.clone(), levels, eq_tol)?;
    Ok((model, hypers, secs(t.elapsed())))
}

fn check_problem(p: &Problem) -> Result<()> {
    if p.m() < 2 {
        return Err(Error::Precondition(format!("{} has a single metric; nothing to chain", p.name())));
    }
    Ok(())
}

fn training_sets(f: &FMatrix, data: &[Dataset]) -> Vec<Vec<MetricVector>> {
    data.iter()
        .map(|ds| {
            ds.inputs
                .iter()
                .zip(&ds.targets)
                .map(|(x, t)| {
                    let mut v = x.clone();
                    v.push(*t);
                    MetricVector::new(f.unshift(&v)).expect("finite training point")
                })
                .collect()
        })
        .collect()
}

/// Chain built from random-weight solves only: `n0` per level for the active
/// method, `n_max` for the passive ones.
pub fn initialize(p: &Problem, cfg: &TrainConfig) -> Result<ChainedPfModel> {
    cfg.validate()?;
    check_problem(p)?;
    let init = acquire_initial(p, cfg, cfg.initial_samples())?;
    Ok(assemble(p, cfg, &init, cfg.method)?.0)
}

fn passive(p: &Problem, cfg: &TrainConfig, method: Method) -> Result<TrainOutput> {
    cfg.validate()?;
    check_problem(p)?;
    let init = acquire_initial(p, cfg, cfg.n_max)?;
    let (model, hypers, fit_secs) = assemble(p, cfg, &init, method)?;
    let mut timing = init.timing;
    timing.fitting = fit_secs;
    Ok(TrainOutput {
        model,
        trace: TraceLog { m: p.m(), rows: Vec::new() },
        timing,
        training_sets: training_sets(&init.f_matrix, &init.data),
        theta2: hypers.iter().map(|h| h.theta2).collect(),
    })
}

pub fn train_passive_gpr(p: &Problem, cfg: &TrainConfig) -> Result<TrainOutput> {
    if cfg.method != Method::PPgpr {
        return Err(Error::Config(format!("train_passive_gpr called with method {}", cfg.method)));
    }
    passive(p, cfg, Method::PPgpr)
}

pub fn train_passive_poly(p: &Problem, cfg: &TrainConfig) -> Result<TrainOutput> {
    if cfg.method != Method::PPpr {
        return Err(Error::Config(format!("train_passive_poly called with method {}", cfg.method)));
    }
    passive(p, cfg, Method::PPpr)
}

/// Runs whichever method `cfg` names.
pub fn train(p: &Problem, cfg: &TrainConfig) -> std::result::Result<TrainOutput, TrainFailure> {
    match cfg.method {
        Method::PAgpr => train_active(p, cfg),
        Method::PPgpr => Ok(train_passive_gpr(p, cfg)?),
        Method::PPpr => Ok(train_passive_poly(p, cfg)?),
    }
}

/// Builds a cascade-feasible prefix of length `k - 1`, or `None` when some
/// level's interval is empty.
fn cascade_candidate(model: &ChainedPfModel, k: usize, rng: &mut impl Rng) -> Option<Vec<f64>> {
    let mut f = Vec::with_capacity(k - 1);
    f.push(uniform(rng, model.l1(), model.f_max()[0]));
    for j in 2..k {
        let mu = model.mean_unchecked(j, &f);
        if !(mu <= model.f_max()[j - 1]) {
            return None;
        }
        f.push(uniform(rng, mu, model.f_max()[j - 1]));
    }
    Some(f)
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        (lo + rng.gen::<f64>() * (hi - lo)).clamp(lo, hi)
    }
}

/// Re-establishes the cascade after coordinate `from` moved: later
/// coordinates are clamped into their intervals. `None` if one is empty.
fn repair(model: &ChainedPfModel, f: &mut [f64], from: usize) -> Option<()> {
    if f[0] < model.l1() || f[0] > model.f_max()[0] {
        return None;
    }
    for j in from.max(1)..f.len() {
        let mu = model.mean_unchecked(j + 1, &f[..j]);
        if !(mu <= model.f_max()[j]) {
            return None;
        }
        if from == j {
            if f[j] < mu || f[j] > model.f_max()[j] {
                return None;
            }
        } else {
            f[j] = f[j].clamp(mu, model.f_max()[j]);
        }
    }
    Some(())
}

/// Approximate argmax of level `k`'s predictive variance over the
/// cascade-feasible region of its inputs.
pub fn query_max_variance(
    model: &ChainedPfModel,
    k: usize,
    cfg: &QueryConfig,
    rng: &mut impl Rng,
) -> Result<QueryPoint> {
    if k < 2 || k > model.m() {
        return Err(Error::IndexRange { index: k, max: model.m() });
    }
    let var = |f: &[f64]| model.variance_unchecked(k, f);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut drawn = 0;
    let mut attempts = 0;
    let budget = cfg.candidates * 20;
    while drawn < cfg.candidates && attempts < budget {
        attempts += 1;
        let Some(f) = cascade_candidate(model, k, rng) else { continue };
        drawn += 1;
        let v = var(&f);
        if best.as_ref().map_or(true, |(_, b)| v > *b) {
            best = Some((f, v));
        }
    }
    let Some((mut f, mut v)) = best else { return Err(Error::LevelDegenerate { level: k }) };
    let mut step: Vec<f64> = (0..k - 1).map(|i| 0.05 * (model.f_max()[i] - model.f_min()[i])).collect();
    for _ in 0..cfg.sweeps {
        let mut improved = false;
        for i in 0..k - 1 {
            for dir in [1.0, -1.0] {
                let mut trial = f.clone();
                trial[i] += dir * step[i];
                if repair(model, &mut trial, i).is_none() {
                    continue;
                }
                let tv = var(&trial);
                if tv > v {
                    f = trial;
                    v = tv;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    let mu = model.mean_unchecked(k, &f);
    let mut f_around = f.clone();
    f_around.push(mu);
    Ok(QueryPoint { f_query: f, sigma2: v, f_around })
}

/// Random-weight initialization with `n0` samples per level, then per level
/// `k = 2..m` in order: query the max-variance point, acquire the front point
/// through the cascade, refit, until the level holds `n_max` samples.
pub fn train_active(p: &Problem, cfg: &TrainConfig) -> std::result::Result<TrainOutput, TrainFailure> {
    if cfg.method != Method::PAgpr {
        return Err(Error::Config(format!("train_active called with method {}", cfg.method)).into());
    }
    cfg.validate()?;
    check_problem(p)?;
    let n0 = cfg.initial_samples();
    let mut init = acquire_initial(p, cfg, n0)?;
    let (mut model, hypers, fit_secs) = assemble(p, cfg, &init, Method::PAgpr)?;
    let mut timing = init.timing;
    timing.fitting += fit_secs;
    let mut trace = TraceLog { m: p.m(), rows: Vec::new() };
    let theta2: Vec<f64> = hypers.iter().map(|h| h.theta2).collect();
    let f_matrix = init.f_matrix.clone();
    macro_rules! bail {
        ($e:expr) => {{
            let error = $e;
            let partial = TrainOutput {
                model: model.clone(),
                trace: trace.clone(),
                timing,
                training_sets: training_sets(&f_matrix, &init.data),
                theta2: theta2.clone(),
            };
            return Err(TrainFailure { error, partial: Some(Box::new(partial)) });
        }};
    }
    for k in 2..=p.m() {
        let mut rng = level_rng(cfg.seed, QUERY_STREAM + k as u64);
        let mut iter = 0;
        while init.data[k - 2].len() < cfg.n_max {
            iter += 1;
            let t = Instant::now();
            let q = match query_max_variance(&model, k, &cfg.query, &mut rng) {
                Ok(q) => q,
                Err(e) => bail!(e),
            };
            timing.query_overhead += secs(t.elapsed());
            let t = Instant::now();
            let starts = init.data[k - 2].starts(&init.anchors, &f_matrix.shift(&q.f_around));
            let acq = match acquire_pf_point_with_starts(p, &f_matrix, k, &q.f_around, &cfg.solver, &starts) {
                Ok(a) => a,
                Err(e) => {
                    timing.acquisition += secs(t.elapsed());
                    bail!(e)
                }
            };
            timing.acquisition += secs(t.elapsed());
            log::debug!("level {k} iter {iter}: branch {} residual {:.2e}", acq.branch, acq.solution.residual);
            trace.rows.push(TraceRow {
                level: k,
                iter,
                branch: acq.branch,
                sigma2: q.sigma2,
                residual: acq.solution.residual,
                iterations: acq.solution.iterations,
                f_query: q.f_query.clone(),
            });
            init.data[k - 2].push(&f_matrix.shift(acq.solution.f_opt.as_slice()), acq.solution.x_opt.clone());
            let t = Instant::now();
            let ds = &init.data[k - 2];
            let level = match fit_level(Method::PAgpr, ds, &hypers[k - 2]) {
                Ok(l) => l,
                Err(e) => bail!(e),
            };
            let mut levels = model.levels().to_vec();
            levels[k - 2] = level;
            let eq_tol = match eq_tol_for(cfg, levels.last().expect("m >= 2"), init.data.last().expect("m >= 2")) {
                Ok(t) => t,
                Err(e) => bail!(e),
            };
            model = match ChainedPfModel::new(p.name(), f_matrix.clone(), levels, eq_tol) {
                Ok(m) => m,
                Err(e) => bail!(e),
            };
            timing.fitting += secs(t.elapsed());
        }
    }
    Ok(TrainOutput { model, trace, timing, training_sets: training_sets(&f_matrix, &init.data), theta2 })
}

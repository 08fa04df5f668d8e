//! Scalarized front-point acquisition: anchors, the F matrix, boundary
//! intersection solves and the weight-recovery cascade.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, dot, Lu, SquareMatrix};
use crate::pareto::MetricVector;
use crate::solver::{minimize_multistart, start_points, Bounds, EqualityProblem, SolverConfig};
use crate::testbench::{DesignVector, Problem};

/// Entries below this count as negative weights.
pub const NEGATIVE_WEIGHT_TOL: f64 = -1e-9;

/// Shifted F matrix: zero diagonal, `f_max - f_min` off the diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FMatrixDoc", into = "FMatrixDoc")]
pub struct FMatrix {
    entries: SquareMatrix,
    f_min: MetricVector,
    f_max: MetricVector,
    conditions: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FMatrixDoc {
    f_min: MetricVector,
    f_max: MetricVector,
    entries: Vec<Vec<f64>>,
}

impl TryFrom<FMatrixDoc> for FMatrix {
    type Error = Error;
    fn try_from(doc: FMatrixDoc) -> Result<FMatrix> {
        let fm = build_f_matrix(&doc.f_min, &doc.f_max)?;
        if fm.entries.rows() != doc.entries {
            return Err(Error::Corrupt("F matrix entries disagree with f_min/f_max".into()));
        }
        Ok(fm)
    }
}

impl From<FMatrix> for FMatrixDoc {
    fn from(f: FMatrix) -> FMatrixDoc {
        FMatrixDoc { entries: f.entries.rows(), f_min: f.f_min, f_max: f.f_max }
    }
}

pub fn build_f_matrix(f_min: &MetricVector, f_max: &MetricVector) -> Result<FMatrix> {
    let m = f_min.len();
    if f_max.len() != m {
        return Err(Error::dim(m, f_max.len()));
    }
    if let Some(i) = (0..m).find(|&i| f_min[i] > f_max[i]) {
        return Err(Error::Precondition(format!(
            "f_min[{}] = {} exceeds f_max[{}] = {}",
            i + 1,
            f_min[i],
            i + 1,
            f_max[i]
        )));
    }
    let entries = SquareMatrix::from_fn(m, |i, j| if i == j { 0.0 } else { f_max[i] - f_min[i] });
    let mut conditions = Vec::with_capacity(m.saturating_sub(1));
    for k in 2..=m {
        let sub = entries.leading(k);
        Lu::new(&sub).map_err(|e| Error::Singular(format!("leading {k}x{k} block of F: {e}")))?;
        conditions.push(condition_number(&sub));
    }
    Ok(FMatrix { entries, f_min: f_min.clone(), f_max: f_max.clone(), conditions })
}

impl FMatrix {
    pub fn m(&self) -> usize {
        self.entries.n()
    }

    pub fn entries(&self) -> &SquareMatrix {
        &self.entries
    }

    pub fn f_min(&self) -> &MetricVector {
        &self.f_min
    }

    pub fn f_max(&self) -> &MetricVector {
        &self.f_max
    }

    pub fn leading(&self, k: usize) -> SquareMatrix {
        self.entries.leading(k)
    }

    /// 1-norm condition number of the leading `k`x`k` block, `k >= 2`.
    pub fn condition(&self, k: usize) -> f64 {
        self.conditions[k - 2]
    }

    pub fn shift(&self, f: &[f64]) -> Vec<f64> {
        f.iter().zip(self.f_min.as_slice()).map(|(a, b)| a - b).collect()
    }

    pub fn unshift(&self, f: &[f64]) -> Vec<f64> {
        f.iter().zip(self.f_min.as_slice()).map(|(a, b)| a + b).collect()
    }

    fn check_level(&self, k: usize) -> Result<()> {
        if k < 2 || k > self.m() {
            return Err(Error::IndexRange { index: k, max: self.m() });
        }
        Ok(())
    }

    /// Direction `-F_{1:k} e`.
    pub fn diagonal_direction(&self, k: usize) -> Vec<f64> {
        self.leading(k).mul_vec(&vec![1.0; k]).into_iter().map(|v| -v).collect()
    }
}

pub fn vertical_direction(k: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[k - 1] = -1.0;
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

impl SolveStatus {
    pub fn accepted(self) -> bool {
        self != SolveStatus::Infeasible
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max-iter",
            SolveStatus::Infeasible => "infeasible",
        })
    }
}

#[derive(Clone, Debug)]
pub struct NbiSolution {
    pub c_opt: f64,
    pub x_opt: DesignVector,
    /// First `k` metrics at `x_opt`, unshifted.
    pub f_opt: MetricVector,
    /// All `m` metrics at `x_opt`.
    pub f_full: MetricVector,
    pub status: SolveStatus,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct AnchorSolution {
    pub x_opt: DesignVector,
    pub f_min: f64,
    pub status: SolveStatus,
}

fn domain_bounds(p: &Problem) -> (Vec<f64>, Vec<f64>) {
    p.omega().iter().map(|&(l, h)| (l, h)).unzip()
}

/// Minimizes metric `i` (1-based) over the design box.
pub fn solve_anchor(p: &Problem, i: usize, cfg: &SolverConfig) -> Result<AnchorSolution> {
    if i == 0 || i > p.m() {
        return Err(Error::IndexRange { index: i, max: p.m() });
    }
    let (lo, hi) = domain_bounds(p);
    let bounds = Bounds { lo, hi };
    let mut buf = vec![0.0; p.m()];
    let mut f = |x: &[f64]| {
        p.eval_into(x, &mut buf);
        buf[i - 1]
    };
    let best = minimize_multistart(&mut f, &bounds, cfg.anchor_starts, cfg);
    let status = if best.value.is_finite() { SolveStatus::Converged } else { SolveStatus::Infeasible };
    Ok(AnchorSolution { x_opt: DesignVector::new(best.z), f_min: best.value, status })
}

/// Anchors for every metric, returned as the ideal vector `f_min`.
pub fn solve_anchors(p: &Problem, cfg: &SolverConfig) -> Result<(MetricVector, Vec<AnchorSolution>)> {
    let anchors = (1..=p.m()).map(|i| solve_anchor(p, i, cfg)).collect::<Result<Vec<_>>>()?;
    if let Some(pos) = anchors.iter().position(|a| !a.status.accepted()) {
        return Err(Error::Infeasible(format!("anchor for metric {} did not converge", pos + 1)));
    }
    let f_min = MetricVector::new(anchors.iter().map(|a| a.f_min).collect())?;
    Ok((f_min, anchors))
}

fn check_weights(s: &[f64], k: usize) -> Result<()> {
    if s.len() != k {
        return Err(Error::dim(k, s.len()));
    }
    if s.iter().any(|v| !v.is_finite() || *v < NEGATIVE_WEIGHT_TOL) {
        return Err(Error::Precondition(format!("weights must be non-negative, got {s:?}")));
    }
    let sum: f64 = s.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!("weights must sum to 1, got {sum}")));
    }
    Ok(())
}

/// Maximizes `c` subject to `F_{1:k} s + c n = f_{1:k}(x) - f_min`, `x` in the
/// design box, `c >= 0`.
pub fn solve_nbi(p: &Problem, fm: &FMatrix, k: usize, s: &[f64], n: &[f64], cfg: &SolverConfig) -> Result<NbiSolution> {
    solve_nbi_with_starts(p, fm, k, s, n, cfg, &[])
}

/// [`solve_nbi`] that also starts from the given designs, tried after the
/// center and before the low-discrepancy points.
pub fn solve_nbi_with_starts(
    p: &Problem,
    fm: &FMatrix,
    k: usize,
    s: &[f64],
    n: &[f64],
    cfg: &SolverConfig,
    extra: &[DesignVector],
) -> Result<NbiSolution> {
    fm.check_level(k)?;
    if fm.m() != p.m() {
        return Err(Error::dim(p.m(), fm.m()));
    }
    check_weights(s, k)?;
    if n.len() != k {
        return Err(Error::dim(k, n.len()));
    }
    if n.iter().all(|v| *v == 0.0) || n.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("search direction must be finite and nonzero".into()));
    }
    let d = p.d();
    let base = fm.leading(k).mul_vec(s);
    let f_min = fm.f_min().as_slice()[..k].to_vec();
    let mut buf = vec![0.0; p.m()];
    let mut residual = |z: &[f64], out: &mut [f64]| {
        p.eval_into(&z[..d], &mut buf);
        for i in 0..k {
            out[i] = base[i] + z[d] * n[i] - (buf[i] - f_min[i]);
        }
    };
    let (lo, hi) = domain_bounds(p);
    let nn = dot(n, n);
    if let Some(x) = extra.iter().find(|x| x.len() != d) {
        return Err(Error::dim(d, x.len()));
    }
    let mut points = start_points(&lo, &hi, cfg.starts);
    let tail = points.split_off(1.min(points.len()));
    points.extend(extra.iter().map(|x| x.as_slice().to_vec()));
    points.extend(tail);
    let mut starts = Vec::with_capacity(points.len());
    for x0 in points {
        let mut f0 = vec![0.0; p.m()];
        p.eval_into(&x0, &mut f0);
        let gap: Vec<f64> = (0..k).map(|i| f0[i] - f_min[i] - base[i]).collect();
        let c0 = (dot(n, &gap) / nn).max(0.0);
        let mut z0 = x0;
        z0.push(if c0.is_finite() { c0 } else { 0.0 });
        starts.push(z0);
    }
    let mut zlo = lo;
    let mut zhi = hi;
    zlo.push(0.0);
    zhi.push(f64::INFINITY);
    let mut problem = EqualityProblem { residual: &mut residual, rows: k, bounds: Bounds { lo: zlo, hi: zhi } };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut fallback: Option<(Vec<f64>, f64)> = None;
    let mut iterations = 0;
    for z0 in &starts {
        let out = problem.solve(z0, cfg);
        iterations += out.iterations;
        if !out.residual.is_finite() {
            continue;
        }
        if out.residual <= cfg.accept_tol {
            if best.as_ref().map_or(true, |(z, _)| out.z[d] > z[d]) {
                best = Some((out.z, out.residual));
            }
        } else if fallback.as_ref().map_or(true, |(_, r)| out.residual < *r) {
            fallback = Some((out.z, out.residual));
        }
    }
    let (z, res, status) = match (best, fallback) {
        (Some((z, r)), _) => {
            let st = if r <= cfg.tol { SolveStatus::Converged } else { SolveStatus::MaxIter };
            (z, r, st)
        }
        (None, Some((z, r))) => (z, r, SolveStatus::Infeasible),
        (None, None) => return Err(Error::Infeasible("every start produced non-finite metrics".into())),
    };
    let mut f_full = vec![0.0; p.m()];
    p.eval_into(&z[..d], &mut f_full);
    Ok(NbiSolution {
        c_opt: z[d],
        x_opt: DesignVector::new(z[..d].to_vec()),
        f_opt: MetricVector::new(f_full[..k].to_vec())?,
        f_full: MetricVector::new(f_full)?,
        status,
        residual: res,
        iterations,
    })
}

/// Scalar and weight vector recovered analytically from a target point.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub c: f64,
    pub s: Vec<f64>,
}

impl Weights {
    pub fn non_negative(&self) -> bool {
        self.s.iter().all(|v| *v >= NEGATIVE_WEIGHT_TOL)
    }
}

fn level_solve(fm: &FMatrix, k: usize, f_around: &[f64]) -> Result<(Lu, Vec<f64>)> {
    fm.check_level(k)?;
    if f_around.len() != k {
        return Err(Error::dim(k, f_around.len()));
    }
    if f_around.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("f_around must be finite".into()));
    }
    let lu = Lu::new(&fm.leading(k))?;
    let shifted: Vec<f64> = f_around.iter().zip(fm.f_min().as_slice()).map(|(a, b)| a - b).collect();
    Ok((lu, shifted))
}

/// Weights for the vertical direction `v = [0, .., 0, -1]` through `f_around`
/// (unshifted). Sums to one; entries may be negative.
pub fn vertical_weights(fm: &FMatrix, k: usize, f_around: &[f64]) -> Result<Weights> {
    let (lu, f) = level_solve(fm, k, f_around)?;
    let v = vertical_direction(k);
    let finv_f = lu.solve(&f);
    let finv_v = lu.solve(&v);
    let denom: f64 = finv_v.iter().sum();
    let scale = finv_v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if denom.abs() <= 1e-14 * scale.max(1e-300) {
        return Err(Error::DegenerateDirection(format!("vertical direction is parallel to the hull at level {k}")));
    }
    let c = (finv_f.iter().sum::<f64>() - 1.0) / denom;
    let rhs: Vec<f64> = f.iter().zip(&v).map(|(a, b)| a - c * b).collect();
    Ok(Weights { c, s: lu.solve(&rhs) })
}

/// Weights for the diagonal direction `-F_{1:k} e` through `f_around`.
pub fn diagonal_weights(fm: &FMatrix, k: usize, f_around: &[f64]) -> Result<Weights> {
    let (lu, f) = level_solve(fm, k, f_around)?;
    let finv_f = lu.solve(&f);
    let c = (1.0 - finv_f.iter().sum::<f64>()) / k as f64;
    Ok(Weights { c, s: finv_f.iter().map(|v| v + c).collect() })
}

/// Clamps negative entries to zero and renormalizes to sum one.
pub fn rectify(s: &[f64]) -> Result<Vec<f64>> {
    let clamped: Vec<f64> = s.iter().map(|v| v.max(0.0)).collect();
    let sum: f64 = clamped.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::DegenerateDirection(format!("no positive weight to renormalize in {s:?}")));
    }
    Ok(clamped.into_iter().map(|v| v / sum).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// Vertical search.
    Vertical,
    /// Diagonal search with analytic weights.
    Diagonal,
    /// Diagonal search with clamped, renormalized weights.
    Rectified,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Vertical => "a",
            Branch::Diagonal => "b",
            Branch::Rectified => "c",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Acquisition {
    pub solution: NbiSolution,
    pub branch: Branch,
    pub weights: Vec<f64>,
    pub direction: Vec<f64>,
    /// Branches tried before the accepted one, with their failure reason.
    pub rejected: Vec<(Branch, String)>,
}

fn clean(s: &[f64]) -> Vec<f64> {
    rectify(s).unwrap_or_else(|_| s.to_vec())
}

/// Tries vertical, then diagonal, then rectified diagonal search around
/// `f_around` (length `k`, unshifted).
pub fn acquire_pf_point(
    p: &Problem,
    fm: &FMatrix,
    k: usize,
    f_around: &[f64],
    cfg: &SolverConfig,
) -> Result<Acquisition> {
    acquire_pf_point_with_starts(p, fm, k, f_around, cfg, &[])
}

/// [`acquire_pf_point`] with extra start designs for every solve.
pub fn acquire_pf_point_with_starts(
    p: &Problem,
    fm: &FMatrix,
    k: usize,
    f_around: &[f64],
    cfg: &SolverConfig,
    extra: &[DesignVector],
) -> Result<Acquisition> {
    let mut rejected = Vec::new();
    match vertical_weights(fm, k, f_around) {
        Ok(w) if w.non_negative() => {
            let s = clean(&w.s);
            let n = vertical_direction(k);
            let sol = solve_nbi_with_starts(p, fm, k, &s, &n, cfg, extra)?;
            if sol.status.accepted() {
                return Ok(Acquisition { solution: sol, branch: Branch::Vertical, weights: s, direction: n, rejected });
            }
            rejected.push((Branch::Vertical, format!("solve {} (residual {:.2e})", sol.status, sol.residual)));
        }
        Ok(w) => rejected.push((Branch::Vertical, format!("negative weights {:?}", w.s))),
        Err(e) => rejected.push((Branch::Vertical, e.to_string())),
    }
    let w = diagonal_weights(fm, k, f_around)?;
    let n = fm.diagonal_direction(k);
    if w.non_negative() {
        let s = clean(&w.s);
        let sol = solve_nbi_with_starts(p, fm, k, &s, &n, cfg, extra)?;
        if sol.status.accepted() {
            return Ok(Acquisition { solution: sol, branch: Branch::Diagonal, weights: s, direction: n, rejected });
        }
        rejected.push((Branch::Diagonal, format!("solve {} (residual {:.2e})", sol.status, sol.residual)));
        return Err(Error::Acquisition { level: k, detail: describe(&rejected) });
    }
    rejected.push((Branch::Diagonal, format!("negative weights {:?}", w.s)));
    let s =
        rectify(&w.s).map_err(|e| Error::Acquisition { level: k, detail: format!("{}; {e}", describe(&rejected)) })?;
    let sol = solve_nbi_with_starts(p, fm, k, &s, &n, cfg, extra)?;
    if sol.status.accepted() {
        return Ok(Acquisition { solution: sol, branch: Branch::Rectified, weights: s, direction: n, rejected });
    }
    rejected.push((Branch::Rectified, format!("solve {} (residual {:.2e})", sol.status, sol.residual)));
    Err(Error::Acquisition { level: k, detail: describe(&rejected) })
}

fn describe(rejected: &[(Branch, String)]) -> String {
    rejected.iter().map(|(b, why)| format!("branch {b}: {why}")).collect::<Vec<_>>().join("; ")
}

/// Uniform draw from the probability simplex (normalized exponentials).
pub fn random_simplex(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

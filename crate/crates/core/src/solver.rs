//! Box-constrained local optimizer and the augmented Lagrangian used for the
//! scalarized front solves.

use serde::{Deserialize, Serialize};

use crate::linalg::{dot, norm2, Lu, SquareMatrix};

/// Parameters shared by every front solve of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Equality residual (2-norm, shifted metric units) counted as converged.
    pub tol: f64,
    /// Larger residual still accepted, reported as max-iter.
    pub accept_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub starts: usize,
    pub anchor_starts: usize,
    /// Relative finite-difference step.
    pub fd_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-6,
            accept_tol: 1e-4,
            max_outer: 500,
            max_inner: 200,
            starts: 8,
            anchor_starts: 16,
            fd_step: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.tol > 0.0
            && self.accept_tol >= self.tol
            && self.max_outer > 0
            && self.max_inner > 0
            && self.starts > 0
            && self.anchor_starts > 0
            && self.fd_step > 0.0
            && self.fd_step < 1e-2;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("invalid solver settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn project(&self, z: &mut [f64]) {
        for ((v, l), h) in z.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(*l, *h);
        }
    }
}

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u32, base: u32) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Start points inside a finite box: the center, then Halton points.
pub(crate) fn start_points(lo: &[f64], hi: &[f64], count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|j| {
            lo.iter()
                .zip(hi)
                .enumerate()
                .map(|(i, (l, h))| {
                    let u = if j == 0 { 0.5 } else { radical_inverse(j as u32, PRIMES[i % PRIMES.len()]) };
                    l + u * (h - l)
                })
                .collect()
        })
        .collect()
}

/// Finite-difference step for coordinate `v` in `[lo, hi]`: central when it
/// fits, one-sided at a bound.
fn fd_points(v: f64, lo: f64, hi: f64, rel: f64) -> (f64, f64) {
    let h = rel * v.abs().max(1.0);
    let plus = if v + h <= hi { v + h } else { v };
    let minus = if v - h >= lo { v - h } else { v };
    (minus, plus)
}

/// Jacobian of a vector function by finite differences, row-major `rows x z.len()`.
pub(crate) fn fd_jacobian(
    f: &mut dyn FnMut(&[f64], &mut [f64]),
    z: &[f64],
    bounds: &Bounds,
    rows: usize,
    rel: f64,
) -> Vec<Vec<f64>> {
    let n = z.len();
    let mut jac = vec![vec![0.0; n]; rows];
    let mut zp = z.to_vec();
    let mut fp = vec![0.0; rows];
    let mut fm = vec![0.0; rows];
    for j in 0..n {
        let (a, b) = fd_points(z[j], bounds.lo[j], bounds.hi[j], rel);
        if b == a {
            continue;
        }
        zp[j] = b;
        f(&zp, &mut fp);
        zp[j] = a;
        f(&zp, &mut fm);
        zp[j] = z[j];
        for r in 0..rows {
            jac[r][j] = (fp[r] - fm[r]) / (b - a);
        }
    }
    jac
}

pub(crate) struct Minimum {
    pub z: Vec<f64>,
    pub value: f64,
}

fn free_mask(z: &[f64], g: &[f64], b: &Bounds) -> Vec<bool> {
    z.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (v, gi))| !((*v <= b.lo[i] && *gi > 0.0) || (*v >= b.hi[i] && *gi < 0.0)))
        .collect()
}

fn projected_gradient_norm(z: &[f64], g: &[f64], b: &Bounds) -> f64 {
    let mut s = 0.0;
    for i in 0..z.len() {
        let step = (z[i] - g[i]).clamp(b.lo[i], b.hi[i]) - z[i];
        s += step * step;
    }
    s.sqrt()
}

/// Projected quasi-Newton descent on a box. `obj(z, true)` returns value and
/// gradient; `obj(z, false)` may leave the gradient empty.
pub(crate) fn minimize_box(
    obj: &mut dyn FnMut(&[f64], bool) -> (f64, Vec<f64>),
    z0: &[f64],
    bounds: &Bounds,
    max_iter: usize,
    gtol: f64,
) -> Minimum {
    let n = z0.len();
    let mut z = z0.to_vec();
    bounds.project(&mut z);
    let (mut fz, mut g) = obj(&z, true);
    let mut h = SquareMatrix::identity(n);
    let mut mask = free_mask(&z, &g, bounds);
    for _ in 0..max_iter {
        if projected_gradient_norm(&z, &g, bounds) <= gtol * (1.0 + fz.abs()) {
            break;
        }
        let mut d = vec![0.0; n];
        for i in (0..n).filter(|&i| mask[i]) {
            d[i] = -(0..n).filter(|&j| mask[j]).map(|j| h[(i, j)] * g[j]).sum::<f64>();
        }
        if dot(&d, &g) >= 0.0 {
            h = SquareMatrix::identity(n);
            for i in 0..n {
                d[i] = if mask[i] { -g[i] } else { 0.0 };
            }
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let mut trial: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            bounds.project(&mut trial);
            let step: Vec<f64> = trial.iter().zip(&z).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            let ft = obj(&trial, false).0;
            if ft.is_finite() && ft <= fz + 1e-4 * decrease.min(0.0) && decrease < 0.0 {
                accepted = Some(trial);
                break;
            }
            alpha *= 0.5;
        }
        let Some(znew) = accepted else { break };
        let (fnew, gnew) = obj(&znew, true);
        let s: Vec<f64> = znew.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let small = norm2(&s) <= 1e-15 * (1.0 + norm2(&z));
        let progress = fz - fnew;
        z = znew;
        fz = fnew;
        g = gnew;
        let new_mask = free_mask(&z, &g, bounds);
        if new_mask != mask {
            h = SquareMatrix::identity(n);
            mask = new_mask;
        } else {
            bfgs_update(&mut h, &s, &y);
        }
        if small || progress.abs() <= 1e-16 * (1.0 + fz.abs()) {
            break;
        }
    }
    Minimum { z, value: fz }
}

fn bfgs_update(h: &mut SquareMatrix, s: &[f64], y: &[f64]) {
    let sy = dot(s, y);
    if sy <= 1e-12 * norm2(s) * norm2(y) || sy <= 0.0 {
        return;
    }
    let n = s.len();
    let hy = h.mul_vec(y);
    let yhy = dot(y, &hy);
    let rho = 1.0 / sy;
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
        }
    }
}

/// Equality-constrained maximization of the last coordinate `c`:
/// maximize `c` subject to `h(z) = 0`, `z` in the box.
pub(crate) struct EqualityProblem<'a> {
    /// Writes the constraint residual for `z` into the slice.
    pub residual: &'a mut dyn FnMut(&[f64], &mut [f64]),
    pub rows: usize,
    pub bounds: Bounds,
}

pub(crate) struct EqualityOutcome {
    pub z: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl EqualityProblem<'_> {
    fn norm(&mut self, z: &[f64]) -> f64 {
        let mut r = vec![0.0; self.rows];
        (self.residual)(z, &mut r);
        norm2(&r)
    }

    /// Augmented Lagrangian from `z0`, finished with a minimum-norm
    /// Gauss-Newton feasibility polish.
    pub fn solve(&mut self, z0: &[f64], cfg: &SolverConfig) -> EqualityOutcome {
        let rows = self.rows;
        let nz = z0.len();
        let ci = nz - 1;
        let mut z = z0.to_vec();
        self.bounds.project(&mut z);
        let mut lambda = vec![0.0; rows];
        let mut rho = 10.0;
        let mut prev = self.norm(&z);
        let mut iterations = 0;
        let bounds = self.bounds.clone();
        for outer in 0..cfg.max_outer {
            iterations = outer + 1;
            let res = &mut *self.residual;
            let lam = lambda.clone();
            let mut r = vec![0.0; rows];
            let mut obj = |w: &[f64], grad: bool| -> (f64, Vec<f64>) {
                res(w, &mut r);
                let val = -w[ci] + dot(&lam, &r) + 0.5 * rho * dot(&r, &r);
                if !grad {
                    return (val, Vec::new());
                }
                let jac = fd_jacobian(res, w, &bounds, rows, cfg.fd_step);
                let mut g = vec![0.0; nz];
                g[ci] = -1.0;
                for (row, (l, v)) in jac.iter().zip(lam.iter().zip(&r)) {
                    let m = l + rho * v;
                    for j in 0..nz {
                        g[j] += row[j] * m;
                    }
                }
                (val, g)
            };
            let min = minimize_box(&mut obj, &z, &bounds, cfg.max_inner, 1e-10);
            z = min.z;
            let mut r = vec![0.0; rows];
            (self.residual)(&z, &mut r);
            let now = norm2(&r);
            for (l, v) in lambda.iter_mut().zip(&r) {
                *l += rho * v;
            }
            if now <= 0.1 * cfg.tol && outer > 0 {
                break;
            }
            if now > 0.25 * prev {
                rho = (rho * 10.0).min(1e10);
            }
            if now <= cfg.tol && (prev - now).abs() <= cfg.tol {
                break;
            }
            prev = now;
        }
        self.polish(&mut z, cfg);
        let residual = self.norm(&z);
        EqualityOutcome { z, residual, iterations }
    }

    fn polish(&mut self, z: &mut Vec<f64>, cfg: &SolverConfig) {
        let rows = self.rows;
        let mut r = vec![0.0; rows];
        for _ in 0..20 {
            (self.residual)(z, &mut r);
            let cur = norm2(&r);
            if cur <= 1e-3 * cfg.tol {
                return;
            }
            let mut jac = fd_jacobian(self.residual, z, &self.bounds, rows, cfg.fd_step);
            // Freeze coordinates whose step would leave the box and re-solve.
            let mut step = Vec::new();
            for _ in 0..z.len() {
                let jjt = SquareMatrix::from_fn(rows, |i, j| dot(&jac[i], &jac[j]) + if i == j { 1e-14 } else { 0.0 });
                let Ok(lu) = Lu::new(&jjt) else { return };
                let w = lu.solve(&r);
                step = (0..z.len()).map(|j| -(0..rows).map(|i| jac[i][j] * w[i]).sum::<f64>()).collect();
                let blocked: Vec<usize> = (0..z.len())
                    .filter(|&j| {
                        (z[j] <= self.bounds.lo[j] && step[j] < 0.0) || (z[j] >= self.bounds.hi[j] && step[j] > 0.0)
                    })
                    .collect();
                if blocked.is_empty() {
                    break;
                }
                for row in jac.iter_mut() {
                    for &j in &blocked {
                        row[j] = 0.0;
                    }
                }
            }
            let mut alpha = 1.0;
            let mut improved = false;
            for _ in 0..20 {
                let mut trial: Vec<f64> = z.iter().zip(&step).map(|(a, b)| a + alpha * b).collect();
                self.bounds.project(&mut trial);
                let t = self.norm(&trial);
                if t < cur {
                    *z = trial;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !improved {
                return;
            }
        }
    }
}

/// Multistart minimization of a scalar function of `x` over a finite box with
/// finite-difference gradients.
pub(crate) fn minimize_multistart(
    f: &mut dyn FnMut(&[f64]) -> f64,
    bounds: &Bounds,
    starts: usize,
    cfg: &SolverConfig,
) -> Minimum {
    let mut best: Option<Minimum> = None;
    for z0 in start_points(&bounds.lo, &bounds.hi, starts) {
        let mut obj = |z: &[f64], grad: bool| -> (f64, Vec<f64>) {
            let v = f(z);
            if !grad {
                return (v, Vec::new());
            }
            let mut wrapped = |w: &[f64], out: &mut [f64]| out[0] = f(w);
            let jac = fd_jacobian(&mut wrapped, z, bounds, 1, cfg.fd_step);
            (v, jac.into_iter().next().unwrap_or_default())
        };
        let m = minimize_box(&mut obj, &z0, bounds, cfg.max_inner * 5, 1e-12);
        if best.as_ref().map_or(true, |b| m.value < b.value) {
            best = Some(m);
        }
    }
    best.expect("at least one start")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn halton_starts_begin_at_center() {
        let s = start_points(&[0.0, -1.0], &[2.0, 1.0], 3);
        assert_eq!(s[0], vec![1.0, 0.0]);
        assert_eq!(s[1], vec![1.0, -1.0 + 2.0 / 3.0]);
        assert_eq!(s[2], vec![0.5, -1.0 + 4.0 / 3.0]);
    }

    #[test]
    fn box_minimizer_finds_interior_and_bound_minima() {
        let b = Bounds { lo: vec![-2.0, -2.0], hi: vec![2.0, 0.5] };
        let mut f = |z: &[f64]| (z[0] - 1.0).powi(2) + 10.0 * (z[1] - 1.0).powi(2) + z[0] * z[1];
        let m = minimize_multistart(&mut f, &b, 4, &SolverConfig::default());
        // z1 sits on its upper bound; z0 minimizes the remaining quadratic.
        assert_abs_diff_eq!(m.z[1], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(m.z[0], 0.75, epsilon = 1e-5);
    }

    #[test]
    fn augmented_lagrangian_on_circle() {
        // maximize c subject to x0^2 + x1^2 = 1 and x0 - c = 0.
        let mut res = |z: &[f64], out: &mut [f64]| {
            out[0] = z[0] * z[0] + z[1] * z[1] - 1.0;
            out[1] = z[0] - z[2];
        };
        let mut p = EqualityProblem {
            residual: &mut res,
            rows: 2,
            bounds: Bounds { lo: vec![-2.0, -2.0, 0.0], hi: vec![2.0, 2.0, f64::INFINITY] },
        };
        let out = p.solve(&[0.3, 0.2, 0.0], &SolverConfig::default());
        assert!(out.residual <= 1e-6, "residual {}", out.residual);
        assert_abs_diff_eq!(out.z[2], 1.0, epsilon = 1e-4);
    }
}

//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use pfchain::chain::LevelModel;
use pfchain::eval::{run_benchmark, timing_report, write_metric_csv, BenchmarkConfig, BenchmarkSummary};
use pfchain::gpr::{median_inverse_sq_distance, GprHyperParams, GprModel};
use pfchain::learner::{train, Method, TrainConfig};
use pfchain::nbi::{build_f_matrix, diagonal_weights, random_simplex, solve_nbi, vertical_direction, vertical_weights};
use pfchain::pareto::{extract_front, project_set, MetricSet, MetricVector};
use pfchain::solver::SolverConfig;
use pfchain::testbench::Problem;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REPEATS: usize = 50;
const SEED: u64 = 0;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: usize, pass: bool, detail: String) {
        println!("criterion {id:>2} [{}] {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed += 1;
        }
    }
}

fn bench(p: &Problem, n_max: &[usize]) -> (BenchmarkSummary, f64) {
    let cfg = BenchmarkConfig { n_max: n_max.to_vec(), repeats: REPEATS, ..Default::default() };
    let t = Instant::now();
    let s = run_benchmark(p, &TrainConfig { seed: SEED, ..Default::default() }, &cfg).expect("benchmark runs");
    (s, t.elapsed().as_secs_f64())
}

fn mean(s: &BenchmarkSummary, m: Method, n: usize) -> f64 {
    s.row(m, n).map_or(f64::NAN, |r| r.mean_err)
}

fn std(s: &BenchmarkSummary, m: Method, n: usize) -> f64 {
    s.row(m, n).and_then(|r| r.std_err).unwrap_or(f64::NAN)
}

fn failures(s: &BenchmarkSummary) -> String {
    if s.failures.is_empty() {
        String::new()
    } else {
        format!(" ({} failed runs excluded)", s.failures.len())
    }
}

fn main() -> ExitCode {
    let mut r = Report { failed: 0 };
    let (a, p, q) = (Method::PAgpr, Method::PPgpr, Method::PPpr);

    let sph = Problem::sph();
    let zdt1 = Problem::zdt1();
    let (sph10, sph10_secs) = bench(&sph, &[10]);
    let (sph_more, _) = bench(&sph, &[20, 30]);
    let (zdt, _) = bench(&zdt1, &[10, 30]);
    let (sch, _) = bench(&Problem::sch(), &[10]);
    let (maf, _) = bench(&Problem::maf3(), &[10]);

    // 1
    let (ea, ep, eq) = (mean(&sph10, a, 10), mean(&sph10, p, 10), mean(&sph10, q, 10));
    r.line(
        1,
        ea < ep && ea < eq && (0.01..=0.08).contains(&ea),
        format!("SPH n_max=10 mean Err: p_agpr {ea:.4}, p_ppr {eq:.4}, p_pgpr {ep:.4}{}", failures(&sph10)),
    );

    // 2
    let ep20 = mean(&sph_more, p, 20);
    r.line(2, ea <= ep20, format!("SPH p_agpr@10 {ea:.4} <= p_pgpr@20 {ep20:.4}"));

    // 3
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, at10, at30) in [("ZDT1", &zdt, &zdt), ("SPH", &sph10, &sph_more)] {
        for m in Method::ALL {
            let (x, y) = (mean(at10, m, 10), mean(at30, m, 30));
            ok &= y <= x;
            parts.push(format!("{name} {m} {x:.4}->{y:.4}"));
        }
    }
    r.line(3, ok, format!("mean Err n_max 10->30: {}", parts.join(", ")));

    // 4
    let mut wins = 0;
    let mut parts = Vec::new();
    for (name, s) in [("ZDT1", &zdt), ("SCH", &sch), ("SPH", &sph10), ("MAF3", &maf)] {
        let (sa, sp, sq) = (std(s, a, 10), std(s, p, 10), std(s, q, 10));
        let win = sa <= sp && sa <= sq;
        wins += usize::from(win);
        parts.push(format!("{name} {}: {sa:.4} vs {sp:.4}/{sq:.4}{}", if win { "yes" } else { "no" }, failures(s)));
    }
    r.line(4, wins >= 3, format!("p_agpr std <= both passive on {wins}/4 (agpr vs pgpr/ppr): {}", parts.join("; ")));

    // 5
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.gen_range(2..=5);
        let lo: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..1.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.1..5.0)).collect();
        let fm =
            build_f_matrix(&MetricVector::new(lo.clone()).unwrap(), &MetricVector::new(hi.clone()).unwrap()).unwrap();
        let f: Vec<f64> = (0..k).map(|i| rng.gen_range(lo[i]..hi[i])).collect();
        let shifted = fm.shift(&f);
        let fk = DMatrix::from_fn(k, k, |i, j| fm.entries()[(i, j)]);
        let diag_dir: Vec<f64> = (0..k).map(|i| -(0..k).map(|j| fm.entries()[(i, j)]).sum::<f64>()).collect();
        for (w, dir) in [
            (vertical_weights(&fm, k, &f).unwrap(), vertical_direction(k)),
            (diagonal_weights(&fm, k, &f).unwrap(), diag_dir),
        ] {
            // Defining system: F s + c n = f - f_min and e's = 1.
            let mut sys = DMatrix::zeros(k + 1, k + 1);
            sys.view_mut((0, 0), (k, k)).copy_from(&fk);
            for i in 0..k {
                sys[(i, k)] = dir[i];
                sys[(k, i)] = 1.0;
            }
            let mut rhs = DVector::from_column_slice(&shifted).resize_vertically(k + 1, 0.0);
            rhs[k] = 1.0;
            let oracle = sys.clone().lu().solve(&rhs).expect("oracle solve");
            let mut z = DVector::from_column_slice(&w.s).resize_vertically(k + 1, 0.0);
            z[k] = w.c;
            let residual = (&sys * &z - &rhs).amax();
            let gap = (&z - &oracle).amax();
            worst = worst.max(residual).max(gap);
        }
    }
    r.line(5, worst <= 1e-10, format!("1000 random F: max system residual / oracle gap {worst:.2e} (tol 1e-10)"));

    // 6
    let cfg = SolverConfig::default();
    let mut worst: f64 = 0.0;
    let mut unaccepted = 0;
    for prob in [Problem::sch(), Problem::zdt1()] {
        let (f_min, _) = pfchain::nbi::solve_anchors(&prob, &cfg).unwrap();
        let fm = build_f_matrix(&f_min, prob.f_max()).unwrap();
        let dir = fm.diagonal_direction(2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let s = random_simplex(&mut rng, 2);
            let sol = solve_nbi(&prob, &fm, 2, &s, &dir, &cfg).unwrap();
            unaccepted += usize::from(!sol.status.accepted());
            worst = worst.max(prob.front_residual(sol.f_opt.as_slice()).abs());
        }
    }
    r.line(
        6,
        worst <= 1e-3 && unaccepted == 0,
        format!("SCH+ZDT1 200 solves: max front residual {worst:.2e}, {unaccepted} unaccepted"),
    );

    // 7
    let n = 200;
    let mut grid = MetricSet::new();
    for i in 0..n {
        for j in 0..n {
            let (u, v) = (
                i as f64 / (n - 1) as f64 * std::f64::consts::FRAC_PI_2,
                j as f64 / (n - 1) as f64 * std::f64::consts::FRAC_PI_2,
            );
            grid.insert(MetricVector::new(vec![-u.cos() * v.cos(), -u.cos() * v.sin(), -u.sin()]).unwrap()).unwrap();
        }
    }
    let spacing = std::f64::consts::FRAC_PI_2 / (n - 1) as f64;
    let front = extract_front(&project_set(&grid, 2).unwrap());
    let to_arc = front.iter().map(|f| (f[0].hypot(f[1]) - 1.0).abs()).fold(0.0, f64::max);
    let from_arc = (0..=10_000)
        .map(|i| {
            let t = i as f64 / 10_000.0 * std::f64::consts::FRAC_PI_2;
            let (x, y) = (-t.cos(), -t.sin());
            front.iter().map(|f| (f[0] - x).hypot(f[1] - y)).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let hausdorff = to_arc.max(from_arc);
    r.line(
        7,
        hausdorff <= 2.0 * spacing,
        format!("SPH 200x200 projected front: Hausdorff {hausdorff:.2e} <= {:.2e}", 2.0 * spacing),
    );

    // 8
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut interp, mut mean_gap, mut var_gap, mut var_out) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    // Same measures restricted to instances with cond(K) <= 1e8, reported alongside.
    let (mut interp_wc, mut mean_wc, mut var_wc, mut worst_cond) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.gen_range(1..=20);
        let d = rng.gen_range(1..=3);
        // Latin hypercube inputs, smooth targets (front-like training data).
        let strata: Vec<Vec<usize>> = (0..d)
            .map(|_| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng);
                idx
            })
            .collect();
        let inputs: Vec<Vec<f64>> =
            (0..n).map(|i| (0..d).map(|j| (strata[j][i] as f64 + rng.gen::<f64>()) / n as f64).collect()).collect();
        let waves: Vec<(Vec<f64>, f64, f64)> = (0..3)
            .map(|_| {
                ((0..d).map(|_| rng.gen_range(-3.0..3.0)).collect(), rng.gen_range(0.0..6.3), rng.gen_range(-1.0..1.0))
            })
            .collect();
        let targets: Vec<f64> = inputs
            .iter()
            .map(|x| {
                waves.iter().map(|(w, ph, a)| a * (x.iter().zip(w).map(|(u, v)| u * v).sum::<f64>() + ph).sin()).sum()
            })
            .collect();
        let theta2 = median_inverse_sq_distance(&inputs).unwrap_or(1.0);
        let theta1 = rng.gen_range(0.5..2.0);
        let g = GprModel::fit(inputs.clone(), targets.clone(), GprHyperParams::new(theta1, theta2).unwrap()).unwrap();
        let jitter = g.jitter_used();
        let kern = |a: &[f64], b: &[f64]| {
            theta1 * (-0.5 * theta2 * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp()
        };
        let k = DMatrix::from_fn(n, n, |i, j| kern(&inputs[i], &inputs[j]) + if i == j { jitter } else { 0.0 });
        let sv = k.clone().singular_values();
        let cond = sv.max() / sv.min();
        worst_cond = worst_cond.max(cond);
        let kinv = k.try_inverse().expect("oracle inverse");
        let t = DVector::from_column_slice(&targets);
        let (mut i_gap, mut m_gap, mut v_gap) = (0.0f64, 0.0f64, 0.0f64);
        for (x, y) in inputs.iter().zip(&targets) {
            i_gap = i_gap.max((g.predict(x).unwrap().0 - y).abs());
        }
        for _ in 0..50 {
            let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.2..1.2)).collect();
            let kv = DVector::from_fn(n, |i, _| kern(&q, &inputs[i]));
            let (mu, var) = g.predict(&q).unwrap();
            m_gap = m_gap.max((mu - kv.dot(&(&kinv * &t))).abs());
            v_gap = v_gap.max((var - (theta1 - kv.dot(&(&kinv * &kv))).max(0.0)).abs());
            var_out += usize::from(!(0.0..=theta1 + jitter).contains(&var));
        }
        for _ in 0..50 {
            let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..4.0)).collect();
            let var = g.predict(&q).unwrap().1;
            var_out += usize::from(!(0.0..=theta1 + jitter).contains(&var));
        }
        interp = interp.max(i_gap);
        mean_gap = mean_gap.max(m_gap);
        var_gap = var_gap.max(v_gap);
        if cond <= 1e8 {
            interp_wc = interp_wc.max(i_gap);
            mean_wc = mean_wc.max(m_gap);
            var_wc = var_wc.max(v_gap);
        }
    }
    let mut interp_trained = 0.0f64;
    for prob in Problem::all() {
        let Ok(out) = train(&prob, &TrainConfig::new(Method::PAgpr, 20, SEED)) else { continue };
        for level in out.model.levels() {
            let LevelModel::Gpr(g) = level else { continue };
            for (x, y) in g.inputs().iter().zip(g.targets()) {
                interp_trained = interp_trained.max((g.predict(x).unwrap().0 - y).abs());
            }
        }
    }
    r.line(
        8,
        interp.max(interp_trained) <= 1e-6 && mean_gap <= 1e-8 && var_gap <= 1e-8 && var_out == 0,
        format!(
            "interpolation {interp:.1e} random / {interp_trained:.1e} trained levels, oracle gap mean {mean_gap:.1e} var {var_gap:.1e}, \
             variance out of range {var_out}/20000 (worst cond(K) {worst_cond:.1e}; cond <= 1e8 only: interpolation {interp_wc:.1e}, \
             mean {mean_wc:.1e}, var {var_wc:.1e})"
        ),
    );

    // 9
    let mut bad = 0;
    let mut identical = true;
    let mut models = 0;
    for prob in Problem::all() {
        for m in Method::ALL {
            let Ok(out) = train(&prob, &TrainConfig::new(m, 10, SEED)) else { continue };
            models += 1;
            let set = out.model.generate(1000, 1).unwrap();
            bad += set.iter().filter(|f| !out.model.check_membership(f.as_slice()).unwrap().on_front).count();
            let mut x = Vec::new();
            let mut y = Vec::new();
            write_metric_csv(&mut x, &set).unwrap();
            write_metric_csv(&mut y, &out.model.generate(1000, 1).unwrap()).unwrap();
            identical &= x == y;
        }
    }
    r.line(
        9,
        bad == 0 && identical && models > 0,
        format!("{models} models x 1000 points: {bad} rejected, byte-identical regeneration {identical}"),
    );

    // 10
    let timing = timing_report(&sph10.reports);
    let overhead_ok =
        timing.iter().all(|t| if t.method.is_active() { t.query_overhead > 0.0 } else { t.query_overhead == 0.0 });
    let parts: Vec<String> = timing
        .iter()
        .map(|t| format!("{} {:.4}s (+{:.4}s query)", t.method, t.total - t.query_overhead, t.query_overhead))
        .collect();
    r.line(
        10,
        overhead_ok && sph10_secs < 1800.0,
        format!("SPH benchmark {sph10_secs:.1}s (limit 1800s); per-run {}", parts.join(", ")),
    );

    println!("{} of 10 criteria passed", 10 - r.failed);
    if r.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pfchain::chain::{ChainedPfModel, LevelModel};
use pfchain::gpr::{GprHyperParams, GprModel};
use pfchain::learner::*;
use pfchain::nbi::build_f_matrix;
use pfchain::pareto::MetricVector;
use pfchain::testbench::Problem;

#[test]
fn n0_default_and_bounds() {
    assert_eq!(default_n0(10), 5);
    assert_eq!(default_n0(30), 15);
    assert_eq!(default_n0(4), 3);
    assert_eq!(default_n0(3), 2);
    assert_eq!(default_n0(2), 1);
    assert!(TrainConfig::new(Method::PAgpr, 1, 0).validate().is_err());
    assert!(TrainConfig::new(Method::PPgpr, 1, 0).validate().is_ok());
    let mut c = TrainConfig::new(Method::PAgpr, 10, 0);
    c.n0 = Some(10);
    assert!(c.validate().is_err());
    assert_eq!(TrainConfig::new(Method::PPpr, 10, 0).initial_samples(), 10);
}

#[test]
fn method_names_parse() {
    for m in Method::ALL {
        assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
    }
    assert_eq!("P-aGPR".parse::<Method>().unwrap(), Method::PAgpr);
    assert!("gan".parse::<Method>().is_err());
}

#[test]
fn sch_initialization() {
    let p = Problem::sch();
    let mut cfg = TrainConfig::new(Method::PAgpr, 6, 1);
    cfg.n0 = Some(3);
    let model = initialize(&p, &cfg).unwrap();
    assert_eq!(model.levels().len(), 1);
    assert_abs_diff_eq!(model.l1(), 0.0, epsilon = 1e-9);
    let LevelModel::Gpr(g) = model.level(2) else { panic!("expected a GPR level") };
    assert_eq!(g.len(), 3);
    for (x, t) in g.inputs().iter().zip(g.targets()) {
        assert!(p.front_residual(&[x[0], *t]).abs() < 1e-3);
    }
}

#[test]
fn passive_shares_prefix_with_active_init() {
    let p = Problem::sph();
    let mut active = TrainConfig::new(Method::PAgpr, 8, 5);
    active.n0 = Some(4);
    let active = train_active(&p, &active).unwrap();
    let passive = train_passive_gpr(&p, &TrainConfig::new(Method::PPgpr, 8, 5)).unwrap();
    for (a, b) in active.training_sets.iter().zip(&passive.training_sets) {
        assert_eq!(a[..4], b[..4]);
    }
}

#[test]
fn active_budget_and_trace() {
    let p = Problem::sph();
    let mut cfg = TrainConfig::new(Method::PAgpr, 10, 2);
    cfg.n0 = Some(5);
    let out = train_active(&p, &cfg).unwrap();
    assert_eq!(out.trace.len(), 10);
    for (j, set) in out.training_sets.iter().enumerate() {
        assert_eq!(set.len(), 10);
        assert!(set.iter().all(|f| f.len() == j + 2));
    }
    for f in &out.training_sets[1] {
        assert!(p.front_residual(f.as_slice()).abs() < 1e-3, "{f}");
    }
    assert!(out.timing.query_overhead > 0.0);
    let mut buf = Vec::new();
    out.trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("level,iter,branch,sigma2,residual,f_query1,f_query2,iterations\n"));
    assert_eq!(text.lines().count(), 11);
}

#[test]
fn active_training_is_deterministic() {
    let p = Problem::sch();
    let cfg = TrainConfig::new(Method::PAgpr, 6, 3);
    let a = train_active(&p, &cfg).unwrap();
    let b = train_active(&p, &cfg).unwrap();
    assert_eq!(a.training_sets, b.training_sets);
    let ra: Vec<_> = a.trace.rows.iter().map(|r| (r.branch, r.sigma2.to_bits(), r.f_query.clone())).collect();
    let rb: Vec<_> = b.trace.rows.iter().map(|r| (r.branch, r.sigma2.to_bits(), r.f_query.clone())).collect();
    assert_eq!(ra, rb);
}

#[test]
fn query_between_two_points() {
    let f = build_f_matrix(&MetricVector::new(vec![0.0, 0.0]).unwrap(), &MetricVector::new(vec![1.0, 1.0]).unwrap())
        .unwrap();
    let g = GprModel::fit(vec![vec![0.0], vec![1.0]], vec![1.0, 0.0], GprHyperParams::new(1.0, 4.0).unwrap()).unwrap();
    let model = ChainedPfModel::new("ZDT1", f, vec![LevelModel::Gpr(g)], 1e-3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let q = query_max_variance(&model, 2, &QueryConfig::default(), &mut rng).unwrap();
    assert!(q.f_query[0] > 0.0 && q.f_query[0] < 1.0);
    assert!((q.f_query[0] - 0.5).abs() < 0.25);
    assert!(q.sigma2 >= model.level_variance(2, &[0.0]).unwrap());
    assert_eq!(q.f_around[1], model.level_mean(2, &q.f_query).unwrap());
    assert!(query_max_variance(&model, 3, &QueryConfig::default(), &mut rng).is_err());
}

#[test]
fn passive_poly_uses_same_data() {
    let p = Problem::zdt1();
    let g = train_passive_gpr(&p, &TrainConfig::new(Method::PPgpr, 6, 4)).unwrap();
    let q = train_passive_poly(&p, &TrainConfig::new(Method::PPpr, 6, 4)).unwrap();
    assert_eq!(g.training_sets, q.training_sets);
    assert!(matches!(q.model.level(2), LevelModel::Poly(_)));
    assert_eq!(q.timing.query_overhead, 0.0);
    assert!(train_passive_poly(&p, &TrainConfig::new(Method::PPgpr, 6, 4)).is_err());
}

#[test]
fn single_sample_levels() {
    let p = Problem::sch();
    let out = train_passive_gpr(&p, &TrainConfig::new(Method::PPgpr, 1, 0)).unwrap();
    assert_eq!(out.training_sets[0].len(), 1);
    assert!(out.model.generate(10, 0).is_ok());
}

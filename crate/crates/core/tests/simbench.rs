mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use ttreg::distributions::Nu;
use ttreg::estimators::{FitConfig, LambdaChoice, Method};
use ttreg::io::report_to_csv;
use ttreg::par::Parallelism;
use ttreg::simbench::{
    estimated_support, evaluate, generate, ree, replicate_seed, run_grid, tpr_fpr, truth, Model, Shape, SimConfig, Summary,
};

fn small(model: Model) -> SimConfig {
    let mut c = SimConfig::defaults(model);
    c.n = 40;
    c.replicates = 3;
    c
}

#[test]
fn full_sparsity_is_dense() {
    let mut c = SimConfig::defaults(Model::M1);
    c.sparsity = 1.0;
    let t = truth(&c).unwrap();
    assert!(t.support.iter().all(|s| *s));
    assert!(t.b.iter().all(|v| *v == 1.0));
}

#[test]
fn default_support_size() {
    let t = truth(&SimConfig::defaults(Model::M1)).unwrap();
    let count = t.b.iter().filter(|v| **v != 0.0).count();
    assert_eq!(count, (0.03f64 * 1024.0).round() as usize);
    assert_eq!(count, 31);
}

#[test]
fn white_normal_errors() {
    let mut c = SimConfig::defaults(Model::M1);
    c.rho = 0.0;
    c.nu = Nu::Infinite;
    c.n = 200;
    let rep = generate(&c, 0).unwrap();
    let e = rep.dataset.residuals(&rep.truth.b).unwrap();
    let mean_sq = e.data().iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
    // Centering removes one degree of freedom per cell.
    assert!((mean_sq - 199.0 / 200.0).abs() < 0.02, "{}", mean_sq);
}

#[test]
fn metric_examples() {
    let t = truth(&SimConfig::defaults(Model::M1)).unwrap();
    let b = &t.b;
    let sup = |m: &DMatrix<f64>| estimated_support(m, Model::M1);
    assert_eq!(ree(b, b).unwrap(), 0.0);
    assert_eq!(tpr_fpr(&sup(b), &t.support).unwrap(), (100.0, 0.0));
    let zero = DMatrix::zeros(1024, 1);
    assert_eq!(ree(&zero, b).unwrap(), 100.0);
    assert_eq!(tpr_fpr(&sup(&zero), &t.support).unwrap(), (0.0, 0.0));
    assert_eq!(ree(&(b * 2.0), b).unwrap(), 100.0);
    assert!(ree(b, &zero).is_err());
}

#[test]
fn other_models_generate() {
    for model in [Model::M2, Model::M3, Model::M4(Shape::Rhombus), Model::M4(Shape::Bat), Model::M4(Shape::Cross)] {
        let c = small(model);
        let rep = generate(&c, 1).unwrap();
        assert_eq!(rep.dataset.q(), model.q());
        assert_eq!(rep.truth.b.shape(), (1024, model.q()));
        assert!(rep.truth.support.iter().any(|s| *s));
        let universe = if model.fiber_selection() { 1024 } else { 1024 * model.q() };
        assert_eq!(rep.truth.support.len(), universe);
    }
    // M3's first slice is empty.
    let t = truth(&small(Model::M3)).unwrap();
    assert!(t.b.column(0).iter().all(|v| *v == 0.0));
    assert!(t.b.column(1).iter().all(|v| *v == 0.0 || *v == 0.8));
}

#[test]
fn replicates_are_independent_of_order() {
    let c = small(Model::M1);
    let a = generate(&c, 2).unwrap();
    let _ = generate(&c, 0).unwrap();
    let b = generate(&c, 2).unwrap();
    assert_eq!(a.dataset.y(), b.dataset.y());
    assert_ne!(replicate_seed(0, 1), replicate_seed(0, 2));
    assert_ne!(replicate_seed(0, 1), replicate_seed(1, 1));
}

#[test]
fn grid_is_identical_for_any_worker_count() {
    let c = small(Model::M1);
    let fc = FitConfig {
        lambda: LambdaChoice::Cv { folds: 3, seed: 0 },
        grid_len: 10,
        ..FitConfig::default()
    };
    let methods = [Method::Apl, Method::Ols, Method::Ost];
    let seq = run_grid(std::slice::from_ref(&c), &methods, &fc, Parallelism::Sequential).unwrap();
    let par = run_grid(std::slice::from_ref(&c), &methods, &fc, Parallelism::Threads(4)).unwrap();
    assert_eq!(report_to_csv(&seq).unwrap(), report_to_csv(&par).unwrap());
    let row = seq.row(&c.label(), Method::Ols).unwrap();
    assert!(row.tpr.is_none());
    assert_eq!(row.replicates, 3);
    let ost = seq.row(&c.label(), Method::Ost).unwrap();
    let one = evaluate(&c, &truth(&c).unwrap(), 0, Method::Ost, &fc).unwrap();
    assert!(ost.ree.unwrap().mean > 0.0 && one.ree > 0.0);
}

#[test]
fn single_replicate_summary() {
    let s = Summary::of(&[3.0]).unwrap();
    assert_eq!(s.mean, 3.0);
    assert!(s.se.is_none());
    assert!(Summary::of(&[]).is_none());
    let s = Summary::of(&[1.0, 3.0]).unwrap();
    assert!((s.se.unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = SimConfig::defaults(Model::M1);
    c.sparsity = 0.0;
    assert!(c.validate().is_err());
    let mut c = SimConfig::defaults(Model::M3);
    c.dims = vec![16, 16];
    assert!(truth(&c).is_err());
    let mut c = SimConfig::defaults(Model::M1);
    c.n = 1;
    assert!(generate(&c, 0).is_err());
}

proptest! {
    #[test]
    fn rates_are_percentages(est in prop::collection::vec(any::<bool>(), 1..64), seed in any::<u64>()) {
        let truth: Vec<bool> = est.iter().enumerate().map(|(i, _)| (seed >> (i % 64)) & 1 == 1).collect();
        let (tpr, fpr) = tpr_fpr(&est, &truth).unwrap();
        prop_assert!((0.0..=100.0).contains(&tpr));
        prop_assert!((0.0..=100.0).contains(&fpr));
    }

    #[test]
    fn ree_is_nonnegative(vals in prop::collection::vec(-5.0f64..5.0, 4), scale in 0.1f64..3.0) {
        let b = DMatrix::from_column_slice(4, 1, &[1.0, 0.0, -2.0, 0.5]);
        let est = DMatrix::from_column_slice(4, 1, &vals) * scale;
        prop_assert!(ree(&est, &b).unwrap() >= 0.0);
    }
}

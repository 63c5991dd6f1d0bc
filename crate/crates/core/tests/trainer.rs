use maapnn_core::autodiff::{init_network, Checkpoint, NetworkSpec, OutputActivation, ParameterVector};
use maapnn_core::loss::{LossBreakdown, LossHyper, LossMode};
use maapnn_core::problems::{builtin_problem, BuiltinId};
use maapnn_core::quadrature::gauss_legendre;
use maapnn_core::sampling::SampleCounts;
use maapnn_core::trainer::{train, write_telemetry, LossObjective, Objective, TrainConfig, TrainHooks, TrainState, TELEMETRY_HEADER};
use maapnn_core::{Error, Result};

/// `Σ (θᵢ − cᵢ)²` with `cᵢ = i/10`.
struct Quadratic;

impl Objective for Quadratic {
    fn evaluate(&mut self, _spec: &NetworkSpec, theta: &ParameterVector) -> Result<(LossBreakdown, Vec<f64>)> {
        let th = theta.as_slice();
        let g: Vec<f64> = th.iter().enumerate().map(|(i, v)| 2.0 * (v - i as f64 / 10.0)).collect();
        let total = th.iter().enumerate().map(|(i, v)| (v - i as f64 / 10.0).powi(2)).sum();
        Ok((LossBreakdown { governing: total, total, ..Default::default() }, g))
    }
}

fn small_state(seed: u64) -> TrainState {
    let spec = NetworkSpec::new(vec![2, 3, 1], OutputActivation::Identity).unwrap();
    let th = init_network(&spec, seed).unwrap();
    TrainState::new(spec, th, seed).unwrap()
}

#[test]
fn quadratic_converges() {
    let mut st = small_state(1);
    let mut cfg = TrainConfig::new(5000, 1);
    cfg.learning_rate = 1e-2;
    train(&mut Quadratic, &mut st, &cfg, &TrainHooks::default()).unwrap();
    for (i, v) in st.theta.as_slice().iter().enumerate() {
        assert!((v - i as f64 / 10.0).abs() < 1e-4, "{i}: {v}");
    }
    assert!(st.best_loss < 1e-7);
}

#[test]
fn telemetry_row_count() {
    for (steps, every) in [(10, 3), (9, 3), (1, 100), (250, 100)] {
        let mut st = small_state(0);
        let mut cfg = TrainConfig::new(steps, 0);
        cfg.log_every = every;
        let rows = train(&mut Quadratic, &mut st, &cfg, &TrainHooks::default()).unwrap();
        assert_eq!(rows.len(), steps.div_ceil(every));
        assert_eq!(st.step, steps as u64);
    }
}

#[test]
fn zero_steps_returns_initial_parameters() {
    let mut st = small_state(3);
    let before = st.theta.clone();
    let rows = train(&mut Quadratic, &mut st, &TrainConfig::new(0, 3), &TrainHooks::default()).unwrap();
    assert!(rows.is_empty());
    assert_eq!(st.theta, before);
}

fn ex411_objective() -> LossObjective {
    let p = builtin_problem(BuiltinId::Ex411);
    let counts = SampleCounts { interior: 32, boundary_per_face: 8, initial: 8, conservation: 4 };
    LossObjective::new(&p, &LossHyper::new(1.0, 1e-2, 1.0, 1.0, 0.1), LossMode::MaApnn, &gauss_legendre(8).unwrap(), counts)
        .unwrap()
}

#[test]
fn checkpoint_resume_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    let spec = NetworkSpec::new(vec![3, 6, 1], OutputActivation::ExpNegative).unwrap();
    let th = init_network(&spec, 9).unwrap();
    let mut cfg = TrainConfig::new(40, 9);
    cfg.log_every = 5;
    cfg.resample_every = Some(15);
    cfg.deterministic = true;

    let mut full = TrainState::new(spec.clone(), th.clone(), 9).unwrap();
    let rows_full = train(&mut ex411_objective(), &mut full, &cfg, &TrainHooks::default()).unwrap();

    let mut first = TrainState::new(spec, th, 9).unwrap();
    let mut half = cfg.clone();
    half.max_steps = 20;
    let hooks = TrainHooks { checkpoint_path: Some(path.clone()), progress: false };
    let mut rows = train(&mut ex411_objective(), &mut first, &half, &hooks).unwrap();
    let mut resumed = TrainState::from_checkpoint(Checkpoint::load(&path).unwrap());
    rows.extend(train(&mut ex411_objective(), &mut resumed, &cfg, &TrainHooks::default()).unwrap());

    assert_eq!(resumed.theta, full.theta);
    assert_eq!(resumed.best_theta, full.best_theta);
    assert_eq!(rows, rows_full);
    assert!(rows_full.last().unwrap().total < rows_full[0].total);

    let csv = dir.path().join("telemetry.csv");
    write_telemetry(&csv, &rows).unwrap();
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), TELEMETRY_HEADER);
    assert_eq!(text.lines().count(), rows.len() + 1);
}

struct Exploding;

impl Objective for Exploding {
    fn evaluate(&mut self, _: &NetworkSpec, theta: &ParameterVector) -> Result<(LossBreakdown, Vec<f64>)> {
        let total = if theta.as_slice()[0] > 0.0 { f64::INFINITY } else { 1.0 };
        Ok((LossBreakdown { total, ..Default::default() }, vec![-1.0; theta.len()]))
    }
}

#[test]
fn divergence_is_reported() {
    let spec = NetworkSpec::new(vec![1, 1, 1], OutputActivation::Identity).unwrap();
    let th = ParameterVector::from_flat(&spec, vec![-0.01, 0.0, 0.0, 0.0]).unwrap();
    let mut st = TrainState::new(spec, th, 0).unwrap();
    let cfg = TrainConfig::new(100, 0);
    match train(&mut Exploding, &mut st, &cfg, &TrainHooks::default()) {
        Err(Error::Diverged { step, .. }) => assert!(step > 0 && step < 100),
        other => panic!("{other:?}"),
    }
}

//! End-to-end experiments: reference generation, training, evaluation and
//! the artifacts written for each run.

mod config;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{
    builtin_experiment, EvaluationSection, ExperimentConfig, LossSection, NetworkSection, ProblemSection,
    ReferenceSource, SamplingSection, Scale,
};
pub use plot::plot_fields;

use crate::autodiff::{init_network, Checkpoint, NetworkSpec, ParameterVector};
use crate::error::{Error, Result};
use crate::loss::LossMode;
use crate::problems::{constrained_network, ProblemConfig, SourceTerm};
use crate::quadrature::{for_dimension, AngularQuadrature};
use crate::reference::{
    diffusion_fd_1d, diffusion_fd_2d, l2_relative_error, manufactured_uq_reference, sn_transport_1d, Grid1D,
    Grid2D, ReferenceField, ReferenceMeta,
};
use crate::trainer::{train, write_telemetry, LossObjective, TrainHooks, TrainState};

/// File names inside an output directory.
pub const RESULT_CSV: &str = "result.csv";
pub const ERRORS_CSV: &str = "errors.csv";
pub const TELEMETRY_CSV: &str = "telemetry.csv";
pub const PREDICTION_CSV: &str = "prediction.csv";
pub const REFERENCE_CSV: &str = "reference.csv";
pub const CONFIG_ECHO: &str = "config.echo";
pub const CHECKPOINT: &str = "model.ckpt";
pub const PLOT_SVG: &str = "plot.svg";

/// Summary of one run. Paths point into the output directory.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub problem: String,
    pub mode: LossMode,
    pub snapshots: Vec<f64>,
    /// L² relative error per snapshot; empty without a reference.
    pub errors: Vec<f64>,
    pub telemetry: Option<PathBuf>,
    pub prediction: PathBuf,
    pub result: Option<PathBuf>,
    pub errors_table: Option<PathBuf>,
    pub config_echo: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub final_loss: Option<f64>,
    pub initial_loss: Option<f64>,
}

/// Options that do not change the numbers of a run.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub progress: bool,
    pub plot: bool,
}

/// Draws of the random inputs, uniform on `[-1, 1]^q`. Prediction and
/// Monte Carlo references use the same draws.
pub fn z_draws(problem: &ProblemConfig, count: usize, seed: u64) -> Vec<Vec<f64>> {
    if problem.uq_dim == 0 {
        return vec![Vec::new()];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..problem.uq_dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect()
}

fn resolve_source(problem: &ProblemConfig, source: ReferenceSource) -> ReferenceSource {
    if source != ReferenceSource::Auto {
        return source;
    }
    if matches!(problem.source, SourceTerm::ManufacturedUq) {
        ReferenceSource::Exact
    } else if problem.dimension == 1 && problem.epsilon >= 0.1 {
        ReferenceSource::Transport
    } else if problem.epsilon < 0.1 {
        ReferenceSource::Diffusion
    } else {
        // 2D kinetic regime: no solver available.
        ReferenceSource::None
    }
}

/// Monte Carlo mean of a per-draw solver over `draws`.
fn mc_mean(
    draws: &[Vec<f64>],
    mut solve: impl FnMut(&[f64]) -> Result<ReferenceField>,
) -> Result<ReferenceField> {
    let mut acc = solve(&draws[0])?;
    for z in &draws[1..] {
        let r = solve(z)?;
        for (a, b) in acc.rho.iter_mut().zip(&r.rho) {
            for (u, v) in a.iter_mut().zip(b) {
                *u += v;
            }
        }
    }
    let n = draws.len() as f64;
    for snap in &mut acc.rho {
        for v in snap.iter_mut() {
            *v /= n;
        }
    }
    if draws.len() > 1 {
        acc.meta.scheme = format!("{}, mean of {} draws", acc.meta.scheme, draws.len());
    }
    Ok(acc)
}

/// The reference density of an experiment, or `None` when the configuration
/// asks for none (or none exists for the regime).
pub fn compute_reference(cfg: &ExperimentConfig) -> Result<Option<ReferenceField>> {
    let problem = cfg.problem.resolve()?;
    let e = &cfg.evaluation;
    let span = problem.time[1] - problem.time[0];
    let dt = span / e.time_steps as f64;
    let draws = z_draws(&problem, e.z_draws, cfg.training.seed);
    let field = match resolve_source(&problem, e.reference) {
        ReferenceSource::None => return Ok(None),
        ReferenceSource::File => {
            let path = e
                .reference_file
                .as_ref()
                .ok_or_else(|| Error::MissingReference("no reference_file configured".into()))?;
            ReferenceField::read(path)?
        }
        ReferenceSource::Exact => {
            if !matches!(problem.source, SourceTerm::ManufacturedUq) || problem.dimension != 1 {
                return Err(Error::MissingReference(format!(
                    "no exact solution is known for `{}`",
                    problem.name
                )));
            }
            manufactured_uq_reference(e.cells, problem.domain[0], &e.snapshots)
        }
        ReferenceSource::Transport => {
            if problem.dimension != 1 {
                return Err(Error::MissingReference(
                    "the transport reference is one-dimensional".into(),
                ));
            }
            let quad = for_dimension(1, e.angular_nodes)?;
            let grid = Grid1D { cells: e.cells, dt };
            mc_mean(&draws, |z| sn_transport_1d(&problem, grid, &quad, z, &e.snapshots))?
        }
        ReferenceSource::Diffusion => {
            if problem.dimension == 1 {
                let grid = Grid1D { cells: e.cells, dt };
                mc_mean(&draws, |z| diffusion_fd_1d(&problem, grid, z, &e.snapshots))?
            } else {
                let grid = Grid2D {
                    cells_x: e.cells,
                    cells_y: e.cells,
                    dt,
                };
                mc_mean(&draws, |z| diffusion_fd_2d(&problem, grid, z, &e.snapshots))?
            }
        }
        ReferenceSource::Auto => unreachable!("resolved above"),
    };
    for &t in &e.snapshots {
        field.snapshot_index(t)?;
    }
    Ok(Some(field))
}

/// `ρ_θ` (or its mean over `draws`) at every point of `grid`, with the Monte
/// Carlo standard error for UQ problems.
pub fn predict(
    problem: &ProblemConfig,
    spec: &NetworkSpec,
    theta: &ParameterVector,
    quad: &AngularQuadrature,
    grid: &ReferenceField,
    draws: &[Vec<f64>],
) -> Result<(ReferenceField, Option<Vec<Vec<f64>>>)> {
    let field = constrained_network(problem, theta, spec)?;
    let pts = grid.points();
    let uq = problem.uq_dim > 0;
    let mut rho = Vec::with_capacity(grid.times.len());
    let mut se = Vec::new();
    for &t in &grid.times {
        if !uq {
            let q: Vec<_> = pts.iter().map(|&r| (t, r, Vec::new())).collect();
            rho.push(field.density(quad, &q)?);
            continue;
        }
        let n = draws.len() as f64;
        let mut sum = vec![0.0; pts.len()];
        let mut sq = vec![0.0; pts.len()];
        for z in draws {
            let q: Vec<_> = pts.iter().map(|&r| (t, r, z.clone())).collect();
            for (k, v) in field.density(quad, &q)?.into_iter().enumerate() {
                sum[k] += v;
                sq[k] += v * v;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        se.push(
            mean.iter()
                .zip(&sq)
                .map(|(m, s)| {
                    let var = if n > 1.0 { ((s / n - m * m) * n / (n - 1.0)).max(0.0) } else { 0.0 };
                    (var / n).sqrt()
                })
                .collect(),
        );
        rho.push(mean);
    }
    let pred = ReferenceField {
        meta: ReferenceMeta {
            problem: problem.name.clone(),
            scheme: "network prediction".into(),
            grid: format!("{} points", pts.len()),
        },
        times: grid.times.clone(),
        x: grid.x.clone(),
        y: grid.y.clone(),
        rho,
    };
    Ok((pred, uq.then_some(se)))
}

/// Cell-center grid used when no reference supplies one.
fn default_grid(problem: &ProblemConfig, cfg: &EvaluationSection) -> ReferenceField {
    let centers = |[a, b]: [f64; 2]| -> Vec<f64> {
        let h = (b - a) / cfg.cells as f64;
        (0..cfg.cells).map(|i| a + (i as f64 + 0.5) * h).collect()
    };
    ReferenceField {
        meta: ReferenceMeta {
            problem: problem.name.clone(),
            scheme: "grid".into(),
            grid: String::new(),
        },
        times: cfg.snapshots.clone(),
        x: centers(problem.domain[0]),
        y: (problem.dimension == 2).then(|| centers(problem.domain[1])),
        rho: Vec::new(),
    }
}

/// Per-snapshot L² relative errors of `pred` against `reference`. 1D
/// references on a different grid are interpolated linearly.
pub fn compare(pred: &ReferenceField, reference: &ReferenceField) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(pred.times.len());
    for (k, &t) in pred.times.iter().enumerate() {
        let j = reference.snapshot_index(t)?;
        let r = aligned(pred, reference, j)?;
        out.push(l2_relative_error(&pred.rho[k], &r, None)?);
    }
    Ok(out)
}

/// Reference snapshot `j` on the grid of `pred`.
fn aligned(pred: &ReferenceField, reference: &ReferenceField, j: usize) -> Result<Vec<f64>> {
    if pred.x == reference.x && pred.y == reference.y {
        return Ok(reference.rho[j].clone());
    }
    if pred.dimension() == 1 && reference.dimension() == 1 {
        return Ok(pred.x.iter().map(|&x| reference.interpolate_1d(j, x)).collect());
    }
    Err(Error::Data("2D prediction and reference grids differ".into()))
}

fn write_errors(path: &Path, times: &[f64], errors: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["snapshot", "l2_rel"])?;
    for (t, e) in times.iter().zip(errors) {
        w.write_record([format!("{t}"), format!("{e:e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// `t,x[,y],rho_pred,rho_ref,abs_err[,rho_pred_se]`.
fn write_result(
    path: &Path,
    pred: &ReferenceField,
    reference: &ReferenceField,
    se: Option<&Vec<Vec<f64>>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["t", "x"];
    if pred.y.is_some() {
        head.push("y");
    }
    head.extend(["rho_pred", "rho_ref", "abs_err"]);
    if se.is_some() {
        head.push("rho_pred_se");
    }
    w.write_record(&head)?;
    let pts = pred.points();
    for (k, &t) in pred.times.iter().enumerate() {
        let r = aligned(pred, reference, reference.snapshot_index(t)?)?;
        for (i, p) in pts.iter().enumerate() {
            let v = pred.rho[k][i];
            let mut rec = vec![format!("{t}"), format!("{}", p[0])];
            if pred.y.is_some() {
                rec.push(format!("{}", p[1]));
            }
            rec.extend([format!("{v:e}"), format!("{:e}", r[i]), format!("{:e}", (v - r[i]).abs())]);
            if let Some(se) = se {
                rec.push(format!("{:e}", se[k][i]));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Evaluates `theta` and writes the prediction, and with a reference the
/// result table, error table and plot.
pub fn evaluate_into(
    cfg: &ExperimentConfig,
    theta: &ParameterVector,
    reference: Option<&ReferenceField>,
    out_dir: &Path,
    opts: RunOptions,
) -> Result<ExperimentResult> {
    let problem = cfg.problem.resolve()?;
    let spec = cfg.network_spec(&problem)?;
    let e = &cfg.evaluation;
    fs::create_dir_all(out_dir)?;
    let quad = for_dimension(problem.dimension, e.angular_nodes)?;
    let mut grid = match reference {
        Some(r) => ReferenceField {
            times: e.snapshots.clone(),
            ..r.clone()
        },
        None => default_grid(&problem, e),
    };
    grid.rho.clear();
    let draws = z_draws(&problem, e.z_draws, cfg.training.seed);
    let (pred, se) = predict(&problem, &spec, theta, &quad, &grid, &draws)?;
    let prediction = out_dir.join(PREDICTION_CSV);
    pred.write(&prediction)?;
    let config_echo = out_dir.join(CONFIG_ECHO);
    fs::write(&config_echo, cfg.to_toml()?)?;

    let mut res = ExperimentResult {
        problem: problem.name.clone(),
        mode: cfg.loss.mode,
        snapshots: e.snapshots.clone(),
        errors: Vec::new(),
        telemetry: None,
        prediction,
        result: None,
        errors_table: None,
        config_echo,
        checkpoint: None,
        plot: None,
        final_loss: None,
        initial_loss: None,
    };
    if let Some(r) = reference {
        res.errors = compare(&pred, r)?;
        let result = out_dir.join(RESULT_CSV);
        write_result(&result, &pred, r, se.as_ref())?;
        let table = out_dir.join(ERRORS_CSV);
        write_errors(&table, &e.snapshots, &res.errors)?;
        res.result = Some(result);
        res.errors_table = Some(table);
    }
    if opts.plot {
        let path = out_dir.join(PLOT_SVG);
        plot_fields(&pred, reference, &path)?;
        res.plot = Some(path);
    }
    Ok(res)
}

/// Trains the configured network, then evaluates the best parameters seen.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, opts: RunOptions) -> Result<ExperimentResult> {
    cfg.validate()?;
    let problem = cfg.problem.resolve()?;
    let spec = cfg.network_spec(&problem)?;
    fs::create_dir_all(out_dir)?;
    // Fail on a missing reference before spending time on training.
    let reference = compute_reference(cfg)?;
    if let Some(r) = &reference {
        r.write(&out_dir.join(REFERENCE_CSV))?;
    }
    let quad = for_dimension(problem.dimension, cfg.sampling.angular_nodes)?;
    let mut objective = LossObjective::new(&problem, &cfg.loss.hyper, cfg.loss.mode, &quad, cfg.sampling.counts)?;
    let theta = init_network(&spec, cfg.training.seed)?;
    let mut state = TrainState::new(spec, theta, cfg.training.seed)?;
    let checkpoint = out_dir.join(CHECKPOINT);
    let hooks = TrainHooks {
        checkpoint_path: Some(checkpoint.clone()),
        progress: opts.progress,
    };
    let rows = train(&mut objective, &mut state, &cfg.training, &hooks)?;
    let telemetry = out_dir.join(TELEMETRY_CSV);
    write_telemetry(&telemetry, &rows)?;
    let theta = if state.best_loss.is_finite() { &state.best_theta } else { &state.theta };
    let mut res = evaluate_into(cfg, theta, reference.as_ref(), out_dir, opts)?;
    res.telemetry = Some(telemetry);
    res.checkpoint = Some(checkpoint);
    res.initial_loss = rows.first().map(|r| r.total);
    res.final_loss = state.best_loss.is_finite().then_some(state.best_loss);
    Ok(res)
}

/// Evaluates a saved checkpoint under `cfg`.
pub fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    out_dir: &Path,
    opts: RunOptions,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    let problem = cfg.problem.resolve()?;
    let spec = cfg.network_spec(&problem)?;
    let c = Checkpoint::load(checkpoint)?;
    if c.spec != spec {
        return Err(Error::Checkpoint(format!(
            "checkpoint network {:?} does not match the configured {:?}",
            c.spec.layer_widths, spec.layer_widths
        )));
    }
    let reference = compute_reference(cfg)?;
    let theta = if c.best_loss.is_finite() { &c.best_theta } else { &c.theta };
    evaluate_into(cfg, theta, reference.as_ref(), out_dir, opts)
}

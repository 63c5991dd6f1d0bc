//! Adam training loop with telemetry and checkpoints.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Checkpoint, NetworkSpec, ParameterVector, RngState};
use crate::error::{Error, Result};
use crate::loss::{EmpiricalLoss, LossBreakdown, LossHyper, LossMode};
use crate::problems::ProblemConfig;
use crate::quadrature::AngularQuadrature;
use crate::sampling::{sample_domain, SampleCounts};

/// Multiplies the learning rate by `factor` every `every` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDecay {
    pub every: usize,
    pub factor: f64,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_b1() -> f64 {
    0.9
}
fn default_b2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_log_every() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub max_steps: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_b1")]
    pub adam_beta1: f64,
    #[serde(default = "default_b2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_epsilon: f64,
    /// Redraw the collocation points every this many steps; never if unset.
    #[serde(default)]
    pub resample_every: Option<usize>,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    /// Report zero elapsed time so that every output is reproducible.
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lr_decay: Option<StepDecay>,
}

impl TrainConfig {
    pub fn new(max_steps: usize, seed: u64) -> Self {
        TrainConfig {
            max_steps,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            resample_every: None,
            log_every: 100,
            checkpoint_every: None,
            deterministic: false,
            seed,
            lr_decay: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !unit(self.adam_beta1) || !unit(self.adam_beta2) {
            return Err(Error::Config("Adam moment rates must lie in (0, 1)".into()));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::Config("adam_epsilon must be positive".into()));
        }
        if self.log_every == 0 || self.resample_every == Some(0) || self.checkpoint_every == Some(0) {
            return Err(Error::Config("log, resample and checkpoint intervals must be positive".into()));
        }
        if let Some(d) = self.lr_decay {
            if d.every == 0 || !(d.factor > 0.0) {
                return Err(Error::Config("lr_decay needs a positive interval and factor".into()));
            }
        }
        Ok(())
    }

    fn rate_at(&self, step: u64) -> f64 {
        match self.lr_decay {
            Some(d) => self.learning_rate * d.factor.powi((step / d.every as u64) as i32),
            None => self.learning_rate,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub spec: NetworkSpec,
    pub theta: ParameterVector,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Completed optimizer steps.
    pub step: u64,
    pub best_loss: f64,
    pub best_theta: ParameterVector,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(spec: NetworkSpec, theta: ParameterVector, seed: u64) -> Result<Self> {
        if !theta.matches(&spec) {
            return Err(Error::InvalidSpec("parameter vector does not match the network".into()));
        }
        let n = theta.len();
        Ok(TrainState {
            spec,
            best_theta: theta.clone(),
            theta,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            best_loss: f64::INFINITY,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            spec: self.spec.clone(),
            theta: self.theta.clone(),
            step: self.step,
            rng: RngState {
                seed: self.rng.get_seed(),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos(),
            },
            adam_m: self.m.clone(),
            adam_v: self.v.clone(),
            best_loss: self.best_loss,
            best_theta: self.best_theta.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Self {
        let mut rng = ChaCha8Rng::from_seed(c.rng.seed);
        rng.set_stream(c.rng.stream);
        rng.set_word_pos(c.rng.word_pos);
        TrainState {
            spec: c.spec,
            theta: c.theta,
            m: c.adam_m,
            v: c.adam_v,
            step: c.step,
            best_loss: c.best_loss,
            best_theta: c.best_theta,
            rng,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(state: &mut TrainState, gradient: &[f64], config: &TrainConfig) -> Result<()> {
    if gradient.len() != state.theta.len() {
        return Err(Error::DimensionMismatch {
            expected: state.theta.len(),
            got: gradient.len(),
        });
    }
    if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::Diverged {
            step: state.step,
            reason: format!("gradient entry {i} is {}", gradient[i]),
        });
    }
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let t = (state.step + 1) as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = config.rate_at(state.step);
    let theta = state.theta.as_mut_slice();
    for i in 0..theta.len() {
        let g = gradient[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        theta[i] -= lr * mhat / (vhat.sqrt() + config.adam_epsilon);
    }
    state.step += 1;
    Ok(())
}

/// Something the trainer can minimize.
pub trait Objective {
    /// Loss parts and gradient of the total at `theta`.
    fn evaluate(&mut self, spec: &NetworkSpec, theta: &ParameterVector) -> Result<(LossBreakdown, Vec<f64>)>;

    /// Switches to the `round`-th collocation set (round 0 is the initial
    /// one).
    fn resample(&mut self, _round: u64) -> Result<()> {
        Ok(())
    }

    /// `(min, max)` of the AP weight on the current samples.
    fn lambda_range(&self) -> (f64, f64) {
        (f64::NAN, f64::NAN)
    }
}

/// The empirical loss of a problem on Sobol collocation sets.
pub struct LossObjective {
    problem: ProblemConfig,
    hyper: LossHyper,
    mode: LossMode,
    quad: AngularQuadrature,
    counts: SampleCounts,
    loss: EmpiricalLoss,
    round: u64,
}

impl LossObjective {
    pub fn new(
        problem: &ProblemConfig,
        hyper: &LossHyper,
        mode: LossMode,
        quad: &AngularQuadrature,
        counts: SampleCounts,
    ) -> Result<Self> {
        let samples = sample_domain(problem, counts, quad, 0)?;
        let loss = EmpiricalLoss::new(problem, hyper, mode, quad, &samples)?;
        Ok(LossObjective {
            problem: problem.clone(),
            hyper: hyper.clone(),
            mode,
            quad: quad.clone(),
            counts,
            loss,
            round: 0,
        })
    }

    pub fn loss(&self) -> &EmpiricalLoss {
        &self.loss
    }
}

impl Objective for LossObjective {
    fn evaluate(&mut self, spec: &NetworkSpec, theta: &ParameterVector) -> Result<(LossBreakdown, Vec<f64>)> {
        self.loss.evaluate_with_gradient(spec, theta)
    }

    fn resample(&mut self, round: u64) -> Result<()> {
        if round == self.round {
            return Ok(());
        }
        // Consecutive rounds use disjoint stretches of each Sobol sequence.
        let largest = self
            .counts
            .interior
            .max(self.counts.boundary_per_face)
            .max(self.counts.initial)
            .max(self.counts.conservation) as u64;
        let samples = sample_domain(&self.problem, self.counts, &self.quad, round * largest)?;
        self.loss = EmpiricalLoss::new(&self.problem, &self.hyper, self.mode, &self.quad, &samples)?;
        self.round = round;
        Ok(())
    }

    fn lambda_range(&self) -> (f64, f64) {
        self.loss.lambda_range()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub step: u64,
    pub governing: f64,
    pub macro_aux: f64,
    pub boundary: f64,
    pub initial: f64,
    pub conservation: f64,
    pub total: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub seconds: f64,
}

pub const TELEMETRY_HEADER: &str =
    "step,governing,macro_aux,boundary,initial,conservation,total,lambda_min,lambda_max,seconds";

pub fn write_telemetry(path: &Path, rows: &[TelemetryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TELEMETRY_HEADER.split(','))?;
    for r in rows {
        w.write_record(&[
            r.step.to_string(),
            format!("{:e}", r.governing),
            format!("{:e}", r.macro_aux),
            format!("{:e}", r.boundary),
            format!("{:e}", r.initial),
            format!("{:e}", r.conservation),
            format!("{:e}", r.total),
            format!("{:e}", r.lambda_min),
            format!("{:e}", r.lambda_max),
            format!("{:.3}", r.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Where and how often to write checkpoints during [`train`].
#[derive(Clone, Debug, Default)]
pub struct TrainHooks {
    pub checkpoint_path: Option<PathBuf>,
    /// Print a progress line to stderr at every log step.
    pub progress: bool,
}

/// Runs Adam until `config.max_steps` total steps have been taken. Returns
/// the telemetry logged during this call; the state keeps the best
/// parameters seen.
pub fn train<O: Objective>(
    objective: &mut O,
    state: &mut TrainState,
    config: &TrainConfig,
    hooks: &TrainHooks,
) -> Result<Vec<TelemetryRow>> {
    config.validate()?;
    let clock = Instant::now();
    let mut rows = Vec::new();
    if let Some(every) = config.resample_every {
        objective.resample(state.step / every as u64)?;
    }
    while state.step < config.max_steps as u64 {
        let step = state.step;
        if let Some(every) = config.resample_every {
            if step > 0 && step % every as u64 == 0 {
                objective.resample(step / every as u64)?;
            }
        }
        let (parts, grad) = match objective.evaluate(&state.spec, &state.theta) {
            Ok(v) => v,
            Err(Error::NonFinite(msg)) => return Err(Error::Diverged { step, reason: msg }),
            Err(e) => return Err(e),
        };
        if !parts.total.is_finite() {
            return Err(Error::Diverged {
                step,
                reason: format!("loss is {}", parts.total),
            });
        }
        if parts.total < state.best_loss {
            state.best_loss = parts.total;
            state.best_theta = state.theta.clone();
        }
        if step % config.log_every as u64 == 0 {
            let (lmin, lmax) = objective.lambda_range();
            let seconds = if config.deterministic { 0.0 } else { clock.elapsed().as_secs_f64() };
            rows.push(TelemetryRow {
                step,
                governing: parts.governing,
                macro_aux: parts.macro_aux,
                boundary: parts.boundary,
                initial: parts.initial,
                conservation: parts.conservation,
                total: parts.total,
                lambda_min: lmin,
                lambda_max: lmax,
                seconds,
            });
            log::info!("step {step:>6}  loss {:.4e}", parts.total);
            if hooks.progress {
                let mut err = std::io::stderr().lock();
                let _ = writeln!(err, "step {step:>6}  loss {:.4e}  ({seconds:.1} s)", parts.total);
            }
        }
        adam_step(state, &grad, config)?;
        if let (Some(every), Some(path)) = (config.checkpoint_every, &hooks.checkpoint_path) {
            if state.step % every as u64 == 0 {
                state.to_checkpoint().save(path)?;
            }
        }
    }
    if let Some(path) = &hooks.checkpoint_path {
        state.to_checkpoint().save(path)?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::OutputActivation;

    fn tiny_state() -> TrainState {
        let spec = NetworkSpec::new(vec![1, 1, 1], OutputActivation::Identity).unwrap();
        let theta = ParameterVector::from_flat(&spec, vec![0.5, -0.25, 1.0, 2.0]).unwrap();
        TrainState::new(spec, theta, 0).unwrap()
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut s = tiny_state();
        s.m = vec![0.1; 4];
        s.v = vec![0.2; 4];
        let before = s.theta.clone();
        let mut cfg = TrainConfig::new(1, 0);
        cfg.learning_rate = 1e-3;
        // Moments decay but the update uses them, so only check with zero
        // moments for an unchanged θ.
        adam_step(&mut s, &[0.0; 4], &cfg).unwrap();
        assert!(s.m.iter().all(|&m| (m - 0.09).abs() < 1e-15));
        let mut z = tiny_state();
        adam_step(&mut z, &[0.0; 4], &cfg).unwrap();
        assert_eq!(z.theta, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = tiny_state();
        let before = s.theta.clone();
        let cfg = TrainConfig::new(1, 0);
        let g = [3.0, -0.5, 1e-3, 0.0];
        adam_step(&mut s, &g, &cfg).unwrap();
        for i in 0..4 {
            let d = s.theta.as_slice()[i] - before.as_slice()[i];
            let want = if g[i] == 0.0 {
                0.0
            } else {
                -1e-3 * g[i] / (g[i].abs() + 1e-8)
            };
            assert!((d - want).abs() < 1e-15, "{i}: {d} vs {want}");
        }
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut s = tiny_state();
        let cfg = TrainConfig::new(1, 0);
        let r = adam_step(&mut s, &[f64::NAN, 0.0, 0.0, 0.0], &cfg);
        assert!(matches!(r, Err(Error::Diverged { .. })));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::new(10, 0);
        assert!(c.validate().is_ok());
        c.adam_beta1 = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::new(10, 0);
        c.log_every = 0;
        assert!(c.validate().is_err());
    }
}

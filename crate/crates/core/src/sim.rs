//! Exponential-Euler time stepping of the stochastic neural field in mild form.
//!
//! With `A = -I` the semigroup is `exp(-t)`, so one step reads
//! `u <- e^{-dt} u + (1 - e^{-dt}) J * F(u) + eps e^{-dt} B(u) dW`,
//! with `B` evaluated at the left endpoint.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::noise::{NoiseModel, WienerIncrement};
use crate::ring::{ManifoldAtlas, RingModel, RingModelParams};
use crate::variational::FastPhase;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub epsilon: f64,
    #[serde(default = "one")]
    pub save_stride: usize,
    /// `u_0 = phi_{initial_phase}`.
    #[serde(default)]
    pub initial_phase: f64,
    /// Selects the noise stream together with the noise seed.
    #[serde(default)]
    pub trajectory: u64,
    /// Stop at the first time `||u - phi_{Phi(u)}||` exceeds this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_threshold: Option<f64>,
}

fn one() -> usize {
    1
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            t_end: 1.0,
            epsilon: 0.0,
            save_stride: 1,
            initial_phase: 0.0,
            trajectory: 0,
            exit_threshold: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(Error::InvalidParameter(format!("dt must lie in (0, 0.1], got {}", self.dt)));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(Error::InvalidParameter(format!("t_end must be >= dt, got {}", self.t_end)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.save_stride == 0 {
            return Err(Error::InvalidParameter("save_stride must be positive".into()));
        }
        if !self.initial_phase.is_finite() {
            return Err(Error::InvalidParameter("initial_phase must be finite".into()));
        }
        if let Some(k) = self.exit_threshold {
            if !(k > 0.0) {
                return Err(Error::InvalidParameter("exit_threshold must be positive".into()));
            }
        }
        Ok(())
    }

    /// Number of time steps, rounded to the nearest integer.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exit {
    pub time: f64,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    pub exit_flag: Option<Exit>,
    /// Configuration and noise seed used, so the run can be replayed.
    pub config: SimConfig,
    pub noise_seed: u64,
}

/// What an observer sees on each step.
pub struct StepEvent<'a> {
    pub step: usize,
    /// Time at the left endpoint.
    pub t: f64,
    pub u: &'a Field,
    pub incr: &'a WienerIncrement,
    /// `B(u) dW` (without the `eps e^{-dt}` factor).
    pub noise_field: &'a Field,
    pub next: &'a Field,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Stepper for one model/noise pair.
#[derive(Clone, Debug)]
pub struct Simulator {
    model: RingModel,
    noise: NoiseModel,
}

impl Simulator {
    pub fn new(params: &RingModelParams, noise: &NoiseModel) -> Result<Simulator> {
        Ok(Simulator { model: RingModel::new(params, noise.grid())?, noise: noise.clone() })
    }

    pub fn model(&self) -> &RingModel {
        &self.model
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.model.grid()
    }

    /// One step given the increment and the precomputed `B(u) dW`.
    fn advance(&self, u: &Field, dt: f64, epsilon: f64, noise_field: &Field, step: usize) -> Result<Field> {
        let decay = (-dt).exp();
        let rate = self.model.nonlinear_part(u);
        let s = epsilon * decay;
        let vals: Vec<f64> = u
            .values()
            .iter()
            .zip(rate.values())
            .zip(noise_field.values())
            .map(|((&x, &r), &z)| decay * x + (1.0 - decay) * r + s * z)
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step });
        }
        Ok(Field::raw(self.grid(), vals))
    }

    pub fn step(&self, u: &Field, dt: f64, epsilon: f64, incr: &WienerIncrement) -> Result<Field> {
        let nf = self.noise.apply(u, &incr.coeffs);
        self.advance(u, dt, epsilon, &nf, 0)
    }

    /// Runs from `u0`, calling `observe` after each step.
    pub fn run_with<F>(&self, config: &SimConfig, u0: Field, mut observe: F) -> Result<Field>
    where
        F: FnMut(&StepEvent<'_>) -> Control,
    {
        config.validate()?;
        let dim = self.noise.dim();
        let mut incr = WienerIncrement::zeros(dim);
        let mut u = u0;
        for step in 0..config.n_steps() {
            let nf = if config.epsilon > 0.0 {
                WienerIncrement::draw_into(
                    self.noise.seed(),
                    config.trajectory,
                    step as u64,
                    config.dt,
                    &mut incr.coeffs,
                );
                self.noise.apply(&u, &incr.coeffs)
            } else {
                Field::zeros(self.grid())
            };
            let next = self.advance(&u, config.dt, config.epsilon, &nf, step)?;
            let ev = StepEvent {
                step,
                t: step as f64 * config.dt,
                u: &u,
                incr: &incr,
                noise_field: &nf,
                next: &next,
            };
            let ctl = observe(&ev);
            u = next;
            if ctl == Control::Stop {
                break;
            }
        }
        Ok(u)
    }

    /// Full run with snapshots every `save_stride` steps.
    pub fn run(&self, config: &SimConfig, atlas: &ManifoldAtlas) -> Result<Trajectory> {
        config.validate()?;
        let u0 = atlas.at(config.initial_phase).phi;
        let mut times = vec![0.0];
        let mut states = vec![u0.clone()];
        let mut exit_flag = None;
        let mut tracker = config.exit_threshold.map(|k| (FastPhase::new(atlas), config.initial_phase, k));
        self.run_with(config, u0, |ev| {
            let t = (ev.step + 1) as f64 * config.dt;
            if (ev.step + 1) % config.save_stride == 0 {
                times.push(t);
                states.push(ev.next.clone());
            }
            if let Some((fp, beta, kappa)) = tracker.as_mut() {
                match fp.newton(ev.next, *beta) {
                    Ok(b) => {
                        *beta = b;
                        let amp = fp.amplitude(ev.next, b);
                        if amp > *kappa {
                            exit_flag = Some(Exit { time: t, reason: format!("amplitude {amp:.4} > {kappa}") });
                            return Control::Stop;
                        }
                    }
                    Err(e) => {
                        exit_flag = Some(Exit { time: t, reason: e.to_string() });
                        return Control::Stop;
                    }
                }
            }
            Control::Continue
        })?;
        Ok(Trajectory { times, states, exit_flag, config: config.clone(), noise_seed: self.noise.seed() })
    }
}

/// One exponential-Euler step.
pub fn step(
    u: &Field,
    dt: f64,
    epsilon: f64,
    noise: &NoiseModel,
    params: &RingModelParams,
    incr: &WienerIncrement,
) -> Result<Field> {
    Simulator::new(params, noise)?.step(u, dt, epsilon, incr)
}

/// Simulates from `phi_{initial_phase}` and records snapshots.
pub fn run(
    config: &SimConfig,
    noise: &NoiseModel,
    params: &RingModelParams,
    atlas: &ManifoldAtlas,
) -> Result<Trajectory> {
    Simulator::new(params, noise)?.run(config, atlas)
}

/// Classical RK4 on the deterministic flow `du/dt = -u + J * F(u)`.
pub fn rk4_flow(model: &RingModel, u: &Field, dt: f64, steps: usize) -> Field {
    let mut u = u.clone();
    for _ in 0..steps {
        u = rk4_step(model, &u, dt);
    }
    u
}

pub fn rk4_step(model: &RingModel, u: &Field, dt: f64) -> Field {
    let k1 = model.drift(u);
    let k2 = model.drift(&u.axpy(0.5 * dt, &k1));
    let k3 = model.drift(&u.axpy(0.5 * dt, &k2));
    let k4 = model.drift(&u.axpy(dt, &k3));
    let vals = (0..u.values().len())
        .map(|j| {
            u.values()[j]
                + dt / 6.0
                    * (k1.values()[j] + 2.0 * k2.values()[j] + 2.0 * k3.values()[j] + k4.values()[j])
        })
        .collect();
    Field::raw(u.grid(), vals)
}

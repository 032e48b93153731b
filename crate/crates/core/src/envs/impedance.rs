use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_common, clamp_action, Env, EnvSpec, StepResult};
use crate::error::{Error, Result};

const AXES: usize = 2;
pub const MAX_STIFFNESS: f64 = 100.0;
pub const MAX_DAMPING: f64 = 10.0;

/// Sinusoidal reference parameters, one entry per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPhase {
    pub amplitude: [f64; AXES],
    pub omega: [f64; AXES],
    /// `+1.0` or `-1.0`.
    pub sign: [f64; AXES],
}

impl TrajectoryPhase {
    pub fn constant() -> Self {
        Self {
            amplitude: [0.0; AXES],
            omega: [0.0; AXES],
            sign: [1.0; AXES],
        }
    }

    pub fn target(&self, t: f64, origin: &[f64; AXES]) -> [f64; AXES] {
        std::array::from_fn(|k| {
            impedance_target(t, self.amplitude[k], self.omega[k], self.sign[k], origin[k])
        })
    }

    pub fn target_velocity(&self, t: f64) -> [f64; AXES] {
        std::array::from_fn(|k| {
            let w = self.omega[k] * PI;
            self.sign[k] * self.amplitude[k] * w * (w * t).cos()
        })
    }
}

/// `origin + sign * amplitude * sin(omega * pi * t)`.
pub fn impedance_target(t: f64, amplitude: f64, omega: f64, sign: f64, origin: f64) -> f64 {
    origin + sign * amplitude * (omega * PI * t).sin()
}

/// `exp(-sum |tau|) - 1{error > 0.05}`, in `(-1, 1]`.
pub fn impedance_reward(efforts: &[f64], tracking_error: f64) -> f64 {
    let effort: f64 = efforts.iter().map(|t| t.abs()).sum();
    let penalty = if tracking_error > 0.05 { 1.0 } else { 0.0 };
    (-effort).exp() - penalty
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceState {
    pub position: [f64; AXES],
    pub velocity: [f64; AXES],
    pub target: [f64; AXES],
    pub effort: [f64; AXES],
    pub stiffness: [f64; AXES],
    pub damping: [f64; AXES],
    pub phase: TrajectoryPhase,
}

/// Action layout `[dkp_x, dkp_y, dkd_x, dkd_y]`; each increment is 5 % of the
/// gain's maximum per unit action, then the gain is clamped into its box.
pub fn impedance_apply_action(state: &mut ImpedanceState, action: &[f64]) -> Result<()> {
    if action.len() != 2 * AXES {
        return Err(Error::Config(format!(
            "impedance action has {} entries, expected {}",
            action.len(),
            2 * AXES
        )));
    }
    for k in 0..AXES {
        state.stiffness[k] =
            (state.stiffness[k] + 0.05 * MAX_STIFFNESS * action[k]).clamp(0.0, MAX_STIFFNESS);
        state.damping[k] =
            (state.damping[k] + 0.05 * MAX_DAMPING * action[AXES + k]).clamp(0.0, MAX_DAMPING);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceParams {
    pub episode_length: usize,
    pub dt: f64,
    pub mass: f64,
    pub substeps: usize,
    pub origin: [f64; AXES],
    pub amplitude_range: (f64, f64),
    pub omega_range: (f64, f64),
    pub init_stiffness: f64,
    pub init_damping: f64,
    /// Scales for the observation; they do not affect dynamics.
    pub position_scale: f64,
    pub velocity_scale: f64,
}

impl Default for ImpedanceParams {
    fn default() -> Self {
        Self {
            episode_length: 500,
            dt: 0.02,
            mass: 1.0,
            substeps: 10,
            origin: [0.0; AXES],
            amplitude_range: (0.05, 0.15),
            omega_range: (0.1, 0.9),
            init_stiffness: 50.0,
            init_damping: 5.0,
            position_scale: 0.15,
            velocity_scale: 0.5,
        }
    }
}

/// Two-axis unit mass driven by a variable spring-damper toward a sinusoidal
/// target; the agent adjusts the gains.
///
/// Observation (14): position and velocity relative to the origin, target
/// position and velocity, tracking error (all scaled), stiffness / 100,
/// damping / 10.
#[derive(Debug, Clone)]
pub struct ImpedanceTrack {
    params: ImpedanceParams,
    spec: EnvSpec,
    state: ImpedanceState,
    t: usize,
    clamped: u64,
}

impl ImpedanceTrack {
    pub fn new(params: ImpedanceParams) -> Result<Self> {
        check_common(params.episode_length, params.dt)?;
        let (a0, a1) = params.amplitude_range;
        let (w0, w1) = params.omega_range;
        if !(0.0 <= a0 && a0 <= a1 && 0.0 <= w0 && w0 <= w1) || !(params.mass > 0.0) {
            return Err(Error::Config(
                "invalid impedance trajectory ranges or mass".into(),
            ));
        }
        let spec = EnvSpec {
            name: "impedance_track".into(),
            state_dim: 14,
            action_dim: 2 * AXES,
            episode_length: params.episode_length,
            dt: params.dt,
        };
        let state = ImpedanceState {
            position: params.origin,
            velocity: [0.0; AXES],
            target: params.origin,
            effort: [0.0; AXES],
            stiffness: [params.init_stiffness.clamp(0.0, MAX_STIFFNESS); AXES],
            damping: [params.init_damping.clamp(0.0, MAX_DAMPING); AXES],
            phase: TrajectoryPhase::constant(),
        };
        Ok(Self {
            params: ImpedanceParams {
                substeps: params.substeps.max(1),
                ..params
            },
            spec,
            state,
            t: 0,
            clamped: 0,
        })
    }

    pub fn state(&self) -> &ImpedanceState {
        &self.state
    }

    /// Direct access for scripted scenarios; gains are re-clamped on the next step.
    pub fn state_mut(&mut self) -> &mut ImpedanceState {
        &mut self.state
    }

    pub fn observe(&self) -> Vec<f64> {
        let p = &self.params;
        let s = &self.state;
        let time = self.t as f64 * p.dt;
        let tv = s.phase.target_velocity(time);
        let mut out = Vec::with_capacity(14);
        for k in 0..AXES {
            out.push((s.position[k] - p.origin[k]) / p.position_scale);
        }
        for k in 0..AXES {
            out.push(s.velocity[k] / p.velocity_scale);
        }
        for k in 0..AXES {
            out.push((s.target[k] - p.origin[k]) / p.position_scale);
        }
        for k in 0..AXES {
            out.push(tv[k] / p.velocity_scale);
        }
        for k in 0..AXES {
            out.push((s.target[k] - s.position[k]) / p.position_scale);
        }
        for k in 0..AXES {
            out.push(s.stiffness[k] / MAX_STIFFNESS);
        }
        for k in 0..AXES {
            out.push(s.damping[k] / MAX_DAMPING);
        }
        out
    }

    fn tracking_error(&self) -> f64 {
        let s = &self.state;
        (0..AXES)
            .map(|k| (s.target[k] - s.position[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

impl Env for ImpedanceTrack {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = &self.params;
        let mut phase = TrajectoryPhase::constant();
        for k in 0..AXES {
            phase.amplitude[k] = rng.gen_range(p.amplitude_range.0..=p.amplitude_range.1);
            phase.omega[k] = rng.gen_range(p.omega_range.0..=p.omega_range.1);
            phase.sign[k] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        self.state = ImpedanceState {
            position: p.origin,
            velocity: [0.0; AXES],
            target: phase.target(0.0, &p.origin),
            effort: [0.0; AXES],
            stiffness: [p.init_stiffness.clamp(0.0, MAX_STIFFNESS); AXES],
            damping: [p.init_damping.clamp(0.0, MAX_DAMPING); AXES],
            phase,
        };
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let (a, clamped) = clamp_action(action, 2 * AXES)?;
        self.clamped += clamped;
        impedance_apply_action(&mut self.state, &a)?;
        let p = &self.params;
        let s = &mut self.state;
        let h = p.dt / p.substeps as f64;
        let t0 = self.t as f64 * p.dt;
        for i in 0..p.substeps {
            let time = t0 + i as f64 * h;
            let tar = s.phase.target(time, &p.origin);
            let tv = s.phase.target_velocity(time);
            for k in 0..AXES {
                let tau = s.stiffness[k] * (tar[k] - s.position[k])
                    + s.damping[k] * (tv[k] - s.velocity[k]);
                s.velocity[k] += h * tau / p.mass;
                s.position[k] += h * s.velocity[k];
            }
        }
        self.t += 1;
        let time = self.t as f64 * p.dt;
        s.target = s.phase.target(time, &p.origin);
        let tv = s.phase.target_velocity(time);
        for k in 0..AXES {
            s.effort[k] = s.stiffness[k] * (s.target[k] - s.position[k])
                + s.damping[k] * (tv[k] - s.velocity[k]);
        }
        let effort = s.effort;
        let reward = impedance_reward(&effort, self.tracking_error());
        Ok(StepResult {
            next_state: self.observe(),
            reward,
            done: false,
            truncated: self.t >= self.params.episode_length,
        })
    }

    fn clamped_actions(&self) -> u64 {
        self.clamped
    }
}

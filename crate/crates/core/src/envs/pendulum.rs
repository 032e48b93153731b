use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_common, clamp_action, Env, EnvSpec, StepResult};
use crate::error::Result;

/// Torque-limited swing-up of a uniform rod; `theta = 0` is upright.
///
/// State `(cos theta, sin theta, theta_dot)`; reward
/// `-(theta^2 + 0.1 theta_dot^2 + 0.001 torque^2)` with `theta` wrapped to
/// `[-pi, pi)`. Each control period is split into `substeps` semi-implicit
/// Euler steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    pub episode_length: usize,
    pub dt: f64,
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    /// Viscous damping coefficient (N m s).
    pub damping: f64,
    pub substeps: usize,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            episode_length: 200,
            dt: 0.05,
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            max_torque: 2.0,
            max_speed: 8.0,
            damping: 0.0,
            substeps: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    params: PendulumParams,
    spec: EnvSpec,
    theta: f64,
    theta_dot: f64,
    t: usize,
    clamped: u64,
}

fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Result<Self> {
        check_common(params.episode_length, params.dt)?;
        let spec = EnvSpec {
            name: "pendulum".into(),
            state_dim: 3,
            action_dim: 1,
            episode_length: params.episode_length,
            dt: params.dt,
        };
        Ok(Self {
            params: PendulumParams {
                substeps: params.substeps.max(1),
                ..params
            },
            spec,
            theta: PI,
            theta_dot: 0.0,
            t: 0,
            clamped: 0,
        })
    }

    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
    }

    pub fn angle(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    /// Kinetic plus potential energy of the rod about its pivot.
    pub fn energy(&self) -> f64 {
        let p = &self.params;
        let inertia = p.mass * p.length * p.length / 3.0;
        0.5 * inertia * self.theta_dot * self.theta_dot
            + p.mass * p.gravity * 0.5 * p.length * self.theta.cos()
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

impl Env for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.theta = rng.gen_range(-PI..PI);
        self.theta_dot = rng.gen_range(-1.0..=1.0);
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let (a, clamped) = clamp_action(action, 1)?;
        self.clamped += clamped;
        let p = &self.params;
        let torque = p.max_torque * a[0];
        let reward = -(wrap_angle(self.theta).powi(2)
            + 0.1 * self.theta_dot * self.theta_dot
            + 0.001 * torque * torque);
        let inertia = p.mass * p.length * p.length / 3.0;
        let h = p.dt / p.substeps as f64;
        for _ in 0..p.substeps {
            let acc = (p.mass * p.gravity * 0.5 * p.length * self.theta.sin() + torque
                - p.damping * self.theta_dot)
                / inertia;
            self.theta_dot = (self.theta_dot + h * acc).clamp(-p.max_speed, p.max_speed);
            self.theta += h * self.theta_dot;
        }
        self.t += 1;
        Ok(StepResult {
            next_state: self.observe(),
            reward,
            done: false,
            truncated: self.t >= p.episode_length,
        })
    }

    fn clamped_actions(&self) -> u64 {
        self.clamped
    }
}

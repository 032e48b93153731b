use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_common, clamp_action, Env, EnvSpec, StepResult};
use crate::error::Result;

/// Planar unit mass pushed by a bounded force toward a fixed goal.
///
/// State `(px, py, vx, vy)`; reward `-|p - goal|^2 - 0.01 |a|^2`. Initial
/// position is uniform in `[-init_range, init_range]^2`, initial velocity zero.
/// Viscous damping keeps random exploration from drifting off, and walls at
/// `+-wall` stop the mass (the normal velocity component is zeroed).
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassParams {
    pub episode_length: usize,
    pub dt: f64,
    pub mass: f64,
    /// Force in newtons at `|a| = 1`.
    pub max_force: f64,
    pub goal: [f64; 2],
    pub init_range: f64,
    pub action_cost: f64,
    /// Viscous damping coefficient (N s / m).
    pub damping: f64,
    pub wall: f64,
}

impl Default for PointMassParams {
    fn default() -> Self {
        Self {
            episode_length: 200,
            dt: 0.05,
            mass: 1.0,
            max_force: 2.0,
            goal: [0.0, 0.0],
            init_range: 1.0,
            action_cost: 0.01,
            damping: 1.0,
            wall: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointMass {
    params: PointMassParams,
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    t: usize,
    clamped: u64,
}

impl PointMass {
    pub fn new(params: PointMassParams) -> Result<Self> {
        check_common(params.episode_length, params.dt)?;
        let spec = EnvSpec {
            name: "point_mass".into(),
            state_dim: 4,
            action_dim: 2,
            episode_length: params.episode_length,
            dt: params.dt,
        };
        Ok(Self {
            params,
            spec,
            pos: [0.0; 2],
            vel: [0.0; 2],
            t: 0,
            clamped: 0,
        })
    }

    /// Places the mass at an explicit state (used for tests and demos).
    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) {
        self.pos = pos;
        self.vel = vel;
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }
}

impl Env for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = self.params.init_range;
        self.pos = [rng.gen_range(-r..=r), rng.gen_range(-r..=r)];
        self.vel = [0.0; 2];
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let (a, clamped) = clamp_action(action, 2)?;
        self.clamped += clamped;
        let p = &self.params;
        for k in 0..2 {
            let force = p.max_force * a[k] - p.damping * self.vel[k];
            self.vel[k] += p.dt * force / p.mass;
            self.pos[k] += p.dt * self.vel[k];
            if self.pos[k].abs() > p.wall {
                self.pos[k] = self.pos[k].clamp(-p.wall, p.wall);
                self.vel[k] = 0.0;
            }
        }
        self.t += 1;
        let dist2: f64 = (0..2).map(|k| (self.pos[k] - p.goal[k]).powi(2)).sum();
        let act2: f64 = a.iter().map(|v| v * v).sum();
        Ok(StepResult {
            next_state: self.observe(),
            reward: -dist2 - p.action_cost * act2,
            done: false,
            truncated: self.t >= p.episode_length,
        })
    }

    fn clamped_actions(&self) -> u64 {
        self.clamped
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_action_from_rest_stays_put() {
        let mut env = PointMass::new(PointMassParams::default()).unwrap();
        let s0 = env.reset(3);
        for _ in 0..50 {
            let r = env.step(&[0.0, 0.0]).unwrap();
            assert_eq!(r.next_state, s0);
        }
    }

    #[test]
    fn init_box_over_many_seeds() {
        let mut env = PointMass::new(PointMassParams::default()).unwrap();
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for seed in 0..10_000 {
            let s = env.reset(seed);
            assert_eq!(&s[2..], &[0.0, 0.0]);
            for k in 0..2 {
                assert!(s[k].abs() <= 1.0);
                lo[k] = lo[k].min(s[k]);
                hi[k] = hi[k].max(s[k]);
            }
        }
        // The box is actually covered, not just respected.
        for k in 0..2 {
            assert!(lo[k] < -0.99 && hi[k] > 0.99);
        }
    }

    #[test]
    fn walls_stop_the_mass() {
        let mut env = PointMass::new(PointMassParams::default()).unwrap();
        env.reset(0);
        env.set_state([1.99, 0.0], [3.0, 0.0]);
        let r = env.step(&[1.0, 0.0]).unwrap();
        assert_eq!(r.next_state[0], 2.0);
        assert_eq!(r.next_state[2], 0.0);
    }

    #[test]
    fn reward_formula() {
        let mut env = PointMass::new(PointMassParams::default()).unwrap();
        env.reset(0);
        env.set_state([0.3, -0.4], [0.0, 0.0]);
        let r = env.step(&[1.0, 0.0]).unwrap();
        let px = 0.3 + 0.05 * 0.05 * 2.0;
        assert_eq!(r.next_state[2], 0.05 * 2.0);
        let expected = -(px * px + 0.16) - 0.01;
        assert!((r.reward - expected).abs() < 1e-12);
    }
}

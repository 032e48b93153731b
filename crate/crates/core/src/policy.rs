//! Squashed diagonal Student-t policy.
//!
//! A pre-squash sample `u = mu + sigma * g / sqrt(w)` with `g ~ N(0, 1)` and
//! `w ~ Gamma(nu/2, rate nu/2)` is Student-t distributed; the action is
//! `a = squash(u) = u / sqrt(u^2 + 4)`, which lies in `(-1, 1)`. Densities are
//! reported over the bounded action, so they include the squash log-Jacobian.
//!
//! The Gamma draw is treated as data: gradients flow through `mu` and `sigma`
//! in the sampling path, while `nu` learns only through the explicit density.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::nn::{squareplus, squareplus_sigmoid, MlpParams, Tape, SQUAREPLUS_B};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const SQUASH_INPUT_LIMIT: f64 = 1e8;

/// Bounded squash onto `(-1, 1)`: `2 * squareplus_sigmoid(u) - 1 = u / sqrt(u^2 + 4)`.
#[inline]
pub fn squash(u: f64) -> f64 {
    u / (u * u + SQUAREPLUS_B).sqrt()
}

/// `ln(d squash / du) = ln 4 - 1.5 ln(u^2 + 4)`.
#[inline]
pub fn squash_log_det(u: f64) -> f64 {
    let u = u.clamp(-SQUASH_INPUT_LIMIT, SQUASH_INPUT_LIMIT);
    SQUAREPLUS_B.ln() - 1.5 * (u * u + SQUAREPLUS_B).ln()
}

#[inline]
fn squash_derivative(u: f64) -> f64 {
    let s = u * u + SQUAREPLUS_B;
    SQUAREPLUS_B / (s * s.sqrt())
}

/// Inverse of [`squash`] on `(-1, 1)`.
pub fn unsquash(a: f64) -> f64 {
    2.0 * a / (1.0 - a * a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    StudentT,
    /// Degrees of freedom fixed at infinity; the network emits no dof outputs.
    Gaussian,
}

impl PolicyKind {
    /// Raw network outputs per action dimension.
    pub fn outputs_per_dim(self) -> usize {
        match self {
            PolicyKind::StudentT => 3,
            PolicyKind::Gaussian => 2,
        }
    }
}

/// Per-state distribution parameters. `dof = inf` means Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyHead {
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
    pub dof: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    pub pre_squash: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
}

/// Exogenous noise for one reparameterized sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub gauss: Vec<f64>,
    pub gamma_draw: Vec<f64>,
}

/// Gradient of some scalar with respect to the head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
    pub dof: Vec<f64>,
}

impl PolicyHead {
    pub fn dim(&self) -> usize {
        self.location.len()
    }

    /// Maps raw outputs `[loc.., scale_raw.., dof_raw..]` to a head:
    /// `mu = raw`, `sigma = squareplus(raw)`, `nu = 2 + squareplus(raw)`.
    pub fn from_raw(raw: &[f64], kind: PolicyKind) -> Result<Self> {
        let k = kind.outputs_per_dim();
        if raw.is_empty() || !raw.len().is_multiple_of(k) {
            return Err(Error::Config(format!(
                "policy output of length {} does not split into {k} heads",
                raw.len()
            )));
        }
        let n = raw.len() / k;
        let location = raw[..n].to_vec();
        let scale = raw[n..2 * n]
            .iter()
            .map(|&r| squareplus(r, SQUAREPLUS_B))
            .collect();
        let dof = match kind {
            PolicyKind::StudentT => raw[2 * n..]
                .iter()
                .map(|&r| 2.0 + squareplus(r, SQUAREPLUS_B))
                .collect(),
            PolicyKind::Gaussian => vec![f64::INFINITY; n],
        };
        Ok(Self {
            location,
            scale,
            dof,
        })
    }

    /// Chain rule from head gradients back to raw network outputs.
    pub fn raw_grad(raw: &[f64], kind: PolicyKind, grad: &HeadGrad) -> Vec<f64> {
        let n = grad.location.len();
        let mut out = Vec::with_capacity(raw.len());
        out.extend_from_slice(&grad.location);
        for i in 0..n {
            out.push(grad.scale[i] * squareplus_sigmoid(raw[n + i]));
        }
        if kind == PolicyKind::StudentT {
            for i in 0..n {
                out.push(grad.dof[i] * squareplus_sigmoid(raw[2 * n + i]));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.location.len();
        if n == 0 || self.scale.len() != n || self.dof.len() != n {
            return Err(Error::Config("policy head dimensions disagree".into()));
        }
        let ok = self.location.iter().all(|v| v.is_finite())
            && self.scale.iter().all(|&s| s > 0.0 && s.is_finite())
            && self.dof.iter().all(|&v| v > 2.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid policy head {self:?}")))
        }
    }

    /// Draws `(g, w)` with `w ~ Gamma(nu/2, rate nu/2)`; `w = 1` for infinite dof.
    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Noise {
        let gauss = (0..self.dim())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let gamma_draw = self
            .dof
            .iter()
            .map(|&nu| {
                if nu.is_finite() {
                    Gamma::new(0.5 * nu, 2.0 / nu)
                        .expect("dof is positive")
                        .sample(rng)
                } else {
                    1.0
                }
            })
            .collect();
        Noise { gauss, gamma_draw }
    }

    /// Standardized noise multiplier `g / sqrt(w)` per dimension.
    pub fn noise_multiplier(noise: &Noise) -> Result<Vec<f64>> {
        noise
            .gauss
            .iter()
            .zip(&noise.gamma_draw)
            .map(|(&g, &w)| {
                if w > 0.0 && w.is_finite() {
                    Ok(g / w.sqrt())
                } else {
                    Err(Error::InvalidNoise(format!(
                        "gamma draw {w} must be positive"
                    )))
                }
            })
            .collect()
    }

    pub fn sample_reparam(&self, noise: &Noise) -> Result<SampledAction> {
        if noise.gauss.len() != self.dim() || noise.gamma_draw.len() != self.dim() {
            return Err(Error::InvalidNoise("noise dimension mismatch".into()));
        }
        let xi = Self::noise_multiplier(noise)?;
        let pre_squash: Vec<f64> = (0..self.dim())
            .map(|i| self.location[i] + self.scale[i] * xi[i])
            .collect();
        let action = pre_squash.iter().map(|&u| squash(u)).collect();
        let log_prob = self.log_prob(&pre_squash);
        Ok(SampledAction {
            pre_squash,
            action,
            log_prob,
        })
    }

    /// Log-density of the squashed action whose pre-squash value is `u`.
    pub fn log_prob(&self, pre_squash: &[f64]) -> f64 {
        (0..self.dim())
            .map(|i| {
                base_log_density(self.location[i], self.scale[i], self.dof[i], pre_squash[i])
                    - squash_log_det(pre_squash[i])
            })
            .sum()
    }

    pub fn mode_action(&self) -> Vec<f64> {
        self.location.iter().map(|&m| squash(m)).collect()
    }

    /// Total derivative of `<d_action, a> + d_log_prob * ln pi(a)` with respect
    /// to the head, holding the noise fixed.
    pub fn sample_backward(
        &self,
        sample: &SampledAction,
        noise_mult: &[f64],
        d_action: &[f64],
        d_log_prob: f64,
    ) -> HeadGrad {
        let n = self.dim();
        let mut grad = HeadGrad {
            location: vec![0.0; n],
            scale: vec![0.0; n],
            dof: vec![0.0; n],
        };
        for i in 0..n {
            let (mu, sigma, nu) = (self.location[i], self.scale[i], self.dof[i]);
            let u = sample.pre_squash[i];
            let p = base_log_density_partials(mu, sigma, nu, u);
            // d ln pi / du includes the -log_det term: d/du[1.5 ln(u^2+4)] = 3u/(u^2+4).
            let dlp_du = p.du + 3.0 * u / (u * u + SQUAREPLUS_B);
            let d_u = d_action[i] * squash_derivative(u) + d_log_prob * dlp_du;
            grad.location[i] = d_u + d_log_prob * p.dmu;
            grad.scale[i] = d_u * noise_mult[i] + d_log_prob * p.dsigma;
            grad.dof[i] = d_log_prob * p.dnu;
        }
        grad
    }
}

/// Student-t (or Gaussian for infinite `nu`) log-density at `u`.
pub fn base_log_density(mu: f64, sigma: f64, nu: f64, u: f64) -> f64 {
    let z = (u - mu) / sigma;
    if nu.is_infinite() {
        -0.5 * LN_2PI - sigma.ln() - 0.5 * z * z
    } else {
        ln_gamma(0.5 * (nu + 1.0))
            - ln_gamma(0.5 * nu)
            - 0.5 * (nu * std::f64::consts::PI).ln()
            - sigma.ln()
            - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
    }
}

struct Partials {
    du: f64,
    dmu: f64,
    dsigma: f64,
    dnu: f64,
}

fn base_log_density_partials(mu: f64, sigma: f64, nu: f64, u: f64) -> Partials {
    let z = (u - mu) / sigma;
    if nu.is_infinite() {
        let du = -z / sigma;
        Partials {
            du,
            dmu: -du,
            dsigma: (z * z - 1.0) / sigma,
            dnu: 0.0,
        }
    } else {
        let q = nu + z * z;
        let du = -(nu + 1.0) * z / (sigma * q);
        let dnu = 0.5 * digamma(0.5 * (nu + 1.0))
            - 0.5 * digamma(0.5 * nu)
            - 0.5 / nu
            - 0.5 * (z * z / nu).ln_1p()
            + 0.5 * (nu + 1.0) * z * z / (nu * q);
        Partials {
            du,
            dmu: -du,
            dsigma: -1.0 / sigma + (nu + 1.0) * z * z / (sigma * q),
            dnu,
        }
    }
}

/// Policy network: state -> raw head outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub params: MlpParams,
    pub kind: PolicyKind,
    pub action_dim: usize,
}

impl PolicyNet {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        kind: PolicyKind,
        seed: u64,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim * kind.outputs_per_dim());
        Ok(Self {
            params: MlpParams::new(&sizes, seed)?,
            kind,
            action_dim,
        })
    }

    pub fn from_params(params: MlpParams, kind: PolicyKind) -> Result<Self> {
        let out = params.output_dim();
        if !out.is_multiple_of(kind.outputs_per_dim()) {
            return Err(Error::Config(format!(
                "policy output size {out} incompatible with {kind:?}"
            )));
        }
        Ok(Self {
            action_dim: out / kind.outputs_per_dim(),
            params,
            kind,
        })
    }

    /// Forward pass that keeps `tape` ready for a backward call.
    pub fn head_with_tape(&self, state: &[f64], tape: &mut Tape) -> Result<(Vec<f64>, PolicyHead)> {
        let raw = self.params.forward(state, tape)?.to_vec();
        let head = PolicyHead::from_raw(&raw, self.kind)?;
        Ok((raw, head))
    }

    pub fn head(&self, state: &[f64]) -> Result<PolicyHead> {
        PolicyHead::from_raw(&self.params.predict(state)?, self.kind)
    }

    /// Intended action and its log-density; the mode when `deterministic`.
    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        rng: &mut R,
        deterministic: bool,
    ) -> Result<(Vec<f64>, f64)> {
        let head = self.head(state)?;
        if deterministic {
            let u = head.location.clone();
            Ok((head.mode_action(), head.log_prob(&u)))
        } else {
            let s = head.sample_reparam(&head.draw_noise(rng))?;
            Ok((s.action, s.log_prob))
        }
    }
}

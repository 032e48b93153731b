//! FIFO experience buffer with episode-end epoch sampling.

use rand::seq::index;
use rand::Rng;

use crate::checkpoint::Container;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// Terminal failure: no bootstrapping from `next_state`.
    pub done: bool,
    /// Time-limit cut: bootstraps normally.
    pub truncated: bool,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        let finite = self
            .state
            .iter()
            .chain(&self.action)
            .chain(&self.next_state)
            .all(|v| v.is_finite())
            && self.reward.is_finite();
        if !finite {
            return Err(Error::NonFinite(
                "transition contains a non-finite value".into(),
            ));
        }
        if self.action.iter().any(|a| a.abs() > 1.0) {
            return Err(Error::Config("transition action outside [-1, 1]".into()));
        }
        if self.state.len() != self.next_state.len() {
            return Err(Error::Config("state and next_state lengths differ".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    write_index: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            storage: Vec::new(),
            write_index: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.storage[i]
    }

    /// Oldest-first iteration.
    pub fn iter_fifo(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity {
            0
        } else {
            self.write_index
        };
        self.storage[split..].iter().chain(&self.storage[..split])
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        t.validate()?;
        if let Some(first) = self.storage.first() {
            if first.state.len() != t.state.len() || first.action.len() != t.action.len() {
                return Err(Error::Config(
                    "transition shape differs from buffer contents".into(),
                ));
            }
        }
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.write_index] = t;
        }
        self.write_index = (self.write_index + 1) % self.capacity;
        Ok(())
    }

    /// `floor(len / 2)` distinct indices drawn uniformly, split into batches of
    /// at most `batch_max` (only the last may be short).
    pub fn sample_epoch<R: Rng + ?Sized>(&self, batch_max: usize, rng: &mut R) -> Vec<Vec<usize>> {
        assert!(batch_max > 0, "batch_max must be positive");
        let k = self.storage.len() / 2;
        if k == 0 {
            return Vec::new();
        }
        let picked = index::sample(rng, self.storage.len(), k).into_vec();
        picked.chunks(batch_max).map(<[usize]>::to_vec).collect()
    }

    pub fn export(&self, prefix: &str, out: &mut Container) {
        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut next = Vec::new();
        let mut scalars = Vec::new();
        for t in self.iter_fifo() {
            states.extend_from_slice(&t.state);
            actions.extend_from_slice(&t.action);
            next.extend_from_slice(&t.next_state);
            scalars.extend_from_slice(&[t.reward, t.done as u8 as f64, t.truncated as u8 as f64]);
        }
        let (sd, ad) = self
            .storage
            .first()
            .map_or((0, 0), |t| (t.state.len(), t.action.len()));
        out.insert(
            format!("{prefix}.shape"),
            vec![
                self.capacity as f64,
                self.len() as f64,
                sd as f64,
                ad as f64,
            ],
        );
        out.insert(format!("{prefix}.state"), states);
        out.insert(format!("{prefix}.action"), actions);
        out.insert(format!("{prefix}.next_state"), next);
        out.insert(format!("{prefix}.scalars"), scalars);
    }

    pub fn import(prefix: &str, src: &Container) -> Result<Self> {
        let shape = src.get_len(&format!("{prefix}.shape"), 4)?;
        let (cap, n, sd, ad) = (
            shape[0] as usize,
            shape[1] as usize,
            shape[2] as usize,
            shape[3] as usize,
        );
        let states = src.get_len(&format!("{prefix}.state"), n * sd)?;
        let actions = src.get_len(&format!("{prefix}.action"), n * ad)?;
        let next = src.get_len(&format!("{prefix}.next_state"), n * sd)?;
        let scalars = src.get_len(&format!("{prefix}.scalars"), n * 3)?;
        let mut buf = Self::new(cap)?;
        for i in 0..n {
            buf.push(Transition {
                state: states[i * sd..(i + 1) * sd].to_vec(),
                action: actions[i * ad..(i + 1) * ad].to_vec(),
                next_state: next[i * sd..(i + 1) * sd].to_vec(),
                reward: scalars[3 * i],
                done: scalars[3 * i + 1] != 0.0,
                truncated: scalars[3 * i + 2] != 0.0,
            })?;
        }
        Ok(buf)
    }
}

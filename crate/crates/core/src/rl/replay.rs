//! Fixed-capacity ring of transitions with uniform sampling.

use rand::Rng;

#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub size: usize,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub done: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    len: usize,
    head: usize,
    obs: Vec<f64>,
    action: Vec<f64>,
    reward: Vec<f64>,
    next_obs: Vec<f64>,
    done: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            act_dim,
            len: 0,
            head: 0,
            obs: vec![0.0; capacity * obs_dim],
            action: vec![0.0; capacity * act_dim],
            reward: vec![0.0; capacity],
            next_obs: vec![0.0; capacity * obs_dim],
            done: vec![false; capacity],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stores a transition, overwriting the oldest once full.
    pub fn push(&mut self, obs: &[f64], action: &[f64], reward: f64, next_obs: &[f64], done: bool) {
        assert_eq!(obs.len(), self.obs_dim);
        assert_eq!(next_obs.len(), self.obs_dim);
        assert_eq!(action.len(), self.act_dim);
        let i = self.head;
        self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(obs);
        self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(next_obs);
        self.action[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(action);
        self.reward[i] = reward;
        self.done[i] = done;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Reward stored at ring slot `i`.
    pub fn reward_at(&self, i: usize) -> f64 {
        self.reward[i]
    }

    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Batch {
        assert!(self.len > 0, "sampling from an empty buffer");
        let mut b = Batch {
            size,
            obs: Vec::with_capacity(size * self.obs_dim),
            action: Vec::with_capacity(size * self.act_dim),
            reward: Vec::with_capacity(size),
            next_obs: Vec::with_capacity(size * self.obs_dim),
            done: Vec::with_capacity(size),
        };
        for _ in 0..size {
            let i = rng.random_range(0..self.len);
            b.obs.extend_from_slice(&self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]);
            b.next_obs.extend_from_slice(&self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim]);
            b.action.extend_from_slice(&self.action[i * self.act_dim..(i + 1) * self.act_dim]);
            b.reward.push(self.reward[i]);
            b.done.push(if self.done[i] { 1.0 } else { 0.0 });
        }
        b
    }
}

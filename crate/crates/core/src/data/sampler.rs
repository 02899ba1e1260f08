use std::collections::HashSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Draws `(user, item)` pairs uniformly, with replacement, from the
/// complement of an observed set.
///
/// Sparse grids use rejection sampling against a hashed pair set. Once
/// more than half the grid is observed the complement is enumerated.
#[derive(Debug, Clone)]
pub struct UnobservedSampler {
    n_users: usize,
    n_items: usize,
    observed: Arc<HashSet<u64>>,
    complement: Option<Arc<Vec<(usize, usize)>>>,
    rng: RngStream,
}

impl UnobservedSampler {
    pub fn new(
        observed_pairs: impl IntoIterator<Item = (usize, usize)>,
        n_users: usize,
        n_items: usize,
        rng: RngStream,
    ) -> Result<Self> {
        let grid = (n_users as u64) * (n_items as u64);
        let mut observed = HashSet::new();
        for (u, i) in observed_pairs {
            if u >= n_users || i >= n_items {
                return Err(Error::IdOutOfRange {
                    kind: if u >= n_users { "user" } else { "item" },
                    id: if u >= n_users { u } else { i },
                    bound: if u >= n_users { n_users } else { n_items },
                });
            }
            observed.insert(u as u64 * n_items as u64 + i as u64);
        }
        if observed.len() as u64 >= grid {
            return Err(Error::FullyObserved);
        }
        let complement = (observed.len() as u64 * 2 > grid).then(|| {
            let mut pairs = Vec::with_capacity((grid - observed.len() as u64) as usize);
            for u in 0..n_users {
                for i in 0..n_items {
                    if !observed.contains(&(u as u64 * n_items as u64 + i as u64)) {
                        pairs.push((u, i));
                    }
                }
            }
            Arc::new(pairs)
        });
        Ok(Self {
            n_users,
            n_items,
            observed: Arc::new(observed),
            complement,
            rng,
        })
    }

    /// Same observed set, fresh private stream.
    pub fn with_stream(&self, rng: RngStream) -> Self {
        Self {
            rng,
            ..self.clone()
        }
    }

    pub fn is_observed(&self, user: usize, item: usize) -> bool {
        user < self.n_users
            && item < self.n_items
            && self.observed.contains(&(user as u64 * self.n_items as u64 + item as u64))
    }

    pub fn complement_size(&self) -> u64 {
        self.n_users as u64 * self.n_items as u64 - self.observed.len() as u64
    }

    pub fn sample(&mut self, n: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(n);
        if let Some(pairs) = &self.complement {
            for _ in 0..n {
                out.push(pairs[self.rng.below(pairs.len())]);
            }
            return out;
        }
        while out.len() < n {
            let u = self.rng.below(self.n_users);
            let i = self.rng.below(self.n_items);
            if !self.observed.contains(&(u as u64 * self.n_items as u64 + i as u64)) {
                out.push((u, i));
            }
        }
        out
    }
}

//! Logged interactions, dataset loaders, the uniform three-way split,
//! round batching, unobserved-pair sampling and a synthetic world with a
//! known preference matrix.

mod loaders;
mod sampler;
mod split;
mod synthetic;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use loaders::{
    load_coat, load_yahoo, parse_coat, parse_yahoo, read_canonical, write_canonical, OverlapPolicy,
};
pub use sampler::UnobservedSampler;
pub use split::{partition_batches, split_uniform, SplitSpec, UniformSplits};
pub use synthetic::{generate_synthetic, SyntheticSpec, SyntheticWorld};

/// Logging policy that produced an interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Uniform,
    Biased,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Uniform => "uniform",
            Source::Biased => "biased",
        }
    }
}

/// A rating of 5 is a like; anything lower is a dislike.
pub fn binarize(rating: i64) -> Result<bool> {
    if !(1..=5).contains(&rating) {
        return Err(Error::InvalidRating(rating));
    }
    Ok(rating == 5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub rating: u8,
    pub label: bool,
    pub source: Source,
}

impl Interaction {
    /// Builds a record whose label is derived from `rating`.
    pub fn new(user: usize, item: usize, rating: i64, source: Source) -> Result<Self> {
        let label = binarize(rating)?;
        Ok(Self {
            user,
            item,
            rating: rating as u8,
            label,
            source,
        })
    }

    pub fn pair(&self) -> (usize, usize) {
        (self.user, self.item)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    interactions: Vec<Interaction>,
    n_users: usize,
    n_items: usize,
}

impl Dataset {
    /// Validates id bounds and rejects duplicate `(user, item, source)`.
    pub fn new(interactions: Vec<Interaction>, n_users: usize, n_items: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(interactions.len());
        for x in &interactions {
            if x.user >= n_users {
                return Err(Error::IdOutOfRange {
                    kind: "user",
                    id: x.user,
                    bound: n_users,
                });
            }
            if x.item >= n_items {
                return Err(Error::IdOutOfRange {
                    kind: "item",
                    id: x.item,
                    bound: n_items,
                });
            }
            if !seen.insert((x.user, x.item, x.source)) {
                return Err(Error::Precondition(format!(
                    "duplicate {} interaction for user {} item {}",
                    x.source.as_str(),
                    x.user,
                    x.item
                )));
            }
        }
        Ok(Self {
            interactions,
            n_users,
            n_items,
        })
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn by_source(&self, source: Source) -> Vec<Interaction> {
        self.interactions
            .iter()
            .filter(|x| x.source == source)
            .copied()
            .collect()
    }

    pub fn count(&self, source: Source) -> usize {
        self.interactions.iter().filter(|x| x.source == source).count()
    }

    /// Fraction of positive labels among `source` interactions.
    pub fn positive_ratio(&self, source: Source) -> Option<f64> {
        positive_ratio(self.interactions.iter().filter(|x| x.source == source))
    }

    /// Every observed `(user, item)` regardless of source.
    pub fn observed_pairs(&self) -> HashSet<(usize, usize)> {
        self.interactions.iter().map(Interaction::pair).collect()
    }
}

pub fn positive_ratio<'a>(xs: impl IntoIterator<Item = &'a Interaction>) -> Option<f64> {
    let (n, pos) = xs
        .into_iter()
        .fold((0usize, 0usize), |(n, p), x| (n + 1, p + usize::from(x.label)));
    (n > 0).then(|| pos as f64 / n as f64)
}

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Dataset, Interaction, Source};
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub latent_dim: usize,
    /// 0 makes the biased policy uniform.
    pub exposure_skew: f64,
    pub n_biased: usize,
    pub n_uniform: usize,
    pub seed: u64,
    /// Global offset of the preference logit; sets the base positive rate.
    #[serde(default = "default_base_logit")]
    pub base_logit: f64,
    /// Standard deviation of the user-item interaction part of the logit.
    #[serde(default = "default_factor_scale")]
    pub factor_scale: f64,
}

fn default_base_logit() -> f64 {
    -2.5
}

fn default_factor_scale() -> f64 {
    1.5
}

impl SyntheticSpec {
    /// A 200 x 200 world with strongly preference-driven exposure.
    pub fn small(seed: u64) -> Self {
        Self {
            n_users: 200,
            n_items: 200,
            latent_dim: 4,
            exposure_skew: 2.0,
            n_biased: 6000,
            n_uniform: 4000,
            seed,
            base_logit: default_base_logit(),
            factor_scale: default_factor_scale(),
        }
    }
}

/// Ground truth behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    n_users: usize,
    n_items: usize,
    /// Row-major `p(r = 1 | user, item)`.
    prob: Vec<f64>,
    /// Row-major exposure score (per-user standardized logit).
    exposure_score: Vec<f64>,
    exposure_skew: f64,
    seed: u64,
}

fn standard_normal(rng: &mut RngStream) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    let u1 = 1.0 - rng.next_f64();
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl SyntheticWorld {
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn prob(&self, user: usize, item: usize) -> f64 {
        self.prob[user * self.n_items + item]
    }

    pub fn mean_prob(&self) -> f64 {
        self.prob.iter().sum::<f64>() / self.prob.len() as f64
    }

    /// Item-selection distribution of a logging policy for one user.
    pub fn exposure_distribution(&self, user: usize, source: Source) -> Vec<f64> {
        match source {
            Source::Uniform => vec![1.0 / self.n_items as f64; self.n_items],
            Source::Biased => {
                let row = &self.exposure_score[user * self.n_items..(user + 1) * self.n_items];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = row
                    .iter()
                    .map(|s| (self.exposure_skew * (s - max)).exp())
                    .collect();
                let total: f64 = w.iter().sum();
                w.into_iter().map(|v| v / total).collect()
            }
        }
    }

    /// Expected BCE of the true probabilities on `pairs` (the Bayes floor).
    pub fn bayes_bce(&self, pairs: &[(usize, usize)]) -> f64 {
        let h = |p: f64| -(p * p.ln() + (1.0 - p) * (1.0 - p).ln());
        pairs.iter().map(|&(u, i)| h(self.prob(u, i))).sum::<f64>() / pairs.len() as f64
    }
}

fn draw_log(
    world: &SyntheticWorld,
    source: Source,
    count: usize,
    rng: &mut RngStream,
    out: &mut Vec<Interaction>,
) -> Result<()> {
    let grid = world.n_users * world.n_items;
    if count > grid {
        return Err(Error::InvalidConfig(format!("{count} {} interactions exceed the {grid}-cell grid", source.as_str())));
    }
    let cdfs: Vec<Vec<f64>> = match source {
        Source::Uniform => Vec::new(),
        Source::Biased => (0..world.n_users)
            .map(|u| {
                let mut acc = 0.0;
                world
                    .exposure_distribution(u, Source::Biased)
                    .into_iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect(),
    };
    let mut taken = HashSet::with_capacity(count);
    let max_attempts = 1000 * count.max(1);
    let mut attempts = 0;
    while taken.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::InvalidConfig(format!(
                "could not place {count} distinct {} interactions; lower the count or the skew",
                source.as_str()
            )));
        }
        let u = rng.below(world.n_users);
        let i = match source {
            Source::Uniform => rng.below(world.n_items),
            Source::Biased => {
                let x = rng.next_f64();
                let cdf = &cdfs[u];
                cdf.partition_point(|&c| c <= x).min(world.n_items - 1)
            }
        };
        if !taken.insert((u, i)) {
            continue;
        }
        let label = rng.bernoulli(world.prob(u, i));
        // Ratings stand in for labels: 5 = like, 1 = dislike.
        out.push(Interaction::new(u, i, if label { 5 } else { 1 }, source)?);
    }
    Ok(())
}

/// Generates a ground-truth world and its biased and uniform logs.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(SyntheticWorld, Dataset)> {
    if spec.n_users == 0 || spec.n_items == 0 || spec.latent_dim == 0 {
        return Err(Error::InvalidConfig("synthetic sizes must be positive".into()));
    }
    if !spec.exposure_skew.is_finite() || !spec.base_logit.is_finite() || !(spec.factor_scale >= 0.0) {
        return Err(Error::InvalidConfig("synthetic scalars must be finite".into()));
    }
    let root = RngStream::new(spec.seed);
    let mut factors = root.split("factors");
    let k = spec.latent_dim;
    let component_sd = spec.factor_scale.sqrt() / (k as f64).powf(0.25);
    let mut draw = |n: usize| -> Vec<f64> { (0..n * k).map(|_| component_sd * standard_normal(&mut factors)).collect() };
    let users = draw(spec.n_users);
    let items = draw(spec.n_items);
    let item_bias: Vec<f64> = (0..spec.n_items).map(|_| 0.5 * standard_normal(&mut factors)).collect();

    let mut logits = vec![0.0; spec.n_users * spec.n_items];
    for u in 0..spec.n_users {
        for i in 0..spec.n_items {
            let dot: f64 = users[u * k..(u + 1) * k]
                .iter()
                .zip(&items[i * k..(i + 1) * k])
                .map(|(a, b)| a * b)
                .sum();
            logits[u * spec.n_items + i] = spec.base_logit + item_bias[i] + dot;
        }
    }
    let mut exposure_score = vec![0.0; logits.len()];
    for u in 0..spec.n_users {
        let row = &logits[u * spec.n_items..(u + 1) * spec.n_items];
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for (i, v) in row.iter().enumerate() {
            exposure_score[u * spec.n_items + i] = (v - mean) / sd;
        }
    }
    let world = SyntheticWorld {
        n_users: spec.n_users,
        n_items: spec.n_items,
        prob: logits.iter().map(|&z| sigmoid(z)).collect(),
        exposure_score,
        exposure_skew: spec.exposure_skew,
        seed: spec.seed,
    };

    let mut interactions = Vec::with_capacity(spec.n_biased + spec.n_uniform);
    draw_log(&world, Source::Biased, spec.n_biased, &mut root.split("biased-log"), &mut interactions)?;
    draw_log(&world, Source::Uniform, spec.n_uniform, &mut root.split("uniform-log"), &mut interactions)?;
    let dataset = Dataset::new(interactions, spec.n_users, spec.n_items)?;
    Ok((world, dataset))
}

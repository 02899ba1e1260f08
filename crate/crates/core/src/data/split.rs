use serde::{Deserialize, Serialize};

use super::Interaction;
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Share of the uniform log used for training; the rest is halved
    /// between validation and test.
    pub uniform_train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            uniform_train_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformSplits {
    pub train: Vec<Interaction>,
    pub validation: Vec<Interaction>,
    pub test: Vec<Interaction>,
}

/// Seeded shuffle, then sizes `floor(f n)` / `ceil((n - train) / 2)` / rest.
pub fn split_uniform(uniform: &[Interaction], spec: &SplitSpec) -> Result<UniformSplits> {
    let f = spec.uniform_train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "uniform_train_fraction must lie in (0, 1), got {f}"
        )));
    }
    let n = uniform.len();
    if n < 3 {
        return Err(Error::TooFewElements {
            available: n,
            requested: 3,
        });
    }
    // Tolerance keeps e.g. 0.29 * 100 from flooring to 28.
    let n_train = ((f * n as f64) + 1e-9).floor() as usize;
    let n_val = (n - n_train).div_ceil(2);
    let n_test = n - n_train - n_val;
    if n_train == 0 || n_test == 0 {
        return Err(Error::Precondition(format!(
            "split of {n} with fraction {f} leaves an empty part"
        )));
    }
    let mut shuffled = uniform.to_vec();
    RngStream::new(spec.seed).split("uniform-split").shuffle(&mut shuffled);
    let test = shuffled.split_off(n_train + n_val);
    let validation = shuffled.split_off(n_train);
    Ok(UniformSplits {
        train: shuffled,
        validation,
        test,
    })
}

/// Seeded shuffle into `m` disjoint batches; the first `len % m` batches
/// carry one extra element.
pub fn partition_batches<T: Clone>(data: &[T], m: usize, rng: &mut RngStream) -> Result<Vec<Vec<T>>> {
    if m == 0 || m > data.len() {
        return Err(Error::TooFewElements {
            available: data.len(),
            requested: m,
        });
    }
    let mut shuffled = data.to_vec();
    rng.shuffle(&mut shuffled);
    let base = data.len() / m;
    let extra = data.len() % m;
    let mut out = Vec::with_capacity(m);
    let mut rest = shuffled.into_iter();
    for b in 0..m {
        let size = base + usize::from(b < extra);
        out.push(rest.by_ref().take(size).collect());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Source;
    use proptest::prelude::*;

    fn records(n: usize) -> Vec<Interaction> {
        (0..n)
            .map(|k| Interaction::new(k, k % 7, (k % 5) as i64 + 1, Source::Uniform).unwrap())
            .collect()
    }

    #[test]
    fn table_one_sizes() {
        let s = split_uniform(&records(4640), &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (928, 1856, 1856));
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let data = records(100);
        let spec = SplitSpec { seed: 4, ..Default::default() };
        assert_eq!(split_uniform(&data, &spec).unwrap(), split_uniform(&data, &spec).unwrap());
        let other = SplitSpec { seed: 5, ..Default::default() };
        assert_ne!(split_uniform(&data, &spec).unwrap(), split_uniform(&data, &other).unwrap());
    }

    #[test]
    fn split_errors() {
        assert!(split_uniform(&records(2), &SplitSpec::default()).is_err());
        let bad = SplitSpec { uniform_train_fraction: 1.0, seed: 0 };
        assert!(split_uniform(&records(10), &bad).is_err());
    }

    #[test]
    fn batch_sizes() {
        let mut rng = RngStream::new(0);
        let sizes = |n: usize, m: usize, rng: &mut RngStream| -> Vec<usize> {
            partition_batches(&(0..n).collect::<Vec<_>>(), m, rng)
                .unwrap()
                .iter()
                .map(Vec::len)
                .collect()
        };
        assert_eq!(sizes(10, 3, &mut rng), vec![4, 3, 3]);
        let big = sizes(6594, 20, &mut rng);
        assert_eq!(big.iter().filter(|&&s| s == 330).count(), 14);
        assert_eq!(big.iter().filter(|&&s| s == 329).count(), 6);
        assert_eq!(&big[..14], &[330; 14]);
        assert!(partition_batches(&[1, 2], 3, &mut rng).is_err());
        assert!(partition_batches(&[1, 2], 0, &mut rng).is_err());
    }

    #[test]
    fn single_batch_is_shuffled_input() {
        let data: Vec<usize> = (0..50).collect();
        let mut a = RngStream::new(8);
        let batches = partition_batches(&data, 1, &mut a).unwrap();
        let mut expected = data.clone();
        RngStream::new(8).shuffle(&mut expected);
        assert_eq!(batches, vec![expected]);
    }

    proptest! {
        #[test]
        fn splits_partition_input(n in 3usize..300, f in 0.05f64..0.9, seed in any::<u64>()) {
            let data = records(n);
            let spec = SplitSpec { uniform_train_fraction: f, seed };
            if let Ok(s) = split_uniform(&data, &spec) {
                let mut all: Vec<_> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
                all.sort();
                let mut orig = data.clone();
                orig.sort();
                prop_assert_eq!(all, orig);
            }
        }

        #[test]
        fn batches_partition_input(n in 1usize..500, m in 1usize..40, seed in any::<u64>()) {
            prop_assume!(m <= n);
            let data: Vec<usize> = (0..n).collect();
            let batches = partition_batches(&data, m, &mut RngStream::new(seed)).unwrap();
            prop_assert_eq!(batches.len(), m);
            let max = batches.iter().map(Vec::len).max().unwrap();
            let min = batches.iter().map(Vec::len).min().unwrap();
            prop_assert!(max - min <= 1);
            let mut all: Vec<usize> = batches.concat();
            all.sort();
            prop_assert_eq!(all, data);
        }
    }
}

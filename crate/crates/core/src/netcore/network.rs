use serde::{Deserialize, Serialize};

use super::params::{Dense, Params};
use crate::error::{Error, Result};
use crate::losses::{self, LossBreakdown, RegLossKind};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitRule {
    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    #[default]
    FanBasedUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub embedding_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub dropout_rate: f64,
    #[serde(default)]
    pub init: InitRule,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.n_users == 0 || self.n_items == 0 {
            return bad("n_users and n_items must be >= 1");
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be >= 1");
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.len() > 3 {
            return bad("hidden_sizes must have 1 to 3 entries");
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return bad("every hidden size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        Ok(())
    }

    /// Exact number of trainable entries this config produces.
    pub fn param_count(&self) -> usize {
        let mut count = (self.n_users + self.n_items) * self.embedding_dim;
        let mut width = 2 * self.embedding_dim;
        for &h in self.hidden_sizes.iter().chain(std::iter::once(&1)) {
            count += width * h + h;
            width = h;
        }
        count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForwardMode {
    /// No dropout.
    Deterministic,
    /// Fresh inverted-dropout masks, used while fitting.
    TrainDropout,
    /// Fresh inverted-dropout masks at scoring time (one posterior sample).
    StochasticInference,
}

impl ForwardMode {
    fn uses_dropout(self) -> bool {
        !matches!(self, ForwardMode::Deterministic)
    }
}

#[derive(Debug, Clone)]
pub struct Gradients(pub Params);

impl Gradients {
    pub fn zeros_for(net: &Network) -> Self {
        Gradients(Params::zeros_like(&net.params))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataTerm {
    pub user: usize,
    pub item: usize,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillTerm {
    pub user: usize,
    pub item: usize,
    /// Detached teacher probability.
    pub target: f64,
}

/// A scalar minibatch objective:
/// `mean BCE(data) + distill_coef * mean reg_loss(distill) + l2_coef * l2`.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec<'a> {
    pub data: &'a [DataTerm],
    pub distill: &'a [DistillTerm],
    pub reg_kind: RegLossKind,
    pub distill_coef: f64,
    pub l2_coef: f64,
}

/// Embedding + ReLU MLP scorer with a single sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    seed: u64,
    pub(crate) params: Params,
}

/// Per-sample activations kept for the backward pass.
#[derive(Debug, Default)]
struct Trace {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    mask: Vec<Vec<f64>>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Network {
    /// Fresh parameters for `config`, deterministic in `rng`'s seed and state.
    pub fn init(config: NetworkConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let d = config.embedding_dim;
        let mut draw = |len: usize, fan_in: usize, fan_out: usize| -> Vec<f64> {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..len).map(|_| limit * (2.0 * rng.next_f64() - 1.0)).collect()
        };
        let user_emb = draw(config.n_users * d, config.n_users, d);
        let item_emb = draw(config.n_items * d, config.n_items, d);
        let mut layers = Vec::with_capacity(config.hidden_sizes.len() + 1);
        let mut width = 2 * d;
        for &h in config.hidden_sizes.iter().chain(std::iter::once(&1)) {
            layers.push(Dense {
                in_dim: width,
                out_dim: h,
                weights: draw(width * h, width, h),
                bias: vec![0.0; h],
            });
            width = h;
        }
        Ok(Self {
            seed: rng.seed(),
            params: Params {
                embedding_dim: d,
                user_emb,
                item_emb,
                layers,
            },
            config,
        })
    }

    /// Rebuilds a network from stored parts, checking shapes and finiteness.
    pub fn from_parts(config: NetworkConfig, seed: u64, params: Params) -> Result<Self> {
        config.validate()?;
        let mut probe = RngStream::new(0);
        let template = Network::init(config.clone(), &mut probe)?;
        if !template.params.same_shape(&params) {
            return Err(Error::ShapeMismatch(
                "parameter arrays do not match config".into(),
            ));
        }
        if let Some(name) = params.first_non_finite() {
            return Err(Error::NonFiniteParameters(name));
        }
        Ok(Self {
            config,
            seed,
            params,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable parameter access. Callers must keep all entries finite.
    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_ids(&self, user: usize, item: usize) -> Result<()> {
        if user >= self.config.n_users {
            return Err(Error::IdOutOfRange {
                kind: "user",
                id: user,
                bound: self.config.n_users,
            });
        }
        if item >= self.config.n_items {
            return Err(Error::IdOutOfRange {
                kind: "item",
                id: item,
                bound: self.config.n_items,
            });
        }
        Ok(())
    }

    /// Runs one sample through the net, filling `trace`, and returns the logit.
    fn forward_trace(
        &self,
        user: usize,
        item: usize,
        mode: ForwardMode,
        rng: &mut RngStream,
        trace: &mut Trace,
    ) -> f64 {
        let d = self.params.embedding_dim;
        let n_layers = self.params.layers.len();
        trace.input.clear();
        trace
            .input
            .extend_from_slice(&self.params.user_emb[user * d..(user + 1) * d]);
        trace
            .input
            .extend_from_slice(&self.params.item_emb[item * d..(item + 1) * d]);
        trace.pre.resize_with(n_layers, Vec::new);
        trace.post.resize_with(n_layers, Vec::new);
        trace.mask.resize_with(n_layers, Vec::new);

        let rate = self.config.dropout_rate;
        let dropout = mode.uses_dropout() && rate > 0.0;
        let keep_scale = 1.0 / (1.0 - rate);

        for (li, layer) in self.params.layers.iter().enumerate() {
            let (before, rest) = trace.post.split_at_mut(li);
            let x: &[f64] = if li == 0 { &trace.input } else { &before[li - 1] };
            let pre = &mut trace.pre[li];
            pre.clear();
            for o in 0..layer.out_dim {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + layer.bias[o];
                pre.push(z);
            }
            if li + 1 == n_layers {
                break;
            }
            let mask = &mut trace.mask[li];
            mask.clear();
            for _ in 0..layer.out_dim {
                let m = if dropout {
                    if rng.bernoulli(rate) {
                        0.0
                    } else {
                        keep_scale
                    }
                } else {
                    1.0
                };
                mask.push(m);
            }
            let post = &mut rest[0];
            post.clear();
            post.extend(pre.iter().zip(mask.iter()).map(|(&z, &m)| z.max(0.0) * m));
        }
        trace.pre[n_layers - 1][0]
    }

    /// Accumulates `dlogit`-scaled gradients of the traced sample into `grads`.
    fn backward(&self, user: usize, item: usize, trace: &Trace, dlogit: f64, grads: &mut Params) {
        let d = self.params.embedding_dim;
        let n_layers = self.params.layers.len();
        let mut delta = vec![dlogit];
        for li in (0..n_layers).rev() {
            let layer = &self.params.layers[li];
            let g = &mut grads.layers[li];
            let x: &[f64] = if li == 0 { &trace.input } else { &trace.post[li - 1] };
            for (o, &dz) in delta.iter().enumerate() {
                if dz == 0.0 {
                    continue;
                }
                g.bias[o] += dz;
                let grow = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, &v) in grow.iter_mut().zip(x) {
                    *gw += dz * v;
                }
            }
            let mut dx = vec![0.0; layer.in_dim];
            for (o, &dz) in delta.iter().enumerate() {
                if dz == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (acc, &w) in dx.iter_mut().zip(row) {
                    *acc += dz * w;
                }
            }
            if li > 0 {
                let pre = &trace.pre[li - 1];
                let mask = &trace.mask[li - 1];
                for ((v, &z), &m) in dx.iter_mut().zip(pre).zip(mask) {
                    *v = if z > 0.0 { *v * m } else { 0.0 };
                }
            }
            delta = dx;
        }
        for (g, v) in grads.user_emb[user * d..(user + 1) * d]
            .iter_mut()
            .zip(&delta[..d])
        {
            *g += v;
        }
        for (g, v) in grads.item_emb[item * d..(item + 1) * d]
            .iter_mut()
            .zip(&delta[d..])
        {
            *g += v;
        }
    }

    /// Pre-sigmoid output for one pair.
    pub fn logit(&self, user: usize, item: usize, mode: ForwardMode, rng: &mut RngStream) -> Result<f64> {
        self.check_ids(user, item)?;
        let mut trace = Trace::default();
        Ok(self.forward_trace(user, item, mode, rng, &mut trace))
    }

    /// `p(r = 1 | user, item)`.
    pub fn forward(&self, user: usize, item: usize, mode: ForwardMode, rng: &mut RngStream) -> Result<f64> {
        self.logit(user, item, mode, rng).map(sigmoid)
    }

    /// Elementwise [`Network::forward`]; each element draws its own masks.
    pub fn forward_batch(
        &self,
        pairs: &[(usize, usize)],
        mode: ForwardMode,
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        for &(u, i) in pairs {
            self.check_ids(u, i)?;
        }
        let mut trace = Trace::default();
        Ok(pairs
            .iter()
            .map(|&(u, i)| sigmoid(self.forward_trace(u, i, mode, rng, &mut trace)))
            .collect())
    }

    /// Deterministic probabilities, no random stream needed.
    pub fn predict(&self, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let mut unused = RngStream::new(0);
        self.forward_batch(pairs, ForwardMode::Deterministic, &mut unused)
    }

    /// Loss value and analytic gradient. Each sample's dropout masks are
    /// drawn once and reused for its backward pass; data terms draw first,
    /// then distillation terms, in slice order.
    pub fn loss_and_grads(
        &self,
        spec: &LossSpec<'_>,
        mode: ForwardMode,
        rng: &mut RngStream,
    ) -> Result<(LossBreakdown, Gradients)> {
        let mut grads = Gradients::zeros_for(self);
        let breakdown = self.loss_and_grads_into(spec, mode, rng, &mut grads)?;
        Ok((breakdown, grads))
    }

    /// As [`Network::loss_and_grads`], overwriting a caller-owned buffer.
    pub fn loss_and_grads_into(
        &self,
        spec: &LossSpec<'_>,
        mode: ForwardMode,
        rng: &mut RngStream,
        grads: &mut Gradients,
    ) -> Result<LossBreakdown> {
        if !grads.0.same_shape(&self.params) {
            return Err(Error::ShapeMismatch("gradient buffer".into()));
        }
        for t in spec.data {
            self.check_ids(t.user, t.item)?;
        }
        for t in spec.distill {
            self.check_ids(t.user, t.item)?;
        }
        grads.0.fill(0.0);
        let mut trace = Trace::default();

        let mut data_term = 0.0;
        if !spec.data.is_empty() {
            let w = 1.0 / spec.data.len() as f64;
            for t in spec.data {
                let z = self.forward_trace(t.user, t.item, mode, rng, &mut trace);
                let p = sigmoid(z);
                let (value, dp) = losses::bce_with_grad(p, t.label);
                data_term += value;
                let dz = w * dp * p * (1.0 - p);
                self.backward(t.user, t.item, &trace, dz, &mut grads.0);
            }
            data_term *= w;
        }

        let mut distill_term = 0.0;
        if !spec.distill.is_empty() {
            let w = 1.0 / spec.distill.len() as f64;
            for t in spec.distill {
                let z = self.forward_trace(t.user, t.item, mode, rng, &mut trace);
                let p = sigmoid(z);
                let (value, dp) = losses::reg_loss_with_grad(spec.reg_kind, t.target, p);
                distill_term += value;
                let dz = spec.distill_coef * w * dp * p * (1.0 - p);
                self.backward(t.user, t.item, &trace, dz, &mut grads.0);
            }
            distill_term *= w;
        }

        let reg_term = self.params.l2_weights();
        if spec.l2_coef != 0.0 {
            let c = 2.0 * spec.l2_coef;
            let add = |g: &mut [f64], p: &[f64]| {
                for (gv, pv) in g.iter_mut().zip(p) {
                    *gv += c * pv;
                }
            };
            add(&mut grads.0.user_emb, &self.params.user_emb);
            add(&mut grads.0.item_emb, &self.params.item_emb);
            for (g, p) in grads.0.layers.iter_mut().zip(&self.params.layers) {
                add(&mut g.weights, &p.weights);
            }
        }

        for (value, term) in [(data_term, "data"), (distill_term, "distill"), (reg_term, "l2")] {
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { term: term.into() });
            }
        }
        let breakdown = LossBreakdown::compose(data_term, distill_term, reg_term, spec.distill_coef, spec.l2_coef);
        if !breakdown.total.is_finite() {
            return Err(Error::NonFiniteLoss { term: "total".into() });
        }
        if let Some(name) = grads.0.first_non_finite() {
            return Err(Error::NonFiniteGradient(name));
        }
        Ok(breakdown)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dropout: f64) -> NetworkConfig {
        NetworkConfig {
            n_users: 5,
            n_items: 6,
            embedding_dim: 3,
            hidden_sizes: vec![4, 3],
            dropout_rate: dropout,
            init: InitRule::FanBasedUniform,
        }
    }

    fn zeroed(config: NetworkConfig) -> Network {
        let mut net = Network::init(config, &mut RngStream::new(0)).unwrap();
        net.params.fill(0.0);
        net
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let a = Network::init(cfg(0.0), &mut RngStream::new(7)).unwrap();
        let b = Network::init(cfg(0.0), &mut RngStream::new(7)).unwrap();
        assert_eq!(a.params.to_flat(), b.params.to_flat());
        for l in &a.params.layers {
            assert!(l.bias.iter().all(|&v| v == 0.0));
        }
        let c = Network::init(cfg(0.0), &mut RngStream::new(8)).unwrap();
        assert_ne!(a.params.to_flat(), c.params.to_flat());
    }

    #[test]
    fn init_respects_fan_limits() {
        let net = Network::init(cfg(0.0), &mut RngStream::new(1)).unwrap();
        for l in &net.params.layers {
            let limit = (6.0 / (l.in_dim + l.out_dim) as f64).sqrt();
            assert!(l.weights.iter().all(|w| w.abs() <= limit));
        }
    }

    #[test]
    fn param_count_shape_arithmetic() {
        let c = NetworkConfig {
            n_users: 290,
            n_items: 300,
            embedding_dim: 10,
            hidden_sizes: vec![32],
            dropout_rate: 0.0,
            init: InitRule::FanBasedUniform,
        };
        // 2900 + 3000 + (640 + 32) + (32 + 1)
        assert_eq!(c.param_count(), 6605);
        let net = Network::init(c, &mut RngStream::new(0)).unwrap();
        assert_eq!(net.param_count(), 6605);

        let one = NetworkConfig {
            n_users: 1,
            n_items: 1,
            embedding_dim: 1,
            hidden_sizes: vec![1],
            dropout_rate: 0.0,
            init: InitRule::FanBasedUniform,
        };
        assert_eq!(Network::init(one, &mut RngStream::new(0)).unwrap().param_count(), 7);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = cfg(0.0);
        c.embedding_dim = 0;
        assert!(Network::init(c, &mut RngStream::new(0)).is_err());
        let mut c = cfg(0.0);
        c.hidden_sizes = vec![];
        assert!(c.validate().is_err());
        let mut c = cfg(0.0);
        c.hidden_sizes = vec![1, 1, 1, 1];
        assert!(c.validate().is_err());
        let mut c = cfg(0.0);
        c.hidden_sizes = vec![3, 0];
        assert!(c.validate().is_err());
        assert!(cfg(1.0).validate().is_err());
        let mut c = cfg(0.0);
        c.n_users = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_net_outputs_half() {
        let net = zeroed(cfg(0.3));
        let mut rng = RngStream::new(0);
        for mode in [ForwardMode::Deterministic, ForwardMode::StochasticInference] {
            assert_eq!(net.forward(1, 2, mode, &mut rng).unwrap(), 0.5);
        }
        assert_eq!(
            net.forward_batch(&[(0, 0), (1, 1), (4, 5)], ForwardMode::Deterministic, &mut rng)
                .unwrap(),
            vec![0.5, 0.5, 0.5]
        );
    }

    #[test]
    fn no_dropout_means_stochastic_equals_deterministic() {
        let net = Network::init(cfg(0.0), &mut RngStream::new(3)).unwrap();
        let mut rng = RngStream::new(11);
        let a = net.forward(2, 3, ForwardMode::Deterministic, &mut rng).unwrap();
        let b = net.forward(2, 3, ForwardMode::StochasticInference, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stochastic_inference_reproducible_from_seed() {
        let net = Network::init(cfg(0.5), &mut RngStream::new(3)).unwrap();
        let a = net
            .forward(2, 3, ForwardMode::StochasticInference, &mut RngStream::new(99))
            .unwrap();
        let b = net
            .forward(2, 3, ForwardMode::StochasticInference, &mut RngStream::new(99))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_matches_single_and_empty() {
        let net = Network::init(cfg(0.4), &mut RngStream::new(3)).unwrap();
        let single = net
            .forward(1, 4, ForwardMode::StochasticInference, &mut RngStream::new(5))
            .unwrap();
        let batch = net
            .forward_batch(&[(1, 4)], ForwardMode::StochasticInference, &mut RngStream::new(5))
            .unwrap();
        assert_eq!(batch, vec![single]);
        assert!(net
            .forward_batch(&[], ForwardMode::Deterministic, &mut RngStream::new(5))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn out_of_range_ids_error() {
        let net = zeroed(cfg(0.0));
        let mut rng = RngStream::new(0);
        assert!(matches!(
            net.forward(5, 0, ForwardMode::Deterministic, &mut rng),
            Err(Error::IdOutOfRange { kind: "user", .. })
        ));
        assert!(matches!(
            net.forward(0, 6, ForwardMode::Deterministic, &mut rng),
            Err(Error::IdOutOfRange { kind: "item", .. })
        ));
    }

    #[test]
    fn bce_gradient_on_output_bias() {
        let net = zeroed(cfg(0.0));
        let data = [DataTerm {
            user: 0,
            item: 0,
            label: true,
        }];
        let spec = LossSpec {
            data: &data,
            distill: &[],
            reg_kind: RegLossKind::Mse,
            distill_coef: 0.0,
            l2_coef: 0.0,
        };
        let (loss, g) = net
            .loss_and_grads(&spec, ForwardMode::Deterministic, &mut RngStream::new(0))
            .unwrap();
        assert!((loss.total - std::f64::consts::LN_2).abs() < 1e-12);
        let out_bias = g.0.layers.last().unwrap().bias[0];
        assert!((out_bias + 0.5).abs() < 1e-12);
    }

    #[test]
    fn l2_only_gradient_is_two_lambda_theta() {
        let net = Network::init(cfg(0.0), &mut RngStream::new(4)).unwrap();
        let lambda = 0.3;
        let spec = LossSpec {
            data: &[],
            distill: &[],
            reg_kind: RegLossKind::Mse,
            distill_coef: 0.0,
            l2_coef: lambda,
        };
        let (loss, g) = net
            .loss_and_grads(&spec, ForwardMode::Deterministic, &mut RngStream::new(0))
            .unwrap();
        assert!((loss.total - lambda * net.params.l2_weights()).abs() < 1e-12);
        for (gv, pv) in g.0.user_emb.iter().zip(&net.params.user_emb) {
            assert!((gv - 2.0 * lambda * pv).abs() < 1e-15);
        }
        for (gl, pl) in g.0.layers.iter().zip(&net.params.layers) {
            for (gv, pv) in gl.weights.iter().zip(&pl.weights) {
                assert!((gv - 2.0 * lambda * pv).abs() < 1e-15);
            }
            assert!(gl.bias.iter().all(|&b| b == 0.0));
        }
    }
}

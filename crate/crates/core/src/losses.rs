//! Scalar losses: BCE, the L2 penalty, the four teacher-student
//! discrepancies and the teacher/student composite objectives.
//!
//! Every probability that reaches a logarithm is clamped into
//! `[CLAMP_EPS, 1 - CLAMP_EPS]`. Derivatives are taken through the clamp,
//! so they vanish outside it.

use serde::{Deserialize, Serialize};

use crate::data::{Interaction, Source};
use crate::error::{Error, Result};
use crate::netcore::{DataTerm, DistillTerm, ForwardMode, Gradients, LossSpec, Network};
use crate::rng::RngStream;

pub const CLAMP_EPS: f64 = 1e-7;

/// Probability clamp applied before logarithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampPolicy {
    pub eps: f64,
}

impl Default for ClampPolicy {
    fn default() -> Self {
        Self { eps: CLAMP_EPS }
    }
}

impl ClampPolicy {
    pub fn apply(&self, p: f64) -> f64 {
        p.clamp(self.eps, 1.0 - self.eps)
    }

    /// Clamped value and whether the input was strictly inside the band.
    fn apply_tracked(&self, p: f64) -> (f64, bool) {
        let c = self.apply(p);
        (c, c == p)
    }
}

/// Teacher-student discrepancy used for the distillation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum RegLossKind {
    Mae,
    Mse,
    Kl,
    Jeffreys,
}

impl RegLossKind {
    pub const ALL: [RegLossKind; 4] = [Self::Mae, Self::Mse, Self::Kl, Self::Jeffreys];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mae => "mae",
            Self::Mse => "mse",
            Self::Kl => "kl",
            Self::Jeffreys => "jeffreys",
        }
    }
}

/// Parts of a composite objective:
/// `total = data_term + distill_coef * distill_term + l2_coef * reg_term`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub data_term: f64,
    pub distill_term: f64,
    pub reg_term: f64,
    pub distill_coef: f64,
    pub l2_coef: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(data_term: f64, distill_term: f64, reg_term: f64, distill_coef: f64, l2_coef: f64) -> Self {
        Self {
            data_term,
            distill_term,
            reg_term,
            distill_coef,
            l2_coef,
            total: data_term + distill_coef * distill_term + l2_coef * reg_term,
        }
    }

    pub fn recomposed(&self) -> f64 {
        self.data_term + self.distill_coef * self.distill_term + self.l2_coef * self.reg_term
    }
}

pub fn bce(p_hat: f64, label: bool) -> f64 {
    bce_with_grad(p_hat, label).0
}

/// BCE and its derivative with respect to `p_hat`.
pub fn bce_with_grad(p_hat: f64, label: bool) -> (f64, f64) {
    let (p, inside) = ClampPolicy::default().apply_tracked(p_hat);
    let (value, grad) = if label {
        (-p.ln(), -1.0 / p)
    } else {
        (-(1.0 - p).ln(), 1.0 / (1.0 - p))
    };
    (value, if inside { grad } else { 0.0 })
}

/// `Σ w_i · l_i`.
pub fn weighted_empirical_risk(losses: &[f64], weights: &[f64]) -> Result<f64> {
    if losses.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: losses.len(),
            right: weights.len(),
        });
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::Precondition("sample weights must be finite and nonnegative".into()));
    }
    Ok(losses.iter().zip(weights).map(|(l, w)| l * w).sum())
}

/// Sum of squared embedding and weight-matrix entries (biases excluded).
pub fn l2_reg(net: &Network) -> f64 {
    net.params().l2_weights()
}

fn kl_bernoulli(a: f64, b: f64) -> f64 {
    a * (a / b).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln()
}

pub fn reg_loss(kind: RegLossKind, p_teacher: f64, p_student: f64) -> f64 {
    reg_loss_with_grad(kind, p_teacher, p_student).0
}

/// Discrepancy and its derivative with respect to the student probability.
/// The teacher probability is a constant.
pub fn reg_loss_with_grad(kind: RegLossKind, p_teacher: f64, p_student: f64) -> (f64, f64) {
    let clamp = ClampPolicy::default();
    let t = clamp.apply(p_teacher);
    let (s, inside) = clamp.apply_tracked(p_student);
    let diff = t - s;
    let (value, grad) = match kind {
        RegLossKind::Mae => {
            let g = if diff > 0.0 {
                -1.0
            } else if diff < 0.0 {
                1.0
            } else {
                0.0
            };
            (diff.abs(), g)
        }
        RegLossKind::Mse => (diff * diff, -2.0 * diff),
        RegLossKind::Kl => (kl_bernoulli(t, s), -t / s + (1.0 - t) / (1.0 - s)),
        RegLossKind::Jeffreys => {
            let forward_grad = -t / s + (1.0 - t) / (1.0 - s);
            let reverse_grad = (s / t).ln() - ((1.0 - s) / (1.0 - t)).ln();
            (kl_bernoulli(t, s) + kl_bernoulli(s, t), forward_grad + reverse_grad)
        }
    };
    // Rounding can leave tiny negatives when t == s.
    (value.max(0.0), if inside { grad } else { 0.0 })
}

fn data_terms(batch: &[Interaction]) -> Vec<DataTerm> {
    batch
        .iter()
        .map(|x| DataTerm {
            user: x.user,
            item: x.item,
            label: x.label,
        })
        .collect()
}

fn check_teacher_batch(batch: &[Interaction]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("teacher batch"));
    }
    if batch.iter().any(|x| x.source != Source::Uniform) {
        return Err(Error::Precondition("teacher batch must hold uniform-source data only".into()));
    }
    Ok(())
}

/// Mean BCE over a uniform-source batch plus `λ_t · l2`.
pub fn teacher_loss(teacher: &Network, batch: &[Interaction], lambda_t: f64) -> Result<LossBreakdown> {
    teacher_loss_and_grads(teacher, batch, lambda_t, ForwardMode::Deterministic, &mut RngStream::new(0))
        .map(|(b, _)| b)
}

pub fn teacher_loss_and_grads(
    teacher: &Network,
    batch: &[Interaction],
    lambda_t: f64,
    mode: ForwardMode,
    rng: &mut RngStream,
) -> Result<(LossBreakdown, Gradients)> {
    check_teacher_batch(batch)?;
    let data = data_terms(batch);
    let spec = LossSpec {
        data: &data,
        distill: &[],
        reg_kind: RegLossKind::Mse,
        distill_coef: 0.0,
        l2_coef: lambda_t,
    };
    teacher.loss_and_grads(&spec, mode, rng)
}

/// Inputs of the student objective that are fixed for one step.
#[derive(Debug, Clone, Copy)]
pub struct StudentBatch<'a> {
    pub observed: &'a [Interaction],
    pub unobserved: &'a [(usize, usize)],
    /// Deterministic teacher probabilities on `unobserved`.
    pub teacher_targets: &'a [f64],
}

/// Mean BCE over the observed batch, plus `γ_reg` times the mean
/// discrepancy to the teacher over the unobserved batch, plus `λ_s · l2`.
pub fn student_loss(
    student: &Network,
    batch: StudentBatch<'_>,
    gamma_reg: f64,
    lambda_s: f64,
    kind: RegLossKind,
) -> Result<LossBreakdown> {
    student_loss_and_grads(
        student,
        batch,
        gamma_reg,
        lambda_s,
        kind,
        ForwardMode::Deterministic,
        &mut RngStream::new(0),
    )
    .map(|(b, _)| b)
}

pub fn student_loss_and_grads(
    student: &Network,
    batch: StudentBatch<'_>,
    gamma_reg: f64,
    lambda_s: f64,
    kind: RegLossKind,
    mode: ForwardMode,
    rng: &mut RngStream,
) -> Result<(LossBreakdown, Gradients)> {
    if batch.observed.is_empty() {
        return Err(Error::Empty("observed batch"));
    }
    if batch.unobserved.len() != batch.teacher_targets.len() {
        return Err(Error::LengthMismatch {
            left: batch.unobserved.len(),
            right: batch.teacher_targets.len(),
        });
    }
    let data = data_terms(batch.observed);
    let distill: Vec<DistillTerm> = batch
        .unobserved
        .iter()
        .zip(batch.teacher_targets)
        .map(|(&(user, item), &target)| DistillTerm { user, item, target })
        .collect();
    let spec = LossSpec {
        data: &data,
        distill: &distill,
        reg_kind: kind,
        distill_coef: gamma_reg,
        l2_coef: lambda_s,
    };
    student.loss_and_grads(&spec, mode, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{InitRule, NetworkConfig};
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn net(seed: u64) -> Network {
        let cfg = NetworkConfig {
            n_users: 3,
            n_items: 3,
            embedding_dim: 2,
            hidden_sizes: vec![3],
            dropout_rate: 0.0,
            init: InitRule::FanBasedUniform,
        };
        Network::init(cfg, &mut RngStream::new(seed)).unwrap()
    }

    fn zero_net() -> Network {
        let mut n = net(0);
        n.params_mut().fill(0.0);
        n
    }

    fn uniform(user: usize, item: usize, label: bool) -> Interaction {
        Interaction::new(user, item, if label { 5 } else { 2 }, Source::Uniform).unwrap()
    }

    #[test]
    fn bce_closed_forms() {
        assert!((bce(0.5, true) - 0.693_147_180_559_945_3).abs() < 1e-12);
        assert!((bce(0.9, false) - 2.302_585_092_994_045_7).abs() < 1e-12);
        let perfect = bce(1.0, true);
        assert!(perfect > 0.0 && perfect < 1.1e-7);
        assert!(bce(0.0, true).is_finite());
    }

    #[test]
    fn bce_gradient_is_zero_outside_clamp() {
        assert_eq!(bce_with_grad(1.0, true).1, 0.0);
        assert_eq!(bce_with_grad(0.0, false).1, 0.0);
        assert!((bce_with_grad(0.25, true).1 + 4.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_risk_cases() {
        assert_eq!(weighted_empirical_risk(&[1.0, 3.0], &[0.25, 0.75]).unwrap(), 2.5);
        assert_eq!(weighted_empirical_risk(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), 0.0);
        let l = [0.2, 0.4, 0.9];
        let mean = weighted_empirical_risk(&l, &[1.0 / 3.0; 3]).unwrap();
        assert!((mean - 0.5).abs() < 1e-15);
        assert!(weighted_empirical_risk(&[1.0], &[1.0, 2.0]).is_err());
        assert!(weighted_empirical_risk(&[1.0], &[-1.0]).is_err());
    }

    #[test]
    fn l2_reg_cases() {
        assert_eq!(l2_reg(&zero_net()), 0.0);
        let mut n = zero_net();
        n.params_mut().layers[0].weights[0] = 2.0;
        assert_eq!(l2_reg(&n), 4.0);
        n.params_mut().layers[0].bias[0] = 10.0;
        assert_eq!(l2_reg(&n), 4.0);

        let base = net(3);
        let mut scaled = base.clone();
        let c = 1.7;
        for s in scaled.params_mut().slices_mut() {
            s.iter_mut().for_each(|v| *v *= c);
        }
        assert!((l2_reg(&scaled) - c * c * l2_reg(&base)).abs() < 1e-12);
    }

    #[test]
    fn kl_closed_form() {
        // 0.9 ln 1.8 + 0.1 ln 0.2
        assert!((reg_loss(RegLossKind::Kl, 0.9, 0.5) - 0.368_064_207_168_497_07).abs() < 1e-12);
        assert!((reg_loss(RegLossKind::Mae, 0.9, 0.5) - 0.4).abs() < 1e-12);
        assert!((reg_loss(RegLossKind::Mse, 0.9, 0.5) - 0.16).abs() < 1e-12);
    }

    #[test]
    fn clamp_keeps_divergences_finite_at_boundary() {
        for kind in RegLossKind::ALL {
            for (t, s) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1e-300), (0.0, 0.0)] {
                let (v, g) = reg_loss_with_grad(kind, t, s);
                assert!(v.is_finite() && g.is_finite(), "{kind:?} {t} {s}");
            }
        }
        // unclamped, t = 1 and s -> 0 diverges
        assert!(kl_bernoulli(1.0 - 1e-16, 1e-300) > 600.0);
    }

    proptest! {
        #[test]
        fn discrepancy_properties(t in 0.0f64..=1.0, s in 0.0f64..=1.0) {
            for kind in RegLossKind::ALL {
                prop_assert!(reg_loss(kind, t, s) >= 0.0);
                prop_assert_eq!(reg_loss(kind, t, t), 0.0);
            }
            prop_assert_eq!(reg_loss(RegLossKind::Jeffreys, t, s), reg_loss(RegLossKind::Jeffreys, s, t));
            prop_assert!(reg_loss(RegLossKind::Mse, t, s) <= reg_loss(RegLossKind::Mae, t, s));
        }

        #[test]
        fn discrepancy_gradient_matches_difference(t in 0.01f64..0.99, s in 0.01f64..0.99) {
            let h = 1e-6;
            for kind in [RegLossKind::Mse, RegLossKind::Kl, RegLossKind::Jeffreys] {
                let fd = (reg_loss(kind, t, s + h) - reg_loss(kind, t, s - h)) / (2.0 * h);
                let g = reg_loss_with_grad(kind, t, s).1;
                prop_assert!((fd - g).abs() < 1e-5 * (1.0 + g.abs()), "{:?} {} {}", kind, fd, g);
            }
        }
    }

    #[test]
    fn teacher_loss_cases() {
        let z = zero_net();
        let b = teacher_loss(&z, &[uniform(0, 0, true)], 0.0).unwrap();
        assert!((b.total - LN2).abs() < 1e-12);
        assert_eq!(b.distill_term, 0.0);

        let b = teacher_loss(&z, &[uniform(0, 0, true), uniform(1, 2, false)], 1.0).unwrap();
        assert!((b.total - LN2).abs() < 1e-12);
        assert_eq!(b.reg_term, 0.0);

        let n = net(5);
        let batch = [uniform(0, 1, true), uniform(2, 2, false)];
        let one = teacher_loss(&n, &batch, 0.1).unwrap();
        let two = teacher_loss(&n, &batch, 0.2).unwrap();
        assert_eq!(one.data_term, two.data_term);
        assert!((two.l2_coef * two.reg_term - 2.0 * one.l2_coef * one.reg_term).abs() < 1e-12);
    }

    #[test]
    fn teacher_loss_rejects_bad_batches() {
        assert!(matches!(teacher_loss(&zero_net(), &[], 0.0), Err(Error::Empty(_))));
        let biased = Interaction::new(0, 0, 5, Source::Biased).unwrap();
        assert!(teacher_loss(&zero_net(), &[biased], 0.0).is_err());
    }

    #[test]
    fn student_loss_closed_form() {
        let z = zero_net();
        let observed = [uniform(0, 0, true)];
        let unobserved = [(1, 1)];
        let b = student_loss(
            &z,
            StudentBatch {
                observed: &observed,
                unobserved: &unobserved,
                teacher_targets: &[0.9],
            },
            1.0,
            0.0,
            RegLossKind::Kl,
        )
        .unwrap();
        assert!((b.total - 1.061_211_387_728_442_4).abs() < 1e-12, "{}", b.total);
        assert!((b.recomposed() - b.total).abs() < 1e-12);
    }

    #[test]
    fn student_loss_reductions() {
        let n = net(9);
        let observed = [uniform(0, 0, true), uniform(1, 2, false)];
        let unobserved = [(2, 0), (0, 2)];
        let matched = n.predict(&unobserved).unwrap();
        let b = student_loss(
            &n,
            StudentBatch {
                observed: &observed,
                unobserved: &unobserved,
                teacher_targets: &matched,
            },
            1.0,
            0.01,
            RegLossKind::Jeffreys,
        )
        .unwrap();
        assert!(b.distill_term.abs() < 1e-15);

        let off = student_loss(
            &n,
            StudentBatch {
                observed: &observed,
                unobserved: &unobserved,
                teacher_targets: &[0.1, 0.9],
            },
            0.0,
            0.01,
            RegLossKind::Kl,
        )
        .unwrap();
        let t = teacher_loss(&n, &observed, 0.01).unwrap();
        assert_eq!(off.total, t.total);
    }

    #[test]
    fn student_loss_errors() {
        let z = zero_net();
        let observed = [uniform(0, 0, true)];
        let empty = StudentBatch {
            observed: &[],
            unobserved: &[],
            teacher_targets: &[],
        };
        assert!(student_loss(&z, empty, 1.0, 0.0, RegLossKind::Kl).is_err());
        let mismatched = StudentBatch {
            observed: &observed,
            unobserved: &[(0, 1)],
            teacher_targets: &[],
        };
        assert!(matches!(
            student_loss(&z, mismatched, 1.0, 0.0, RegLossKind::Kl),
            Err(Error::LengthMismatch { .. })
        ));
    }
}

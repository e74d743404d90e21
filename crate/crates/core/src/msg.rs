//! Message types: complex Gaussian messages and discrete symbol messages.
//!
//! These are the currency of every edge in the receiver factor graph.
//! Gaussian messages support the usual precision-domain product and division;
//! divisions can produce non-positive variances, which callers replace with a
//! large cap via [`GaussMsg::ep_extrinsic`].

use num_complex::Complex64;

/// Smallest variance kept after moment matching. Matched variances of
/// (near-)point masses are clamped to this floor instead of zero so that
/// downstream precision arithmetic stays finite.
pub const VAR_FLOOR: f64 = 1e-12;

/// A circularly-symmetric complex Gaussian message: mean and variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussMsg {
    pub mean: Complex64,
    pub var: f64,
}

impl GaussMsg {
    /// Build a message with a strictly positive, finite variance.
    ///
    /// Non-finite means are replaced with zero and invalid variances with
    /// `var_cap`, mirroring the receiver's clamping rule.
    pub fn sanitized(mean: Complex64, var: f64, var_cap: f64) -> GaussMsg {
        let mean = if mean.re.is_finite() && mean.im.is_finite() {
            mean
        } else {
            Complex64::new(0.0, 0.0)
        };
        let var = if var.is_finite() && var > 0.0 { var } else { var_cap };
        GaussMsg { mean, var }
    }

    /// Build a message, flooring the variance at [`VAR_FLOOR`].
    pub fn with_floor(mean: Complex64, var: f64) -> GaussMsg {
        GaussMsg {
            mean,
            var: var.max(VAR_FLOOR),
        }
    }

    /// Precision-weighted product of two Gaussians.
    pub fn product(&self, other: &GaussMsg) -> GaussMsg {
        let prec = 1.0 / self.var + 1.0 / other.var;
        let var = 1.0 / prec;
        let mean = (self.mean / self.var + other.mean / other.var) * var;
        GaussMsg { mean, var }
    }

    /// Gaussian division `self / other` in the precision domain.
    ///
    /// Returns `None` when the resulting precision is non-positive or not
    /// finite (no valid Gaussian quotient exists).
    pub fn divide(&self, other: &GaussMsg) -> Option<GaussMsg> {
        let prec = 1.0 / self.var - 1.0 / other.var;
        if !(prec > 0.0) || !prec.is_finite() {
            return None;
        }
        let var = 1.0 / prec;
        if !var.is_finite() {
            return None;
        }
        let mean = (self.mean / self.var - other.mean / other.var) * var;
        if !mean.re.is_finite() || !mean.im.is_finite() {
            return None;
        }
        Some(GaussMsg { mean, var })
    }

    /// EP extrinsic update: divide the belief by the incoming message and,
    /// when the division degenerates, fall back to the belief mean with the
    /// configured variance cap.
    pub fn ep_extrinsic(belief: &GaussMsg, incoming: &GaussMsg, var_cap: f64) -> GaussMsg {
        match belief.divide(incoming) {
            Some(msg) => msg,
            None => GaussMsg {
                mean: belief.mean,
                var: var_cap,
            },
        }
    }

    /// Convex blend of `self` (new value) with `prev`, in mean/variance space.
    pub fn damped(&self, prev: &GaussMsg, damping: f64) -> GaussMsg {
        if damping >= 1.0 {
            return *self;
        }
        GaussMsg {
            mean: self.mean * damping + prev.mean * (1.0 - damping),
            var: self.var * damping + prev.var * (1.0 - damping),
        }
    }

    /// Damped blend that treats a previous message at the variance cap as
    /// uninformative: blending toward the cap sentinel is not stabilization,
    /// so the raw update replaces it outright.
    pub fn damped_informative(&self, prev: &GaussMsg, damping: f64, var_cap: f64) -> GaussMsg {
        if prev.var >= var_cap {
            *self
        } else {
            self.damped(prev, damping)
        }
    }

    /// Density of this Gaussian at `x`.
    pub fn pdf(&self, x: Complex64) -> f64 {
        let d = x - self.mean;
        (-(d.norm_sqr()) / self.var).exp() / (std::f64::consts::PI * self.var)
    }

    /// Log-density of this Gaussian at `x`, dropping the constant `-ln(pi)`.
    pub fn log_pdf_unnorm(&self, x: Complex64) -> f64 {
        let d = x - self.mean;
        -d.norm_sqr() / self.var - self.var.ln()
    }
}

/// A normalized distribution over the augmented symbol alphabet.
///
/// Index 0 is always the zero codeword; indices 1..=M are the codebook
/// entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMsg {
    probs: Vec<f64>,
}

impl DiscreteMsg {
    /// Uniform distribution over `n` hypotheses.
    pub fn uniform(n: usize) -> DiscreteMsg {
        DiscreteMsg {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Normalize raw nonnegative weights. Falls back to uniform when the
    /// total mass is zero or not finite.
    pub fn from_weights(weights: &[f64]) -> DiscreteMsg {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return DiscreteMsg::uniform(weights.len());
        }
        DiscreteMsg {
            probs: weights.iter().map(|w| w / total).collect(),
        }
    }

    /// Normalize log-domain weights with the usual max-shift. Falls back to
    /// uniform when every weight is -inf.
    pub fn from_log_weights(logw: &[f64]) -> DiscreteMsg {
        let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return DiscreteMsg::uniform(logw.len());
        }
        let w: Vec<f64> = logw.iter().map(|l| (l - m).exp()).collect();
        DiscreteMsg::from_weights(&w)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, idx: usize) -> f64 {
        self.probs[idx]
    }

    /// Index of the most probable hypothesis.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Index of the most probable nonzero codeword (ignores index 0).
    pub fn argmax_nonzero(&self) -> usize {
        let mut best = 1;
        for i in 2..self.probs.len() {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn product_then_divide_round_trips() {
        let a = GaussMsg { mean: c(0.3, -1.2), var: 0.7 };
        let b = GaussMsg { mean: c(-2.0, 0.4), var: 2.5 };
        let p = a.product(&b);
        let q = p.divide(&b).unwrap();
        assert!((q.mean - a.mean).norm() < 1e-12);
        assert!((q.var - a.var).abs() < 1e-12);
    }

    #[test]
    fn divide_by_wider_message_fails_cleanly() {
        let belief = GaussMsg { mean: c(1.0, 0.0), var: 2.0 };
        let incoming = GaussMsg { mean: c(0.0, 0.0), var: 1.0 };
        // Belief is wider than the incoming message: no valid quotient.
        assert!(belief.divide(&incoming).is_none());
        let ext = GaussMsg::ep_extrinsic(&belief, &incoming, 1e6);
        assert_eq!(ext.var, 1e6);
        assert_eq!(ext.mean, belief.mean);
    }

    #[test]
    fn dividing_message_by_itself_hits_the_cap() {
        let m = GaussMsg { mean: c(0.5, 0.5), var: 1.3 };
        let ext = GaussMsg::ep_extrinsic(&m, &m, 1e6);
        assert_eq!(ext.var, 1e6);
    }

    #[test]
    fn sanitize_replaces_bad_variance_and_mean()  {
        let m = GaussMsg::sanitized(c(f64::NAN, 0.0), -1.0, 1e6);
        assert_eq!(m.var, 1e6);
        assert_eq!(m.mean, c(0.0, 0.0));
        let ok = GaussMsg::sanitized(c(1.0, 2.0), 0.5, 1e6);
        assert_eq!(ok.var, 0.5);
    }

    #[test]
    fn damping_one_is_identity() {
        let new = GaussMsg { mean: c(1.0, 1.0), var: 2.0 };
        let prev = GaussMsg { mean: c(0.0, 0.0), var: 1.0 };
        assert_eq!(new.damped(&prev, 1.0), new);
        let half = new.damped(&prev, 0.5);
        assert!((half.mean - c(0.5, 0.5)).norm() < 1e-15);
        assert!((half.var - 1.5).abs() < 1e-15);
    }

    #[test]
    fn discrete_normalization_is_idempotent() {
        let m = DiscreteMsg::from_weights(&[3.0, 1.0, 4.0, 1.0, 5.0]);
        let again = DiscreteMsg::from_weights(m.probs());
        for (a, b) in m.probs().iter().zip(again.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((m.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_weights_handle_large_offsets() {
        let m = DiscreteMsg::from_log_weights(&[-900.0, -901.0, -905.0]);
        assert!((m.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.prob(0) > m.prob(1));
    }

    #[test]
    fn all_neg_inf_falls_back_to_uniform() {
        let m = DiscreteMsg::from_log_weights(&[f64::NEG_INFINITY; 5]);
        for p in m.probs() {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    proptest! {
        // Gaussian algebra: divide(product(a, b), b) == a.
        #[test]
        fn prop_product_divide_identity(
            mr in -10.0f64..10.0, mi in -10.0f64..10.0,
            nr in -10.0f64..10.0, ni in -10.0f64..10.0,
            va in 1e-3f64..1e3, vb in 1e-3f64..1e3,
        ) {
            let a = GaussMsg { mean: c(mr, mi), var: va };
            let b = GaussMsg { mean: c(nr, ni), var: vb };
            let q = a.product(&b).divide(&b).unwrap();
            prop_assert!((q.mean - a.mean).norm() < 1e-9 * (1.0 + a.mean.norm()));
            prop_assert!((q.var - a.var).abs() < 1e-9 * (1.0 + a.var));
        }

        // Normalization always yields a simplex vector.
        #[test]
        fn prop_discrete_sums_to_one(w in proptest::collection::vec(0.0f64..1e6, 1..12)) {
            let m = DiscreteMsg::from_weights(&w);
            prop_assert!((m.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(m.probs().iter().all(|p| *p >= 0.0));
        }
    }
}

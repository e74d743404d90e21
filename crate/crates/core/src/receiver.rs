//! Joint channel estimation, data decoding, and user activity detection.
//!
//! This is the iterative message-passing receiver operating on one fading
//! block. Interference terms u = alpha * x are handled per user: the exact
//! posterior of u is a Gaussian mixture over the augmented symbol alphabet
//! (plus a point mass at zero for the silent hypothesis), which is projected
//! back onto a single Gaussian by moment matching before the extrinsic
//! message is formed by Gaussian division. The channel side combines the
//! per-slot fading messages with the tap-domain chain, where a variational
//! Gamma prior on the tap precisions shrinks silent users' channels to zero;
//! the per-user estimated channel power then drives activity detection.
//!
//! One iteration runs the following sweeps in order, flooding within each:
//! interference cancellation, symbol costs and extrinsics, moment-matched
//! interference messages, moment-matched fading messages (pilot slots use an
//! exact rescale instead), per-slot combining, fading beliefs and extrinsics,
//! tap extraction, tap combining, the variational precision update, and the
//! tap extrinsics.

use num_complex::Complex64;

use crate::channel::{DftTable, ReceivedGrid};
use crate::codebook::Codebook;
use crate::config::SystemConfig;
use crate::error::Result;
use crate::msg::{DiscreteMsg, GaussMsg, VAR_FLOOR};
use crate::pattern::FactorGraphPattern;
use crate::pilot::{ml_estimate, MlEstimate, PilotBook};

/// Stop iterating once the largest absolute change of any tap-belief mean
/// falls below this value.
pub const EARLY_STOP_TOL: f64 = 1e-4;

/// Iterations that run a single variational shrinkage round before the
/// coupled updates are taken to their fixed point. While the message
/// variances are still wide the one-round update avoids shrinking real taps
/// away; afterwards the fixed point lets the activity decisions settle.
pub const VB_ANNEAL_ITERS: usize = 6;

// ---------------------------------------------------------------------------
// Standalone message computations
// ---------------------------------------------------------------------------

/// Interference cancellation at a function node: subtract every other
/// interference mean from the observation and add up their variances.
pub fn interference_cancel(
    y: Complex64,
    incoming: &[GaussMsg],
    exclude: usize,
    noise_var: f64,
) -> GaussMsg {
    let mut mean = y;
    let mut var = noise_var;
    for (i, msg) in incoming.iter().enumerate() {
        if i == exclude {
            continue;
        }
        mean -= msg.mean;
        var += msg.var;
    }
    GaussMsg::with_floor(mean, var)
}

/// Per-hypothesis symbol cost: the negative log of the marginal likelihood
/// of symbol value `x` after integrating out the fading coefficient,
///
/// `|tau_obs - tau_a x|^2 / (v_obs + v_a |x|^2) + ln(v_obs + v_a |x|^2)`.
pub fn symbol_costs(values: &[Complex64], alpha: GaussMsg, obs: GaussMsg) -> Vec<f64> {
    values
        .iter()
        .map(|&x| {
            let v = obs.var + alpha.var * x.norm_sqr();
            let d = obs.mean - alpha.mean * x;
            d.norm_sqr() / v + v.ln()
        })
        .collect()
}

/// Gaussian mixture representation of the interference prior u = alpha * x.
///
/// Component 0 is the point mass at zero (silent hypothesis) and carries
/// exactly the zero-symbol probability of the input message; component j is
/// the Gaussian induced by symbol value j with relative weight
/// `p(x_j) |x_j|`.
#[derive(Debug, Clone)]
pub struct UMixture {
    /// Relative (unnormalized) component weights.
    pub weights: Vec<f64>,
    pub means: Vec<Complex64>,
    pub vars: Vec<f64>,
}

/// Build the interference mixture from a symbol message and the fading
/// extrinsic.
pub fn u_prior_mixture(
    symbol_probs: &[f64],
    values: &[Complex64],
    alpha: GaussMsg,
) -> UMixture {
    debug_assert_eq!(symbol_probs.len(), values.len());
    let mut weights = Vec::with_capacity(values.len());
    let mut means = Vec::with_capacity(values.len());
    let mut vars = Vec::with_capacity(values.len());
    for (j, &x) in values.iter().enumerate() {
        if j == 0 {
            weights.push(symbol_probs[0]);
            means.push(Complex64::new(0.0, 0.0));
            vars.push(0.0);
        } else {
            weights.push(symbol_probs[j] * x.norm());
            means.push(alpha.mean * x);
            vars.push(alpha.var * x.norm_sqr());
        }
    }
    UMixture {
        weights,
        means,
        vars,
    }
}

/// Combine the interference mixture with the Gaussian observation message
/// and project the posterior onto a single Gaussian by moment matching.
///
/// Returns the posterior component weights and the matched (mean, variance);
/// the variance is floored at [`VAR_FLOOR`]. Degenerate weights (all zero)
/// fall back to the prior-weighted moments.
pub fn project_u_posterior(mix: &UMixture, obs: GaussMsg) -> (Vec<f64>, Complex64, f64) {
    let n = mix.weights.len();
    let mut logw = vec![f64::NEG_INFINITY; n];
    for j in 0..n {
        if mix.weights[j] > 0.0 {
            let v = obs.var + mix.vars[j];
            let d = obs.mean - mix.means[j];
            logw[j] = mix.weights[j].ln() - d.norm_sqr() / v - v.ln();
        }
    }
    let mut beta = DiscreteMsg::from_log_weights(&logw);
    if !logw.iter().any(|l| l.is_finite()) {
        // No component explains the observation: keep the prior weighting.
        beta = DiscreteMsg::from_weights(&mix.weights);
    }
    let mut mean = Complex64::new(0.0, 0.0);
    let mut second = 0.0;
    for j in 0..n {
        let denom = obs.var + mix.vars[j];
        let tau = (mix.means[j] * obs.var + obs.mean * mix.vars[j]) / denom;
        let ups = obs.var * mix.vars[j] / denom;
        let w = beta.prob(j);
        mean += tau * w;
        second += w * (tau.norm_sqr() + ups);
    }
    let var = (second - mean.norm_sqr()).max(VAR_FLOOR);
    (beta.probs().to_vec(), mean, var)
}

/// Posterior of the fading coefficient given a symbol message, the fading
/// extrinsic, and the Gaussian observation message, projected onto a single
/// Gaussian by moment matching.
///
/// The mixture runs over the augmented alphabet; the zero-symbol branch
/// keeps the prior moments (the observation carries no information about
/// alpha when the user is silent).
pub fn project_alpha_posterior(
    symbol_probs: &[f64],
    values: &[Complex64],
    alpha: GaussMsg,
    obs: GaussMsg,
) -> (Vec<f64>, Complex64, f64) {
    debug_assert_eq!(symbol_probs.len(), values.len());
    let n = values.len();
    let mut logw = vec![f64::NEG_INFINITY; n];
    for (j, &x) in values.iter().enumerate() {
        if symbol_probs[j] > 0.0 {
            let v = obs.var + alpha.var * x.norm_sqr();
            let d = obs.mean - alpha.mean * x;
            logw[j] = symbol_probs[j].ln() - d.norm_sqr() / v - v.ln();
        }
    }
    let mut beta = DiscreteMsg::from_log_weights(&logw);
    if !logw.iter().any(|l| l.is_finite()) {
        beta = DiscreteMsg::from_weights(symbol_probs);
    }
    let mut mean = Complex64::new(0.0, 0.0);
    let mut second = 0.0;
    for (j, &x) in values.iter().enumerate() {
        let denom = obs.var + alpha.var * x.norm_sqr();
        let tau = (alpha.mean * obs.var + obs.mean * x.conj() * alpha.var) / denom;
        let ups = obs.var * alpha.var / denom;
        let w = beta.prob(j);
        mean += tau * w;
        second += w * (tau.norm_sqr() + ups);
    }
    let var = (second - mean.norm_sqr()).max(VAR_FLOOR);
    (beta.probs().to_vec(), mean, var)
}

/// Precision-weighted product of a set of Gaussian messages.
pub fn precision_combine<'a, I: IntoIterator<Item = &'a GaussMsg>>(msgs: I) -> GaussMsg {
    let mut prec = 0.0;
    let mut acc = Complex64::new(0.0, 0.0);
    for m in msgs {
        prec += 1.0 / m.var;
        acc += m.mean / m.var;
    }
    let var = 1.0 / prec;
    GaussMsg::with_floor(acc * var, var)
}

/// Fading message synthesized from the tap messages through one DFT row.
pub fn taps_to_alpha(f_row: &[Complex64], taps: &[GaussMsg]) -> GaussMsg {
    let mut mean = Complex64::new(0.0, 0.0);
    let mut var = 0.0;
    for (f, t) in f_row.iter().zip(taps) {
        mean += f * t.mean;
        var += f.norm_sqr() * t.var;
    }
    GaussMsg::with_floor(mean, var)
}

/// Per-tap message extracted from a fading message by cancelling the other
/// taps and dividing out the DFT entry.
pub fn alpha_to_tap(
    f_row: &[Complex64],
    alpha: GaussMsg,
    taps: &[GaussMsg],
    tap: usize,
) -> GaussMsg {
    let mut mean = alpha.mean;
    let mut var = alpha.var;
    for (i, (f, t)) in f_row.iter().zip(taps).enumerate() {
        if i == tap {
            continue;
        }
        mean -= f * t.mean;
        var += f.norm_sqr() * t.var;
    }
    let f = f_row[tap];
    GaussMsg::with_floor(mean / f, var / f.norm_sqr())
}

/// Tap belief given a precision estimate: the product of the combined tap
/// message with the zero-mean Gaussian prior of precision `tau_lambda`.
pub fn vb_shrink(combined: GaussMsg, tau_lambda: f64) -> GaussMsg {
    let shrink = 1.0 / (1.0 + tau_lambda * combined.var);
    GaussMsg::with_floor(combined.mean * shrink, combined.var * shrink)
}

/// Variational update of a tap: alternate the belief (product with the
/// zero-mean precision prior) and the precision refresh for up to
/// `max_inner` rounds. With one round this is the plain coordinate update;
/// running it further lands the (belief, precision) pair on the fixed point
/// of the coupled equations, so taps whose apparent power does not exceed
/// their message variance are shrunk toward zero within one sweep. Returns
/// (belief, tau_lambda, Gamma rate b_hat).
pub fn vb_tap_update(
    combined: GaussMsg,
    tau_lambda: f64,
    gamma_a: f64,
    gamma_b: f64,
    max_inner: usize,
) -> (GaussMsg, f64, f64) {
    let mut tau = tau_lambda;
    let mut belief = vb_shrink(combined, tau);
    for _ in 0..max_inner {
        belief = vb_shrink(combined, tau);
        let next = (gamma_a + 1.0) / (gamma_b + belief.mean.norm_sqr() + belief.var);
        let settled = (next - tau).abs() <= 1e-10 * tau.abs().max(1.0);
        tau = next;
        if settled {
            break;
        }
    }
    let b_hat = gamma_b + belief.mean.norm_sqr() + belief.var;
    (belief, tau, b_hat)
}

/// Posterior Gamma belief of one tap precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaBelief {
    pub a_hat: f64,
    pub b_hat: f64,
}

impl GammaBelief {
    /// Mean of the Gamma belief, the precision estimate tau_lambda.
    pub fn mean(&self) -> f64 {
        self.a_hat / self.b_hat
    }
}

/// Declare users inactive when their estimated total channel power
/// (sum over taps of 1/tau_lambda) falls below the threshold.
pub fn detect_active_from_powers(powers: &[f64], threshold: f64) -> Vec<bool> {
    powers.iter().map(|p| *p >= threshold).collect()
}

// ---------------------------------------------------------------------------
// Channel estimation / activity loop state (shared with the BP-MF receiver)
// ---------------------------------------------------------------------------

/// Message arrays of the channel and activity loops, indexed by block,
/// pattern edge (subcarrier, user), and tap.
#[derive(Debug, Clone)]
pub(crate) struct ChannelLoop {
    pub blocks: usize,
    pub edges: usize,
    pub taps: usize,
    pub users: usize,
    /// Fading message from the DFT constraint, per (block, edge).
    pub phi_to_alpha: Vec<GaussMsg>,
    /// Fading belief, per (block, edge).
    pub alpha_belief: Vec<GaussMsg>,
    /// Per-tap extraction messages, per (block, edge, tap).
    pub phi_to_h: Vec<GaussMsg>,
    /// Tap extrinsics toward the DFT constraints, per (block, edge, tap).
    pub h_to_phi: Vec<GaussMsg>,
    /// Combined tap message, per (user, tap).
    pub h_to_q: Vec<GaussMsg>,
    /// Tap belief, per (user, tap).
    pub h_belief: Vec<GaussMsg>,
    /// Current precision estimates, per (user, tap).
    pub tau_lambda: Vec<f64>,
    /// Current Gamma rate parameters, per (user, tap).
    pub gamma_b_hat: Vec<f64>,
}

impl ChannelLoop {
    pub fn new(ml: &MlEstimate, cfg: &SystemConfig, pattern: &FactorGraphPattern) -> Self {
        let blocks = cfg.blocks;
        let edges = pattern.edge_count();
        let taps = cfg.taps;
        let users = cfg.users;
        let zero = GaussMsg {
            mean: Complex64::new(0.0, 0.0),
            var: cfg.var_cap,
        };
        let mut h_to_phi = vec![zero; blocks * edges * taps];
        for b in 0..blocks {
            for e in 0..edges {
                let (_, k) = pattern.edge_endpoints(e);
                for l in 0..taps {
                    h_to_phi[(b * edges + e) * taps + l] = GaussMsg {
                        mean: ml.user_estimate(k)[l],
                        var: 1.0,
                    };
                }
            }
        }
        let mut h_belief = vec![zero; users * taps];
        for k in 0..users {
            for l in 0..taps {
                h_belief[k * taps + l] = GaussMsg {
                    mean: ml.user_estimate(k)[l],
                    var: 1.0,
                };
            }
        }
        ChannelLoop {
            blocks,
            edges,
            taps,
            users,
            phi_to_alpha: vec![zero; blocks * edges],
            alpha_belief: vec![zero; blocks * edges],
            phi_to_h: vec![zero; blocks * edges * taps],
            h_to_phi,
            h_to_q: vec![zero; users * taps],
            h_belief,
            tau_lambda: vec![cfg.gamma_a / cfg.gamma_b; users * taps],
            gamma_b_hat: vec![cfg.gamma_b; users * taps],
        }
    }

    fn f_row(&self, dft: &DftTable, b: usize, n: usize) -> Vec<Complex64> {
        (0..self.taps).map(|l| dft.entry(b, n, l)).collect()
    }

    /// Synthesize the fading messages from the current tap extrinsics.
    pub fn update_phi_to_alpha(&mut self, dft: &DftTable, pattern: &FactorGraphPattern) {
        for b in 0..self.blocks {
            for e in 0..self.edges {
                let (n, _) = pattern.edge_endpoints(e);
                let row = self.f_row(dft, b, n);
                let base = (b * self.edges + e) * self.taps;
                self.phi_to_alpha[b * self.edges + e] =
                    taps_to_alpha(&row, &self.h_to_phi[base..base + self.taps]);
            }
        }
    }

    /// Fading beliefs: product of the slot-combined message with the DFT
    /// message.
    pub fn update_alpha_belief(&mut self, alpha_to_phi: &[GaussMsg]) {
        for (i, belief) in self.alpha_belief.iter_mut().enumerate() {
            *belief = alpha_to_phi[i].product(&self.phi_to_alpha[i]);
        }
    }

    /// Per-tap extraction from the slot-combined fading messages.
    pub fn update_phi_to_h(
        &mut self,
        alpha_to_phi: &[GaussMsg],
        dft: &DftTable,
        pattern: &FactorGraphPattern,
    ) {
        for b in 0..self.blocks {
            for e in 0..self.edges {
                let (n, _) = pattern.edge_endpoints(e);
                let row = self.f_row(dft, b, n);
                let base = (b * self.edges + e) * self.taps;
                let taps: Vec<GaussMsg> = self.h_to_phi[base..base + self.taps].to_vec();
                for l in 0..self.taps {
                    self.phi_to_h[base + l] =
                        alpha_to_tap(&row, alpha_to_phi[b * self.edges + e], &taps, l);
                }
            }
        }
    }

    /// Combine the per-edge tap messages of each user across blocks and
    /// occupied subcarriers.
    pub fn update_h_to_q(&mut self, pattern: &FactorGraphPattern) {
        for k in 0..self.users {
            for l in 0..self.taps {
                let mut prec = 0.0;
                let mut acc = Complex64::new(0.0, 0.0);
                for b in 0..self.blocks {
                    for &e in pattern.edges_of_user(k) {
                        let m = self.phi_to_h[(b * self.edges + e) * self.taps + l];
                        prec += 1.0 / m.var;
                        acc += m.mean / m.var;
                    }
                }
                let var = 1.0 / prec;
                self.h_to_q[k * self.taps + l] = GaussMsg::with_floor(acc * var, var);
            }
        }
    }

    /// Variational tap update: beliefs, Gamma rates, and precisions.
    ///
    /// `max_inner` bounds the rounds of the coupled belief/precision
    /// refresh; early iterations anneal with a single round, later ones run
    /// to the fixed point so the shrinkage decisions settle.
    pub fn update_vb(&mut self, cfg: &SystemConfig, max_inner: usize) {
        for i in 0..self.h_to_q.len() {
            let (belief, tau, b_hat) = vb_tap_update(
                self.h_to_q[i],
                self.tau_lambda[i],
                cfg.gamma_a,
                cfg.gamma_b,
                max_inner,
            );
            self.h_belief[i] = belief;
            self.tau_lambda[i] = tau;
            self.gamma_b_hat[i] = b_hat;
        }
    }

    /// Tap extrinsics: belief divided by the incoming per-edge message.
    pub fn update_h_to_phi(&mut self, pattern: &FactorGraphPattern, var_cap: f64) {
        for b in 0..self.blocks {
            for e in 0..self.edges {
                let (_, k) = pattern.edge_endpoints(e);
                let base = (b * self.edges + e) * self.taps;
                for l in 0..self.taps {
                    self.h_to_phi[base + l] = GaussMsg::ep_extrinsic(
                        &self.h_belief[k * self.taps + l],
                        &self.phi_to_h[base + l],
                        var_cap,
                    );
                }
            }
        }
    }

    /// Estimated total channel power per user.
    pub fn user_powers(&self, gamma_a: f64) -> Vec<f64> {
        (0..self.users)
            .map(|k| {
                (0..self.taps)
                    .map(|l| self.gamma_b_hat[k * self.taps + l] / (gamma_a + 1.0))
                    .sum()
            })
            .collect()
    }

    pub fn gamma_belief(&self, user: usize, tap: usize, gamma_a: f64) -> GammaBelief {
        GammaBelief {
            a_hat: gamma_a + 1.0,
            b_hat: self.gamma_b_hat[user * self.taps + tap],
        }
    }

    pub fn h_means(&self) -> Vec<Complex64> {
        self.h_belief.iter().map(|m| m.mean).collect()
    }
}

// ---------------------------------------------------------------------------
// Receiver state and schedule
// ---------------------------------------------------------------------------

/// All message arrays of the joint receiver over one fading block.
pub struct ReceiverState<'a> {
    cfg: &'a SystemConfig,
    pattern: &'a FactorGraphPattern,
    pilots: &'a PilotBook,
    y: &'a ReceivedGrid,
    dft: DftTable,
    /// Augmented symbol values per (edge, hypothesis).
    edge_values: Vec<Complex64>,
    /// Interference extrinsics, per (block, slot, edge).
    u_to_f: Vec<GaussMsg>,
    /// Cancellation messages, per (block, slot, edge).
    f_to_u: Vec<GaussMsg>,
    /// Fading observations, per (block, slot, edge).
    f_to_alpha: Vec<GaussMsg>,
    /// Fading extrinsics toward the data nodes, per (block, slot, edge).
    alpha_to_f: Vec<GaussMsg>,
    /// Slot-combined fading messages, per (block, edge).
    alpha_to_phi: Vec<GaussMsg>,
    /// Symbol costs, per (block, slot, edge, hypothesis).
    delta: Vec<f64>,
    /// Symbol extrinsics, per (block, slot, edge, hypothesis).
    sym_to_f: Vec<f64>,
    /// Channel/activity loop arrays.
    chan: ChannelLoop,
    iterations: usize,
    ops: u64,
}

impl<'a> ReceiverState<'a> {
    /// Allocate and initialize all messages from the pilot-only estimate:
    /// tap extrinsics start at the ML estimate with unit variance, fading
    /// extrinsics at zero mean and unit variance, interference extrinsics at
    /// zero mean with the variance cap, and symbol messages uniform over the
    /// augmented alphabet.
    pub fn init(
        ml: &MlEstimate,
        y: &'a ReceivedGrid,
        pilots: &'a PilotBook,
        codebook: &'a Codebook,
        pattern: &'a FactorGraphPattern,
        cfg: &'a SystemConfig,
    ) -> ReceiverState<'a> {
        let edges = pattern.edge_count();
        let slots = cfg.slots();
        let alphabet = cfg.alphabet_size();
        let mut edge_values = vec![Complex64::new(0.0, 0.0); edges * alphabet];
        for e in 0..edges {
            let (n, k) = pattern.edge_endpoints(e);
            for a in 1..alphabet {
                edge_values[e * alphabet + a] = codebook.component_at(k, a, n);
            }
        }
        let n_bte = cfg.blocks * slots * edges;
        ReceiverState {
            cfg,
            pattern,
            pilots,
            y,
            dft: DftTable::new(cfg),
            edge_values,
            u_to_f: vec![
                GaussMsg {
                    mean: Complex64::new(0.0, 0.0),
                    var: cfg.var_cap,
                };
                n_bte
            ],
            f_to_u: vec![
                GaussMsg {
                    mean: Complex64::new(0.0, 0.0),
                    var: cfg.var_cap,
                };
                n_bte
            ],
            f_to_alpha: vec![
                GaussMsg {
                    mean: Complex64::new(0.0, 0.0),
                    var: cfg.var_cap,
                };
                n_bte
            ],
            alpha_to_f: vec![
                GaussMsg {
                    mean: Complex64::new(0.0, 0.0),
                    var: 1.0,
                };
                n_bte
            ],
            alpha_to_phi: vec![
                GaussMsg {
                    mean: Complex64::new(0.0, 0.0),
                    var: cfg.var_cap,
                };
                cfg.blocks * edges
            ],
            delta: vec![0.0; n_bte * alphabet],
            sym_to_f: vec![1.0 / alphabet as f64; n_bte * alphabet],
            chan: ChannelLoop::new(ml, cfg, pattern),
            iterations: 0,
            ops: 0,
        }
    }

    #[inline]
    fn idx(&self, b: usize, t: usize, e: usize) -> usize {
        (b * self.cfg.slots() + t) * self.pattern.edge_count() + e
    }

    /// Interference cancellation sweep over every (block, slot, subcarrier).
    pub fn update_f_to_u(&mut self) {
        let d_c = self.cfg.collision_degree;
        for b in 0..self.cfg.blocks {
            for t in 0..self.cfg.slots() {
                for n in 0..self.cfg.subcarriers {
                    let base = self.idx(b, t, n * d_c);
                    let yv = self.y.y(b, t, n);
                    let msgs = &self.u_to_f[base..base + d_c];
                    let mut mean_sum = Complex64::new(0.0, 0.0);
                    let mut var_sum = 0.0;
                    for m in msgs {
                        mean_sum += m.mean;
                        var_sum += m.var;
                    }
                    for r in 0..d_c {
                        let m = self.u_to_f[base + r];
                        self.f_to_u[base + r] = GaussMsg::with_floor(
                            yv - (mean_sum - m.mean),
                            self.cfg.noise_var + (var_sum - m.var),
                        );
                    }
                }
            }
        }
    }

    /// Symbol costs and symbol extrinsics on the data slots.
    pub fn update_symbol_messages(&mut self) {
        let a = self.cfg.alphabet_size();
        let edges = self.pattern.edge_count();
        for b in 0..self.cfg.blocks {
            for t in self.cfg.pilot_slots..self.cfg.slots() {
                for e in 0..edges {
                    let i = self.idx(b, t, e);
                    let costs = symbol_costs(
                        &self.edge_values[e * a..(e + 1) * a],
                        self.alpha_to_f[i],
                        self.f_to_u[i],
                    );
                    self.delta[i * a..(i + 1) * a].copy_from_slice(&costs);
                }
                // Symbol extrinsic per user: exclude the target subcarrier.
                for k in 0..self.cfg.users {
                    let user_edges = self.pattern.edges_of_user(k);
                    let mut total = vec![0.0; a];
                    for &e in user_edges {
                        let i = self.idx(b, t, e);
                        for (acc, d) in total.iter_mut().zip(&self.delta[i * a..(i + 1) * a]) {
                            *acc += d;
                        }
                    }
                    for &e in user_edges {
                        let i = self.idx(b, t, e);
                        let mut logw = vec![0.0; a];
                        for (j, lw) in logw.iter_mut().enumerate() {
                            *lw = -(total[j] - self.delta[i * a + j]);
                        }
                        let msg = DiscreteMsg::from_log_weights(&logw);
                        self.sym_to_f[i * a..(i + 1) * a].copy_from_slice(msg.probs());
                    }
                }
            }
        }
    }

    /// Moment-matched interference extrinsics: EP division plus damping on
    /// data slots, exact transform by the known pilot symbol on pilot slots.
    ///
    /// Damping blends with the previous message from the second iteration
    /// on; the first update replaces the bootstrap initialization outright
    /// (blending against the wide-open init would stall the variances for
    /// many iterations).
    pub fn update_u_to_f(&mut self) {
        let a = self.cfg.alphabet_size();
        let m = self.cfg.codebook_size as u64;
        let damping = if self.iterations == 0 { 1.0 } else { self.cfg.damping };
        let edges = self.pattern.edge_count();
        for b in 0..self.cfg.blocks {
            for t in 0..self.cfg.slots() {
                for e in 0..edges {
                    let i = self.idx(b, t, e);
                    if t < self.cfg.pilot_slots {
                        let (n, k) = self.pattern.edge_endpoints(e);
                        let p = self.pilots.symbol(b, t, n, k);
                        let af = self.alpha_to_f[i];
                        self.u_to_f[i] =
                            GaussMsg::with_floor(af.mean * p, af.var * p.norm_sqr());
                    } else {
                        let mix = u_prior_mixture(
                            &self.sym_to_f[i * a..(i + 1) * a],
                            &self.edge_values[e * a..(e + 1) * a],
                            self.alpha_to_f[i],
                        );
                        let (_, mean, var) = project_u_posterior(&mix, self.f_to_u[i]);
                        self.ops += m;
                        let belief = GaussMsg { mean, var };
                        let raw =
                            GaussMsg::ep_extrinsic(&belief, &self.f_to_u[i], self.cfg.var_cap);
                        self.u_to_f[i] =
                            raw.damped_informative(&self.u_to_f[i], damping, self.cfg.var_cap);
                    }
                }
            }
        }
    }

    /// Moment-matched fading observations: EP division plus damping on data
    /// slots, exact rescale by the known pilot symbol on pilot slots.
    pub fn update_f_to_alpha(&mut self) {
        let a = self.cfg.alphabet_size();
        let m = self.cfg.codebook_size as u64;
        let damping = if self.iterations == 0 { 1.0 } else { self.cfg.damping };
        let edges = self.pattern.edge_count();
        for b in 0..self.cfg.blocks {
            for t in 0..self.cfg.slots() {
                for e in 0..edges {
                    let i = self.idx(b, t, e);
                    if t < self.cfg.pilot_slots {
                        let (n, k) = self.pattern.edge_endpoints(e);
                        let p = self.pilots.symbol(b, t, n, k);
                        let fu = self.f_to_u[i];
                        self.f_to_alpha[i] =
                            GaussMsg::with_floor(fu.mean / p, fu.var / p.norm_sqr());
                    } else {
                        let (_, mean, var) = project_alpha_posterior(
                            &self.sym_to_f[i * a..(i + 1) * a],
                            &self.edge_values[e * a..(e + 1) * a],
                            self.alpha_to_f[i],
                            self.f_to_u[i],
                        );
                        self.ops += m;
                        let belief = GaussMsg { mean, var };
                        let raw = GaussMsg::ep_extrinsic(
                            &belief,
                            &self.alpha_to_f[i],
                            self.cfg.var_cap,
                        );
                        self.f_to_alpha[i] =
                            raw.damped_informative(&self.f_to_alpha[i], damping, self.cfg.var_cap);
                    }
                }
            }
        }
    }

    /// Combine the fading observations across all slots of the fading block.
    pub fn update_alpha_to_phi(&mut self) {
        let edges = self.pattern.edge_count();
        for b in 0..self.cfg.blocks {
            for e in 0..edges {
                let msgs: Vec<&GaussMsg> = (0..self.cfg.slots())
                    .map(|t| &self.f_to_alpha[self.idx(b, t, e)])
                    .collect();
                self.alpha_to_phi[b * edges + e] = precision_combine(msgs);
            }
        }
    }

    /// Fading extrinsics toward each data node: belief divided by that
    /// slot's observation message.
    pub fn update_alpha_to_f(&mut self) {
        let edges = self.pattern.edge_count();
        for b in 0..self.cfg.blocks {
            for t in 0..self.cfg.slots() {
                for e in 0..edges {
                    let i = self.idx(b, t, e);
                    self.alpha_to_f[i] = GaussMsg::ep_extrinsic(
                        &self.chan.alpha_belief[b * edges + e],
                        &self.f_to_alpha[i],
                        self.cfg.var_cap,
                    );
                }
            }
        }
    }

    /// One full iteration in the fixed schedule order.
    pub fn iterate(&mut self) {
        self.update_f_to_u();
        self.update_symbol_messages();
        self.update_u_to_f();
        self.update_f_to_alpha();
        self.update_alpha_to_phi();
        self.chan.update_phi_to_alpha(&self.dft, self.pattern);
        self.chan.update_alpha_belief(&self.alpha_to_phi);
        self.update_alpha_to_f();
        self.chan
            .update_phi_to_h(&self.alpha_to_phi, &self.dft, self.pattern);
        self.chan.update_h_to_q(self.pattern);
        let vb_inner = if self.iterations < VB_ANNEAL_ITERS { 1 } else { 64 };
        self.chan.update_vb(self.cfg, vb_inner);
        self.chan.update_h_to_phi(self.pattern, self.cfg.var_cap);
        self.iterations += 1;
    }

    /// Estimated total channel power per user (sum over taps of the inverse
    /// precision estimates).
    pub fn user_power_estimates(&self) -> Vec<f64> {
        self.chan.user_powers(self.cfg.gamma_a)
    }

    /// Activity decision at threshold `delta`.
    pub fn detect_active(&self, delta: f64) -> Vec<bool> {
        detect_active_from_powers(&self.user_power_estimates(), delta)
    }

    /// Gamma belief of one tap precision.
    pub fn gamma_belief(&self, user: usize, tap: usize) -> GammaBelief {
        self.chan.gamma_belief(user, tap, self.cfg.gamma_a)
    }

    /// Current tap-belief means (row-major users x taps).
    pub fn h_means(&self) -> Vec<Complex64> {
        self.chan.h_means()
    }

    /// Fading belief for a (block, subcarrier, user) triple currently on an
    /// edge of the pattern.
    pub fn alpha_belief(&self, b: usize, e: usize) -> GaussMsg {
        self.chan.alpha_belief[b * self.pattern.edge_count() + e]
    }

    /// Interference extrinsic currently stored for (block, slot, edge).
    pub fn u_to_f_msg(&self, b: usize, t: usize, e: usize) -> GaussMsg {
        self.u_to_f[self.idx(b, t, e)]
    }

    /// Symbol extrinsic currently stored for (block, slot, edge).
    pub fn symbol_msg(&self, b: usize, t: usize, e: usize) -> Vec<f64> {
        let a = self.cfg.alphabet_size();
        let i = self.idx(b, t, e);
        self.sym_to_f[i * a..(i + 1) * a].to_vec()
    }

    /// Symbol posterior for (user, block, data slot) from the final costs.
    pub fn symbol_posterior(&self, k: usize, b: usize, data_slot: usize) -> DiscreteMsg {
        let a = self.cfg.alphabet_size();
        let t = self.cfg.pilot_slots + data_slot;
        let mut logw = vec![0.0; a];
        for &e in self.pattern.edges_of_user(k) {
            let i = self.idx(b, t, e);
            for (j, lw) in logw.iter_mut().enumerate() {
                *lw -= self.delta[i * a + j];
            }
        }
        DiscreteMsg::from_log_weights(&logw)
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn ops(&self) -> u64 {
        self.ops
    }


    /// Debug probe: NMSE decomposition by tap strength needs truth, so this
    /// returns the raw per-(user,tap) belief means and q-message variances.
    #[doc(hidden)]
    pub fn debug_taps(&self) -> (Vec<GaussMsg>, Vec<GaussMsg>) {
        (self.chan.h_belief.clone(), self.chan.h_to_q.clone())
    }
    /// Debug probe: average slot-combined fading variance over the user's
    /// edges, average combined tap variance, and average precision estimate.
    #[doc(hidden)]
    pub fn debug_silent_stats(&self, user: usize) -> (f64, f64, f64) {
        let edges = self.pattern.edge_count();
        let mut ap_var = 0.0;
        let mut count = 0.0;
        for b in 0..self.cfg.blocks {
            for &e in self.pattern.edges_of_user(user) {
                ap_var += self.alpha_to_phi[b * edges + e].var;
                count += 1.0;
            }
        }
        let q_var: f64 = (0..self.cfg.taps)
            .map(|l| self.chan.h_to_q[user * self.cfg.taps + l].var)
            .sum::<f64>()
            / self.cfg.taps as f64;
        let tl: f64 = (0..self.cfg.taps)
            .map(|l| self.chan.tau_lambda[user * self.cfg.taps + l])
            .sum::<f64>()
            / self.cfg.taps as f64;
        (ap_var / count, q_var, tl)
    }
}

// ---------------------------------------------------------------------------
// Receiver output
// ---------------------------------------------------------------------------

/// Final beliefs and decisions of a joint receiver run.
#[derive(Debug, Clone)]
pub struct ReceiverOutput {
    /// Posterior over the augmented alphabet per (user, block, data slot).
    pub symbol_posteriors: Vec<DiscreteMsg>,
    /// Bit LLRs conditioned on a nonzero codeword, per
    /// (user, block, data slot, bit); positive favors bit 0.
    pub bit_llrs: Vec<f64>,
    /// Posterior tap means, row-major users x taps.
    pub h_hat: Vec<Complex64>,
    /// Detected active users.
    pub active: Vec<bool>,
    pub iterations: usize,
    pub ops: u64,
    /// Per-iteration tap means, recorded when diagnostics are requested.
    pub h_trajectory: Option<Vec<Vec<Complex64>>>,
    /// Per-iteration estimated user powers, recorded with diagnostics.
    pub power_trajectory: Option<Vec<Vec<f64>>>,
    blocks: usize,
    data_slots: usize,
    bits_per_symbol: usize,
}

impl ReceiverOutput {
    pub fn posterior(&self, user: usize, block: usize, data_slot: usize) -> &DiscreteMsg {
        &self.symbol_posteriors[(user * self.blocks + block) * self.data_slots + data_slot]
    }

    /// Hard bit decisions for one symbol, conditioned on the user being
    /// active (argmax over the nonzero codewords).
    pub fn hard_bits(
        &self,
        codebook: &Codebook,
        user: usize,
        block: usize,
        data_slot: usize,
    ) -> Vec<u8> {
        let best = self.posterior(user, block, data_slot).argmax_nonzero();
        codebook.bits_of(user, best - 1).to_vec()
    }

    pub fn bit_llr(&self, user: usize, block: usize, data_slot: usize, bit: usize) -> f64 {
        let idx = ((user * self.blocks + block) * self.data_slots + data_slot)
            * self.bits_per_symbol
            + bit;
        self.bit_llrs[idx]
    }

    /// Assemble the output from final posteriors and channel estimates.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        cfg: &SystemConfig,
        codebook: &Codebook,
        posteriors: Vec<DiscreteMsg>,
        h_hat: Vec<Complex64>,
        active: Vec<bool>,
        iterations: usize,
        ops: u64,
        h_trajectory: Option<Vec<Vec<Complex64>>>,
        power_trajectory: Option<Vec<Vec<f64>>>,
    ) -> ReceiverOutput {
        let bits = cfg.bits_per_symbol();
        let mut bit_llrs = Vec::with_capacity(posteriors.len() * bits);
        for (idx, post) in posteriors.iter().enumerate() {
            let user = idx / (cfg.blocks * cfg.data_slots);
            for bit in 0..bits {
                let mut p0 = 0.0;
                let mut p1 = 0.0;
                for m in 0..cfg.codebook_size {
                    let p = post.prob(m + 1);
                    if codebook.bits_of(user, m)[bit] == 0 {
                        p0 += p;
                    } else {
                        p1 += p;
                    }
                }
                bit_llrs.push(((p0 + 1e-300) / (p1 + 1e-300)).ln());
            }
        }
        ReceiverOutput {
            symbol_posteriors: posteriors,
            bit_llrs,
            h_hat,
            active,
            iterations,
            ops,
            h_trajectory,
            power_trajectory,
            blocks: cfg.blocks,
            data_slots: cfg.data_slots,
            bits_per_symbol: bits,
        }
    }
}

/// Run the joint receiver on one fading block: pilot-only initialization,
/// iterate the full schedule until the tap means stabilize or the iteration
/// cap is reached, then read out posteriors, channel estimates, and the
/// detected active set.
pub fn run_receiver(
    y: &ReceivedGrid,
    pilots: &PilotBook,
    codebook: &Codebook,
    pattern: &FactorGraphPattern,
    cfg: &SystemConfig,
    diagnostics: bool,
) -> Result<ReceiverOutput> {
    let ml = ml_estimate(y, pilots, pattern, cfg)?;
    let mut state = ReceiverState::init(&ml, y, pilots, codebook, pattern, cfg);
    let mut h_prev = state.h_means();
    let mut h_traj = diagnostics.then(Vec::new);
    let mut p_traj = diagnostics.then(Vec::new);
    for _ in 0..cfg.max_iters {
        state.iterate();
        let h_now = state.h_means();
        if let Some(traj) = h_traj.as_mut() {
            traj.push(h_now.clone());
        }
        if let Some(traj) = p_traj.as_mut() {
            traj.push(state.user_power_estimates());
        }
        let max_change = h_now
            .iter()
            .zip(&h_prev)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        h_prev = h_now;
        // The first pass runs with wide-open variances; only trust the
        // stationarity check from the second iteration on.
        if state.iterations() >= 2 && max_change < EARLY_STOP_TOL {
            break;
        }
    }

    let mut posteriors =
        Vec::with_capacity(cfg.users * cfg.blocks * cfg.data_slots);
    for k in 0..cfg.users {
        for b in 0..cfg.blocks {
            for t in 0..cfg.data_slots {
                posteriors.push(state.symbol_posterior(k, b, t));
            }
        }
    }
    let active = state.detect_active(cfg.activity_threshold);
    let h_hat = state.h_means();
    Ok(ReceiverOutput::assemble(
        cfg,
        codebook,
        posteriors,
        h_hat,
        active,
        state.iterations(),
        state.ops(),
        h_traj,
        p_traj,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cancellation_with_no_interferers_passes_observation() {
        let y = c(1.5, -0.5);
        let out = interference_cancel(y, &[GaussMsg { mean: c(9.0, 9.0), var: 4.0 }], 0, 0.3);
        assert_eq!(out.mean, y);
        assert!((out.var - 0.3).abs() < 1e-15);
    }

    #[test]
    fn cancellation_matches_hand_sum() {
        let y = c(2.0, 1.0);
        let msgs = [
            GaussMsg { mean: c(0.5, 0.0), var: 0.1 },
            GaussMsg { mean: c(-0.25, 0.5), var: 0.2 },
            GaussMsg { mean: c(0.0, -1.0), var: 0.3 },
            GaussMsg { mean: c(1.0, 1.0), var: 0.4 },
        ];
        let out = interference_cancel(y, &msgs, 1, 0.05);
        // Exclude index 1: mean = y - (0.5 + 0 + 1, 0 - 1 + 1), var = 0.05+0.1+0.3+0.4.
        assert!((out.mean - c(0.5, 1.0)).norm() < 1e-15);
        assert!((out.var - 0.85).abs() < 1e-15);
    }

    #[test]
    fn cancellation_with_zero_means_returns_observation() {
        let y = c(-0.7, 0.2);
        let msgs = [GaussMsg { mean: c(0.0, 0.0), var: 1.0 }; 4];
        let out = interference_cancel(y, &msgs, 2, 0.1);
        assert_eq!(out.mean, y);
    }

    #[test]
    fn symbol_costs_reduce_to_euclidean_with_perfect_csi() {
        let alpha = GaussMsg { mean: c(0.8, -0.6), var: 0.0 };
        let obs = GaussMsg { mean: c(0.3, 0.4), var: 0.25 };
        let values = [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0)];
        let costs = symbol_costs(&values, alpha, obs);
        for (j, &x) in values.iter().enumerate() {
            let expect = (obs.mean - alpha.mean * x).norm_sqr() / 0.25 + 0.25f64.ln();
            assert!((costs[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_hypothesis_cost_uses_observation_alone() {
        let alpha = GaussMsg { mean: c(1.0, 2.0), var: 0.7 };
        let obs = GaussMsg { mean: c(0.5, -0.5), var: 0.4 };
        let costs = symbol_costs(&[c(0.0, 0.0)], alpha, obs);
        let expect = obs.mean.norm_sqr() / obs.var + obs.var.ln();
        assert!((costs[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn u_mixture_zero_branch_carries_prior_mass_exactly() {
        let probs = [0.17, 0.4, 0.2, 0.13, 0.1];
        let values = [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        let alpha = GaussMsg { mean: c(0.3, 0.3), var: 0.5 };
        let mix = u_prior_mixture(&probs, &values, alpha);
        assert_eq!(mix.weights[0], probs[0]);
        assert_eq!(mix.vars[0], 0.0);
        assert_eq!(mix.means[0], c(0.0, 0.0));
    }

    #[test]
    fn one_hot_projection_collapses_to_single_component() {
        let probs = [0.0, 1.0, 0.0];
        let values = [c(0.0, 0.0), c(0.6, 0.8), c(-1.0, 0.0)];
        let alpha = GaussMsg { mean: c(1.0, -1.0), var: 0.0 };
        let obs = GaussMsg { mean: c(0.1, 0.1), var: 2.0 };
        let mix = u_prior_mixture(&probs, &values, alpha);
        let (beta, mean, var) = project_u_posterior(&mix, obs);
        assert!((beta[1] - 1.0).abs() < 1e-15);
        assert!((mean - alpha.mean * values[1]).norm() < 1e-12);
        assert!(var <= VAR_FLOOR * 1.001);
    }

    #[test]
    fn one_hot_on_zero_symbol_gives_point_mass_at_zero() {
        let probs = [1.0, 0.0, 0.0];
        let values = [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0)];
        let alpha = GaussMsg { mean: c(1.0, 0.0), var: 0.3 };
        let obs = GaussMsg { mean: c(0.4, 0.0), var: 0.5 };
        let mix = u_prior_mixture(&probs, &values, alpha);
        let (beta, mean, var) = project_u_posterior(&mix, obs);
        assert!((beta[0] - 1.0).abs() < 1e-15);
        assert!(mean.norm() < 1e-15);
        assert!(var <= VAR_FLOOR * 1.001);
    }

    #[test]
    fn ep_division_identity_when_variances_shrink() {
        // A belief strictly sharper than the cavity divides exactly.
        let belief = GaussMsg { mean: c(0.5, 0.2), var: 0.4 };
        let cavity = GaussMsg { mean: c(0.1, 0.0), var: 1.0 };
        let ext = GaussMsg::ep_extrinsic(&belief, &cavity, 1e6);
        assert!((1.0 / ext.var - (1.0 / 0.4 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn alpha_projection_pilot_like_one_hot_matches_component() {
        // One-hot on a nonzero symbol: matched moments equal that branch.
        let probs = [0.0, 0.0, 1.0];
        let values = [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 2.0)];
        let alpha = GaussMsg { mean: c(0.2, 0.1), var: 0.6 };
        let obs = GaussMsg { mean: c(-0.3, 0.9), var: 0.8 };
        let (beta, mean, var) = project_alpha_posterior(&probs, &values, alpha, obs);
        let x = values[2];
        let denom = obs.var + alpha.var * x.norm_sqr();
        let tau = (alpha.mean * obs.var + obs.mean * x.conj() * alpha.var) / denom;
        let ups = obs.var * alpha.var / denom;
        assert!((beta[2] - 1.0).abs() < 1e-15);
        assert!((mean - tau).norm() < 1e-12);
        assert!((var - ups).abs() < 1e-12);
    }

    #[test]
    fn alpha_projection_zero_branch_keeps_prior() {
        let probs = [1.0, 0.0];
        let values = [c(0.0, 0.0), c(1.0, 0.0)];
        let alpha = GaussMsg { mean: c(0.7, -0.2), var: 0.9 };
        let obs = GaussMsg { mean: c(5.0, 5.0), var: 0.1 };
        let (_, mean, var) = project_alpha_posterior(&probs, &values, alpha, obs);
        assert!((mean - alpha.mean).norm() < 1e-12);
        assert!((var - alpha.var).abs() < 1e-12);
    }

    #[test]
    fn precision_combine_single_message_is_identity() {
        let m = GaussMsg { mean: c(0.4, 0.4), var: 0.9 };
        let out = precision_combine([&m]);
        assert!((out.mean - m.mean).norm() < 1e-15);
        assert!((out.var - m.var).abs() < 1e-15);
    }

    #[test]
    fn precision_combine_equal_variances_averages() {
        let a = GaussMsg { mean: c(1.0, 0.0), var: 0.5 };
        let b = GaussMsg { mean: c(0.0, 1.0), var: 0.5 };
        let out = precision_combine([&a, &b]);
        assert!((out.var - 0.25).abs() < 1e-15);
        assert!((out.mean - c(0.5, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn taps_to_alpha_matches_dense_row_product() {
        let row = [
            Complex64::from_polar(1.0, 0.3),
            Complex64::from_polar(1.0, -1.2),
            Complex64::from_polar(1.0, 2.2),
        ];
        let taps = [
            GaussMsg { mean: c(0.5, 0.1), var: 0.2 },
            GaussMsg { mean: c(-0.3, 0.4), var: 0.3 },
            GaussMsg { mean: c(0.0, -0.2), var: 0.4 },
        ];
        let out = taps_to_alpha(&row, &taps);
        let mut mean = c(0.0, 0.0);
        let mut var = 0.0;
        for i in 0..3 {
            mean += row[i] * taps[i].mean;
            var += row[i].norm_sqr() * taps[i].var;
        }
        assert!((out.mean - mean).norm() < 1e-12);
        assert!((out.var - var).abs() < 1e-12);
    }

    #[test]
    fn single_tap_extraction_divides_by_dft_entry() {
        let row = [Complex64::from_polar(1.0, 0.7)];
        let taps = [GaussMsg { mean: c(0.0, 0.0), var: 1.0 }];
        let alpha = GaussMsg { mean: c(0.6, -0.8), var: 0.5 };
        let out = alpha_to_tap(&row, alpha, &taps, 0);
        assert!((out.mean - alpha.mean / row[0]).norm() < 1e-12);
        assert!((out.var - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tap_extraction_cancels_other_taps() {
        let row = [
            Complex64::from_polar(1.0, 0.1),
            Complex64::from_polar(1.0, 1.4),
        ];
        let taps = [
            GaussMsg { mean: c(0.2, 0.3), var: 0.15 },
            GaussMsg { mean: c(-0.4, 0.1), var: 0.25 },
        ];
        let alpha = GaussMsg { mean: c(1.0, 1.0), var: 0.1 };
        let out = alpha_to_tap(&row, alpha, &taps, 1);
        let expect_mean = (alpha.mean - row[0] * taps[0].mean) / row[1];
        let expect_var = (alpha.var + row[0].norm_sqr() * taps[0].var) / row[1].norm_sqr();
        assert!((out.mean - expect_mean).norm() < 1e-12);
        assert!((out.var - expect_var).abs() < 1e-12);
    }

    #[test]
    fn vb_shrink_matches_two_gaussian_product() {
        let combined = GaussMsg { mean: c(0.5, -0.7), var: 0.3 };
        let tau_lambda = 2.0;
        let belief = vb_shrink(combined, tau_lambda);
        // Oracle: product of CN(h; tau, ups) with CN(h; 0, 1/tau_lambda).
        let prior = GaussMsg { mean: c(0.0, 0.0), var: 1.0 / tau_lambda };
        let product = combined.product(&prior);
        assert!((belief.mean - product.mean).norm() < 1e-12);
        assert!((belief.var - product.var).abs() < 1e-12);
    }

    #[test]
    fn vb_update_lands_on_a_consistent_fixed_point() {
        // A tap with apparent power well above its variance keeps most of
        // its mean, and the returned precision is consistent with the
        // returned belief.
        let combined = GaussMsg { mean: c(1.0, 0.5), var: 0.01 };
        let (belief, tau, b_hat) = vb_tap_update(combined, 1.0, 1e-7, 1e-7, 64);
        assert!((tau - (1.0 + 1e-7) / b_hat).abs() < 1e-12);
        let again = vb_shrink(combined, tau);
        assert!((belief.mean - again.mean).norm() < 1e-6);
        // Power estimate approaches |mean|^2 - var of the combined message.
        let power = belief.mean.norm_sqr() + belief.var;
        let expect = combined.mean.norm_sqr() - combined.var;
        assert!((power - expect).abs() < 0.05 * expect, "power {power} vs {expect}");
    }

    #[test]
    fn vb_precision_for_unit_power_is_near_one() {
        // |tau|^2 + ups = 1 with a = b = 1e-7.
        let combined = GaussMsg { mean: c(1.0, 0.0), var: 0.0 + VAR_FLOOR };
        let (_, tau, _) = vb_tap_update(combined, 1e-30, 1e-7, 1e-7);
        assert!((tau - 1.0000001).abs() < 1e-6, "tau_lambda = {tau}");
    }

    #[test]
    fn vb_shrinks_empty_channels_hard() {
        let combined = GaussMsg { mean: c(0.0, 0.0), var: VAR_FLOOR };
        let (_, tau, _) = vb_tap_update(combined, 1.0, 1e-7, 1e-7);
        // (a+1)/b with near-zero power: enormous precision, so the prior
        // collapses the tap toward zero on the next pass.
        assert!(tau > 1e5);
    }

    #[test]
    fn activity_threshold_rules() {
        // Post-shrinkage precisions of 1e14 leave power ~ L*1e-14.
        let powers = vec![6.0 * 1e-14, 1.2, 0.8];
        let detected = detect_active_from_powers(&powers, 0.05);
        assert_eq!(detected, vec![false, true, true]);
        // A zero threshold declares everyone active.
        let all = detect_active_from_powers(&powers, 0.0);
        assert!(all.iter().all(|a| *a));
    }
}

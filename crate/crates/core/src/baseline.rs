//! Reference receivers: genie-aided MPA with perfect channel and activity
//! knowledge, and the mean-field joint receiver.
//!
//! The genie runs the exact discrete sum-product over the sparse collision
//! graph, enumerating the joint symbol hypotheses of the colliding users on
//! each subcarrier; its cost per subcarrier therefore grows as M^d_c. The
//! mean-field receiver shares the channel/activity machinery of the joint
//! receiver but cancels interference with symbol means only, which is the
//! structural reason it trails the moment-matching receiver.

use num_complex::Complex64;

use crate::channel::{DftTable, FreqResponse, ReceivedGrid};
use crate::codebook::Codebook;
use crate::config::SystemConfig;
use crate::error::Result;
use crate::msg::{DiscreteMsg, GaussMsg, VAR_FLOOR};
use crate::pattern::FactorGraphPattern;
use crate::pilot::{ml_estimate, MlEstimate, PilotBook};
use crate::receiver::{ChannelLoop, ReceiverOutput, EARLY_STOP_TOL};

/// Number of warm-up sum-product iterations used to seed the mean-field
/// receiver's symbol beliefs from the pilot-only channel estimate.
pub const BP_MF_WARMUP_ITERS: usize = 3;

// ---------------------------------------------------------------------------
// Discrete sum-product engine
// ---------------------------------------------------------------------------

/// Beliefs produced by a discrete sum-product pass.
pub struct MpaBeliefs {
    /// Per (user, block, data slot) posterior over the augmented alphabet.
    /// Users outside the candidate set get a one-hot belief on the zero
    /// codeword.
    pub posteriors: Vec<DiscreteMsg>,
    /// Joint-hypothesis likelihood evaluations performed.
    pub ops: u64,
}

/// Sum-product over the collision graph with fixed fading coefficients.
///
/// `candidates` selects the users instantiated as variables; `include_zero`
/// switches between the data alphabet (M hypotheses) and the augmented
/// alphabet (M + 1). Flooding schedule, uniform priors.
#[allow(clippy::too_many_arguments)]
pub fn mpa_detect(
    y: &ReceivedGrid,
    alpha: &FreqResponse,
    candidates: &[bool],
    include_zero: bool,
    iters: usize,
    codebook: &Codebook,
    pattern: &FactorGraphPattern,
    cfg: &SystemConfig,
) -> MpaBeliefs {
    let edges = pattern.edge_count();
    let hyps = if include_zero {
        cfg.alphabet_size()
    } else {
        cfg.codebook_size
    };
    let offset = if include_zero { 0 } else { 1 };
    let noise = cfg.noise_var.max(1e-30);
    let d_c = cfg.collision_degree;
    let data_slots = cfg.data_slots;
    let mut ops = 0u64;

    // Hypothesis values per (edge, h).
    let mut values = vec![Complex64::new(0.0, 0.0); edges * hyps];
    for e in 0..edges {
        let (n, k) = pattern.edge_endpoints(e);
        for h in 0..hyps {
            values[e * hyps + h] = codebook.component_at(k, h + offset, n);
        }
    }

    let cells = cfg.blocks * data_slots * edges;
    let uniform = 1.0 / hyps as f64;
    let mut x_to_f = vec![uniform; cells * hyps];
    let mut f_to_x = vec![uniform; cells * hyps];
    let idx = |b: usize, t: usize, e: usize| (b * data_slots + t) * edges + e;

    for _ in 0..iters {
        // Function-node update: enumerate the joint assignments of the
        // candidate users on each subcarrier.
        for b in 0..cfg.blocks {
            for t in 0..data_slots {
                for n in 0..cfg.subcarriers {
                    let node_edges: Vec<usize> = (0..d_c)
                        .map(|r| pattern.edge_id(n, r))
                        .filter(|&e| candidates[pattern.edge_endpoints(e).1])
                        .collect();
                    if node_edges.is_empty() {
                        continue;
                    }
                    let yv = y.y(b, cfg.pilot_slots + t, n);
                    let len = node_edges.len();
                    let mut out = vec![f64::NEG_INFINITY; len * hyps];
                    let mut assign = vec![0usize; len];
                    loop {
                        let mut sum = Complex64::new(0.0, 0.0);
                        let mut logmsg = 0.0;
                        for (j, &e) in node_edges.iter().enumerate() {
                            let h = assign[j];
                            let (_, k) = pattern.edge_endpoints(e);
                            sum += alpha.alpha(b, n, k) * values[e * hyps + h];
                            logmsg += x_to_f[idx(b, t, e) * hyps + h].max(1e-300).ln();
                        }
                        let loglik = -(yv - sum).norm_sqr() / noise;
                        ops += 1;
                        for (j, &e) in node_edges.iter().enumerate() {
                            let h = assign[j];
                            let excl = loglik + logmsg
                                - x_to_f[idx(b, t, e) * hyps + h].max(1e-300).ln();
                            let c = &mut out[j * hyps + h];
                            *c = logaddexp(*c, excl);
                        }
                        // Advance the mixed-radix assignment counter.
                        let mut j = 0;
                        while j < len {
                            assign[j] += 1;
                            if assign[j] < hyps {
                                break;
                            }
                            assign[j] = 0;
                            j += 1;
                        }
                        if j == len {
                            break;
                        }
                    }
                    for (j, &e) in node_edges.iter().enumerate() {
                        let msg = DiscreteMsg::from_log_weights(&out[j * hyps..(j + 1) * hyps]);
                        f_to_x[idx(b, t, e) * hyps..(idx(b, t, e) + 1) * hyps]
                            .copy_from_slice(msg.probs());
                    }
                }
            }
        }
        // Variable-node update.
        for b in 0..cfg.blocks {
            for t in 0..data_slots {
                for k in 0..cfg.users {
                    if !candidates[k] {
                        continue;
                    }
                    let user_edges = pattern.edges_of_user(k);
                    let mut total = vec![0.0; hyps];
                    for &e in user_edges {
                        for (h, acc) in total.iter_mut().enumerate() {
                            *acc += f_to_x[idx(b, t, e) * hyps + h].max(1e-300).ln();
                        }
                    }
                    for &e in user_edges {
                        let mut lw = vec![0.0; hyps];
                        for (h, v) in lw.iter_mut().enumerate() {
                            *v = total[h] - f_to_x[idx(b, t, e) * hyps + h].max(1e-300).ln();
                        }
                        let msg = DiscreteMsg::from_log_weights(&lw);
                        x_to_f[idx(b, t, e) * hyps..(idx(b, t, e) + 1) * hyps]
                            .copy_from_slice(msg.probs());
                    }
                }
            }
        }
    }

    // Beliefs over the augmented alphabet.
    let alphabet = cfg.alphabet_size();
    let mut posteriors = Vec::with_capacity(cfg.users * cfg.blocks * data_slots);
    for k in 0..cfg.users {
        for b in 0..cfg.blocks {
            for t in 0..data_slots {
                if !candidates[k] {
                    let mut w = vec![0.0; alphabet];
                    w[0] = 1.0;
                    posteriors.push(DiscreteMsg::from_weights(&w));
                    continue;
                }
                let mut lw = vec![0.0; hyps];
                for &e in pattern.edges_of_user(k) {
                    for (h, v) in lw.iter_mut().enumerate() {
                        *v += f_to_x[idx(b, t, e) * hyps + h].max(1e-300).ln();
                    }
                }
                let belief = DiscreteMsg::from_log_weights(&lw);
                let mut w = vec![0.0; alphabet];
                for (h, p) in belief.probs().iter().enumerate() {
                    w[h + offset] = *p;
                }
                posteriors.push(DiscreteMsg::from_weights(&w));
            }
        }
    }
    MpaBeliefs { posteriors, ops }
}

fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

// ---------------------------------------------------------------------------
// Genie-aided receiver
// ---------------------------------------------------------------------------

/// Inputs of the genie receiver: the true fading coefficients and the true
/// active set alongside the observations.
pub struct GenieInput<'a> {
    pub alpha: &'a FreqResponse,
    pub active: &'a [bool],
    pub y: &'a ReceivedGrid,
    pub codebook: &'a Codebook,
    pub pattern: &'a FactorGraphPattern,
}

/// Exact-CSI, known-activity sum-product receiver over the data alphabet.
pub fn mpa_genie(input: &GenieInput, iters: usize, cfg: &SystemConfig) -> ReceiverOutput {
    let beliefs = mpa_detect(
        input.y,
        input.alpha,
        input.active,
        false,
        iters,
        input.codebook,
        input.pattern,
        cfg,
    );
    ReceiverOutput::assemble(
        cfg,
        input.codebook,
        beliefs.posteriors,
        vec![Complex64::new(0.0, 0.0); cfg.users * cfg.taps],
        input.active.to_vec(),
        iters,
        beliefs.ops,
        None,
        None,
    )
}

// ---------------------------------------------------------------------------
// BP-MF joint receiver
// ---------------------------------------------------------------------------

/// Mean-field interference-cancellation message toward one symbol: uses the
/// fading beliefs and the other users' symbol means only.
pub fn bp_mf_data_message(
    y: Complex64,
    alpha_beliefs: &[GaussMsg],
    symbol_means: &[Complex64],
    target: usize,
    noise_var: f64,
) -> GaussMsg {
    let mut residual = y;
    for (i, (a, x)) in alpha_beliefs.iter().zip(symbol_means).enumerate() {
        if i == target {
            continue;
        }
        residual -= a.mean * x;
    }
    let a = alpha_beliefs[target];
    let denom = a.mean.norm_sqr() + a.var;
    GaussMsg::with_floor(
        a.mean.conj() * residual / denom,
        noise_var.max(VAR_FLOOR) / denom,
    )
}

/// Project the pilot-only tap estimate onto the fading coefficients of every
/// (block, subcarrier, user) triple.
pub fn ml_alpha(ml: &MlEstimate, cfg: &SystemConfig) -> FreqResponse {
    let dft = DftTable::new(cfg);
    let mut alpha = vec![Complex64::new(0.0, 0.0); cfg.blocks * cfg.subcarriers * cfg.users];
    for b in 0..cfg.blocks {
        for n in 0..cfg.subcarriers {
            for k in 0..cfg.users {
                let taps = ml.user_estimate(k);
                let mut sum = Complex64::new(0.0, 0.0);
                for (l, h) in taps.iter().enumerate() {
                    sum += dft.entry(b, n, l) * h;
                }
                alpha[(b * cfg.subcarriers + n) * cfg.users + k] = sum;
            }
        }
    }
    FreqResponse::from_raw(alpha, cfg.subcarriers, cfg.users)
}

/// Joint mean-field receiver: pilot-only initialization, a few sum-product
/// warm-up iterations for the symbol beliefs, then alternating mean-field
/// data detection and the shared channel/activity loop.
pub fn bp_mf_receiver(
    y: &ReceivedGrid,
    pilots: &PilotBook,
    codebook: &Codebook,
    pattern: &FactorGraphPattern,
    cfg: &SystemConfig,
) -> Result<ReceiverOutput> {
    let ml = ml_estimate(y, pilots, pattern, cfg)?;
    let alpha_init = ml_alpha(&ml, cfg);
    let all_users = vec![true; cfg.users];
    let warmup = mpa_detect(
        y,
        &alpha_init,
        &all_users,
        true,
        BP_MF_WARMUP_ITERS,
        codebook,
        pattern,
        cfg,
    );
    let mut ops = warmup.ops;

    let edges = pattern.edge_count();
    let alphabet = cfg.alphabet_size();
    let data_slots = cfg.data_slots;
    let m_count = cfg.codebook_size as u64;
    let noise = cfg.noise_var.max(VAR_FLOOR);
    let dft = DftTable::new(cfg);

    // Hypothesis values per (edge, a).
    let mut values = vec![Complex64::new(0.0, 0.0); edges * alphabet];
    for e in 0..edges {
        let (n, k) = pattern.edge_endpoints(e);
        for a in 1..alphabet {
            values[e * alphabet + a] = codebook.component_at(k, a, n);
        }
    }

    // Symbol beliefs per (block, data slot, user), seeded from the warm-up.
    let bel_idx = |b: usize, t: usize, k: usize| (b * data_slots + t) * cfg.users + k;
    let mut beliefs: Vec<DiscreteMsg> =
        vec![DiscreteMsg::uniform(alphabet); cfg.blocks * data_slots * cfg.users];
    for k in 0..cfg.users {
        for b in 0..cfg.blocks {
            for t in 0..data_slots {
                beliefs[bel_idx(b, t, k)] =
                    warmup.posteriors[(k * cfg.blocks + b) * data_slots + t].clone();
            }
        }
    }

    // Per-edge symbol means/variances under the current beliefs, and the
    // staged mean-field data messages.
    let cell = |b: usize, t: usize, e: usize| (b * data_slots + t) * edges + e;
    let n_cells = cfg.blocks * data_slots * edges;
    let mut sym_mean = vec![Complex64::new(0.0, 0.0); n_cells];
    let mut sym_var = vec![0.0; n_cells];
    let mut data_msg = vec![GaussMsg { mean: Complex64::new(0.0, 0.0), var: cfg.var_cap }; n_cells];

    let refresh_moments = |beliefs: &[DiscreteMsg],
                           sym_mean: &mut [Complex64],
                           sym_var: &mut [f64],
                           ops: &mut u64| {
        for b in 0..cfg.blocks {
            for t in 0..data_slots {
                for e in 0..edges {
                    let (_, k) = pattern.edge_endpoints(e);
                    let belief = &beliefs[(b * data_slots + t) * cfg.users + k];
                    let mut mean = Complex64::new(0.0, 0.0);
                    let mut second = 0.0;
                    for a in 0..alphabet {
                        let v = values[e * alphabet + a];
                        mean += v * belief.prob(a);
                        second += belief.prob(a) * v.norm_sqr();
                    }
                    sym_mean[(b * data_slots + t) * edges + e] = mean;
                    sym_var[(b * data_slots + t) * edges + e] =
                        (second - mean.norm_sqr()).max(0.0);
                    *ops += m_count;
                }
            }
        }
    };
    refresh_moments(&beliefs, &mut sym_mean, &mut sym_var, &mut ops);

    let mut chan = ChannelLoop::new(&ml, cfg, pattern);
    // Fading beliefs start at the pilot estimate with unit variance.
    for b in 0..cfg.blocks {
        for e in 0..edges {
            let (n, k) = pattern.edge_endpoints(e);
            chan.alpha_belief[b * edges + e] = GaussMsg {
                mean: alpha_init.alpha(b, n, k),
                var: 1.0,
            };
        }
    }

    let mut alpha_to_phi =
        vec![GaussMsg { mean: Complex64::new(0.0, 0.0), var: cfg.var_cap }; cfg.blocks * edges];
    let mut iterations = 0usize;
    let mut h_prev = chan.h_means();
    for _ in 0..cfg.max_iters {
        // --- Mean-field data detection ---
        for b in 0..cfg.blocks {
            for t in 0..data_slots {
                for n in 0..cfg.subcarriers {
                    let node: Vec<usize> = (0..cfg.collision_degree)
                        .map(|r| pattern.edge_id(n, r))
                        .collect();
                    let a_bel: Vec<GaussMsg> =
                        node.iter().map(|&e| chan.alpha_belief[b * edges + e]).collect();
                    let means: Vec<Complex64> =
                        node.iter().map(|&e| sym_mean[cell(b, t, e)]).collect();
                    for (j, &e) in node.iter().enumerate() {
                        data_msg[cell(b, t, e)] = bp_mf_data_message(
                            y.y(b, cfg.pilot_slots + t, n),
                            &a_bel,
                            &means,
                            j,
                            cfg.noise_var,
                        );
                    }
                }
            }
        }
        // Symbol beliefs from the Gaussian messages over the alphabet.
        for b in 0..cfg.blocks {
            for t in 0..data_slots {
                for k in 0..cfg.users {
                    let mut lw = vec![0.0; alphabet];
                    for &e in pattern.edges_of_user(k) {
                        let msg = data_msg[cell(b, t, e)];
                        for (a, v) in lw.iter_mut().enumerate() {
                            let d = values[e * alphabet + a] - msg.mean;
                            *v -= d.norm_sqr() / msg.var;
                        }
                        ops += m_count;
                    }
                    beliefs[bel_idx(b, t, k)] = DiscreteMsg::from_log_weights(&lw);
                }
            }
        }
        refresh_moments(&beliefs, &mut sym_mean, &mut sym_var, &mut ops);

        // --- Mean-field channel update ---
        for b in 0..cfg.blocks {
            for n in 0..cfg.subcarriers {
                let node: Vec<usize> = (0..cfg.collision_degree)
                    .map(|r| pattern.edge_id(n, r))
                    .collect();
                for (j, &e) in node.iter().enumerate() {
                    let mut prec = 0.0;
                    let mut num = Complex64::new(0.0, 0.0);
                    // Pilot slots: known symbols for every modeled user.
                    for t in 0..cfg.pilot_slots {
                        let mut residual = y.y(b, t, n);
                        for (i, &eo) in node.iter().enumerate() {
                            if i == j {
                                continue;
                            }
                            let (_, ko) = pattern.edge_endpoints(eo);
                            residual -= chan.alpha_belief[b * edges + eo].mean
                                * pilots.symbol(b, t, n, ko);
                        }
                        let (_, k) = pattern.edge_endpoints(e);
                        let p = pilots.symbol(b, t, n, k);
                        prec += p.norm_sqr() / noise;
                        num += p.conj() * residual / noise;
                    }
                    // Data slots: symbol means and second moments.
                    for t in 0..data_slots {
                        let mut residual = y.y(b, cfg.pilot_slots + t, n);
                        for (i, &eo) in node.iter().enumerate() {
                            if i == j {
                                continue;
                            }
                            residual -=
                                chan.alpha_belief[b * edges + eo].mean * sym_mean[cell(b, t, eo)];
                        }
                        let power = sym_mean[cell(b, t, e)].norm_sqr() + sym_var[cell(b, t, e)];
                        prec += power / noise;
                        num += sym_mean[cell(b, t, e)].conj() * residual / noise;
                    }
                    let var = 1.0 / prec.max(1.0 / cfg.var_cap);
                    alpha_to_phi[b * edges + e] = GaussMsg::with_floor(num * var, var);
                }
            }
        }
        chan.update_phi_to_alpha(&dft, pattern);
        chan.update_alpha_belief(&alpha_to_phi);
        chan.update_phi_to_h(&alpha_to_phi, &dft, pattern);
        chan.update_h_to_q(pattern);
        let vb_inner = if iterations < crate::receiver::VB_ANNEAL_ITERS { 1 } else { 64 };
        chan.update_vb(cfg, vb_inner);
        chan.update_h_to_phi(pattern, cfg.var_cap);
        iterations += 1;

        let h_now = chan.h_means();
        let max_change = h_now
            .iter()
            .zip(&h_prev)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        h_prev = h_now;
        if iterations >= 2 && max_change < EARLY_STOP_TOL {
            break;
        }
    }

    // Final read-out.
    let mut posteriors = Vec::with_capacity(cfg.users * cfg.blocks * data_slots);
    for k in 0..cfg.users {
        for b in 0..cfg.blocks {
            for t in 0..data_slots {
                posteriors.push(beliefs[bel_idx(b, t, k)].clone());
            }
        }
    }
    let active = crate::receiver::detect_active_from_powers(
        &chan.user_powers(cfg.gamma_a),
        cfg.activity_threshold,
    );
    Ok(ReceiverOutput::assemble(
        cfg,
        codebook,
        posteriors,
        chan.h_means(),
        active,
        iterations,
        ops,
        None,
        None,
    ))
}

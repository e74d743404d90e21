//! Zadoff-Chu pilot books and the pilot-only ML channel estimate.
//!
//! Colliding users on a subcarrier get distinct cyclic shifts of a root-1
//! Zadoff-Chu sequence, normalized so the per-subcarrier pilot Gram matrix is
//! exactly the identity. That orthogonality collapses the joint ML estimate
//! of all K*L channel taps into K independent L x L solves, one per user.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{DftTable, ReceivedGrid};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::pattern::FactorGraphPattern;

/// Pilot symbols, dense over (block, pilot slot, subcarrier, user); zero
/// wherever the user does not occupy the subcarrier.
#[derive(Debug, Clone)]
pub struct PilotBook {
    symbols: Vec<Complex64>,
    pilot_slots: usize,
    subcarriers: usize,
    users: usize,
}

impl PilotBook {
    #[inline]
    pub fn symbol(&self, block: usize, slot: usize, n: usize, user: usize) -> Complex64 {
        self.symbols
            [((block * self.pilot_slots + slot) * self.subcarriers + n) * self.users + user]
    }

    pub fn pilot_slots(&self) -> usize {
        self.pilot_slots
    }
}

/// Root-1 Zadoff-Chu sequence of length `n`, unit norm.
fn zadoff_chu(n: usize) -> Vec<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|t| {
            let t = t as f64;
            let phase = if n % 2 == 0 {
                -std::f64::consts::PI * t * t / n as f64
            } else {
                -std::f64::consts::PI * t * (t + 1.0) / n as f64
            };
            Complex64::from_polar(scale, phase)
        })
        .collect()
}

/// Necessary identifiability condition for the pilot-only estimate: the
/// number of pilot-bearing subcarriers per user must reach the channel
/// order, B * d_v >= L.
pub fn check_identifiability(cfg: &SystemConfig) -> bool {
    cfg.blocks * cfg.user_degree >= cfg.taps
}

/// Build the pilot book: user k's pilot on subcarrier n is the cyclic shift
/// of the base sequence selected by k's rank within the collision set F_n,
/// with shift spacing floor(N_p / d_c).
pub fn generate_zc_pilots(
    cfg: &SystemConfig,
    pattern: &FactorGraphPattern,
) -> Result<PilotBook> {
    let n_p = cfg.pilot_slots;
    let d_c = cfg.collision_degree;
    if n_p < d_c {
        return Err(Error::Config(format!(
            "cannot place {d_c} orthogonal pilot sequences in {n_p} pilot slots"
        )));
    }
    let base = zadoff_chu(n_p);
    let spacing = n_p / d_c;
    let mut symbols =
        vec![Complex64::new(0.0, 0.0); cfg.blocks * n_p * cfg.subcarriers * cfg.users];
    for b in 0..cfg.blocks {
        for n in 0..cfg.subcarriers {
            for (rank, &k) in pattern.colliding_users(n).iter().enumerate() {
                let shift = rank * spacing;
                for t in 0..n_p {
                    symbols[((b * n_p + t) * cfg.subcarriers + n) * cfg.users + k] =
                        base[(t + shift) % n_p];
                }
            }
        }
    }
    let book = PilotBook {
        symbols,
        pilot_slots: n_p,
        subcarriers: cfg.subcarriers,
        users: cfg.users,
    };
    verify_orthonormality(&book, cfg, pattern, 1e-10)?;
    Ok(book)
}

/// Check the per-subcarrier pilot Gram matrix against the identity.
fn verify_orthonormality(
    book: &PilotBook,
    cfg: &SystemConfig,
    pattern: &FactorGraphPattern,
    tol: f64,
) -> Result<()> {
    for b in 0..cfg.blocks {
        for n in 0..cfg.subcarriers {
            let users = pattern.colliding_users(n);
            for (i, &ki) in users.iter().enumerate() {
                for &kj in users.iter().skip(i) {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for t in 0..book.pilot_slots {
                        acc += book.symbol(b, t, n, ki).conj() * book.symbol(b, t, n, kj);
                    }
                    let target = if ki == kj { 1.0 } else { 0.0 };
                    if (acc - target).norm() > tol {
                        return Err(Error::Config(format!(
                            "pilot sequences not orthonormal on subcarrier {n}: \
                             <{ki},{kj}> = {acc}"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Per-user Gram block G_k = sum_b F_b^H E_k F_b (L x L).
pub fn gram_block(
    cfg: &SystemConfig,
    pattern: &FactorGraphPattern,
    user: usize,
) -> DMatrix<Complex64> {
    let dft = DftTable::new(cfg);
    let l = cfg.taps;
    let mut g = DMatrix::zeros(l, l);
    for b in 0..cfg.blocks {
        for &n in pattern.user_support(user) {
            for r in 0..l {
                for c in 0..l {
                    g[(r, c)] += dft.entry(b, n, r).conj() * dft.entry(b, n, c);
                }
            }
        }
    }
    g
}

/// Smallest singular value of one user's Gram block; positive iff the
/// pilot-only estimate for that user is well posed.
pub fn gram_min_singular_value(
    cfg: &SystemConfig,
    pattern: &FactorGraphPattern,
    user: usize,
) -> f64 {
    let g = gram_block(cfg, pattern, user);
    let svd = g.svd(false, false);
    svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Pilot-only ML channel estimate with the per-user Gram blocks it used.
#[derive(Debug, Clone)]
pub struct MlEstimate {
    /// Row-major K x L estimated taps.
    pub h_hat: Vec<Complex64>,
    /// Per-user L x L Gram blocks.
    pub gram: Vec<DMatrix<Complex64>>,
    pub num_taps: usize,
}

impl MlEstimate {
    pub fn user_estimate(&self, user: usize) -> &[Complex64] {
        &self.h_hat[user * self.num_taps..(user + 1) * self.num_taps]
    }
}

/// ML estimate of every user's taps from the pilot slots of `y`.
///
/// Solves h_k = G_k^{-1} u_k per user; the K*L-dimensional normal equations
/// are never materialized.
pub fn ml_estimate(
    y: &ReceivedGrid,
    pilots: &PilotBook,
    pattern: &FactorGraphPattern,
    cfg: &SystemConfig,
) -> Result<MlEstimate> {
    if !check_identifiability(cfg) {
        return Err(Error::Identifiability(format!(
            "B*d_v = {} < L = {}",
            cfg.blocks * cfg.user_degree,
            cfg.taps
        )));
    }
    let dft = DftTable::new(cfg);
    let l = cfg.taps;
    let mut h_hat = Vec::with_capacity(cfg.users * l);
    let mut gram = Vec::with_capacity(cfg.users);
    for k in 0..cfg.users {
        let g = gram_block(cfg, pattern, k);
        let mut u = DVector::zeros(l);
        for b in 0..cfg.blocks {
            for &n in pattern.user_support(k) {
                // Correlate the received pilot slots against user k's sequence.
                let mut corr = Complex64::new(0.0, 0.0);
                for t in 0..cfg.pilot_slots {
                    corr += pilots.symbol(b, t, n, k).conj() * y.y(b, t, n);
                }
                for li in 0..l {
                    u[li] += dft.entry(b, n, li).conj() * corr;
                }
            }
        }
        let solved = g.clone().lu().solve(&u).ok_or_else(|| {
            Error::Identifiability(format!("singular Gram block for user {k}"))
        })?;
        h_hat.extend(solved.iter().cloned());
        gram.push(g);
    }
    Ok(MlEstimate {
        h_hat,
        gram,
        num_taps: l,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_cirs, freq_response, transmit, SymbolGrid};
    use crate::codebook::default_for_pattern;
    use crate::pattern::build_pattern;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn zc_gram_is_identity_for_full_config() {
        let cfg = SystemConfig::default();
        let pattern = build_pattern(&cfg, 0).unwrap();
        let book = generate_zc_pilots(&cfg, &pattern).unwrap();
        // Explicit Gram check, tighter than the construction tolerance.
        for n in 0..cfg.subcarriers {
            let users = pattern.colliding_users(n);
            for &ki in users {
                for &kj in users {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for t in 0..cfg.pilot_slots {
                        acc += book.symbol(0, t, n, ki).conj() * book.symbol(0, t, n, kj);
                    }
                    let target = if ki == kj { 1.0 } else { 0.0 };
                    assert!((acc - target).norm() < 1e-12, "({ki},{kj}) on {n}: {acc}");
                }
            }
        }
    }

    #[test]
    fn single_user_sequence_is_unit_norm() {
        let cfg = SystemConfig {
            users: 1,
            subcarriers: 1,
            user_degree: 1,
            collision_degree: 1,
            blocks: 6,
            ..SystemConfig::default()
        };
        let pattern = build_pattern(&cfg, 0).unwrap();
        let book = generate_zc_pilots(&cfg, &pattern).unwrap();
        let mut acc = 0.0;
        for t in 0..cfg.pilot_slots {
            acc += book.symbol(0, t, 0, 0).norm_sqr();
        }
        assert!((acc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identifiability_condition() {
        let mut cfg = SystemConfig::default();
        assert!(check_identifiability(&cfg)); // 6*2 >= 6
        cfg.blocks = 1;
        assert!(!check_identifiability(&cfg)); // 2 < 6
        cfg.blocks = 3;
        assert!(check_identifiability(&cfg)); // 6 >= 6
        let pattern = build_pattern(&cfg, 0).unwrap();
        let smin = gram_min_singular_value(&cfg, &pattern, 0);
        assert!(smin > 1e-6, "smallest singular value {smin}");
    }

    #[test]
    fn even_length_pilot_book_is_orthonormal() {
        let cfg = SystemConfig {
            pilot_slots: 14,
            ..SystemConfig::default()
        };
        let pattern = build_pattern(&cfg, 0).unwrap();
        assert!(generate_zc_pilots(&cfg, &pattern).is_ok());
    }

    #[test]
    fn rejects_too_few_pilot_slots() {
        let cfg = SystemConfig::default();
        let pattern = build_pattern(&cfg, 0).unwrap();
        let short = SystemConfig {
            pilot_slots: 3,
            ..cfg
        };
        assert!(generate_zc_pilots(&short, &pattern).is_err());
    }

    #[test]
    fn noiseless_estimate_recovers_active_channels() {
        let cfg = SystemConfig::default();
        let pattern = build_pattern(&cfg, 0).unwrap();
        let codebook = default_for_pattern(&pattern, cfg.codebook_size).unwrap();
        let pilots = generate_zc_pilots(&cfg, &pattern).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let mut active = vec![false; cfg.users];
        for k in [3, 17, 30, 44] {
            active[k] = true;
        }
        let state = draw_cirs(&active, cfg.taps, &cfg.power_delay_profile(), &mut rng);
        let fr = freq_response(&state, &cfg);
        let symbols = SymbolGrid::random(&cfg, &active, &mut rng);
        let y = transmit(
            &symbols, &active, &pilots, &fr, &pattern, &codebook, &cfg, 0.0, &mut rng,
        );
        let ml = ml_estimate(&y, &pilots, &pattern, &cfg).unwrap();
        for k in [3usize, 17, 30, 44] {
            let err: f64 = ml
                .user_estimate(k)
                .iter()
                .zip(state.user_taps(k))
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            let power = state.user_power(k);
            assert!(err / power < 1e-16, "user {k}: relative error {}", err / power);
        }
    }

    #[test]
    fn estimate_matches_gram_blocks_invariant() {
        let cfg = SystemConfig::default();
        let pattern = build_pattern(&cfg, 5).unwrap();
        for k in [0usize, 11, 47] {
            let g = gram_block(&cfg, &pattern, k);
            // Diagonal entries equal B*d_v exactly (unit-modulus DFT rows).
            for l in 0..cfg.taps {
                assert!((g[(l, l)].re - 12.0).abs() < 1e-9);
                assert!(g[(l, l)].im.abs() < 1e-9);
            }
        }
    }
}

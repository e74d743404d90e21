//! User activity, tapped-delay channels, frequency responses, and the noisy
//! received signal.
//!
//! The number of simultaneously active users is Poisson distributed
//! (truncated to the user count); each active user's channel is an L-tap
//! delay line with circularly-symmetric Gaussian taps weighted by the power
//! delay profile. The per-subcarrier fading coefficient is the DFT of the
//! taps and stays constant over one fading block of pilot plus data slots.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::codebook::Codebook;
use crate::config::SystemConfig;
use crate::pattern::FactorGraphPattern;
use crate::pilot::PilotBook;

/// DFT entry for a global subcarrier index and a 0-based tap index.
///
/// The tap sum runs over l = 1..=L, so tap index `l` contributes
/// `exp(-j 2 pi n (l+1) / (B N))`.
pub fn dft_entry(total_subcarriers: usize, global_n: usize, tap: usize) -> Complex64 {
    let angle = -2.0 * std::f64::consts::PI * (global_n as f64) * ((tap + 1) as f64)
        / total_subcarriers as f64;
    Complex64::from_polar(1.0, angle)
}

/// Precomputed per-block DFT rows, indexed by (block, subcarrier, tap).
#[derive(Debug, Clone)]
pub struct DftTable {
    entries: Vec<Complex64>,
    subcarriers: usize,
    taps: usize,
}

impl DftTable {
    pub fn new(cfg: &SystemConfig) -> DftTable {
        let total = cfg.total_subcarriers();
        let mut entries = Vec::with_capacity(total * cfg.taps);
        for b in 0..cfg.blocks {
            for n in 0..cfg.subcarriers {
                for l in 0..cfg.taps {
                    entries.push(dft_entry(total, b * cfg.subcarriers + n, l));
                }
            }
        }
        DftTable {
            entries,
            subcarriers: cfg.subcarriers,
            taps: cfg.taps,
        }
    }

    #[inline]
    pub fn entry(&self, block: usize, n: usize, tap: usize) -> Complex64 {
        self.entries[(block * self.subcarriers + n) * self.taps + tap]
    }
}

/// Channel impulse responses and the activity flags that produced them.
#[derive(Debug, Clone)]
pub struct ChannelState {
    /// Row-major K x L tap matrix; inactive users have all-zero rows.
    pub taps: Vec<Complex64>,
    pub active: Vec<bool>,
    pub num_taps: usize,
    pub pdp: Vec<f64>,
}

impl ChannelState {
    #[inline]
    pub fn tap(&self, user: usize, l: usize) -> Complex64 {
        self.taps[user * self.num_taps + l]
    }

    pub fn user_taps(&self, user: usize) -> &[Complex64] {
        &self.taps[user * self.num_taps..(user + 1) * self.num_taps]
    }

    /// Total channel power of one user.
    pub fn user_power(&self, user: usize) -> f64 {
        self.user_taps(user).iter().map(|h| h.norm_sqr()).sum()
    }
}

/// Block-fading frequency response, indexed by (block, subcarrier, user).
#[derive(Debug, Clone)]
pub struct FreqResponse {
    alpha: Vec<Complex64>,
    subcarriers: usize,
    users: usize,
}

impl FreqResponse {
    #[inline]
    pub fn alpha(&self, block: usize, n: usize, user: usize) -> Complex64 {
        self.alpha[(block * self.subcarriers + n) * self.users + user]
    }

    pub fn from_raw(alpha: Vec<Complex64>, subcarriers: usize, users: usize) -> FreqResponse {
        FreqResponse {
            alpha,
            subcarriers,
            users,
        }
    }
}

/// Draw the set of active users: a Poisson count truncated to [0, K], then a
/// uniform choice of that many distinct users.
pub fn draw_activity<R: Rng>(activity_mean: f64, users: usize, rng: &mut R) -> Vec<bool> {
    let poisson = Poisson::new(activity_mean).expect("activity mean must be positive");
    let count = (poisson.sample(rng) as usize).min(users);
    let mut active = vec![false; users];
    for idx in rand::seq::index::sample(rng, users, count) {
        active[idx] = true;
    }
    active
}

/// Draw channel taps for the active users; inactive users get zero rows.
pub fn draw_cirs<R: Rng>(
    active: &[bool],
    num_taps: usize,
    pdp: &[f64],
    rng: &mut R,
) -> ChannelState {
    assert_eq!(pdp.len(), num_taps);
    let mut taps = vec![Complex64::new(0.0, 0.0); active.len() * num_taps];
    for (k, &is_active) in active.iter().enumerate() {
        if !is_active {
            continue;
        }
        for (l, &power) in pdp.iter().enumerate() {
            let scale = (power / 2.0).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            taps[k * num_taps + l] = Complex64::new(re * scale, im * scale);
        }
    }
    ChannelState {
        taps,
        active: active.to_vec(),
        num_taps,
        pdp: pdp.to_vec(),
    }
}

/// DFT of the channel taps onto every (block, subcarrier, user) triple.
pub fn freq_response(state: &ChannelState, cfg: &SystemConfig) -> FreqResponse {
    let dft = DftTable::new(cfg);
    let users = state.active.len();
    let mut alpha =
        vec![Complex64::new(0.0, 0.0); cfg.blocks * cfg.subcarriers * users];
    for b in 0..cfg.blocks {
        for n in 0..cfg.subcarriers {
            for k in 0..users {
                if !state.active[k] {
                    continue;
                }
                let mut sum = Complex64::new(0.0, 0.0);
                for l in 0..state.num_taps {
                    sum += state.tap(k, l) * dft.entry(b, n, l);
                }
                alpha[(b * cfg.subcarriers + n) * users + k] = sum;
            }
        }
    }
    FreqResponse {
        alpha,
        subcarriers: cfg.subcarriers,
        users,
    }
}

/// Data symbols for one frame: augmented symbol index per
/// (block, data slot, user); 0 is the zero codeword.
#[derive(Debug, Clone)]
pub struct SymbolGrid {
    symbols: Vec<usize>,
    data_slots: usize,
    users: usize,
}

impl SymbolGrid {
    /// Uniform random codewords for active users, zero for the rest.
    pub fn random<R: Rng>(cfg: &SystemConfig, active: &[bool], rng: &mut R) -> SymbolGrid {
        let mut symbols = vec![0usize; cfg.blocks * cfg.data_slots * active.len()];
        for b in 0..cfg.blocks {
            for t in 0..cfg.data_slots {
                for (k, &is_active) in active.iter().enumerate() {
                    if is_active {
                        symbols[(b * cfg.data_slots + t) * active.len() + k] =
                            rng.random_range(1..=cfg.codebook_size);
                    }
                }
            }
        }
        SymbolGrid {
            symbols,
            data_slots: cfg.data_slots,
            users: active.len(),
        }
    }

    pub fn from_raw(symbols: Vec<usize>, data_slots: usize, users: usize) -> SymbolGrid {
        SymbolGrid {
            symbols,
            data_slots,
            users,
        }
    }

    #[inline]
    pub fn symbol(&self, block: usize, data_slot: usize, user: usize) -> usize {
        self.symbols[(block * self.data_slots + data_slot) * self.users + user]
    }
}

/// Received samples indexed by (block, slot, subcarrier); pilot slots come
/// first within each block.
#[derive(Debug, Clone)]
pub struct ReceivedGrid {
    y: Vec<Complex64>,
    slots: usize,
    subcarriers: usize,
}

impl ReceivedGrid {
    #[inline]
    pub fn y(&self, block: usize, slot: usize, n: usize) -> Complex64 {
        self.y[(block * self.slots + slot) * self.subcarriers + n]
    }

    pub fn slots(&self) -> usize {
        self.slots
    }
}

/// Superimpose every active user's pilot and data symbols through the fading
/// channel and add complex Gaussian noise of variance `noise_var` (zero
/// noise is allowed).
#[allow(clippy::too_many_arguments)]
pub fn transmit<R: Rng>(
    symbols: &SymbolGrid,
    active: &[bool],
    pilots: &PilotBook,
    response: &FreqResponse,
    pattern: &FactorGraphPattern,
    codebook: &Codebook,
    cfg: &SystemConfig,
    noise_var: f64,
    rng: &mut R,
) -> ReceivedGrid {
    let slots = cfg.slots();
    let mut y = vec![Complex64::new(0.0, 0.0); cfg.blocks * slots * cfg.subcarriers];
    let noise_scale = (noise_var / 2.0).sqrt();
    for b in 0..cfg.blocks {
        for t in 0..slots {
            for n in 0..cfg.subcarriers {
                let mut sum = Complex64::new(0.0, 0.0);
                for &k in pattern.colliding_users(n) {
                    if !active[k] {
                        continue;
                    }
                    let x = if t < cfg.pilot_slots {
                        pilots.symbol(b, t, n, k)
                    } else {
                        codebook.component_at(k, symbols.symbol(b, t - cfg.pilot_slots, k), n)
                    };
                    sum += response.alpha(b, n, k) * x;
                }
                if noise_scale > 0.0 {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    sum += Complex64::new(re * noise_scale, im * noise_scale);
                }
                y[(b * slots + t) * cfg.subcarriers + n] = sum;
            }
        }
    }
    ReceivedGrid {
        y,
        slots,
        subcarriers: cfg.subcarriers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::default_for_pattern;
    use crate::pattern::build_pattern;
    use crate::pilot::generate_zc_pilots;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn tiny_activity_mean_yields_all_inactive() {
        let mut r = rng(0);
        for _ in 0..200 {
            let active = draw_activity(1e-9, 48, &mut r);
            assert!(active.iter().all(|a| !a));
        }
    }

    #[test]
    fn activity_sample_mean_matches_poisson() {
        let mut r = rng(1);
        let mut total = 0usize;
        let draws = 100_000;
        for _ in 0..draws {
            total += draw_activity(5.0, 48, &mut r).iter().filter(|a| **a).count();
        }
        let mean = total as f64 / draws as f64;
        assert!((4.9..=5.1).contains(&mean), "mean {mean}");
    }

    #[test]
    fn activity_never_exceeds_user_count() {
        let mut r = rng(2);
        for _ in 0..2000 {
            let active = draw_activity(8.0, 48, &mut r);
            assert!(active.iter().filter(|a| **a).count() <= 48);
        }
        for _ in 0..200 {
            let active = draw_activity(100.0, 48, &mut r);
            assert!(active.iter().filter(|a| **a).count() <= 48);
        }
    }

    #[test]
    fn inactive_users_have_zero_rows() {
        let mut r = rng(3);
        let state = draw_cirs(&[false, true, false], 6, &vec![1.0 / 6.0; 6], &mut r);
        assert!(state.user_taps(0).iter().all(|h| h.norm_sqr() == 0.0));
        assert!(state.user_taps(2).iter().all(|h| h.norm_sqr() == 0.0));
        assert!(state.user_power(1) > 0.0);
        assert_eq!(state.user_taps(1).len(), 6);
    }

    #[test]
    fn tap_variance_matches_pdp() {
        let mut r = rng(4);
        let taps = 4;
        let pdp = vec![0.25; taps];
        let mut sums = vec![0.0; taps];
        let draws = 100_000;
        for _ in 0..draws {
            let state = draw_cirs(&[true], taps, &pdp, &mut r);
            for l in 0..taps {
                sums[l] += state.tap(0, l).norm_sqr();
            }
        }
        for l in 0..taps {
            let var = sums[l] / draws as f64;
            assert!((var - 0.25).abs() < 0.25 * 0.03, "tap {l}: {var}");
        }
    }

    fn small_cfg() -> SystemConfig {
        SystemConfig {
            blocks: 3,
            subcarriers: 6,
            users: 12,
            taps: 4,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn single_tap_yields_flat_response() {
        let cfg = small_cfg();
        let mut state = draw_cirs(&vec![true; 12], 4, &cfg.power_delay_profile(), &mut rng(5));
        for l in 0..4 {
            state.taps[l] = if l == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        let fr = freq_response(&state, &cfg);
        for b in 0..cfg.blocks {
            for n in 0..cfg.subcarriers {
                assert!((fr.alpha(b, n, 0).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_frequency_bin_sums_taps() {
        let cfg = small_cfg();
        let state = draw_cirs(&vec![true; 12], 4, &cfg.power_delay_profile(), &mut rng(6));
        let fr = freq_response(&state, &cfg);
        for k in 0..12 {
            let direct: Complex64 = state.user_taps(k).iter().sum();
            assert!((fr.alpha(0, 0, k) - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn response_matches_dense_dft_product() {
        let cfg = small_cfg();
        let state = draw_cirs(&vec![true; 12], 4, &cfg.power_delay_profile(), &mut rng(7));
        let fr = freq_response(&state, &cfg);
        let total = cfg.total_subcarriers();
        for k in 0..12 {
            for b in 0..cfg.blocks {
                for n in 0..cfg.subcarriers {
                    // Direct summation against explicitly constructed DFT rows.
                    let mut direct = Complex64::new(0.0, 0.0);
                    for l in 0..4 {
                        direct += state.tap(k, l) * dft_entry(total, b * cfg.subcarriers + n, l);
                    }
                    assert!((fr.alpha(b, n, k) - direct).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn response_is_linear_in_taps() {
        let cfg = small_cfg();
        let a = draw_cirs(&vec![true; 12], 4, &cfg.power_delay_profile(), &mut rng(8));
        let b = draw_cirs(&vec![true; 12], 4, &cfg.power_delay_profile(), &mut rng(9));
        let mut sum_state = a.clone();
        for (dst, src) in sum_state.taps.iter_mut().zip(b.taps.iter()) {
            *dst += *src;
        }
        let fa = freq_response(&a, &cfg);
        let fb = freq_response(&b, &cfg);
        let fs = freq_response(&sum_state, &cfg);
        for blk in 0..cfg.blocks {
            for n in 0..cfg.subcarriers {
                for k in 0..12 {
                    let lhs = fs.alpha(blk, n, k);
                    let rhs = fa.alpha(blk, n, k) + fb.alpha(blk, n, k);
                    assert!((lhs - rhs).norm() < 1e-12);
                }
            }
        }
    }

    fn frame_parts(
        cfg: &SystemConfig,
        active: Vec<bool>,
        seed: u64,
    ) -> (FactorGraphPattern, Codebook, PilotBook, ChannelState, FreqResponse, SymbolGrid) {
        let pattern = build_pattern(cfg, 0).unwrap();
        let codebook = default_for_pattern(&pattern, cfg.codebook_size).unwrap();
        let pilots = generate_zc_pilots(cfg, &pattern).unwrap();
        let mut r = rng(seed);
        let state = draw_cirs(&active, cfg.taps, &cfg.power_delay_profile(), &mut r);
        let fr = freq_response(&state, cfg);
        let symbols = SymbolGrid::random(cfg, &active, &mut r);
        (pattern, codebook, pilots, state, fr, symbols)
    }

    #[test]
    fn noiseless_single_user_reproduces_superposition() {
        let cfg = SystemConfig::default();
        let mut active = vec![false; cfg.users];
        active[10] = true;
        let (pattern, codebook, pilots, _state, fr, symbols) =
            frame_parts(&cfg, active.clone(), 11);
        let y = transmit(
            &symbols, &active, &pilots, &fr, &pattern, &codebook, &cfg, 0.0, &mut rng(12),
        );
        for b in 0..cfg.blocks {
            for t in 0..cfg.slots() {
                for n in 0..cfg.subcarriers {
                    let x = if t < cfg.pilot_slots {
                        pilots.symbol(b, t, n, 10)
                    } else {
                        codebook.component_at(10, symbols.symbol(b, t - cfg.pilot_slots, 10), n)
                    };
                    let expect = fr.alpha(b, n, 10) * x;
                    assert!((y.y(b, t, n) - expect).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn all_inactive_noiseless_is_zero() {
        let cfg = SystemConfig::default();
        let active = vec![false; cfg.users];
        let (pattern, codebook, pilots, _state, fr, symbols) = frame_parts(&cfg, active.clone(), 13);
        let y = transmit(
            &symbols, &active, &pilots, &fr, &pattern, &codebook, &cfg, 0.0, &mut rng(14),
        );
        for b in 0..cfg.blocks {
            for t in 0..cfg.slots() {
                for n in 0..cfg.subcarriers {
                    assert_eq!(y.y(b, t, n), Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn noise_variance_is_calibrated() {
        let cfg = SystemConfig {
            blocks: 2,
            subcarriers: 6,
            users: 12,
            data_slots: 100,
            ..SystemConfig::default()
        };
        let active = vec![false; cfg.users];
        let (pattern, codebook, pilots, _state, fr, symbols) = frame_parts(&cfg, active.clone(), 15);
        // Noise-only samples: 2 blocks x 107 slots x 6 subcarriers per frame.
        let mut r = rng(16);
        let mut sum = 0.0;
        let mut count = 0usize;
        for _ in 0..80 {
            let y = transmit(
                &symbols, &active, &pilots, &fr, &pattern, &codebook, &cfg, 0.1, &mut r,
            );
            for b in 0..cfg.blocks {
                for t in 0..cfg.slots() {
                    for n in 0..cfg.subcarriers {
                        sum += y.y(b, t, n).norm_sqr();
                        count += 1;
                    }
                }
            }
        }
        assert!(count > 100_000);
        let var = sum / count as f64;
        assert!((var - 0.1).abs() < 0.1 * 0.03, "variance {var}");
    }

    #[test]
    fn energy_bookkeeping_on_user_support() {
        let cfg = SystemConfig::default();
        let mut active = vec![false; cfg.users];
        active[7] = true;
        let (pattern, codebook, pilots, _state, fr, symbols) = frame_parts(&cfg, active.clone(), 17);
        let y = transmit(
            &symbols, &active, &pilots, &fr, &pattern, &codebook, &cfg, 0.0, &mut rng(18),
        );
        let t = cfg.pilot_slots + 3;
        for b in 0..cfg.blocks {
            let lhs: f64 = pattern
                .user_support(7)
                .iter()
                .map(|&n| y.y(b, t, n).norm_sqr())
                .sum();
            let rhs: f64 = pattern
                .user_support(7)
                .iter()
                .map(|&n| {
                    (fr.alpha(b, n, 7)
                        * codebook.component_at(7, symbols.symbol(b, t - cfg.pilot_slots, 7), n))
                    .norm_sqr()
                })
                .sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}

//! System-level parameters for the SCMA uplink.
//!
//! A [`SystemConfig`] describes one grant-free SCMA deployment: the resource
//! grid (subcarrier blocks, subcarriers, users), the sparse codebook shape,
//! the multipath channel order, the pilot/data frame split, and the knobs of
//! the iterative receiver. All other modules take the config by reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default variance used to replace non-positive or non-finite variances in
/// message updates.
pub const DEFAULT_VAR_CAP: f64 = 1e6;

/// Full parameter set for one SCMA system.
///
/// Construct with [`SystemConfig::new`] (which validates) or fill the fields
/// directly and call [`SystemConfig::validate`] before use.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    /// Number of subcarrier blocks B over which each user's codebook is reused.
    pub blocks: usize,
    /// Subcarriers per block N.
    pub subcarriers: usize,
    /// Potential users K.
    pub users: usize,
    /// Codebook size M (codewords per user; the augmented alphabet adds the
    /// zero codeword).
    pub codebook_size: usize,
    /// Nonzero dimensions per codeword d_v.
    pub user_degree: usize,
    /// Colliding users per subcarrier d_c.
    pub collision_degree: usize,
    /// Channel taps L.
    pub taps: usize,
    /// Pilot slots per fading block N_p.
    pub pilot_slots: usize,
    /// Data slots per fading block N_s.
    pub data_slots: usize,
    /// Poisson mean of the number of simultaneously active users.
    pub activity_mean: f64,
    /// Gamma prior shape hyperparameter a for the tap precisions.
    pub gamma_a: f64,
    /// Gamma prior rate hyperparameter b for the tap precisions.
    pub gamma_b: f64,
    /// Activity threshold: user k is declared inactive when its estimated
    /// total channel power falls below this value.
    pub activity_threshold: f64,
    /// Receiver iteration cap.
    pub max_iters: usize,
    /// Damping factor in (0, 1] applied to the EP message updates.
    pub damping: f64,
    /// Replacement value for non-positive variances produced by EP divisions.
    pub var_cap: f64,
    /// Complex noise variance per subcarrier observation.
    pub noise_var: f64,
    /// Optional power-delay-profile override (length `taps`, nonnegative).
    /// When absent an exponential profile is used.
    pub pdp: Option<Vec<f64>>,
}

impl Default for SystemConfig {
    /// The full-scale deployment used throughout: 48 users over 6 blocks of
    /// 24 subcarriers, 4-point codebooks with (d_v, d_c) = (2, 4), 6-tap
    /// channels, 7-slot pilots and 64 data slots.
    fn default() -> Self {
        SystemConfig {
            blocks: 6,
            subcarriers: 24,
            users: 48,
            codebook_size: 4,
            user_degree: 2,
            collision_degree: 4,
            taps: 6,
            pilot_slots: 7,
            data_slots: 64,
            activity_mean: 8.0,
            gamma_a: 1e-7,
            gamma_b: 1e-7,
            activity_threshold: 0.05,
            max_iters: 20,
            damping: 0.5,
            var_cap: DEFAULT_VAR_CAP,
            noise_var: 0.1,
            pdp: None,
        }
    }
}

impl SystemConfig {
    /// Validating constructor; see [`SystemConfig::validate`].
    pub fn new(cfg: SystemConfig) -> Result<SystemConfig> {
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check every structural invariant of the parameter set.
    ///
    /// Rejects degree-inconsistent factor graphs (K d_v != N d_c), pilot
    /// books too short to hold `collision_degree` orthogonal sequences
    /// (N_p < d_c), and configurations whose pilots cannot identify the
    /// channel (B d_v < L).
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.blocks == 0
            || self.subcarriers == 0
            || self.users == 0
            || self.taps == 0
            || self.pilot_slots == 0
            || self.data_slots == 0
        {
            return bad("blocks, subcarriers, users, taps, pilot and data slots must be positive".into());
        }
        if self.codebook_size < 2 || !self.codebook_size.is_power_of_two() {
            return bad(format!(
                "codebook size must be a power of two >= 2, got {}",
                self.codebook_size
            ));
        }
        if self.user_degree == 0 || self.user_degree > self.subcarriers {
            return bad(format!(
                "user degree {} must be in 1..={}",
                self.user_degree, self.subcarriers
            ));
        }
        if self.collision_degree == 0 || self.collision_degree > self.users {
            return bad(format!(
                "collision degree {} must be in 1..={}",
                self.collision_degree, self.users
            ));
        }
        if self.users * self.user_degree != self.subcarriers * self.collision_degree {
            return bad(format!(
                "degree equation unsatisfiable: K*d_v = {} but N*d_c = {}",
                self.users * self.user_degree,
                self.subcarriers * self.collision_degree
            ));
        }
        if self.blocks * self.user_degree < self.taps {
            return bad(format!(
                "channel not identifiable from pilots: B*d_v = {} < L = {}",
                self.blocks * self.user_degree,
                self.taps
            ));
        }
        if self.pilot_slots < self.collision_degree {
            return bad(format!(
                "cannot place {} orthogonal pilot sequences in {} pilot slots",
                self.collision_degree, self.pilot_slots
            ));
        }
        if !(self.activity_mean > 0.0) {
            return bad("activity mean must be positive".into());
        }
        if !(self.gamma_a > 0.0) || !(self.gamma_b > 0.0) {
            return bad("gamma hyperparameters must be positive".into());
        }
        if !(self.activity_threshold >= 0.0) {
            return bad("activity threshold must be nonnegative".into());
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping {} must lie in (0, 1]", self.damping));
        }
        if !(self.var_cap > 0.0) {
            return bad("var_cap must be positive".into());
        }
        if !(self.noise_var >= 0.0) {
            return bad("noise variance must be nonnegative".into());
        }
        if let Some(p) = &self.pdp {
            if p.len() != self.taps {
                return bad(format!("pdp override has {} entries, expected {}", p.len(), self.taps));
            }
            if p.iter().any(|v| !v.is_finite() || *v < 0.0) || p.iter().sum::<f64>() <= 0.0 {
                return bad("pdp entries must be nonnegative with positive sum".into());
            }
        }
        Ok(())
    }

    /// Slots per fading block (pilots followed by data).
    pub fn slots(&self) -> usize {
        self.pilot_slots + self.data_slots
    }

    /// Total subcarriers across all blocks.
    pub fn total_subcarriers(&self) -> usize {
        self.blocks * self.subcarriers
    }

    /// Bits carried by one nonzero codeword.
    pub fn bits_per_symbol(&self) -> usize {
        self.codebook_size.trailing_zeros() as usize
    }

    /// Augmented alphabet size M + 1 (index 0 is the zero codeword).
    pub fn alphabet_size(&self) -> usize {
        self.codebook_size + 1
    }

    /// Power-delay profile, normalized to unit total power.
    ///
    /// Defaults to an exponential profile `exp(-l/2)` over the tap index.
    pub fn power_delay_profile(&self) -> Vec<f64> {
        let raw: Vec<f64> = match &self.pdp {
            Some(p) => p.clone(),
            None => (0..self.taps).map(|l| (-(l as f64) / 2.0).exp()).collect(),
        };
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }

    /// Noise variance corresponding to an Eb/N0 operating point.
    ///
    /// Codewords are normalized to unit average energy and carry log2(M)
    /// bits, so Eb = 1/log2(M) and sigma^2 = Eb * 10^(-EbN0_dB/10).
    pub fn noise_var_for_snr_db(&self, ebn0_db: f64) -> f64 {
        let eb = 1.0 / self.bits_per_symbol() as f64;
        eb * 10f64.powf(-ebn0_db / 10.0)
    }
}

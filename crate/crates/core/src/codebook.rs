//! SCMA codebooks: per-user sparse multi-dimensional constellations.
//!
//! A codebook assigns each user M codewords living on its `user_degree`
//! occupied subcarriers; the augmented alphabet adds the all-zero codeword
//! (index 0 throughout the crate) that models an inactive user. Codebooks are
//! loaded from a JSON file or generated with [`default_for_pattern`]; stored
//! codewords are always re-normalized to unit average energy per codeword so
//! the Eb/N0 mapping is well defined.
//!
//! File schema:
//!
//! ```json
//! {"M":4,"users":[{"support":[n1,n2],"codewords":[[[re,im],...],...],"bits":["00","01",...]},...]}
//! ```
//!
//! Each codeword lists its `d_v` nonzero entries as `[re, im]` pairs aligned
//! with `support`.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::FactorGraphPattern;

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    #[serde(rename = "M")]
    m: usize,
    users: Vec<UserEntry>,
}

#[derive(Serialize, Deserialize)]
struct UserEntry {
    support: Vec<usize>,
    codewords: Vec<Vec<[f64; 2]>>,
    bits: Vec<String>,
}

/// Per-user codeword sets over the augmented alphabet.
#[derive(Debug, Clone)]
pub struct Codebook {
    size: usize,
    bits_per_symbol: usize,
    subcarriers: usize,
    /// Occupied subcarriers per user, ascending (mirrors the pattern).
    supports: Vec<Vec<usize>>,
    /// `packed[k][m][d]` is codeword m of user k at support position d.
    packed: Vec<Vec<Vec<Complex64>>>,
    /// Bit label of each codeword, `labels[k][m]` in {0,1}^bits_per_symbol.
    labels: Vec<Vec<Vec<u8>>>,
}

impl Codebook {
    /// Codebook size M.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Bits carried per nonzero codeword.
    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// Augmented alphabet size M + 1.
    pub fn alphabet_size(&self) -> usize {
        self.size + 1
    }

    pub fn users(&self) -> usize {
        self.packed.len()
    }

    /// Component of an augmented symbol at a support position.
    ///
    /// `symbol` uses the crate-wide convention: 0 is the zero codeword,
    /// 1..=M are codebook entries.
    pub fn component(&self, user: usize, symbol: usize, support_pos: usize) -> Complex64 {
        if symbol == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            self.packed[user][symbol - 1][support_pos]
        }
    }

    /// Component of an augmented symbol on subcarrier `n` (zero off-support).
    pub fn component_at(&self, user: usize, symbol: usize, n: usize) -> Complex64 {
        match self.supports[user].iter().position(|&s| s == n) {
            Some(d) => self.component(user, symbol, d),
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// Full length-N codeword vector for codeword index `m` (0-based).
    pub fn codeword_full(&self, user: usize, m: usize) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.subcarriers];
        for (d, &n) in self.supports[user].iter().enumerate() {
            v[n] = self.packed[user][m][d];
        }
        v
    }

    /// Bit label of codeword index `m` (0-based).
    pub fn bits_of(&self, user: usize, m: usize) -> &[u8] {
        &self.labels[user][m]
    }

    /// Map a bit label to the full codeword vector of `user`.
    pub fn encode(&self, bits: &[u8], user: usize) -> Result<Vec<Complex64>> {
        let m = self.symbol_for_bits(bits, user)?;
        Ok(self.codeword_full(user, m - 1))
    }

    /// Map a bit label to its augmented symbol index (1..=M).
    pub fn symbol_for_bits(&self, bits: &[u8], user: usize) -> Result<usize> {
        if bits.len() != self.bits_per_symbol {
            return Err(Error::Codebook(format!(
                "bit label has length {}, expected {}",
                bits.len(),
                self.bits_per_symbol
            )));
        }
        for (m, label) in self.labels[user].iter().enumerate() {
            if label == bits {
                return Ok(m + 1);
            }
        }
        Err(Error::Codebook(format!("no codeword labelled {bits:?}")))
    }

    /// Average codeword energy of one user (should be 1 after loading).
    pub fn average_energy(&self, user: usize) -> f64 {
        let total: f64 = self.packed[user]
            .iter()
            .map(|cw| cw.iter().map(|c| c.norm_sqr()).sum::<f64>())
            .sum();
        total / self.size as f64
    }

    /// Serialize to the JSON file schema.
    pub fn to_json_string(&self) -> String {
        let file = CodebookFile {
            m: self.size,
            users: (0..self.users())
                .map(|k| UserEntry {
                    support: self.supports[k].clone(),
                    codewords: self.packed[k]
                        .iter()
                        .map(|cw| cw.iter().map(|c| [c.re, c.im]).collect())
                        .collect(),
                    bits: self.labels[k]
                        .iter()
                        .map(|bits| bits.iter().map(|b| (b'0' + b) as char).collect())
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("codebook serialization cannot fail")
    }
}

/// Parse, validate against the pattern, and normalize a codebook from JSON.
pub fn from_json(json: &str, pattern: &FactorGraphPattern) -> Result<Codebook> {
    let file: CodebookFile = serde_json::from_str(json)?;
    let m = file.m;
    if m < 2 || !m.is_power_of_two() {
        return Err(Error::Codebook(format!(
            "codebook size must be a power of two >= 2, got {m}"
        )));
    }
    let bits_per_symbol = m.trailing_zeros() as usize;
    if file.users.len() != pattern.users() {
        return Err(Error::Codebook(format!(
            "file has {} users, pattern has {}",
            file.users.len(),
            pattern.users()
        )));
    }

    let mut supports = Vec::with_capacity(file.users.len());
    let mut packed = Vec::with_capacity(file.users.len());
    let mut labels = Vec::with_capacity(file.users.len());
    for (k, entry) in file.users.iter().enumerate() {
        // Canonicalize the support to ascending order, permuting codeword
        // entries to match, then compare against the pattern.
        let mut order: Vec<usize> = (0..entry.support.len()).collect();
        order.sort_by_key(|&i| entry.support[i]);
        let support: Vec<usize> = order.iter().map(|&i| entry.support[i]).collect();
        if support != pattern.user_support(k) {
            return Err(Error::Codebook(format!(
                "support mismatch for user {k}: file {support:?}, pattern {:?}",
                pattern.user_support(k)
            )));
        }
        if entry.codewords.len() != m {
            return Err(Error::Codebook(format!(
                "user {k} has {} codewords, expected {m}",
                entry.codewords.len()
            )));
        }
        let mut user_cw = Vec::with_capacity(m);
        for cw in &entry.codewords {
            if cw.len() != support.len() {
                return Err(Error::Codebook(format!(
                    "user {k}: codeword has {} entries, support has {}",
                    cw.len(),
                    support.len()
                )));
            }
            let reordered: Vec<Complex64> = order
                .iter()
                .map(|&i| Complex64::new(cw[i][0], cw[i][1]))
                .collect();
            if reordered
                .iter()
                .any(|c| !c.re.is_finite() || !c.im.is_finite())
            {
                return Err(Error::Codebook(format!("user {k}: non-finite codeword entry")));
            }
            if reordered.iter().any(|c| c.norm_sqr() == 0.0) {
                return Err(Error::Codebook(format!(
                    "user {k}: zero entry on the codeword support"
                )));
            }
            user_cw.push(reordered);
        }
        // Normalize to unit average energy per codeword.
        let avg: f64 = user_cw
            .iter()
            .map(|cw| cw.iter().map(|c| c.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / m as f64;
        let scale = 1.0 / avg.sqrt();
        for cw in &mut user_cw {
            for c in cw.iter_mut() {
                *c *= scale;
            }
        }

        if entry.bits.len() != m {
            return Err(Error::Codebook(format!("user {k}: {} bit labels for {m} codewords", entry.bits.len())));
        }
        let mut user_labels = Vec::with_capacity(m);
        for s in &entry.bits {
            if s.len() != bits_per_symbol || !s.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(Error::Codebook(format!("user {k}: malformed bit label {s:?}")));
            }
            user_labels.push(s.bytes().map(|b| b - b'0').collect::<Vec<u8>>());
        }
        let mut sorted = user_labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != m {
            return Err(Error::Codebook(format!("user {k}: duplicate bit labels")));
        }

        supports.push(support);
        packed.push(user_cw);
        labels.push(user_labels);
    }

    Ok(Codebook {
        size: m,
        bits_per_symbol,
        subcarriers: pattern.subcarriers(),
        supports,
        packed,
        labels,
    })
}

/// Load a codebook file and validate it against the pattern.
pub fn load_codebook(path: &Path, pattern: &FactorGraphPattern) -> Result<Codebook> {
    let text = std::fs::read_to_string(path)?;
    from_json(&text, pattern)
}

/// Generate the default codebook for a pattern: an M-PSK mother
/// constellation on `user_degree` dimensions with a fixed inter-dimension
/// rotation and a per-user phase offset spread by the golden ratio, so that
/// colliding users never share a rotated constellation.
pub fn default_for_pattern(pattern: &FactorGraphPattern, m: usize) -> Result<Codebook> {
    if m < 2 || !m.is_power_of_two() {
        return Err(Error::Codebook(format!(
            "codebook size must be a power of two >= 2, got {m}"
        )));
    }
    let bits_per_symbol = m.trailing_zeros() as usize;
    let golden = 0.618_033_988_749_894_9_f64;
    let mut supports = Vec::with_capacity(pattern.users());
    let mut packed = Vec::with_capacity(pattern.users());
    let mut labels = Vec::with_capacity(pattern.users());
    for k in 0..pattern.users() {
        let support = pattern.user_support(k).to_vec();
        let d_v = support.len();
        let amp = 1.0 / (d_v as f64).sqrt();
        let user_phase = std::f64::consts::FRAC_PI_2 * (k as f64 * golden).fract();
        let mut user_cw = Vec::with_capacity(m);
        let mut user_labels = Vec::with_capacity(m);
        for sym in 0..m {
            let psk = 2.0 * std::f64::consts::PI * sym as f64 / m as f64
                + std::f64::consts::PI / m as f64;
            let cw: Vec<Complex64> = (0..d_v)
                .map(|d| {
                    let dim_phase = std::f64::consts::FRAC_PI_2 * d as f64 / d_v as f64;
                    Complex64::from_polar(amp, psk + user_phase + dim_phase)
                })
                .collect();
            user_cw.push(cw);
            user_labels.push(
                (0..bits_per_symbol)
                    .map(|i| ((sym >> (bits_per_symbol - 1 - i)) & 1) as u8)
                    .collect(),
            );
        }
        supports.push(support);
        packed.push(user_cw);
        labels.push(user_labels);
    }
    Ok(Codebook {
        size: m,
        bits_per_symbol,
        subcarriers: pattern.subcarriers(),
        supports,
        packed,
        labels,
    })
}

// Temporary debugging harness; not part of the deliverable.
use scma_core::channel::{draw_activity, draw_cirs, freq_response, transmit, SymbolGrid};
use scma_core::codebook::default_for_pattern;
use scma_core::harness::frame_rngs;
use scma_core::pattern::build_pattern;
use scma_core::pilot::{generate_zc_pilots, ml_estimate};
use scma_core::receiver::ReceiverState;
use scma_core::SystemConfig;

fn main() {
    let mut cfg = SystemConfig::default();
    cfg.noise_var = cfg.noise_var_for_snr_db(8.0);
    cfg.max_iters = 24;
    let pattern = build_pattern(&cfg, 0).unwrap();
    let codebook = default_for_pattern(&pattern, cfg.codebook_size).unwrap();
    let pilots = generate_zc_pilots(&cfg, &pattern).unwrap();
    let [mut r0, mut r1, mut r2, mut r3] = frame_rngs(3, 0);
    let active = draw_activity(cfg.activity_mean, cfg.users, &mut r0);
    let state = draw_cirs(&active, cfg.taps, &cfg.power_delay_profile(), &mut r1);
    let fr = freq_response(&state, &cfg);
    let symbols = SymbolGrid::random(&cfg, &active, &mut r2);
    let y = transmit(&symbols, &active, &pilots, &fr, &pattern, &codebook, &cfg, cfg.noise_var, &mut r3);
    let ml = ml_estimate(&y, &pilots, &pattern, &cfg).unwrap();
    let mut rx = ReceiverState::init(&ml, &y, &pilots, &codebook, &pattern, &cfg);
    let den: f64 = (0..cfg.users).filter(|&k| active[k]).map(|k| state.user_power(k)).sum();
    let mut prev: Option<Vec<_>> = None;
    for it in 0..cfg.max_iters {
        rx.iterate();
        let (hb, hq) = rx.debug_taps();
        // NMSE split by tap strength
        let mut strong = 0.0; let mut weak = 0.0; let mut silent = 0.0;
        for k in 0..cfg.users {
            for l in 0..cfg.taps {
                let err = (hb[k*cfg.taps+l].mean - state.tap(k,l)).norm_sqr();
                if !active[k] { silent += err; }
                else if state.tap(k,l).norm_sqr() > 0.05 { strong += err; } else { weak += err; }
            }
        }
        let drift = prev.map(|p: Vec<scma_core::GaussMsg>| {
            hb.iter().zip(&p).map(|(a,b)| (a.mean-b.mean).norm()).fold(0.0,f64::max)
        }).unwrap_or(0.0);
        prev = Some(hb.clone());
        let qv: f64 = (0..cfg.users).filter(|&k| active[k]).map(|k| (0..cfg.taps).map(|l| hq[k*cfg.taps+l].var).sum::<f64>()).sum::<f64>() / (active.iter().filter(|a|**a).count()*cfg.taps) as f64;
        println!("it {it:2}: nmse_strong {:.4e} weak {:.4e} (silent contrib {:.1e}), max|dh| {:.2e}, avg active q_var {:.2e}", strong/den, weak/den, silent/den, drift, qv);
    }
}

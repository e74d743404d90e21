// Temporary debugging harness; not part of the deliverable.
use scma_core::channel::{draw_activity, draw_cirs, freq_response, transmit, SymbolGrid};
use scma_core::codebook::default_for_pattern;
use scma_core::harness::frame_rngs;
use scma_core::pattern::build_pattern;
use scma_core::pilot::{generate_zc_pilots, ml_estimate};
use scma_core::receiver::ReceiverState;
use scma_core::SystemConfig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let snr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(8.0);
    let frames: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(30);
    let iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(20);
    let lambda: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(8.0);

    let mut cfg = SystemConfig::default();
    cfg.noise_var = cfg.noise_var_for_snr_db(snr);
    cfg.activity_mean = lambda;
    cfg.max_iters = iters;
    let pattern = build_pattern(&cfg, 0).unwrap();
    let codebook = default_for_pattern(&pattern, cfg.codebook_size).unwrap();
    let pilots = generate_zc_pilots(&cfg, &pattern).unwrap();

    let mut active_pw: Vec<f64> = Vec::new();
    let mut silent_pw: Vec<f64> = Vec::new();
    let mut active_true_pw: Vec<f64> = Vec::new();
    for f in 0..frames {
        let [mut r0, mut r1, mut r2, mut r3] = frame_rngs(1, f as u64);
        let active = draw_activity(cfg.activity_mean, cfg.users, &mut r0);
        let state = draw_cirs(&active, cfg.taps, &cfg.power_delay_profile(), &mut r1);
        let fr = freq_response(&state, &cfg);
        let symbols = SymbolGrid::random(&cfg, &active, &mut r2);
        let y = transmit(
            &symbols, &active, &pilots, &fr, &pattern, &codebook, &cfg, cfg.noise_var, &mut r3,
        );
        let ml = ml_estimate(&y, &pilots, &pattern, &cfg).unwrap();
        let mut rx = ReceiverState::init(&ml, &y, &pilots, &codebook, &pattern, &cfg);
        for _ in 0..cfg.max_iters {
            rx.iterate();
        }
        let powers = rx.user_power_estimates();
        for k in 0..cfg.users {
            if active[k] {
                active_pw.push(powers[k]);
                active_true_pw.push(state.user_power(k));
            } else {
                silent_pw.push(powers[k]);
            }
        }
    }
    active_pw.sort_by(|a, b| a.partial_cmp(b).unwrap());
    silent_pw.sort_by(|a, b| b.partial_cmp(a).unwrap());
    active_true_pw.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("snr {snr} dB, {frames} frames, iters {iters}, lambda {lambda}");
    println!("actives n={}, lowest estimated: {:?}", active_pw.len(),
        &active_pw[..active_pw.len().min(12)].iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    println!("  lowest true: {:?}",
        &active_true_pw[..active_true_pw.len().min(12)].iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    println!("silents n={}, highest estimated: {:?}", silent_pw.len(),
        &silent_pw[..silent_pw.len().min(12)].iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    for delta in [0.03, 0.05, 0.08, 0.1, 0.15, 0.2] {
        let miss = active_pw.iter().filter(|p| **p < delta).count();
        let fa = silent_pw.iter().filter(|p| **p >= delta).count();
        println!("  delta {delta}: miss {miss}/{}, fa {fa}/{}", active_pw.len(), silent_pw.len());
    }
}

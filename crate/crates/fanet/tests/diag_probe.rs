use fanet::array::{sample_targets_with_k, synthesize_clean, ArrayGeometry, Span};
use fanet::net::{forward, load_params, NetConfig};
use fanet::rng::stream_rng;
use fanet::sparse::{add_noise, apply_mask, random_mask};
use fanet::tokens::{build_grid, tokenize, TokenConfig};

#[test]
fn probe_error_decomposition() {
    let g = ArrayGeometry::ula(20).unwrap();
    let grid = build_grid(Span { lo: -30.0, hi: 30.0 }, 64, &g).unwrap();
    let params = load_params(std::path::Path::new("/tmp/desk_weights.fanw")).unwrap();
    let net_cfg = NetConfig::default();
    let token_cfg = TokenConfig::default();
    for snr in [10.0, 30.0] {
        let (mut e_obs, mut e_miss, mut n_obs, mut n_miss) = (0.0, 0.0, 0usize, 0usize);
        let mut e_by_sep = vec![(0.0, 0usize); 3]; // separation buckets: <5, 5-15, >15 deg
        for t in 0..400u64 {
            let mut rng = stream_rng(99, &[snr as u64, t]);
            let targets = sample_targets_with_k(&mut rng, Span { lo: -30.0, hi: 30.0 }, 2, Span { lo: 0.5, hi: 1.0 }).unwrap();
            let clean = synthesize_clean(&g, &targets);
            let mask = random_mask(&mut rng, 20, 8).unwrap();
            let noisy = add_noise(&clean, snr, &mut rng).unwrap();
            let sparse = apply_mask(&noisy, &mask).unwrap();
            let tokens = tokenize(&sparse, &mask, &grid, &token_cfg).unwrap();
            let (_, recon, _) = forward(&tokens, &params, &grid, &net_cfg).unwrap();
            let mut scene_err = 0.0;
            for i in 0..20 {
                let d = (recon.snapshot.samples[i] - clean.samples[i]).norm_sqr();
                scene_err += d;
                if mask.is_observed(i) { e_obs += d; n_obs += 1; } else { e_miss += d; n_miss += 1; }
            }
            let sep = (targets.angles_deg[0] - targets.angles_deg[1]).abs();
            let bucket = if sep < 5.0 { 0 } else if sep < 15.0 { 1 } else { 2 };
            e_by_sep[bucket].0 += scene_err / 20.0;
            e_by_sep[bucket].1 += 1;
        }
        eprintln!("snr {snr}: observed-entry mse {:.4}, missing-entry mse {:.4}", e_obs / n_obs as f64, e_miss / n_miss as f64);
        for (b, name) in ["sep<5", "5<=sep<15", "sep>=15"].iter().enumerate() {
            let (e, n) = e_by_sep[b];
            if n > 0 { eprintln!("   {name}: mean scene mse {:.4} ({n} scenes)", e / n as f64); }
        }
    }
}

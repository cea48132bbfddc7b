//! Beamforming spectra, MSE metrics, and the seeded Monte Carlo SNR sweep
//! comparing the attention network against the IHT baseline.
//!
//! Trials are embarrassingly parallel: every trial derives its RNG stream
//! from (master seed, SNR index, trial index), and aggregation walks the
//! records in a fixed order, so results are bit-identical regardless of the
//! worker count.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::array::{
    sample_targets_with_k, steering_vector, synthesize_clean, ArrayGeometry, SceneConfig,
    Snapshot, Span,
};
use crate::error::{Error, Result};
use crate::iht::{iht_interpolate, IhtConfig};
use crate::net::{forward, NetConfig, NetParams};
use crate::rng::{stream, stream_rng};
use crate::sparse::{add_noise, apply_mask, random_mask};
use crate::tokens::{tokenize, FrequencyGrid, TokenConfig};
use crate::train::mse_loss;

/// Floor for log-power values, keeping dB plots finite on zero power.
pub const DB_FLOOR: f64 = -300.0;

/// Beamforming power versus angle, in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct BfSpectrum {
    pub angles_deg: Vec<f64>,
    pub power_db: Vec<f64>,
}

impl BfSpectrum {
    /// Index of the strongest bin.
    pub fn argmax(&self) -> usize {
        self.power_db
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Uniform evaluation grid over the FOV, endpoints included. Decoupled from
/// (and typically finer than) the token grid.
pub fn eval_angles(fov_deg: Span, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::invalid_argument("evaluation grid needs >= 2 points"));
    }
    if !(fov_deg.lo < fov_deg.hi) {
        return Err(Error::invalid_argument("degenerate evaluation interval"));
    }
    let step = fov_deg.width() / (points - 1) as f64;
    Ok((0..points).map(|p| fov_deg.lo + step * p as f64).collect())
}

/// Matched-filter (beamforming) spectrum: `|a(theta)^H y|^2 / N^2` per grid
/// angle, in dB, optionally normalized so the peak sits at 0 dB.
pub fn bf_spectrum(
    snapshot: &Snapshot,
    geometry: &ArrayGeometry,
    angles_deg: &[f64],
    normalize: bool,
) -> Result<BfSpectrum> {
    if angles_deg.is_empty() {
        return Err(Error::invalid_argument("empty evaluation grid"));
    }
    if snapshot.len() != geometry.n_elements() {
        return Err(Error::invalid_argument(format!(
            "snapshot length {} vs geometry {}",
            snapshot.len(),
            geometry.n_elements()
        )));
    }
    let n2 = (geometry.n_elements() * geometry.n_elements()) as f64;
    let mut power: Vec<f64> = angles_deg
        .iter()
        .map(|&theta| {
            let a = steering_vector(geometry, theta);
            let dot: Complex64 = a
                .iter()
                .zip(&snapshot.samples)
                .map(|(ai, yi)| ai.conj() * yi)
                .sum();
            dot.norm_sqr() / n2
        })
        .collect();
    if normalize {
        let peak = power.iter().copied().fold(0.0f64, f64::max);
        if peak > 0.0 {
            for p in power.iter_mut() {
                *p /= peak;
            }
        }
    }
    let power_db = power
        .into_iter()
        .map(|p| {
            if p > 0.0 {
                (10.0 * p.log10()).max(DB_FLOOR)
            } else {
                DB_FLOOR
            }
        })
        .collect();
    Ok(BfSpectrum {
        angles_deg: angles_deg.to_vec(),
        power_db,
    })
}

/// Peak-to-max-sidelobe ratio in dB: global peak minus the strongest bin
/// lying further than `guard_deg` from every target angle. `None` when the
/// guard swallows the whole grid.
pub fn pslr_db(spectrum: &BfSpectrum, target_angles_deg: &[f64], guard_deg: f64) -> Option<f64> {
    let peak = spectrum
        .power_db
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let sidelobe = spectrum
        .angles_deg
        .iter()
        .zip(&spectrum.power_db)
        .filter(|(angle, _)| {
            target_angles_deg
                .iter()
                .all(|t| (*angle - t).abs() > guard_deg)
        })
        .map(|(_, &p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    if sidelobe == f64::NEG_INFINITY {
        None
    } else {
        Some(peak - sidelobe)
    }
}

/// Reconstruction methods compared by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Input,
    Iht,
    FaNet,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Input => "input",
            Method::Iht => "iht",
            Method::FaNet => "fanet",
        }
    }
}

/// One Monte Carlo sample: the drawn scene, mask, and per-method errors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub snr_db: f64,
    pub missing: Vec<usize>,
    pub target_angles_deg: Vec<f64>,
    pub target_coeffs: Vec<Complex64>,
    pub mse_input: f64,
    pub mse_iht: f64,
    pub iht_converged: bool,
    pub mse_fanet: Option<f64>,
}

/// Monte Carlo sweep shape: SNR ticks, trials per tick, and the fixed
/// missing-element count with randomly varying positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub snrs_db: Vec<f64>,
    pub trials: usize,
    pub missing_count: usize,
    pub num_targets: usize,
    pub scene: SceneConfig,
    pub master_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            snrs_db: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            trials: 500,
            missing_count: 8,
            num_targets: 2,
            scene: SceneConfig::default(),
            master_seed: 42,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self, n_elements: usize) -> Result<()> {
        if self.snrs_db.is_empty() {
            return Err(Error::invalid_argument("sweep needs at least one SNR"));
        }
        if self.missing_count >= n_elements {
            return Err(Error::invalid_argument(format!(
                "cannot remove {} of {n_elements} elements",
                self.missing_count
            )));
        }
        if self.num_targets == 0 {
            return Err(Error::invalid_argument("sweep needs at least one target"));
        }
        self.scene.validate()?;
        Ok(())
    }
}

/// Network under test, bundled with the configs its tokens and forward pass
/// were built with.
#[derive(Debug, Clone, Copy)]
pub struct ModelUnderTest<'a> {
    pub params: &'a NetParams,
    pub net_cfg: &'a NetConfig,
    pub token_cfg: &'a TokenConfig,
}

fn run_trial(
    sweep: &SweepConfig,
    snr_index: usize,
    trial: usize,
    snr_db: f64,
    model: Option<&ModelUnderTest<'_>>,
    iht_cfg: &IhtConfig,
    geometry: &ArrayGeometry,
    grid: &FrequencyGrid,
) -> Result<TrialRecord> {
    let n = geometry.n_elements();
    let mut rng = stream_rng(
        sweep.master_seed,
        &[stream::SWEEP, snr_index as u64, trial as u64],
    );
    let targets = sample_targets_with_k(
        &mut rng,
        sweep.scene.fov_deg,
        sweep.num_targets,
        sweep.scene.amp_range,
    )?;
    let clean = synthesize_clean(geometry, &targets);
    let mask = random_mask(&mut rng, n, sweep.missing_count)?;
    let noisy = add_noise(&clean, snr_db, &mut rng)?;
    let sparse = apply_mask(&noisy, &mask)?;

    let mse_input = mse_loss(&sparse, &clean)?;
    let iht = iht_interpolate(&sparse, &mask, iht_cfg)?;
    let mse_iht = mse_loss(&iht.snapshot, &clean)?;
    let mse_fanet = match model {
        Some(m) => {
            let tokens = tokenize(&sparse, &mask, grid, m.token_cfg)?;
            let (_, recon, _) = forward(&tokens, m.params, grid, m.net_cfg)?;
            Some(mse_loss(&recon.snapshot, &clean)?)
        }
        None => None,
    };
    Ok(TrialRecord {
        trial_id: snr_index * sweep.trials + trial,
        snr_db,
        missing: mask.missing_indices(),
        target_angles_deg: targets.angles_deg.clone(),
        target_coeffs: targets.coefficients.clone(),
        mse_input,
        mse_iht,
        iht_converged: iht.converged,
        mse_fanet,
    })
}

/// Runs the full sweep: for every SNR tick, `trials` independent scenes,
/// each reconstructed by every method and scored against the clean signal.
pub fn run_mse_sweep(
    model: Option<ModelUnderTest<'_>>,
    iht_cfg: &IhtConfig,
    sweep: &SweepConfig,
    geometry: &ArrayGeometry,
    grid: &FrequencyGrid,
) -> Result<Vec<TrialRecord>> {
    sweep.validate(geometry.n_elements())?;
    iht_cfg.validate(geometry.n_elements())?;
    let mut records = Vec::with_capacity(sweep.snrs_db.len() * sweep.trials);
    for (snr_index, &snr_db) in sweep.snrs_db.iter().enumerate() {
        let mut batch: Vec<TrialRecord> = (0..sweep.trials)
            .into_par_iter()
            .map(|trial| {
                run_trial(
                    sweep,
                    snr_index,
                    trial,
                    snr_db,
                    model.as_ref(),
                    iht_cfg,
                    geometry,
                    grid,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        records.append(&mut batch);
    }
    Ok(records)
}

/// Per-(SNR, method) mean and standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub snr_db: f64,
    pub method: Method,
    pub mean_mse: f64,
    pub stderr_mse: f64,
    pub n_trials: usize,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Groups records by SNR (ascending) and method, in the fixed method order
/// input, iht, fanet.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::invalid_argument("no records to summarize"));
    }
    let mut snrs: Vec<f64> = Vec::new();
    for r in records {
        if !snrs.iter().any(|s| s == &r.snr_db) {
            snrs.push(r.snr_db);
        }
    }
    snrs.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut rows = Vec::new();
    for &snr in &snrs {
        let group: Vec<&TrialRecord> = records.iter().filter(|r| r.snr_db == snr).collect();
        let mut push = |method: Method, values: Vec<f64>| {
            if values.is_empty() {
                return;
            }
            let (mean, stderr) = mean_and_stderr(&values);
            rows.push(SummaryRow {
                snr_db: snr,
                method,
                mean_mse: mean,
                stderr_mse: stderr,
                n_trials: values.len(),
            });
        };
        push(Method::Input, group.iter().map(|r| r.mse_input).collect());
        push(Method::Iht, group.iter().map(|r| r.mse_iht).collect());
        push(
            Method::FaNet,
            group.iter().filter_map(|r| r.mse_fanet).collect(),
        );
    }
    Ok(rows)
}

fn join_indices(indices: &[usize]) -> String {
    indices
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Records CSV: `trial_id,snr_db,missing_idx,method,mse`, one row per method
/// per trial.
pub fn write_records_csv<W: Write>(records: &[TrialRecord], mut w: W) -> Result<()> {
    writeln!(w, "trial_id,snr_db,missing_idx,method,mse")?;
    for r in records {
        let missing = join_indices(&r.missing);
        writeln!(
            w,
            "{},{},{},{},{}",
            r.trial_id,
            r.snr_db,
            missing,
            Method::Input.as_str(),
            r.mse_input
        )?;
        writeln!(
            w,
            "{},{},{},{},{}",
            r.trial_id,
            r.snr_db,
            missing,
            Method::Iht.as_str(),
            r.mse_iht
        )?;
        if let Some(mse) = r.mse_fanet {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.trial_id,
                r.snr_db,
                missing,
                Method::FaNet.as_str(),
                mse
            )?;
        }
    }
    Ok(())
}

/// Summary CSV: `snr_db,method,mean_mse,stderr_mse,n_trials`.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut w: W) -> Result<()> {
    writeln!(w, "snr_db,method,mean_mse,stderr_mse,n_trials")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.snr_db,
            r.method.as_str(),
            r.mean_mse,
            r.stderr_mse,
            r.n_trials
        )?;
    }
    Ok(())
}

/// Spectrum CSV: `#`-prefixed metadata lines, then `angle_deg,power_db`.
pub fn write_spectrum_csv<W: Write>(
    spectrum: &BfSpectrum,
    metadata: &[(&str, String)],
    mut w: W,
) -> Result<()> {
    for (key, value) in metadata {
        writeln!(w, "# {key}: {value}")?;
    }
    writeln!(w, "angle_deg,power_db")?;
    for (a, p) in spectrum.angles_deg.iter().zip(&spectrum.power_db) {
        writeln!(w, "{a},{p}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::TargetSet;

    fn geometry() -> ArrayGeometry {
        ArrayGeometry::ula(20).unwrap()
    }

    fn fov() -> Span {
        Span { lo: -30.0, hi: 30.0 }
    }

    #[test]
    fn matched_filter_peaks_at_on_grid_target() {
        let g = geometry();
        let angles = eval_angles(fov(), 512).unwrap();
        let theta = angles[317];
        let s = Complex64::new(0.8, -0.2);
        let t = TargetSet::new(vec![theta], vec![s]).unwrap();
        let y = synthesize_clean(&g, &t);
        let spec = bf_spectrum(&y, &g, &angles, false).unwrap();
        assert_eq!(spec.argmax(), 317);
        let peak_linear = 10f64.powf(spec.power_db[317] / 10.0);
        assert!((peak_linear - s.norm_sqr()).abs() < 1e-9);
    }

    #[test]
    fn zero_snapshot_hits_the_db_floor() {
        let g = geometry();
        let angles = eval_angles(fov(), 64).unwrap();
        let spec = bf_spectrum(&Snapshot::zeros(20), &g, &angles, false).unwrap();
        assert!(spec.power_db.iter().all(|&p| p == DB_FLOOR));
        let normalized = bf_spectrum(&Snapshot::zeros(20), &g, &angles, true).unwrap();
        assert!(normalized.power_db.iter().all(|&p| p == DB_FLOOR));
    }

    #[test]
    fn spectrum_is_invariant_to_global_phase() {
        let g = geometry();
        let angles = eval_angles(fov(), 256).unwrap();
        let mut rng = stream_rng(1, &[0]);
        let t = sample_targets_with_k(&mut rng, fov(), 2, Span { lo: 0.5, hi: 1.0 }).unwrap();
        let y = synthesize_clean(&g, &t);
        let phase = Complex64::from_polar(1.0, 1.234);
        let rotated = Snapshot::new(y.samples.iter().map(|s| phase * s).collect());
        let a = bf_spectrum(&y, &g, &angles, false).unwrap();
        let b = bf_spectrum(&rotated, &g, &angles, false).unwrap();
        for (x, y) in a.power_db.iter().zip(&b.power_db) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn normalized_spectrum_peaks_at_zero_db() {
        let g = geometry();
        let angles = eval_angles(fov(), 128).unwrap();
        let t = TargetSet::new(vec![4.0], vec![Complex64::new(0.6, 0.0)]).unwrap();
        let y = synthesize_clean(&g, &t);
        let spec = bf_spectrum(&y, &g, &angles, true).unwrap();
        let max = spec.power_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((max - 0.0).abs() < 1e-12);
    }

    #[test]
    fn sparse_snapshot_has_worse_sidelobes_than_full() {
        let g = geometry();
        let angles = eval_angles(fov(), 512).unwrap();
        let mut rng = stream_rng(5, &[0]);
        let t = TargetSet::new(
            vec![-14.0, 9.0],
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.9)],
        )
        .unwrap();
        let clean = synthesize_clean(&g, &t);
        let mask = random_mask(&mut rng, 20, 8).unwrap();
        let sparse = apply_mask(&clean, &mask).unwrap();
        let full_spec = bf_spectrum(&clean, &g, &angles, true).unwrap();
        let sparse_spec = bf_spectrum(&sparse, &g, &angles, true).unwrap();
        let full_pslr = pslr_db(&full_spec, &t.angles_deg, 3.0).unwrap();
        let sparse_pslr = pslr_db(&sparse_spec, &t.angles_deg, 3.0).unwrap();
        assert!(
            full_pslr > sparse_pslr,
            "full {full_pslr} dB vs sparse {sparse_pslr} dB"
        );
    }

    #[test]
    fn empty_sweep_and_empty_summary() {
        let g = geometry();
        let grid = crate::tokens::build_grid(fov(), 64, &g).unwrap();
        let sweep = SweepConfig {
            trials: 0,
            ..SweepConfig::default()
        };
        let records =
            run_mse_sweep(None, &IhtConfig::default(), &sweep, &g, &grid).unwrap();
        assert!(records.is_empty());
        assert!(summarize(&records).is_err());
    }

    #[test]
    fn sweep_is_deterministic_and_records_are_sane() {
        let g = geometry();
        let grid = crate::tokens::build_grid(fov(), 64, &g).unwrap();
        let sweep = SweepConfig {
            snrs_db: vec![10.0, 30.0],
            trials: 20,
            master_seed: 9,
            ..SweepConfig::default()
        };
        let a = run_mse_sweep(None, &IhtConfig::default(), &sweep, &g, &grid).unwrap();
        let b = run_mse_sweep(None, &IhtConfig::default(), &sweep, &g, &grid).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        for r in &a {
            assert!(r.mse_input >= 0.0);
            assert!(r.mse_iht >= 0.0);
            assert_eq!(r.missing.len(), 8);
            assert_eq!(r.target_angles_deg.len(), 2);
            assert!(r.mse_fanet.is_none());
        }
        // the two SNR groups must differ
        assert_ne!(a[0].snr_db, a[39].snr_db);
    }

    #[test]
    fn summarize_groups_and_orders() {
        let mk = |trial_id, snr_db, mse| TrialRecord {
            trial_id,
            snr_db,
            missing: vec![1],
            target_angles_deg: vec![0.0],
            target_coeffs: vec![Complex64::new(1.0, 0.0)],
            mse_input: mse,
            mse_iht: mse,
            iht_converged: true,
            mse_fanet: None,
        };
        let records = vec![mk(0, 30.0, 1.0), mk(1, 30.0, 3.0), mk(2, 10.0, 2.0)];
        let rows = summarize(&records).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].snr_db, 10.0);
        assert_eq!(rows[0].method, Method::Input);
        assert_eq!(rows[1].method, Method::Iht);
        assert_eq!(rows[2].snr_db, 30.0);
        assert_eq!(rows[2].mean_mse, 2.0);
        assert_eq!(rows[2].n_trials, 2);
        // constant sample: zero standard error
        let constant = vec![mk(0, 5.0, 0.7), mk(1, 5.0, 0.7)];
        let rows = summarize(&constant).unwrap();
        assert_eq!(rows[0].stderr_mse, 0.0);
    }

    #[test]
    fn csv_layouts_are_stable() {
        let record = TrialRecord {
            trial_id: 3,
            snr_db: 10.0,
            missing: vec![2, 5, 11],
            target_angles_deg: vec![1.0],
            target_coeffs: vec![Complex64::new(1.0, 0.0)],
            mse_input: 0.5,
            mse_iht: 0.25,
            iht_converged: true,
            mse_fanet: Some(0.125),
        };
        let mut buf = Vec::new();
        write_records_csv(&[record], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "trial_id,snr_db,missing_idx,method,mse\n\
             3,10,2;5;11,input,0.5\n\
             3,10,2;5;11,iht,0.25\n\
             3,10,2;5;11,fanet,0.125\n"
        );

        let rows = vec![SummaryRow {
            snr_db: 10.0,
            method: Method::Iht,
            mean_mse: 0.25,
            stderr_mse: 0.0,
            n_trials: 2,
        }];
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "snr_db,method,mean_mse,stderr_mse,n_trials\n10,iht,0.25,0,2\n"
        );

        let spec = BfSpectrum {
            angles_deg: vec![-30.0, 30.0],
            power_db: vec![-3.5, 0.0],
        };
        let mut buf = Vec::new();
        write_spectrum_csv(&spec, &[("curve", "clean".to_string())], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "# curve: clean\nangle_deg,power_db\n-30,-3.5\n30,0\n"
        );
    }

    #[test]
    fn sweep_rejects_bad_configs() {
        let g = geometry();
        let grid = crate::tokens::build_grid(fov(), 64, &g).unwrap();
        let sweep = SweepConfig {
            missing_count: 20,
            ..SweepConfig::default()
        };
        assert!(run_mse_sweep(None, &IhtConfig::default(), &sweep, &g, &grid).is_err());
        let sweep = SweepConfig {
            snrs_db: vec![],
            ..SweepConfig::default()
        };
        assert!(run_mse_sweep(None, &IhtConfig::default(), &sweep, &g, &grid).is_err());
    }
}

//! Synthetic dataset generation, MSE loss, Adam, and the training loop.
//!
//! Training is a pure function of its configuration: every random draw comes
//! from a stream derived from the master seed (dataset record index, epoch
//! shuffle, per-batch augmentation), batches are processed in a fixed order,
//! and gradient reduction over a batch happens inside single-threaded GEMMs
//! with a fixed summation order, so two runs with the same config produce
//! bit-identical parameters and loss curves.
//!
//! The loss target is the clean noiseless snapshot, not the noisy full
//! snapshot: the network both interpolates and denoises.

use std::io::{Read, Write};
use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;

use crate::array::{
    sample_targets, synthesize_clean, ArrayGeometry, SceneConfig, Snapshot, TargetSet,
};
use crate::error::{Error, Result};
use crate::net::{
    backward_batched, forward_batched, init_params, NetConfig, NetParams,
};
use crate::rng::{stream, stream_rng};
use crate::sparse::{augment_batch, AugmentConfig};
use crate::tokens::{token_width, tokenize, FrequencyGrid, TokenConfig};

/// Training hyperparameters. [`TrainConfig::paper`] holds the published
/// full-scale recipe; `Default` is the desk-scale configuration that runs in
/// minutes on one workstation core.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_signals: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub augment: AugmentConfig,
    pub scene: SceneConfig,
    /// Extra signals held out for a per-epoch probe loss; logged, never used
    /// for training decisions. Zero disables the probe.
    pub holdout_signals: usize,
    pub master_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_signals: 8_192,
            epochs: 50,
            batch_size: 256,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            augment: AugmentConfig::default(),
            scene: SceneConfig::default(),
            holdout_signals: 512,
            master_seed: 42,
        }
    }
}

impl TrainConfig {
    /// Full-scale recipe: 131,072 signals, 500 epochs, batch 512, Adam 1e-3.
    pub fn paper() -> Self {
        TrainConfig {
            n_signals: 131_072,
            epochs: 500,
            batch_size: 512,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_signals == 0 || self.batch_size == 0 {
            return Err(Error::invalid_argument(
                "n_signals and batch_size must be positive",
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid_argument("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid_argument("Adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::invalid_argument("Adam epsilon must be positive"));
        }
        self.augment.validate()?;
        self.scene.validate()?;
        Ok(())
    }
}

/// Clean training corpus: `n_signals` scenes drawn per-record from the
/// dataset stream, so content is independent of generation order or
/// batching.
pub fn generate_dataset(
    cfg: &TrainConfig,
    geometry: &ArrayGeometry,
) -> Result<Vec<(Snapshot, TargetSet)>> {
    cfg.validate()?;
    (0..cfg.n_signals)
        .map(|i| {
            let mut rng = stream_rng(cfg.master_seed, &[stream::DATASET, i as u64]);
            let targets = sample_targets(
                &mut rng,
                cfg.scene.fov_deg,
                cfg.scene.k_max,
                cfg.scene.amp_range,
            )?;
            Ok((synthesize_clean(geometry, &targets), targets))
        })
        .collect()
}

/// Per-element mean squared complex-modulus error `(1/N) sum |a_n - b_n|^2`.
pub fn mse_loss(recon: &Snapshot, clean: &Snapshot) -> Result<f64> {
    if recon.len() != clean.len() {
        return Err(Error::invalid_argument(format!(
            "length mismatch: {} vs {}",
            recon.len(),
            clean.len()
        )));
    }
    if recon.is_empty() {
        return Err(Error::invalid_argument("empty snapshots"));
    }
    Ok(recon
        .samples
        .iter()
        .zip(&clean.samples)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        / recon.len() as f64)
}

/// Gradient of [`mse_loss`] with respect to the reconstruction:
/// `(2/N)(recon - clean)`, real and imaginary partials packed as a complex
/// number. This is the loss-gradient seed fed to the network backward pass.
pub fn mse_grad(recon: &Snapshot, clean: &Snapshot) -> Result<Vec<Complex64>> {
    if recon.len() != clean.len() || recon.is_empty() {
        return Err(Error::invalid_argument("length mismatch in mse gradient"));
    }
    let scale = 2.0 / recon.len() as f64;
    Ok(recon
        .samples
        .iter()
        .zip(&clean.samples)
        .map(|(a, b)| scale * (a - b))
        .collect())
}

/// Adam moment accumulators; shapes mirror the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: NetParams,
    pub v: NetParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(dims: crate::net::NetDims) -> Result<Self> {
        Ok(AdamState {
            m: NetParams::zeros(dims)?,
            v: NetParams::zeros(dims)?,
            t: 0,
        })
    }
}

/// One bias-corrected Adam update, in place. Parameters stay on the f32
/// grid (checkpoint precision) after every step.
pub fn adam_step(
    params: &mut NetParams,
    grads: &NetParams,
    state: &mut AdamState,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) -> Result<()> {
    if params.dims() != grads.dims() || params.dims() != state.m.dims() {
        return Err(Error::invalid_argument(
            "parameter, gradient, and state shapes disagree",
        ));
    }
    state.t += 1;
    let (beta1, beta2) = betas;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    let mut p_slices = params.tensor_slices_mut();
    let g_slices = grads.tensor_slices();
    let mut m_slices = state.m.tensor_slices_mut();
    let mut v_slices = state.v.tensor_slices_mut();
    for i in 0..p_slices.len() {
        let p = &mut p_slices[i].1;
        let g = g_slices[i].1;
        let m = &mut m_slices[i].1;
        let v = &mut v_slices[i].1;
        for j in 0..p.len() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    drop(p_slices);
    params.quantize_to_f32();
    Ok(())
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub holdout_loss: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    /// CSV with the documented columns `epoch,mean_loss,wall_seconds`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,mean_loss,wall_seconds")?;
        for r in &self.epochs {
            writeln!(w, "{},{},{:.3}", r.epoch, r.mean_loss, r.wall_seconds)?;
        }
        Ok(())
    }
}

fn stack_tokens(
    examples: &[(Snapshot, crate::sparse::SparseMask)],
    grid: &FrequencyGrid,
    token_cfg: &TokenConfig,
) -> Result<Array2<f64>> {
    let p = grid.p_bins();
    let f = token_width(grid.n_elements(), token_cfg);
    let mut x = Array2::<f64>::zeros((examples.len() * p, f));
    for (i, (snap, mask)) in examples.iter().enumerate() {
        let batch = tokenize(snap, mask, grid, token_cfg)?;
        x.slice_mut(ndarray::s![i * p..(i + 1) * p, ..])
            .assign(&batch.features);
    }
    Ok(x)
}

struct HoldoutProbe {
    chunks: Vec<(Array2<f64>, Vec<Snapshot>)>,
}

impl HoldoutProbe {
    fn build(
        cfg: &TrainConfig,
        geometry: &ArrayGeometry,
        grid: &FrequencyGrid,
        token_cfg: &TokenConfig,
    ) -> Result<Option<Self>> {
        if cfg.holdout_signals == 0 {
            return Ok(None);
        }
        let cleans: Vec<(Snapshot, TargetSet)> = (0..cfg.holdout_signals)
            .map(|i| {
                let mut rng = stream_rng(cfg.master_seed, &[stream::HOLDOUT, i as u64]);
                let targets = sample_targets(
                    &mut rng,
                    cfg.scene.fov_deg,
                    cfg.scene.k_max,
                    cfg.scene.amp_range,
                )?;
                Ok((synthesize_clean(geometry, &targets), targets))
            })
            .collect::<Result<_>>()?;
        // fixed augmentation, chunked so missing counts and SNRs vary
        let mut chunks = Vec::new();
        for (ci, chunk) in cleans.chunks(64).enumerate() {
            let snaps: Vec<Snapshot> = chunk.iter().map(|(s, _)| s.clone()).collect();
            let mut rng = stream_rng(cfg.master_seed, &[stream::HOLDOUT, u64::MAX, ci as u64]);
            let (noisy, masks) = augment_batch(&snaps, &cfg.augment, &mut rng)?;
            let pairs: Vec<_> = noisy.into_iter().zip(masks).collect();
            let x = stack_tokens(&pairs, grid, token_cfg)?;
            chunks.push((x, snaps));
        }
        Ok(Some(HoldoutProbe { chunks }))
    }

    fn loss(
        &self,
        params: &NetParams,
        grid: &FrequencyGrid,
        net_cfg: &NetConfig,
    ) -> Result<f64> {
        let n = grid.n_elements();
        let mut total = 0.0;
        let mut count = 0usize;
        for (x, cleans) in &self.chunks {
            let (_, y_hat, _) = forward_batched(x.clone(), cleans.len(), params, grid, net_cfg)?;
            for (i, clean) in cleans.iter().enumerate() {
                let recon = Snapshot::new(y_hat[i * n..(i + 1) * n].to_vec());
                total += mse_loss(&recon, clean)?;
                count += 1;
            }
        }
        Ok(total / count as f64)
    }
}

/// Runs the full training loop: shuffled seeded batches, augmentation,
/// tokenization, batched forward/backward, and Adam. `on_epoch` fires after
/// every epoch with the freshly appended record.
pub fn train(
    cfg: &TrainConfig,
    net_cfg: &NetConfig,
    token_cfg: &TokenConfig,
    geometry: &ArrayGeometry,
    grid: &FrequencyGrid,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(NetParams, TrainingLog)> {
    cfg.validate()?;
    let dims = net_cfg.dims(token_width(geometry.n_elements(), token_cfg));
    let params = init_params(cfg.master_seed, dims)?;
    train_from(params, cfg, net_cfg, token_cfg, geometry, grid, on_epoch)
}

/// Training loop starting from the given parameters (fresh init or a loaded
/// checkpoint).
pub fn train_from(
    mut params: NetParams,
    cfg: &TrainConfig,
    net_cfg: &NetConfig,
    token_cfg: &TokenConfig,
    geometry: &ArrayGeometry,
    grid: &FrequencyGrid,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(NetParams, TrainingLog)> {
    cfg.validate()?;
    let dims = net_cfg.dims(token_width(geometry.n_elements(), token_cfg));
    if params.dims() != dims {
        return Err(Error::invalid_argument(format!(
            "initial parameter dims {:?} do not match configured dims {dims:?}",
            params.dims()
        )));
    }
    let mut log = TrainingLog::default();
    if cfg.epochs == 0 {
        return Ok((params, log));
    }

    let dataset = generate_dataset(cfg, geometry)?;
    let holdout = HoldoutProbe::build(cfg, geometry, grid, token_cfg)?;
    let mut state = AdamState::new(dims)?;
    let n = geometry.n_elements();
    let mut recent_losses: Vec<f64> = Vec::new();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut stream_rng(cfg.master_seed, &[stream::SHUFFLE, epoch as u64]));

        let mut epoch_loss_sum = 0.0;
        for (bi, batch_idx) in order.chunks(cfg.batch_size).enumerate() {
            let cleans: Vec<Snapshot> = batch_idx.iter().map(|&i| dataset[i].0.clone()).collect();
            let mut rng = stream_rng(
                cfg.master_seed,
                &[stream::AUGMENT, epoch as u64, bi as u64],
            );
            let (noisy, masks) = augment_batch(&cleans, &cfg.augment, &mut rng)?;
            let pairs: Vec<_> = noisy.into_iter().zip(masks).collect();
            let x = stack_tokens(&pairs, grid, token_cfg)?;
            let b = pairs.len();
            let (_, y_hat, cache) = forward_batched(x, b, &params, grid, net_cfg)?;

            let mut batch_loss = 0.0;
            let mut grad_recon = vec![Complex64::new(0.0, 0.0); b * n];
            let grad_scale = 2.0 / (n as f64 * b as f64);
            for (i, clean) in cleans.iter().enumerate() {
                let mut example_loss = 0.0;
                for e in 0..n {
                    let diff = y_hat[i * n + e] - clean.samples[e];
                    example_loss += diff.norm_sqr();
                    grad_recon[i * n + e] = grad_scale * diff;
                }
                batch_loss += example_loss / n as f64;
            }
            batch_loss /= b as f64;

            if !batch_loss.is_finite() {
                let tail: Vec<String> = recent_losses
                    .iter()
                    .rev()
                    .take(8)
                    .rev()
                    .map(|l| format!("{l:.6}"))
                    .collect();
                return Err(Error::Numerical {
                    epoch,
                    batch: bi,
                    detail: format!(
                        "loss {batch_loss} is not finite; recent batch losses [{}]",
                        tail.join(", ")
                    ),
                });
            }
            recent_losses.push(batch_loss);
            epoch_loss_sum += batch_loss * b as f64;

            let grads = backward_batched(&cache, &params, &grad_recon)?;
            adam_step(
                &mut params,
                &grads,
                &mut state,
                cfg.lr,
                (cfg.adam_beta1, cfg.adam_beta2),
                cfg.adam_eps,
            )?;
        }

        let holdout_loss = match &holdout {
            Some(probe) => Some(probe.loss(&params, grid, net_cfg)?),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            mean_loss: epoch_loss_sum / dataset.len() as f64,
            holdout_loss,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.epochs.push(record);
    }
    Ok((params, log))
}

// --- dataset container ----------------------------------------------------
//
// Layout (little-endian): magic "FADS", version u32, n_elements u32,
// count u64, seed u64, fov lo/hi f64, k_max u32, amp lo/hi f64, then per
// record: k u32, then k x (angle f32, coeff re f32, coeff im f32), then the
// snapshot as 2N interleaved re/im f32 values. Regenerable bit-exactly from
// the header seed.

const DATASET_MAGIC: &[u8; 4] = b"FADS";
const DATASET_VERSION: u32 = 1;

/// Dataset file header; everything needed to regenerate the payload.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub n_elements: usize,
    pub count: usize,
    pub seed: u64,
    pub scene: SceneConfig,
}

/// Serializes a generated dataset.
pub fn write_dataset<W: Write>(
    header: &DatasetHeader,
    records: &[(Snapshot, TargetSet)],
    mut w: W,
) -> Result<()> {
    if records.len() != header.count {
        return Err(Error::invalid_argument(format!(
            "header count {} vs {} records",
            header.count,
            records.len()
        )));
    }
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(header.n_elements as u32).to_le_bytes())?;
    w.write_all(&(header.count as u64).to_le_bytes())?;
    w.write_all(&header.seed.to_le_bytes())?;
    w.write_all(&header.scene.fov_deg.lo.to_le_bytes())?;
    w.write_all(&header.scene.fov_deg.hi.to_le_bytes())?;
    w.write_all(&(header.scene.k_max as u32).to_le_bytes())?;
    w.write_all(&header.scene.amp_range.lo.to_le_bytes())?;
    w.write_all(&header.scene.amp_range.hi.to_le_bytes())?;
    for (snapshot, targets) in records {
        if snapshot.len() != header.n_elements {
            return Err(Error::invalid_argument(
                "snapshot length disagrees with header",
            ));
        }
        w.write_all(&(targets.len() as u32).to_le_bytes())?;
        for k in 0..targets.len() {
            w.write_all(&(targets.angles_deg[k] as f32).to_le_bytes())?;
            w.write_all(&(targets.coefficients[k].re as f32).to_le_bytes())?;
            w.write_all(&(targets.coefficients[k].im as f32).to_le_bytes())?;
        }
        for s in &snapshot.samples {
            w.write_all(&(s.re as f32).to_le_bytes())?;
            w.write_all(&(s.im as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact_into<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::format(format!("truncated dataset while reading {what}")))
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_into(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact_into(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R, what: &str) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact_into(r, &mut b, what)?;
    Ok(f64::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R, what: &str) -> Result<f32> {
    let mut b = [0u8; 4];
    read_exact_into(r, &mut b, what)?;
    Ok(f32::from_le_bytes(b))
}

/// Parses a dataset container written by [`write_dataset`]. Values come
/// back at the stored f32 precision.
pub fn read_dataset<R: Read>(mut r: R) -> Result<(DatasetHeader, Vec<(Snapshot, TargetSet)>)> {
    let mut magic = [0u8; 4];
    read_exact_into(&mut r, &mut magic, "magic")?;
    if &magic != DATASET_MAGIC {
        return Err(Error::format(format!(
            "bad dataset magic {magic:?}, expected {DATASET_MAGIC:?}"
        )));
    }
    let version = read_u32(&mut r, "version")?;
    if version != DATASET_VERSION {
        return Err(Error::format(format!("unsupported dataset version {version}")));
    }
    let n_elements = read_u32(&mut r, "n_elements")? as usize;
    if n_elements == 0 {
        return Err(Error::format("header n_elements is zero".to_string()));
    }
    let count = read_u64(&mut r, "count")? as usize;
    let seed = read_u64(&mut r, "seed")?;
    let fov_lo = read_f64(&mut r, "fov_lo")?;
    let fov_hi = read_f64(&mut r, "fov_hi")?;
    let k_max = read_u32(&mut r, "k_max")? as usize;
    let amp_lo = read_f64(&mut r, "amp_lo")?;
    let amp_hi = read_f64(&mut r, "amp_hi")?;
    let header = DatasetHeader {
        n_elements,
        count,
        seed,
        scene: SceneConfig {
            fov_deg: crate::array::Span { lo: fov_lo, hi: fov_hi },
            k_max,
            amp_range: crate::array::Span { lo: amp_lo, hi: amp_hi },
        },
    };
    let mut records = Vec::with_capacity(count);
    for rec in 0..count {
        let k = read_u32(&mut r, &format!("record {rec} target count"))? as usize;
        let mut angles = Vec::with_capacity(k);
        let mut coeffs = Vec::with_capacity(k);
        for t in 0..k {
            let what = format!("record {rec} target {t}");
            angles.push(f64::from(read_f32(&mut r, &what)?));
            let re = f64::from(read_f32(&mut r, &what)?);
            let im = f64::from(read_f32(&mut r, &what)?);
            coeffs.push(Complex64::new(re, im));
        }
        let mut samples = Vec::with_capacity(n_elements);
        for e in 0..n_elements {
            let what = format!("record {rec} sample {e}");
            let re = f64::from(read_f32(&mut r, &what)?);
            let im = f64::from(read_f32(&mut r, &what)?);
            samples.push(Complex64::new(re, im));
        }
        records.push((Snapshot::new(samples), TargetSet::new(angles, coeffs)?));
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::format(
            "trailing bytes after final dataset record".to_string(),
        ));
    }
    Ok((header, records))
}

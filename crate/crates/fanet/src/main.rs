//! Command-line front end: dataset generation, training, single-scene
//! reconstruction, and the Monte Carlo SNR sweep, all driven by a flat
//! key-value config file and one master seed.
//!
//! Exit codes: 0 success, 2 config/validation error, 3 numerical abort,
//! 4 i/o error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_complex::Complex64;

use fanet::array::{sample_targets_with_k, synthesize_clean, Snapshot, TargetSet};
use fanet::config::RunConfig;
use fanet::error::Error;
use fanet::eval::{
    bf_spectrum, eval_angles, run_mse_sweep, summarize, write_records_csv, write_spectrum_csv,
    write_summary_csv, BfSpectrum, ModelUnderTest,
};
use fanet::iht::iht_interpolate;
use fanet::net::{forward, load_params, save_params, NetParams};
use fanet::rng::{stream, stream_rng};
use fanet::sparse::{add_noise, apply_mask, random_mask, SparseMask};
use fanet::tokens::{token_width, tokenize};
use fanet::train::{generate_dataset, train, write_dataset, DatasetHeader};

#[derive(Parser)]
#[command(
    name = "fanet",
    version,
    about = "Single-snapshot sparse array interpolation: attention network vs Hankel IHT"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Key-value config file; keys override the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override; every random draw derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker-thread cap for Monte Carlo trials; outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Use the published full-scale defaults instead of the desk-scale ones.
    #[arg(long, global = true)]
    strict_paper: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train the network; writes weights.fanw, training_log.csv, and the
    /// resolved config.
    Train,
    /// Generate the synthetic dataset container (dataset.fads).
    Gen,
    /// Reconstruct one scene and export beamforming spectra for the clean,
    /// sparse-noisy, IHT, and network snapshots.
    Reconstruct {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        snr_db: f64,
        /// Seed for drawing the scene (and the noise); defaults to the
        /// master seed.
        #[arg(long)]
        scene_seed: Option<u64>,
        /// Explicit targets as `angle_deg:amp:phase_rad;...`, bypassing the
        /// scene draw.
        #[arg(long)]
        targets: Option<String>,
        /// Explicit missing element indices as `2;5;11`.
        #[arg(long)]
        missing_idx: Option<String>,
        /// Number of missing elements for a random mask (default:
        /// sweep.missing from the config).
        #[arg(long)]
        missing_count: Option<usize>,
        /// Seed for the random mask; defaults to the master seed.
        #[arg(long)]
        mask_seed: Option<u64>,
    },
    /// Run the Monte Carlo MSE-vs-SNR sweep; writes records.csv and
    /// summary.csv.
    Sweep {
        /// Checkpoint for the network column; omit to sweep the baseline
        /// methods only.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) | Error::InvalidState(_) | Error::Format(_) => 2,
            Error::Numerical { .. } => 3,
            Error::Io(_) => 4,
        };
        Failure::new(code, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(), // prints usage; exits 2 on errors, 0 on --help
    };
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = resolve_config(cli)?;
    fs::create_dir_all(&cli.out).map_err(|e| {
        Failure::new(4, format!("cannot create output dir {}: {e}", cli.out.display()))
    })?;
    match &cli.command {
        Command::Train => cmd_train(&cfg, &cli.out),
        Command::Gen => cmd_gen(&cfg, &cli.out),
        Command::Sweep { checkpoint } => cmd_sweep(&cfg, &cli.out, checkpoint.as_deref()),
        Command::Reconstruct {
            checkpoint,
            snr_db,
            scene_seed,
            targets,
            missing_idx,
            missing_count,
            mask_seed,
        } => cmd_reconstruct(
            &cfg,
            &cli.out,
            checkpoint,
            *snr_db,
            scene_seed.unwrap_or(cfg.master_seed),
            targets.as_deref(),
            missing_idx.as_deref(),
            *missing_count,
            mask_seed.unwrap_or(cfg.master_seed),
        ),
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let base = if cli.strict_paper {
        RunConfig::strict_paper()
    } else {
        RunConfig::default()
    };
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Failure::new(2, format!("cannot read config {}: {e}", path.display()))
            })?;
            RunConfig::parse_on(base, &text)?
        }
        None => base,
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|e| Failure::new(4, format!("cannot write {}: {e}", path.display())))
}

fn echo_config(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    write_file(&out.join("config_resolved.cfg"), cfg.echo().as_bytes())
}

fn expected_dims(cfg: &RunConfig) -> fanet::net::NetDims {
    cfg.net.dims(token_width(cfg.n_elements, &cfg.tokens))
}

fn load_checkpoint(cfg: &RunConfig, path: &Path) -> Result<NetParams, Failure> {
    let params = match load_params(path) {
        Ok(p) => p,
        Err(Error::Io(e)) => {
            return Err(Failure::new(
                4,
                format!("cannot read checkpoint {}: {e}", path.display()),
            ))
        }
        Err(e) => return Err(e.into()),
    };
    let want = expected_dims(cfg);
    if params.dims() != want {
        return Err(Failure::new(
            2,
            format!(
                "checkpoint dims {:?} do not match config dims {want:?}",
                params.dims()
            ),
        ));
    }
    Ok(params)
}

fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let geometry = cfg.geometry()?;
    let grid = cfg.grid()?;
    let train_cfg = cfg.train_config();
    eprintln!(
        "training: {} signals x {} epochs, batch {}, seed {}",
        train_cfg.n_signals, train_cfg.epochs, train_cfg.batch_size, train_cfg.master_seed
    );
    let (params, log) = train(&train_cfg, &cfg.net, &cfg.tokens, &geometry, &grid, |r| {
        match r.holdout_loss {
            Some(h) => eprintln!(
                "epoch {:>4}: loss {:.6}, holdout {:.6} ({:.1}s)",
                r.epoch, r.mean_loss, h, r.wall_seconds
            ),
            None => eprintln!(
                "epoch {:>4}: loss {:.6} ({:.1}s)",
                r.epoch, r.mean_loss, r.wall_seconds
            ),
        }
    })?;
    save_params(&params, &out.join("weights.fanw")).map_err(Failure::from)?;
    let mut csv = Vec::new();
    log.write_csv(&mut csv)?;
    write_file(&out.join("training_log.csv"), &csv)?;
    echo_config(cfg, out)?;
    eprintln!("wrote {}", out.join("weights.fanw").display());
    Ok(())
}

fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let geometry = cfg.geometry()?;
    let train_cfg = cfg.train_config();
    let records = generate_dataset(&train_cfg, &geometry)?;
    let header = DatasetHeader {
        n_elements: cfg.n_elements,
        count: records.len(),
        seed: cfg.master_seed,
        scene: cfg.scene(),
    };
    let mut bytes = Vec::new();
    write_dataset(&header, &records, &mut bytes)?;
    write_file(&out.join("dataset.fads"), &bytes)?;
    echo_config(cfg, out)?;
    eprintln!(
        "wrote {} ({} records)",
        out.join("dataset.fads").display(),
        records.len()
    );
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, out: &Path, checkpoint: Option<&Path>) -> Result<(), Failure> {
    let geometry = cfg.geometry()?;
    let grid = cfg.grid()?;
    let params = match checkpoint {
        Some(path) => Some(load_checkpoint(cfg, path)?),
        None => None,
    };
    let model = params.as_ref().map(|p| ModelUnderTest {
        params: p,
        net_cfg: &cfg.net,
        token_cfg: &cfg.tokens,
    });
    let sweep = cfg.sweep_config();
    let records = run_mse_sweep(model, &cfg.iht, &sweep, &geometry, &grid)?;

    let mut records_csv = Vec::new();
    write_records_csv(&records, &mut records_csv)?;
    write_file(&out.join("records.csv"), &records_csv)?;
    if !records.is_empty() {
        let rows = summarize(&records)?;
        let mut summary_csv = Vec::new();
        write_summary_csv(&rows, &mut summary_csv)?;
        write_file(&out.join("summary.csv"), &summary_csv)?;
    } else {
        write_file(
            &out.join("summary.csv"),
            b"snr_db,method,mean_mse,stderr_mse,n_trials\n",
        )?;
    }
    echo_config(cfg, out)?;
    let stuck = records.iter().filter(|r| !r.iht_converged).count();
    if stuck > 0 {
        eprintln!("{stuck} of {} trials hit the IHT iteration cap", records.len());
    }
    eprintln!("wrote {}", out.join("records.csv").display());
    Ok(())
}

fn parse_targets(spec: &str) -> Result<TargetSet, Failure> {
    let mut angles = Vec::new();
    let mut coeffs = Vec::new();
    for part in spec.split(';') {
        let fields: Vec<&str> = part.split(':').collect();
        if fields.len() != 3 {
            return Err(Failure::new(
                2,
                format!("target '{part}' must be angle_deg:amp:phase_rad"),
            ));
        }
        let parse = |s: &str| -> Result<f64, Failure> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Failure::new(2, format!("cannot parse '{s}' in target spec")))
        };
        angles.push(parse(fields[0])?);
        coeffs.push(Complex64::from_polar(parse(fields[1])?, parse(fields[2])?));
    }
    TargetSet::new(angles, coeffs).map_err(Failure::from)
}

fn parse_indices(spec: &str) -> Result<Vec<usize>, Failure> {
    if spec.trim().is_empty() {
        return Ok(Vec::new());
    }
    spec.split(';')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Failure::new(2, format!("cannot parse index '{s}'")))
        })
        .collect()
}

fn format_targets(t: &TargetSet) -> String {
    t.angles_deg
        .iter()
        .zip(&t.coefficients)
        .map(|(a, c)| format!("{a}:{}:{}", c.norm(), c.arg()))
        .collect::<Vec<_>>()
        .join(";")
}

fn write_spectrum(
    out: &Path,
    name: &str,
    spectrum: &BfSpectrum,
    metadata: &[(&str, String)],
) -> Result<(), Failure> {
    let mut buf = Vec::new();
    write_spectrum_csv(spectrum, metadata, &mut buf)?;
    write_file(&out.join(name), &buf)
}

#[allow(clippy::too_many_arguments)]
fn cmd_reconstruct(
    cfg: &RunConfig,
    out: &Path,
    checkpoint: &Path,
    snr_db: f64,
    scene_seed: u64,
    targets_spec: Option<&str>,
    missing_idx: Option<&str>,
    missing_count: Option<usize>,
    mask_seed: u64,
) -> Result<(), Failure> {
    let geometry = cfg.geometry()?;
    let grid = cfg.grid()?;
    let params = load_checkpoint(cfg, checkpoint)?;

    let mut scene_rng = stream_rng(scene_seed, &[stream::SCENE]);
    let targets = match targets_spec {
        Some(spec) => parse_targets(spec)?,
        None => sample_targets_with_k(
            &mut scene_rng,
            cfg.fov_deg,
            cfg.sweep_targets,
            cfg.amp_range,
        )?,
    };
    let clean = synthesize_clean(&geometry, &targets);

    let mask = match missing_idx {
        Some(spec) => {
            let indices = parse_indices(spec)?;
            if indices.is_empty() {
                SparseMask::all_observed(cfg.n_elements)?
            } else {
                SparseMask::from_missing_indices(cfg.n_elements, &indices)?
            }
        }
        None => {
            let count = missing_count.unwrap_or(cfg.sweep_missing);
            if count == 0 {
                SparseMask::all_observed(cfg.n_elements)?
            } else {
                random_mask(
                    &mut stream_rng(mask_seed, &[stream::MASK]),
                    cfg.n_elements,
                    count,
                )?
            }
        }
    };

    let noisy = add_noise(&clean, snr_db, &mut scene_rng)?;
    let sparse = apply_mask(&noisy, &mask)?;
    let iht = iht_interpolate(&sparse, &mask, &cfg.iht)?;
    let tokens = tokenize(&sparse, &mask, &grid, &cfg.tokens)?;
    let (_, recon, _) = forward(&tokens, &params, &grid, &cfg.net)?;

    let angles = eval_angles(cfg.fov_deg, cfg.bf_points)?;
    let missing = mask
        .missing_indices()
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(";");
    let meta = |curve: &str| -> Vec<(&str, String)> {
        vec![
            ("curve", curve.to_string()),
            ("snr_db", snr_db.to_string()),
            ("targets", format_targets(&targets)),
            ("missing_idx", missing.clone()),
        ]
    };
    let curves: [(&str, &Snapshot, &str); 4] = [
        ("spectrum_clean.csv", &clean, "clean"),
        ("spectrum_sparse.csv", &sparse, "sparse"),
        ("spectrum_iht.csv", &iht.snapshot, "iht"),
        ("spectrum_fanet.csv", &recon.snapshot, "fanet"),
    ];
    for (file, snapshot, curve) in curves {
        let spectrum = bf_spectrum(snapshot, &geometry, &angles, true)?;
        write_spectrum(out, file, &spectrum, &meta(curve))?;
    }

    let mut geom_csv = String::new();
    geom_csv.push_str(&format!("# missing_idx: {missing}\n"));
    geom_csv.push_str("element,position_wl,observed\n");
    for (i, &pos) in geometry.spacings().iter().enumerate() {
        geom_csv.push_str(&format!(
            "{i},{pos},{}\n",
            u8::from(mask.is_observed(i))
        ));
    }
    write_file(&out.join("sparse_geometry.csv"), geom_csv.as_bytes())?;
    echo_config(cfg, out)?;
    if !iht.converged {
        eprintln!("note: IHT hit the iteration cap ({})", iht.iterations);
    }
    eprintln!("wrote spectra to {}", out.display());
    Ok(())
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cvpool::algorithms::{correct_image, estimate, EstimatorSpec, Method};
use cvpool::bench::{self, RunConfig, SweepGrid, SyntheticSceneSpec};
use cvpool::imgio::{load_image, save_image, PreprocessSpec, DEFAULT_SATURATION};
use cvpool::pooling::PoolingSpec;
use cvpool::{Error, Result};

#[derive(Parser)]
#[command(name = "cvpool", version, about = "Illuminant estimation with contrast-variant pooling")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the illuminant of one image.
    Estimate {
        image: PathBuf,
        /// white_patch, grey_world, grey_edge_1, grey_edge_2 or double_opponency.
        #[arg(long)]
        method: Method,
        /// max, minkowski:P, top_x:X[:BINS] or cvp[:SIGMA[:C_MIN[:X_MIN[:X_MAX]]]].
        #[arg(long, default_value = "cvp")]
        pooling: PoolingSpec,
        #[arg(long)]
        sigma: Option<f64>,
        /// Double-Opponency surround weight.
        #[arg(long)]
        k: Option<f64>,
        /// Write the colour-corrected image here (PNG if the extension is .png, else PPM).
        #[arg(long)]
        correct: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        black_level: f64,
        #[arg(long, default_value_t = DEFAULT_SATURATION)]
        saturation: f64,
        /// Binary mask image; non-zero pixels are excluded.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Decode gamma-encoded input with this exponent.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Run a benchmark described by a JSON run config.
    Bench {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Sweep a parameter grid and write a long-format median table.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Write a seeded synthetic Mondrian corpus with a manifest.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn fmt3(v: [f64; 3]) -> String {
    format!("{} {} {}", v[0], v[1], v[2])
}

fn run_estimate(
    image: &Path,
    spec: &EstimatorSpec,
    pre: &PreprocessSpec,
    correct: Option<&Path>,
) -> Result<()> {
    spec.validate()?;
    pre.validate()?;
    let img = load_image(image, pre)?;
    let est = estimate(&img, spec)?;
    println!("illuminant: {}", est.illuminant);
    println!("illuminant_full: {}", fmt3(est.illuminant.as_array()));
    if let Some(x) = est.pool.x_percent() {
        println!("x_percent: {}", fmt3(x));
    }
    if let Some([r, g, b]) = est.pool.counts() {
        println!("pooled_pixels: {r} {g} {b}");
    }
    println!("valid_pixels: {}", img.valid_count());
    if let Some(out) = correct {
        save_image(&correct_image(&img, &est.illuminant)?, None, out)?;
        println!("corrected: {}", out.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Estimate {
            image,
            method,
            pooling,
            sigma,
            k,
            correct,
            black_level,
            saturation,
            mask,
            gamma,
        } => {
            let spec = EstimatorSpec {
                method,
                sigma,
                k_surround: k,
                pooling: (method != Method::GreyWorld).then_some(pooling),
            };
            let pre = PreprocessSpec {
                black_level,
                saturation_threshold: saturation,
                mask_path: mask,
                gamma_decode: gamma,
            };
            run_estimate(&image, &spec, &pre, correct.as_deref())
        }
        Command::Bench {
            manifest,
            config,
            out,
            parallelism,
        } => {
            let mut cfg = RunConfig::from_json_file(&config)?;
            if let Some(m) = manifest {
                cfg.manifest_path = m;
            }
            if let Some(o) = out {
                cfg.output_path = o;
            }
            if let Some(p) = parallelism {
                cfg.parallelism = p;
            }
            let report = bench::run_bench(&cfg)?;
            for s in &report.summaries {
                let median = s.stats.map_or("n/a".to_string(), |t| format!("{:.3}", t.median));
                println!(
                    "{:<18} {:<22} median {median:>8}  failed {}",
                    s.spec.method.to_string(),
                    s.spec.pooling_label(),
                    s.n_failed
                );
            }
            println!("wrote {}", cfg.output_path.display());
            Ok(())
        }
        Command::Sweep {
            manifest,
            grid,
            out,
            parallelism,
        } => {
            let grid = SweepGrid::from_json_file(&grid)?;
            let report = bench::run_sweep(&manifest, &grid, &out, parallelism)?;
            println!("{} grid cells, wrote {}", report.rows.len(), out.display());
            Ok(())
        }
        Command::Synth { spec, seed, out } => {
            let spec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                    serde_json::from_str::<SyntheticSceneSpec>(&text)
                        .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
                }
                None => SyntheticSceneSpec::default(),
            };
            let records = bench::write_corpus(&spec, seed, &out)?;
            println!("wrote {} scenes to {}", records.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}

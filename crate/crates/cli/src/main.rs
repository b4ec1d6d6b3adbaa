use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use catrep::analysis::fit_exponential;
use catrep::experiment::{
    eps_from_fit, point_seed, run_budget, run_lindblad_sweep, run_memory_experiment, with_workers, write_json, write_table,
    DecoderVariant, ExperimentConfig, Header, ShotDecoder,
};
use catrep::graph::{correlation_weights, no_erasure_baseline, read_graph_text, write_graph_text, WeightOptions};
use catrep::noise::{project_overhead, OverheadInputs};
use catrep::sampler::{read_batch, sample_batch, write_batch, write_text};
use catrep::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

#[derive(Parser)]
#[command(name = "catrep", version, about = "Repetition codes of dissipative cat qubits")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML experiment description
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (default: ./out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the decoder variants in the config
    #[arg(long, global = true, value_enum)]
    decoder: Option<DecoderArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderArg {
    None,
    Naive,
    Merged,
}

impl From<DecoderArg> for DecoderVariant {
    fn from(d: DecoderArg) -> Self {
        match d {
            DecoderArg::None => DecoderVariant::NoErasure,
            DecoderArg::Naive => DecoderVariant::Naive,
            DecoderArg::Merged => DecoderVariant::Merged,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WeighMethod {
    /// Correlations over all shots, erased syndromes read as 1
    Correlation,
    /// Only shots without erasures near each detector
    Baseline,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write syndrome files for every configured (d, alpha_sq, cycles, basis)
    Sample {
        /// Also write a text dump next to each binary file
        #[arg(long)]
        text: bool,
    },
    /// Estimate a weighted matching graph from a syndrome file
    Weigh {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "correlation")]
        method: WeighMethod,
    },
    /// Decode a syndrome file against a graph and count logical failures
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        graph: PathBuf,
    },
    /// Fit an exponential decay to a CSV of t,value,sigma
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        offset: bool,
    },
    /// Error budget from the [budget] section
    Budget,
    /// Lindblad sweep from the [lindblad] section
    SweepLindblad,
    /// Closed-form logical error for idealized gates
    ProjectOverhead {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        t_cycle: f64,
        #[arg(long)]
        t1: f64,
        #[arg(long)]
        alpha_sq: f64,
        #[arg(long)]
        t_z: f64,
    },
    /// Full memory experiment: sample, weigh, decode, fit
    Report,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let path = c.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(d) = c.decoder {
        cfg.decoder.variants = vec![d.into()];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(c: &Common) -> Result<&Path> {
    let dir = c.out.as_deref().unwrap_or(Path::new("out"));
    std::fs::create_dir_all(dir)?;
    Ok(dir)
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.cmd {
        Cmd::Sample { text } => {
            let cfg = load_config(c)?;
            let out = out_dir(c)?;
            for &d in &cfg.code.distances {
                for &a in &cfg.code.alpha_sq {
                    let model = cfg.noise_model(d, a)?;
                    for &cycles in &cfg.code.cycles {
                        for &basis in &cfg.code.bases {
                            let seed = point_seed(cfg.seed, d, a, cycles, basis, 0);
                            let batch = with_workers(c.workers, || {
                                sample_batch(&model, cycles, basis, a, seed, 0, cfg.code.shots as usize)
                            })??;
                            let stem = format!("syndromes_d{d}_a{a}_c{cycles}_{basis:?}");
                            write_batch(&batch, BufWriter::new(File::create(out.join(format!("{stem}.bin")))?))?;
                            if text {
                                write_text(&batch, BufWriter::new(File::create(out.join(format!("{stem}.txt")))?))?;
                            }
                        }
                    }
                }
            }
            write_json(&out.join("sample.json"), &Header::new(&cfg))
        }
        Cmd::Weigh { input, method } => {
            let file = read_batch(BufReader::new(File::open(&input)?))?;
            let opts = WeightOptions::default();
            let w = match method {
                WeighMethod::Correlation => correlation_weights(&file.records, &opts)?,
                WeighMethod::Baseline => no_erasure_baseline(&file.records, &opts)?,
            };
            for d in &w.diagnostics {
                eprintln!("warning: {d}");
            }
            let out = out_dir(c)?;
            write_graph_text(&w.graph, BufWriter::new(File::create(out.join("graph.txt"))?))
        }
        Cmd::Decode { input, graph } => {
            let file = read_batch(BufReader::new(File::open(&input)?))?;
            let g = read_graph_text(BufReader::new(File::open(&graph)?))?;
            let variant: DecoderVariant = c.decoder.map_or(DecoderVariant::Merged, Into::into);
            let dec = ShotDecoder::new(variant, g, None)?;
            let failures: u64 = with_workers(c.workers, || {
                file.records.par_iter().map(|r| dec.fails(r).map(u64::from)).sum::<Result<u64>>()
            })??;
            let n = file.records.len() as u64;
            let out = out_dir(c)?;
            let v = json!({
                "input": input,
                "decoder": variant.name(),
                "model_hash": format!("{:016x}", file.model_hash),
                "version": catrep::VERSION,
                "shots": n,
                "failures": failures,
                "failure_fraction": if n > 0 { failures as f64 / n as f64 } else { 0.0 },
            });
            println!("{v}");
            write_json(&out.join("decode.json"), &v)
        }
        Cmd::Fit { input, offset } => {
            let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(&input)
                .map_err(|e| Error::Config(e.to_string()))?;
            let mut pts = Vec::new();
            for rec in rdr.deserialize::<(f64, f64, f64)>() {
                pts.push(rec.map_err(|e| Error::Config(format!("{}: {e}", input.display())))?);
            }
            let fit = fit_exponential(&pts, offset)?;
            let (eps, eps_std) = eps_from_fit(&fit);
            let out = out_dir(c)?;
            let v = json!({ "version": catrep::VERSION, "fit": fit, "eps_per_unit": eps, "eps_std": eps_std });
            println!("{v}");
            write_json(&out.join("fit.json"), &v)
        }
        Cmd::Budget => {
            let cfg = load_config(c)?;
            let b = run_budget(&cfg, c.workers)?;
            let out = out_dir(c)?;
            write_json(&out.join("budget.json"), &b)?;
            write_table(&out.join("budget.csv"), &b.header, &["mechanism", "nominal", "contribution", "sigma"], &b.rows())
        }
        Cmd::SweepLindblad => {
            let cfg = load_config(c)?;
            let s = run_lindblad_sweep(&cfg, c.workers)?;
            for r in s.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("point {} failed: {}", r.value, r.error.as_deref().unwrap_or(""));
            }
            let out = out_dir(c)?;
            write_json(&out.join("sweep.json"), &s)?;
            write_table(&out.join("sweep.csv"), &s.header, &["value", "p_flip", "p_plus", "error"], &s.table())
        }
        Cmd::ProjectOverhead { d, t_cycle, t1, alpha_sq, t_z } => {
            let inp = OverheadInputs::new(d, t_cycle, t1, alpha_sq, t_z);
            let o = project_overhead(&inp).map_err(|e| Error::Config(e.to_string()))?;
            let v = json!({ "version": catrep::VERSION, "inputs": inp, "result": o });
            println!("{v}");
            if c.out.is_some() {
                write_json(&out_dir(c)?.join("overhead.json"), &v)?;
            }
            Ok(())
        }
        Cmd::Report => {
            let cfg = load_config(c)?;
            let m = run_memory_experiment(&cfg, c.workers)?;
            let out = out_dir(c)?;
            write_json(&out.join("memory.json"), &m)?;
            write_table(
                &out.join("points.csv"),
                &m.header,
                &["d", "alpha_sq", "basis", "decoder", "cycles", "shots", "failures", "value", "sigma"],
                &m.point_rows(),
            )?;
            write_table(
                &out.join("eps.csv"),
                &m.header,
                &["d", "alpha_sq", "basis", "decoder", "decay_time", "eps", "eps_std"],
                &m.eps_rows(),
            )?;
            for r in m.results.iter().filter(|r| r.fit_error.is_some()) {
                eprintln!("d={} alpha_sq={} {:?}: {}", r.d, r.alpha_sq, r.basis, r.fit_error.as_deref().unwrap_or(""));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

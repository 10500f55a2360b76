use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use provshift::corpus::{self, EmbeddingTable};
use provshift::metrics::LogBase;
use provshift::runner::{self, SlopePoints, SweepSpec};
use provshift::synth::{self, SynthConfig};

#[derive(Parser)]
#[command(
    name = "provshift",
    version,
    about = "Confounding-by-provenance robustness sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-source corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// TOML or JSON generator config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a shift sweep and write rows, skip log, slopes and plot data.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Overrides the base seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute slopes and plot data from a rows file.
    Report {
        #[arg(long)]
        rows: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "e", value_parser = ["e", "2", "10"])]
        log_base: String,
        /// Fit on per-alpha means instead of every row.
        #[arg(long)]
        per_alpha_means: bool,
    },
    /// Validate a corpus and, optionally, an embedding table against it.
    Featurize {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Validate only; print nothing but the verdict.
        #[arg(long)]
        check_only: bool,
        /// Source names mapped to z = 0 and z = 1, comma separated. Defaults
        /// to the order of first appearance in the corpus.
        #[arg(long, value_delimiter = ',')]
        sources: Option<Vec<String>>,
        /// Minimum document frequency for the unigram summary.
        #[arg(long, default_value_t = 1)]
        min_df: usize,
    },
}

fn read_synth_config(path: &Path) -> Result<SynthConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text)?
    })
}

fn infer_sources(path: &Path) -> Result<[String; 2]> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut seen: Vec<String> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(line).with_context(|| format!("line {}", i + 1))?;
        if let Some(s) = v.get("source").and_then(|s| s.as_str()) {
            if !seen.iter().any(|x| x == s) {
                seen.push(s.to_string());
            }
        }
    }
    match <[String; 2]>::try_from(seen) {
        Ok(pair) => Ok(pair),
        Err(seen) => bail!("expected exactly two sources, found {:?}", seen),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Synth { out, seed, config } => {
            let mut cfg = match config {
                Some(p) => read_synth_config(&p)?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let corpus = synth::generate_corpus(&cfg)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            corpus::write_corpus(&corpus, &out)?;
            let cells = corpus.cell_counts();
            println!(
                "wrote {} records to {} (cells neg_z0;pos_z0;neg_z1;pos_z1 = {cells})",
                corpus.len(),
                out.display()
            );
        }
        Command::Sweep {
            config,
            out_dir,
            jobs,
            seed,
        } => {
            let mut spec = SweepSpec::from_path(&config)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let out = runner::run_sweep(&spec, jobs)?;
            let report = runner::write_outputs(&out, &spec, &out_dir)?;
            println!(
                "{} settings ({} skipped), {} rows, {} slope groups -> {}",
                out.enumeration.settings.len(),
                out.enumeration.skipped.len(),
                out.rows.len(),
                report.slopes.len(),
                out_dir.display()
            );
            for s in &report.slopes {
                println!(
                    "{:>12} cy={:.2} slope={:+.5} (log base {})",
                    s.model,
                    s.cy,
                    s.slope,
                    s.log_base.marker()
                );
            }
        }
        Command::Report {
            rows,
            out_dir,
            log_base,
            per_alpha_means,
        } => {
            let base: LogBase = log_base.parse()?;
            let rows = runner::read_rows(&rows)?;
            let points = if per_alpha_means {
                SlopePoints::Means
            } else {
                SlopePoints::Rows
            };
            let report = runner::aggregate_report(&rows, points, base);
            fs::create_dir_all(&out_dir)?;
            runner::write_slopes(out_dir.join("slopes.csv"), &report.slopes)?;
            runner::write_plot_data(out_dir.join("plot_data.jsonl"), &report)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} slope groups -> {}",
                report.slopes.len(),
                out_dir.display()
            );
        }
        Command::Featurize {
            corpus: corpus_path,
            embeddings,
            check_only,
            sources,
            min_df,
        } => {
            let names = match sources {
                Some(v) => <[String; 2]>::try_from(v)
                    .map_err(|v| anyhow::anyhow!("--sources needs two names, got {v:?}"))?,
                None => infer_sources(&corpus_path)?,
            };
            let corpus = corpus::load_corpus(&corpus_path, names)?;
            match embeddings {
                Some(path) => {
                    let table = EmbeddingTable::read(&path)?;
                    let attached = table.attach(&corpus)?;
                    attached.validate()?;
                    println!(
                        "ok: {} records, dim {}, pooling {:?}, 0 missing ids",
                        attached.len(),
                        table.dim,
                        table.pooling
                    );
                    if !check_only {
                        println!("model: {}", table.model);
                        println!(
                            "table rows: {} ({} unused)",
                            table.rows.len(),
                            table.rows.len() - attached.len()
                        );
                    }
                }
                None => {
                    corpus.validate()?;
                    let space = corpus::build_vocabulary(corpus.records(), min_df)?;
                    println!(
                        "ok: {} records, vocabulary {} terms",
                        corpus.len(),
                        space.dim()
                    );
                    if !check_only {
                        println!(
                            "cells neg_z0;pos_z0;neg_z1;pos_z1 = {}",
                            corpus.cell_counts()
                        );
                    }
                }
            }
        }
    }
    Ok(())
}

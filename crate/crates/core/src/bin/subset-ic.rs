use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use subset_ic::averaging::n_scaling_study;
use subset_ic::config::{CriterionSelection, ExperimentConfig};
use subset_ic::experiment::{bias_check, kl_demo, run_sweep_experiment, write_scaling_csv};
use subset_ic::Error;

#[derive(Parser)]
#[command(
    name = "subset-ic",
    version,
    about = "Subset-selection information criteria experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Flat TOML experiment config; defaults reproduce the reference setup.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides `seed_base`).
    #[arg(long)]
    seed: Option<u64>,
    /// perfect, subspace or both.
    #[arg(long)]
    criterion: Option<String>,
    /// Omit the `# generated_unix=` header line.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed-N sweep over models and data subsets.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated model list, e.g. `f0,f1` or `f1`.
        #[arg(long)]
        models: Option<String>,
        /// Sample size (overrides `n_samples`).
        #[arg(long)]
        n: Option<usize>,
        /// Also write the raw mock data as mock_data.csv.
        #[arg(long)]
        dump_data: bool,
    },
    /// Grand averages across the configured sample sizes.
    Nscaling {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replications: Option<usize>,
        /// Comma-separated sample sizes (overrides `n_list`).
        #[arg(long)]
        n_list: Option<String>,
    },
    /// Two-dimensional Gaussian K-L example with Monte Carlo cross-checks.
    KlDemo {
        #[arg(long, default_value_t = 1_000_000)]
        mc_draws: usize,
        #[arg(long, default_value_t = 2023)]
        seed: u64,
        /// Also check that projecting onto z1 never increases the divergence.
        #[arg(long)]
        dim_check: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Out-of-sample chi-squared of the perfect model on independent replicas.
    BiasCheck {
        #[arg(long, default_value_t = 5)]
        d_c: usize,
        #[arg(long, default_value_t = 10_000)]
        replicas: usize,
        #[arg(long, default_value_t = 2023)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> subset_ic::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed_base = seed;
    }
    if let Some(c) = &common.criterion {
        cfg.criterion = c.parse::<CriterionSelection>()?;
    }
    Ok(cfg)
}

fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> subset_ic::Result<Vec<T>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Config(format!("--{flag}: cannot parse '{x}'")))
        })
        .collect()
}

fn create(dir: &Path, name: &str) -> subset_ic::Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: Option<&PathBuf>, name: &str, json: &str) -> subset_ic::Result<()> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), format!("{json}\n"))?;
    }
    Ok(())
}

fn run(cli: Cli) -> subset_ic::Result<()> {
    match cli.command {
        Command::Sweep {
            common,
            models,
            n,
            dump_data,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(m) = models {
                cfg.models = parse_list("models", &m)?;
            }
            if let Some(n) = n {
                cfg.n_samples = n;
            }
            cfg.validate()?;
            let report = run_sweep_experiment(&cfg)?;
            report.write_candidates_csv(
                create(&cfg.out_dir, "sweep_candidates.csv")?,
                !common.no_timestamp,
            )?;
            report.write_average_csv(
                create(&cfg.out_dir, "sweep_average.csv")?,
                !common.no_timestamp,
            )?;
            if dump_data {
                report
                    .data
                    .write_csv(create(&cfg.out_dir, "mock_data.csv")?)?;
            }
            println!(
                "N = {}, {} candidates",
                cfg.n_samples,
                report.candidates.len()
            );
            println!("{:<10} {:>10} {:>10}", "criterion", "a0", "err");
            for a in &report.averages {
                println!(
                    "{:<10} {:>10.5} {:>10.5}",
                    a.criterion_kind.as_str(),
                    a.mean,
                    a.error()
                );
            }
        }
        Command::Nscaling {
            common,
            replications,
            n_list,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(r) = replications {
                cfg.replications = r;
            }
            if let Some(list) = n_list {
                cfg.n_list = parse_list("n-list", &list)?;
            }
            cfg.validate()?;
            let rows = n_scaling_study(&cfg)?;
            let replicated = replications.is_some() || cfg.replications > 1;
            write_scaling_csv(
                create(&cfg.out_dir, "nscaling_average.csv")?,
                &rows,
                replicated,
                !common.no_timestamp,
            )?;
            println!("{:>6} {:<10} {:>10} {:>10}", "N", "criterion", "a0", "err");
            for r in rows.iter().filter(|r| r.replication == 0) {
                println!(
                    "{:>6} {:<10} {:>10.5} {:>10.5}",
                    r.n_samples,
                    r.estimate.criterion_kind.as_str(),
                    r.estimate.mean,
                    r.estimate.error()
                );
            }
        }
        Command::KlDemo {
            mc_draws,
            seed,
            dim_check,
            out,
        } => {
            if mc_draws != 0 && mc_draws < 100 {
                return Err(Error::Config("--mc-draws must be 0 or at least 100".into()));
            }
            let report = kl_demo(mc_draws, seed, dim_check)?;
            let json = serde_json::to_string_pretty(&report)?;
            println!("{json}");
            write_json(out.as_ref(), "kl_demo.json", &json)?;
            if !report.passes() {
                return Err(Error::SelfTest(
                    "Monte Carlo or projection check disagrees with the closed form".into(),
                ));
            }
        }
        Command::BiasCheck {
            d_c,
            replicas,
            seed,
            out,
        } => {
            let report = bias_check(d_c, replicas, seed)?;
            let json = serde_json::to_string_pretty(&report)?;
            println!("{json}");
            write_json(out.as_ref(), "bias_check.json", &json)?;
            if !report.pass {
                return Err(Error::SelfTest(format!(
                    "mean out-of-sample chi2 {} is {:.2} standard errors from {}",
                    report.mean_out_of_sample_chi2, report.pull, report.expected
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

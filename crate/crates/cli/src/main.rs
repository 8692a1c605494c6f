use std::fs;
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qnet_core::constructions::{self, ConstructionKind};
use qnet_core::experiment::{self, Experiment, ExperimentConfig, MRule};
use qnet_core::merging::{cluster_then_merge, merge_requests};
use qnet_core::probabilistic;
use qnet_core::request::{gen_grouped, gen_uniform, Request, RequestSet};
use qnet_core::spectral::{build_hierarchy, spectral_cluster, SpectralOrder};
use qnet_core::verification::{verify_all, VerdictStatus};
use qnet_core::ResourceState;

/// Design and verify memory-optimized entanglement-based quantum network
/// resource states.
#[derive(Parser)]
#[command(name = "qnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// Input file (defaults to stdin).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output file (defaults to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random request ensemble as RequestSet JSON.
    Generate {
        #[arg(long)]
        n: usize,
        /// Number of requests to draw.
        #[arg(long)]
        m: usize,
        /// Bias acceptance within consecutive groups of this size.
        #[arg(long)]
        grouped: Option<usize>,
        /// Intra-group acceptance bias (with --grouped).
        #[arg(long, default_value_t = 10.0)]
        bias: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Attach uniform probabilities 1/m to the requests.
        #[arg(long)]
        uniform_probabilities: bool,
        #[command(flatten)]
        io: Io,
    },
    /// Connectivity matrices (A, S, C, L) of a RequestSet.
    Matrices {
        /// Emit one matrix as CSV instead of the JSON bundle.
        #[arg(long, value_parser = ["a", "s", "c", "l"])]
        csv: Option<String>,
        /// Use the n²×n² virtual-qubit-level matrices.
        #[arg(long)]
        r#virtual: bool,
        #[command(flatten)]
        io: Io,
    },
    /// Spectral clustering hierarchy of a RequestSet.
    Cluster {
        #[arg(long, default_value_t = 1)]
        rounds: usize,
        #[arg(long, default_value = "smallest", value_parser = ["smallest", "largest"])]
        spectral_order: String,
        /// Fix the cluster count and emit a single partition.
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        io: Io,
    },
    /// Merge a RequestSet into a ResourceState (Algorithm 2 / 3).
    Merge {
        /// Clustering rounds before merging (0 = merging only).
        #[arg(long, default_value_t = 0)]
        rounds: usize,
        #[arg(long, default_value = "smallest", value_parser = ["smallest", "largest"])]
        spectral_order: String,
        #[command(flatten)]
        io: Io,
    },
    /// Emit a named full-connectivity construction as a ResourceState.
    Construct {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        io: Io,
    },
    /// Verify that a ResourceState fulfills every request; nonzero exit on
    /// any failure.
    Verify {
        /// RequestSet JSON file.
        #[arg(long)]
        requests: PathBuf,
        /// Measurement-pattern budget for the fulfillment search.
        #[arg(long, default_value_t = 200_000)]
        budget: u64,
        #[command(flatten)]
        io: Io,
    },
    /// Storage plan for k requests drawn from declared probabilities.
    Plan {
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Drop lowest-probability requests up to this total mass.
        #[arg(long)]
        allow_failure: Option<f64>,
        /// Size per-edge copies at mean + 2 standard deviations.
        #[arg(long)]
        margin: bool,
        /// Monte Carlo trials validating the inventory.
        #[arg(long)]
        validate: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Emit the single-pair threshold sweep CSV instead of a plan.
        #[arg(long)]
        sweep: bool,
        #[command(flatten)]
        io: Io,
    },
    /// Run a numerical study and emit its CSV report.
    Experiment {
        /// Named preset (fig4a, fig4b, fig4c, fig4d, fig5a, fig5b).
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        experiment: Option<String>,
        /// Comma-separated ascending node counts.
        #[arg(long, value_delimiter = ',')]
        n_range: Vec<usize>,
        #[arg(long, default_value = "2n")]
        m_rule: String,
        #[arg(long, default_value_t = 4)]
        group_size: usize,
        #[arg(long, default_value_t = 10.0)]
        bias: f64,
        #[arg(long, default_value_t = 1)]
        rounds: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        nearest_neighbor: bool,
        /// Also write a gnuplot script next to the CSV.
        #[arg(long)]
        gnuplot: Option<PathBuf>,
        #[command(flatten)]
        io: Io,
    },
}

fn read_input(io: &Io) -> Result<String> {
    match &io.input {
        Some(path) => fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display())),
        None => {
            let mut buf = String::new();
            std::io::stdin()
                .read_to_string(&mut buf)
                .context("reading stdin")?;
            Ok(buf)
        }
    }
}

fn write_output(io: &Io, content: &str) -> Result<()> {
    match &io.out {
        Some(path) => fs::write(path, content)
            .with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{content}");
            if !content.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn read_requests(io: &Io) -> Result<RequestSet> {
    RequestSet::from_json(&read_input(io)?).map_err(|e| anyhow!("invalid RequestSet: {e}"))
}

fn parse_order(s: &str) -> SpectralOrder {
    if s == "largest" {
        SpectralOrder::Largest
    } else {
        SpectralOrder::Smallest
    }
}

fn matrix_rows(m: &qnet_core::request::Matrix) -> Vec<Vec<i64>> {
    (0..m.n())
        .map(|i| (0..m.n()).map(|j| m.get(i, j)).collect())
        .collect()
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            n,
            m,
            grouped,
            bias,
            seed,
            uniform_probabilities,
            io,
        } => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut rs = match grouped {
                Some(size) => gen_grouped(n, m, size, bias, &mut rng),
                None => gen_uniform(n, m, &mut rng),
            };
            if uniform_probabilities {
                let p = 1.0 / rs.num_requests() as f64;
                rs = RequestSet::new(
                    n,
                    rs.requests()
                        .iter()
                        .map(|r| Request::new(r.links(), Some(p)))
                        .collect::<Result<_, _>>()?,
                )?;
            }
            write_output(&io, &rs.to_json())?;
        }
        Command::Matrices { csv, r#virtual, io } => {
            let rs = read_requests(&io)?;
            let m = rs.matrices();
            let out = if r#virtual {
                let v = m.virtual_matrices();
                match csv.as_deref() {
                    Some("a") => v.a.to_csv(),
                    Some("s") => v.s.to_csv(),
                    Some("c") => v.c.to_csv(),
                    Some("l") => v.l.to_csv(),
                    _ => serde_json::json!({
                        "n": v.n,
                        "exists": v.exists,
                        "a": matrix_rows(&v.a),
                        "s": matrix_rows(&v.s),
                        "c": matrix_rows(&v.c),
                        "l": matrix_rows(&v.l),
                    })
                    .to_string(),
                }
            } else {
                match csv.as_deref() {
                    Some("a") => m.a.to_csv(),
                    Some("s") => m.s.to_csv(),
                    Some("c") => m.c.to_csv(),
                    Some("l") => m.l.to_csv(),
                    _ => serde_json::json!({
                        "n": m.n(),
                        "a": matrix_rows(&m.a),
                        "s": matrix_rows(&m.s),
                        "c": matrix_rows(&m.c),
                        "l": matrix_rows(&m.l),
                    })
                    .to_string(),
                }
            };
            write_output(&io, &out)?;
        }
        Command::Cluster {
            rounds,
            spectral_order,
            k,
            io,
        } => {
            let rs = read_requests(&io)?;
            let order = parse_order(&spectral_order);
            let out = match k {
                Some(k) => {
                    let partition = spectral_cluster(&rs, Some(k), order)
                        .map_err(|e| anyhow!("clustering failed: {e}"))?;
                    serde_json::json!({ "partition": partition }).to_string()
                }
                None => build_hierarchy(&rs, rounds, order)
                    .map_err(|e| anyhow!("clustering failed: {e}"))?
                    .to_json(),
            };
            write_output(&io, &out)?;
        }
        Command::Merge {
            rounds,
            spectral_order,
            io,
        } => {
            let rs = read_requests(&io)?;
            let res = if rounds == 0 {
                merge_requests(&rs)
            } else {
                cluster_then_merge(&rs, rounds, parse_order(&spectral_order))
                    .map_err(|e| anyhow!("clustering failed: {e}"))?
            };
            write_output(&io, &res.to_json())?;
        }
        Command::Construct { kind, n, io } => {
            let kind = ConstructionKind::from_str(&kind).map_err(|e| anyhow!(e))?;
            let res = constructions::build(kind, n).map_err(|e| anyhow!("{e}"))?;
            write_output(&io, &res.to_json())?;
        }
        Command::Verify {
            requests,
            budget,
            io,
        } => {
            let rs = RequestSet::from_json(
                &fs::read_to_string(&requests)
                    .with_context(|| format!("reading {}", requests.display()))?,
            )
            .map_err(|e| anyhow!("invalid RequestSet: {e}"))?;
            let res = ResourceState::from_json(&read_input(&io)?)
                .map_err(|e| anyhow!("invalid ResourceState: {e}"))?;
            let verdicts = verify_all(&res, &rs, budget);
            let mut lines = String::new();
            let mut all_ok = true;
            for v in &verdicts {
                all_ok &= matches!(
                    v.status,
                    VerdictStatus::RecipeVerified | VerdictStatus::SearchVerified
                );
                lines.push_str(&v.to_json_line());
                lines.push('\n');
            }
            write_output(&io, &lines)?;
            if !all_ok {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Plan {
            k,
            allow_failure,
            margin,
            validate,
            seed,
            sweep,
            io,
        } => {
            if sweep {
                let ns: Vec<usize> = (4..=40).collect();
                let ks: Vec<usize> = (1..=40).collect();
                write_output(&io, &probabilistic::threshold_sweep_csv(&ns, &ks))?;
                return Ok(ExitCode::SUCCESS);
            }
            let mut rs = read_requests(&io)?;
            if let Some(eps) = allow_failure {
                rs = probabilistic::drop_rare_requests(&rs, eps).map_err(|e| anyhow!("{e}"))?;
            }
            let mut plan = probabilistic::plan(&rs, k).map_err(|e| anyhow!("{e}"))?;
            if margin {
                plan.per_edge_copies = probabilistic::asymptotic_copies_with_margin(&rs, k)
                    .map_err(|e| anyhow!("{e}"))?
                    .into_iter()
                    .collect();
            }
            let mut out = plan.to_json();
            if let Some(trials) = validate {
                let copies = plan.per_edge_copies.iter().copied().collect();
                let rate = probabilistic::validate_inventory(&rs, &copies, k, trials, seed);
                out.push('\n');
                out.push_str(
                    &serde_json::json!({ "empirical_failure_rate": rate }).to_string(),
                );
            }
            write_output(&io, &out)?;
        }
        Command::Experiment {
            preset,
            experiment,
            n_range,
            m_rule,
            group_size,
            bias,
            rounds,
            trials,
            seed,
            nearest_neighbor,
            gnuplot,
            io,
        } => {
            let cfg = match preset {
                Some(name) => ExperimentConfig::preset(&name)
                    .ok_or_else(|| anyhow!("unknown preset {name:?}"))?,
                None => {
                    let experiment = experiment
                        .ok_or_else(|| anyhow!("--experiment or --preset required"))?;
                    if n_range.is_empty() {
                        bail!("--n-range required without --preset");
                    }
                    ExperimentConfig {
                        experiment: Experiment::from_str(&experiment).map_err(|e| anyhow!(e))?,
                        n_range,
                        m_rule: MRule::from_str(&m_rule).map_err(|e| anyhow!(e))?,
                        group_size,
                        bias,
                        rounds,
                        trials,
                        seed,
                        nearest_neighbor,
                    }
                }
            };
            let csv = experiment::run_experiment(&cfg).map_err(|e| anyhow!("{e}"))?;
            if let Some(path) = gnuplot {
                let csv_name = io
                    .out
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| "experiment.csv".into());
                fs::write(&path, experiment::gnuplot_script(&csv_name))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            write_output(&io, &csv)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

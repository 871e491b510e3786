//! `crn` — analyze reaction networks, evaluate product-form stationary
//! distributions, cross-check them against the brute-force oracle and
//! simulation, and measure condensation.
//!
//! Exit codes: 0 success, 1 validation failure (bad arguments or inputs,
//! or a failed `verify` comparison), 2 computational error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crn_core::autocat::{
    build_asip_network_m, build_inclusion_network, classify_autocatalytic, AutocatalyticProfile,
};
use crn_core::condensation::{classify_condensation, condensation_curve};
use crn_core::export;
use crn_core::gillespie::{empirical_stationary, simulate};
use crn_core::network::{parse_network, serialize_network, ReactionNetwork};
use crn_core::oracle::{
    exact_stationary, generalized_balance_residual, total_variation, BalancePartition,
};
use crn_core::product_form::{
    classify_factor, growth_ratio, joint_distribution, scaled_profile, verify_factor_class,
    CondensationQuery, ProductFormTable,
};
use crn_core::structure::structural_summary;

#[derive(Parser)]
#[command(name = "crn", version, about = "Stochastic reaction network toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Builder {
    Inclusion,
    Asip,
}

#[derive(Subcommand)]
enum Command {
    /// Print the structural summary (complexes, linkage classes,
    /// deficiency, reversibility flags) as JSON.
    Analyze { network: PathBuf },
    /// Decide whether the network is a single-particle-exchange network;
    /// print its parameter profile or the violated conditions as JSON.
    Classify {
        network: Option<PathBuf>,
        /// Build the network from a standard family instead of a file.
        #[arg(long, value_enum)]
        builder: Option<Builder>,
        /// Inclusion builder: JSON file with the transition matrix (2D array).
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Inclusion/chain builder: diffusion parameter m.
        #[arg(long, default_value_t = 2.0)]
        m: f64,
        /// Chain builder: number of sites.
        #[arg(long)]
        sites: Option<usize>,
        /// Chain builder: forward hop rate.
        #[arg(long)]
        p: Option<f64>,
        /// Chain builder: backward hop rate.
        #[arg(long)]
        q: Option<f64>,
        /// Also write the (built) network to this file.
        #[arg(long)]
        emit_network: Option<PathBuf>,
    },
    /// Evaluate the closed-form stationary distribution and write it as CSV.
    Stationary {
        network: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        total: i64,
        /// Volume rescaling of the higher-order rates.
        #[arg(long)]
        volume: Option<f64>,
        /// Write per-species marginals instead of the joint law.
        #[arg(long)]
        marginals: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the master equation directly and write the distribution CSV.
    Oracle {
        network: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        total: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the closed form against the direct solve; exit 0 iff the
    /// total variation distance is within tolerance.
    Verify {
        network: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        total: i64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Simulate the Markov chain; write a trajectory CSV, or the
    /// time-average distribution with --empirical.
    Simulate {
        network: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        total: i64,
        /// Initial counts, comma-separated per species (default: all mass
        /// on the first species).
        #[arg(long)]
        init: Option<String>,
        #[arg(long)]
        t_max: f64,
        #[arg(long, default_value_t = 0.0)]
        burn_in: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write occupation frequencies (joint CSV) instead of the path.
        #[arg(long)]
        empirical: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact condensation statistics over a range of totals.
    Condense {
        network: PathBuf,
        #[arg(long)]
        n_min: u32,
        #[arg(long)]
        n_max: u32,
        #[arg(long, default_value_t = 1)]
        n_step: u32,
        #[arg(long)]
        theta: f64,
        #[arg(long = "K", default_value_t = 0)]
        k: u32,
        /// Condensate species index (default: the classified maximizer).
        #[arg(long)]
        target: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Growth classification and radius of convergence of one species'
    /// stationary factor.
    Radius {
        network: PathBuf,
        #[arg(long)]
        species: String,
    },
    /// Evaluate the grouped balance residual of a candidate distribution
    /// under a reaction partition.
    Balance {
        network: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        total: i64,
        /// JSON file: {"blocks": [{"left": [..], "right": [..]}, ..]}.
        #[arg(long)]
        partition: PathBuf,
        /// Joint-format CSV with the candidate distribution.
        #[arg(long)]
        dist: PathBuf,
    },
}

struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: 1,
        }
    }

    fn computational(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: 2,
        }
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Exit code 0 means every requested artifact was written.
struct CommandResult {
    artifacts: Vec<PathBuf>,
}

impl CommandResult {
    fn none() -> Self {
        CommandResult { artifacts: vec![] }
    }

    fn files(artifacts: Vec<PathBuf>) -> Self {
        CommandResult { artifacts }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))
}

fn load_network(path: &Path) -> Result<ReactionNetwork, CliError> {
    parse_network(&read_file(path)?).map_err(|e| CliError::validation(e.to_string()))
}

/// Write atomically: temp file in the target directory, then rename.
fn write_artifact(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(|e| CliError::computational(format!("cannot create temp file: {e}")))?;
    use std::io::Write;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| CliError::computational(format!("write failed: {e}")))?;
    tmp.persist(path)
        .map_err(|e| CliError::computational(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn parse_total(total: i64) -> Result<u32, CliError> {
    u32::try_from(total)
        .map_err(|_| CliError::validation(format!("NonNegativeTotalRequired: got {total}")))
}

fn classify_or_fail(net: &ReactionNetwork) -> Result<AutocatalyticProfile, CliError> {
    classify_autocatalytic(net).map_err(|violations| {
        CliError::computational(format!(
            "network has no product-form profile:\n{violations}"
        ))
    })
}

fn parse_init(init: &str, expected: usize, total: u32) -> Result<Vec<u32>, CliError> {
    let counts: Result<Vec<u32>, _> = init.split(',').map(|f| f.trim().parse::<u32>()).collect();
    let counts =
        counts.map_err(|e| CliError::validation(format!("bad --init specification: {e}")))?;
    if counts.len() != expected {
        return Err(CliError::validation(format!(
            "--init has {} entries, network has {expected} species",
            counts.len()
        )));
    }
    if counts.iter().sum::<u32>() != total {
        return Err(CliError::validation(format!(
            "--init sums to {}, --total is {total}",
            counts.iter().sum::<u32>()
        )));
    }
    Ok(counts)
}

fn run(command: Command) -> Result<CommandResult, CliError> {
    match command {
        Command::Analyze { network } => {
            let net = load_network(&network)?;
            let report = structural_summary(&net);
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serialization")
            );
            Ok(CommandResult::none())
        }
        Command::Classify {
            network,
            builder,
            matrix,
            m,
            sites,
            p,
            q,
            emit_network,
        } => {
            let net = match builder {
                None => {
                    let path = network.ok_or_else(|| {
                        CliError::validation("either a network file or --builder is required")
                    })?;
                    load_network(&path)?
                }
                Some(Builder::Inclusion) => {
                    let path = matrix.ok_or_else(|| {
                        CliError::validation("--builder inclusion requires --matrix")
                    })?;
                    let rows: Vec<Vec<f64>> = serde_json::from_str(&read_file(&path)?)
                        .map_err(|e| CliError::validation(format!("bad matrix file: {e}")))?;
                    build_inclusion_network(&rows, m)
                        .map_err(|e| CliError::validation(e.to_string()))?
                }
                Some(Builder::Asip) => {
                    let sites = sites
                        .ok_or_else(|| CliError::validation("--builder asip requires --sites"))?;
                    let p = p.ok_or_else(|| CliError::validation("--builder asip requires --p"))?;
                    let q = q.ok_or_else(|| CliError::validation("--builder asip requires --q"))?;
                    build_asip_network_m(sites, p, q, m)
                        .map_err(|e| CliError::validation(e.to_string()))?
                }
            };
            let mut artifacts = Vec::new();
            if let Some(path) = emit_network {
                write_artifact(&path, &serialize_network(&net))?;
                artifacts.push(path);
            }
            match classify_autocatalytic(&net) {
                Ok(profile) => println!("{}", profile.to_json()),
                Err(violations) => println!(
                    "{}",
                    serde_json::to_string_pretty(&violations).expect("violation serialization")
                ),
            }
            Ok(CommandResult::files(artifacts))
        }
        Command::Stationary {
            network,
            total,
            volume,
            marginals,
            out,
        } => {
            let net = load_network(&network)?;
            let total = parse_total(total)?;
            let mut profile = classify_or_fail(&net)?;
            if let Some(v) = volume {
                profile =
                    scaled_profile(&profile, v).map_err(|e| CliError::validation(e.to_string()))?;
            }
            let contents = if marginals {
                let table = ProductFormTable::build(&profile, total);
                let all: Vec<Vec<f64>> =
                    (0..net.num_species()).map(|i| table.marginal(i)).collect();
                export::marginal_csv(net.species(), &all)
            } else {
                let dist = joint_distribution(&profile, total)
                    .map_err(|e| CliError::computational(e.to_string()))?;
                export::joint_csv(&dist).map_err(|e| CliError::computational(e.to_string()))?
            };
            write_artifact(&out, &contents)?;
            Ok(CommandResult::files(vec![out]))
        }
        Command::Oracle {
            network,
            total,
            out,
        } => {
            let net = load_network(&network)?;
            let total = parse_total(total)?;
            let dist = exact_stationary(&net, total)
                .map_err(|e| CliError::computational(e.to_string()))?;
            let contents =
                export::joint_csv(&dist).map_err(|e| CliError::computational(e.to_string()))?;
            write_artifact(&out, &contents)?;
            Ok(CommandResult::files(vec![out]))
        }
        Command::Verify {
            network,
            total,
            tol,
        } => {
            let net = load_network(&network)?;
            let total = parse_total(total)?;
            let profile = classify_or_fail(&net)?;
            let closed = joint_distribution(&profile, total)
                .map_err(|e| CliError::computational(e.to_string()))?;
            let exact = exact_stationary(&net, total)
                .map_err(|e| CliError::computational(e.to_string()))?;
            let tv = total_variation(&closed, &exact)
                .map_err(|e| CliError::computational(e.to_string()))?;
            println!("total_variation {}", fmt17(tv));
            if tv <= tol {
                Ok(CommandResult::none())
            } else {
                Err(CliError::validation(format!(
                    "total variation {} exceeds tolerance {}",
                    fmt17(tv),
                    fmt17(tol)
                )))
            }
        }
        Command::Simulate {
            network,
            total,
            init,
            t_max,
            burn_in,
            seed,
            empirical,
            out,
        } => {
            let net = load_network(&network)?;
            let total = parse_total(total)?;
            let x0 = match init {
                Some(spec) => parse_init(&spec, net.num_species(), total)?,
                None => {
                    let mut x = vec![0u32; net.num_species()];
                    if !x.is_empty() {
                        x[0] = total;
                    }
                    x
                }
            };
            let contents = if empirical {
                let dist = empirical_stationary(&net, &x0, t_max, burn_in, seed)
                    .map_err(|e| CliError::computational(e.to_string()))?;
                export::joint_csv(&dist).map_err(|e| CliError::computational(e.to_string()))?
            } else {
                let traj = simulate(&net, &x0, t_max, seed)
                    .map_err(|e| CliError::computational(e.to_string()))?;
                export::trajectory_csv(&traj)
            };
            write_artifact(&out, &contents)?;
            Ok(CommandResult::files(vec![out]))
        }
        Command::Condense {
            network,
            n_min,
            n_max,
            n_step,
            theta,
            k,
            target,
            out,
        } => {
            let net = load_network(&network)?;
            let profile = classify_or_fail(&net)?;
            if n_step == 0 || n_min == 0 || n_max < n_min {
                return Err(CliError::validation(
                    "need 0 < n-min <= n-max and n-step >= 1",
                ));
            }
            let totals: Vec<u32> = (n_min..=n_max).step_by(n_step as usize).collect();
            let query = CondensationQuery::new(theta, k, target)
                .map_err(|e| CliError::validation(e.to_string()))?;
            let report = condensation_curve(&profile, &totals, &query)
                .map_err(|e| CliError::computational(e.to_string()))?;
            write_artifact(&out, &export::condensation_csv(&report))?;
            Ok(CommandResult::files(vec![out]))
        }
        Command::Radius { network, species } => {
            let net = load_network(&network)?;
            let index = net
                .species_index(&species)
                .ok_or_else(|| CliError::validation(format!("unknown species {species:?}")))?;
            let profile = classify_or_fail(&net)?;
            let class = classify_factor(&profile, index);
            let classification = classify_condensation(&profile);
            let probe = growth_ratio(&profile, index, 4000);
            let out = serde_json::json!({
                "species": species,
                "kind": class.kind,
                "radius": class.radius,
                "growth_ratio_at_4000": probe,
                "ratio_probe_confirms": verify_factor_class(&profile, index, &class),
                "regime": classification.regime,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&out).expect("radius serialization")
            );
            Ok(CommandResult::none())
        }
        Command::Balance {
            network,
            total,
            partition,
            dist,
        } => {
            let net = load_network(&network)?;
            let total = parse_total(total)?;
            let partition: BalancePartition = serde_json::from_str(&read_file(&partition)?)
                .map_err(|e| CliError::validation(format!("bad partition file: {e}")))?;
            let dist = export::parse_joint_csv(&read_file(&dist)?)
                .map_err(|e| CliError::validation(e.to_string()))?;
            if dist.total != total {
                return Err(CliError::validation(format!(
                    "distribution file is on total {}, --total is {total}",
                    dist.total
                )));
            }
            let residual = generalized_balance_residual(&net, &partition, &dist)
                .map_err(|e| CliError::computational(e.to_string()))?;
            println!("generalized_balance_residual {}", fmt17(residual));
            Ok(CommandResult::none())
        }
    }
}

fn main() -> ExitCode {
    // CRN_THREADS caps worker parallelism; default is machine parallelism.
    if let Ok(value) = std::env::var("CRN_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            // Usage errors (unknown subcommand, bad flags) are validation
            // failures; help and version requests are successes.
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(result) => {
            for artifact in &result.artifacts {
                eprintln!("wrote {}", artifact.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

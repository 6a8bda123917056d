//! `pbvote`: offline tallying, verification, simulation and the election server.
//!
//! Machine-readable results go to stdout, diagnostics to stderr. Exit status
//! is 0 on success, 1 on invalid input or a failed verification, and 2 when a
//! brute-force search would exceed the enumeration limit.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pbvote_core::analytics::{cost_bias_study, pipeline};
use pbvote_core::comparisons::{agreement_report, assign_pairs, funded_projects, ComparisonMatrix};
use pbvote_core::mle::{
    exact_mle_estimate, knapsack_of_votes, likelihood_score, mle_estimate, probability_ratio,
    verify_mle_equivalence, verify_recovery, NoiseModel,
};
use pbvote_core::strategy::{
    best_response, contains_set, group_manipulation_demo, integral_demo, kapproval_counterexample,
    knapsack_partial_counterexample, verify_integral_bound, verify_overlap_identity,
    verify_partial_strategyproofness, verify_partial_suite, verify_strategyproofness,
    verify_welfare_suite, Domination, InstanceShape, Rule, DEFAULT_ENUMERATION_LIMIT,
};
use pbvote_core::synth::{generate, SynthOptions};
use pbvote_core::tally::{score_ballots, tally};
use pbvote_core::{Allocation, Ballot, BudgetMode, Election, ElectionConfig, Method, ProjectId};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "pbvote", version, about = "Budget election tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// Election config (JSON).
    #[arg(long = "config", value_name = "FILE")]
    config_flag: Option<PathBuf>,
    /// Ballots as JSON lines or a JSON array.
    #[arg(long = "ballots", value_name = "FILE")]
    ballots_flag: Option<PathBuf>,
    /// Config and ballots given positionally.
    #[arg(value_name = "FILES", num_args = 0..=2)]
    positional: Vec<PathBuf>,
}

impl Inputs {
    fn config_path(&self) -> Result<&Path, CliError> {
        self.config_flag
            .as_deref()
            .or(self.positional.first().map(PathBuf::as_path))
            .ok_or_else(|| CliError::Usage("an election config is required (--config FILE)".into()))
    }

    fn ballots_path(&self) -> Option<&Path> {
        let skip = usize::from(self.config_flag.is_none());
        self.ballots_flag
            .as_deref()
            .or(self.positional.get(skip).map(PathBuf::as_path))
    }

    fn load(&self) -> Result<(Election, Vec<Ballot>), CliError> {
        let election = Election::new(read_json(self.config_path()?)?)?;
        let ballots = match self.ballots_path() {
            Some(p) => read_ballots(p)?,
            None => Vec::new(),
        };
        Ok((election, ballots))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Tally ballots with one aggregation method.
    Tally {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value = "knapsack")]
        method: Method,
        /// Approval limit for kapproval, overriding the config.
        #[arg(long)]
        k: Option<usize>,
        /// Include per-dollar scores in the output.
        #[arg(long)]
        scores: bool,
    },
    /// Run a brute-force or statistical property check.
    Verify(VerifyArgs),
    /// Sample noisy votes around a ground truth and estimate it back.
    Mle {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Complete allocation (JSON object of project amounts).
        #[arg(long, value_name = "FILE")]
        ground_truth: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_LIMIT)]
        limit: u128,
    },
    /// Agreement of each method's outcome with the pairwise comparisons.
    Agreement {
        #[command(flatten)]
        inputs: Inputs,
        /// Comparison matrix export (JSON) merged with comparisons in the ballots.
        #[arg(long, value_name = "FILE")]
        comparisons: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "knapsack,kapproval,ranking")]
        methods: Vec<Method>,
    },
    /// Pairs of projects a voter should compare.
    Pairs {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        #[arg(long)]
        voter: String,
        #[arg(long, default_value_t = 3)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the HTTP election service.
    Serve {
        /// Defaults to $PB_DATA_DIR, then ./pb-data.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Defaults to $PB_BIND_ADDR, then 127.0.0.1:8080.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Generate a seeded synthetic profile in every ballot format.
    Gen {
        #[arg(long, default_value_t = 200)]
        voters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        projects: usize,
        #[arg(long, default_value_t = 5)]
        pairs: usize,
        #[arg(long, default_value_t = 4)]
        approval_limit: usize,
        #[arg(long, default_value_t = 4)]
        ranking_length: usize,
        /// Keep only these formats.
        #[arg(long, value_delimiter = ',')]
        formats: Option<Vec<String>>,
        /// Write config.json and ballots.jsonl here instead of printing.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Cost-bias diagnostics over a ballot log.
    Analyze {
        #[command(flatten)]
        inputs: Inputs,
        /// Emit a TSV table instead of the JSON report.
        #[arg(long, value_enum)]
        tsv: Option<Table>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    /// Cumulative vote share by descending cost.
    Curve,
    /// Average winning cost over budget per method.
    WinningCost,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Theorem {
    /// Knapsack voting is strategy-proof under l1 and overlap utilities.
    #[value(name = "1")]
    StrategyProof,
    /// The knapsack outcome maximizes social overlap.
    #[value(name = "2")]
    Welfare,
    /// Strategy-proofness of the balanced-budget rule.
    #[value(name = "3")]
    Balanced,
    /// Partial strategy-proofness under additive concave utilities.
    #[value(name = "4")]
    Partial,
    /// Strategy-proofness with a deficit project.
    Deficit,
    /// Coalition manipulation example.
    Group,
    /// Integral-rule counterexample and the one-project bound.
    Integral,
    /// Noise-model estimator checks.
    Mle,
    /// Overlap and l1 distance identity on complete allocations.
    Identity,
    /// Synthetic cost-bias study, knapsack against K-approval.
    CostBias,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    theorem: Theorem,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest number of candidate votes a single search may enumerate.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_LIMIT)]
    limit: u128,
    /// Upper bound on the summed cost of generated elections.
    #[arg(long)]
    max_cost: Option<u64>,
    #[arg(long, value_enum, default_value = "strict")]
    domination: DominationArg,
    /// Votes per profile (mle) or voters per profile (cost-bias).
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DominationArg {
    Strict,
    Weak,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Core(#[from] pbvote_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("service: {0}")]
    Service(#[from] pbvote_service::ServiceError),
    #[error("verification failed")]
    CheckFailed,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_refusal() => 2,
            _ => 1,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).map_err(|source| CliError::Parse {
        path: path.to_owned(),
        source,
    })
}

fn read_ballots(path: &Path) -> Result<Vec<Ballot>, CliError> {
    let text = read(path)?;
    let bad = |source| CliError::Parse {
        path: path.to_owned(),
        source,
    };
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(bad);
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(bad))
        .collect()
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Writes to stdout, ignoring a closed pipe.
fn out(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn emit(value: &impl Serialize) {
    out(&(serde_json::to_string_pretty(value).expect("serializable output") + "\n"));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Tally {
            inputs,
            method,
            k,
            scores,
        } => {
            let (election, ballots) = inputs.load()?;
            let outcome = tally(method, &ballots, &election, k)?;
            if scores {
                let own = pbvote_core::tally::ballots_for(method, &ballots);
                let table = score_ballots(&own, &election)?;
                emit(&json!({ "outcome": outcome, "scores": table }));
            } else {
                emit(&outcome);
            }
            Ok(())
        }
        Command::Verify(args) => verify(args),
        Command::Mle {
            config,
            ground_truth,
            samples,
            seed,
            limit,
        } => {
            let election = Election::new(read_json::<ElectionConfig>(&config)?)?;
            let truth: Allocation = read_json(&ground_truth)?;
            let model = NoiseModel::new(election, &truth, limit)?;
            let votes = model.sample_votes(samples, seed);
            let est = mle_estimate(&votes, model.election(), limit)?;
            let exact = exact_mle_estimate(&votes, model.election(), limit)?;
            let rule = knapsack_of_votes(&votes, model.election())?;
            emit(&json!({
                "samples": samples,
                "seed": seed,
                "ground_truth": model.ground_truth(),
                "support_size": model.support_size(),
                "estimate": est,
                "knapsack_outcome": rule,
                "knapsack_score": likelihood_score(&rule, &votes),
                "exact_estimate": exact,
                "recovered": est.allocation == model.ground_truth(),
            }));
            Ok(())
        }
        Command::Agreement {
            inputs,
            comparisons,
            methods,
        } => {
            let (election, ballots) = inputs.load()?;
            let mut matrix = ComparisonMatrix::from_ballots(&election, &ballots)?;
            if let Some(path) = comparisons {
                merge(&mut matrix, &read_json(&path)?)?;
            }
            let outcomes = methods
                .iter()
                .map(|&m| {
                    let o = tally(m, &ballots, &election, None)?;
                    Ok((m.to_string(), funded_projects(&o.allocation)))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let report = agreement_report(&matrix, &outcomes, &matrix.costs_in(&election)?)?;
            emit(&json!({
                "report": report,
                "majority_order": matrix.majority_order(),
            }));
            Ok(())
        }
        Command::Pairs {
            config,
            voter,
            count,
            seed,
        } => {
            let election = Election::new(read_json::<ElectionConfig>(&config)?)?;
            let ids = ComparisonMatrix::for_election(&election).projects().to_vec();
            let pairs: Vec<[ProjectId; 2]> = assign_pairs(&ids, &voter, count, seed)?
                .into_iter()
                .map(|(a, b)| [a, b])
                .collect();
            emit(&json!({ "voter": voter, "seed": seed, "pairs": pairs }));
            Ok(())
        }
        Command::Serve { data_dir, bind } => {
            tracing_subscriber::fmt()
                .with_writer(std::io::stderr)
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| "info".into()),
                )
                .init();
            let mut config = pbvote_service::ServiceConfig::from_env();
            if let Some(d) = data_dir {
                config.data_dir = d;
            }
            if let Some(b) = bind {
                config.bind_addr = b;
            }
            let rt = tokio::runtime::Runtime::new().map_err(|source| CliError::Io {
                path: PathBuf::from("<runtime>"),
                source,
            })?;
            rt.block_on(pbvote_service::run(config))?;
            Ok(())
        }
        Command::Gen {
            voters,
            seed,
            projects,
            pairs,
            approval_limit,
            ranking_length,
            formats,
            out,
        } => {
            let opts = SynthOptions {
                voters,
                projects,
                pairs,
                approval_limit,
                ranking_length,
                seed,
                ..SynthOptions::default()
            };
            let mut profile = generate(&opts)?;
            if let Some(keep) = formats {
                profile
                    .ballots
                    .retain(|b| keep.iter().any(|f| f == b.payload.format_name()));
            }
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir).map_err(|source| CliError::Io {
                        path: dir.clone(),
                        source,
                    })?;
                    let config = dir.join("config.json");
                    let ballots = dir.join("ballots.jsonl");
                    let mut cfg = serde_json::to_string_pretty(&profile.config).expect("config");
                    cfg.push('\n');
                    write(&config, &cfg)?;
                    let lines: String = profile
                        .ballots
                        .iter()
                        .map(|b| serde_json::to_string(b).expect("ballot") + "\n")
                        .collect();
                    write(&ballots, &lines)?;
                    emit(&json!({
                        "config": config,
                        "ballots": ballots,
                        "ballot_count": profile.ballots.len(),
                    }));
                }
                None => emit(&profile),
            }
            Ok(())
        }
        Command::Analyze { inputs, tsv } => {
            let (election, ballots) = inputs.load()?;
            let report = pipeline(&ballots, &election)?;
            match tsv {
                None => emit(&report),
                Some(Table::Curve) => out(&report.curve.to_tsv()),
                Some(Table::WinningCost) => {
                    let mut table = String::from("method\tballots\taverage_winning_cost\n");
                    for m in &report.methods {
                        let cost = m.average_winning_cost.map_or(String::new(), |c| format!("{c:.6}"));
                        table += &format!("{}\t{}\t{}\n", m.method, m.ballots, cost);
                    }
                    out(&table);
                }
            }
            Ok(())
        }
    }
}

fn merge(into: &mut ComparisonMatrix, extra: &ComparisonMatrix) -> Result<(), CliError> {
    for a in extra.projects() {
        for b in extra.projects() {
            let n = extra.count_by_id(a.as_str(), b.as_str()).unwrap_or(0);
            for _ in 0..n {
                into.record_comparison([a, b], a)?;
            }
        }
    }
    Ok(())
}

/// Prints the report and fails the command when `passed` is false.
fn conclude(theorem: &str, passed: bool, report: Value) -> Result<(), CliError> {
    emit(&json!({ "theorem": theorem, "passed": passed, "report": report }));
    if passed {
        Ok(())
    } else {
        Err(CliError::CheckFailed)
    }
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("serializable report")
}

fn verify(args: VerifyArgs) -> Result<(), CliError> {
    let VerifyArgs {
        theorem,
        trials,
        seed,
        limit,
        max_cost,
        domination,
        samples,
    } = args;
    let domination = match domination {
        DominationArg::Strict => Domination::Strict,
        DominationArg::Weak => Domination::Weak,
    };
    match theorem {
        Theorem::StrategyProof => {
            let shape = InstanceShape::fixed(max_cost.unwrap_or(12));
            let r = verify_strategyproofness(shape, trials.unwrap_or(200), seed, limit)?;
            conclude("1", r.passed(), to_value(&r))
        }
        Theorem::Welfare => {
            let shape = InstanceShape::fixed(max_cost.unwrap_or(12));
            let r = verify_welfare_suite(shape, trials.unwrap_or(100), seed, limit)?;
            conclude("2", r.failures.is_empty(), to_value(&r))
        }
        Theorem::Balanced => {
            let shape = InstanceShape::balanced(max_cost.unwrap_or(10));
            let r = verify_strategyproofness(shape, trials.unwrap_or(100), seed, limit)?;
            conclude("3", r.passed(), to_value(&r))
        }
        Theorem::Deficit => {
            let shape = InstanceShape {
                mode: BudgetMode::DeficitAugmented,
                ..InstanceShape::balanced(max_cost.unwrap_or(8))
            };
            let r = verify_strategyproofness(shape, trials.unwrap_or(100), seed, limit)?;
            conclude("deficit", r.passed(), to_value(&r))
        }
        Theorem::Partial => {
            let suite =
                verify_partial_suite(max_cost.unwrap_or(12), trials.unwrap_or(100), seed, domination, limit)?;
            let example = kapproval_counterexample();
            let br = best_response(&example, Rule::KApproval { k: 2 }, limit)?;
            let pinned = verify_partial_strategyproofness(
                &knapsack_partial_counterexample(),
                Rule::Knapsack,
                domination,
                limit,
            )?;
            let cd_best = contains_set(&br.argmax, &["c", "d"]);
            let all_exclude_a = br.argmax.iter().all(|v| v.get("a") == 0);
            conclude(
                "4",
                suite.failures.is_empty() && cd_best && all_exclude_a,
                json!({
                    "suite": suite,
                    "kapproval_example": {
                        "best_utility": pbvote_core::strategy::format_value(br.utility),
                        "sincere_utility": pbvote_core::strategy::format_value(br.sincere_utility),
                        "argmax": br.argmax,
                        "c_d_is_best": cd_best,
                        "every_best_response_excludes_a": all_exclude_a,
                    },
                    "pinned_knapsack_instance": pinned,
                }),
            )
        }
        Theorem::Group => {
            let d = group_manipulation_demo()?;
            let passed = d.sincere_outcome.iter().filter(|(_, w)| *w > 0).count() == 1
                && d.sincere_outcome.get("a") == 2
                && d.coalition_outcome.get("b") == 1
                && d.coalition_outcome.get("d") == 1;
            conclude("group", passed, to_value(&d))
        }
        Theorem::Integral => {
            let demo = integral_demo()?;
            let bound = verify_integral_bound(trials.unwrap_or(100), seed, limit)?;
            let ids = |v: &[ProjectId]| v.iter().map(|p| p.as_str().to_owned()).collect::<Vec<_>>();
            let passed = ids(&demo.sincere_outcome) == ["a", "b"]
                && ids(&demo.deviation_outcome) == ["a", "c"]
                && bound.violations.is_empty();
            conclude("integral", passed, json!({ "demo": demo, "bound": bound }))
        }
        Theorem::Mle => {
            let profiles = trials.unwrap_or(500);
            let votes = samples.unwrap_or(9);
            let cost = max_cost.unwrap_or(10);
            let eq = verify_mle_equivalence(profiles, votes, cost, seed, limit)?;
            let model = NoiseModel::new(
                Election::new(ElectionConfig::fixed(
                    vec![
                        pbvote_core::ProjectSpec::new("a", 2),
                        pbvote_core::ProjectSpec::new("b", 2),
                    ],
                    2,
                ))?,
                &[("a", 1), ("b", 1)].into_iter().collect(),
                limit,
            )?;
            let ratio = probability_ratio(&model, 100_000, seed);
            let recovery = verify_recovery(200, 200, cost, seed, limit)?;
            conclude(
                "mle",
                eq.mismatches.is_empty() && ratio.relative_error < 0.05,
                json!({ "equivalence": eq, "ratio": ratio, "recovery": recovery }),
            )
        }
        Theorem::Identity => {
            let r = verify_overlap_identity(trials.unwrap_or(10_000), max_cost.unwrap_or(12), seed, limit)?;
            conclude("identity", r.failures.is_empty(), to_value(&r))
        }
        Theorem::CostBias => {
            let opts = SynthOptions {
                voters: samples.unwrap_or(300),
                seed,
                ..SynthOptions::default()
            };
            let r = cost_bias_study(&opts, trials.unwrap_or(40))?;
            conclude("cost-bias", r.direction_holds(), to_value(&r))
        }
    }
}

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use embleak_core::io::{load_embeddings, save_set, EmbeddingSet, Format};
use embleak_core::pipeline::sweep::write_report;
use embleak_core::pipeline::{
    collect, export_report, run_attack, CrossDomainConfig, InDomainExperiment, Judger, ObservationLog, RankPolicy,
    Solver,
};
use embleak_core::{
    fit_basis, synth_population, AttackReport, DisplayMode, Embedding, Metric, Oracle, OracleConfig, PopulationSpec,
    SolveOptions, SvdBasis,
};

#[derive(Parser)]
#[command(name = "embleak", version, about = "Recover embeddings from distances leaked by an authentication system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulated authentication system.
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Recovery attacks and sweeps.
    #[command(subcommand)]
    Attack(AttackCmd),
    /// Synthetic embedding populations.
    #[command(subcommand)]
    Population(PopulationCmd),
    /// Low-rank bases from auxiliary embeddings.
    #[command(subcommand)]
    Basis(BasisCmd),
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Create an empty oracle state file.
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "cosine")]
        metric: Metric,
        #[arg(long, default_value_t = 0.63)]
        threshold: f64,
        /// raw, one-minus or percent.
        #[arg(long, default_value = "one-minus")]
        display: DisplayMode,
        #[arg(long, default_value_t = 4)]
        decimals: u32,
        /// Standard deviation of Gaussian noise added to each true distance.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Enroll embeddings from a CSV or JSONL file.
    Enroll {
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Id for a single-row file; otherwise the file's ids are used.
        #[arg(long)]
        id: Option<String>,
    },
    /// Present each probe in a file as the claimed identity.
    Auth {
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        probes: PathBuf,
    },
    /// Print the attempt log as JSONL.
    Transcript {
        #[arg(long)]
        oracle: PathBuf,
    },
}

#[derive(Subcommand)]
enum AttackCmd {
    /// Attack one enrolled identity through the oracle.
    Run(RunArgs),
    /// Sweep observation counts on a synthetic same-domain population.
    Sweep(SweepArgs),
    /// Sweep observation counts with distances borrowed from another model.
    Crossdomain(CrossArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    oracle: PathBuf,
    #[arg(long)]
    victim: String,
    #[arg(long)]
    probes: PathBuf,
    /// exact-l2, exact-cos, reduced-l2 or reduced-cos.
    #[arg(long)]
    solver: Solver,
    #[arg(long)]
    basis: Option<PathBuf>,
    /// Number of probes to solve with; defaults to the dimension (exact) or
    /// all but one (reduced). One further probe, when available, breaks ties.
    #[arg(long)]
    count: Option<usize>,
    /// Ground truth, for scoring only.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write the recovered embedding here (CSV or JSONL by extension).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the quadratic's vertex when noise makes the discriminant negative.
    #[arg(long)]
    lenient: bool,
    /// Metric of the verifier that scores the recovery against --truth.
    #[arg(long, default_value = "cosine")]
    judge_metric: Metric,
    #[arg(long, default_value_t = 0.63)]
    judge_threshold: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "33,40,53,80")]
    counts: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    victims: usize,
    /// Basis rank; with --proportional, the largest rank used.
    #[arg(long, default_value_t = 33)]
    rank: usize,
    /// Use rank ⌊m/2⌋ for m observations instead of a fixed rank.
    #[arg(long)]
    proportional: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CrossArgs {
    /// JSON experiment description; see --print-config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the built-in configuration (ignored with --config).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the built-in configuration as JSON and exit.
    #[arg(long)]
    print_config: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PopulationCmd {
    /// Draw a low-rank synthetic population.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 33)]
        rank: usize,
        #[arg(long, default_value_t = 0.0088)]
        noise: f64,
        #[arg(long, default_value_t = 0.96)]
        decay: f64,
        /// Skip the first `skip` members, so disjoint sets can share a seed.
        #[arg(long, default_value_t = 0)]
        skip: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum BasisCmd {
    /// Truncated uncentered SVD of the embeddings in a file.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_set(path: &Path) -> Result<EmbeddingSet> {
    Ok(load_embeddings(path, Format::from_path(path))?)
}

fn load_oracle(path: &Path) -> Result<Oracle> {
    Oracle::load(path).with_context(|| format!("loading oracle {}", path.display()))
}

fn oracle_cmd(cmd: OracleCmd) -> Result<()> {
    match cmd {
        OracleCmd::Init {
            out,
            metric,
            threshold,
            display,
            decimals,
            noise,
            seed,
        } => {
            let config = OracleConfig::new(metric, threshold, display, decimals)?.with_noise(noise, seed);
            Oracle::new(config)?.save(&out)?;
        }
        OracleCmd::Enroll { oracle, embeddings, id } => {
            let mut o = load_oracle(&oracle)?;
            let set = load_set(&embeddings)?;
            match id {
                Some(id) if set.len() == 1 => o.enroll(id, set.embeddings[0].clone())?,
                Some(_) => bail!("--id needs a single-row file, got {} rows", set.len()),
                None => {
                    for (id, e) in set.ids.into_iter().zip(set.embeddings) {
                        o.enroll(id, e)?;
                    }
                }
            }
            o.save(&oracle)?;
        }
        OracleCmd::Auth { oracle, id, probes } => {
            let o = load_oracle(&oracle)?;
            let set = load_set(&probes)?;
            let mut stdout = io::stdout().lock();
            for (pid, p) in set.ids.iter().zip(&set.embeddings) {
                let r = o.authenticate(&id, pid, p)?;
                writeln!(stdout, "{}", serde_json::to_string(&r)?)?;
            }
            o.save(&oracle)?;
        }
        OracleCmd::Transcript { oracle } => {
            print!("{}", load_oracle(&oracle)?.transcript_jsonl()?);
        }
    }
    Ok(())
}

fn attack_run(args: RunArgs) -> Result<()> {
    let oracle = load_oracle(&args.oracle)?;
    let set = load_set(&args.probes)?;
    let basis = args.basis.as_deref().map(SvdBasis::load_json).transpose()?;
    if args.solver.needs_basis() && basis.is_none() {
        bail!("{} needs --basis", args.solver);
    }
    let m = args.count.unwrap_or(match args.solver {
        Solver::ExactL2 | Solver::ExactCosine => set.dim,
        _ => set.len().saturating_sub(1).max(1),
    });
    if m > set.len() {
        bail!("--count {m} exceeds the {} probes in {}", set.len(), args.probes.display());
    }
    let take = (m + 1).min(set.len());
    let probes: Vec<(String, Embedding)> = set.ids.into_iter().zip(set.embeddings).take(take).collect();
    let log: ObservationLog = collect(&oracle, &args.victim, &probes)?;
    oracle.save(&args.oracle)?;

    let opts = if args.lenient {
        SolveOptions::lenient()
    } else {
        SolveOptions::default()
    };
    let recovery = run_attack(&log.prefix(m), args.solver, basis.as_ref(), log.entries.get(m), opts)?;
    if let Some(out) = &args.out {
        let mut rec = EmbeddingSet::from_embeddings(vec![recovery.recovered.clone()], Some(oracle.config().metric))?;
        rec.ids = vec![args.victim.clone()];
        save_set(out, &rec, Format::from_path(out))?;
    }
    let json = match &args.truth {
        Some(path) => {
            let truth = load_set(path)?;
            let Some(t) = truth.embeddings.first() else {
                bail!("{} is empty", path.display());
            };
            let judger = Judger::new(args.judge_metric, args.judge_threshold);
            serde_json::to_string_pretty(&AttackReport::evaluate(recovery, t, &judger)?)?
        }
        None => serde_json::to_string_pretty(&recovery)?,
    };
    println!("{json}");
    Ok(())
}

fn emit(result: &embleak_core::SweepResult, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => export_report(result, path)?,
        None => write_report(io::stdout().lock(), result)?,
    }
    Ok(())
}

fn attack_cmd(cmd: AttackCmd) -> Result<()> {
    match cmd {
        AttackCmd::Run(args) => attack_run(args)?,
        AttackCmd::Sweep(args) => {
            let mut exp = InDomainExperiment::facenet128_like(args.seed, args.counts);
            exp.victim_count = args.victims;
            exp.basis_rank = args.rank;
            if args.proportional {
                exp.sweep.rank_policy = RankPolicy::Proportional {
                    ratio: 0.5,
                    max: args.rank,
                };
            }
            let max = exp.sweep.counts.iter().copied().max().unwrap_or(0);
            exp.probe_count = exp.probe_count.max(max + 1);
            emit(&exp.run()?, args.out.as_deref())?;
        }
        AttackCmd::Crossdomain(args) => {
            let config = match &args.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => CrossDomainConfig::default_with_seed(args.seed),
            };
            if args.print_config {
                println!("{}", serde_json::to_string_pretty(&config)?);
                return Ok(());
            }
            let outcome = config.run()?;
            eprintln!(
                "calibration: gain {:.6} offset {:.6} rmse {:.6}",
                outcome.calibration.gain, outcome.calibration.offset, outcome.calibration.rmse
            );
            emit(&outcome.sweep, args.out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Oracle(cmd) => oracle_cmd(cmd),
        Command::Attack(cmd) => attack_cmd(cmd),
        Command::Population(PopulationCmd::Synth {
            count,
            seed,
            dim,
            rank,
            noise,
            decay,
            skip,
            out,
        }) => {
            let mut spec = PopulationSpec::new(count + skip, dim, rank, noise, seed);
            spec.spectrum_decay = decay;
            let members = synth_population(&spec)?;
            let mut set = EmbeddingSet::from_embeddings(members[skip..].to_vec(), None)?;
            set.ids = (skip..skip + count).map(|i| format!("member-{i}")).collect();
            save_set(&out, &set, Format::from_path(&out))?;
            Ok(())
        }
        Command::Basis(BasisCmd::Fit { input, rank, out }) => {
            let set = load_set(&input)?;
            fit_basis(&set.embeddings, rank)?.save_json(&out)?;
            Ok(())
        }
    }
}

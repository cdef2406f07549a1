use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::exact::SolveOptions;
use crate::io::fmt_f64;
use crate::oracle::Oracle;
use crate::pipeline::attack::{run_attack, AttackReport, Judger, Solver};
use crate::pipeline::observation::{collect, ObservationLog};
use crate::subspace::SvdBasis;

/// How many basis components a reduced solve uses for `m` observations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RankPolicy {
    /// The basis as given; requires `m ≥ rank`.
    Fixed,
    /// `clamp(floor(ratio·m), 1, max)`, also capped by the basis rank. More
    /// observations buy more principal components.
    Proportional { ratio: f64, max: usize },
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::Fixed
    }
}

impl RankPolicy {
    pub fn rank_for(self, m: usize, basis_rank: usize) -> usize {
        match self {
            RankPolicy::Fixed => basis_rank,
            RankPolicy::Proportional { ratio, max } => {
                let r = (ratio * m as f64).floor() as usize;
                r.clamp(1, max.min(basis_rank).max(1))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub counts: Vec<usize>,
    pub solver: Solver,
    #[serde(default)]
    pub rank_policy: RankPolicy,
    #[serde(default)]
    pub judger: Judger,
    /// Use the observation right after the first `m` to pick between two
    /// candidates.
    #[serde(default = "yes")]
    pub disambiguate_with_next: bool,
    /// Fall back to the quadratic's vertex when quantization or noise makes
    /// the discriminant negative.
    #[serde(default = "yes")]
    pub lenient: bool,
}

fn yes() -> bool {
    true
}

impl SweepConfig {
    pub fn new(counts: Vec<usize>, solver: Solver) -> Self {
        Self {
            counts,
            solver,
            rank_policy: RankPolicy::Fixed,
            judger: Judger::default(),
            disambiguate_with_next: true,
            lenient: true,
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        if self.lenient {
            SolveOptions::lenient()
        } else {
            SolveOptions::default()
        }
    }

    fn observations_needed(&self) -> usize {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        if self.disambiguate_with_next {
            max + 1
        } else {
            max
        }
    }
}

/// Median error and judger acceptance rate per observation count.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub counts: Vec<usize>,
    pub median_errors: Vec<f64>,
    pub acceptance_rates: Vec<f64>,
}

impl SweepResult {
    pub fn argmin(&self) -> Option<usize> {
        self.median_errors
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }

    pub fn is_non_increasing(&self) -> bool {
        self.median_errors.windows(2).all(|w| w[1] <= w[0])
    }

    /// Lower median error never comes with a lower acceptance rate.
    pub fn acceptance_tracks_error(&self) -> bool {
        let n = self.counts.len();
        (0..n).all(|i| {
            (0..n).all(|j| !(self.median_errors[i] < self.median_errors[j]
                && self.acceptance_rates[i] < self.acceptance_rates[j]))
        })
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

fn validate(cfg: &SweepConfig, available: usize, basis: Option<&SvdBasis>) -> Result<()> {
    if let Some(&m) = cfg.counts.iter().find(|&&m| m == 0) {
        return Err(Error::Underdetermined {
            observations: m,
            rank: 1,
        });
    }
    let max = cfg.counts.iter().copied().max().unwrap_or(0);
    if max > available {
        return Err(Error::InvalidArgument(format!(
            "sweep needs {max} probes, only {available} available"
        )));
    }
    if cfg.solver.needs_basis() && basis.is_none() {
        return Err(Error::InvalidArgument(format!("{} needs a basis", cfg.solver)));
    }
    Ok(())
}

/// Runs the attack for every count against every victim's log.
///
/// Each log holds the victim's observations in probe order; count `m` uses
/// its first `m` entries. `truths` are only used for scoring.
pub fn sweep_logs(
    logs: &[ObservationLog],
    truths: &[Embedding],
    basis: Option<&SvdBasis>,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if logs.len() != truths.len() {
        return Err(Error::InvalidArgument("one truth per log required".into()));
    }
    let available = logs.iter().map(ObservationLog::len).min().unwrap_or(0);
    validate(cfg, available, basis)?;
    let opts = cfg.solve_options();

    let mut result = SweepResult::default();
    for &m in &cfg.counts {
        let truncated = match basis {
            Some(b) if cfg.solver.needs_basis() => Some(b.truncate(cfg.rank_policy.rank_for(m, b.rank()))?),
            _ => None,
        };
        let mut errors = Vec::with_capacity(logs.len());
        let mut accepted = 0usize;
        for (log, truth) in logs.iter().zip(truths) {
            let extra = if cfg.disambiguate_with_next {
                log.entries.get(m)
            } else {
                None
            };
            let recovery = run_attack(&log.prefix(m), cfg.solver, truncated.as_ref(), extra, opts)?;
            let report = AttackReport::evaluate(recovery, truth, &cfg.judger)?;
            errors.push(report.error_to_truth);
            accepted += usize::from(report.judger_accepted);
        }
        result.counts.push(m);
        result.median_errors.push(median(&errors));
        result.acceptance_rates.push(if logs.is_empty() {
            0.0
        } else {
            accepted as f64 / logs.len() as f64
        });
    }
    Ok(result)
}

/// Collects every victim's observations from the oracle, then sweeps.
/// `victims` pairs each enrolled id with its true embedding.
pub fn sweep(
    oracle: &Oracle,
    victims: &[(String, Embedding)],
    probe_pool: &[(String, Embedding)],
    basis: Option<&SvdBasis>,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    validate(cfg, probe_pool.len(), basis)?;
    let take = cfg.observations_needed().min(probe_pool.len());
    let mut logs = Vec::with_capacity(victims.len());
    let mut truths = Vec::with_capacity(victims.len());
    for (id, truth) in victims {
        logs.push(collect(oracle, id, &probe_pool[..take])?);
        truths.push(truth.clone());
    }
    sweep_logs(&logs, &truths, basis, cfg)
}

pub const REPORT_HEADER: &str = "m,median_error,acceptance_rate";

pub fn write_report<W: Write>(mut w: W, result: &SweepResult) -> Result<()> {
    let io = |e| Error::io("<report>", e);
    writeln!(w, "{REPORT_HEADER}").map_err(io)?;
    for i in 0..result.counts.len() {
        writeln!(
            w,
            "{},{},{}",
            result.counts[i],
            fmt_f64(result.median_errors[i]),
            fmt_f64(result.acceptance_rates[i])
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Writes the sweep as CSV, rows in the order the counts were given.
pub fn export_report(result: &SweepResult, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_report(&mut w, result)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report<R: BufRead>(r: R) -> Result<SweepResult> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io("<report>", e))?
        .unwrap_or_default();
    if header.trim() != REPORT_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{REPORT_HEADER}`"),
        });
    }
    let mut out = SweepResult::default();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io("<report>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Parse {
            line: i + 2,
            message: m.to_string(),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad("expected three fields"));
        }
        out.counts.push(fields[0].parse().map_err(|_| bad("bad m"))?);
        out.median_errors.push(fields[1].parse().map_err(|_| bad("bad median_error"))?);
        out.acceptance_rates.push(fields[2].parse().map_err(|_| bad("bad acceptance_rate"))?);
    }
    Ok(out)
}

pub fn load_report(path: &Path) -> Result<SweepResult> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_report(BufReader::new(file))
}

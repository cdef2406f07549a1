use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{distance, Embedding, Metric};
use crate::error::{Error, Result};
use crate::exact::{
    build_l2_system_opts, cosine_recover_opts, disambiguate, l2_recover_with, RecoveryCandidates, SolveOptions,
};
use crate::pipeline::observation::{Observation, ObservationLog};
use crate::subspace::{reduced_cosine_recover_opts, reduced_l2_recover_with, ReducedRecoveryDiagnostics, SvdBasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    ExactL2,
    ExactCosine,
    ReducedL2,
    ReducedCosine,
    /// Reduced L2 in the attacker's domain with distances borrowed from
    /// another model.
    CrossDomain,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::ExactL2 => "exact-l2",
            Solver::ExactCosine => "exact-cos",
            Solver::ReducedL2 => "reduced-l2",
            Solver::ReducedCosine => "reduced-cos",
            Solver::CrossDomain => "cross-domain",
        }
    }

    pub fn needs_basis(self) -> bool {
        matches!(self, Solver::ReducedL2 | Solver::ReducedCosine | Solver::CrossDomain)
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-l2" => Ok(Solver::ExactL2),
            "exact-cos" | "exact-cosine" => Ok(Solver::ExactCosine),
            "reduced-l2" => Ok(Solver::ReducedL2),
            "reduced-cos" | "reduced-cosine" => Ok(Solver::ReducedCosine),
            "cross-domain" | "crossdomain" => Ok(Solver::CrossDomain),
            other => Err(Error::InvalidArgument(format!("unknown solver `{other}`"))),
        }
    }
}

/// Independent verifier deciding whether a recovered embedding passes as the victim.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Judger {
    pub metric: Metric,
    pub threshold: f64,
}

impl Default for Judger {
    /// Cosine at 0.63, the facenet-512 operating point.
    fn default() -> Self {
        Self {
            metric: Metric::Cosine,
            threshold: 0.63,
        }
    }
}

impl Judger {
    pub fn new(metric: Metric, threshold: f64) -> Self {
        Self { metric, threshold }
    }

    /// `(distance, accepted)`.
    pub fn judge(&self, recovered: &Embedding, truth: &Embedding) -> Result<(f64, bool)> {
        let d = distance(recovered, truth, self.metric)?;
        Ok((d, d <= self.threshold))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AttackDiagnostics {
    pub candidate_count: usize,
    /// Two candidates survived and no extra observation separated them.
    pub ambiguous: bool,
    pub disambiguation_margin: Option<f64>,
    /// Relative sphere-equation residual of the chosen candidate (L2 solvers).
    pub residual: Option<f64>,
    pub condition: Option<f64>,
    /// The norm quadratic had no real root and its vertex was used.
    pub quadratic_clamped: bool,
    pub rank: Option<usize>,
    pub reduced: Option<ReducedRecoveryDiagnostics>,
}

/// What the attacker ends up with; no ground truth involved.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Recovery {
    pub recovered: Embedding,
    pub solver: Solver,
    pub num_observations: usize,
    pub diagnostics: AttackDiagnostics,
}

/// A [`Recovery`] scored against the victim's true embedding.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackReport {
    pub recovered: Embedding,
    pub num_observations: usize,
    pub error_to_truth: f64,
    pub judger_distance: f64,
    pub judger_accepted: bool,
    pub judger_threshold: f64,
    pub solver: Solver,
    pub diagnostics: AttackDiagnostics,
}

impl AttackReport {
    /// Harness-side scoring. `error_to_truth` is the Euclidean distance.
    pub fn evaluate(recovery: Recovery, truth: &Embedding, judger: &Judger) -> Result<AttackReport> {
        let error_to_truth = distance(&recovery.recovered, truth, Metric::L2)?;
        let (judger_distance, judger_accepted) = judger.judge(&recovery.recovered, truth)?;
        Ok(AttackReport {
            recovered: recovery.recovered,
            num_observations: recovery.num_observations,
            error_to_truth,
            judger_distance,
            judger_accepted,
            judger_threshold: judger.threshold,
            solver: recovery.solver,
            diagnostics: recovery.diagnostics,
        })
    }
}

fn choose(
    cands: &RecoveryCandidates,
    extra: Option<&Observation>,
    extra_metric: Metric,
    diag: &mut AttackDiagnostics,
) -> Result<Embedding> {
    diag.candidate_count = cands.candidates.len();
    diag.condition = Some(cands.condition_estimate);
    diag.quadratic_clamped = cands.quadratic.clamped;
    let mut index = cands.best_index();
    if cands.candidates.len() == 2 {
        diag.ambiguous = true;
        if let Some(obs) = extra {
            let sq = match extra_metric {
                Metric::L2 => obs.leaked_distance * obs.leaked_distance,
                _ => obs.leaked_distance,
            };
            if let Ok(pick) = disambiguate(cands, &obs.probe, sq) {
                index = pick.index;
                diag.ambiguous = false;
                diag.disambiguation_margin = Some(pick.margin);
            }
        }
    }
    diag.residual = Some(cands.residuals[index]);
    Ok(cands.candidates[index].clone())
}

/// Solves for the victim's embedding from the attacker's observations.
///
/// With two candidates, `extra` (an observation not in `log`) picks between
/// them; without it, or if it does not separate them, the smaller-residual
/// candidate is returned and the report is flagged ambiguous.
pub fn run_attack(
    log: &ObservationLog,
    solver: Solver,
    basis: Option<&SvdBasis>,
    extra: Option<&Observation>,
    opts: SolveOptions,
) -> Result<Recovery> {
    let m = log.len();
    if m == 0 {
        return Err(Error::Underdetermined {
            observations: 0,
            rank: 1,
        });
    }
    let probes = log.probes();
    let dim = probes[0].dim();
    let mut diag = AttackDiagnostics::default();
    let wrap = |e: Error| e.context(format!("{solver} with {m} observations"));

    let recovered = match solver {
        Solver::ExactL2 => {
            if m != dim {
                return Err(Error::CountMismatch { count: m, dim });
            }
            let sq = log.squared_distances()?;
            let ids = log.entries.iter().map(|o| o.probe_id.clone()).collect();
            let sys = build_l2_system_opts(&probes, &sq, ids, opts.rcond).map_err(wrap)?;
            let cands = l2_recover_with(&sys, opts.policy).map_err(wrap)?;
            diag.rank = Some(dim);
            choose(&cands, extra, log.metric, &mut diag)?
        }
        Solver::ReducedL2 | Solver::CrossDomain => {
            let basis = basis.ok_or_else(|| Error::InvalidArgument(format!("{solver} needs a basis")))?;
            let sq = log.squared_distances()?;
            let r = reduced_l2_recover_with(&probes, &sq, basis, opts).map_err(wrap)?;
            diag.rank = Some(basis.rank());
            let x = choose(&r.candidates, extra, log.metric, &mut diag)?;
            diag.reduced = Some(r.diagnostics);
            x
        }
        Solver::ExactCosine => {
            require_cosine(log)?;
            diag.candidate_count = 1;
            diag.rank = Some(dim);
            cosine_recover_opts(&probes, &log.distances(), opts.rcond).map_err(wrap)?
        }
        Solver::ReducedCosine => {
            require_cosine(log)?;
            let basis = basis.ok_or_else(|| Error::InvalidArgument(format!("{solver} needs a basis")))?;
            diag.candidate_count = 1;
            diag.rank = Some(basis.rank());
            reduced_cosine_recover_opts(&probes, &log.distances(), basis, opts.rcond).map_err(wrap)?
        }
    };
    Ok(Recovery {
        recovered,
        solver,
        num_observations: m,
        diagnostics: diag,
    })
}

fn require_cosine(log: &ObservationLog) -> Result<()> {
    if log.metric != Metric::Cosine {
        return Err(Error::InvalidArgument(format!(
            "cosine solver given {} observations",
            log.metric
        )));
    }
    Ok(())
}

use serde::{Deserialize, Serialize};

use crate::embedding::{Embedding, Metric};
use crate::error::{Error, Result};
use crate::oracle::{DisplayMode, Oracle, OracleConfig};
use crate::pipeline::attack::{Judger, Solver};
use crate::pipeline::sweep::{sweep, RankPolicy, SweepConfig, SweepResult};
use crate::population::{synth_population, PopulationSpec};
use crate::subspace::{fit_basis, SvdBasis};

/// A same-domain experiment on a synthetic population.
///
/// The population is split, in order, into auxiliary samples (basis
/// training), victims (enrolled in the oracle) and probes (presented as each
/// victim). `population.count` is ignored; the split sizes decide it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InDomainExperiment {
    pub population: PopulationSpec,
    pub aux_count: usize,
    pub victim_count: usize,
    pub probe_count: usize,
    /// Rank of the fitted basis; ignored by the exact solvers.
    pub basis_rank: usize,
    pub oracle: OracleConfig,
    pub sweep: SweepConfig,
}

/// The pieces of an experiment after sampling, for callers that want to
/// drive the attack themselves.
#[derive(Debug)]
pub struct Prepared {
    pub oracle: Oracle,
    pub victims: Vec<(String, Embedding)>,
    pub probes: Vec<(String, Embedding)>,
    pub aux: Vec<Embedding>,
    pub basis: Option<SvdBasis>,
}

impl InDomainExperiment {
    /// Facenet-128-like population behind an L2 oracle that shows raw
    /// distances at full precision; reduced L2 at fixed rank 33.
    pub fn facenet128_like(seed: u64, counts: Vec<usize>) -> Self {
        let mut sweep = SweepConfig::new(counts, Solver::ReducedL2);
        sweep.judger = Judger::new(Metric::L2, 1.2);
        Self {
            population: PopulationSpec::facenet128_like(0, seed),
            aux_count: 300,
            victim_count: 100,
            probe_count: 129,
            basis_rank: 33,
            oracle: OracleConfig::new(Metric::L2, 1.2, DisplayMode::RawDistance, 17).expect("valid preset"),
            sweep,
        }
    }

    /// Same population, but the basis rank grows with the number of
    /// observations (half of `m`, at most 64).
    pub fn facenet128_proportional(seed: u64, counts: Vec<usize>) -> Self {
        let mut e = Self::facenet128_like(seed, counts);
        e.basis_rank = 64;
        e.sweep.rank_policy = RankPolicy::Proportional { ratio: 0.5, max: 64 };
        e
    }

    pub fn prepare(&self) -> Result<Prepared> {
        let mut spec = self.population.clone();
        spec.count = self.aux_count + self.victim_count + self.probe_count;
        let pop = synth_population(&spec)?;
        let (aux, rest) = pop.split_at(self.aux_count);
        let (victims, probes) = rest.split_at(self.victim_count);

        let basis = if self.sweep.solver.needs_basis() {
            if aux.is_empty() {
                return Err(Error::InvalidArgument("reduced solvers need auxiliary samples".into()));
            }
            Some(fit_basis(aux, self.basis_rank.min(aux.len()).min(spec.ambient_dim))?)
        } else {
            None
        };

        let mut oracle = Oracle::new(self.oracle.clone())?;
        let victims: Vec<(String, Embedding)> = victims
            .iter()
            .enumerate()
            .map(|(i, e)| (format!("victim-{i}"), e.clone()))
            .collect();
        for (id, e) in &victims {
            oracle.enroll(id.clone(), e.clone())?;
        }
        let probes = probes
            .iter()
            .enumerate()
            .map(|(i, e)| (format!("probe-{i}"), e.clone()))
            .collect();
        Ok(Prepared {
            oracle,
            victims,
            probes,
            aux: aux.to_vec(),
            basis,
        })
    }

    pub fn run(&self) -> Result<SweepResult> {
        let p = self.prepare()?;
        sweep(&p.oracle, &p.victims, &p.probes, p.basis.as_ref(), &self.sweep)
    }
}

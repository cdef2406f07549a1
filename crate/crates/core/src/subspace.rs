//! Recovery from fewer observations than dimensions, using a truncated SVD
//! basis fitted on auxiliary embeddings.
//!
//! Writing the unknown as `x = V_r·y + δ` with `V_r` orthonormal, the sphere
//! system becomes `yᵀy + (A·V_r)·y + D + Δ = 0`. Dropping `Δ`, it has the same
//! structure as the exact system in `r` unknowns; with `m ≥ r` observations
//! the pseudo-inverse of `A·V_r` replaces the inverse and the norm quadratic
//! again yields at most two candidates.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::exact::{
    candidates_from_pinv, cosine_linearize, direction_from, linearize, probe_matrix, RecoveryCandidates,
    SolveOptions,
};
use crate::linalg::{ones, pseudo_inverse, thin_svd};

/// Truncated right-singular basis of an uncentered sample matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdBasis {
    vectors: DMatrix<f64>,
    sigma: Vec<f64>,
    training_count: usize,
    /// Singular values beyond the kept rank, descending.
    tail: Vec<f64>,
}

impl SvdBasis {
    /// `n × r`, orthonormal columns.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn rank(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn training_count(&self) -> usize {
        self.training_count
    }

    /// RMS norm of the training samples' residual off the basis, a proxy for `|δ|`.
    pub fn truncation_rms(&self) -> f64 {
        if self.training_count == 0 {
            return 0.0;
        }
        let energy: f64 = self.tail.iter().map(|s| s * s).sum();
        (energy / self.training_count as f64).sqrt()
    }

    /// The leading `rank` columns. Truncated SVD bases are nested.
    pub fn truncate(&self, rank: usize) -> Result<SvdBasis> {
        if rank == 0 || rank > self.rank() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate rank-{} basis to {rank}",
                self.rank()
            )));
        }
        let mut tail = self.sigma[rank..].to_vec();
        tail.extend_from_slice(&self.tail);
        Ok(SvdBasis {
            vectors: self.vectors.columns(0, rank).into_owned(),
            sigma: self.sigma[..rank].to_vec(),
            training_count: self.training_count,
            tail,
        })
    }

    /// Coordinates `V_rᵀ·e`.
    pub fn coordinates(&self, e: &Embedding) -> Result<DVector<f64>> {
        e.check_dim(self.ambient_dim())?;
        Ok(self.vectors.tr_mul(&e.to_dvector()))
    }

    pub fn project(&self, e: &Embedding) -> Result<Embedding> {
        let y = self.coordinates(e)?;
        Embedding::from_dvector(&(&self.vectors * y))
    }

    /// `|e - V_r·V_rᵀ·e|`.
    pub fn reconstruction_error(&self, e: &Embedding) -> Result<f64> {
        let y = self.coordinates(e)?;
        Ok((e.to_dvector() - &self.vectors * y).norm())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&BasisFile::from(self))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<SvdBasis> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&BasisFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<SvdBasis> {
        let file: BasisFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// On-disk layout of a basis: `vectors` is `V_r` in row-major order.
#[derive(Serialize, Deserialize)]
struct BasisFile {
    ambient_dim: usize,
    rank: usize,
    training_count: usize,
    vectors: Vec<f64>,
    sigma: Vec<f64>,
    #[serde(default)]
    tail: Vec<f64>,
}

impl From<&SvdBasis> for BasisFile {
    fn from(b: &SvdBasis) -> Self {
        let vectors = b.vectors.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
        BasisFile {
            ambient_dim: b.ambient_dim(),
            rank: b.rank(),
            training_count: b.training_count,
            vectors,
            sigma: b.sigma.clone(),
            tail: b.tail.clone(),
        }
    }
}

impl TryFrom<BasisFile> for SvdBasis {
    type Error = Error;

    fn try_from(f: BasisFile) -> Result<SvdBasis> {
        if f.rank == 0 || f.vectors.len() != f.ambient_dim * f.rank || f.sigma.len() != f.rank {
            return Err(Error::InvalidArgument("basis file has inconsistent shapes".into()));
        }
        Ok(SvdBasis {
            vectors: DMatrix::from_row_slice(f.ambient_dim, f.rank, &f.vectors),
            sigma: f.sigma,
            training_count: f.training_count,
            tail: f.tail,
        })
    }
}

/// Truncated SVD of the samples stacked as rows, without centering.
/// Column signs are fixed so each column's largest-magnitude entry is positive.
pub fn fit_basis(samples: &[Embedding], rank: usize) -> Result<SvdBasis> {
    let n = samples.first().map_or(0, Embedding::dim);
    let max_rank = samples.len().min(n);
    if rank == 0 || rank > max_rank {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} outside 1..={max_rank} for {} samples of dim {n}",
            samples.len()
        )));
    }
    let m = probe_matrix(samples, n)?;
    let svd = thin_svd(&m);
    let mut vectors = svd.v.columns(0, rank).into_owned();
    for mut v in vectors.column_iter_mut() {
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.neg_mut();
        }
    }
    let sorted = svd.s;
    Ok(SvdBasis {
        vectors,
        sigma: sorted[..rank].to_vec(),
        training_count: samples.len(),
        tail: sorted[rank..].to_vec(),
    })
}

/// Mean PCA reconstruction error against rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankErrorCurve {
    pub ranks: Vec<usize>,
    pub mean_errors: Vec<f64>,
}

impl RankErrorCurve {
    /// Smallest listed rank whose error is below `level`.
    pub fn first_rank_below(&self, level: f64) -> Option<usize> {
        self.ranks
            .iter()
            .zip(&self.mean_errors)
            .find(|(_, e)| **e < level)
            .map(|(r, _)| *r)
    }
}

/// Fits one basis on `samples` and reports the mean distance between each
/// sample and its projection at every requested rank.
pub fn rank_error_curve(samples: &[Embedding], ranks: &[usize]) -> Result<RankErrorCurve> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("rank error curve needs samples".into()));
    }
    if ranks.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("ranks must be sorted ascending".into()));
    }
    let Some(&max_rank) = ranks.last() else {
        return Ok(RankErrorCurve {
            ranks: Vec::new(),
            mean_errors: Vec::new(),
        });
    };
    let full = fit_basis(samples, max_rank)?;
    let mut mean_errors = Vec::with_capacity(ranks.len());
    for &r in ranks {
        let basis = full.truncate(r)?;
        let total = samples
            .iter()
            .map(|s| basis.reconstruction_error(s))
            .sum::<Result<f64>>()?;
        mean_errors.push(total / samples.len() as f64);
    }
    Ok(RankErrorCurve {
        ranks: ranks.to_vec(),
        mean_errors,
    })
}

/// Error decomposition of a reduced recovery.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReducedRecoveryDiagnostics {
    /// `|δ|` proxy: RMS off-basis norm of the basis training samples.
    pub truncation_error_estimate: f64,
    /// `|Δ|` proxy: least-squares residual of the linearized system at the
    /// best candidate.
    pub equation_perturbation: f64,
    /// Relative sphere-equation residual of the best candidate.
    pub residual: f64,
    pub effective_rank: usize,
    pub condition: f64,
}

#[derive(Clone, Debug)]
pub struct ReducedRecovery {
    pub candidates: RecoveryCandidates,
    pub diagnostics: ReducedRecoveryDiagnostics,
}

fn check_arity(observations: usize, basis: &SvdBasis) -> Result<()> {
    if observations < basis.rank() {
        return Err(Error::Underdetermined {
            observations,
            rank: basis.rank(),
        });
    }
    Ok(())
}

pub fn reduced_l2_recover(probes: &[Embedding], sq_distances: &[f64], basis: &SvdBasis) -> Result<ReducedRecovery> {
    reduced_l2_recover_with(probes, sq_distances, basis, SolveOptions::default())
}

pub fn reduced_l2_recover_with(
    probes: &[Embedding],
    sq_distances: &[f64],
    basis: &SvdBasis,
    opts: SolveOptions,
) -> Result<ReducedRecovery> {
    check_arity(probes.len(), basis)?;
    let (a, d) = linearize(probes, sq_distances, basis.ambient_dim())?;
    let coef = a * basis.vectors();
    let pinv = pseudo_inverse(&coef, opts.rcond);
    if pinv.rank < basis.rank() {
        return Err(Error::RankDeficient {
            rank: pinv.rank,
            required: basis.rank(),
            condition: pinv.condition,
        });
    }
    let candidates = candidates_from_pinv(&pinv, &d, Some(basis.vectors()), probes, sq_distances, opts.policy)?;

    let best = candidates.best_index();
    let z = candidates.roots_z[best];
    let y = basis.coordinates(&candidates.candidates[best])?;
    let equation_perturbation = (&coef * y + &d + ones(d.len()) * z).norm();
    let diagnostics = ReducedRecoveryDiagnostics {
        truncation_error_estimate: basis.truncation_rms(),
        equation_perturbation,
        residual: candidates.residuals[best],
        effective_rank: pinv.rank,
        condition: pinv.condition,
    };
    Ok(ReducedRecovery {
        candidates,
        diagnostics,
    })
}

/// Least-squares direction within the basis span from `m ≥ r` cosine distances.
pub fn reduced_cosine_recover(probes: &[Embedding], cos_distances: &[f64], basis: &SvdBasis) -> Result<Embedding> {
    reduced_cosine_recover_opts(probes, cos_distances, basis, SolveOptions::default().rcond)
}

pub fn reduced_cosine_recover_opts(
    probes: &[Embedding],
    cos_distances: &[f64],
    basis: &SvdBasis,
    rcond: f64,
) -> Result<Embedding> {
    check_arity(probes.len(), basis)?;
    let (a, d) = cosine_linearize(probes, cos_distances, basis.ambient_dim())?;
    let coef = a * basis.vectors();
    let pinv = pseudo_inverse(&coef, rcond);
    if pinv.rank < basis.rank() {
        return Err(Error::RankDeficient {
            rank: pinv.rank,
            required: basis.rank(),
            condition: pinv.condition,
        });
    }
    let y = &pinv.matrix * d;
    direction_from(&(basis.vectors() * y))
}

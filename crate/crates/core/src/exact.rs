//! Exact recovery of an embedding from as many distance observations as it
//! has dimensions.
//!
//! For squared-L2 observations `|x - pᵢ|² = dᵢ²`, expanding each sphere gives
//! the system `xᵀx + A·x + D = 0` with `A = -2·[p₁ … pₙ]ᵀ` and
//! `Dᵢ = pᵢᵀpᵢ - dᵢ²`. Replacing `xᵀx` by a scalar `z` makes it linear,
//! `x(z) = -A⁻¹(D + z·1)`, and requiring `z = x(z)ᵀx(z)` leaves a quadratic
//! `a·z² + b·z + c = 0` with `B = A⁻ᵀA⁻¹`:
//!
//! ```text
//! a = 1ᵀB1    b = 1ᵀBD + DᵀB1 - 1    c = DᵀBD
//! ```
//!
//! So there are at most two candidates. Cosine observations are linear in the
//! direction of `x` and give it directly.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::embedding::{normalize, squared_l2, Embedding};
use crate::error::{Error, Result};
use crate::linalg::{ones, pseudo_inverse, PseudoInverse, DEFAULT_RCOND};

/// Minimum gap between the two candidates' fit to an extra observation.
pub const DISAMBIGUATION_MARGIN: f64 = 1e-9;

/// Candidates whose relative residual is below this count as consistent.
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;

const DEGENERATE_COEFFICIENT: f64 = 1e-14;
const DISCRIMINANT_RTOL: f64 = 1e-10;
const MIN_DIRECTION_NORM: f64 = 1e-12;

/// What to do when the norm quadratic has no real root.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum DiscriminantPolicy {
    /// Reject: exact distances always admit a real root.
    #[default]
    Strict,
    /// Fall back to the vertex `-b / 2a`, the `z` closest to satisfying the
    /// quadratic. Used when distances carry noise or quantization.
    Vertex,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub rcond: f64,
    pub policy: DiscriminantPolicy,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            rcond: DEFAULT_RCOND,
            policy: DiscriminantPolicy::Strict,
        }
    }
}

impl SolveOptions {
    pub fn lenient() -> Self {
        Self {
            policy: DiscriminantPolicy::Vertex,
            ..Self::default()
        }
    }
}

/// The linearized sphere-intersection system for `n` probes in `n` dimensions.
#[derive(Clone, Debug)]
pub struct L2System {
    a: DMatrix<f64>,
    d: DVector<f64>,
    b: DMatrix<f64>,
    a_inv: PseudoInverse,
    probes: Vec<Embedding>,
    sq_distances: Vec<f64>,
    probe_ids: Vec<String>,
}

impl L2System {
    /// `A`: row `i` is `-2·pᵢᵀ`.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `D`: entry `i` is `pᵢᵀpᵢ - dᵢ²`.
    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    /// `B = (A⁻¹)ᵀ·A⁻¹`.
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn a_inverse(&self) -> &DMatrix<f64> {
        &self.a_inv.matrix
    }

    pub fn condition_estimate(&self) -> f64 {
        self.a_inv.condition
    }

    pub fn probe_ids(&self) -> &[String] {
        &self.probe_ids
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// JSON dump of `A`, `D`, the quadratic coefficients and its roots.
    pub fn diagnostic_json(&self, quadratic: &NormQuadratic) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            a: Vec<Vec<f64>>,
            d: Vec<f64>,
            condition: f64,
            quadratic: &'a NormQuadratic,
        }
        let a = self
            .a
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        let dump = Dump {
            a,
            d: self.d.iter().copied().collect(),
            condition: self.a_inv.condition,
            quadratic,
        };
        Ok(serde_json::to_string(&dump)?)
    }
}

pub(crate) fn probe_matrix(probes: &[Embedding], dim: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(probes.len(), dim);
    for (i, p) in probes.iter().enumerate() {
        p.check_dim(dim)?;
        for (j, v) in p.values().iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

/// `(A, D)` of the expanded sphere equations for any number of probes.
pub(crate) fn linearize(probes: &[Embedding], sq_distances: &[f64], dim: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if probes.len() != sq_distances.len() {
        return Err(Error::InvalidArgument(format!(
            "{} probes but {} distances",
            probes.len(),
            sq_distances.len()
        )));
    }
    if let Some(bad) = sq_distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "squared distances must be finite and non-negative, got {bad}"
        )));
    }
    let a = probe_matrix(probes, dim)? * -2.0;
    let d = DVector::from_iterator(
        probes.len(),
        probes
            .iter()
            .zip(sq_distances)
            .map(|(p, d2)| p.norm_squared() - d2),
    );
    Ok((a, d))
}

pub fn build_l2_system(probes: &[Embedding], sq_distances: &[f64]) -> Result<L2System> {
    let ids = (0..probes.len()).map(|i| i.to_string()).collect();
    build_l2_system_with_ids(probes, sq_distances, ids)
}

pub fn build_l2_system_with_ids(probes: &[Embedding], sq_distances: &[f64], probe_ids: Vec<String>) -> Result<L2System> {
    build_l2_system_opts(probes, sq_distances, probe_ids, DEFAULT_RCOND)
}

pub fn build_l2_system_opts(
    probes: &[Embedding],
    sq_distances: &[f64],
    probe_ids: Vec<String>,
    rcond: f64,
) -> Result<L2System> {
    let n = probes.first().map_or(0, Embedding::dim);
    if probes.is_empty() || probes.len() != n {
        return Err(Error::CountMismatch {
            count: probes.len(),
            dim: n,
        });
    }
    if probe_ids.len() != probes.len() {
        return Err(Error::InvalidArgument("one id per probe required".into()));
    }
    let (a, d) = linearize(probes, sq_distances, n)?;
    let a_inv = pseudo_inverse(&a, rcond);
    if a_inv.rank < n {
        return Err(Error::RankDeficient {
            rank: a_inv.rank,
            required: n,
            condition: a_inv.condition,
        });
    }
    let b = a_inv.matrix.transpose() * &a_inv.matrix;
    Ok(L2System {
        a,
        d,
        b,
        a_inv,
        probes: probes.to_vec(),
        sq_distances: sq_distances.to_vec(),
        probe_ids,
    })
}

/// The scalar quadratic in `z = xᵀx`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormQuadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Real roots, ascending. One entry for a double (or clamped) root.
    pub roots_z: Vec<f64>,
    pub discriminant: f64,
    /// Set when the discriminant was negative and the vertex was used instead.
    pub clamped: bool,
}

impl NormQuadratic {
    /// From `x(z) = -(u + z·w)` with `u = A⁺D`, `w = A⁺1`: `a = |w|²`,
    /// `b = 2u·w - 1`, `c = |u|²`. The discriminant is formed as
    /// `1 - 4u·w - 4|u|²|w⊥|²` (`w⊥` the part of `w` orthogonal to `u`), which
    /// keeps its precision when the two roots nearly coincide.
    pub(crate) fn from_vectors(u: &DVector<f64>, w: &DVector<f64>, policy: DiscriminantPolicy) -> Result<Self> {
        let uw = u.dot(w);
        let uu = u.norm_squared();
        let a = w.norm_squared();
        let b = 2.0 * uw - 1.0;
        let c = uu;
        if uu == 0.0 {
            return Self::from_coefficients(a, b, c, policy);
        }
        let w_perp = w - u * (uw / uu);
        let cross = 4.0 * uu * w_perp.norm_squared();
        let discriminant = 1.0 - 4.0 * uw - cross;
        let scale = 1f64.max((4.0 * uw).abs()).max(cross);
        Self::solve(a, b, c, discriminant, DISCRIMINANT_RTOL * scale, policy)
    }

    pub fn from_coefficients(a: f64, b: f64, c: f64, policy: DiscriminantPolicy) -> Result<Self> {
        let discriminant = b * b - 4.0 * a * c;
        let tol = DISCRIMINANT_RTOL * (b * b).max((4.0 * a * c).abs());
        Self::solve(a, b, c, discriminant, tol, policy)
    }

    fn solve(a: f64, b: f64, c: f64, discriminant: f64, tol: f64, policy: DiscriminantPolicy) -> Result<Self> {
        let mut clamped = false;
        let roots_z = if a.abs() < DEGENERATE_COEFFICIENT {
            if b.abs() < DEGENERATE_COEFFICIENT {
                return Err(Error::DegenerateQuadratic { a, b });
            }
            vec![-c / b]
        } else if discriminant < -tol {
            match policy {
                DiscriminantPolicy::Strict => return Err(Error::NegativeDiscriminant { discriminant }),
                DiscriminantPolicy::Vertex => {
                    clamped = true;
                    vec![-b / (2.0 * a)]
                }
            }
        } else if discriminant <= tol {
            vec![-b / (2.0 * a)]
        } else {
            // Citardauq form avoids cancellation in the smaller root.
            let q = -0.5 * (b + b.signum() * discriminant.sqrt());
            let mut r = [q / a, c / q];
            r.sort_by(f64::total_cmp);
            r.to_vec()
        };
        Ok(Self {
            a,
            b,
            c,
            roots_z,
            discriminant,
            clamped,
        })
    }

    pub fn evaluate(&self, z: f64) -> f64 {
        (self.a * z + self.b) * z + self.c
    }
}

pub fn solve_norm_quadratic(sys: &L2System) -> Result<NormQuadratic> {
    let u = &sys.a_inv.matrix * &sys.d;
    let w = &sys.a_inv.matrix * ones(sys.d.len());
    NormQuadratic::from_vectors(&u, &w, DiscriminantPolicy::Strict)
}

/// One or two candidate embeddings and how well each fits the observations.
#[derive(Clone, Debug)]
pub struct RecoveryCandidates {
    pub candidates: Vec<Embedding>,
    pub roots_z: Vec<f64>,
    /// Per candidate: max over observations of `| |x - pᵢ|² - dᵢ² |`,
    /// divided by `max(1, max dᵢ², max |pᵢ|²)`.
    pub residuals: Vec<f64>,
    pub condition_estimate: f64,
    pub quadratic: NormQuadratic,
}

impl RecoveryCandidates {
    /// Index of the candidate with the smallest residual.
    pub fn best_index(&self) -> usize {
        self.residuals
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i)
    }

    pub fn best(&self) -> &Embedding {
        &self.candidates[self.best_index()]
    }

    pub fn is_ambiguous(&self) -> bool {
        self.candidates.len() > 1
    }

    pub fn is_valid(&self, index: usize) -> bool {
        self.residuals[index] < RESIDUAL_TOLERANCE
    }
}

/// Max relative violation of the sphere equations by `x`.
pub fn observation_residual(x: &Embedding, probes: &[Embedding], sq_distances: &[f64]) -> f64 {
    let mut scale: f64 = 1.0;
    let mut worst: f64 = 0.0;
    for (p, d2) in probes.iter().zip(sq_distances) {
        scale = scale.max(*d2).max(p.norm_squared());
        worst = worst.max((squared_l2(x.values(), p.values()) - d2).abs());
    }
    worst / scale
}

/// Shared tail of the exact and reduced solvers: given the pseudo-inverse of
/// the coefficient matrix (`k × m`) and `D`, form the norm quadratic, solve
/// it and map each root back to ambient space through `lift` (`n × k`).
pub(crate) fn candidates_from_pinv(
    pinv: &PseudoInverse,
    d: &DVector<f64>,
    lift: Option<&DMatrix<f64>>,
    probes: &[Embedding],
    sq_distances: &[f64],
    policy: DiscriminantPolicy,
) -> Result<RecoveryCandidates> {
    let u = &pinv.matrix * d;
    let w = &pinv.matrix * ones(d.len());
    let quadratic = NormQuadratic::from_vectors(&u, &w, policy)?;
    let mut candidates = Vec::with_capacity(2);
    let mut residuals = Vec::with_capacity(2);
    for &z in &quadratic.roots_z {
        let y = -(&u + &w * z);
        let x = match lift {
            Some(v) => v * y,
            None => y,
        };
        let x = Embedding::from_dvector(&x)?;
        residuals.push(observation_residual(&x, probes, sq_distances));
        candidates.push(x);
    }
    Ok(RecoveryCandidates {
        candidates,
        roots_z: quadratic.roots_z.clone(),
        residuals,
        condition_estimate: pinv.condition,
        quadratic,
    })
}

pub fn l2_recover(sys: &L2System) -> Result<RecoveryCandidates> {
    l2_recover_with(sys, DiscriminantPolicy::Strict)
}

pub fn l2_recover_with(sys: &L2System, policy: DiscriminantPolicy) -> Result<RecoveryCandidates> {
    candidates_from_pinv(&sys.a_inv, &sys.d, None, &sys.probes, &sys.sq_distances, policy)
}

/// Convenience: build the system and recover in one call.
pub fn recover_l2(probes: &[Embedding], sq_distances: &[f64], opts: SolveOptions) -> Result<RecoveryCandidates> {
    let ids = (0..probes.len()).map(|i| i.to_string()).collect();
    let sys = build_l2_system_opts(probes, sq_distances, ids, opts.rcond)?;
    l2_recover_with(&sys, opts.policy)
}

/// Unit direction of the unknown from `n` cosine distances (`1 - cos`).
pub fn cosine_recover(probes: &[Embedding], cos_distances: &[f64]) -> Result<Embedding> {
    cosine_recover_opts(probes, cos_distances, DEFAULT_RCOND)
}

pub fn cosine_recover_opts(probes: &[Embedding], cos_distances: &[f64], rcond: f64) -> Result<Embedding> {
    let n = probes.first().map_or(0, Embedding::dim);
    if probes.is_empty() || probes.len() != n {
        return Err(Error::CountMismatch {
            count: probes.len(),
            dim: n,
        });
    }
    let (a, d) = cosine_linearize(probes, cos_distances, n)?;
    let pinv = pseudo_inverse(&a, rcond);
    if pinv.rank < n {
        return Err(Error::RankDeficient {
            rank: pinv.rank,
            required: n,
            condition: pinv.condition,
        });
    }
    direction_from(&(&pinv.matrix * d))
}

/// Rows are the normalized probes; `Dᵢ = 1 - dᵢ`.
pub(crate) fn cosine_linearize(
    probes: &[Embedding],
    cos_distances: &[f64],
    dim: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if probes.len() != cos_distances.len() {
        return Err(Error::InvalidArgument(format!(
            "{} probes but {} distances",
            probes.len(),
            cos_distances.len()
        )));
    }
    let unit: Vec<Embedding> = probes.iter().map(normalize).collect::<Result<_>>()?;
    let a = probe_matrix(&unit, dim)?;
    let d = DVector::from_iterator(cos_distances.len(), cos_distances.iter().map(|d| 1.0 - d));
    Ok((a, d))
}

pub(crate) fn direction_from(v: &DVector<f64>) -> Result<Embedding> {
    if v.norm() < MIN_DIRECTION_NORM {
        return Err(Error::ZeroVector);
    }
    normalize(&Embedding::from_dvector(v)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Disambiguation {
    pub chosen: Embedding,
    pub index: usize,
    /// Difference between the two candidates' `|predicted - observed|`.
    pub margin: f64,
}

/// Picks the candidate whose squared distance to `extra_probe` best matches
/// `extra_sq_distance`. Ties are an error.
pub fn disambiguate(cands: &RecoveryCandidates, extra_probe: &Embedding, extra_sq_distance: f64) -> Result<Disambiguation> {
    if cands.candidates.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "disambiguation needs two candidates, got {}",
            cands.candidates.len()
        )));
    }
    let mut dev = [0.0; 2];
    for (k, c) in cands.candidates.iter().enumerate() {
        extra_probe.check_dim(c.dim())?;
        dev[k] = (squared_l2(c.values(), extra_probe.values()) - extra_sq_distance).abs();
    }
    let margin = (dev[0] - dev[1]).abs();
    if margin < DISAMBIGUATION_MARGIN {
        return Err(Error::NonDiscriminating { margin });
    }
    let index = if dev[0] < dev[1] { 0 } else { 1 };
    Ok(Disambiguation {
        chosen: cands.candidates[index].clone(),
        index,
        margin,
    })
}

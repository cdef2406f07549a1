//! SVD-backed pseudo-inverse with numerical rank and condition reporting.

use nalgebra::{DMatrix, DVector};

/// Singular values below `DEFAULT_RCOND · σ_max` count as zero.
pub const DEFAULT_RCOND: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    /// Number of singular values above the cutoff.
    pub rank: usize,
    /// `σ_max / σ_min` over all singular values; infinite when singular.
    pub condition: f64,
    pub cutoff: f64,
    /// Descending.
    pub singular_values: Vec<f64>,
}

/// Thin SVD `A = U·diag(s)·Vᵀ`, singular values descending.
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// Computed with faer. nalgebra's bidiagonal SVD returns singular vectors
/// off by up to ~1e-4 on some rank-deficient inputs, whatever the
/// convergence threshold.
pub(crate) fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    let (m, n) = a.shape();
    let k = m.min(n);
    let fa = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    match fa.thin_svd() {
        Ok(svd) => {
            let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
            ThinSvd {
                u: DMatrix::from_fn(m, k, |i, j| u[(i, j)]),
                s: (0..k).map(|i| s[i]).collect(),
                v: DMatrix::from_fn(n, k, |i, j| v[(i, j)]),
            }
        }
        // Only on non-finite input, which `Embedding` rules out.
        Err(_) => ThinSvd {
            u: DMatrix::zeros(m, k),
            s: vec![0.0; k],
            v: DMatrix::zeros(n, k),
        },
    }
}

pub fn pseudo_inverse(a: &DMatrix<f64>, rcond: f64) -> PseudoInverse {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return PseudoInverse {
            matrix: DMatrix::zeros(n, m),
            rank: 0,
            condition: f64::INFINITY,
            cutoff: 0.0,
            singular_values: Vec::new(),
        };
    }
    let svd = thin_svd(a);
    let sigma_max = svd.s.first().copied().unwrap_or(0.0);
    let sigma_min = svd.s.last().copied().unwrap_or(0.0);
    let cutoff = rcond * sigma_max;

    let mut pinv = DMatrix::zeros(n, m);
    let mut rank = 0;
    for (k, &s) in svd.s.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            // pinv += v_k * u_kᵀ / s
            pinv.ger(1.0 / s, &svd.v.column(k), &svd.u.column(k), 1.0);
        }
    }
    let singular_values = svd.s;
    let condition = if sigma_min > 0.0 {
        sigma_max / sigma_min
    } else {
        f64::INFINITY
    };
    PseudoInverse {
        matrix: pinv,
        rank,
        condition,
        cutoff,
        singular_values,
    }
}

pub(crate) fn ones(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

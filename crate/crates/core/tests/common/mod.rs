//! Independent reference computations shared by the integration tests.
//! Nothing here calls the solvers under test.
#![allow(dead_code)]

use embleak_core::Embedding;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(dim: usize, rng: &mut ChaCha8Rng) -> Embedding {
    Embedding::new((0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect()).unwrap()
}

pub fn uniform_box(dim: usize, half_width: f64, rng: &mut ChaCha8Rng) -> Embedding {
    Embedding::new((0..dim).map(|_| rng.random_range(-half_width..half_width)).collect()).unwrap()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

pub fn cosine_dist(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Sum of squared sphere-equation violations.
fn sphere_objective(x: &[f64], probes: &[Embedding], sq: &[f64]) -> f64 {
    probes
        .iter()
        .zip(sq)
        .map(|(p, d)| {
            let r = sq_dist(x, p.values()) - d;
            r * r
        })
        .sum()
}

/// Every point where all spheres meet, found by gridding the bounding box of
/// the first sphere, keeping local-minimum cells and polishing each with a
/// shrinking compass search.
pub fn brute_force_intersections(probes: &[Embedding], sq: &[f64], steps: usize) -> Vec<Vec<f64>> {
    let dim = probes[0].dim();
    let center = probes[0].values();
    let radius = sq[0].sqrt() * 1.05 + 1e-3;
    let h = 2.0 * radius / steps as f64;
    let total = (steps + 1).pow(dim as u32);
    let point = |mut idx: usize| -> Vec<f64> {
        (0..dim)
            .map(|k| {
                let i = idx % (steps + 1);
                idx /= steps + 1;
                center[k] - radius + i as f64 * h
            })
            .collect()
    };
    let values: Vec<f64> = (0..total).map(|i| sphere_objective(&point(i), probes, sq)).collect();

    let mut seeds = Vec::new();
    for i in 0..total {
        let v = values[i];
        let mut stride = 1usize;
        let mut is_min = true;
        let mut idx = i;
        for _ in 0..dim {
            let c = idx % (steps + 1);
            idx /= steps + 1;
            if c > 0 && values[i - stride] < v {
                is_min = false;
            }
            if c < steps && values[i + stride] < v {
                is_min = false;
            }
            stride *= steps + 1;
        }
        if is_min {
            seeds.push(point(i));
        }
    }

    let scale: f64 = sq.iter().map(|d| d * d).sum::<f64>().max(1.0);
    let mut found: Vec<Vec<f64>> = Vec::new();
    for mut x in seeds {
        let mut step = h;
        let mut fx = sphere_objective(&x, probes, sq);
        while step > 1e-13 {
            let mut improved = false;
            for k in 0..dim {
                for sign in [-1.0, 1.0] {
                    let mut y = x.clone();
                    y[k] += sign * step;
                    let fy = sphere_objective(&y, probes, sq);
                    if fy < fx {
                        x = y;
                        fx = fy;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if fx < 1e-14 * scale && !found.iter().any(|f| dist(f, &x) < 1e-5) {
            found.push(x);
        }
    }
    found
}

/// Mean reconstruction error per rank, from an eigendecomposition of the
/// uncentered second-moment matrix.
pub fn pca_error_curve(samples: &[Embedding], ranks: &[usize]) -> Vec<f64> {
    let n = samples[0].dim();
    let x = DMatrix::from_fn(samples.len(), n, |i, j| samples[i].values()[j]);
    let eig = SymmetricEigen::new(x.transpose() * &x);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    ranks
        .iter()
        .map(|&r| {
            let v = DMatrix::from_fn(n, r, |i, j| eig.eigenvectors[(i, order[j])]);
            samples
                .iter()
                .map(|s| {
                    let e = DVector::from_column_slice(s.values());
                    (&e - &v * (v.transpose() * &e)).norm()
                })
                .sum::<f64>()
                / samples.len() as f64
        })
        .collect()
}

/// Reference reduced L2 estimate: `x = V·y` with `y(z) = y0 + z·y1` from two
/// SVD least-squares solves, `z` fixed by `|y(z)|² = z`, and the next probe
/// breaking ties. Falls back to the vertex when no real root exists.
pub fn reference_reduced_l2(
    probes: &[Embedding],
    sq: &[f64],
    v: &DMatrix<f64>,
    extra: Option<(&Embedding, f64)>,
) -> Vec<f64> {
    let m = probes.len();
    let a = DMatrix::from_fn(m, v.nrows(), |i, j| -2.0 * probes[i].values()[j]);
    let d = DVector::from_fn(m, |i, _| probes[i].values().iter().map(|p| p * p).sum::<f64>() - sq[i]);
    let coef = a * v;
    let svd = coef.svd(true, true);
    let y0 = svd.solve(&(-&d), 1e-10).unwrap();
    let y1 = svd.solve(&(-DVector::from_element(m, 1.0)), 1e-10).unwrap();
    let qa = y1.norm_squared();
    let qb = 2.0 * y0.dot(&y1) - 1.0;
    let qc = y0.norm_squared();
    let disc = qb * qb - 4.0 * qa * qc;
    let roots = if disc < 0.0 {
        vec![-qb / (2.0 * qa)]
    } else {
        vec![(-qb - disc.sqrt()) / (2.0 * qa), (-qb + disc.sqrt()) / (2.0 * qa)]
    };
    let cands: Vec<Vec<f64>> = roots
        .iter()
        .map(|z| (v * (&y0 + &y1 * *z)).iter().copied().collect())
        .collect();
    if cands.len() == 1 {
        return cands[0].clone();
    }
    let score = |x: &Vec<f64>| -> f64 {
        match extra {
            Some((p, s)) => (sq_dist(x, p.values()) - s).abs(),
            None => probes
                .iter()
                .zip(sq)
                .map(|(p, s)| (sq_dist(x, p.values()) - s).powi(2))
                .sum(),
        }
    };
    if score(&cands[0]) <= score(&cands[1]) {
        cands[0].clone()
    } else {
        cands[1].clone()
    }
}

//! One PASS/FAIL line per headline property. Runs without the libtest harness
//! so the lines always print; exits non-zero if any check fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use embleak_core::exact::{build_l2_system, disambiguate, l2_recover, solve_norm_quadratic};
use embleak_core::oracle::{DisplayMode, OracleConfig};
use embleak_core::pipeline::sweep::write_report;
use embleak_core::pipeline::{sweep, CrossDomainConfig, InDomainExperiment, Judger, Solver, SweepConfig};
use embleak_core::{
    angle_between, cosine_recover, normalize, rank_error_curve, Embedding, Metric, Oracle,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed < Duration::from_secs(limit_secs)
}

fn exact_l2() -> Outcome {
    let start = Instant::now();
    let mut worst_error = 0.0f64;
    let mut worst_root = 0.0f64;
    let mut max_candidates = 0;
    for (k, &n) in [8usize, 64, 128].iter().enumerate() {
        let mut r = rng(100 + k as u64);
        for _ in 0..100 {
            let victim = gaussian(n, &mut r);
            let probes: Vec<Embedding> = (0..n).map(|_| gaussian(n, &mut r)).collect();
            let extra = gaussian(n, &mut r);
            let sq: Vec<f64> = probes.iter().map(|p| sq_dist(p.values(), victim.values())).collect();
            let sys = build_l2_system(&probes, &sq).unwrap();
            let cands = l2_recover(&sys).unwrap();
            max_candidates = max_candidates.max(cands.candidates.len());
            let chosen = match cands.candidates.len() {
                2 => disambiguate(&cands, &extra, sq_dist(extra.values(), victim.values())).unwrap().chosen,
                _ => cands.best().clone(),
            };
            worst_error = worst_error.max(dist(chosen.values(), victim.values()));

            let q = solve_norm_quadratic(&sys).unwrap();
            let z_true = victim.norm_squared();
            let scale = q.a.abs() * z_true * z_true + q.b.abs() * z_true + q.c.abs();
            let nearest = q.roots_z.iter().map(|z| (z - z_true).abs() / z_true).fold(f64::INFINITY, f64::min);
            worst_root = worst_root.max((q.evaluate(z_true) / scale).abs()).max(nearest);
        }
    }
    let elapsed = start.elapsed();
    check(
        worst_error < 1e-6 && max_candidates <= 2 && worst_root < 1e-8 && within(elapsed, 30),
        format!(
            "max error {worst_error:.2e}, max candidates {max_candidates}, true z off-root {worst_root:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn exact_cosine() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (k, &n) in [8usize, 64, 128].iter().enumerate() {
        let mut r = rng(200 + k as u64);
        for _ in 0..100 {
            let victim = gaussian(n, &mut r);
            let probes: Vec<Embedding> = (0..n).map(|_| gaussian(n, &mut r)).collect();
            let d: Vec<f64> = probes.iter().map(|p| cosine_dist(p.values(), victim.values())).collect();
            let x = cosine_recover(&probes, &d).unwrap();
            worst = worst.max(angle_between(&x, &normalize(&victim).unwrap()).unwrap());
        }
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-7 && within(elapsed, 10),
        format!("max angle {worst:.2e} rad, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn low_dim_equivalence() -> Outcome {
    let mut instances = 0;
    let mut worst = 0.0f64;
    let mut count_mismatch = 0;
    for (k, &n) in [2usize, 3, 4].iter().enumerate() {
        let mut r = rng(300 + k as u64);
        let steps = [400, 80, 28][k];
        let per_dim = [17, 17, 16][k];
        for _ in 0..per_dim {
            let victim = uniform_box(n, 1.0, &mut r);
            let probes: Vec<Embedding> = (0..n).map(|_| uniform_box(n, 2.0, &mut r)).collect();
            let sq: Vec<f64> = probes.iter().map(|p| sq_dist(p.values(), victim.values())).collect();
            let cands = l2_recover(&build_l2_system(&probes, &sq).unwrap()).unwrap();
            let brute = brute_force_intersections(&probes, &sq, steps);
            if brute.len() != cands.candidates.len() {
                count_mismatch += 1;
            }
            for c in &cands.candidates {
                let near = brute.iter().map(|b| dist(b, c.values())).fold(f64::INFINITY, f64::min);
                worst = worst.max(near);
            }
            for b in &brute {
                let near = cands.candidates.iter().map(|c| dist(b, c.values())).fold(f64::INFINITY, f64::min);
                worst = worst.max(near);
            }
            instances += 1;
        }
    }
    check(
        instances >= 50 && worst < 1e-4 && count_mismatch == 0,
        format!("{instances} instances, max mismatch {worst:.2e}, candidate-count disagreements {count_mismatch}"),
    )
}

fn rank_reduction() -> Outcome {
    let start = Instant::now();
    let exp = InDomainExperiment::facenet128_like(7, vec![33, 53]);
    let p = exp.prepare().unwrap();
    let samples: Vec<Embedding> = p.aux.iter().cloned().chain(p.victims.iter().map(|v| v.1.clone())).collect();

    let ranks: Vec<usize> = (1..=64).collect();
    let reference = pca_error_curve(&samples, &ranks);
    let library = rank_error_curve(&samples, &ranks).unwrap();
    let curve_gap = reference
        .iter()
        .zip(&library.mean_errors)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let crossing = ranks.iter().zip(&reference).find(|(_, e)| **e < 0.1).map(|(r, _)| *r);

    let result = sweep(&p.oracle, &p.victims, &p.probes, p.basis.as_ref(), &exp.sweep).unwrap();
    let basis = p.basis.as_ref().unwrap();
    let mut ref_medians = Vec::new();
    for &m in &exp.sweep.counts {
        let errors: Vec<f64> = p
            .victims
            .iter()
            .map(|(_, v)| {
                let probes: Vec<Embedding> = p.probes[..=m].iter().map(|q| q.1.clone()).collect();
                let sq: Vec<f64> = probes.iter().map(|q| sq_dist(q.values(), v.values())).collect();
                let x = reference_reduced_l2(&probes[..m], &sq[..m], basis.vectors(), Some((&probes[m], sq[m])));
                dist(&x, v.values())
            })
            .collect();
        ref_medians.push(median(&errors));
    }
    let sweep_gap = ref_medians
        .iter()
        .zip(&result.median_errors)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let crossing_ok = crossing.is_some_and(|r| (31..=35).contains(&r));
    let m33 = ref_medians[0];
    let m53 = ref_medians[1];
    check(
        crossing_ok && m53 < 0.1 && m33 >= 0.1 && curve_gap < 1e-9 && sweep_gap < 1e-6 && within(elapsed, 120),
        format!(
            "curve crosses 0.1 at rank {crossing:?}; median error m=33 {m33:.4}, m=53 {m53:.4}; \
             library vs reference: curve {curve_gap:.1e}, sweep {sweep_gap:.1e}; {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn monotonicity() -> Outcome {
    let counts = vec![10, 33, 53, 80, 128];
    let mut exp = InDomainExperiment::facenet128_proportional(21, counts);
    exp.victim_count = 30;
    let by_m = exp.run().unwrap();

    let decimals = [1u32, 2, 4, 8, 17];
    let n = 16;
    let mut r = rng(400);
    let victims: Vec<(String, Embedding)> = (0..30).map(|i| (format!("v{i}"), gaussian(n, &mut r))).collect();
    let probes: Vec<(String, Embedding)> = (0..=n).map(|i| (format!("p{i}"), gaussian(n, &mut r))).collect();
    let mut by_decimals = Vec::new();
    for &dec in &decimals {
        let mut oracle = Oracle::new(OracleConfig::new(Metric::L2, 1.2, DisplayMode::RawDistance, dec).unwrap()).unwrap();
        for (id, e) in &victims {
            oracle.enroll(id.clone(), e.clone()).unwrap();
        }
        let mut cfg = SweepConfig::new(vec![n], Solver::ExactL2);
        cfg.judger = Judger::new(Metric::L2, 1.2);
        by_decimals.push(sweep(&oracle, &victims, &probes, None, &cfg).unwrap().median_errors[0]);
    }
    let dec_ok = by_decimals.windows(2).all(|w| w[1] <= w[0]);
    let fmt = |v: &[f64]| v.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" ");
    check(
        by_m.is_non_increasing() && by_m.acceptance_tracks_error() && dec_ok,
        format!(
            "median vs m [{}]; median vs decimals {decimals:?} [{}]",
            fmt(&by_m.median_errors),
            fmt(&by_decimals)
        ),
    )
}

fn cross_domain_shape() -> Outcome {
    let mut lines = Vec::new();
    let mut interior = 0;
    let seeds = [1u64, 2, 3];
    for &seed in &seeds {
        let out = CrossDomainConfig::default_with_seed(seed).run().unwrap();
        let arg = out.sweep.argmin().unwrap();
        if arg > 0 && arg + 1 < out.sweep.counts.len() {
            interior += 1;
        }
        lines.push(format!("seed {seed} min at m={}", out.sweep.counts[arg]));
    }
    let same = CrossDomainConfig::identical_domains(1).run().unwrap();
    lines.push(format!("identical domains non-increasing: {}", same.sweep.is_non_increasing()));
    check(interior == seeds.len() && same.sweep.is_non_increasing(), lines.join("; "))
}

fn determinism() -> Outcome {
    let csv = |seed: u64| {
        let mut exp = InDomainExperiment::facenet128_like(seed, vec![33, 40, 53]);
        exp.victim_count = 20;
        let mut buf = Vec::new();
        write_report(&mut buf, &exp.run().unwrap()).unwrap();
        let mut cd = CrossDomainConfig::default_with_seed(seed);
        cd.victim_count = 10;
        write_report(&mut buf, &cd.run().unwrap().sweep).unwrap();
        buf
    };
    let (a, b) = (csv(5), csv(5));
    check(a == b && !a.is_empty(), format!("{} bytes, identical: {}", a.len(), a == b))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("exact L2 recovery", exact_l2),
        ("exact cosine recovery", exact_cosine),
        ("low-dim brute-force equivalence", low_dim_equivalence),
        ("rank-reduction reproduction", rank_reduction),
        ("monotonicity in m and display decimals", monotonicity),
        ("cross-domain U-shape", cross_domain_shape),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

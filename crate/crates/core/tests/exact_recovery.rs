mod common;

use common::*;
use embleak_core::exact::{
    build_l2_system, cosine_recover, disambiguate, l2_recover, recover_l2, solve_norm_quadratic, SolveOptions,
};
use embleak_core::{angle_between, normalize, Embedding, Error};
use proptest::prelude::*;

fn setup(n: usize, seed: u64) -> (Embedding, Vec<Embedding>, Vec<f64>, Embedding) {
    let mut r = rng(seed);
    let victim = gaussian(n, &mut r);
    let probes: Vec<Embedding> = (0..n).map(|_| gaussian(n, &mut r)).collect();
    let sq = probes.iter().map(|p| sq_dist(p.values(), victim.values())).collect();
    (victim, probes, sq, gaussian(n, &mut r))
}

#[test]
fn dim_128_recovers_victim_among_candidates() {
    for seed in 0..10 {
        let (victim, probes, sq, extra) = setup(128, seed);
        let cands = l2_recover(&build_l2_system(&probes, &sq).unwrap()).unwrap();
        assert!(cands.candidates.len() <= 2);
        let best = cands
            .candidates
            .iter()
            .map(|c| dist(c.values(), victim.values()))
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-6, "seed {seed}: {best}");
        if cands.candidates.len() == 2 {
            let pick = disambiguate(&cands, &extra, sq_dist(extra.values(), victim.values())).unwrap();
            assert!(dist(pick.chosen.values(), victim.values()) < 1e-6);
        }
    }
}

#[test]
fn both_candidates_satisfy_every_sphere() {
    let (_, probes, sq, _) = setup(16, 3);
    let cands = l2_recover(&build_l2_system(&probes, &sq).unwrap()).unwrap();
    assert_eq!(cands.candidates.len(), 2);
    for c in &cands.candidates {
        for (p, d) in probes.iter().zip(&sq) {
            assert!((sq_dist(c.values(), p.values()) - d).abs() < 1e-8 * d.max(1.0));
        }
    }
    // The two spheres-intersection points mirror each other, so their
    // squared norms are the two roots.
    let q = solve_norm_quadratic(&build_l2_system(&probes, &sq).unwrap()).unwrap();
    for (c, z) in cands.candidates.iter().zip(&q.roots_z) {
        assert!((c.norm_squared() - z).abs() < 1e-8 * z);
    }
}

#[test]
fn victim_on_probe_hyperplane_gives_double_root() {
    // The victim lies on the line through both probes, so its mirror image
    // across that line is itself.
    let probes = vec![Embedding::new(vec![0.6, 0.0]).unwrap(), Embedding::new(vec![0.0, 0.6]).unwrap()];
    let victim = [0.3, 0.3];
    let sq: Vec<f64> = probes.iter().map(|p| sq_dist(p.values(), &victim)).collect();
    let cands = l2_recover(&build_l2_system(&probes, &sq).unwrap()).unwrap();
    assert_eq!(cands.candidates.len(), 1);
    assert!(dist(cands.candidates[0].values(), &victim) < 1e-6);
}

#[test]
fn duplicate_probe_is_rank_deficient() {
    let (_, mut probes, mut sq, _) = setup(8, 4);
    probes[7] = probes[0].clone();
    sq[7] = sq[0];
    assert!(matches!(build_l2_system(&probes, &sq), Err(Error::RankDeficient { rank: 7, .. })));
}

#[test]
fn distance_noise_degrades_gracefully() {
    // Error grows with the perturbation scale and vanishes without it.
    let (victim, probes, sq, extra) = setup(32, 5);
    let extra_sq = sq_dist(extra.values(), victim.values());
    let mut r = rng(55);
    let mut errors = Vec::new();
    for scale in [0.0, 1e-8, 1e-6, 1e-4] {
        let noisy: Vec<f64> = sq
            .iter()
            .map(|d| d + scale * d * (rand::Rng::random::<f64>(&mut r) - 0.5))
            .collect();
        let cands = recover_l2(&probes, &noisy, SolveOptions::lenient()).unwrap();
        let x = match cands.candidates.len() {
            2 => disambiguate(&cands, &extra, extra_sq).unwrap().chosen,
            _ => cands.best().clone(),
        };
        errors.push(dist(x.values(), victim.values()));
    }
    assert!(errors[0] < 1e-8);
    assert!(errors.windows(2).all(|w| w[1] >= w[0]), "{errors:?}");
}

#[test]
fn cosine_recovery_ignores_victim_scale() {
    let mut r = rng(6);
    let victim = gaussian(64, &mut r);
    let probes: Vec<Embedding> = (0..64).map(|_| gaussian(64, &mut r)).collect();
    for scale in [0.01, 1.0, 250.0] {
        let scaled = victim.scaled(scale).unwrap();
        let d: Vec<f64> = probes.iter().map(|p| cosine_dist(p.values(), scaled.values())).collect();
        let x = cosine_recover(&probes, &d).unwrap();
        assert!(x.is_unit());
        assert!(angle_between(&x, &normalize(&victim).unwrap()).unwrap() < 1e-7);
    }
}

#[test]
fn cosine_needs_full_rank_probes() {
    let mut r = rng(7);
    let mut probes: Vec<Embedding> = (0..8).map(|_| gaussian(8, &mut r)).collect();
    probes[3] = probes[2].scaled(3.0).unwrap();
    let d = vec![0.5; 8];
    assert!(matches!(cosine_recover(&probes, &d), Err(Error::RankDeficient { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn low_dim_candidates_match_grid_search(seed in 0u64..10_000, n in 2usize..=3) {
        let mut r = rng(seed);
        let victim = uniform_box(n, 1.0, &mut r);
        let probes: Vec<Embedding> = (0..n).map(|_| uniform_box(n, 2.0, &mut r)).collect();
        let sq: Vec<f64> = probes.iter().map(|p| sq_dist(p.values(), victim.values())).collect();
        let sys = build_l2_system(&probes, &sq);
        prop_assume!(sys.is_ok());
        let sys = sys.unwrap();
        prop_assume!(sys.condition_estimate() < 1e4);
        let cands = l2_recover(&sys).unwrap();
        let brute = brute_force_intersections(&probes, &sq, if n == 2 { 200 } else { 40 });
        for c in &cands.candidates {
            let near = brute.iter().map(|b| dist(b, c.values())).fold(f64::INFINITY, f64::min);
            prop_assert!(near < 1e-4, "candidate {:?} not found by search {:?}", c, brute);
        }
        prop_assert!(cands.candidates.iter().any(|c| dist(c.values(), victim.values()) < 1e-6));
    }
}

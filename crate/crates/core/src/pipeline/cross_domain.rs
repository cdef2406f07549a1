//! Recovery in the attacker's own embedding domain using distances leaked by
//! a different, unknown model.
//!
//! Both models are simulated as maps from a shared latent "identity" space:
//! a fixed random linear layer followed by an elementwise nonlinearity and
//! an optional orthogonal output transform. The attacker fits an affine map
//! from system distances to her own L2 distances on auxiliary pairs, then
//! runs the reduced L2 solver in her domain.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::{distance, Embedding, Metric};
use crate::error::{Error, Result};
use crate::oracle::{DisplayMode, Oracle, OracleConfig};
use crate::pipeline::attack::{Judger, Solver};
use crate::pipeline::observation::{collect, ObservationLog};
use crate::pipeline::sweep::{sweep_logs, RankPolicy, SweepConfig, SweepResult};
use crate::subspace::fit_basis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    Identity,
    Tanh,
    Softsign,
}

impl Nonlinearity {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Identity => x,
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Softsign => x / (1.0 + x.abs()),
        }
    }

    /// `E[φ(g·X)²]` for standard normal `X`, by midpoint quadrature.
    fn second_moment(self, gain: f64) -> f64 {
        const STEPS: usize = 8000;
        let (lo, hi) = (-10.0, 10.0);
        let h = (hi - lo) / STEPS as f64;
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        (0..STEPS)
            .map(|i| {
                let x = lo + (i as f64 + 0.5) * h;
                let y = self.apply(gain * x);
                y * y * norm * (-0.5 * x * x).exp() * h
            })
            .sum()
    }
}

/// One embedding model. Two specs with the same `salt` (and seed) give the
/// same weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dim: usize,
    pub salt: u64,
    #[serde(default = "default_gain")]
    pub gain: f64,
    pub nonlinearity: Nonlinearity,
    /// When set, outputs are multiplied by a random orthogonal matrix drawn
    /// from this salt.
    #[serde(default)]
    pub rotation_salt: Option<u64>,
}

fn default_gain() -> f64 {
    1.5
}

impl DomainSpec {
    pub fn new(dim: usize, salt: u64, nonlinearity: Nonlinearity) -> Self {
        Self {
            dim,
            salt,
            gain: default_gain(),
            nonlinearity,
            rotation_salt: None,
        }
    }

    pub fn rotated(mut self, rotation_salt: u64) -> Self {
        self.rotation_salt = Some(rotation_salt);
        self
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut *rng))
}

/// Latent → embedding. Outputs have RMS norm close to 1.
#[derive(Clone, Debug)]
pub struct DomainMap {
    weights: DMatrix<f64>,
    nonlinearity: Nonlinearity,
    rotation: Option<DMatrix<f64>>,
    output_scale: f64,
}

impl DomainMap {
    pub fn new(spec: &DomainSpec, latent_dim: usize, seed: u64) -> Result<Self> {
        if spec.dim == 0 || latent_dim == 0 {
            return Err(Error::InvalidArgument("domain dimensions must be positive".into()));
        }
        let mut rng = stream_rng(seed, 2 * spec.salt + 1);
        // Unit-variance latents give pre-activations with variance gain².
        let weights = gaussian_matrix(spec.dim, latent_dim, &mut rng) * (spec.gain / (latent_dim as f64).sqrt());
        let rotation = spec.rotation_salt.map(|s| {
            let mut r = stream_rng(seed, 2 * s + 2);
            gaussian_matrix(spec.dim, spec.dim, &mut r).qr().q()
        });
        let moment = spec.nonlinearity.second_moment(spec.gain);
        Ok(Self {
            weights,
            nonlinearity: spec.nonlinearity,
            rotation,
            output_scale: 1.0 / (spec.dim as f64 * moment).sqrt(),
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn embed(&self, latent: &DVector<f64>) -> Result<Embedding> {
        let mut h = &self.weights * latent;
        h.apply(|x| *x = self.nonlinearity.apply(*x) * self.output_scale);
        if let Some(q) = &self.rotation {
            h = q * h;
        }
        Embedding::from_dvector(&h)
    }

    pub fn embed_all(&self, latents: &[DVector<f64>]) -> Result<Vec<Embedding>> {
        latents.iter().map(|z| self.embed(z)).collect()
    }
}

/// `d' ≈ gain·d + offset`, mapping system distances to attacker L2 distances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineCalibration {
    pub gain: f64,
    pub offset: f64,
    /// Root-mean-square fit residual.
    pub rmse: f64,
}

impl AffineCalibration {
    pub fn identity() -> Self {
        Self {
            gain: 1.0,
            offset: 0.0,
            rmse: 0.0,
        }
    }

    /// Ordinary least squares of `target` on `source`.
    pub fn fit(source: &[f64], target: &[f64]) -> Result<Self> {
        if source.len() != target.len() || source.len() < 2 {
            return Err(Error::Calibration("need at least two paired distances".into()));
        }
        let n = source.len() as f64;
        let mx = source.iter().sum::<f64>() / n;
        let my = target.iter().sum::<f64>() / n;
        let sxx: f64 = source.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = source.iter().zip(target).map(|(x, y)| (x - mx) * (y - my)).sum();
        if !(sxx > 1e-12 * (1.0 + mx * mx) * n) {
            return Err(Error::Calibration("auxiliary distances have no spread".into()));
        }
        let gain = sxy / sxx;
        let offset = my - gain * mx;
        let rmse = (source
            .iter()
            .zip(target)
            .map(|(x, y)| (gain * x + offset - y).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        if !(gain.is_finite() && offset.is_finite()) {
            return Err(Error::Calibration("non-finite fit".into()));
        }
        Ok(Self { gain, offset, rmse })
    }

    pub fn apply(&self, d: f64) -> f64 {
        (self.gain * d + self.offset).max(0.0)
    }
}

/// A full no-box experiment; everything random derives from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossDomainConfig {
    pub seed: u64,
    pub latent_dim: usize,
    /// Ratio between consecutive latent standard deviations.
    #[serde(default = "default_latent_decay")]
    pub latent_decay: f64,
    pub system: DomainSpec,
    pub attacker: DomainSpec,
    /// How the system compares and displays; its metric is the leaked one.
    pub system_oracle: OracleConfig,
    pub aux_count: usize,
    pub calibration_pairs: usize,
    pub victim_count: usize,
    pub probe_count: usize,
    /// Largest basis rank fitted on the attacker's auxiliary embeddings.
    pub basis_rank: usize,
    pub counts: Vec<usize>,
    pub rank_policy: RankPolicy,
    pub judger: Judger,
}

fn default_latent_decay() -> f64 {
    0.95
}

impl CrossDomainConfig {
    /// Facenet-512-like cosine system vs a 128-dim L2 attacker model.
    pub fn default_with_seed(seed: u64) -> Self {
        Self {
            seed,
            latent_dim: 33,
            latent_decay: default_latent_decay(),
            system: DomainSpec::new(128, 1, Nonlinearity::Tanh),
            attacker: DomainSpec::new(128, 2, Nonlinearity::Tanh),
            system_oracle: OracleConfig::new(Metric::Cosine, 0.63, DisplayMode::OneMinusDistance, 17)
                .expect("valid preset"),
            aux_count: 300,
            calibration_pairs: 150,
            victim_count: 60,
            probe_count: 129,
            basis_rank: 64,
            counts: vec![5, 10, 20, 33, 53, 80, 128],
            rank_policy: RankPolicy::Proportional { ratio: 0.5, max: 64 },
            judger: Judger::new(Metric::L2, 1.2),
        }
    }

    /// Same domain on both sides, compared with L2: distances transfer exactly.
    pub fn identical_domains(seed: u64) -> Self {
        let mut c = Self::default_with_seed(seed);
        c.system = c.attacker.clone();
        c.system_oracle = OracleConfig::new(Metric::L2, 1.2, DisplayMode::RawDistance, 17).expect("valid preset");
        c
    }

    pub fn latent_scales(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.latent_dim).map(|k| self.latent_decay.powi(k as i32)).collect();
        let energy: f64 = raw.iter().map(|s| s * s).sum();
        let scale = (self.latent_dim as f64 / energy).sqrt();
        raw.into_iter().map(|s| s * scale).collect()
    }

    /// Auxiliary, victim and probe latents, disjoint draws.
    pub fn sample_latents(&self) -> Latents {
        let scales = self.latent_scales();
        let mut rng = stream_rng(self.seed, 0);
        let mut draw = |count: usize| -> Vec<DVector<f64>> {
            (0..count)
                .map(|_| {
                    DVector::from_iterator(
                        scales.len(),
                        scales.iter().map(|s| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            z * s
                        }),
                    )
                })
                .collect()
        };
        Latents {
            aux: draw(self.aux_count),
            victims: draw(self.victim_count),
            probes: draw(self.probe_count),
        }
    }

    pub fn run(&self) -> Result<CrossDomainOutcome> {
        let latents = self.sample_latents();
        cross_domain_attack(self, &latents.victims, &latents.probes, &latents.aux)
    }
}

#[derive(Clone, Debug)]
pub struct Latents {
    pub aux: Vec<DVector<f64>>,
    pub victims: Vec<DVector<f64>>,
    pub probes: Vec<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossDomainOutcome {
    pub sweep: SweepResult,
    pub calibration: AffineCalibration,
}

/// Runs the no-box attack for every count in `config.counts`.
///
/// Distances come from an oracle in the system domain; probes, basis and the
/// reported error live in the attacker domain.
pub fn cross_domain_attack(
    config: &CrossDomainConfig,
    victims: &[DVector<f64>],
    probes: &[DVector<f64>],
    aux: &[DVector<f64>],
) -> Result<CrossDomainOutcome> {
    let system = DomainMap::new(&config.system, config.latent_dim, config.seed)?;
    let attacker = DomainMap::new(&config.attacker, config.latent_dim, config.seed)?;

    let aux_att = attacker.embed_all(aux)?;
    let aux_sys = system.embed_all(aux)?;
    let rank = config.basis_rank.min(aux_att.len()).min(attacker.dim());
    let basis = fit_basis(&aux_att, rank)?;

    let mut oracle = Oracle::new(config.system_oracle.clone())?;

    // The attacker enrolls half of each auxiliary pair under her own ids and
    // presents the other half, reading system distances off the display.
    let pairs = config.calibration_pairs.min(aux.len() / 2);
    for i in 0..pairs {
        oracle.enroll(format!("calib-{i}"), aux_sys[i].clone())?;
    }
    let mut source = Vec::with_capacity(pairs);
    let mut target = Vec::with_capacity(pairs);
    for i in 0..pairs {
        let j = i + pairs;
        let r = oracle.authenticate(&format!("calib-{i}"), &format!("aux-{j}"), &aux_sys[j])?;
        source.push(oracle.config().leaked_distance(r.displayed_value));
        target.push(distance(&aux_att[i], &aux_att[j], Metric::L2)?);
    }
    let calibration = AffineCalibration::fit(&source, &target)?;

    let victims_sys = system.embed_all(victims)?;
    let victims_att = attacker.embed_all(victims)?;
    for (i, v) in victims_sys.iter().enumerate() {
        oracle.enroll(format!("victim-{i}"), v.clone())?;
    }
    let probe_photos: Vec<(String, Embedding)> = system
        .embed_all(probes)?
        .into_iter()
        .enumerate()
        .map(|(i, e)| (format!("probe-{i}"), e))
        .collect();
    let probes_att = attacker.embed_all(probes)?;

    let mut logs = Vec::with_capacity(victims.len());
    for i in 0..victims.len() {
        let leaked = collect(&oracle, &format!("victim-{i}"), &probe_photos)?;
        let mut log = ObservationLog::new(Metric::L2);
        for (obs, att) in leaked.entries.iter().zip(&probes_att) {
            log.push(obs.probe_id.clone(), att.clone(), calibration.apply(obs.leaked_distance))?;
        }
        logs.push(log);
    }

    let mut sweep_cfg = SweepConfig::new(config.counts.clone(), Solver::CrossDomain);
    sweep_cfg.rank_policy = config.rank_policy;
    sweep_cfg.judger = config.judger;
    let sweep = sweep_logs(&logs, &victims_att, Some(&basis), &sweep_cfg)?;
    Ok(CrossDomainOutcome { sweep, calibration })
}

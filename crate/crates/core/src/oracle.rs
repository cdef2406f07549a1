//! A simulated face-authentication kiosk that leaks a similarity score on
//! every attempt.
//!
//! The only attacker-visible output of an attempt is [`AuthResponse`]: the
//! accept flag and the displayed value, already rounded.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::{distance, Embedding, Metric};
use crate::error::{Error, Result};

/// How the kiosk turns a distance into the number it shows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisplayMode {
    RawDistance,
    OneMinusDistance,
    Percent,
}

impl DisplayMode {
    pub fn apply(self, d: f64) -> f64 {
        match self {
            DisplayMode::RawDistance => d,
            DisplayMode::OneMinusDistance => 1.0 - d,
            DisplayMode::Percent => 100.0 * (1.0 - d),
        }
    }

    /// Attacker-side inverse of [`DisplayMode::apply`].
    pub fn invert(self, shown: f64) -> f64 {
        match self {
            DisplayMode::RawDistance => shown,
            DisplayMode::OneMinusDistance => 1.0 - shown,
            DisplayMode::Percent => 1.0 - shown / 100.0,
        }
    }

    /// Largest distance error caused by showing `decimals` digits.
    pub fn quantization_bound(self, decimals: u32) -> f64 {
        let step = 0.5 * 10f64.powi(-(decimals as i32));
        match self {
            DisplayMode::Percent => step / 100.0,
            _ => step,
        }
    }
}

impl FromStr for DisplayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" | "raw-distance" => Ok(DisplayMode::RawDistance),
            "one-minus" | "one-minus-distance" => Ok(DisplayMode::OneMinusDistance),
            "percent" => Ok(DisplayMode::Percent),
            other => Err(Error::InvalidArgument(format!("unknown display mode `{other}`"))),
        }
    }
}

/// Rounds to `decimals` places by going through decimal formatting, so the
/// result is exactly what a screen with that many digits shows.
pub fn round_display(v: f64, decimals: u32) -> f64 {
    format!("{:.*}", decimals as usize, v)
        .parse()
        .expect("formatted float parses")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub metric: Metric,
    /// Accept iff distance ≤ threshold.
    pub threshold: f64,
    pub display_mode: DisplayMode,
    pub display_decimals: u32,
    /// Standard deviation of Gaussian noise added to the distance before
    /// thresholding and display.
    #[serde(default)]
    pub noise_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl OracleConfig {
    pub fn new(metric: Metric, threshold: f64, display_mode: DisplayMode, display_decimals: u32) -> Result<Self> {
        let cfg = Self {
            metric,
            threshold,
            display_mode,
            display_decimals,
            noise_scale: 0.0,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cosine at 0.63, shown as `1 - d` with four decimals.
    pub fn facenet512_like() -> Self {
        Self::new(Metric::Cosine, 0.63, DisplayMode::OneMinusDistance, 4).expect("valid preset")
    }

    pub fn with_noise(mut self, noise_scale: f64, seed: u64) -> Self {
        self.noise_scale = noise_scale;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidArgument("threshold must be positive".into()));
        }
        if self.display_decimals > 17 {
            return Err(Error::InvalidArgument("display_decimals must be at most 17".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidArgument("noise_scale must be non-negative".into()));
        }
        Ok(())
    }

    /// Displayed value to the distance it came from (up to rounding).
    pub fn leaked_distance(&self, displayed: f64) -> f64 {
        self.display_mode.invert(displayed)
    }
}

/// Enrolled templates keyed by victim id; every template has the same dim.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentDb {
    entries: BTreeMap<String, Embedding>,
}

impl EnrollmentDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> Option<usize> {
        self.entries.values().next().map(Embedding::dim)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn enroll(&mut self, id: impl Into<String>, embedding: Embedding) -> Result<()> {
        let id = id.into();
        if let Some(dim) = self.dim() {
            embedding.check_dim(dim)?;
        }
        if self.entries.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.entries.insert(id, embedding);
        Ok(())
    }

    pub fn lookup(&self, id: &str) -> Option<&Embedding> {
        self.entries.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuthResponse {
    pub accepted: bool,
    pub displayed_value: f64,
    pub attempt_index: u64,
}

/// One line of the transcript JSONL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub attempt: u64,
    pub claimed_id: String,
    pub probe_id: String,
    pub displayed: f64,
    pub accepted: bool,
}

#[derive(Debug, Default)]
struct Log {
    entries: Vec<TranscriptEntry>,
}

/// Enrollment database, display configuration and the append-only attempt log.
///
/// Authentication takes `&self`; the log append is the only synchronized step.
#[derive(Debug)]
pub struct Oracle {
    config: OracleConfig,
    db: EnrollmentDb,
    log: Mutex<Log>,
}

impl Oracle {
    pub fn new(config: OracleConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            db: EnrollmentDb::new(),
            log: Mutex::new(Log::default()),
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn db(&self) -> &EnrollmentDb {
        &self.db
    }

    pub fn enroll(&mut self, id: impl Into<String>, embedding: Embedding) -> Result<()> {
        self.db.enroll(id, embedding)
    }

    pub fn dim(&self) -> Option<usize> {
        self.db.dim()
    }

    pub fn authenticate(&self, claimed_id: &str, probe_id: &str, probe: &Embedding) -> Result<AuthResponse> {
        let enrolled = self
            .db
            .lookup(claimed_id)
            .ok_or_else(|| Error::UnknownId(claimed_id.to_string()))?;
        let true_distance = distance(enrolled, probe, self.config.metric)?;

        let mut log = self.log.lock().expect("transcript lock poisoned");
        let attempt = log.entries.len() as u64;
        let d = if self.config.noise_scale > 0.0 {
            // Noise depends only on (seed, attempt), not on thread scheduling.
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            rng.set_stream(attempt);
            let eps: f64 = StandardNormal.sample(&mut rng);
            (true_distance + self.config.noise_scale * eps).max(0.0)
        } else {
            true_distance
        };
        let accepted = d <= self.config.threshold;
        let displayed_value = round_display(self.config.display_mode.apply(d), self.config.display_decimals);
        log.entries.push(TranscriptEntry {
            attempt,
            claimed_id: claimed_id.to_string(),
            probe_id: probe_id.to_string(),
            displayed: displayed_value,
            accepted,
        });
        Ok(AuthResponse {
            accepted,
            displayed_value,
            attempt_index: attempt,
        })
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.log.lock().expect("transcript lock poisoned").entries.clone()
    }

    pub fn transcript_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in self.transcript() {
            out.push_str(&serde_json::to_string(&e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let state = OracleFile {
            config: self.config.clone(),
            enrollments: self.db.clone(),
            transcript: self.transcript(),
        };
        let text = serde_json::to_string_pretty(&state)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let state: OracleFile = serde_json::from_str(&text)?;
        state.config.validate()?;
        Ok(Self {
            config: state.config,
            db: state.enrollments,
            log: Mutex::new(Log {
                entries: state.transcript,
            }),
        })
    }
}

pub fn parse_transcript_jsonl(text: &str) -> Result<Vec<TranscriptEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct OracleFile {
    config: OracleConfig,
    enrollments: EnrollmentDb,
    #[serde(default)]
    transcript: Vec<TranscriptEntry>,
}

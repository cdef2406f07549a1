use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{Embedding, Metric};
use crate::error::{Error, Result};
use crate::oracle::{Oracle, OracleConfig, TranscriptEntry};

/// One `<photo, similarity>` pair as the attacker sees it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub probe_id: String,
    /// The probe in the attacker's embedding domain.
    pub probe: Embedding,
    /// Distance recovered from the displayed value.
    pub leaked_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationLog {
    pub metric: Metric,
    pub entries: Vec<Observation>,
}

impl ObservationLog {
    pub fn new(metric: Metric) -> Self {
        Self {
            metric,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, probe_id: impl Into<String>, probe: Embedding, leaked_distance: f64) -> Result<()> {
        if !(leaked_distance.is_finite() && leaked_distance >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "leaked distance must be finite and non-negative, got {leaked_distance}"
            )));
        }
        self.entries.push(Observation {
            probe_id: probe_id.into(),
            probe,
            leaked_distance,
        });
        Ok(())
    }

    /// The first `m` entries.
    pub fn prefix(&self, m: usize) -> ObservationLog {
        ObservationLog {
            metric: self.metric,
            entries: self.entries[..m.min(self.entries.len())].to_vec(),
        }
    }

    pub fn probes(&self) -> Vec<Embedding> {
        self.entries.iter().map(|o| o.probe.clone()).collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.entries.iter().map(|o| o.leaked_distance).collect()
    }

    /// Squared Euclidean distances, for the L2 solvers.
    pub fn squared_distances(&self) -> Result<Vec<f64>> {
        let convert = match self.metric {
            Metric::SquaredL2 => |d: f64| d,
            Metric::L2 => |d: f64| d * d,
            Metric::Cosine => {
                return Err(Error::InvalidArgument(
                    "cosine observations cannot feed an L2 solver".into(),
                ))
            }
        };
        Ok(self.entries.iter().map(|o| convert(o.leaked_distance)).collect())
    }

    /// Rebuilds a log from a stored transcript, looking probes up by id.
    /// Only entries claiming `victim_id` are used.
    pub fn from_transcript(
        transcript: &[TranscriptEntry],
        victim_id: &str,
        probes: &HashMap<String, Embedding>,
        config: &OracleConfig,
    ) -> Result<Self> {
        let mut log = ObservationLog::new(config.metric);
        for t in transcript.iter().filter(|t| t.claimed_id == victim_id) {
            let probe = probes
                .get(&t.probe_id)
                .ok_or_else(|| Error::UnknownId(t.probe_id.clone()))?;
            log.push(
                t.probe_id.clone(),
                probe.clone(),
                config.leaked_distance(t.displayed).max(0.0),
            )?;
        }
        Ok(log)
    }
}

/// Presents each probe to the oracle as `victim_id` and records what leaks.
pub fn collect(oracle: &Oracle, victim_id: &str, probes: &[(String, Embedding)]) -> Result<ObservationLog> {
    let config = oracle.config();
    let mut log = ObservationLog::new(config.metric);
    for (probe_id, probe) in probes {
        let r = oracle.authenticate(victim_id, probe_id, probe)?;
        // Rounding can push a zero distance a hair below zero after inversion.
        let leaked = config.leaked_distance(r.displayed_value).max(0.0);
        log.push(probe_id.clone(), probe.clone(), leaked)?;
    }
    Ok(log)
}

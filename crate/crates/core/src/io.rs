//! Text formats for embedding lists.
//!
//! CSV: a `dim=<n>,metric=<name>` header followed by one comma-separated
//! embedding per line. JSONL: one `{"id": ..., "values": [...]}` object per
//! line. Floats are written with 17 significant digits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{Embedding, Metric};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Picks the format from a file extension; anything but `.jsonl`/`.json` is CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}`"))),
        }
    }
}

/// Embeddings read from disk, with their ids.
///
/// CSV carries no ids, so rows are labeled by their zero-based index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub metric: Option<Metric>,
    pub ids: Vec<String>,
    pub embeddings: Vec<Embedding>,
}

impl EmbeddingSet {
    pub fn from_embeddings(embeddings: Vec<Embedding>, metric: Option<Metric>) -> Result<Self> {
        let dim = embeddings.first().map_or(0, Embedding::dim);
        for e in &embeddings {
            e.check_dim(dim)?;
        }
        Ok(Self {
            dim,
            metric,
            ids: (0..embeddings.len()).map(|i| i.to_string()).collect(),
            embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    values: Vec<f64>,
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(mut w: W, set: &EmbeddingSet) -> Result<()> {
    let metric = set.metric.map_or("none", Metric::name);
    let io = |e| Error::io("<csv>", e);
    writeln!(w, "dim={},metric={}", set.dim, metric).map_err(io)?;
    for e in &set.embeddings {
        e.check_dim(set.dim)?;
        let row: Vec<String> = e.values().iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<EmbeddingSet> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let header = header.map_err(|e| Error::io("<csv>", e))?;
    let (dim, metric) = parse_header(&header)?;
    let mut set = EmbeddingSet {
        dim,
        metric,
        ..Default::default()
    };
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io("<csv>", e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("bad number `{t}`: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: lineno,
                message: format!("row has {} values, header says {dim}", values.len()),
            });
        }
        let e = Embedding::new(values).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        set.ids.push(set.embeddings.len().to_string());
        set.embeddings.push(e);
    }
    Ok(set)
}

fn parse_header(header: &str) -> Result<(usize, Option<Metric>)> {
    let bad = |m: &str| Error::Parse {
        line: 1,
        message: m.to_string(),
    };
    let mut dim = None;
    let mut metric = None;
    for field in header.split(',') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| bad("header fields must be key=value"))?;
        match key.trim() {
            "dim" => dim = Some(value.trim().parse::<usize>().map_err(|_| bad("bad dim"))?),
            "metric" => {
                metric = match value.trim() {
                    "none" => None,
                    m => Some(m.parse::<Metric>().map_err(|e| bad(&e.to_string()))?),
                }
            }
            other => return Err(bad(&format!("unknown header key `{other}`"))),
        }
    }
    Ok((dim.ok_or_else(|| bad("header lacks dim"))?, metric))
}

pub fn write_jsonl<W: Write>(mut w: W, set: &EmbeddingSet) -> Result<()> {
    for (id, e) in set.ids.iter().zip(&set.embeddings) {
        let rec = JsonRecord {
            id: id.clone(),
            values: e.values().to_vec(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w).map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<EmbeddingSet> {
    let mut set = EmbeddingSet::default();
    for (idx, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| Error::Parse {
            line: idx + 1,
            message: m,
        };
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let e = Embedding::new(rec.values).map_err(|e| bad(e.to_string()))?;
        if set.embeddings.is_empty() {
            set.dim = e.dim();
        } else if e.dim() != set.dim {
            return Err(bad(format!("row has {} values, expected {}", e.dim(), set.dim)));
        }
        set.ids.push(rec.id);
        set.embeddings.push(e);
    }
    Ok(set)
}

pub fn save_set(path: &Path, set: &EmbeddingSet, format: Format) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Csv => write_csv(&mut w, set)?,
        Format::Jsonl => write_jsonl(&mut w, set)?,
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_embeddings(path: &Path, embeddings: &[Embedding], format: Format, metric: Option<Metric>) -> Result<()> {
    let set = EmbeddingSet::from_embeddings(embeddings.to_vec(), metric)?;
    save_set(path, &set, format)
}

pub fn load_embeddings(path: &Path, format: Format) -> Result<EmbeddingSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let r = BufReader::new(file);
    match format {
        Format::Csv => read_csv(r),
        Format::Jsonl => read_jsonl(r),
    }
    .map_err(|e| e.context(path.display().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::gaussian_embeddings;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn round_trip(set: &EmbeddingSet, format: Format) -> EmbeddingSet {
        let mut buf = Vec::new();
        match format {
            Format::Csv => write_csv(&mut buf, set).unwrap(),
            Format::Jsonl => write_jsonl(&mut buf, set).unwrap(),
        }
        match format {
            Format::Csv => read_csv(buf.as_slice()).unwrap(),
            Format::Jsonl => read_jsonl(buf.as_slice()).unwrap(),
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        let set = EmbeddingSet {
            dim: 4,
            metric: Some(Metric::L2),
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, &set).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "dim=4,metric=l2\n");
        let back = read_csv(buf.as_slice()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.metric, Some(Metric::L2));
    }

    #[test]
    fn single_row_is_exact() {
        let e = Embedding::new(vec![0.1, -2.5, 1e-300, 3.0e10]).unwrap();
        let set = EmbeddingSet::from_embeddings(vec![e.clone()], Some(Metric::Cosine)).unwrap();
        let back = round_trip(&set, Format::Csv);
        assert_eq!(back.embeddings, vec![e]);
    }

    #[test]
    fn random_round_trip_both_formats() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let es = gaussian_embeddings(100, 128, &mut rng).unwrap();
        let set = EmbeddingSet::from_embeddings(es, None).unwrap();
        for fmt in [Format::Csv, Format::Jsonl] {
            let back = round_trip(&set, fmt);
            assert_eq!(back.len(), 100);
            let max_err = back
                .embeddings
                .iter()
                .zip(&set.embeddings)
                .flat_map(|(a, b)| a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            assert!(max_err < 1e-12, "{fmt:?}: {max_err}");
        }
    }

    #[test]
    fn inconsistent_widths_are_rejected() {
        let csv = "dim=2,metric=l2\n1,2\n1,2,3\n";
        assert!(matches!(read_csv(csv.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let jsonl = "{\"id\":\"a\",\"values\":[1,2]}\n{\"id\":\"b\",\"values\":[1]}\n";
        assert!(matches!(read_jsonl(jsonl.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(read_csv("".as_bytes()).is_err());
        assert!(read_csv("dims=2\n".as_bytes()).is_err());
        assert!(read_csv("dim=2,metric=manhattan\n".as_bytes()).is_err());
        assert!(read_csv("dim=2,metric=l2\n1,x\n".as_bytes()).is_err());
        assert!(read_jsonl("{not json}\n".as_bytes()).is_err());
    }

    #[test]
    fn jsonl_keeps_ids() {
        let jsonl = "{\"id\":\"alice\",\"values\":[1.5,2]}\n";
        let set = read_jsonl(jsonl.as_bytes()).unwrap();
        assert_eq!(set.ids, vec!["alice".to_string()]);
        assert_eq!(set.dim, 2);
    }
}

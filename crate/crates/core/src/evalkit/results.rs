//! Persisted run results. Every float is written with exactly six decimals so
//! files are byte-stable across platforms.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::metrics::{summarize, viou, EvalSummary};
use crate::domain::{BoundingBox, Tube};
use crate::error::{Result, StvgError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeRecord {
    pub t_s: usize,
    pub t_e: usize,
    pub boxes: Vec<[f64; 4]>,
}

impl TubeRecord {
    pub fn from_tube(t: &Tube<f64>) -> Self {
        Self {
            t_s: t.t_s,
            t_e: t.t_e,
            boxes: t.boxes.iter().map(BoundingBox::corners).collect(),
        }
    }

    pub fn to_tube(&self) -> Result<Tube<f64>> {
        let boxes = self
            .boxes
            .iter()
            .map(|c| BoundingBox::from_corners(*c))
            .collect::<Result<Vec<_>>>()?;
        let tube = Tube::new(self.t_s, boxes)?;
        if tube.t_e != self.t_e {
            return Err(StvgError::Invalid(format!(
                "tube t_e {} disagrees with {} boxes from t_s {}",
                self.t_e,
                self.boxes.len(),
                self.t_s
            )));
        }
        Ok(tube)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub clip_id: String,
    pub query_id: String,
    /// `None` for a sample that failed; see `error`.
    #[serde(default)]
    pub prediction: Option<Prediction>,
    #[serde(default)]
    pub gt: Option<TubeRecord>,
    #[serde(default)]
    pub viou: Option<f64>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub tube: TubeRecord,
    pub track_id: String,
    /// Top-K frames whose hull is the predicted span.
    pub selected_frames: Vec<usize>,
    pub spatial: BranchRecord,
    pub temporal: BranchRecord,
    #[serde(default)]
    pub decomposition: Option<DecompositionRecord>,
    /// Consistency between forward and reversed spatial maps, when TAS ran.
    #[serde(default)]
    pub consistency: Option<f64>,
}

/// How one branch's attention map was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub prompt: String,
    /// Grounding token index; equals the special-token count when the map is
    /// the average over all special tokens.
    pub token: usize,
    #[serde(default)]
    pub lra: Option<LraRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub attribute: String,
    pub action: String,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LraRecord {
    pub initial_gap: f64,
    pub final_gap: f64,
    pub final_loss: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsHeader {
    /// Hex digest of the canonical run configuration.
    pub config_fingerprint: String,
    pub config: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub header: ResultsHeader,
    pub samples: Vec<SampleResult>,
    pub summary: Option<EvalSummary>,
}

impl RunResults {
    pub fn failures(&self) -> usize {
        self.samples.iter().filter(|s| s.error.is_some()).count()
    }

    /// Recomputes every vIoU from the persisted tubes. Samples with ground
    /// truth but no prediction (failures) count as 0; samples without ground
    /// truth are left out.
    pub fn recompute(&self, thresholds: &[f64]) -> Result<EvalSummary> {
        let mut per = Vec::new();
        for s in &self.samples {
            match (&s.prediction, &s.gt) {
                (Some(p), Some(g)) => per.push((s.query_id.clone(), viou(&p.tube.to_tube()?, &g.to_tube()?))),
                (None, Some(_)) => per.push((s.query_id.clone(), 0.0)),
                _ => {}
            }
        }
        summarize(&per, thresholds)
    }
}

/// Serializes `value` as pretty JSON with fixed six-decimal floats.
pub fn to_fixed_json<S: Serialize>(value: &S) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| out.extend(std::iter::repeat_n("  ", d));
    match v {
        Value::Number(n) if n.is_f64() => {
            let f = n.as_f64().expect("f64");
            // -0.000000 and 0.000000 must not differ between runs
            let s = format!("{f:.6}");
            out.push_str(if s == "-0.000000" { "0.000000" } else { &s });
        }
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) if items.iter().all(|i| !i.is_array() && !i.is_object()) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(out, item, depth);
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, depth + 1);
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                pad(out, depth + 1);
                let _ = write!(out, "{}: ", Value::String(k.clone()));
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push('}');
        }
        other => {
            let _ = write!(out, "{other}");
        }
    }
}

pub fn save_results(path: &Path, results: &RunResults) -> Result<()> {
    fs::write(path, to_fixed_json(results)?)?;
    Ok(())
}

pub fn load_results(path: &Path) -> Result<RunResults> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| StvgError::Parse {
        location: format!("{}:{}:{}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    })
}

/// `query_id,viou` rows followed by the summary rows.
pub fn metrics_csv(summary: &EvalSummary) -> String {
    let mut out = String::from("query_id,viou\n");
    for (q, v) in &summary.per_sample {
        let _ = writeln!(out, "{q},{v:.6}");
    }
    let _ = writeln!(out, "m_viou,{:.6}", summary.m_viou);
    for (t, v) in &summary.viou_at {
        let _ = writeln!(out, "viou@{t},{v:.6}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_have_six_decimals() {
        let v = json!({"a": 0.5, "b": [1.0, 2, -0.0], "c": {"d": 1e-9, "e": "x"}, "f": []});
        let s = to_fixed_json(&v).unwrap();
        assert_eq!(
            s,
            "{\n  \"a\": 0.500000,\n  \"b\": [1.000000, 2, 0.000000],\n  \"c\": {\n    \"d\": 0.000000,\n    \"e\": \"x\"\n  },\n  \"f\": []\n}\n"
        );
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"], json!(0.5));
    }

    #[test]
    fn results_roundtrip_and_recompute() {
        let b = BoundingBox::new(0.0, 0.0, 4.0, 4.0).unwrap();
        let pred = Tube::new(2, vec![b; 3]).unwrap();
        let gt = Tube::new(3, vec![b; 3]).unwrap();
        let r = RunResults {
            header: ResultsHeader {
                config_fingerprint: "abc".into(),
                config: json!({"k": 7}),
            },
            samples: vec![
                SampleResult {
                    clip_id: "c".into(),
                    query_id: "q".into(),
                    prediction: Some(Prediction {
                        tube: TubeRecord::from_tube(&pred),
                        track_id: "t".into(),
                        selected_frames: vec![2, 3, 4],
                        spatial: BranchRecord {
                            prompt: "Is there a in this video?".into(),
                            token: 1,
                            lra: None,
                        },
                        temporal: BranchRecord {
                            prompt: "Is there b in this video?".into(),
                            token: 0,
                            lra: Some(LraRecord {
                                initial_gap: -0.25,
                                final_gap: 0.125,
                                final_loss: 0.5,
                                steps: 10,
                            }),
                        },
                        decomposition: Some(DecompositionRecord {
                            attribute: "a".into(),
                            action: "b".into(),
                            provenance: "fallback".into(),
                        }),
                        consistency: Some(0.75),
                    }),
                    gt: Some(TubeRecord::from_tube(&gt)),
                    viou: Some(0.5),
                    error: None,
                },
                SampleResult {
                    clip_id: "d".into(),
                    query_id: "q2".into(),
                    prediction: None,
                    gt: Some(TubeRecord::from_tube(&gt)),
                    viou: Some(0.0),
                    error: Some("boom".into()),
                },
            ],
            summary: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        save_results(&p, &r).unwrap();
        let back = load_results(&p).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.failures(), 1);
        let s = back.recompute(&[0.3, 0.5]).unwrap();
        assert_eq!(s.m_viou, 0.25);
        assert_eq!(
            metrics_csv(&s),
            "query_id,viou\nq,0.500000\nq2,0.000000\nm_viou,0.250000\nviou@0.3,0.500000\nviou@0.5,0.000000\n"
        );
    }
}

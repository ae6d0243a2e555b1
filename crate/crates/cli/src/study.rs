//! Corpus analyses of the special tokens and of reversed-frame consistency.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::ensure;
use log::warn;
use serde_json::{Map, Value};
use stvg_core::dsth::{decompose_query, make_interrogative, PromptKind};
use stvg_core::evalkit::{resample_gt, to_fixed_json, track_iou, DatasetManifest, ManifestEntry};
use stvg_core::grounding::{select_track, track_score};
use stvg_core::gti::{attention_ratio, hit_ratio_study, rank_accuracy_study, GtiSample};
use stvg_core::tas::{consistency_accuracy_study, consistency_sample, reverse_map, ConsistencySample, GroupRow};
use stvg_core::TubeF64;

use crate::config::RunConfig;
use crate::pipeline::{prepare, sample_proposals, Engine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StudyKind {
    HitRatio,
    RankAcc,
    Consistency,
}

#[derive(Debug)]
pub struct StudyOutput {
    pub files: Vec<PathBuf>,
    pub n_samples: usize,
    pub skipped: usize,
}

struct Probe<'a> {
    entry: &'a ManifestEntry,
    sample: GtiSample<f64>,
}

fn ground_truth(cfg: &RunConfig, entry: &ManifestEntry) -> anyhow::Result<Option<TubeF64>> {
    let Some(g) = &entry.gt else { return Ok(None) };
    Ok(Some(resample_gt(g, &entry.clip(cfg.pipeline.n_frames_sampled)?)?))
}

fn probes<'a>(engine: &Engine, cfg: &RunConfig, manifest: &'a DatasetManifest) -> (Vec<Probe<'a>>, usize) {
    let mut out = Vec::new();
    let mut skipped = 0;
    for entry in &manifest.entries {
        let probe = (|| -> anyhow::Result<Option<Probe<'a>>> {
            let Some(gt) = ground_truth(cfg, entry)? else { return Ok(None) };
            let clip = entry.clip(cfg.pipeline.n_frames_sampled)?;
            let proposals = sample_proposals(manifest, entry, &clip)?;
            let attention = engine.special_tokens(&clip, &entry.query, None)?;
            Ok(Some(Probe {
                entry,
                sample: GtiSample {
                    attention,
                    gt,
                    proposals,
                    dims: clip.dims(),
                },
            }))
        })();
        match probe {
            Ok(Some(p)) => out.push(p),
            Ok(None) => skipped += 1,
            Err(e) => {
                warn!("skipping {}: {e:#}", entry.query_id());
                skipped += 1;
            }
        }
    }
    (out, skipped)
}

fn write(cfg: &RunConfig, name: &str, body: String, files: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let p = cfg.out_dir.join(name);
    fs::write(&p, body)?;
    files.push(p);
    Ok(())
}

/// Runs `kind` over the manifest in `cfg` and writes its files into `cfg.out_dir`.
pub fn run_study(kind: StudyKind, cfg: &RunConfig) -> anyhow::Result<StudyOutput> {
    let prepared = prepare(cfg)?;
    let (engine, manifest) = (&prepared.engine, &prepared.manifest);
    let mut files = Vec::new();
    match kind {
        StudyKind::HitRatio | StudyKind::RankAcc => {
            let (probes, skipped) = probes(engine, cfg, manifest);
            ensure!(!probes.is_empty(), "no usable samples with ground truth");
            let samples: Vec<_> = probes.iter().map(|p| p.sample.clone()).collect();
            if kind == StudyKind::HitRatio {
                let freq = hit_ratio_study(&samples, cfg.pipeline.epsilon)?;
                let obj: Map<String, Value> = freq
                    .iter()
                    .enumerate()
                    .map(|(i, f)| (format!("token_{i}"), Value::from(*f)))
                    .collect();
                write(cfg, "hit_ratio.json", to_fixed_json(&obj)?, &mut files)?;
                let width = freq.len();
                let mut csv = String::from("query_id,superior_token");
                for i in 0..width {
                    let _ = write!(csv, ",ratio_{i}");
                }
                csv.push('\n');
                for p in &probes {
                    let s = &p.sample;
                    let ratios = s
                        .attention
                        .maps
                        .iter()
                        .map(|m| attention_ratio(m, &s.gt, s.dims, cfg.pipeline.epsilon))
                        .collect::<stvg_core::Result<Vec<f64>>>()?;
                    let best = stvg_core::gti::superior_token(&s.attention, &s.gt, s.dims, cfg.pipeline.epsilon)?;
                    let _ = write!(csv, "{},{best}", p.entry.query_id());
                    for r in ratios {
                        let _ = write!(csv, ",{r:.6}");
                    }
                    csv.push('\n');
                }
                write(cfg, "hit_ratio_samples.csv", csv, &mut files)?;
            } else {
                let acc = rank_accuracy_study(&samples)?;
                let obj: Map<String, Value> = acc
                    .iter()
                    .enumerate()
                    .map(|(r, a)| (r.to_string(), Value::from(*a)))
                    .collect();
                write(cfg, "rank_accuracy.json", to_fixed_json(&obj)?, &mut files)?;
                let mut csv = String::from("query_id,rank,token,track_iou,hit\n");
                for p in &probes {
                    let s = &p.sample;
                    for (rank, tok) in s.attention.activation_ranking().into_iter().enumerate() {
                        let best = select_track(&track_score(&s.attention.maps[tok], &s.proposals, s.dims)?)?;
                        let iou = track_iou(&s.proposals[best], &s.gt);
                        let _ = writeln!(csv, "{},{rank},{tok},{iou:.6},{}", p.entry.query_id(), u8::from(iou >= 0.5));
                    }
                }
                write(cfg, "rank_accuracy_samples.csv", csv, &mut files)?;
            }
            Ok(StudyOutput {
                files,
                n_samples: probes.len(),
                skipped,
            })
        }
        StudyKind::Consistency => {
            let mut rows: Vec<(&ManifestEntry, ConsistencySample)> = Vec::new();
            let mut skipped = 0;
            for entry in &manifest.entries {
                match consistency_of(engine, prepared.client.as_deref(), cfg, manifest, entry) {
                    Ok(Some(s)) => rows.push((entry, s)),
                    Ok(None) => skipped += 1,
                    Err(e) => {
                        warn!("skipping {}: {e:#}", entry.query_id());
                        skipped += 1;
                    }
                }
            }
            let samples: Vec<_> = rows.iter().map(|(_, s)| *s).collect();
            let groups = consistency_accuracy_study(&samples)?;
            write(cfg, "consistency.csv", groups_csv(&groups), &mut files)?;
            let mut csv = String::from("query_id,consistency,accuracy\n");
            for (e, s) in &rows {
                let _ = writeln!(csv, "{},{:.6},{:.6}", e.query_id(), s.consistency, s.accuracy);
            }
            write(cfg, "consistency_samples.csv", csv, &mut files)?;
            Ok(StudyOutput {
                files,
                n_samples: rows.len(),
                skipped,
            })
        }
    }
}

fn consistency_of(
    engine: &Engine,
    client: Option<&dyn stvg_core::dsth::DecompositionClient>,
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
) -> anyhow::Result<Option<ConsistencySample>> {
    let Some(gt) = ground_truth(cfg, entry)? else { return Ok(None) };
    let clip = entry.clip(cfg.pipeline.n_frames_sampled)?;
    let proposals = sample_proposals(manifest, entry, &clip)?;
    let query = entry.query_record()?;
    let prompt = if cfg.flags.spatial_prompt {
        make_interrogative(&decompose_query(&query, client).attribute_text, PromptKind::Spatial)?.text
    } else {
        query.text.clone()
    };
    let tune = cfg.flags.spatial_prompt;
    let (fwd, _) = engine.branch(cfg, &clip, &prompt, PromptKind::Spatial, tune)?;
    let (rev, _) = engine.branch(cfg, &clip.reversed(), &prompt, PromptKind::Spatial, tune)?;
    Ok(Some(consistency_sample(&fwd, &reverse_map(&rev), &proposals, &gt, clip.dims())?))
}

pub fn groups_csv(rows: &[GroupRow]) -> String {
    let mut out = String::from("group_index,mean_consistency,mean_accuracy,n_samples\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{}",
            r.group_index, r.mean_consistency, r.mean_accuracy, r.n_samples
        );
    }
    out
}

//! Batch grounding over a manifest.
//!
//! Per sample: decompose the query, tune the spatial and temporal prompts,
//! build both grounding maps (the spatial one assembled with a reversed-frame
//! run when TAS is on), pick the track and span, score against ground truth.
//! Samples run on a worker pool; the calling thread is the only writer of
//! results and heatmaps, and orders them by manifest position, so output does
//! not depend on scheduling.

use std::fmt;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use anyhow::{anyhow, bail, Context};
use log::{info, warn};
use stvg_core::backend::{Backend, BackendSession, LatentPrompt, ScriptedBackend, ToyBackend, ToyDims};
use stvg_core::dsth::{
    decompose_query, make_interrogative, optimize_prompt, DecompositionClient, FixtureClient, PromptKind,
    SubprocessClient,
};
use stvg_core::evalkit::{
    load_manifest, load_proposals, metrics_csv, resample_gt, resample_tracks, save_results, summarize, viou,
    BranchRecord, DatasetManifest, DecompositionRecord, LraRecord, ManifestEntry, Prediction, ResultsHeader,
    RunResults, SampleResult, TubeRecord, DEFAULT_THRESHOLDS,
};
use stvg_core::grounding::joint_inference;
use stvg_core::gti::{aggregate_attention, average_special_tokens, select_grounding_token, SpecialTokenAttention};
use stvg_core::tas::{assemble_spatial, consistency_score, reverse_map};
use stvg_core::{AttentionMapF64, FrameDims, TrackProposalF64, TubeF64, VideoClip};

use crate::cache::{default_cache_dir, AttentionCache};
use crate::config::{canonical_config, fingerprint, sha256_file, BackendSpec, DecomposerSpec, Flags, RunConfig};
use crate::heatmap::emit_heatmap;

/// A problem with the configuration or inputs, detected before any sample ran.
#[derive(Debug)]
pub struct ConfigError(pub anyhow::Error);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(e: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(ConfigError(e))
}

pub struct LoadedBackend {
    pub backend: Box<dyn Backend<f64>>,
    /// Identity used in cache keys and the config fingerprint.
    pub identity: String,
}

pub fn build_backend(spec: &BackendSpec) -> anyhow::Result<LoadedBackend> {
    match spec {
        BackendSpec::Toy { seed } => {
            let toy = ToyBackend::<f64>::new(*seed, ToyDims::default())?;
            let identity = format!("toy:{seed}:{}", toy.parameter_checksum());
            Ok(LoadedBackend {
                backend: Box::new(toy),
                identity,
            })
        }
        BackendSpec::Scripted { dir } => {
            let backend = ScriptedBackend::<f64>::open(dir)
                .with_context(|| format!("opening fixture dir {}", dir.display()))?;
            let identity = format!("scripted:{}", sha256_file(&dir.join("index.json"))?);
            Ok(LoadedBackend {
                backend: Box::new(backend),
                identity,
            })
        }
        BackendSpec::External { id } => bail!("no external backend adapter registered under {id:?}"),
    }
}

pub fn build_decomposer(spec: &Option<DecomposerSpec>) -> anyhow::Result<Option<Box<dyn DecompositionClient>>> {
    Ok(match spec {
        None => None,
        Some(DecomposerSpec::Fixture(p)) => Some(Box::new(
            FixtureClient::load(p).with_context(|| format!("loading decomposition fixture {}", p.display()))?,
        )),
        Some(DecomposerSpec::Command(argv)) => {
            let (program, args) = argv.split_first().ok_or_else(|| anyhow!("empty decomposer command"))?;
            Some(Box::new(SubprocessClient {
                program: program.clone(),
                args: args.to_vec(),
            }))
        }
    })
}

/// Backend plus optional cache; everything a sample needs to query the model.
pub struct Engine {
    pub backend: Box<dyn Backend<f64>>,
    pub cache: Option<AttentionCache>,
}

impl Engine {
    pub fn session(
        &self,
        video: &VideoClip,
        prompt: &str,
        latent: Option<&LatentPrompt<f64>>,
    ) -> anyhow::Result<BackendSession<f64>> {
        match &self.cache {
            Some(c) => c.run(self.backend.as_ref(), video, prompt, latent),
            None => Ok(self.backend.run(video, prompt, latent.filter(|l| !l.is_zero()))?),
        }
    }

    pub fn special_tokens(
        &self,
        video: &VideoClip,
        prompt: &str,
        latent: Option<&LatentPrompt<f64>>,
    ) -> anyhow::Result<SpecialTokenAttention<f64>> {
        let s = self.session(video, prompt, latent)?;
        Ok(aggregate_attention(&s.raw_attention, &s.layout)?)
    }

    /// Grounding map for `prompt`, with a latent tuned by LRA when `tune` is
    /// set and the backend is differentiable.
    pub fn branch(
        &self,
        cfg: &RunConfig,
        video: &VideoClip,
        prompt: &str,
        kind: PromptKind,
        tune: bool,
    ) -> anyhow::Result<(AttentionMapF64, BranchRecord)> {
        let (latent, lra) = if tune && self.backend.differentiable() {
            let question = stvg_core::dsth::InterrogativePrompt {
                text: prompt.to_string(),
                kind,
            };
            let o = optimize_prompt(self.backend.as_ref(), video, &question, &cfg.pipeline.lra)?;
            let record = LraRecord {
                initial_gap: o.initial_gap,
                final_gap: o.final_gap,
                final_loss: o.final_loss,
                steps: o.steps_taken,
            };
            (Some(o.latent), Some(record))
        } else {
            (None, None)
        };
        let sta = self.special_tokens(video, prompt, latent.as_ref())?;
        let map = if cfg.flags.gti {
            select_grounding_token(&sta)?.1
        } else {
            average_special_tokens(&sta)?
        };
        let record = BranchRecord {
            prompt: prompt.to_string(),
            token: map.token_index,
            lra,
        };
        Ok((map, record))
    }
}

/// Proposals on the sampled axis; an empty list is an error.
pub fn sample_proposals(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    clip: &VideoClip,
) -> anyhow::Result<Vec<TrackProposalF64>> {
    let tracks = load_proposals(&manifest.proposals_path(entry), entry.dims(), entry.frames)?;
    let proposals = resample_tracks(&tracks, clip);
    if proposals.is_empty() {
        return Err(stvg_core::StvgError::NoProposals.into());
    }
    Ok(proposals)
}

pub struct SampleOutput {
    pub prediction: Prediction,
    pub tube: TubeF64,
    pub spatial_map: AttentionMapF64,
    pub temporal_map: AttentionMapF64,
}

/// Full pipeline for one manifest entry.
pub fn ground_sample(
    engine: &Engine,
    client: Option<&dyn DecompositionClient>,
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
) -> anyhow::Result<SampleOutput> {
    let flags: Flags = cfg.flags;
    let clip = entry.clip(cfg.pipeline.n_frames_sampled)?;
    let query = entry.query_record()?;
    let proposals = sample_proposals(manifest, entry, &clip)?;
    let dims: FrameDims = clip.dims();

    let pair = flags.dsth().then(|| decompose_query(&query, client));
    let spatial_prompt = match &pair {
        Some(p) if flags.spatial_prompt => make_interrogative(&p.attribute_text, PromptKind::Spatial)?.text,
        _ => query.text.clone(),
    };
    let temporal_prompt = match &pair {
        Some(p) if flags.temporal_prompt => make_interrogative(&p.action_text, PromptKind::Temporal)?.text,
        _ => query.text.clone(),
    };

    let (forward, spatial) = engine.branch(cfg, &clip, &spatial_prompt, PromptKind::Spatial, flags.spatial_prompt)?;
    let (spatial_map, consistency) = if flags.tas {
        // the reversed run tunes its own latent on the reversed clip
        let (rev, _) = engine.branch(cfg, &clip.reversed(), &spatial_prompt, PromptKind::Spatial, flags.spatial_prompt)?;
        let c = consistency_score(&forward, &reverse_map(&rev), &proposals, dims)?;
        (assemble_spatial(&forward, &rev)?, Some(c.value))
    } else {
        (forward, None)
    };
    let (temporal_map, temporal) =
        engine.branch(cfg, &clip, &temporal_prompt, PromptKind::Temporal, flags.temporal_prompt)?;

    let k = cfg.pipeline.top_k_frames.min(clip.frame_count);
    let joint = joint_inference(&spatial_map, &temporal_map, &proposals, dims, k)?;
    let track = &proposals[joint.track_index];
    let prediction = Prediction {
        tube: TubeRecord::from_tube(&joint.tube),
        track_id: track.track_id.clone(),
        selected_frames: joint.span.selected.clone(),
        spatial,
        temporal,
        decomposition: pair.map(|p| DecompositionRecord {
            attribute: p.attribute_text,
            action: p.action_text,
            provenance: serde_json::to_value(p.provenance)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
        }),
        consistency,
    };
    Ok(SampleOutput {
        prediction,
        tube: joint.tube,
        spatial_map,
        temporal_map,
    })
}

#[derive(Debug)]
pub struct RunOutcome {
    pub results: RunResults,
    pub results_path: PathBuf,
    pub metrics_path: PathBuf,
}

impl RunOutcome {
    pub fn failures(&self) -> usize {
        self.results.failures()
    }

    /// More than half of the samples failed.
    pub fn majority_failed(&self) -> bool {
        2 * self.failures() > self.results.samples.len()
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub struct Prepared {
    pub manifest: DatasetManifest,
    pub engine: Engine,
    pub client: Option<Box<dyn DecompositionClient>>,
    pub header: ResultsHeader,
}

/// Validates the config and loads everything a run needs. Every error here
/// is a [`ConfigError`].
pub fn prepare(cfg: &RunConfig) -> anyhow::Result<Prepared> {
    cfg.validate().map_err(config_err)?;
    let manifest = load_manifest(&cfg.manifest)
        .with_context(|| format!("loading manifest {}", cfg.manifest.display()))
        .map_err(config_err)?;
    let loaded = build_backend(&cfg.backend).map_err(config_err)?;
    let client = build_decomposer(&cfg.decomposer).map_err(config_err)?;
    if cfg.flags.dsth() && !loaded.backend.differentiable() {
        warn!(
            "backend {} is not differentiable; prompts run with zero latents",
            loaded.backend.name()
        );
    }
    let cache = cfg
        .cache_dir
        .as_ref()
        .map(|d| AttentionCache::open(d, loaded.identity.clone()))
        .transpose()
        .map_err(config_err)?;
    let config = canonical_config(cfg, &loaded.identity).map_err(config_err)?;
    let header = ResultsHeader {
        config_fingerprint: fingerprint(&config),
        config,
    };
    Ok(Prepared {
        manifest,
        engine: Engine {
            backend: loaded.backend,
            cache,
        },
        client,
        header,
    })
}

/// Runs every sample and writes `results.json`, `metrics.csv` and, when
/// enabled, `heatmaps/`. Sample failures are recorded, not returned.
pub fn run_pipeline(cfg: &RunConfig) -> anyhow::Result<RunOutcome> {
    let Prepared {
        manifest,
        engine,
        client,
        header,
    } = prepare(cfg)?;
    let entries = &manifest.entries;
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    let mut slots: Vec<Option<(SampleResult, Option<SampleOutput>)>> = (0..entries.len()).map(|_| None).collect();

    std::thread::scope(|scope| {
        for _ in 0..cfg.jobs.min(entries.len().max(1)) {
            let tx = tx.clone();
            let (next, engine, client, manifest) = (&next, &engine, client.as_deref(), &manifest);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(entry) = manifest.entries.get(i) else { break };
                let out = evaluate_entry(engine, client, cfg, manifest, entry);
                if tx.send((i, out)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, out) in rx {
            slots[i] = Some(out);
        }
    });

    let mut samples = Vec::with_capacity(entries.len());
    for (i, slot) in slots.into_iter().enumerate() {
        let (sample, output) = slot.ok_or_else(|| anyhow!("worker dropped sample {i}"))?;
        if let (true, Some(o)) = (cfg.heatmaps, &output) {
            let dir = cfg
                .out_dir
                .join("heatmaps")
                .join(format!("{i:04}_{}", safe_name(&sample.query_id)));
            write_heatmaps(&dir, o)?;
        }
        samples.push(sample);
    }

    let per: Vec<(String, f64)> = samples
        .iter()
        .filter_map(|s| s.viou.map(|v| (s.query_id.clone(), v)))
        .collect();
    let summary = summarize(&per, &DEFAULT_THRESHOLDS).ok();
    let results = RunResults {
        header,
        samples,
        summary,
    };
    let results_path = cfg.out_dir.join("results.json");
    save_results(&results_path, &results)?;
    let metrics_path = cfg.out_dir.join("metrics.csv");
    let csv = match &results.summary {
        Some(s) => metrics_csv(s),
        None => "query_id,viou\n".to_string(),
    };
    fs::write(&metrics_path, csv)?;
    let outcome = RunOutcome {
        results,
        results_path,
        metrics_path,
    };
    info!(
        "{} samples, {} failed, fingerprint {}",
        outcome.results.samples.len(),
        outcome.failures(),
        outcome.results.header.config_fingerprint
    );
    Ok(outcome)
}

fn evaluate_entry(
    engine: &Engine,
    client: Option<&dyn DecompositionClient>,
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
) -> (SampleResult, Option<SampleOutput>) {
    let gt = entry
        .gt
        .as_ref()
        .map(|g| entry.clip(cfg.pipeline.n_frames_sampled).and_then(|c| resample_gt(g, &c)));
    let mut sample = SampleResult {
        clip_id: entry.clip_id.clone(),
        query_id: entry.query_id().to_string(),
        prediction: None,
        gt: None,
        viou: None,
        error: None,
    };
    let gt = match gt.transpose() {
        Ok(g) => g,
        Err(e) => {
            sample.error = Some(format!("ground truth: {e}"));
            return (sample, None);
        }
    };
    sample.gt = gt.as_ref().map(TubeRecord::from_tube);
    let run = catch_unwind(AssertUnwindSafe(|| ground_sample(engine, client, cfg, manifest, entry)));
    match run {
        Ok(Ok(out)) => {
            sample.viou = gt.as_ref().map(|g| viou(&out.tube, g));
            sample.prediction = Some(out.prediction.clone());
            (sample, Some(out))
        }
        Ok(Err(e)) => {
            warn!("sample {} failed: {e:#}", sample.query_id);
            sample.error = Some(format!("{e:#}"));
            sample.viou = gt.is_some().then_some(0.0);
            (sample, None)
        }
        Err(p) => {
            let msg = panic_message(p);
            warn!("sample {} panicked: {msg}", sample.query_id);
            sample.error = Some(format!("panic: {msg}"));
            sample.viou = gt.is_some().then_some(0.0);
            (sample, None)
        }
    }
}

fn write_heatmaps(dir: &Path, o: &SampleOutput) -> anyhow::Result<()> {
    for t in 0..o.spatial_map.grid().0 {
        emit_heatmap(&o.spatial_map, t, &dir.join(format!("spatial_t{t:03}.pgm")))?;
        emit_heatmap(&o.temporal_map, t, &dir.join(format!("temporal_t{t:03}.pgm")))?;
    }
    Ok(())
}

/// Cache directory for `cfg`: explicit, else `$STVG_CACHE_DIR`, else under the output dir.
pub fn resolve_cache_dir(explicit: Option<PathBuf>, out_dir: &Path) -> PathBuf {
    explicit.unwrap_or_else(|| default_cache_dir(out_dir))
}

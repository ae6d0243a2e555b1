//! Corpus builders shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stvg_core::backend::fixture::FixtureRecord;
use stvg_core::evalkit::{save_manifest, save_proposals, DatasetManifest, GtRecord, ManifestEntry, SourceTrack};
use stvg_core::{BoundingBoxF64, FrameOrder, TokenLayout};

pub const SUBJECTS: [&str; 6] = ["a man", "the woman", "a child", "the dog", "an old man", "a girl"];
pub const ATTRIBUTES: [&str; 5] = ["in a red coat", "with a hat", "in the orange shirt", "with glasses", "on the left"];
pub const ACTIONS: [&str; 5] = ["walks to the door", "sits down", "picks up a cup", "turns around", "waves"];

pub fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBoxF64 {
    BoundingBoxF64::new(x0, y0, x1, y1).unwrap()
}

/// Track visible on `frames`, always with box `b`.
pub fn track(id: &str, frames: impl IntoIterator<Item = usize>, b: BoundingBoxF64) -> SourceTrack {
    SourceTrack {
        id: id.into(),
        boxes: frames.into_iter().map(|f| (f, b)).collect(),
    }
}

pub struct Sample {
    pub clip_id: String,
    pub query_id: String,
    pub query: String,
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub gt: Option<GtRecord>,
    pub tracks: Vec<SourceTrack>,
}

/// Writes `manifest.json` and one proposal file per sample under `dir`.
pub fn write_corpus(dir: &Path, samples: &[Sample]) -> PathBuf {
    fs::create_dir_all(dir.join("proposals")).unwrap();
    let mut entries = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let rel = format!("proposals/{i:04}.json");
        save_proposals(&dir.join(&rel), &s.tracks).unwrap();
        entries.push(ManifestEntry {
            clip_id: s.clip_id.clone(),
            query_id: Some(s.query_id.clone()),
            frames: s.frames,
            width: s.width,
            height: s.height,
            query: s.query.clone(),
            gt: s.gt.clone(),
            proposals: rel,
        });
    }
    let path = dir.join("manifest.json");
    save_manifest(
        &path,
        &DatasetManifest {
            entries,
            base_dir: dir.to_path_buf(),
        },
    )
    .unwrap();
    path
}

pub fn random_query(rng: &mut impl Rng) -> String {
    format!(
        "{} {} {}",
        SUBJECTS[rng.gen_range(0..SUBJECTS.len())],
        ATTRIBUTES[rng.gen_range(0..ATTRIBUTES.len())],
        ACTIONS[rng.gen_range(0..ACTIONS.len())]
    )
}

/// `n` toy-backend samples on 96x96 clips of 40 source frames. Three tracks
/// occupy the three grid columns; the target is track 0 over a random span.
pub fn toy_corpus(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Sample> = (0..n)
        .map(|i| {
            let t_s = rng.gen_range(0..20);
            let t_e = rng.gen_range(t_s + 5..40);
            let col = |j: usize| bx(32.0 * j as f64 + 2.0, 2.0, 32.0 * j as f64 + 30.0, 94.0);
            let target = rng.gen_range(0..3);
            Sample {
                clip_id: format!("clip{i:03}"),
                query_id: format!("q{i:03}"),
                query: random_query(&mut rng),
                frames: 40,
                width: 96,
                height: 96,
                gt: Some(GtRecord {
                    t_s,
                    t_e,
                    boxes: vec![col(target).corners(); t_e - t_s + 1],
                }),
                tracks: (0..3).map(|j| track(&format!("t{j}"), 0..40, col(j))).collect(),
            }
        })
        .collect();
    write_corpus(dir, &samples)
}

/// Layout of a scripted fixture: one system and one query token around the
/// visual grid.
pub fn layout(grid: (usize, usize, usize), n_role: usize) -> TokenLayout {
    TokenLayout::new(1, 1, n_role, grid).unwrap()
}

/// Single-layer, single-head attention whose special-token rows over the
/// visual span are exactly `maps` (in presentation order). Remaining mass of
/// every row goes to the system token.
pub fn attention_from_maps(grid: (usize, usize, usize), maps: &[Array3<f64>]) -> (TokenLayout, Array4<f32>) {
    let l = layout(grid, maps.len());
    let n = l.total();
    let mut a = Array4::<f32>::zeros((1, 1, n, n));
    for r in 0..n {
        a[[0, 0, r, 0]] = 1.0;
    }
    let vis = l.visual_range();
    for (k, row) in l.role_range().enumerate() {
        let mut used = 0.0f32;
        for (j, v) in maps[k].iter().enumerate() {
            a[[0, 0, row, vis.start + j]] = *v as f32;
            used += *v as f32;
        }
        a[[0, 0, row, 0]] = (1.0 - used).max(0.0);
    }
    (l, a)
}

pub fn logits(gap: f32) -> BTreeMap<String, f32> {
    BTreeMap::from([("yes".to_string(), -0.5 + gap / 2.0), ("no".to_string(), -0.5 - gap / 2.0)])
}

pub fn record(clip_id: &str, prompt: &str, order: FrameOrder, grid: (usize, usize, usize), maps: &[Array3<f64>]) -> FixtureRecord {
    let (layout, attention) = attention_from_maps(grid, maps);
    FixtureRecord {
        clip_id: clip_id.into(),
        prompt: prompt.into(),
        order,
        layout,
        attention,
        logits: logits(0.0),
    }
}

/// Scripted corpus of `n` samples on 6-frame, 96x96 clips with a 3x3 grid
/// and three special tokens. Every prompt the pipeline can issue (query,
/// attribute and action questions, both frame orders) has a random fixture
/// with distinct values. Returns `(manifest, fixture dir, decomposition file)`.
pub fn scripted_corpus(dir: &Path, n: usize, seed: u64) -> (PathBuf, PathBuf, PathBuf) {
    use stvg_core::backend::fixture::write_fixture;
    use stvg_core::dsth::{make_interrogative, PromptKind};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = (6, 3, 3);
    let mut samples = Vec::new();
    let mut records = Vec::new();
    let mut decomp = serde_json::Map::new();
    for i in 0..n {
        let clip_id = format!("sc{i:03}");
        let query_id = format!("sq{i:03}");
        let subject = SUBJECTS[rng.gen_range(0..SUBJECTS.len())];
        let attribute = format!("{subject} {}", ATTRIBUTES[rng.gen_range(0..ATTRIBUTES.len())]);
        let action = format!("{subject} {}", ACTIONS[rng.gen_range(0..ACTIONS.len())]);
        let query = format!("{attribute} {}", &action[subject.len() + 1..]);
        decomp.insert(query_id.clone(), serde_json::json!({"attribute": attribute, "action": action}));
        let prompts = [
            query.clone(),
            make_interrogative(&attribute, PromptKind::Spatial).unwrap().text,
            make_interrogative(&action, PromptKind::Temporal).unwrap().text,
        ];
        for p in &prompts {
            for order in [FrameOrder::Forward, FrameOrder::Reversed] {
                let maps: Vec<Array3<f64>> = (0..3)
                    .map(|_| Array3::from_shape_fn(grid, |_| rng.gen_range(0.001..0.018)))
                    .collect();
                records.push(record(&clip_id, p, order, grid, &maps));
            }
        }
        let col = |j: usize| bx(32.0 * j as f64 + 2.0, 2.0, 32.0 * j as f64 + 30.0, 94.0);
        samples.push(Sample {
            clip_id,
            query_id,
            query,
            frames: 6,
            width: 96,
            height: 96,
            gt: Some(GtRecord {
                t_s: 1,
                t_e: 4,
                boxes: vec![col(1).corners(); 4],
            }),
            tracks: (0..3).map(|j| track(&format!("t{j}"), 0..6, col(j))).collect(),
        });
    }
    let manifest = write_corpus(dir, &samples);
    let fixtures = dir.join("fixtures");
    write_fixture(&fixtures, 1, &records).unwrap();
    let decomp_path = dir.join("decompositions.json");
    fs::write(&decomp_path, serde_json::to_vec_pretty(&decomp).unwrap()).unwrap();
    (manifest, fixtures, decomp_path)
}

pub fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Relative paths and contents of every file under `dir`, sorted.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), read(&p)));
            }
        }
    }
    out.sort();
    out
}

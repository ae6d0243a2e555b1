//! Latent tuning moves attention toward the region the answer depends on.
//!
//! Each task is a one-layer, one-head model whose single special token is the
//! grounding token. Region R is painted a distinct color and the answer head
//! is rewired so "yes" rises with R's value contrast against the other
//! patches. Keys are made blind to the direction in which latent updates
//! raise that readout, so attention moves only through the contrast.

use ndarray::{Array1, Array2};
use stvg_core::backend::toy::{Paint, ToyParams};
use stvg_core::backend::{ToyBackend, ToyDims};
use stvg_core::dsth::{highlighted_attention, make_interrogative, optimize_prompt, LraConfig, PromptKind};
use stvg_core::VideoClip;

const R: (usize, usize) = (1, 1);
const COLOR: [f64; 3] = [1.0, 0.0, 1.0];

fn patch_embedding(p: &ToyParams<f64>, cell: usize, color: [f64; 3]) -> Array1<f64> {
    let mut e = &p.patch_bias + &p.cell_pos.row(cell);
    for (ch, c) in color.iter().enumerate() {
        e.scaled_add(*c, &p.patch_proj.row(ch));
    }
    e
}

fn planted(seed: u64) -> (ToyBackend<f64>, VideoClip) {
    let dims = ToyDims {
        layers: 1,
        heads: 1,
        n_role: 1,
        ..ToyDims::default()
    };
    let mut p = ToyParams::<f64>::init(seed, &dims);
    let clip = VideoClip::new(format!("planted-{seed}"), vec![0, 5, 10], 60, 60).unwrap();
    let be = ToyBackend::from_params(dims, p.clone()).unwrap();
    let hw = dims.grid_h * dims.grid_w;
    let r_cell = R.0 * dims.grid_w + R.1;
    let mut others = Array1::<f64>::zeros(dims.embed);
    for cell in (0..hw).filter(|c| *c != r_cell) {
        let color = be.patch_color(&clip.clip_id, 0, (cell / dims.grid_w, cell % dims.grid_w));
        others += &patch_embedding(&p, cell, color);
    }
    let contrast = patch_embedding(&p, r_cell, COLOR) - others / (hw - 1) as f64;
    let layer = &mut p.layers[0];
    let u: Array1<f64> = contrast.dot(&layer.wv).dot(&layer.wo);
    let u = &u / u.dot(&u).sqrt();
    // Keys ignore the direction along which latent updates raise the value
    // readout, so attention can only move through R's contrast.
    let g = layer.wv.dot(&layer.wo.dot(&u));
    let g = &g / g.dot(&g).sqrt();
    let proj = Array2::<f64>::eye(dims.embed) - outer(&g, &g);
    layer.wk = proj.dot(&layer.wk);
    p.head.column_mut(1).assign(&u);
    p.head.column_mut(2).assign(&-&u);
    let be = ToyBackend::from_params(dims, p).unwrap().with_paint(Paint {
        clip_id: clip.clip_id.clone(),
        frames: None,
        cells: vec![R],
        color: COLOR,
    });
    (be, clip)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

fn max_in_region(map: &ndarray::Array3<f64>) -> bool {
    let (_, h, w) = map.dim();
    let flat = map.iter().copied().enumerate().fold((0, f64::MIN), |b, (i, v)| if v > b.1 { (i, v) } else { b });
    let cell = flat.0 % (h * w);
    cell == R.0 * w + R.1
}

#[test]
fn tuning_pulls_map_maximum_into_planted_region() {
    let prompt = make_interrogative("a purple square", PromptKind::Spatial).unwrap();
    // The default step barely moves attention within ten steps on this model.
    let cfg = LraConfig {
        step_size: 0.1,
        ..Default::default()
    };
    let (mut before, mut after) = (0, 0);
    for seed in 0..50 {
        let (be, clip) = planted(seed);
        let m0 = highlighted_attention(&be, &clip, &prompt.text, None).unwrap();
        let out = optimize_prompt(&be, &clip, &prompt, &cfg).unwrap();
        let m1 = highlighted_attention(&be, &clip, &prompt.text, Some(&out.latent)).unwrap();
        before += max_in_region(&m0.values) as usize;
        after += max_in_region(&m1.values) as usize;
    }
    println!("map max inside R: before {before}/50, after {after}/50");
    assert!(after > before);
}


//! Latent tuning on seeded toy tasks.

use stvg_core::backend::{Backend, ToyBackend, ToyDims};
use stvg_core::dsth::{make_interrogative, optimize_prompt, LraConfig, LraStatus, PromptKind};
use stvg_core::VideoClip;

const NOUNS: [&str; 6] = ["red ball", "man in a hat", "small dog", "woman", "white car", "child"];

fn task(seed: u64) -> (ToyBackend<f64>, VideoClip, String) {
    let be = ToyBackend::<f64>::new(seed, ToyDims::default()).unwrap();
    let frames = 2 + (seed % 3) as usize;
    let clip = VideoClip::new(format!("task-{seed}"), (0..frames).map(|i| i * 5).collect(), 64, 64).unwrap();
    (be, clip, NOUNS[seed as usize % NOUNS.len()].to_string())
}

#[test]
fn defaults_reduce_loss_and_widen_gap() {
    let cfg = LraConfig::default();
    let (mut non_increasing, mut gap_up) = (0, 0);
    for seed in 0..100 {
        let (be, clip, noun) = task(seed);
        let p = make_interrogative(&noun, PromptKind::Spatial).unwrap();
        let out = optimize_prompt(&be, &clip, &p, &cfg).unwrap();
        assert_eq!(out.status, LraStatus::Converged);
        assert_eq!(out.steps_taken, 10);
        non_increasing += (out.final_loss <= out.losses[0]) as usize;
        gap_up += (out.final_gap > out.initial_gap) as usize;
    }
    println!("loss non-increasing {non_increasing}/100, gap increasing {gap_up}/100");
    assert!(non_increasing >= 95);
    assert!(gap_up >= 90);
}

#[test]
fn losses_are_recorded_per_step() {
    let (be, clip, noun) = task(7);
    let p = make_interrogative(&noun, PromptKind::Temporal).unwrap();
    let cfg = LraConfig {
        n_ep: 4,
        ..Default::default()
    };
    let out = optimize_prompt(&be, &clip, &p, &cfg).unwrap();
    assert_eq!(out.losses.len(), 4);
    assert_eq!(out.latent.shape(), be.latent_shape(&clip).unwrap());
    assert!(!out.latent.is_zero());
}

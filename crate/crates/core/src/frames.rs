/// Evenly spaced sampled frames: `floor((i + 0.5) * source / n)`, deduplicated.
pub fn sample_frames(source_frame_count: usize, n_frames_sampled: usize) -> Vec<usize> {
    let n = n_frames_sampled.max(1);
    let mut out: Vec<usize> = Vec::with_capacity(n.min(source_frame_count));
    for i in 0..n {
        let idx = ((2 * i + 1) * source_frame_count) / (2 * n);
        if out.last() != Some(&idx) {
            out.push(idx);
        }
    }
    out
}

//! Plain-text PGM export of attention maps, one pixel per grid cell.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{ensure, Context};
use stvg_core::AttentionMapF64;

/// Grayscale levels of frame `t`, min-max normalized within the frame.
/// A constant frame is mid-gray.
pub fn heatmap_pixels(map: &AttentionMapF64, t: usize) -> anyhow::Result<Vec<Vec<u8>>> {
    let (frames, _, _) = map.grid();
    ensure!(t < frames, "frame {t} out of range for {frames} frames");
    let frame = map.values.index_axis(ndarray::Axis(0), t);
    ensure!(frame.iter().all(|v| v.is_finite()), "non-finite attention in frame {t}");
    let lo = frame.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = frame.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(frame
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .map(|&v| {
                    if hi > lo {
                        ((v - lo) / (hi - lo) * 255.0).round() as u8
                    } else {
                        128
                    }
                })
                .collect()
        })
        .collect())
}

pub fn heatmap_pgm(map: &AttentionMapF64, t: usize) -> anyhow::Result<String> {
    let px = heatmap_pixels(map, t)?;
    let (_, h, w) = map.grid();
    let mut out = format!("P2\n{w} {h}\n255\n");
    for row in px {
        let line: Vec<String> = row.iter().map(u8::to_string).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    Ok(out)
}

pub fn emit_heatmap(map: &AttentionMapF64, t: usize, path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, heatmap_pgm(map, t)?).with_context(|| format!("writing {}", path.display()))
}

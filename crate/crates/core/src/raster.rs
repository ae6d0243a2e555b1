//! Box-to-mask rasterization onto the attention grid.
//!
//! A cell belongs to the mask when its center, mapped to pixel space, lies
//! inside the (closed) box. A box that covers no center still marks the one
//! cell whose center is nearest the box center, so masks are never empty.

use ndarray::{Array2, Array3};

use crate::domain::{BoundingBox, FrameDims, GridMask};
use crate::error::{Result, StvgError};
use crate::scalar::Scalar;

pub fn rasterize_box<T: Scalar>(
    bbox: &BoundingBox<T>,
    dims: FrameDims,
    grid: (usize, usize),
) -> Result<Array2<bool>> {
    let (h, w) = grid;
    let clipped = bbox
        .clipped(dims)
        .ok_or_else(|| StvgError::BoxOutOfBounds(format!("{bbox:?} outside {dims:?}")))?;
    let cell_w = dims.width as f64 / w as f64;
    let cell_h = dims.height as f64 / h as f64;
    let [x0, y0, x1, y1] = bbox.corners().map(Scalar::as_f64);

    let mut mask = Array2::from_elem((h, w), false);
    for i in 0..h {
        let cy = (i as f64 + 0.5) * cell_h;
        for j in 0..w {
            let cx = (j as f64 + 0.5) * cell_w;
            mask[[i, j]] = x0 <= cx && cx <= x1 && y0 <= cy && cy <= y1;
        }
    }

    if !mask.iter().any(|v| *v) {
        let (bx, by) = clipped.center();
        let (gx, gy) = (bx.as_f64() / cell_w, by.as_f64() / cell_h);
        let mut best = (0, 0, f64::INFINITY);
        for i in 0..h {
            for j in 0..w {
                let d = (j as f64 + 0.5 - gx).powi(2) + (i as f64 + 0.5 - gy).powi(2);
                if d < best.2 {
                    best = (i, j, d);
                }
            }
        }
        mask[[best.0, best.1]] = true;
    }
    Ok(mask)
}

/// Rasterize one optional box per frame; frames without a box stay empty.
pub fn rasterize_frames<T: Scalar>(
    boxes: &[Option<BoundingBox<T>>],
    dims: FrameDims,
    grid: (usize, usize, usize),
) -> Result<GridMask> {
    let (t, h, w) = grid;
    if boxes.len() != t {
        return Err(StvgError::Shape(format!(
            "{} per-frame boxes for a {t}-frame grid",
            boxes.len()
        )));
    }
    let mut values = Array3::from_elem(grid, false);
    for (f, b) in boxes.iter().enumerate() {
        if let Some(b) = b {
            let m = rasterize_box(b, dims, (h, w))?;
            values.index_axis_mut(ndarray::Axis(0), f).assign(&m);
        }
    }
    Ok(GridMask { values })
}

//! Track scores, frame scores, top-K temporal span and tube assembly.

use ndarray::Axis;

use crate::domain::{FrameDims, GridMask, GroundedTube, GroundingAttentionMap, TrackProposal};
use crate::error::{Result, StvgError};
use crate::raster::rasterize_frames;
use crate::scalar::{argmax, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackScores<T> {
    pub scores: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameScores<T> {
    pub scores: Vec<T>,
}

/// Top-K frames and the `[min, max]` hull they span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalSpan {
    pub t_s: usize,
    pub t_e: usize,
    pub selected: Vec<usize>,
}

/// Largest map value over the cells set in `mask`.
pub fn masked_max<T: Scalar>(map: &GroundingAttentionMap<T>, mask: &GridMask) -> Option<T> {
    map.values
        .iter()
        .zip(mask.values.iter())
        .filter(|(_, m)| **m)
        .map(|(v, _)| *v)
        .reduce(|a, b| if b > a { b } else { a })
}

pub fn track_masks<T: Scalar>(
    map: &GroundingAttentionMap<T>,
    proposals: &[TrackProposal<T>],
    dims: FrameDims,
) -> Result<Vec<GridMask>> {
    proposals
        .iter()
        .map(|p| rasterize_frames(&p.boxes, dims, map.grid()))
        .collect()
}

/// Maximum attention inside each track's rasterized boxes, over all frames.
pub fn track_score<T: Scalar>(
    map: &GroundingAttentionMap<T>,
    proposals: &[TrackProposal<T>],
    dims: FrameDims,
) -> Result<TrackScores<T>> {
    if proposals.is_empty() {
        return Err(StvgError::NoProposals);
    }
    let scores = track_masks(map, proposals, dims)?
        .iter()
        .map(|m| masked_max(map, m).unwrap_or_else(T::zero))
        .collect();
    Ok(TrackScores { scores })
}

/// Full-frame maximum of each frame.
pub fn frame_score<T: Scalar>(map: &GroundingAttentionMap<T>) -> FrameScores<T> {
    let scores = map
        .values
        .outer_iter()
        .map(|f| f.iter().copied().fold(T::neg_infinity(), T::max))
        .collect();
    FrameScores { scores }
}

/// Per-frame maximum restricted to `mask`; frames with no set cell score 0.
pub fn frame_score_masked<T: Scalar>(map: &GroundingAttentionMap<T>, mask: &GridMask) -> FrameScores<T> {
    let scores = map
        .values
        .axis_iter(Axis(0))
        .zip(mask.values.axis_iter(Axis(0)))
        .map(|(f, m)| {
            f.iter()
                .zip(m.iter())
                .filter(|(_, b)| **b)
                .map(|(v, _)| *v)
                .reduce(T::max)
                .unwrap_or_else(T::zero)
        })
        .collect();
    FrameScores { scores }
}

pub fn select_track<T: Scalar>(scores: &TrackScores<T>) -> Result<usize> {
    argmax(scores.scores.iter().copied()).ok_or(StvgError::NoProposals)
}

pub fn select_temporal_span<T: Scalar>(scores: &FrameScores<T>, k: usize) -> Result<TemporalSpan> {
    let len = scores.scores.len();
    if k == 0 || k > len {
        return Err(StvgError::InvalidK { k, len });
    }
    let mut order: Vec<usize> = (0..len).collect();
    // stable sort keeps earlier frames first among equal scores
    order.sort_by(|a, b| {
        scores.scores[*b]
            .partial_cmp(&scores.scores[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut selected = order[..k].to_vec();
    selected.sort_unstable();
    Ok(TemporalSpan {
        t_s: selected[0],
        t_e: selected[k - 1],
        selected,
    })
}

/// The proposal's boxes on `[t_s, t_e]`; gaps copy the nearest visible
/// in-span frame (the earlier one on ties).
pub fn assemble_tube<T: Scalar>(
    proposal: &TrackProposal<T>,
    t_s: usize,
    t_e: usize,
) -> Result<GroundedTube<T>> {
    if t_s > t_e || t_e >= proposal.boxes.len() {
        return Err(StvgError::Invalid(format!(
            "span {t_s}..={t_e} outside {} frames",
            proposal.boxes.len()
        )));
    }
    let visible: Vec<usize> = (t_s..=t_e).filter(|t| proposal.boxes[*t].is_some()).collect();
    if visible.is_empty() {
        return Err(StvgError::EmptyIntersection(proposal.track_id.clone()));
    }
    let boxes = (t_s..=t_e)
        .map(|t| {
            proposal.boxes[t].unwrap_or_else(|| {
                let nearest = *visible
                    .iter()
                    .min_by_key(|v| (v.abs_diff(t), **v))
                    .expect("non-empty");
                proposal.boxes[nearest].expect("visible")
            })
        })
        .collect();
    Ok(GroundedTube { t_s, t_e, boxes })
}

/// Everything the joint spatial/temporal inference produces for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPrediction<T> {
    pub track_scores: TrackScores<T>,
    pub frame_scores: FrameScores<T>,
    pub track_index: usize,
    pub span: TemporalSpan,
    pub tube: GroundedTube<T>,
}

/// Spatial map picks the track, temporal map picks the span, the tube joins them.
pub fn joint_inference<T: Scalar>(
    spatial: &GroundingAttentionMap<T>,
    temporal: &GroundingAttentionMap<T>,
    proposals: &[TrackProposal<T>],
    dims: FrameDims,
    k: usize,
) -> Result<JointPrediction<T>> {
    if spatial.grid() != temporal.grid() {
        return Err(StvgError::Shape(format!(
            "spatial grid {:?} vs temporal grid {:?}",
            spatial.grid(),
            temporal.grid()
        )));
    }
    let track_scores = track_score(spatial, proposals, dims)?;
    let track_index = select_track(&track_scores)?;
    let frame_scores = frame_score(temporal);
    let span = select_temporal_span(&frame_scores, k)?;
    let tube = assemble_tube(&proposals[track_index], span.t_s, span.t_e)?;
    Ok(JointPrediction {
        track_scores,
        frame_scores,
        track_index,
        span,
        tube,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BoundingBox;
    use ndarray::Array3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const DIMS: FrameDims = FrameDims {
        width: 80,
        height: 80,
    };

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox<f64> {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    fn map(values: Array3<f64>) -> GroundingAttentionMap<f64> {
        GroundingAttentionMap::new(values, 0)
    }

    #[test]
    fn containing_proposal_gets_global_max() {
        let mut v = Array3::from_elem((2, 4, 4), 0.1);
        v[[1, 0, 3]] = 0.8;
        let m = map(v);
        let p = TrackProposal::new("p", vec![None, Some(bx(60.0, 0.0, 80.0, 20.0))]).unwrap();
        assert_eq!(track_score(&m, &[p], DIMS).unwrap().scores, vec![0.8]);
        let full = TrackProposal::new("f", vec![Some(bx(0.0, 0.0, 80.0, 80.0)); 2]).unwrap();
        assert_eq!(track_score(&m, &[full], DIMS).unwrap().scores, vec![0.8]);
    }

    #[test]
    fn disjoint_proposals() {
        // left half low, right half high
        let v = Array3::from_shape_fn((3, 4, 4), |(_, _, j)| if j >= 2 { 0.7 } else { 0.2 });
        let m = map(v);
        let left = TrackProposal::new("l", vec![Some(bx(0.0, 0.0, 40.0, 80.0)); 3]).unwrap();
        let right = TrackProposal::new("r", vec![Some(bx(40.0, 0.0, 80.0, 80.0)); 3]).unwrap();
        let s = track_score(&m, &[left, right], DIMS).unwrap();
        assert_eq!(s.scores, vec![0.2, 0.7]);
        assert_eq!(select_track(&s).unwrap(), 1);
    }

    #[test]
    fn empty_proposals_error() {
        let m = map(Array3::zeros((1, 2, 2)));
        assert!(matches!(track_score(&m, &[], DIMS), Err(StvgError::NoProposals)));
    }

    #[test]
    fn frame_scores() {
        let mut v = Array3::zeros((5, 3, 3));
        v[[3, 1, 2]] = 1.0;
        let s = frame_score(&map(v));
        assert_eq!(argmax(s.scores.iter().copied()), Some(3));
        let c = frame_score(&map(Array3::from_elem((4, 2, 2), 0.3)));
        assert!(c.scores.iter().all(|x| *x == 0.3));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = Array3::from_shape_fn((6, 5, 4), |_| rng.gen::<f64>());
        let s = frame_score(&map(v.clone()));
        for t in 0..6 {
            let mut best = f64::NEG_INFINITY;
            for i in 0..5 {
                for j in 0..4 {
                    best = best.max(v[[t, i, j]]);
                }
            }
            assert_eq!(s.scores[t], best);
        }
    }

    #[test]
    fn track_selection() {
        let s = TrackScores {
            scores: vec![0.2, 0.9, 0.9],
        };
        assert_eq!(select_track(&s).unwrap(), 1);
        assert_eq!(select_track(&TrackScores { scores: vec![0.1] }).unwrap(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(1..10);
            let v: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..5) as f64) / 4.0).collect();
            let mut best = 0;
            for i in 1..n {
                if v[i] > v[best] {
                    best = i;
                }
            }
            assert_eq!(select_track(&TrackScores { scores: v }).unwrap(), best);
        }
    }

    #[test]
    fn top_k_span() {
        let s = FrameScores {
            scores: vec![1.0, 5.0, 4.0, 3.0, 0.0],
        };
        let span = select_temporal_span(&s, 3).unwrap();
        assert_eq!(span.selected, vec![1, 2, 3]);
        assert_eq!((span.t_s, span.t_e), (1, 3));
        let full = select_temporal_span(&s, 5).unwrap();
        assert_eq!((full.t_s, full.t_e), (0, 4));
        let eq = FrameScores {
            scores: vec![2.0; 4],
        };
        assert_eq!(select_temporal_span(&eq, 2).unwrap().selected, vec![0, 1]);
        assert!(matches!(select_temporal_span(&s, 0), Err(StvgError::InvalidK { .. })));
        assert!(matches!(select_temporal_span(&s, 6), Err(StvgError::InvalidK { .. })));
    }

    #[test]
    fn tube_fill_rule() {
        let b = |x: f64| Some(bx(x, 0.0, x + 10.0, 10.0));
        let p = TrackProposal::new("p", vec![b(0.0), b(1.0), None, b(3.0), None, None]).unwrap();
        let t = assemble_tube(&p, 0, 3).unwrap();
        assert_eq!(t.boxes[0], b(0.0).unwrap());
        assert_eq!(t.boxes[3], b(3.0).unwrap());
        // frame 2 is equidistant from 1 and 3: earlier wins
        assert_eq!(t.boxes[2], b(1.0).unwrap());
        let t = assemble_tube(&p, 3, 5).unwrap();
        assert!(t.boxes.iter().all(|x| *x == b(3.0).unwrap()));
        assert!(matches!(assemble_tube(&p, 4, 5), Err(StvgError::EmptyIntersection(_))));
    }

    #[test]
    fn fill_copies_nearest_neighbor() {
        let b = |x: f64| Some(bx(x, 0.0, x + 10.0, 10.0));
        let p = TrackProposal::new("p", vec![b(0.0), b(1.0), None, b(3.0), b(4.0)]).unwrap();
        let t = assemble_tube(&p, 1, 4).unwrap();
        assert_eq!(t.box_at(2), b(1.0).as_ref());
        let p = TrackProposal::new("p", vec![b(0.0), b(1.0), None, None, b(4.0), b(5.0)]).unwrap();
        let t = assemble_tube(&p, 1, 4).unwrap();
        assert_eq!(t.box_at(3), b(4.0).as_ref());
    }

    fn arb_proposal(frames: usize) -> impl Strategy<Value = TrackProposal<f64>> {
        proptest::collection::vec(proptest::option::of((0.0f64..70.0, 0.0f64..70.0)), frames)
            .prop_filter("visible", |v| v.iter().any(Option::is_some))
            .prop_map(|v| {
                let boxes = v
                    .into_iter()
                    .map(|o| o.map(|(x, y)| bx(x, y, x + 10.0, y + 10.0)))
                    .collect();
                TrackProposal::new("p", boxes).unwrap()
            })
    }

    proptest! {
        #[test]
        fn tube_length_matches_span(p in arb_proposal(8), a in 0usize..8, b in 0usize..8) {
            let (s, e) = (a.min(b), a.max(b));
            match assemble_tube(&p, s, e) {
                Ok(t) => {
                    prop_assert_eq!(t.boxes.len(), e - s + 1);
                    prop_assert_eq!((t.t_s, t.t_e), (s, e));
                }
                Err(StvgError::EmptyIntersection(_)) => {
                    prop_assert!((s..=e).all(|t| p.boxes[t].is_none()));
                }
                Err(other) => prop_assert!(false, "{other}"),
            }
        }

        #[test]
        fn sub_track_never_outscores(p in arb_proposal(4), drop in proptest::collection::vec(any::<bool>(), 4),
                                     seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = map(Array3::from_shape_fn((4, 4, 4), |_| rng.gen::<f64>()));
            let mut sub = p.clone();
            for (t, d) in drop.iter().enumerate() {
                if *d { sub.boxes[t] = None; }
            }
            prop_assume!(sub.boxes.iter().any(Option::is_some));
            let full = track_score(&m, &[p], DIMS).unwrap().scores[0];
            let part = track_score(&m, &[sub], DIMS).unwrap().scores[0];
            prop_assert!(part <= full);
        }

        #[test]
        fn selection_invariant_under_monotone_maps(seed in any::<u64>(), k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = map(Array3::from_shape_fn((5, 4, 4), |_| rng.gen::<f64>()));
            let props: Vec<_> = (0..3).map(|i| {
                let x = 20.0 * i as f64;
                TrackProposal::new(format!("p{i}"), vec![Some(bx(x, x, x + 25.0, x + 25.0)); 5]).unwrap()
            }).collect();
            let a = joint_inference(&m, &m, &props, DIMS, k).unwrap();
            let transforms: [fn(f64) -> f64; 3] = [f64::sqrt, |x| 3.0 * x + 1.0, f64::exp];
            for f in transforms {
                let g = m.map_values(f);
                let b = joint_inference(&g, &g, &props, DIMS, k).unwrap();
                prop_assert_eq!(a.track_index, b.track_index);
                prop_assert_eq!(&a.span, &b.span);
            }
        }
    }
}

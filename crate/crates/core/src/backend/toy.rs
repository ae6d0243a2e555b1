//! A desk-scale causal transformer that exposes its attention and is
//! differentiable with respect to the visual-token embeddings.
//!
//! Input sequence: `n_sys` learned system tokens, `frames * h * w` visual
//! tokens (one per frame patch, embedded from the patch's mean color), the
//! word-hashed prompt tokens, and `n_role` learned special tokens. Each layer
//! is multi-head causal self-attention followed by a tanh MLP, both residual.
//! The answer head reads the last special token through a tanh readout and
//! emits log-probabilities, so every logit is bounded by the head weights.
//!
//! Frames carry no pixels here; patch colors come from a content hash of
//! `(clip_id, source frame, cell)` unless a [`Paint`] overrides them.

use std::collections::{BTreeMap, HashMap};

use ndarray::{s, Array1, Array2, Array4, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{check_latent, Backend, BackendSession, LatentGradient, LatentPrompt, SessionLoss};
use crate::domain::{RawAttention, TokenLayout, VideoClip};
use crate::error::{Result, StvgError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyDims {
    pub embed: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub vocab_size: usize,
    pub n_sys: usize,
    pub n_role: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub max_context: usize,
}

impl Default for ToyDims {
    fn default() -> Self {
        Self {
            embed: 16,
            layers: 2,
            heads: 2,
            mlp_hidden: 32,
            vocab_size: 32,
            n_sys: 2,
            n_role: 4,
            grid_h: 3,
            grid_w: 3,
            max_context: 512,
        }
    }
}

impl ToyDims {
    fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.embed.is_multiple_of(self.heads) {
            return Err(StvgError::Invalid(format!(
                "embed {} not divisible into {} heads",
                self.embed, self.heads
            )));
        }
        if self.vocab_size < 8 {
            return Err(StvgError::Invalid("toy vocabulary needs at least 8 entries".into()));
        }
        if self.n_role == 0 || self.grid_h == 0 || self.grid_w == 0 || self.layers == 0 {
            return Err(StvgError::Invalid(format!("degenerate toy dims {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyLayer<T> {
    pub wq: Array2<T>,
    pub wk: Array2<T>,
    pub wv: Array2<T>,
    pub wo: Array2<T>,
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
}

/// All learned weights. Row-vector convention: `x (N x d) . W (d x k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyParams<T> {
    pub patch_proj: Array2<T>,
    pub patch_bias: Array1<T>,
    pub cell_pos: Array2<T>,
    pub sys: Array2<T>,
    pub role: Array2<T>,
    pub vocab: Array2<T>,
    pub layers: Vec<ToyLayer<T>>,
    pub head: Array2<T>,
    pub head_bias: Array1<T>,
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: (usize, usize), std: f64) -> Array2<T> {
    let a = std * 3f64.sqrt();
    Array2::from_shape_fn(shape, |_| T::of(rng.gen_range(-a..a)))
}

impl<T: Scalar> ToyParams<T> {
    pub fn init(seed: u64, dims: &ToyDims) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dims.embed;
        let proj = 1.0 / (d as f64).sqrt();
        let layers = (0..dims.layers)
            .map(|_| ToyLayer {
                wq: uniform(&mut rng, (d, d), proj),
                wk: uniform(&mut rng, (d, d), proj),
                wv: uniform(&mut rng, (d, d), proj),
                wo: uniform(&mut rng, (d, d), proj),
                w1: uniform(&mut rng, (d, dims.mlp_hidden), proj),
                b1: uniform(&mut rng, (1, dims.mlp_hidden), 0.1).row(0).to_owned(),
                w2: uniform(&mut rng, (dims.mlp_hidden, d), 1.0 / (dims.mlp_hidden as f64).sqrt()),
            })
            .collect();
        Self {
            patch_proj: uniform(&mut rng, (3, d), 1.0),
            patch_bias: uniform(&mut rng, (1, d), 0.1).row(0).to_owned(),
            cell_pos: uniform(&mut rng, (dims.grid_h * dims.grid_w, d), 0.5),
            sys: uniform(&mut rng, (dims.n_sys, d), 1.0),
            role: uniform(&mut rng, (dims.n_role, d), 1.0),
            vocab: uniform(&mut rng, (dims.vocab_size, d), 1.0),
            layers,
            head: uniform(&mut rng, (d, dims.vocab_size), proj),
            head_bias: Array1::zeros(dims.vocab_size),
        }
    }

    fn arrays(&self) -> Vec<ArrayView2<'_, T>> {
        let mut out = vec![
            self.patch_proj.view(),
            self.patch_bias.view().insert_axis(Axis(0)),
            self.cell_pos.view(),
            self.sys.view(),
            self.role.view(),
            self.vocab.view(),
        ];
        for l in &self.layers {
            out.extend([
                l.wq.view(),
                l.wk.view(),
                l.wv.view(),
                l.wo.view(),
                l.w1.view(),
                l.b1.view().insert_axis(Axis(0)),
                l.w2.view(),
            ]);
        }
        out.push(self.head.view());
        out.push(self.head_bias.view().insert_axis(Axis(0)));
        out
    }

    fn check(&self, dims: &ToyDims) -> Result<()> {
        let d = dims.embed;
        let hw = dims.grid_h * dims.grid_w;
        let mut ok = self.patch_proj.dim() == (3, d)
            && self.patch_bias.len() == d
            && self.cell_pos.dim() == (hw, d)
            && self.sys.dim() == (dims.n_sys, d)
            && self.role.dim() == (dims.n_role, d)
            && self.vocab.dim() == (dims.vocab_size, d)
            && self.head.dim() == (d, dims.vocab_size)
            && self.head_bias.len() == dims.vocab_size
            && self.layers.len() == dims.layers;
        for l in &self.layers {
            ok &= l.wq.dim() == (d, d)
                && l.wk.dim() == (d, d)
                && l.wv.dim() == (d, d)
                && l.wo.dim() == (d, d)
                && l.w1.dim() == (d, dims.mlp_hidden)
                && l.b1.len() == dims.mlp_hidden
                && l.w2.dim() == (dims.mlp_hidden, d);
        }
        if ok {
            Ok(())
        } else {
            Err(StvgError::Shape("toy parameters do not match dims".into()))
        }
    }
}

/// Overrides the color of some patches of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Paint {
    pub clip_id: String,
    /// Source frame numbers; `None` paints every frame.
    pub frames: Option<Vec<usize>>,
    /// `(row, col)` grid cells.
    pub cells: Vec<(usize, usize)>,
    pub color: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct ToyBackend<T> {
    dims: ToyDims,
    params: ToyParams<T>,
    paints: Vec<Paint>,
    words: Vec<String>,
    word_ids: HashMap<String, usize>,
}

struct LayerTape<T> {
    x_in: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    act: Array2<T>,
}

struct Tape<T> {
    layers: Vec<LayerTape<T>>,
    readout: Array1<T>,
    log_probs: Array1<T>,
}

impl<T: Scalar> ToyBackend<T> {
    pub fn new(seed: u64, dims: ToyDims) -> Result<Self> {
        dims.validate()?;
        Self::from_params(dims, ToyParams::init(seed, &dims))
    }

    pub fn from_params(dims: ToyDims, params: ToyParams<T>) -> Result<Self> {
        dims.validate()?;
        params.check(&dims)?;
        let mut words = vec!["<unk>".to_string(), "yes".to_string(), "no".to_string()];
        words.extend((3..dims.vocab_size).map(|i| format!("w{i}")));
        let word_ids = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(Self {
            dims,
            params,
            paints: Vec::new(),
            words,
            word_ids,
        })
    }

    pub fn with_paint(mut self, paint: Paint) -> Self {
        self.paints.push(paint);
        self
    }

    pub fn dims(&self) -> &ToyDims {
        &self.dims
    }

    pub fn params(&self) -> &ToyParams<T> {
        &self.params
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.words
    }

    /// Hex SHA-256 over every parameter.
    pub fn parameter_checksum(&self) -> String {
        let mut h = Sha256::new();
        for a in self.params.arrays() {
            for v in a.iter() {
                h.update(v.le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Lowercased alphanumeric words, hashed into the vocabulary.
    pub fn tokenize(&self, prompt: &str) -> Vec<usize> {
        prompt
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| {
                let w = w.to_lowercase();
                match w.as_str() {
                    "yes" => 1,
                    "no" => 2,
                    _ => 3 + (fnv1a(w.as_bytes()) % (self.dims.vocab_size as u64 - 3)) as usize,
                }
            })
            .collect()
    }

    pub fn patch_color(&self, clip_id: &str, source_frame: usize, cell: (usize, usize)) -> [f64; 3] {
        let painted = self.paints.iter().rev().find(|p| {
            p.clip_id == clip_id
                && p.cells.contains(&cell)
                && p.frames.as_ref().is_none_or(|f| f.contains(&source_frame))
        });
        if let Some(p) = painted {
            return p.color;
        }
        let digest = Sha256::digest(format!("{clip_id}/{source_frame}/{}/{}", cell.0, cell.1));
        [digest[0], digest[1], digest[2]].map(|b| b as f64 / 255.0)
    }

    fn layout_for(&self, video: &VideoClip, n_query: usize) -> Result<TokenLayout> {
        let layout = TokenLayout::new(
            self.dims.n_sys,
            n_query,
            self.dims.n_role,
            (video.frame_count, self.dims.grid_h, self.dims.grid_w),
        )?;
        if layout.total() > self.dims.max_context {
            return Err(StvgError::ContextOverflow {
                tokens: layout.total(),
                limit: self.dims.max_context,
            });
        }
        Ok(layout)
    }

    fn embed(
        &self,
        video: &VideoClip,
        prompt: &str,
        latent: Option<&LatentPrompt<T>>,
    ) -> Result<(TokenLayout, Array2<T>)> {
        video.validate()?;
        let tokens = self.tokenize(prompt);
        let layout = self.layout_for(video, tokens.len())?;
        check_latent(latent, (layout.m_visual, self.dims.embed))?;
        let p = &self.params;
        let d = self.dims.embed;
        let (h, w) = (self.dims.grid_h, self.dims.grid_w);
        let mut x = Array2::<T>::zeros((layout.total(), d));

        for i in 0..self.dims.n_sys {
            x.row_mut(i).assign(&p.sys.row(i));
        }
        let half = T::of(0.5);
        for pos in 0..video.frame_count {
            let source = video.source_at(pos);
            let time = positional::<T>(pos, d).mapv(|v| v * half);
            for r in 0..h {
                for c in 0..w {
                    let cell = r * w + c;
                    let color = self.patch_color(&video.clip_id, source, (r, c)).map(T::of);
                    let mut row = p.patch_bias.clone() + p.cell_pos.row(cell) + &time;
                    for (ch, value) in color.iter().enumerate() {
                        row.scaled_add(*value, &p.patch_proj.row(ch));
                    }
                    x.row_mut(layout.n_sys + pos * h * w + cell).assign(&row);
                }
            }
        }
        if let Some(l) = latent {
            let mut vis = x.slice_mut(s![layout.visual_range(), ..]);
            vis += &l.values;
        }
        for (k, tok) in tokens.iter().enumerate() {
            x.row_mut(layout.query_range().start + k).assign(&p.vocab.row(*tok));
        }
        for i in 0..self.dims.n_role {
            x.row_mut(layout.role_range().start + i).assign(&p.role.row(i));
        }
        for i in 0..layout.total() {
            let pe = positional::<T>(i, d);
            let mut row = x.row_mut(i);
            row += &pe;
        }
        Ok((layout, x))
    }

    fn forward(&self, x0: Array2<T>) -> Tape<T> {
        let d = self.dims.embed;
        let dh = d / self.dims.heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let n = x0.nrows();
        let mut x = x0;
        let mut layers = Vec::with_capacity(self.dims.layers);
        for lp in &self.params.layers {
            let q = x.dot(&lp.wq);
            let k = x.dot(&lp.wk);
            let v = x.dot(&lp.wv);
            let mut o = Array2::<T>::zeros((n, d));
            let mut probs = Vec::with_capacity(self.dims.heads);
            for hd in 0..self.dims.heads {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                let p = causal_softmax(&scores);
                o.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
                probs.push(p);
            }
            let x_mid = &x + &o.dot(&lp.wo);
            let act = (x_mid.dot(&lp.w1) + &lp.b1).mapv(T::tanh);
            let x_out = &x_mid + &act.dot(&lp.w2);
            layers.push(LayerTape {
                x_in: x,
                q,
                k,
                v,
                probs,
                act,
            });
            x = x_out;
        }
        let readout = x.row(n - 1).mapv(T::tanh);
        let z = readout.dot(&self.params.head) + &self.params.head_bias;
        Tape {
            layers,
            readout,
            log_probs: log_softmax(&z),
        }
    }

    fn session(&self, layout: TokenLayout, tape: &Tape<T>) -> Result<BackendSession<T>> {
        let n = layout.total();
        let mut att = Array4::<T>::zeros((self.dims.layers, self.dims.heads, n, n));
        for (l, lt) in tape.layers.iter().enumerate() {
            for (hd, p) in lt.probs.iter().enumerate() {
                att.slice_mut(s![l, hd, .., ..]).assign(p);
            }
        }
        let answer_logits = self
            .words
            .iter()
            .cloned()
            .zip(tape.log_probs.iter().copied())
            .collect::<BTreeMap<_, _>>();
        Ok(BackendSession {
            layout,
            raw_attention: RawAttention::new(att)?,
            answer_logits,
        })
    }

    /// Reverse pass from log-prob and attention adjoints to the input embeddings.
    fn backward(&self, tape: &Tape<T>, d_logp: &Array1<T>, d_att: Option<&Array4<T>>) -> Array2<T> {
        let d = self.dims.embed;
        let dh = d / self.dims.heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let n = tape.layers[0].x_in.nrows();

        let probs = tape.log_probs.mapv(T::exp);
        let total = d_logp.sum();
        let dz = d_logp - &(probs * total);
        let mut dx = Array2::<T>::zeros((n, d));
        let d_read = self.params.head.dot(&dz) * &tape.readout.mapv(|r| T::one() - r * r);
        dx.row_mut(n - 1).assign(&d_read);

        for (l, (lp, lt)) in self.params.layers.iter().zip(&tape.layers).enumerate().rev() {
            let d_act = dx.dot(&lp.w2.t());
            let d_pre = d_act * &lt.act.mapv(|a| T::one() - a * a);
            let d_mid = &dx + &d_pre.dot(&lp.w1.t());

            let d_o = d_mid.dot(&lp.wo.t());
            let mut dq = Array2::<T>::zeros((n, d));
            let mut dk = Array2::<T>::zeros((n, d));
            let mut dv = Array2::<T>::zeros((n, d));
            for (hd, p) in lt.probs.iter().enumerate() {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let d_oh = d_o.slice(cols);
                let mut dp = d_oh.dot(&lt.v.slice(cols).t());
                if let Some(seed) = d_att {
                    dp += &seed.slice(s![l, hd, .., ..]);
                }
                dv.slice_mut(cols).assign(&p.t().dot(&d_oh));
                let mut ds = Array2::<T>::zeros((n, n));
                for i in 0..n {
                    let pr = p.row(i);
                    let dpr = dp.row(i);
                    let inner: T = pr.iter().zip(dpr.iter()).map(|(a, b)| *a * *b).sum();
                    for j in 0..=i {
                        ds[[i, j]] = pr[j] * (dpr[j] - inner) * scale;
                    }
                }
                dq.slice_mut(cols).assign(&ds.dot(&lt.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&lt.q.slice(cols)));
            }
            dx = d_mid + dq.dot(&lp.wq.t()) + dk.dot(&lp.wk.t()) + dv.dot(&lp.wv.t());
        }
        dx
    }
}

impl<T: Scalar> Backend<T> for ToyBackend<T> {
    fn name(&self) -> String {
        "toy".into()
    }

    fn latent_shape(&self, video: &VideoClip) -> Result<(usize, usize)> {
        Ok((
            video.frame_count * self.dims.grid_h * self.dims.grid_w,
            self.dims.embed,
        ))
    }

    fn run(
        &self,
        video: &VideoClip,
        prompt: &str,
        latent: Option<&LatentPrompt<T>>,
    ) -> Result<BackendSession<T>> {
        let (layout, x0) = self.embed(video, prompt, latent)?;
        let tape = self.forward(x0);
        self.session(layout, &tape)
    }

    fn differentiable(&self) -> bool {
        true
    }

    fn gradient_wrt_latent(
        &self,
        video: &VideoClip,
        prompt: &str,
        latent: &LatentPrompt<T>,
        loss: &dyn SessionLoss<T>,
    ) -> Result<LatentGradient<T>> {
        let (layout, x0) = self.embed(video, prompt, Some(latent))?;
        let tape = self.forward(x0);
        let session = self.session(layout, &tape)?;
        let (value, seed) = loss.evaluate(&session)?;

        let mut d_logp = Array1::<T>::zeros(self.dims.vocab_size);
        for (word, g) in &seed.d_logits {
            let id = self
                .word_ids
                .get(word)
                .ok_or_else(|| StvgError::Vocabulary(word.clone()))?;
            d_logp[*id] += *g;
        }
        if let Some(a) = &seed.d_attention {
            if a.dim() != session.raw_attention.values.dim() {
                return Err(StvgError::Shape("attention adjoint shape".into()));
            }
        }
        let dx = self.backward(&tape, &d_logp, seed.d_attention.as_ref());
        let gradient = dx.slice(s![layout.visual_range(), ..]).to_owned();
        Ok(LatentGradient {
            loss: value,
            gradient,
            session,
        })
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn positional<T: Scalar>(pos: usize, d: usize) -> Array1<T> {
    Array1::from_shape_fn(d, |i| {
        let freq = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
        let angle = pos as f64 / freq;
        T::of(if i % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

fn causal_softmax<T: Scalar>(scores: &Array2<T>) -> Array2<T> {
    let n = scores.nrows();
    let mut p = Array2::<T>::zeros((n, n));
    for i in 0..n {
        let row = scores.row(i);
        let m = row
            .iter()
            .take(i + 1)
            .copied()
            .fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for j in 0..=i {
            let e = (row[j] - m).exp();
            p[[i, j]] = e;
            total += e;
        }
        for j in 0..=i {
            p[[i, j]] /= total;
        }
    }
    p
}

fn log_softmax<T: Scalar>(z: &Array1<T>) -> Array1<T> {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = z.iter().map(|v| (*v - m).exp()).sum::<T>().ln() + m;
    z.mapv(|v| v - lse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::SessionGradient;

    fn clip(frames: usize) -> VideoClip {
        VideoClip::new("clip-a", (0..frames).map(|i| i * 3).collect(), 64, 48).unwrap()
    }

    struct Constant;
    impl SessionLoss<f64> for Constant {
        fn evaluate(&self, _: &BackendSession<f64>) -> Result<(f64, SessionGradient<f64>)> {
            Ok((3.0, SessionGradient::default()))
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = ToyBackend::<f64>::new(5, ToyDims::default()).unwrap();
        let b = ToyBackend::<f64>::new(5, ToyDims::default()).unwrap();
        let c = ToyBackend::<f64>::new(6, ToyDims::default()).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(a.parameter_checksum(), b.parameter_checksum());
        assert_ne!(a.parameter_checksum(), c.parameter_checksum());
    }

    #[test]
    fn attention_shape_and_causality() {
        let be = ToyBackend::<f64>::new(1, ToyDims::default()).unwrap();
        let s = be.run(&clip(2), "a man walks", None).unwrap();
        let n = s.layout.total();
        assert_eq!(n, 2 + 18 + 3 + 4);
        assert_eq!(s.raw_attention.values.dim(), (2, 2, n, n));
        s.raw_attention.validate(1e-5).unwrap();
        for i in 0..n {
            for j in i + 1..n {
                assert_eq!(s.raw_attention.values[[1, 0, i, j]], 0.0);
            }
        }
    }

    #[test]
    fn log_probs_normalized() {
        let be = ToyBackend::<f64>::new(1, ToyDims::default()).unwrap();
        let s = be.run(&clip(2), "is there a dog", None).unwrap();
        let total: f64 = s.answer_logits.values().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(s.answer_logits.contains_key("yes") && s.answer_logits.contains_key("no"));
    }

    #[test]
    fn context_overflow_and_shape_errors() {
        let dims = ToyDims {
            max_context: 30,
            ..ToyDims::default()
        };
        let be = ToyBackend::<f64>::new(1, dims).unwrap();
        let err = be.run(&clip(3), "x", None).unwrap_err();
        assert!(err.to_string().starts_with("context overflow"));
        let bad = LatentPrompt::zeros((5, 16));
        let err = be.run(&clip(1), "x", Some(&bad)).unwrap_err();
        assert!(err.to_string().starts_with("latent shape error"));
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let be = ToyBackend::<f64>::new(2, ToyDims::default()).unwrap();
        let v = clip(2);
        let lat = LatentPrompt::zeros(be.latent_shape(&v).unwrap());
        let g = be.gradient_wrt_latent(&v, "a cat", &lat, &Constant).unwrap();
        assert_eq!(g.loss, 3.0);
        assert!(g.gradient.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn reversal_changes_presentation_only() {
        let be = ToyBackend::<f64>::new(3, ToyDims::default()).unwrap();
        let v = clip(3);
        let a = be.run(&v, "q", None).unwrap();
        let b = be.run(&v.reversed(), "q", None).unwrap();
        assert_eq!(a.layout, b.layout);
        assert_ne!(a.raw_attention, b.raw_attention);
    }

    #[test]
    fn paint_overrides_color() {
        let be = ToyBackend::<f64>::new(3, ToyDims::default()).unwrap().with_paint(Paint {
            clip_id: "clip-a".into(),
            frames: None,
            cells: vec![(0, 1)],
            color: [1.0, 0.0, 0.5],
        });
        assert_eq!(be.patch_color("clip-a", 9, (0, 1)), [1.0, 0.0, 0.5]);
        assert_ne!(be.patch_color("clip-b", 9, (0, 1)), [1.0, 0.0, 0.5]);
    }

    #[test]
    fn runs_in_single_precision() {
        let be = ToyBackend::<f32>::new(3, ToyDims::default()).unwrap();
        let s = be.run(&clip(2), "a dog", None).unwrap();
        s.raw_attention.validate(1e-4).unwrap();
    }
}

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::embed::PAD;
use crate::taxonomy::TagSet;
use crate::{Error, Result};

/// Score given to forbidden CRF transitions; never updated by training.
pub const FORBIDDEN_SCORE: f32 = -10000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub word_dim: usize,
    pub char_emb_dim: usize,
    pub char_filters: usize,
    /// Convolution width over characters; odd so that same-padding is symmetric.
    pub char_kernel: usize,
    /// Hidden units per LSTM direction.
    pub lstm_hidden: usize,
    pub dropout: f32,
    pub n_tags: usize,
    pub max_word_len: usize,
    /// `false` gives the word-embedding-only baseline without the character CNN.
    pub use_chars: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            word_dim: 100,
            char_emb_dim: 300,
            char_filters: 50,
            char_kernel: 3,
            lstm_hidden: 128,
            dropout: 0.2,
            n_tags: 21,
            max_word_len: 30,
            use_chars: true,
        }
    }
}

impl Hyperparams {
    pub fn binary() -> Self {
        Hyperparams {
            n_tags: 3,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("word_dim", self.word_dim),
            ("char_emb_dim", self.char_emb_dim),
            ("char_filters", self.char_filters),
            ("char_kernel", self.char_kernel),
            ("lstm_hidden", self.lstm_hidden),
            ("n_tags", self.n_tags),
            ("max_word_len", self.max_word_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("hyperparameter {name} must be positive")));
        }
        if self.char_kernel.is_multiple_of(2) {
            return Err(Error::InvalidArgument("char_kernel must be odd".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Width of the per-token input to the LSTMs.
    pub fn input_dim(&self) -> usize {
        self.word_dim + if self.use_chars { self.char_filters } else { 0 }
    }

    pub fn char_window(&self) -> usize {
        self.char_kernel * self.char_emb_dim
    }
}

/// A dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); shape.iter().product()],
        }
    }

    fn uniform(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut t = Self::zeros(shape);
        for x in &mut t.data {
            *x = F::of(rng.random_range(-bound..=bound));
        }
        t
    }

    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[F] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| G::of(x.as_f64())).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = F::zero());
    }
}

/// Weights of one LSTM direction; gate rows are ordered input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<F> {
    /// `[4H, input_dim]`
    pub w_ih: Tensor<F>,
    /// `[4H, H]`
    pub w_hh: Tensor<F>,
    /// `[4H]`
    pub bias: Tensor<F>,
}

/// Everything except the embedding tables.
#[derive(Clone, Debug, PartialEq)]
pub struct Layers<F> {
    /// `[filters, kernel * char_emb_dim]`: row `f` is filter `f` over a window
    /// of `kernel` consecutive character embeddings.
    pub conv_w: Tensor<F>,
    pub conv_b: Tensor<F>,
    pub fwd: LstmParams<F>,
    pub bwd: LstmParams<F>,
    /// `[n_tags, 2H]`
    pub proj_w: Tensor<F>,
    pub proj_b: Tensor<F>,
    /// `[n_tags, n_tags]`, `trans[i][j]` scores tag `i` followed by tag `j`.
    pub trans: Tensor<F>,
    pub start: Tensor<F>,
    pub end: Tensor<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Params<F> {
    /// `[word_vocab, word_dim]`
    pub word_emb: Tensor<F>,
    /// `[char_vocab, char_emb_dim]`, empty when characters are disabled.
    pub char_emb: Tensor<F>,
    pub layers: Layers<F>,
}

/// Names used in model files, in file order.
pub const TENSOR_NAMES: [&str; 15] = [
    "word_emb",
    "char_emb",
    "conv_w",
    "conv_b",
    "lstm_fwd_w_ih",
    "lstm_fwd_w_hh",
    "lstm_fwd_b",
    "lstm_bwd_w_ih",
    "lstm_bwd_w_hh",
    "lstm_bwd_b",
    "proj_w",
    "proj_b",
    "crf_trans",
    "crf_start",
    "crf_end",
];

impl<F: Scalar> Layers<F> {
    pub fn tensors(&self) -> [&Tensor<F>; 13] {
        [
            &self.conv_w,
            &self.conv_b,
            &self.fwd.w_ih,
            &self.fwd.w_hh,
            &self.fwd.bias,
            &self.bwd.w_ih,
            &self.bwd.w_hh,
            &self.bwd.bias,
            &self.proj_w,
            &self.proj_b,
            &self.trans,
            &self.start,
            &self.end,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<F>; 13] {
        [
            &mut self.conv_w,
            &mut self.conv_b,
            &mut self.fwd.w_ih,
            &mut self.fwd.w_hh,
            &mut self.fwd.bias,
            &mut self.bwd.w_ih,
            &mut self.bwd.w_hh,
            &mut self.bwd.bias,
            &mut self.proj_w,
            &mut self.proj_b,
            &mut self.trans,
            &mut self.start,
            &mut self.end,
        ]
    }

    pub fn zeros_like(&self) -> Self {
        let z = |t: &Tensor<F>| Tensor::zeros(&t.shape);
        let zl = |l: &LstmParams<F>| LstmParams {
            w_ih: z(&l.w_ih),
            w_hh: z(&l.w_hh),
            bias: z(&l.bias),
        };
        Layers {
            conv_w: z(&self.conv_w),
            conv_b: z(&self.conv_b),
            fwd: zl(&self.fwd),
            bwd: zl(&self.bwd),
            proj_w: z(&self.proj_w),
            proj_b: z(&self.proj_b),
            trans: z(&self.trans),
            start: z(&self.start),
            end: z(&self.end),
        }
    }
}

impl<F: Scalar> Params<F> {
    /// Parameters in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor<F>)> {
        let mut out = vec![(TENSOR_NAMES[0], &self.word_emb), (TENSOR_NAMES[1], &self.char_emb)];
        out.extend(TENSOR_NAMES[2..].iter().copied().zip(self.layers.tensors()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor<F>)> {
        let mut out = vec![
            (TENSOR_NAMES[0], &mut self.word_emb),
            (TENSOR_NAMES[1], &mut self.char_emb),
        ];
        out.extend(TENSOR_NAMES[2..].iter().copied().zip(self.layers.tensors_mut()));
        out
    }

    pub fn cast<G: Scalar>(&self) -> Params<G> {
        let cl = |l: &LstmParams<F>| LstmParams {
            w_ih: l.w_ih.cast(),
            w_hh: l.w_hh.cast(),
            bias: l.bias.cast(),
        };
        let s = &self.layers;
        Params {
            word_emb: self.word_emb.cast(),
            char_emb: self.char_emb.cast(),
            layers: Layers {
                conv_w: s.conv_w.cast(),
                conv_b: s.conv_b.cast(),
                fwd: cl(&s.fwd),
                bwd: cl(&s.bwd),
                proj_w: s.proj_w.cast(),
                proj_b: s.proj_b.cast(),
                trans: s.trans.cast(),
                start: s.start.cast(),
                end: s.end.cast(),
            },
        }
    }

    /// Scalar `index` of the tensor called `name`.
    pub fn scalar_mut(&mut self, name: &str, index: usize) -> &mut F {
        let (_, t) = self
            .tensors_mut()
            .into_iter()
            .find(|(n, _)| *n == name)
            .unwrap_or_else(|| panic!("unknown tensor {name}"));
        &mut t.data[index]
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.data.iter().all(|x| x.is_finite()))
    }

    /// Expected shape of every tensor for the given sizes.
    pub fn expected_shapes(hp: &Hyperparams, word_vocab: usize, char_vocab: usize) -> Vec<Vec<usize>> {
        let (h, n) = (hp.lstm_hidden, hp.n_tags);
        let (cv, dc, nf, win) = if hp.use_chars {
            (char_vocab, hp.char_emb_dim, hp.char_filters, hp.char_window())
        } else {
            (0, 0, 0, 0)
        };
        let lstm = [vec![4 * h, hp.input_dim()], vec![4 * h, h], vec![4 * h]];
        let mut shapes = vec![
            vec![word_vocab, hp.word_dim],
            vec![cv, dc],
            vec![nf, win],
            vec![nf],
        ];
        shapes.extend(lstm.iter().cloned());
        shapes.extend(lstm.iter().cloned());
        shapes.extend([vec![n, 2 * h], vec![n], vec![n, n], vec![n], vec![n]]);
        shapes
    }
}

/// Initial parameters.
///
/// LSTM, projection and convolution weights are uniform in `±sqrt(1/fan_in)`;
/// character embeddings uniform in `±sqrt(3/dim)`; word embeddings come from
/// `word_init` when given and are otherwise uniform in `±0.25`. PAD rows are
/// zero. CRF scores start at zero except forbidden entries, which are fixed at
/// [`FORBIDDEN_SCORE`].
pub fn init_params(
    hp: &Hyperparams,
    tags: &TagSet,
    word_vocab: usize,
    char_vocab: usize,
    word_init: Option<&[f32]>,
    seed: u64,
) -> Result<Params<f32>> {
    hp.validate()?;
    if hp.n_tags != tags.len() {
        return Err(Error::InvalidArgument(format!(
            "n_tags is {} but the {} tag set has {} tags",
            hp.n_tags,
            tags.mode(),
            tags.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = Params::<f32>::expected_shapes(hp, word_vocab, char_vocab);
    let fan = |fan_in: usize| (1.0 / fan_in.max(1) as f64).sqrt();

    let word_emb = match word_init {
        Some(m) => {
            if m.len() != word_vocab * hp.word_dim {
                return Err(Error::InvalidArgument(format!(
                    "pretrained matrix has {} values, expected {} x {}",
                    m.len(),
                    word_vocab,
                    hp.word_dim
                )));
            }
            Tensor {
                shape: shapes[0].clone(),
                data: m.to_vec(),
            }
        }
        None => Tensor::uniform(&shapes[0], 0.25, &mut rng),
    };
    let char_emb = Tensor::uniform(&shapes[1], (3.0 / hp.char_emb_dim as f64).sqrt(), &mut rng);
    let conv_w = Tensor::uniform(&shapes[2], fan(hp.char_window()), &mut rng);
    let conv_b = Tensor::uniform(&shapes[3], fan(hp.char_window()), &mut rng);
    let lstm = |rng: &mut ChaCha8Rng| LstmParams {
        w_ih: Tensor::uniform(&shapes[4], fan(hp.input_dim()), rng),
        w_hh: Tensor::uniform(&shapes[5], fan(hp.lstm_hidden), rng),
        bias: Tensor::uniform(&shapes[6], fan(hp.lstm_hidden), rng),
    };
    let fwd = lstm(&mut rng);
    let bwd = lstm(&mut rng);
    let proj_w = Tensor::uniform(&shapes[10], fan(2 * hp.lstm_hidden), &mut rng);
    let proj_b = Tensor::uniform(&shapes[11], fan(2 * hp.lstm_hidden), &mut rng);

    let mut params = Params {
        word_emb,
        char_emb,
        layers: Layers {
            conv_w,
            conv_b,
            fwd,
            bwd,
            proj_w,
            proj_b,
            trans: Tensor::zeros(&shapes[12]),
            start: Tensor::zeros(&shapes[13]),
            end: Tensor::zeros(&shapes[14]),
        },
    };
    zero_pad_rows(&mut params);
    FrozenMask::new(tags).apply(&mut params.layers);
    Ok(params)
}

pub(crate) fn zero_pad_rows<F: Scalar>(p: &mut Params<F>) {
    if !p.word_emb.data.is_empty() {
        p.word_emb.row_mut(PAD as usize).iter_mut().for_each(|x| *x = F::zero());
    }
    if !p.char_emb.data.is_empty() {
        p.char_emb.row_mut(PAD as usize).iter_mut().for_each(|x| *x = F::zero());
    }
}

/// CRF entries that encode the IOB rule and must stay at [`FORBIDDEN_SCORE`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrozenMask {
    pub trans: Vec<bool>,
    pub start: Vec<bool>,
    pub end: Vec<bool>,
}

impl FrozenMask {
    pub fn new(tags: &TagSet) -> Self {
        FrozenMask {
            trans: tags.forbidden_transitions(),
            start: tags.forbidden_starts(),
            end: tags.forbidden_ends(),
        }
    }

    /// Resets frozen parameters to [`FORBIDDEN_SCORE`].
    pub fn apply<F: Scalar>(&self, layers: &mut Layers<F>) {
        self.fill(layers, F::of(FORBIDDEN_SCORE as f64));
    }

    /// Zeroes the gradient of frozen parameters.
    pub fn mask_gradient<F: Scalar>(&self, grads: &mut Layers<F>) {
        self.fill(grads, F::zero());
    }

    fn fill<F: Scalar>(&self, l: &mut Layers<F>, v: F) {
        for (t, m) in [
            (&mut l.trans, &self.trans),
            (&mut l.start, &self.start),
            (&mut l.end, &self.end),
        ] {
            for (x, &frozen) in t.data.iter_mut().zip(m) {
                if frozen {
                    *x = v;
                }
            }
        }
    }
}

/// Rows of an embedding table that received gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows<F> {
    pub dim: usize,
    pub rows: BTreeMap<u32, Vec<F>>,
}

impl<F: Scalar> SparseRows<F> {
    pub fn new(dim: usize) -> Self {
        SparseRows {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn row_mut(&mut self, id: u32) -> &mut [F] {
        let dim = self.dim;
        self.rows.entry(id).or_insert_with(|| vec![F::zero(); dim])
    }

    pub fn get(&self, id: u32, col: usize) -> F {
        self.rows.get(&id).map_or(F::zero(), |r| r[col])
    }
}

/// Gradients with respect to [`Params`]; embedding gradients are sparse.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<F> {
    pub word_emb: SparseRows<F>,
    pub char_emb: SparseRows<F>,
    pub layers: Layers<F>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_for(p: &Params<F>) -> Self {
        Gradients {
            word_emb: SparseRows::new(p.word_emb.cols()),
            char_emb: SparseRows::new(p.char_emb.cols()),
            layers: p.layers.zeros_like(),
        }
    }

    /// `self += other * scale`
    pub fn add_scaled(&mut self, other: &Gradients<F>, scale: F) {
        for (dst, src) in [
            (&mut self.word_emb, &other.word_emb),
            (&mut self.char_emb, &other.char_emb),
        ] {
            for (&id, row) in &src.rows {
                super::kernels::axpy(scale, row, dst.row_mut(id));
            }
        }
        for (dst, src) in self.layers.tensors_mut().into_iter().zip(other.layers.tensors()) {
            super::kernels::axpy(scale, &src.data, &mut dst.data);
        }
    }

    pub fn scale(&mut self, s: F) {
        for sr in [&mut self.word_emb, &mut self.char_emb] {
            for row in sr.rows.values_mut() {
                row.iter_mut().for_each(|x| *x *= s);
            }
        }
        for t in self.layers.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        let sparse = [&self.word_emb, &self.char_emb]
            .iter()
            .flat_map(|s| s.rows.values().flatten())
            .map(|x| x.as_f64() * x.as_f64())
            .sum::<f64>();
        let dense = self
            .layers
            .tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|x| x.as_f64() * x.as_f64())
            .sum::<f64>();
        sparse + dense
    }

    /// Gradient of scalar `index` of the tensor called `name`.
    pub fn value(&self, name: &str, index: usize) -> F {
        match name {
            "word_emb" => self.word_emb.get((index / self.word_emb.dim) as u32, index % self.word_emb.dim),
            "char_emb" => self.char_emb.get((index / self.char_emb.dim) as u32, index % self.char_emb.dim),
            _ => {
                let pos = TENSOR_NAMES[2..]
                    .iter()
                    .position(|n| *n == name)
                    .unwrap_or_else(|| panic!("unknown tensor {name}"));
                self.layers.tensors()[pos].data[index]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::TagMode;

    #[test]
    fn init_is_deterministic_and_shaped() {
        let hp = Hyperparams::default();
        let tags = TagSet::new(TagMode::Multiclass);
        let a = init_params(&hp, &tags, 50, 20, None, 9).unwrap();
        let b = init_params(&hp, &tags, 50, 20, None, 9).unwrap();
        assert_eq!(a, b);
        let c = init_params(&hp, &tags, 50, 20, None, 10).unwrap();
        assert_ne!(a, c);
        let shapes = Params::<f32>::expected_shapes(&hp, 50, 20);
        for ((_, t), s) in a.tensors().iter().zip(&shapes) {
            assert_eq!(&t.shape, s);
            assert_eq!(t.data.len(), s.iter().product::<usize>());
        }
        assert_eq!(a.layers.conv_w.shape, [50, 900]);
        assert_eq!(a.layers.fwd.w_ih.shape, [512, 150]);
        assert_eq!(a.layers.proj_w.shape, [21, 256]);
        assert!(a.word_emb.row(0).iter().all(|&x| x == 0.0));
        assert!(a.char_emb.row(0).iter().all(|&x| x == 0.0));
        let bound = (1.0f32 / 150.0).sqrt();
        assert!(a.layers.fwd.w_ih.data.iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn forbidden_transitions_start_frozen() {
        let tags = TagSet::new(TagMode::Multiclass);
        let p = init_params(&Hyperparams::default(), &tags, 10, 10, None, 0).unwrap();
        let n = tags.len();
        let o = tags.index_of("O".parse().unwrap()).unwrap();
        let i_oid = tags.index_of("I-OID".parse().unwrap()).unwrap();
        let b_oid = tags.index_of("B-OID".parse().unwrap()).unwrap();
        assert_eq!(p.layers.trans.data[o * n + i_oid], FORBIDDEN_SCORE);
        assert_eq!(p.layers.trans.data[b_oid * n + i_oid], 0.0);
        assert_eq!(p.layers.start.data[i_oid], FORBIDDEN_SCORE);
        assert_eq!(p.layers.start.data[b_oid], 0.0);
    }

    #[test]
    fn rejects_mismatched_tag_count() {
        let tags = TagSet::new(TagMode::Binary);
        assert!(init_params(&Hyperparams::default(), &tags, 10, 10, None, 0).is_err());
        assert!(init_params(&Hyperparams::binary(), &tags, 10, 10, None, 0).is_ok());
        let bad = Hyperparams {
            char_kernel: 2,
            ..Hyperparams::binary()
        };
        assert!(init_params(&bad, &tags, 10, 10, None, 0).is_err());
    }

    #[test]
    fn baseline_has_no_char_parameters() {
        let hp = Hyperparams {
            use_chars: false,
            ..Hyperparams::default()
        };
        let p = init_params(&hp, &TagSet::new(TagMode::Multiclass), 10, 10, None, 0).unwrap();
        assert!(p.char_emb.data.is_empty());
        assert!(p.layers.conv_w.data.is_empty());
        assert_eq!(p.layers.fwd.w_ih.shape, [512, 100]);
    }
}

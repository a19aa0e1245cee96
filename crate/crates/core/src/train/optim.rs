use crate::tagger::{Gradients, Params, SparseRows, Tensor};

/// Adaptive-moment optimizer with bias-corrected first and second moments.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(params: &Params<f32>, lr: f64) -> Self {
        let zeros: Vec<Vec<f32>> = params.tensors().iter().map(|(_, t)| vec![0.0; t.data.len()]).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Applies one update. Rows of embedding tables without gradient are
    /// treated as having zero gradient, so their moments still decay.
    pub fn step(&mut self, params: &mut Params<f32>, grad: &Gradients<f32>, freeze_word_embeddings: bool) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let alpha = (self.lr * c2.sqrt() / c1) as f32;
        // same update as m_hat / (sqrt(v_hat) + eps), with the corrections folded into alpha and eps
        let eps = (self.eps * c2.sqrt()) as f32;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let update = |p: &mut [f32], g: &[f32], m: &mut [f32], v: &mut [f32]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= alpha * m[i] / (v[i].sqrt() + eps);
            }
        };
        let sparse = |t: &mut Tensor<f32>, rows: &SparseRows<f32>, m: &mut [f32], v: &mut [f32]| {
            let d = t.cols();
            if d == 0 {
                return;
            }
            let zero = vec![0.0; d];
            for r in 0..t.shape[0] {
                let g = rows.rows.get(&(r as u32)).map_or(&zero[..], |x| &x[..]);
                let span = r * d..(r + 1) * d;
                update(&mut t.data[span.clone()], g, &mut m[span.clone()], &mut v[span]);
            }
        };
        let (m, v) = (&mut self.m, &mut self.v);
        if !freeze_word_embeddings {
            sparse(&mut params.word_emb, &grad.word_emb, &mut m[0], &mut v[0]);
        }
        sparse(&mut params.char_emb, &grad.char_emb, &mut m[1], &mut v[1]);
        for (k, (p, g)) in params
            .layers
            .tensors_mut()
            .into_iter()
            .zip(grad.layers.tensors())
            .enumerate()
        {
            update(&mut p.data, &g.data, &mut m[k + 2], &mut v[k + 2]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagger::{init_params, Hyperparams};
    use crate::taxonomy::{TagMode, TagSet};

    #[test]
    fn first_step_moves_by_learning_rate() {
        let hp = Hyperparams {
            word_dim: 2,
            char_emb_dim: 2,
            char_filters: 2,
            lstm_hidden: 2,
            ..Hyperparams::binary()
        };
        let mut p = init_params(&hp, &TagSet::new(TagMode::Binary), 4, 4, None, 0).unwrap();
        let before = p.clone();
        let mut g = Gradients::zeros_for(&p);
        g.layers.proj_b.data[1] = 0.3;
        g.layers.proj_b.data[2] = -7.0;
        g.word_emb.row_mut(2)[0] = 1.0;
        let mut adam = Adam::new(&p, 1e-3);
        adam.step(&mut p, &g, false);
        // with bias correction the first step is lr * sign(g)
        assert!((before.layers.proj_b.data[1] - p.layers.proj_b.data[1] - 1e-3).abs() < 1e-6);
        assert!((p.layers.proj_b.data[2] - before.layers.proj_b.data[2] - 1e-3).abs() < 1e-6);
        assert_eq!(p.layers.proj_b.data[0], before.layers.proj_b.data[0]);
        assert!((before.word_emb.data[4] - p.word_emb.data[4] - 1e-3).abs() < 1e-6);
        assert_eq!(p.word_emb.data[5], before.word_emb.data[5]);

        let mut frozen = before.clone();
        Adam::new(&frozen, 1e-3).step(&mut frozen, &g, true);
        assert_eq!(frozen.word_emb, before.word_emb);
    }
}

//! Forward and backward passes of the network for a single log.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::crf::{CrfView, Emissions};
use super::kernels::{add_assign, axpy, dot, sigmoid};
use super::params::{FrozenMask, Gradients, Hyperparams, LstmParams, Params};
use super::Scalar;
use crate::embed::{EncodedLog, PAD};

/// Character representation of one token and, per filter, the position that
/// won the max-pool (`None` for a token without characters).
pub fn char_representation<F: Scalar>(
    params: &Params<F>,
    hp: &Hyperparams,
    chars: &[u32],
) -> (Vec<F>, Vec<Option<usize>>) {
    let n = chars.iter().take_while(|&&c| c != PAD).count();
    let (dc, k, half) = (hp.char_emb_dim, hp.char_kernel, hp.char_kernel / 2);
    let conv_w = &params.layers.conv_w;
    let mut rep = params.layers.conv_b.data.clone();
    let mut arg = vec![None; hp.char_filters];
    if n == 0 {
        return (rep, arg);
    }
    let mut best = vec![F::neg_infinity(); hp.char_filters];
    for p in 0..n {
        for (f, (b, a)) in best.iter_mut().zip(arg.iter_mut()).enumerate() {
            let w = conv_w.row(f);
            let mut v = params.layers.conv_b.data[f];
            for j in 0..k {
                // window slot j covers character p + j - half
                if let Some(q) = (p + j).checked_sub(half).filter(|&q| q < n) {
                    v += dot(&w[j * dc..(j + 1) * dc], params.char_emb.row(chars[q] as usize));
                }
            }
            if v > *b {
                *b = v;
                *a = Some(p);
            }
        }
    }
    rep.copy_from_slice(&best);
    (rep, arg)
}

#[derive(Clone, Debug)]
struct LstmCache<F> {
    /// Post-activation gates `i, f, g, o` per token, `len x 4H`.
    gates: Vec<F>,
    /// Cell states, `len x H`.
    cells: Vec<F>,
    /// Hidden states, `len x H`.
    hidden: Vec<F>,
}

/// Intermediate values of a forward pass, needed for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<F> {
    len: usize,
    /// LSTM inputs after dropout, `len x input_dim`.
    inputs: Vec<F>,
    input_mask: Option<Vec<F>>,
    /// Max-pool winners, `len x filters`.
    char_argmax: Vec<Option<usize>>,
    fwd: LstmCache<F>,
    bwd: LstmCache<F>,
    /// Concatenated hidden states after dropout, `len x 2H`.
    hidden: Vec<F>,
    hidden_mask: Option<Vec<F>>,
}

fn dropout_mask<F: Scalar>(rng: &mut ChaCha8Rng, len: usize, rate: f32) -> Vec<F> {
    let keep = F::of(1.0 / (1.0 - rate as f64));
    (0..len)
        .map(|_| if rng.random::<f32>() < rate { F::zero() } else { keep })
        .collect()
}

fn apply_mask<F: Scalar>(x: &mut [F], mask: &Option<Vec<F>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(v, s)| *v *= *s);
    }
}

fn lstm_forward<F: Scalar>(p: &LstmParams<F>, inputs: &[F], in_dim: usize, len: usize, reverse: bool) -> LstmCache<F> {
    let h = p.w_hh.cols();
    let mut cache = LstmCache {
        gates: vec![F::zero(); len * 4 * h],
        cells: vec![F::zero(); len * h],
        hidden: vec![F::zero(); len * h],
    };
    let zeros = vec![F::zero(); h];
    let mut z = vec![F::zero(); 4 * h];
    for step in 0..len {
        let (t, prev) = if reverse {
            (len - 1 - step, (step > 0).then(|| len - step))
        } else {
            (step, step.checked_sub(1))
        };
        let x = &inputs[t * in_dim..(t + 1) * in_dim];
        let (h_prev, c_prev) = match prev {
            Some(q) => (&cache.hidden[q * h..(q + 1) * h], &cache.cells[q * h..(q + 1) * h]),
            None => (&zeros[..], &zeros[..]),
        };
        for (r, zr) in z.iter_mut().enumerate() {
            *zr = p.bias.data[r] + dot(p.w_ih.row(r), x) + dot(p.w_hh.row(r), h_prev);
        }
        let mut c_new = vec![F::zero(); h];
        let mut h_new = vec![F::zero(); h];
        let gates = &mut cache.gates[t * 4 * h..(t + 1) * 4 * h];
        for u in 0..h {
            let i = sigmoid(z[u]);
            let f = sigmoid(z[h + u]);
            let g = z[2 * h + u].tanh();
            let o = sigmoid(z[3 * h + u]);
            gates[u] = i;
            gates[h + u] = f;
            gates[2 * h + u] = g;
            gates[3 * h + u] = o;
            c_new[u] = f * c_prev[u] + i * g;
            h_new[u] = o * c_new[u].tanh();
        }
        cache.cells[t * h..(t + 1) * h].copy_from_slice(&c_new);
        cache.hidden[t * h..(t + 1) * h].copy_from_slice(&h_new);
    }
    cache
}

/// Backpropagates `d_hidden` (`len x H`) through one LSTM direction, adding
/// parameter gradients to `grad` and input gradients to `d_inputs`.
#[allow(clippy::too_many_arguments)]
fn lstm_backward<F: Scalar>(
    p: &LstmParams<F>,
    cache: &LstmCache<F>,
    inputs: &[F],
    in_dim: usize,
    len: usize,
    reverse: bool,
    d_hidden: &[F],
    grad: &mut LstmParams<F>,
    d_inputs: &mut [F],
) {
    let h = p.w_hh.cols();
    let mut dh_next = vec![F::zero(); h];
    let mut dc_next = vec![F::zero(); h];
    let mut dz = vec![F::zero(); 4 * h];
    let zeros = vec![F::zero(); h];
    let one = F::one();
    for step in (0..len).rev() {
        let (t, prev) = if reverse {
            (len - 1 - step, (step > 0).then(|| len - step))
        } else {
            (step, step.checked_sub(1))
        };
        let gates = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
        let c = &cache.cells[t * h..(t + 1) * h];
        let (h_prev, c_prev) = match prev {
            Some(q) => (&cache.hidden[q * h..(q + 1) * h], &cache.cells[q * h..(q + 1) * h]),
            None => (&zeros[..], &zeros[..]),
        };
        for u in 0..h {
            let (i, f, g, o) = (gates[u], gates[h + u], gates[2 * h + u], gates[3 * h + u]);
            let tc = c[u].tanh();
            let dh = d_hidden[t * h + u] + dh_next[u];
            let dc = dc_next[u] + dh * o * (one - tc * tc);
            dz[u] = dc * g * i * (one - i);
            dz[h + u] = dc * c_prev[u] * f * (one - f);
            dz[2 * h + u] = dc * i * (one - g * g);
            dz[3 * h + u] = dh * tc * o * (one - o);
            dc_next[u] = dc * f;
        }
        let x = &inputs[t * in_dim..(t + 1) * in_dim];
        let dx = &mut d_inputs[t * in_dim..(t + 1) * in_dim];
        dh_next.iter_mut().for_each(|v| *v = F::zero());
        for (r, &d) in dz.iter().enumerate() {
            if d == F::zero() {
                continue;
            }
            axpy(d, x, grad.w_ih.row_mut(r));
            axpy(d, h_prev, grad.w_hh.row_mut(r));
            grad.bias.data[r] += d;
            axpy(d, p.w_ih.row(r), dx);
            axpy(d, p.w_hh.row(r), &mut dh_next);
        }
    }
}

/// Runs the network on one log. With `dropout_seed` set, dropout masks are
/// drawn from a generator seeded with it (training mode); with `None` the pass
/// is deterministic inference.
pub fn forward<F: Scalar>(
    params: &Params<F>,
    hp: &Hyperparams,
    enc: &EncodedLog,
    dropout_seed: Option<u64>,
) -> (Emissions<F>, ForwardCache<F>) {
    let len = enc.token_count();
    let (dw, in_dim, nf) = (hp.word_dim, hp.input_dim(), hp.char_filters);
    let mut inputs = vec![F::zero(); len * in_dim];
    let mut char_argmax = Vec::new();
    for t in 0..len {
        let x = &mut inputs[t * in_dim..(t + 1) * in_dim];
        x[..dw].copy_from_slice(params.word_emb.row(enc.word_ids[t] as usize));
        if hp.use_chars {
            let (rep, arg) = char_representation(params, hp, enc.chars(t));
            x[dw..dw + nf].copy_from_slice(&rep);
            char_argmax.extend(arg);
        }
    }
    let mut rng = dropout_seed
        .filter(|_| hp.dropout > 0.0)
        .map(ChaCha8Rng::seed_from_u64);
    let input_mask = rng.as_mut().map(|r| dropout_mask(r, inputs.len(), hp.dropout));
    apply_mask(&mut inputs, &input_mask);

    let fwd = lstm_forward(&params.layers.fwd, &inputs, in_dim, len, false);
    let bwd = lstm_forward(&params.layers.bwd, &inputs, in_dim, len, true);
    let h = hp.lstm_hidden;
    let mut hidden = vec![F::zero(); len * 2 * h];
    for t in 0..len {
        hidden[t * 2 * h..t * 2 * h + h].copy_from_slice(&fwd.hidden[t * h..(t + 1) * h]);
        hidden[t * 2 * h + h..(t + 1) * 2 * h].copy_from_slice(&bwd.hidden[t * h..(t + 1) * h]);
    }
    let hidden_mask = rng.as_mut().map(|r| dropout_mask(r, hidden.len(), hp.dropout));
    apply_mask(&mut hidden, &hidden_mask);

    let n = hp.n_tags;
    let l = &params.layers;
    let mut em = Emissions::zeros(len, n);
    for t in 0..len {
        let ht = &hidden[t * 2 * h..(t + 1) * 2 * h];
        for j in 0..n {
            em.data[t * n + j] = l.proj_b.data[j] + dot(l.proj_w.row(j), ht);
        }
    }
    let cache = ForwardCache {
        len,
        inputs,
        input_mask,
        char_argmax,
        fwd,
        bwd,
        hidden,
        hidden_mask,
    };
    (em, cache)
}

fn crf_view<F: Scalar>(params: &Params<F>) -> CrfView<'_, F> {
    let l = &params.layers;
    CrfView::new(&l.trans.data, &l.start.data, &l.end.data)
}

/// Negative log-likelihood of `gold` (tag indices) for one log.
pub fn log_loss<F: Scalar>(
    params: &Params<F>,
    hp: &Hyperparams,
    enc: &EncodedLog,
    gold: &[usize],
    dropout_seed: Option<u64>,
) -> f64 {
    let (em, _) = forward(params, hp, enc, dropout_seed);
    crf_view(params).nll(&em, gold)
}

/// Loss of one log and its exact gradient. Frozen CRF entries get zero gradient.
pub fn log_loss_and_gradient<F: Scalar>(
    params: &Params<F>,
    hp: &Hyperparams,
    frozen: &FrozenMask,
    enc: &EncodedLog,
    gold: &[usize],
    dropout_seed: Option<u64>,
) -> (f64, Gradients<F>) {
    let (em, cache) = forward(params, hp, enc, dropout_seed);
    let (loss, cg) = crf_view(params).nll_with_gradient(&em, gold);
    let mut grad = Gradients::zeros_for(params);
    let cast = |src: &[f64], dst: &mut [F]| dst.iter_mut().zip(src).for_each(|(d, s)| *d += F::of(*s));
    cast(&cg.trans, &mut grad.layers.trans.data);
    cast(&cg.start, &mut grad.layers.start.data);
    cast(&cg.end, &mut grad.layers.end.data);
    frozen.mask_gradient(&mut grad.layers);

    let (len, n, h) = (cache.len, hp.n_tags, hp.lstm_hidden);
    let l = &params.layers;
    let mut d_hidden = vec![F::zero(); len * 2 * h];
    for t in 0..len {
        let ht = &cache.hidden[t * 2 * h..(t + 1) * 2 * h];
        let dht = &mut d_hidden[t * 2 * h..(t + 1) * 2 * h];
        for j in 0..n {
            let d = F::of(cg.emissions[t * n + j]);
            axpy(d, ht, grad.layers.proj_w.row_mut(j));
            grad.layers.proj_b.data[j] += d;
            axpy(d, l.proj_w.row(j), dht);
        }
    }
    apply_mask(&mut d_hidden, &cache.hidden_mask);
    let mut d_fwd = vec![F::zero(); len * h];
    let mut d_bwd = vec![F::zero(); len * h];
    for t in 0..len {
        d_fwd[t * h..(t + 1) * h].copy_from_slice(&d_hidden[t * 2 * h..t * 2 * h + h]);
        d_bwd[t * h..(t + 1) * h].copy_from_slice(&d_hidden[t * 2 * h + h..(t + 1) * 2 * h]);
    }

    let in_dim = hp.input_dim();
    let mut d_inputs = vec![F::zero(); len * in_dim];
    lstm_backward(&l.fwd, &cache.fwd, &cache.inputs, in_dim, len, false, &d_fwd, &mut grad.layers.fwd, &mut d_inputs);
    lstm_backward(&l.bwd, &cache.bwd, &cache.inputs, in_dim, len, true, &d_bwd, &mut grad.layers.bwd, &mut d_inputs);
    apply_mask(&mut d_inputs, &cache.input_mask);

    let (dw, dc, nf, half) = (hp.word_dim, hp.char_emb_dim, hp.char_filters, hp.char_kernel / 2);
    for t in 0..len {
        let dx = &d_inputs[t * in_dim..(t + 1) * in_dim];
        let w = enc.word_ids[t];
        if w != PAD {
            add_assign(grad.word_emb.row_mut(w), &dx[..dw]);
        }
        if !hp.use_chars {
            continue;
        }
        let chars = enc.chars(t);
        let n_chars = enc.char_len(t);
        for f in 0..nf {
            let d = dx[dw + f];
            grad.layers.conv_b.data[f] += d;
            let Some(p) = cache.char_argmax[t * nf + f] else { continue };
            for j in 0..hp.char_kernel {
                let Some(q) = (p + j).checked_sub(half).filter(|&q| q < n_chars) else { continue };
                let c = chars[q];
                let span = j * dc..(j + 1) * dc;
                axpy(d, params.char_emb.row(c as usize), &mut grad.layers.conv_w.row_mut(f)[span.clone()]);
                axpy(d, &l.conv_w.row(f)[span], grad.char_emb.row_mut(c));
            }
        }
    }
    (loss, grad)
}

/// One training example: encoded log, gold tag indices, dropout seed.
pub type Example<'a> = (&'a EncodedLog, &'a [usize], Option<u64>);

/// Mean loss and mean gradient over a batch. Per-log gradients are computed in
/// parallel and summed in batch order, so the result does not depend on the
/// number of worker threads.
pub fn batch_loss_and_gradient<F: Scalar>(
    params: &Params<F>,
    hp: &Hyperparams,
    frozen: &FrozenMask,
    batch: &[Example<'_>],
) -> (f64, Gradients<F>) {
    assert!(!batch.is_empty(), "empty batch");
    let parts: Vec<(f64, Gradients<F>)> = batch
        .par_iter()
        .map(|(enc, gold, seed)| log_loss_and_gradient(params, hp, frozen, enc, gold, *seed))
        .collect();
    let scale = F::of(1.0 / batch.len() as f64);
    let mut total = Gradients::zeros_for(params);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add_scaled(g, scale);
    }
    (loss / batch.len() as f64, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagger::params::init_params;
    use crate::taxonomy::{TagMode, TagSet};

    fn tiny(use_chars: bool) -> (Hyperparams, Params<f64>, FrozenMask) {
        let hp = Hyperparams {
            word_dim: 4,
            char_emb_dim: 5,
            char_filters: 3,
            char_kernel: 3,
            lstm_hidden: 3,
            dropout: 0.3,
            n_tags: 3,
            max_word_len: 6,
            use_chars,
        };
        let tags = TagSet::new(TagMode::Binary);
        let mut p = init_params(&hp, &tags, 6, 8, None, 5).unwrap().cast::<f64>();
        // non-zero CRF scores so their gradients are exercised
        for (k, x) in p.layers.trans.data.iter_mut().enumerate() {
            if *x == 0.0 {
                *x = 0.1 * (k as f64).sin();
            }
        }
        (hp, p, FrozenMask::new(&tags))
    }

    fn enc(words: &[u32], chars: &[&[u32]], l: usize) -> EncodedLog {
        let mut char_ids = vec![PAD; words.len() * l];
        for (t, cs) in chars.iter().enumerate() {
            char_ids[t * l..t * l + cs.len()].copy_from_slice(cs);
        }
        EncodedLog {
            word_ids: words.to_vec(),
            char_ids,
            max_word_len: l,
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (hp, mut p, frozen) = tiny(true);
        let e = enc(&[2, 5, 1, 3], &[&[2, 3], &[4, 4, 4, 4], &[7], &[5, 6, 2, 3, 1, 4]], 6);
        let gold = [0, 1, 2, 0];
        for seed in [None, Some(11)] {
            let (_, g) = log_loss_and_gradient(&p, &hp, &frozen, &e, &gold, seed);
            let names: Vec<&str> = p.tensors().iter().map(|(n, _)| *n).collect();
            for name in names {
                let size = p.tensors().iter().find(|(n, _)| *n == name).unwrap().1.data.len();
                for k in 0..size {
                    let x = *p.scalar_mut(name, k);
                    *p.scalar_mut(name, k) = x + 1e-5;
                    let up = log_loss(&p, &hp, &e, &gold, seed);
                    *p.scalar_mut(name, k) = x - 1e-5;
                    let down = log_loss(&p, &hp, &e, &gold, seed);
                    *p.scalar_mut(name, k) = x;
                    let numeric = (up - down) / 2e-5;
                    let analytic = g.value(name, k);
                    let frozen_entry = x == crate::tagger::FORBIDDEN_SCORE as f64;
                    if frozen_entry {
                        assert_eq!(analytic, 0.0);
                    } else {
                        assert!(
                            (analytic - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()),
                            "{name}[{k}]: analytic {analytic} numeric {numeric}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn repeated_characters_pool_an_interior_position() {
        let (hp, p, _) = tiny(true);
        let chars = [3u32, 3, 3, 3, 3, 0];
        let (rep, arg) = char_representation(&p, &hp, &chars);
        assert_eq!(rep.len(), 3);
        for (f, a) in arg.iter().enumerate() {
            let a = a.unwrap();
            // edge positions see one zero neighbour; interior ones are all equal
            if (1..4).contains(&a) {
                let interior: f64 = p.layers.conv_b.data[f]
                    + (0..3).map(|j| dot(&p.layers.conv_w.row(f)[j * 5..(j + 1) * 5], p.char_emb.row(3))).sum::<f64>();
                assert!((rep[f] - interior).abs() < 1e-12);
                assert_eq!(a, 1, "first maximum wins");
            }
        }
    }

    #[test]
    fn empty_word_yields_bias() {
        let (hp, p, _) = tiny(true);
        let (rep, arg) = char_representation(&p, &hp, &[0, 0, 0, 0, 0, 0]);
        assert_eq!(rep, p.layers.conv_b.data);
        assert!(arg.iter().all(Option::is_none));
    }

    #[test]
    fn inference_is_deterministic_and_dropout_is_seeded() {
        let (hp, p, _) = tiny(true);
        let e = enc(&[2, 3], &[&[2], &[3, 4]], 6);
        assert_eq!(forward(&p, &hp, &e, None).0, forward(&p, &hp, &e, None).0);
        assert_eq!(forward(&p, &hp, &e, Some(1)).0, forward(&p, &hp, &e, Some(1)).0);
        assert_ne!(forward(&p, &hp, &e, Some(1)).0, forward(&p, &hp, &e, None).0);
    }

    #[test]
    fn zeroed_char_channel_matches_baseline() {
        let (hp, mut p, _) = tiny(true);
        p.layers.conv_w.fill_zero();
        p.layers.conv_b.fill_zero();
        let (hp_base, mut base, _) = tiny(false);
        base.word_emb = p.word_emb.clone();
        base.layers.proj_w = p.layers.proj_w.clone();
        base.layers.proj_b = p.layers.proj_b.clone();
        base.layers.trans = p.layers.trans.clone();
        for (b, f) in [(&mut base.layers.fwd, &p.layers.fwd), (&mut base.layers.bwd, &p.layers.bwd)] {
            b.w_hh = f.w_hh.clone();
            b.bias = f.bias.clone();
            for r in 0..b.w_ih.shape[0] {
                b.w_ih.row_mut(r).copy_from_slice(&f.w_ih.row(r)[..hp.word_dim]);
            }
        }
        let e = enc(&[2, 3, 4], &[&[2], &[3, 4], &[5, 5, 5]], 6);
        let full = forward(&p, &hp, &e, None).0;
        let plain = forward(&base, &hp_base, &e, None).0;
        for (a, b) in full.data.iter().zip(&plain.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unused_rows_get_no_gradient() {
        let (hp, p, frozen) = tiny(true);
        let e = enc(&[2, 3], &[&[2], &[3, 4]], 6);
        let (_, g) = log_loss_and_gradient(&p, &hp, &frozen, &e, &[1, 0], Some(3));
        assert!(!g.word_emb.rows.contains_key(&PAD));
        assert!(!g.char_emb.rows.contains_key(&PAD));
        assert_eq!(g.word_emb.rows.keys().copied().collect::<Vec<_>>(), [2, 3]);
    }

    #[test]
    fn batch_gradient_is_mean_of_parts() {
        let (hp, p, frozen) = tiny(true);
        let a = enc(&[2, 3], &[&[2], &[3, 4]], 6);
        let b = enc(&[4], &[&[5, 6]], 6);
        let (ga, gb) = ([0usize, 1], [1usize]);
        let (la, da) = log_loss_and_gradient(&p, &hp, &frozen, &a, &ga, None);
        let (lb, db) = log_loss_and_gradient(&p, &hp, &frozen, &b, &gb, None);
        let (l, d) = batch_loss_and_gradient(&p, &hp, &frozen, &[(&a, &ga[..], None), (&b, &gb[..], None)]);
        assert!((l - (la + lb) / 2.0).abs() < 1e-12);
        let x = d.value("lstm_fwd_w_ih", 7);
        assert!((x - (da.value("lstm_fwd_w_ih", 7) + db.value("lstm_fwd_w_ih", 7)) / 2.0).abs() < 1e-12);
    }
}

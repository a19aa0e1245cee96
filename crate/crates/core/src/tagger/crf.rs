//! Linear-chain CRF: partition function, path scores, negative log-likelihood
//! with exact gradients, and Viterbi decoding.
//!
//! A path `y` over `T` tokens scores
//! `start[y_0] + sum_t E[t, y_t] + sum_t trans[y_{t-1}, y_t] + end[y_{T-1}]`.
//! All accumulation happens in `f64` regardless of the parameter type.

use super::kernels::log_sum_exp;
use super::Scalar;

/// Per-token tag scores of one log, row-major `len x n_tags`.
#[derive(Clone, Debug, PartialEq)]
pub struct Emissions<F> {
    pub len: usize,
    pub n_tags: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Emissions<F> {
    pub fn new(len: usize, n_tags: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), len * n_tags, "emission data has wrong size");
        Emissions { len, n_tags, data }
    }

    pub fn zeros(len: usize, n_tags: usize) -> Self {
        Self::new(len, n_tags, vec![F::zero(); len * n_tags])
    }

    #[inline]
    pub fn at(&self, t: usize, j: usize) -> f64 {
        self.data[t * self.n_tags + j].as_f64()
    }

    pub fn row(&self, t: usize) -> &[F] {
        &self.data[t * self.n_tags..(t + 1) * self.n_tags]
    }
}

/// Borrowed CRF scores: `trans` is row-major `n x n`.
#[derive(Clone, Copy, Debug)]
pub struct CrfView<'a, F> {
    pub trans: &'a [F],
    pub start: &'a [F],
    pub end: &'a [F],
}

impl<'a, F: Scalar> CrfView<'a, F> {
    pub fn new(trans: &'a [F], start: &'a [F], end: &'a [F]) -> Self {
        let n = start.len();
        assert_eq!(end.len(), n);
        assert_eq!(trans.len(), n * n);
        CrfView { trans, start, end }
    }

    pub fn n_tags(&self) -> usize {
        self.start.len()
    }

    #[inline]
    fn t(&self, i: usize, j: usize) -> f64 {
        self.trans[i * self.n_tags() + j].as_f64()
    }

    fn check(&self, e: &Emissions<F>) {
        assert_eq!(e.n_tags, self.n_tags(), "emission width differs from CRF size");
        assert!(e.len > 0, "CRF over an empty sequence");
    }

    /// Forward variables `alpha[t * n + j]`: log-sum of prefix paths ending in `j` at `t`.
    fn forward(&self, e: &Emissions<F>) -> Vec<f64> {
        let n = self.n_tags();
        let mut alpha = vec![0.0; e.len * n];
        for (j, a) in alpha[..n].iter_mut().enumerate() {
            *a = self.start[j].as_f64() + e.at(0, j);
        }
        for t in 1..e.len {
            let (prev, cur) = alpha.split_at_mut(t * n);
            let prev = &prev[(t - 1) * n..];
            for (j, a) in cur[..n].iter_mut().enumerate() {
                *a = e.at(t, j) + log_sum_exp((0..n).map(|i| prev[i] + self.t(i, j)));
            }
        }
        alpha
    }

    /// Backward variables `beta[t * n + i]`: log-sum of suffix scores after `i` at `t`.
    fn backward(&self, e: &Emissions<F>) -> Vec<f64> {
        let n = self.n_tags();
        let last = e.len - 1;
        let mut beta = vec![0.0; e.len * n];
        for i in 0..n {
            beta[last * n + i] = self.end[i].as_f64();
        }
        for t in (0..last).rev() {
            let (cur, next) = beta.split_at_mut((t + 1) * n);
            let next = &next[..n];
            for (i, b) in cur[t * n..].iter_mut().enumerate() {
                *b = log_sum_exp((0..n).map(|j| self.t(i, j) + e.at(t + 1, j) + next[j]));
            }
        }
        beta
    }

    /// `log Z`, the log-sum-exp of all path scores.
    pub fn log_partition(&self, e: &Emissions<F>) -> f64 {
        self.check(e);
        let n = self.n_tags();
        let alpha = self.forward(e);
        let last = &alpha[(e.len - 1) * n..];
        log_sum_exp((0..n).map(|j| last[j] + self.end[j].as_f64()))
    }

    pub fn sequence_score(&self, e: &Emissions<F>, tags: &[usize]) -> f64 {
        self.check(e);
        assert_eq!(tags.len(), e.len, "path length differs from sequence length");
        let mut s = self.start[tags[0]].as_f64() + self.end[tags[e.len - 1]].as_f64();
        for (t, &y) in tags.iter().enumerate() {
            s += e.at(t, y);
            if t > 0 {
                s += self.t(tags[t - 1], y);
            }
        }
        s
    }

    /// `log Z - score(gold)`.
    pub fn nll(&self, e: &Emissions<F>, gold: &[usize]) -> f64 {
        self.log_partition(e) - self.sequence_score(e, gold)
    }

    /// Highest-scoring path.
    ///
    /// Ties go to the lower tag index, latest position first: the last tag is
    /// the smallest index among the best final tags, and each back-pointer is
    /// the smallest index among the best predecessors. Among all optimal paths
    /// this returns the one whose reversed tag sequence is lexicographically
    /// smallest.
    pub fn viterbi(&self, e: &Emissions<F>) -> Vec<usize> {
        self.check(e);
        let n = self.n_tags();
        let mut delta: Vec<f64> = (0..n).map(|j| self.start[j].as_f64() + e.at(0, j)).collect();
        let mut back = vec![0usize; e.len * n];
        let mut next = vec![0.0; n];
        for t in 1..e.len {
            for (j, nx) in next.iter_mut().enumerate() {
                let mut best = (0, delta[0] + self.t(0, j));
                for (i, d) in delta.iter().enumerate().skip(1) {
                    let s = d + self.t(i, j);
                    if s > best.1 {
                        best = (i, s);
                    }
                }
                back[t * n + j] = best.0;
                *nx = best.1 + e.at(t, j);
            }
            std::mem::swap(&mut delta, &mut next);
        }
        let mut best = (0, delta[0] + self.end[0].as_f64());
        for (j, d) in delta.iter().enumerate().skip(1) {
            let s = d + self.end[j].as_f64();
            if s > best.1 {
                best = (j, s);
            }
        }
        let mut path = vec![0; e.len];
        path[e.len - 1] = best.0;
        for t in (1..e.len).rev() {
            path[t - 1] = back[t * n + path[t]];
        }
        path
    }

    /// Negative log-likelihood of `gold` and its gradient with respect to the
    /// emissions and CRF scores, from forward-backward marginals.
    pub fn nll_with_gradient(&self, e: &Emissions<F>, gold: &[usize]) -> (f64, CrfGradient) {
        self.check(e);
        assert_eq!(gold.len(), e.len);
        let n = self.n_tags();
        let alpha = self.forward(e);
        let beta = self.backward(e);
        let last = e.len - 1;
        let log_z = log_sum_exp((0..n).map(|j| alpha[last * n + j] + self.end[j].as_f64()));
        let loss = log_z - self.sequence_score(e, gold);

        let mut g = CrfGradient {
            emissions: vec![0.0; e.len * n],
            trans: vec![0.0; n * n],
            start: vec![0.0; n],
            end: vec![0.0; n],
        };
        for t in 0..e.len {
            for j in 0..n {
                g.emissions[t * n + j] = (alpha[t * n + j] + beta[t * n + j] - log_z).exp();
            }
        }
        g.start.copy_from_slice(&g.emissions[..n]);
        g.end.copy_from_slice(&g.emissions[last * n..]);
        for t in 1..e.len {
            for i in 0..n {
                let a = alpha[(t - 1) * n + i] - log_z;
                for j in 0..n {
                    g.trans[i * n + j] += (a + self.t(i, j) + e.at(t, j) + beta[t * n + j]).exp();
                }
            }
        }
        for (t, &y) in gold.iter().enumerate() {
            g.emissions[t * n + y] -= 1.0;
            if t > 0 {
                g.trans[gold[t - 1] * n + y] -= 1.0;
            }
        }
        g.start[gold[0]] -= 1.0;
        g.end[gold[last]] -= 1.0;
        (loss, g)
    }
}

/// Gradient of the CRF negative log-likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct CrfGradient {
    pub emissions: Vec<f64>,
    pub trans: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

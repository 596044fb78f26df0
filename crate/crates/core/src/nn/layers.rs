//! Transformer building blocks with explicit forward caches and reverse-mode
//! backward passes. Every `backward` accumulates parameter gradients into a
//! gradient module of the same shape and returns the input gradient.

use super::tensor::{axpy, dot, matmul, matmul_nt, matmul_tn_acc, Mat, Scalar, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Named, ordered access to the tensors of a module.
pub trait Module<F: Scalar> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<F>)>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<F>)>);
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<F: Scalar> Module<F> for Tensor<F> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<F>)>) {
        out.push((prefix.to_string(), self));
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<F>)>) {
        out.push((prefix.to_string(), self));
    }
}

impl<F: Scalar, M: Module<F>> Module<F> for Vec<M> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<F>)>) {
        for (i, m) in self.iter().enumerate() {
            m.collect(&join(prefix, &i.to_string()), out);
        }
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<F>)>) {
        for (i, m) in self.iter_mut().enumerate() {
            m.collect_mut(&join(prefix, &i.to_string()), out);
        }
    }
}

macro_rules! module {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl<F: Scalar> Module<F> for $ty<F> {
            fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<F>)>) {
                $( self.$field.collect(&join(prefix, stringify!($field)), out); )*
            }
            fn collect_mut<'a>(
                &'a mut self,
                prefix: &str,
                out: &mut Vec<(String, &'a mut Tensor<F>)>,
            ) {
                $( self.$field.collect_mut(&join(prefix, stringify!($field)), out); )*
            }
        }
    };
}
pub(crate) use module;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    /// `[in, out]`.
    pub w: Tensor<F>,
    pub b: Tensor<F>,
}
module!(Linear { w, b });

impl<F: Scalar> Linear<F> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            w: Tensor::zeros(&[input, output]),
            b: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape[0]
    }

    pub fn output_dim(&self) -> usize {
        self.w.shape[1]
    }

    pub fn forward(&self, x: &Mat<F>) -> Mat<F> {
        let (k, n) = (self.input_dim(), self.output_dim());
        debug_assert_eq!(x.cols, k);
        let mut data = matmul(&x.data, &self.w.data, x.rows, k, n);
        for row in data.chunks_exact_mut(n) {
            for (y, &b) in row.iter_mut().zip(&self.b.data) {
                *y += b;
            }
        }
        Mat {
            rows: x.rows,
            cols: n,
            data,
        }
    }

    pub fn backward(&self, x: &Mat<F>, dy: &Mat<F>, grad: &mut Linear<F>) -> Mat<F> {
        let (k, n) = (self.input_dim(), self.output_dim());
        matmul_tn_acc(&x.data, &dy.data, x.rows, k, n, &mut grad.w.data);
        for row in dy.data.chunks_exact(n) {
            for (g, &d) in grad.b.data.iter_mut().zip(row) {
                *g += d;
            }
        }
        Mat {
            rows: x.rows,
            cols: k,
            data: matmul_nt(&dy.data, &self.w.data, x.rows, n, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<F> {
    pub gain: Tensor<F>,
    pub bias: Tensor<F>,
}
module!(LayerNorm { gain, bias });

pub struct LayerNormCache<F> {
    xhat: Mat<F>,
    rstd: Vec<F>,
}

impl<F: Scalar> LayerNorm<F> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gain: Tensor::filled(&[dim], F::one()),
            bias: Tensor::zeros(&[dim]),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        LayerNorm {
            gain: Tensor::zeros(&[dim]),
            bias: Tensor::zeros(&[dim]),
        }
    }

    pub fn forward(&self, x: &Mat<F>) -> (Mat<F>, LayerNormCache<F>) {
        let n = F::of(x.cols as f64);
        let eps = F::of(LAYER_NORM_EPS);
        let mut y = Mat::zeros(x.rows, x.cols);
        let mut xhat = Mat::zeros(x.rows, x.cols);
        let mut rstd = Vec::with_capacity(x.rows);
        for i in 0..x.rows {
            let row = x.row(i);
            let mean = row.iter().copied().sum::<F>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
            let r = F::one() / (var + eps).sqrt();
            rstd.push(r);
            let (hrow, yrow) = (xhat.row_mut(i), y.row_mut(i));
            for j in 0..row.len() {
                hrow[j] = (row[j] - mean) * r;
                yrow[j] = hrow[j] * self.gain.data[j] + self.bias.data[j];
            }
        }
        (y, LayerNormCache { xhat, rstd })
    }

    pub fn backward(&self, cache: &LayerNormCache<F>, dy: &Mat<F>, grad: &mut LayerNorm<F>) -> Mat<F> {
        let cols = dy.cols;
        let n = F::of(cols as f64);
        let mut dx = Mat::zeros(dy.rows, cols);
        let mut dxhat = vec![F::zero(); cols];
        for i in 0..dy.rows {
            let (drow, hrow) = (dy.row(i), cache.xhat.row(i));
            for j in 0..cols {
                grad.gain.data[j] += drow[j] * hrow[j];
                grad.bias.data[j] += drow[j];
                dxhat[j] = drow[j] * self.gain.data[j];
            }
            let mean_d = dxhat.iter().copied().sum::<F>() / n;
            let mean_dh = dot(&dxhat, hrow) / n;
            let r = cache.rstd[i];
            for (j, out) in dx.row_mut(i).iter_mut().enumerate() {
                *out = r * (dxhat[j] - mean_d - hrow[j] * mean_dh);
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention<F> {
    pub q: Linear<F>,
    pub k: Linear<F>,
    pub v: Linear<F>,
    pub o: Linear<F>,
}
module!(Attention { q, k, v, o });

pub struct AttentionCache<F> {
    q_in: Mat<F>,
    kv_in: Mat<F>,
    q: Mat<F>,
    k: Mat<F>,
    v: Mat<F>,
    /// Softmax weights per head, `[query × key]`.
    pub probs: Vec<Mat<F>>,
    concat: Mat<F>,
    causal: bool,
}

impl<F: Scalar> Attention<F> {
    pub fn zeros(dim: usize) -> Self {
        Attention {
            q: Linear::zeros(dim, dim),
            k: Linear::zeros(dim, dim),
            v: Linear::zeros(dim, dim),
            o: Linear::zeros(dim, dim),
        }
    }

    /// Multi-head scaled dot-product attention. With `causal`, query `i`
    /// only sees keys `j <= i`; masked weights are exactly zero.
    pub fn forward(
        &self,
        q_in: &Mat<F>,
        kv_in: &Mat<F>,
        heads: usize,
        causal: bool,
    ) -> (Mat<F>, AttentionCache<F>) {
        let q = self.q.forward(q_in);
        let k = self.k.forward(kv_in);
        let v = self.v.forward(kv_in);
        let dim = q.cols;
        let dk = dim / heads;
        let scale = F::one() / F::of(dk as f64).sqrt();
        let (lq, lk) = (q.rows, k.rows);

        let mut concat = Mat::zeros(lq, dim);
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = h * dk..(h + 1) * dk;
            let mut p = Mat::zeros(lq, lk);
            for i in 0..lq {
                let visible = if causal { (i + 1).min(lk) } else { lk };
                let qi = &q.row(i)[cols.clone()];
                let prow = p.row_mut(i);
                let mut max = F::neg_infinity();
                for j in 0..visible {
                    let s = dot(qi, &k.row(j)[cols.clone()]) * scale;
                    prow[j] = s;
                    max = max.max(s);
                }
                let mut total = F::zero();
                for pj in prow[..visible].iter_mut() {
                    *pj = (*pj - max).exp();
                    total += *pj;
                }
                for pj in prow[..visible].iter_mut() {
                    *pj /= total;
                }
                let out = &mut concat.row_mut(i)[cols.clone()];
                for j in 0..visible {
                    axpy(prow[j], &v.row(j)[cols.clone()], out);
                }
            }
            probs.push(p);
        }
        let out = self.o.forward(&concat);
        let cache = AttentionCache {
            q_in: q_in.clone(),
            kv_in: kv_in.clone(),
            q,
            k,
            v,
            probs,
            concat,
            causal,
        };
        (out, cache)
    }

    /// Returns `(d q_in, d kv_in)`.
    pub fn backward(
        &self,
        cache: &AttentionCache<F>,
        dout: &Mat<F>,
        grad: &mut Attention<F>,
    ) -> (Mat<F>, Mat<F>) {
        let dconcat = self.o.backward(&cache.concat, dout, &mut grad.o);
        let (q, k, v) = (&cache.q, &cache.k, &cache.v);
        let dim = q.cols;
        let heads = cache.probs.len();
        let dk = dim / heads;
        let scale = F::one() / F::of(dk as f64).sqrt();
        let (lq, lk) = (q.rows, k.rows);

        let mut dq = Mat::zeros(lq, dim);
        let mut dkm = Mat::zeros(lk, dim);
        let mut dv = Mat::zeros(lk, dim);
        let mut dp = vec![F::zero(); lk];
        for (h, p) in cache.probs.iter().enumerate() {
            let cols = h * dk..(h + 1) * dk;
            for i in 0..lq {
                let visible = if cache.causal { (i + 1).min(lk) } else { lk };
                let prow = p.row(i);
                let doi = &dconcat.row(i)[cols.clone()];
                let mut weighted = F::zero();
                for j in 0..visible {
                    dp[j] = dot(doi, &v.row(j)[cols.clone()]);
                    weighted += dp[j] * prow[j];
                    axpy(prow[j], doi, &mut dv.row_mut(j)[cols.clone()]);
                }
                for j in 0..visible {
                    let ds = prow[j] * (dp[j] - weighted) * scale;
                    if ds != F::zero() {
                        axpy(ds, &k.row(j)[cols.clone()], &mut dq.row_mut(i)[cols.clone()]);
                        axpy(ds, &q.row(i)[cols.clone()], &mut dkm.row_mut(j)[cols.clone()]);
                    }
                }
            }
        }
        let dq_in = self.q.backward(&cache.q_in, &dq, &mut grad.q);
        let mut dkv_in = self.k.backward(&cache.kv_in, &dkm, &mut grad.k);
        dkv_in.add_assign(&self.v.backward(&cache.kv_in, &dv, &mut grad.v));
        (dq_in, dkv_in)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward<F> {
    pub up: Linear<F>,
    pub down: Linear<F>,
}
module!(FeedForward { up, down });

pub struct FeedForwardCache<F> {
    x: Mat<F>,
    hidden: Mat<F>,
}

impl<F: Scalar> FeedForward<F> {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        FeedForward {
            up: Linear::zeros(dim, hidden),
            down: Linear::zeros(hidden, dim),
        }
    }

    pub fn forward(&self, x: &Mat<F>) -> (Mat<F>, FeedForwardCache<F>) {
        let mut hidden = self.up.forward(x);
        hidden.data.iter_mut().for_each(|h| *h = h.max(F::zero()));
        let y = self.down.forward(&hidden);
        (
            y,
            FeedForwardCache {
                x: x.clone(),
                hidden,
            },
        )
    }

    pub fn backward(&self, cache: &FeedForwardCache<F>, dy: &Mat<F>, grad: &mut FeedForward<F>) -> Mat<F> {
        let mut dh = self.down.backward(&cache.hidden, dy, &mut grad.down);
        for (g, &h) in dh.data.iter_mut().zip(&cache.hidden.data) {
            if h <= F::zero() {
                *g = F::zero();
            }
        }
        self.up.backward(&cache.x, &dh, &mut grad.up)
    }
}

//! Token-level layers: linear maps, per-token normalization, single-head
//! self-attention and the pre-norm transformer block.

use crate::error::{Error, Result};
use crate::init::ParamRng;
use crate::scalar::Scalar;
use crate::tensor::{relu, Tensor, NORM_EPS};

/// `y = W x + b` applied to each row of an `N × in` token matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<S> {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs × inputs`
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn init(inputs: usize, outputs: usize, rng: &mut ParamRng) -> Self {
        Linear {
            inputs,
            outputs,
            weight: rng.fan_in_uniform(inputs * outputs, inputs),
            bias: rng.fan_in_uniform(outputs, inputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            inputs,
            outputs,
            weight: vec![S::zero(); inputs * outputs],
            bias: vec![S::zero(); outputs],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut l = Self::zeros(n, n);
        for i in 0..n {
            l.weight[i * n + i] = S::one();
        }
        l
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Rows of `x` are tokens of width `inputs`.
    pub fn forward(&self, x: &[S]) -> Vec<S> {
        let rows = x.len() / self.inputs;
        let mut out = Vec::with_capacity(rows * self.outputs);
        for row in x.chunks_exact(self.inputs) {
            for o in 0..self.outputs {
                let w = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                let acc = w.iter().zip(row).fold(self.bias[o], |a, (&wi, &xi)| a + wi * xi);
                out.push(acc);
            }
        }
        out
    }
}

/// Normalizes each token over its features, then applies a per-feature affine.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenNorm<S> {
    pub scale: Vec<S>,
    pub shift: Vec<S>,
}

impl<S: Scalar> TokenNorm<S> {
    pub fn identity(dim: usize) -> Self {
        TokenNorm {
            scale: vec![S::one(); dim],
            shift: vec![S::zero(); dim],
        }
    }

    pub fn param_count(&self) -> usize {
        self.scale.len() + self.shift.len()
    }

    pub fn forward(&self, x: &[S]) -> Vec<S> {
        let d = self.scale.len();
        let df = S::from_usize_lossy(d);
        let eps = S::lit(NORM_EPS);
        let mut out = Vec::with_capacity(x.len());
        for row in x.chunks_exact(d) {
            let mean = row.iter().copied().sum::<S>() / df;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / df;
            let constant = row.iter().all(|&v| v == row[0]);
            let inv = if constant {
                S::zero()
            } else {
                S::one() / (var + eps).sqrt()
            };
            for (i, &v) in row.iter().enumerate() {
                out.push((v - mean) * inv * self.scale[i] + self.shift[i]);
            }
        }
        out
    }
}

/// Single-head scaled dot-product self-attention with an output projection.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention<S> {
    pub query: Linear<S>,
    pub key: Linear<S>,
    pub value: Linear<S>,
    pub output: Linear<S>,
}

impl<S: Scalar> Attention<S> {
    pub fn init(dim: usize, rng: &mut ParamRng) -> Self {
        Attention {
            query: Linear::init(dim, dim, rng),
            key: Linear::init(dim, dim, rng),
            value: Linear::init(dim, dim, rng),
            output: Linear::init(dim, dim, rng),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Attention {
            query: Linear::zeros(dim, dim),
            key: Linear::zeros(dim, dim),
            value: Linear::zeros(dim, dim),
            output: Linear::zeros(dim, dim),
        }
    }

    pub fn param_count(&self) -> usize {
        [&self.query, &self.key, &self.value, &self.output]
            .iter()
            .map(|l| l.param_count())
            .sum()
    }

    pub fn forward(&self, x: &[S]) -> Vec<S> {
        let d = self.query.inputs;
        let n = x.len() / d;
        let q = self.query.forward(x);
        let k = self.key.forward(x);
        let v = self.value.forward(x);
        let scale = S::one() / S::from_usize_lossy(d).sqrt();
        let mut mixed = vec![S::zero(); n * d];
        let mut weights = vec![S::zero(); n];
        for i in 0..n {
            let qi = &q[i * d..(i + 1) * d];
            for (j, w) in weights.iter_mut().enumerate() {
                let kj = &k[j * d..(j + 1) * d];
                *w = qi.iter().zip(kj).fold(S::zero(), |a, (&x, &y)| a + x * y) * scale;
            }
            let m = weights.iter().copied().fold(S::neg_infinity(), S::max);
            let mut z = S::zero();
            for w in weights.iter_mut() {
                *w = (*w - m).exp();
                z = z + *w;
            }
            let row = &mut mixed[i * d..(i + 1) * d];
            for (j, &w) in weights.iter().enumerate() {
                let a = w / z;
                for (r, &vj) in row.iter_mut().zip(&v[j * d..(j + 1) * d]) {
                    *r = *r + a * vj;
                }
            }
        }
        self.output.forward(&mixed)
    }
}

/// Pre-norm block: `x + attn(norm(x))`, then `x + mlp(norm(x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformerBlock<S> {
    pub dim: usize,
    pub attn_norm: TokenNorm<S>,
    pub attn: Attention<S>,
    pub mlp_norm: TokenNorm<S>,
    pub mlp_in: Linear<S>,
    pub mlp_out: Linear<S>,
}

impl<S: Scalar> TransformerBlock<S> {
    pub fn init(dim: usize, mlp_ratio: usize, rng: &mut ParamRng) -> Self {
        TransformerBlock {
            dim,
            attn_norm: TokenNorm::identity(dim),
            attn: Attention::init(dim, rng),
            mlp_norm: TokenNorm::identity(dim),
            mlp_in: Linear::init(dim, dim * mlp_ratio, rng),
            mlp_out: Linear::init(dim * mlp_ratio, dim, rng),
        }
    }

    /// Every projection zeroed: the block is the identity map.
    pub fn zeros(dim: usize, mlp_ratio: usize) -> Self {
        TransformerBlock {
            dim,
            attn_norm: TokenNorm::identity(dim),
            attn: Attention::zeros(dim),
            mlp_norm: TokenNorm::identity(dim),
            mlp_in: Linear::zeros(dim, dim * mlp_ratio),
            mlp_out: Linear::zeros(dim * mlp_ratio, dim),
        }
    }

    pub fn param_count(&self) -> usize {
        self.attn_norm.param_count()
            + self.attn.param_count()
            + self.mlp_norm.param_count()
            + self.mlp_in.param_count()
            + self.mlp_out.param_count()
    }

    pub fn forward_tokens(&self, x: &[S]) -> Vec<S> {
        let a = self.attn.forward(&self.attn_norm.forward(x));
        let x: Vec<S> = x.iter().zip(&a).map(|(&u, &v)| u + v).collect();
        let h: Vec<S> = self
            .mlp_in
            .forward(&self.mlp_norm.forward(&x))
            .into_iter()
            .map(relu)
            .collect();
        let m = self.mlp_out.forward(&h);
        x.iter().zip(&m).map(|(&u, &v)| u + v).collect()
    }

    /// Runs on a `C×H×W` map, treating the `H·W` pixels as tokens of width `C`.
    pub fn forward_map(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (c, h, w) = x.chw()?;
        if c != self.dim {
            return Err(Error::Shape {
                op: "transformer block",
                axis: "channels",
                expected: self.dim,
                found: c,
            });
        }
        let tokens = map_to_tokens(x);
        let out = self.forward_tokens(&tokens);
        let t = tokens_to_map(&out, c, h, w);
        t.ensure_finite("transformer block")?;
        Ok(t)
    }
}

/// `C×H×W` → `(H·W) × C` row-major tokens.
pub fn map_to_tokens<S: Scalar>(x: &Tensor<S>) -> Vec<S> {
    let (c, h, w) = x.chw().expect("feature map");
    let n = h * w;
    let d = x.data();
    let mut out = Vec::with_capacity(c * n);
    for p in 0..n {
        for ch in 0..c {
            out.push(d[ch * n + p]);
        }
    }
    out
}

pub fn tokens_to_map<S: Scalar>(tokens: &[S], c: usize, h: usize, w: usize) -> Tensor<S> {
    let n = h * w;
    let mut out = vec![S::zero(); c * n];
    for p in 0..n {
        for ch in 0..c {
            out[ch * n + p] = tokens[p * c + ch];
        }
    }
    Tensor::from_parts(vec![c, h, w], out)
}

//! A small decoder-only transformer, forward pass only.
//!
//! Layer indexing follows the usual hidden-state convention: layer 0 is the
//! embedding output and layer `l ≥ 1` is the output of block `l`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Matrix;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyLmConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub seed: u64,
}

impl Default for ToyLmConfig {
    fn default() -> Self {
        ToyLmConfig {
            n_layers: 6,
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            vocab_size: 256,
            max_seq: 128,
            seed: 0,
        }
    }
}

impl ToyLmConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_seq", self.max_seq),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be at least 1")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Pre-norm block: `x + attn(ln1(x))`, then `h + mlp(ln2(h))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerBlock {
    pub n_heads: usize,
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// One layer of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Block {
    Transformer(TransformerBlock),
    /// `y = x · weight`, position-wise.
    Linear(Matrix),
    /// Causal exponential mixing: `y[t] = decay ⊙ y[t−1] + x[t] · weight`.
    CausalMix { weight: Matrix, decay: Vec<f64> },
}

impl Block {
    pub fn output_dim(&self) -> usize {
        match self {
            Block::Transformer(b) => b.wo.cols(),
            Block::Linear(w) => w.cols(),
            Block::CausalMix { weight, .. } => weight.cols(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Block::Transformer(b) => b.wq.rows(),
            Block::Linear(w) => w.rows(),
            Block::CausalMix { weight, .. } => weight.rows(),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim(format!(
                "block expects {} columns, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        match self {
            Block::Transformer(b) => b.forward(x),
            Block::Linear(w) => x.matmul(w),
            Block::CausalMix { weight, decay } => {
                let mut y = x.matmul(weight)?;
                for t in 1..y.rows() {
                    for j in 0..y.cols() {
                        let v = y.get(t, j) + decay[j] * y.get(t - 1, j);
                        y.set(t, j, v);
                    }
                }
                Matrix::new(y.rows(), y.cols(), y.into_values())
            }
        }
    }
}

impl TransformerBlock {
    fn init(cfg: &ToyLmConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = cfg.d_model;
        let scale = 1.0 / (d as f64).sqrt();
        let mut gauss = |r: usize, c: usize| {
            let v = (0..r * c)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Matrix::new(r, c, v).expect("finite gaussian weights")
        };
        let wq = gauss(d, d);
        let wk = gauss(d, d);
        let wv = gauss(d, d);
        let wo = gauss(d, d);
        let w1 = gauss(d, cfg.d_ff);
        let w2 = gauss(cfg.d_ff, d);
        TransformerBlock {
            n_heads: cfg.n_heads,
            ln1_gain: vec![1.0; d],
            ln1_bias: vec![0.0; d],
            wq,
            wk,
            wv,
            wo,
            ln2_gain: vec![1.0; d],
            ln2_bias: vec![0.0; d],
            w1,
            b1: vec![0.0; cfg.d_ff],
            w2,
            b2: vec![0.0; d],
        }
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let (t, d) = x.shape();
        let hd = d / self.n_heads;
        let h1 = layer_norm(x, &self.ln1_gain, &self.ln1_bias)?;
        let q = h1.matmul(&self.wq)?;
        let k = h1.matmul(&self.wk)?;
        let v = h1.matmul(&self.wv)?;

        let mut ctx = Matrix::zeros(t, d);
        let inv_sqrt = 1.0 / (hd as f64).sqrt();
        let mut scores = vec![0.0; t];
        for h in 0..self.n_heads {
            let cols = h * hd..(h + 1) * hd;
            for i in 0..t {
                let qi = &q.row(i)[cols.clone()];
                let mut max = f64::NEG_INFINITY;
                for j in 0..=i {
                    let kj = &k.row(j)[cols.clone()];
                    let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * inv_sqrt;
                    scores[j] = s;
                    max = max.max(s);
                }
                let mut denom = 0.0;
                for s in scores[..=i].iter_mut() {
                    *s = (*s - max).exp();
                    denom += *s;
                }
                let out = &mut ctx.row_mut(i)[cols.clone()];
                for j in 0..=i {
                    let p = scores[j] / denom;
                    for (o, vj) in out.iter_mut().zip(&v.row(j)[cols.clone()]) {
                        *o += p * vj;
                    }
                }
            }
        }
        let attn = ctx.matmul(&self.wo)?;
        let resid = x.add(&attn)?;

        let h2 = layer_norm(&resid, &self.ln2_gain, &self.ln2_bias)?;
        let mut hidden = h2.matmul(&self.w1)?;
        for r in 0..t {
            for (hv, b) in hidden.row_mut(r).iter_mut().zip(&self.b1) {
                *hv = gelu(*hv + b);
            }
        }
        let mut mlp = hidden.matmul(&self.w2)?;
        for r in 0..t {
            for (m, b) in mlp.row_mut(r).iter_mut().zip(&self.b2) {
                *m += b;
            }
        }
        resid.add(&mlp)
    }
}

fn layer_norm(x: &Matrix, gain: &[f64], bias: &[f64]) -> Result<Matrix> {
    let d = x.cols() as f64;
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gain).zip(bias) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    Matrix::new(out.rows(), out.cols(), out.into_values())
}

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

/// Token and position embeddings; absent for networks fed activations directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub token: Matrix,
    pub position: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyLm {
    pub embedding: Option<Embedding>,
    pub blocks: Vec<Block>,
}

/// Seeded Gaussian initialization with scale `1/√d_model`.
pub fn toylm_init(cfg: &ToyLmConfig) -> Result<ToyLm> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = 1.0 / (cfg.d_model as f64).sqrt();
    let gauss = |r: usize, c: usize, rng: &mut ChaCha8Rng| {
        let v = (0..r * c)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Matrix::new(r, c, v).expect("finite gaussian weights")
    };
    let token = gauss(cfg.vocab_size, cfg.d_model, &mut rng);
    let position = gauss(cfg.max_seq, cfg.d_model, &mut rng);
    let blocks = (0..cfg.n_layers)
        .map(|_| Block::Transformer(TransformerBlock::init(cfg, &mut rng)))
        .collect();
    Ok(ToyLm {
        embedding: Some(Embedding { token, position }),
        blocks,
    })
}

impl ToyLm {
    /// A network without embeddings whose layer 0 is supplied by the caller.
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Self> {
        for w in blocks.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::dim(format!(
                    "block output {} does not feed block input {}",
                    w[0].output_dim(),
                    w[1].input_dim()
                )));
            }
        }
        Ok(ToyLm {
            embedding: None,
            blocks,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.blocks.len()
    }

    pub fn embed(&self, tokens: &[usize]) -> Result<Matrix> {
        let emb = self
            .embedding
            .as_ref()
            .ok_or_else(|| Error::config("network has no embedding; feed activations instead"))?;
        if tokens.is_empty() {
            return Err(Error::range("empty token sequence"));
        }
        if tokens.len() > emb.position.rows() {
            return Err(Error::range(format!(
                "sequence of {} exceeds max_seq {}",
                tokens.len(),
                emb.position.rows()
            )));
        }
        let vocab = emb.token.rows();
        if let Some((i, &t)) = tokens.iter().enumerate().find(|(_, &t)| t >= vocab) {
            return Err(Error::range(format!("token {t} at position {i} >= vocab {vocab}")));
        }
        Matrix::from_fn(tokens.len(), emb.token.cols(), |i, j| {
            emb.token.get(tokens[i], j) + emb.position.get(i, j)
        })
    }

    /// Activations for layers `0..=n_layers`.
    pub fn forward(&self, tokens: &[usize]) -> Result<Vec<Matrix>> {
        self.forward_activations(self.embed(tokens)?)
    }

    /// Same as [`ToyLm::forward`] with layer 0 given directly.
    pub fn forward_activations(&self, layer0: Matrix) -> Result<Vec<Matrix>> {
        let mut out = vec![layer0];
        out.extend(self.run_from(0, &out[0])?);
        Ok(out)
    }

    /// Outputs of layers `layer+1..=n_layers` given the activation at `layer`.
    pub fn run_from(&self, layer: usize, activation: &Matrix) -> Result<Vec<Matrix>> {
        if layer > self.n_layers() {
            return Err(Error::range(format!(
                "layer {layer} beyond {} layers",
                self.n_layers()
            )));
        }
        let mut out: Vec<Matrix> = Vec::with_capacity(self.n_layers() - layer);
        for block in &self.blocks[layer..] {
            let next = block.forward(out.last().unwrap_or(activation))?;
            out.push(next);
        }
        Ok(out)
    }

    /// Little-endian bytes of every parameter, in a fixed order.
    pub fn weight_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut push = |v: &[f64]| v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        if let Some(e) = &self.embedding {
            push(e.token.values());
            push(e.position.values());
        }
        for b in &self.blocks {
            match b {
                Block::Transformer(t) => {
                    for v in [&t.ln1_gain, &t.ln1_bias] {
                        push(v);
                    }
                    for m in [&t.wq, &t.wk, &t.wv, &t.wo] {
                        push(m.values());
                    }
                    for v in [&t.ln2_gain, &t.ln2_bias] {
                        push(v);
                    }
                    push(t.w1.values());
                    push(&t.b1);
                    push(t.w2.values());
                    push(&t.b2);
                }
                Block::Linear(w) => push(w.values()),
                Block::CausalMix { weight, decay } => {
                    push(weight.values());
                    push(decay);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyLmConfig {
        ToyLmConfig {
            n_layers: 3,
            d_model: 16,
            n_heads: 4,
            d_ff: 32,
            vocab_size: 50,
            max_seq: 20,
            seed: 5,
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let a = toylm_init(&small()).unwrap();
        let b = toylm_init(&small()).unwrap();
        assert_eq!(a.weight_bytes(), b.weight_bytes());
        let c = toylm_init(&ToyLmConfig { seed: 6, ..small() }).unwrap();
        assert_ne!(a.weight_bytes(), c.weight_bytes());
    }

    #[test]
    fn head_dim() {
        let cfg = ToyLmConfig {
            d_model: 32,
            n_heads: 4,
            ..ToyLmConfig::default()
        };
        assert_eq!(cfg.head_dim(), 8);
    }

    #[test]
    fn invalid_configs() {
        assert!(ToyLmConfig { n_heads: 3, ..small() }.validate().is_err());
        assert!(ToyLmConfig { n_layers: 0, ..small() }.validate().is_err());
    }

    #[test]
    fn weight_statistics() {
        let cfg = ToyLmConfig::default();
        let m = toylm_init(&cfg).unwrap();
        let Block::Transformer(b) = &m.blocks[0] else { unreachable!() };
        let vals: Vec<f64> = [&b.wq, &b.wk, &b.wv, &b.wo]
            .iter()
            .flat_map(|w| w.values().iter().copied())
            .collect();
        assert!(vals.len() >= 10_000);
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 3.0 * sd / n.sqrt(), "mean {mean}");
        assert!((sd - 1.0 / 8.0).abs() < 0.01, "sd {sd}");
    }

    #[test]
    fn single_token() {
        let m = toylm_init(&small()).unwrap();
        let acts = m.forward(&[7]).unwrap();
        assert_eq!(acts.len(), 4);
        for a in &acts {
            assert_eq!(a.shape(), (1, 16));
        }
    }

    #[test]
    fn prefix_is_unchanged_by_later_tokens() {
        let m = toylm_init(&small()).unwrap();
        let a = m.forward(&[1, 2, 3, 4, 5, 6]).unwrap();
        let b = m.forward(&[1, 2, 3, 40, 5, 6]).unwrap();
        for (la, lb) in a.iter().zip(&b) {
            for p in 0..3 {
                assert_eq!(la.row(p), lb.row(p));
            }
            assert_ne!(la.row(3), lb.row(3));
        }
    }

    #[test]
    fn token_range_errors() {
        let m = toylm_init(&small()).unwrap();
        assert!(matches!(m.forward(&[50]), Err(Error::Range(_))));
        assert!(matches!(m.forward(&[0; 21]), Err(Error::Range(_))));
    }

    #[test]
    fn causal_mix_recursion() {
        let w = Matrix::from_rows(&[vec![2.0]]).unwrap();
        let net = ToyLm::from_blocks(vec![Block::CausalMix { weight: w, decay: vec![0.5] }]).unwrap();
        let x = Matrix::new(3, 1, vec![1.0, 0.0, 0.0]).unwrap();
        let acts = net.forward_activations(x).unwrap();
        assert_eq!(acts[1].values(), &[2.0, 1.0, 0.5]);
    }
}

//! Reference cross-attention block and its null-text conversion.
//!
//! In text mode the block computes
//! `F' = W(softmax(Q Kᵀ / d) V) + F_img` with `Q = F_img W_q`,
//! `K = F_text W_k`, `V = F_text W_v` and `d` the attention width. Converting
//! to null-text mode replaces the whole injection branch with a constant
//! `F_null = W(mean_tokens(Norm(V_null)))`, where `Norm` standardizes each
//! channel across tokens. Afterwards the block adds `F_null` to every image
//! token and ignores text entirely.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const NORM_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub enum AttentionMode {
    Text,
    NullText { f_null: DVector<f64> },
}

/// Token matrices are `tokens x channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    /// `d_model x d_attn`
    pub w_q: DMatrix<f64>,
    pub w_k: DMatrix<f64>,
    pub w_v: DMatrix<f64>,
    /// `d_attn x d_model`
    pub w_out: DMatrix<f64>,
    mode: AttentionMode,
}

impl AttentionBlock {
    pub fn new(
        w_q: DMatrix<f64>,
        w_k: DMatrix<f64>,
        w_v: DMatrix<f64>,
        w_out: DMatrix<f64>,
    ) -> Result<Self> {
        let (dm, da) = w_q.shape();
        if w_k.shape() != (dm, da) || w_v.shape() != (dm, da) || w_out.shape() != (da, dm) {
            return Err(Error::Model("attention projection shapes disagree".into()));
        }
        Ok(Self {
            w_q,
            w_k,
            w_v,
            w_out,
            mode: AttentionMode::Text,
        })
    }

    /// Gaussian projections scaled by `1/sqrt(fan_in)`.
    pub fn random(d_model: usize, d_attn: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |r: usize, c: usize| {
            let s = (1.0 / r as f64).sqrt();
            DMatrix::from_fn(r, c, |_, _| {
                let x: f64 = StandardNormal.sample(&mut rng);
                s * x
            })
        };
        let (q, k, v, o) = (
            mat(d_model, d_attn),
            mat(d_model, d_attn),
            mat(d_model, d_attn),
            mat(d_attn, d_model),
        );
        Self::new(q, k, v, o).expect("consistent shapes")
    }

    pub fn d_model(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn d_attn(&self) -> usize {
        self.w_q.ncols()
    }

    pub fn mode(&self) -> &AttentionMode {
        &self.mode
    }

    fn check_width(&self, m: &DMatrix<f64>, what: &str) -> Result<()> {
        if m.ncols() != self.d_model() {
            return Err(Error::Model(format!(
                "{what} has width {}, block expects {}",
                m.ncols(),
                self.d_model()
            )));
        }
        Ok(())
    }
}

fn softmax_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let max = row.max();
        row.apply(|x| *x = (*x - max).exp());
        let s = row.sum();
        row /= s;
    }
}

fn broadcast_add(f: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let mut out = f.clone();
    for mut row in out.row_iter_mut() {
        row += v.transpose();
    }
    out
}

/// Text-mode cross-attention with residual connection.
pub fn attention_forward(
    block: &AttentionBlock,
    f_img: &DMatrix<f64>,
    f_text: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if block.mode != AttentionMode::Text {
        return Err(Error::Model("block is in null-text mode".into()));
    }
    block.check_width(f_img, "image features")?;
    block.check_width(f_text, "text features")?;
    if f_text.nrows() == 0 {
        return Err(Error::Model("no text tokens".into()));
    }
    let q = f_img * &block.w_q;
    let k = f_text * &block.w_k;
    let v = f_text * &block.w_v;
    let mut scores = (q * k.transpose()) / block.d_attn() as f64;
    softmax_rows(&mut scores);
    Ok(scores * v * &block.w_out + f_img)
}

/// Per-channel standardization across the token dimension.
pub fn normalize_tokens(v: &DMatrix<f64>) -> DMatrix<f64> {
    let m = v.nrows() as f64;
    let mut out = v.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / m;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
        let scale = (var + NORM_EPSILON).sqrt();
        col.apply(|x| *x = (*x - mean) / scale);
    }
    out
}

/// Freezes the text-injection branch to `W(mean_tokens(Norm(V_null)))`.
pub fn convert_to_null_text(
    block: &AttentionBlock,
    v_null: &DMatrix<f64>,
) -> Result<AttentionBlock> {
    if v_null.nrows() == 0 {
        return Err(Error::Model("null-text values have no tokens".into()));
    }
    if v_null.ncols() != block.d_attn() {
        return Err(Error::Model(format!(
            "null-text values have width {}, block attention width is {}",
            v_null.ncols(),
            block.d_attn()
        )));
    }
    let normed = normalize_tokens(v_null);
    let reduced = normed.row_mean();
    let f_null = (reduced * &block.w_out).transpose();
    Ok(AttentionBlock {
        mode: AttentionMode::NullText { f_null },
        ..block.clone()
    })
}

/// The frozen injection branch for `n_tokens` image tokens: `F_null` on every row.
pub fn null_text_injection(block: &AttentionBlock, n_tokens: usize) -> Result<DMatrix<f64>> {
    let AttentionMode::NullText { f_null } = &block.mode else {
        return Err(Error::Model("block is not in null-text mode".into()));
    };
    Ok(broadcast_add(
        &DMatrix::zeros(n_tokens, block.d_model()),
        f_null,
    ))
}

pub fn null_text_forward(block: &AttentionBlock, f_img: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    block.check_width(f_img, "image features")?;
    Ok(null_text_injection(block, f_img.nrows())? + f_img)
}

//! Forward kernels shared by the autodiff graph and the inference paths.

use super::Tensor;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `c = alpha * op(a) * op(b) + beta * c`, with `op(a)` of shape `m × k`
/// and `op(b)` of shape `k × n`. The `*_t` flags mark a stored operand as
/// transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; strides describe the stated layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 {
        return Err(Error::shape("matmul needs rank-2 operands"));
    }
    let (m, k) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    if k != k2 {
        return Err(Error::shape(format!("matmul {m}x{k} by {k2}x{n}")));
    }
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, 1.0, a.data(), false, b.data(), false, 0.0, &mut out);
    Tensor::matrix(m, n, out)
}

/// Numerically stable softmax. Entries equal to `-inf` get weight exactly 0.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Normalizes one row into `out` (pre-affine values into `xhat`) and
/// returns `1/std`.
pub(crate) fn layer_norm_row(x: &[f64], gain: &[f64], bias: &[f64], out: &mut [f64], xhat: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rstd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    for i in 0..x.len() {
        xhat[i] = (x[i] - mean) * rstd;
        out[i] = xhat[i] * gain[i] + bias[i];
    }
    rstd
}

pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 || gain.len() != x.len() || bias.len() != x.len() {
        return Err(Error::shape(format!(
            "layer_norm over {} values with gain {} and bias {}",
            x.len(),
            gain.len(),
            bias.len()
        )));
    }
    let mut out = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    layer_norm_row(x, gain, bias, &mut out, &mut xhat);
    Ok(out)
}

/// Layout of a batched multi-head attention call.
///
/// Queries hold `q_seqs` sequences of `q_len` rows each; keys and values hold
/// sequences of `k_len` rows. Query sequence `b` attends to key sequence
/// `kv_map[b]`. Each row of width `d_model` is split into `heads` equal
/// column blocks.
#[derive(Clone, Debug)]
pub struct AttentionSpec {
    pub heads: usize,
    pub q_len: usize,
    pub k_len: usize,
    pub kv_map: Vec<usize>,
    /// Additive `q_len × k_len` mask shared across sequences and heads.
    pub mask: Option<Tensor>,
}

impl AttentionSpec {
    pub fn self_attention(seqs: usize, len: usize, heads: usize, mask: Option<Tensor>) -> Self {
        AttentionSpec {
            heads,
            q_len: len,
            k_len: len,
            kv_map: (0..seqs).collect(),
            mask,
        }
    }

    pub(crate) fn validate(&self, q: &Tensor, k: &Tensor, v: &Tensor) -> Result<usize> {
        let d = q.cols();
        if k.cols() != d || v.cols() != d {
            return Err(Error::shape(format!(
                "attention widths q {d}, k {}, v {}",
                k.cols(),
                v.cols()
            )));
        }
        if self.heads == 0 || d % self.heads != 0 {
            return Err(Error::shape(format!("{} heads do not divide width {d}", self.heads)));
        }
        if q.rows() != self.kv_map.len() * self.q_len {
            return Err(Error::shape(format!(
                "{} query rows for {} sequences of {}",
                q.rows(),
                self.kv_map.len(),
                self.q_len
            )));
        }
        if self.k_len == 0 || k.rows() % self.k_len != 0 || k.rows() != v.rows() {
            return Err(Error::shape(format!(
                "key rows {} / value rows {} for length {}",
                k.rows(),
                v.rows(),
                self.k_len
            )));
        }
        let k_seqs = k.rows() / self.k_len;
        if let Some(&bad) = self.kv_map.iter().find(|&&s| s >= k_seqs) {
            return Err(Error::shape(format!("kv index {bad} >= {k_seqs} key sequences")));
        }
        if let Some(m) = &self.mask {
            if m.rows() != self.q_len || m.cols() != self.k_len {
                return Err(Error::shape(format!(
                    "mask {:?} for {}x{}",
                    m.shape(),
                    self.q_len,
                    self.k_len
                )));
            }
        }
        Ok(d)
    }
}

/// Causal mask: position `i` may attend to positions `0..=i`.
pub fn causal_mask(n: usize) -> Tensor {
    let mut m = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i + 1..n {
            m.data_mut()[i * n + j] = f64::NEG_INFINITY;
        }
    }
    m
}

/// Scaled dot-product attention for every (sequence, head) block.
/// Returns the concatenated head outputs and the weights laid out as
/// `[seq][head][q_len][k_len]`.
pub(crate) fn attention_heads(q: &Tensor, k: &Tensor, v: &Tensor, spec: &AttentionSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = spec.validate(q, k, v)?;
    let (h, lq, lk) = (spec.heads, spec.q_len, spec.k_len);
    let dh = d / h;
    let scale = 1.0 / (dh as f64).sqrt();
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut out = vec![0.0; q.len()];
    let mut weights = vec![0.0; spec.kv_map.len() * h * lq * lk];
    let mask = spec.mask.as_ref().map(|m| m.data());

    for (b, &kb) in spec.kv_map.iter().enumerate() {
        for head in 0..h {
            let col = head * dh;
            for i in 0..lq {
                let qrow = &qd[(b * lq + i) * d + col..][..dh];
                let w = &mut weights[((b * h + head) * lq + i) * lk..][..lk];
                for (j, wj) in w.iter_mut().enumerate() {
                    let krow = &kd[(kb * lk + j) * d + col..][..dh];
                    let dot: f64 = qrow.iter().zip(krow).map(|(a, b)| a * b).sum();
                    *wj = dot * scale + mask.map_or(0.0, |m| m[i * lk + j]);
                }
                softmax_in_place(w);
                let orow = &mut out[(b * lq + i) * d + col..][..dh];
                for (j, &wj) in w.iter().enumerate() {
                    if wj == 0.0 {
                        continue;
                    }
                    let vrow = &vd[(kb * lk + j) * d + col..][..dh];
                    for (o, x) in orow.iter_mut().zip(vrow) {
                        *o += wj * x;
                    }
                }
            }
        }
    }
    Ok((out, weights))
}

/// Single-head attention `softmax(QKᵀ/√d_k + mask)·V` over one sequence
/// pair. Returns the output and the weight matrix.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor, mask: Option<&Tensor>) -> Result<(Tensor, Tensor)> {
    if q.cols() != k.cols() {
        return Err(Error::shape(format!("q width {} vs k width {}", q.cols(), k.cols())));
    }
    if k.rows() != v.rows() {
        return Err(Error::shape(format!("{} keys vs {} values", k.rows(), v.rows())));
    }
    let dk = q.cols();
    let (lq, lk, dv) = (q.rows(), k.rows(), v.cols());
    if let Some(m) = mask {
        if m.rows() != lq || m.cols() != lk {
            return Err(Error::shape(format!("mask {:?} for {lq}x{lk}", m.shape())));
        }
    }
    let mut scores = vec![0.0; lq * lk];
    gemm(lq, dk, lk, 1.0 / (dk as f64).sqrt(), q.data(), false, k.data(), true, 0.0, &mut scores);
    for i in 0..lq {
        let row = &mut scores[i * lk..(i + 1) * lk];
        if let Some(m) = mask {
            for (s, add) in row.iter_mut().zip(m.row(i)) {
                *s += add;
            }
        }
        softmax_in_place(row);
    }
    let mut out = vec![0.0; lq * dv];
    gemm(lq, lk, dv, 1.0, &scores, false, v.data(), false, 0.0, &mut out);
    Ok((Tensor::matrix(lq, dv, out)?, Tensor::matrix(lq, lk, scores)?))
}

/// Packed projection weights for `h` heads: head `i` owns columns
/// `i*d_k..(i+1)*d_k` of each input projection and rows `i*d_v..(i+1)*d_v`
/// of the output projection.
#[derive(Clone, Debug)]
pub struct MultiHeadWeights {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
}

/// `Concat(head_1..head_h)·W^O` with `head_i = Attention(Q W^Q_i, K W^K_i, V W^V_i)`.
pub fn multi_head(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    weights: &MultiHeadWeights,
    heads: usize,
    mask: Option<&Tensor>,
) -> Result<Tensor> {
    let qp = matmul(q, &weights.wq)?;
    let kp = matmul(k, &weights.wk)?;
    let vp = matmul(v, &weights.wv)?;
    let spec = AttentionSpec {
        heads,
        q_len: q.rows(),
        k_len: k.rows(),
        kv_map: vec![0],
        mask: mask.cloned(),
    };
    let (concat, _) = attention_heads(&qp, &kp, &vp, &spec)?;
    let concat = Tensor::matrix(q.rows(), qp.cols(), concat)?;
    matmul(&concat, &weights.wo)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

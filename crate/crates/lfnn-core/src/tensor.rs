//! Dense row-major tensors and the handful of kernels the layers need.
//!
//! Parallel kernels split work by output row (or output chunk) and keep every
//! accumulation loop sequential within a task, so results are bit-identical
//! across thread counts.

use crate::error::{Error, Result};
use crate::parallel::for_each_chunk_mut;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Dense n-dimensional array, row-major, contiguous.
#[derive(Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let head: Vec<&S> = self.data.iter().take(8).collect();
        write!(f, "Tensor{:?} {:?}", self.shape, head)?;
        if self.data.len() > 8 {
            write!(f, "…")?;
        }
        Ok(())
    }
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![S::zero(); n],
        }
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidShape {
                op: "from_vec",
                shape: shape.to_vec(),
                reason: format!("shape wants {} elements, got {}", n, data.len()),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> S) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, i: usize) -> usize {
        self.shape[i]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Same storage, new shape. Element count must match.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::InvalidShape {
                op: "reshape",
                shape: shape.to_vec(),
                reason: format!("incompatible with {} elements", self.data.len()),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Rank-2 view helpers. The tensor must have `rows * cols` elements with
    /// `rows == shape[0]`; higher-rank tensors flatten their trailing dims.
    pub fn as_rows(&self) -> (usize, usize) {
        let rows = if self.shape.is_empty() { 1 } else { self.shape[0] };
        let cols = if rows == 0 { 0 } else { self.data.len() / rows };
        (rows, cols)
    }

    pub fn row(&self, r: usize) -> &[S] {
        let (rows, cols) = self.as_rows();
        debug_assert!(r < rows);
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        let (rows, cols) = self.as_rows();
        debug_assert!(r < rows);
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn at2(&self, r: usize, c: usize) -> S {
        let (_, cols) = self.as_rows();
        self.data[r * cols + c]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Gather rows by index into a new tensor (first axis).
    pub fn gather_rows(&self, indices: &[usize]) -> Self {
        let (_, cols) = self.as_rows();
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(&self.data[i * cols..(i + 1) * cols]);
        }
        Self { shape, data }
    }
}

fn want_rank2<S: Scalar>(op: &'static str, t: &Tensor<S>) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::InvalidShape {
            op,
            shape: t.shape().to_vec(),
            reason: "expected a rank-2 tensor".into(),
        });
    }
    Ok((t.shape[0], t.shape[1]))
}

// Below roughly 32k multiply-adds per task the rayon dispatch overhead wins.
const MIN_FLOPS_PER_TASK: usize = 32 * 1024;

fn rows_per_task(row_cost: usize) -> usize {
    (MIN_FLOPS_PER_TASK / row_cost.max(1)).max(1)
}

/// `a [m,k] × b [k,n] -> [m,n]`.
pub fn matmul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let (m, ka) = want_rank2("matmul", a)?;
    let (kb, n) = want_rank2("matmul", b)?;
    if ka != kb {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = Tensor::zeros(&[m, n]);
    if m == 1 {
        // Single row: parallelize over output columns, each chunk accumulating
        // over k sequentially.
        let av = &a.data;
        let bv = &b.data;
        for_each_chunk_mut(&mut out.data, 256, 1, |ci, chunk| {
            let j0 = ci * 256;
            for (k, &aik) in av.iter().enumerate() {
                let brow = &bv[k * n + j0..k * n + j0 + chunk.len()];
                for (o, &bkj) in chunk.iter_mut().zip(brow) {
                    *o = *o + aik * bkj;
                }
            }
        });
    } else {
        let av = &a.data;
        let bv = &b.data;
        for_each_chunk_mut(&mut out.data, n, rows_per_task(ka * n), |i, orow| {
            let arow = &av[i * ka..(i + 1) * ka];
            for (k, &aik) in arow.iter().enumerate() {
                let brow = &bv[k * n..(k + 1) * n];
                for (o, &bkj) in orow.iter_mut().zip(brow) {
                    *o = *o + aik * bkj;
                }
            }
        });
    }
    Ok(out)
}

/// `a [m,k] × bᵀ` where `b` is `[n,k]` -> `[m,n]`. This is the dense forward
/// product `x · Wᵀ` with weights stored `[out, in]`.
pub fn matmul_nt<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let (m, ka) = want_rank2("matmul_nt", a)?;
    let (n, kb) = want_rank2("matmul_nt", b)?;
    if ka != kb {
        return Err(Error::ShapeMismatch {
            op: "matmul_nt",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let k = ka;
    let mut out = Tensor::zeros(&[m, n]);
    let av = &a.data;
    let bv = &b.data;
    if m == 1 {
        for_each_chunk_mut(&mut out.data, 1, rows_per_task(k), |j, o| {
            let brow = &bv[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for (&x, &w) in av.iter().zip(brow) {
                acc = acc + x * w;
            }
            o[0] = acc;
        });
    } else {
        for_each_chunk_mut(&mut out.data, n, rows_per_task(k * n), |i, orow| {
            let arow = &av[i * k..(i + 1) * k];
            for (j, o) in orow.iter_mut().enumerate() {
                let brow = &bv[j * k..(j + 1) * k];
                let mut acc = S::zero();
                for (&x, &w) in arow.iter().zip(brow) {
                    acc = acc + x * w;
                }
                *o = acc;
            }
        });
    }
    Ok(out)
}

/// `aᵀ × b` where `a` is `[k,m]` and `b` is `[k,n]` -> `[m,n]`. This is the
/// weight-gradient product `d_preᵀ · x` with the batch as the contracted axis.
pub fn matmul_tn<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let (ka, m) = want_rank2("matmul_tn", a)?;
    let (kb, n) = want_rank2("matmul_tn", b)?;
    if ka != kb {
        return Err(Error::ShapeMismatch {
            op: "matmul_tn",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let k = ka;
    let mut out = Tensor::zeros(&[m, n]);
    let av = &a.data;
    let bv = &b.data;
    for_each_chunk_mut(&mut out.data, n, rows_per_task(k * n), |i, orow| {
        for kk in 0..k {
            let aki = av[kk * m + i];
            if aki == S::zero() {
                continue;
            }
            let brow = &bv[kk * n..(kk + 1) * n];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o = *o + aki * bkj;
            }
        }
    });
    Ok(out)
}

/// Add a bias vector to every row of a rank-2 tensor, in place.
pub fn add_bias_rows<S: Scalar>(t: &mut Tensor<S>, bias: &Tensor<S>) -> Result<()> {
    let (_, n) = want_rank2("add_bias_rows", t)?;
    if bias.len() != n {
        return Err(Error::ShapeMismatch {
            op: "add_bias_rows",
            left: t.shape().to_vec(),
            right: bias.shape().to_vec(),
        });
    }
    let bv = bias.data();
    for row in t.data.chunks_mut(n) {
        for (o, &b) in row.iter_mut().zip(bv) {
            *o = *o + b;
        }
    }
    Ok(())
}

/// Numerically stable softmax over a slice (max subtraction).
pub fn softmax_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    debug_assert_eq!(dst.len(), src.len());
    let mut mx = src[0];
    for &x in &src[1..] {
        if x > mx {
            mx = x;
        }
    }
    let mut sum = S::zero();
    for (d, &x) in dst.iter_mut().zip(src) {
        let e = (x - mx).exp();
        *d = e;
        sum = sum + e;
    }
    let inv = S::one() / sum;
    for d in dst.iter_mut() {
        *d = *d * inv;
    }
}

/// Softmax of a rank-1 tensor.
pub fn softmax<S: Scalar>(logits: &Tensor<S>) -> Result<Tensor<S>> {
    if logits.rank() != 1 || logits.is_empty() {
        return Err(Error::InvalidShape {
            op: "softmax",
            shape: logits.shape().to_vec(),
            reason: "expected a non-empty rank-1 tensor".into(),
        });
    }
    let mut out = Tensor::zeros(logits.shape());
    softmax_into(out.data_mut(), logits.data());
    Ok(out)
}

/// Row-wise softmax of a rank-2 tensor.
pub fn softmax_rows<S: Scalar>(t: &Tensor<S>) -> Result<Tensor<S>> {
    let (_, n) = want_rank2("softmax_rows", t)?;
    let mut out = Tensor::zeros(t.shape());
    for (orow, irow) in out.data.chunks_mut(n).zip(t.data.chunks(n)) {
        softmax_into(orow, irow);
    }
    Ok(out)
}

#[inline]
pub fn sigmoid_scalar<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        // exp(x) underflows to 0 for very negative x, giving 0 without NaN.
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Elementwise logistic sigmoid.
pub fn sigmoid<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    t.map(sigmoid_scalar)
}

/// Glorot-uniform initialization: samples from `±sqrt(6 / (fan_in + fan_out))`.
/// Deterministic for a given generator state.
pub fn init_glorot<S: Scalar>(
    rng: &mut Rng,
    fan_in: usize,
    fan_out: usize,
    shape: &[usize],
) -> Tensor<S> {
    assert!(fan_in > 0 && fan_out > 0, "fans must be positive");
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| S::from_f64(rng.uniform_in(-bound, bound)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn naive_matmul(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let (m, k) = (a.dim(0), a.dim(1));
        let n = b.dim(1);
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for kk in 0..k {
                    acc += a.at2(i, kk) * b.at2(kk, j);
                }
                out.row_mut(i)[j] = acc;
            }
        }
        out
    }

    fn random_tensor(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.uniform_in(-1.0, 1.0))
    }

    #[test]
    fn matmul_identity() {
        let i2 = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = matmul(&i2, &a).unwrap();
        assert_eq!(out.data(), a.data());
    }

    #[test]
    fn matmul_row_times_column() {
        let a = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec(&[2, 1], vec![3.0, 4.0]).unwrap();
        let out = matmul(&a, &b).unwrap();
        assert_eq!(out.shape(), &[1, 1]);
        assert_eq!(out.data()[0], 11.0);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = Rng::new(5);
        let a = random_tensor(&mut rng, &[5, 7]);
        let b = random_tensor(&mut rng, &[7, 3]);
        let got = matmul(&a, &b).unwrap();
        let want = naive_matmul(&a, &b);
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[4, 2]);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn matmul_variants_match_explicit_transposes() {
        let mut rng = Rng::new(9);
        let a = random_tensor(&mut rng, &[4, 6]);
        let b = random_tensor(&mut rng, &[5, 6]);
        // a [4,6] × bᵀ [6,5]
        let bt = {
            let mut t = Tensor::zeros(&[6, 5]);
            for i in 0..5 {
                for j in 0..6 {
                    t.row_mut(j)[i] = b.at2(i, j);
                }
            }
            t
        };
        let got = matmul_nt(&a, &b).unwrap();
        let want = naive_matmul(&a, &bt);
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() < 1e-12);
        }

        let c = random_tensor(&mut rng, &[4, 3]);
        // aᵀ [6,4] × c [4,3]
        let at = {
            let mut t = Tensor::zeros(&[6, 4]);
            for i in 0..4 {
                for j in 0..6 {
                    t.row_mut(j)[i] = a.at2(i, j);
                }
            }
            t
        };
        let got = matmul_tn(&a, &c).unwrap();
        let want = naive_matmul(&at, &c);
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_single_row_path_matches_general_path() {
        let mut rng = Rng::new(77);
        let a = random_tensor(&mut rng, &[1, 300]);
        let b = random_tensor(&mut rng, &[300, 40]);
        let got = matmul(&a, &b).unwrap();
        let want = naive_matmul(&a, &b);
        assert_eq!(got.data(), want.data());

        let w = random_tensor(&mut rng, &[40, 300]);
        let got = matmul_nt(&a, &w).unwrap();
        let mut want = vec![0.0; 40];
        for (j, o) in want.iter_mut().enumerate() {
            for k in 0..300 {
                *o += a.data()[k] * w.at2(j, k);
            }
        }
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_symmetry() {
        let t = Tensor::from_vec(&[4], vec![0.0f64; 4]).unwrap();
        let s = softmax(&t).unwrap();
        for &p in s.data() {
            assert_relative_eq!(p, 0.25, max_relative = 1e-12);
        }
    }

    #[test]
    fn softmax_no_overflow() {
        let t = Tensor::from_vec(&[2], vec![1000.0f64, 0.0]).unwrap();
        let s = softmax(&t).unwrap();
        assert!((s.data()[0] - 1.0).abs() < 1e-12);
        assert!(s.data()[1].abs() < 1e-12);
        assert!(s.all_finite());
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let t = Tensor::from_vec(&[3], vec![1.0f64, 2.0, 3.0]).unwrap();
        let s = softmax(&t).unwrap();
        let z: f64 = t.data().iter().map(|x| x.exp()).sum();
        for (p, x) in s.data().iter().zip(t.data()) {
            assert_relative_eq!(*p, x.exp() / z, max_relative = 1e-12);
        }
        let sum: f64 = s.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sigmoid_basics() {
        let t = Tensor::from_vec(&[3], vec![0.0f64, -1000.0, 1.0]).unwrap();
        let s = sigmoid(&t);
        assert_eq!(s.data()[0], 0.5);
        assert_eq!(s.data()[1], 0.0);
        assert!(s.all_finite());
        let direct = 1.0 / (1.0 + (-1.0f64).exp());
        assert_relative_eq!(s.data()[2], direct, max_relative = 1e-15);
        assert_relative_eq!(s.data()[2], 0.731_058_578_630_004_9, max_relative = 1e-12);
    }

    #[test]
    fn glorot_bound_and_determinism() {
        let mut rng = Rng::new(21);
        let t: Tensor<f64> = init_glorot(&mut rng, 3, 3, &[64]);
        assert!(t.data().iter().all(|x| x.abs() <= 1.0));
        let mut rng2 = Rng::new(21);
        let t2: Tensor<f64> = init_glorot(&mut rng2, 3, 3, &[64]);
        assert_eq!(t.data(), t2.data());
    }

    #[test]
    fn glorot_sample_mean_near_zero() {
        let mut rng = Rng::new(123);
        let t: Tensor<f64> = init_glorot(&mut rng, 50, 50, &[100_000]);
        let mean: f64 = t.data().iter().sum::<f64>() / t.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn reshape_checks_element_count() {
        let t = Tensor::<f32>::zeros(&[2, 3]);
        assert!(t.reshape(&[3, 2]).is_ok());
        assert!(t.reshape(&[4, 2]).is_err());
    }

    #[test]
    fn gather_rows_picks_requested_rows() {
        let t = Tensor::from_vec(&[3, 2], vec![0.0f32, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let g = t.gather_rows(&[2, 0]);
        assert_eq!(g.shape(), &[2, 2]);
        assert_eq!(g.data(), &[4.0, 5.0, 0.0, 1.0]);
    }
}

//! Dense row-major `f32` tensors and the handful of kernels the engine needs.
//!
//! Storage is 32-bit; every reduction (dot products, means, variances,
//! softmax normalizers) accumulates in 64-bit and sums left to right, so a
//! given input always produces the same bits.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Epsilon added to the variance in [`layer_norm`].
pub const LN_EPS: f64 = 1e-5;

const MAGIC: &[u8; 4] = b"CTXT";
const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, checking the element count and that every element is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                context: format!("tensor construction (element {pos})"),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        assert!(value.is_finite());
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn vector(data: Vec<f32>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row count of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[0]
    }

    /// Column count of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols() + c]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Sets one element. Panics if `value` is not finite.
    pub fn set(&mut self, r: usize, c: usize, value: f32) {
        assert!(value.is_finite(), "non-finite tensor element");
        let cols = self.cols();
        self.data[r * cols + c] = value;
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Copies columns `[start, end)` of a rank-2 tensor.
    pub fn col_slice(&self, start: usize, end: usize) -> Tensor {
        let (rows, cols) = (self.rows(), self.cols());
        assert!(start <= end && end <= cols);
        let width = end - start;
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&self.data[r * cols + start..r * cols + end]);
        }
        Tensor {
            shape: vec![rows, width],
            data,
        }
    }

    /// Copies rows `[start, end)` of a rank-2 tensor.
    pub fn row_slice(&self, start: usize, end: usize) -> Tensor {
        let cols = self.cols();
        assert!(start <= end && end <= self.rows());
        Tensor {
            shape: vec![end - start, cols],
            data: self.data[start * cols..end * cols].to_vec(),
        }
    }

    /// Largest absolute elementwise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &Tensor) -> Option<f32> {
        if self.shape != other.shape {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f32::max),
        )
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f32::max)
    }

    fn checked(self, context: &str) -> Result<Self> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(Error::Numeric {
                context: context.to_string(),
            })
        }
    }

    /// Serializes to the `CTXT` binary layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.rank() + 4 * self.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rank() as u16).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses the `CTXT` binary layout. `origin` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |m: &str| Error::format(origin, m);
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(bad("missing CTXT magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported tensor version {version}")));
        }
        let rank = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        let header = 8 + 8 * rank;
        if bytes.len() < header {
            return Err(bad("truncated header"));
        }
        let shape: Vec<usize> = (0..rank)
            .map(|i| {
                let off = 8 + 8 * i;
                u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize
            })
            .collect();
        let count: usize = shape.iter().product();
        if bytes.len() != header + 4 * count {
            return Err(bad(&format!(
                "expected {count} floats after header, found {} bytes",
                bytes.len() - header
            )));
        }
        let data = bytes[header..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape, data).map_err(|e| bad(&e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

/// Dot product with 64-bit accumulation.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += *x as f64 * *y as f64;
    }
    acc
}

/// `a · b` for rank-2 tensors. Sums over the inner dimension left to right.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
        return Err(Error::Dimension(format!(
            "matmul {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0f32; m * n];
    let mut acc = vec![0.0f64; n];
    for i in 0..m {
        acc.iter_mut().for_each(|v| *v = 0.0);
        let arow = a.row(i);
        for (p, &av) in arow.iter().enumerate().take(k) {
            let av = av as f64;
            let brow = &b.data[p * n..(p + 1) * n];
            for (slot, &bv) in acc.iter_mut().zip(brow) {
                *slot += av * bv as f64;
            }
        }
        for (o, v) in out[i * n..(i + 1) * n].iter_mut().zip(&acc) {
            *o = *v as f32;
        }
    }
    Tensor {
        shape: vec![m, n],
        data: out,
    }
    .checked("matmul")
}

/// `x · w + bias` with `bias` broadcast over rows.
pub fn affine(x: &Tensor, w: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let mut y = matmul(x, w)?;
    if bias.len() != y.cols() {
        return Err(Error::Dimension(format!(
            "bias of length {} for {} columns",
            bias.len(),
            y.cols()
        )));
    }
    for r in 0..y.rows() {
        for (v, b) in y.row_mut(r).iter_mut().zip(bias.data()) {
            *v = (*v as f64 + *b as f64) as f32;
        }
    }
    y.checked("affine")
}

/// Softmax of a slice, computed in 64-bit with max subtraction.
pub fn softmax_slice(x: &[f32]) -> Vec<f32> {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = x.iter().map(|&v| (v as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| (e / sum) as f32).collect()
}

/// Softmax along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(Error::Dimension(format!(
            "softmax axis {axis} for rank {}",
            x.rank()
        )));
    }
    let n = x.shape[axis];
    if n == 0 {
        return Err(Error::Dimension("softmax over an empty axis".into()));
    }
    let inner: usize = x.shape[axis + 1..].iter().product();
    let outer: usize = x.shape[..axis].iter().product();
    let mut out = x.data.clone();
    let mut buf = vec![0.0f32; n];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            for (j, b) in buf.iter_mut().enumerate() {
                *b = x.data[base + j * inner];
            }
            for (j, p) in softmax_slice(&buf).into_iter().enumerate() {
                out[base + j * inner] = p;
            }
        }
    }
    Tensor {
        shape: x.shape.clone(),
        data: out,
    }
    .checked("softmax")
}

pub(crate) fn layer_norm_slice(x: &[f32], gain: &[f32], bias: &[f32], out: &mut [f32]) {
    let d = x.len() as f64;
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / d;
    let var = x
        .iter()
        .map(|&v| {
            let c = v as f64 - mean;
            c * c
        })
        .sum::<f64>()
        / d;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    for i in 0..x.len() {
        out[i] = ((x[i] as f64 - mean) * inv * gain[i] as f64 + bias[i] as f64) as f32;
    }
}

/// `((x − mean) / sqrt(var + ε)) · gain + bias` over a single vector.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = x.len();
    if x.rank() != 1 || gain.len() != d || bias.len() != d {
        return Err(Error::Dimension(format!(
            "layer_norm x {:?}, gain {:?}, bias {:?}",
            x.shape(),
            gain.shape(),
            bias.shape()
        )));
    }
    if d < 2 {
        return Err(Error::Dimension("layer_norm needs d >= 2".into()));
    }
    let mut out = vec![0.0; d];
    layer_norm_slice(&x.data, &gain.data, &bias.data, &mut out);
    Tensor::new(vec![d], out)
}

/// Row-wise [`layer_norm`] over a `[T × d]` tensor.
pub fn layer_norm_rows(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 || gain.len() != x.cols() || bias.len() != x.cols() {
        return Err(Error::Dimension(format!(
            "layer_norm_rows x {:?}, gain {:?}",
            x.shape(),
            gain.shape()
        )));
    }
    if x.cols() < 2 {
        return Err(Error::Dimension("layer_norm needs d >= 2".into()));
    }
    let mut out = Tensor::zeros(x.shape.clone());
    for r in 0..x.rows() {
        let (src, dst) = (x.row(r), out.row_mut(r));
        layer_norm_slice(src, &gain.data, &bias.data, dst);
    }
    out.checked("layer_norm")
}

/// Exact-erf GELU of one value.
pub fn gelu_scalar(x: f32) -> f32 {
    let x = x as f64;
    (0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))) as f32
}

pub fn gelu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| gelu_scalar(v)).collect(),
    }
}

pub fn euclidean_norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Result of [`cosine_similarity`]. `degenerate` is set when either input is the zero vector,
/// in which case `value` is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub value: f64,
    pub degenerate: bool,
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<Cosine> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Dimension(format!(
            "cosine of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    // bit-identical inputs: report exactly 1 so unchanged representations score exactly 0
    if a == b && a.iter().any(|&v| v != 0.0) {
        return Ok(Cosine {
            value: 1.0,
            degenerate: false,
        });
    }
    let (na, nb) = (euclidean_norm(a), euclidean_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Ok(Cosine {
            value: 0.0,
            degenerate: true,
        });
    }
    let value = (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(Cosine {
        value,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        let data = (0..r * c).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        Tensor::matrix(r, c, data).unwrap()
    }

    #[test]
    fn matmul_identity_and_selector() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Tensor::identity(2), &a).unwrap(), a);
        let sel = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let col = Tensor::from_rows(&[vec![0.0], vec![5.0]]).unwrap();
        assert_eq!(matmul(&sel, &col).unwrap().data(), &[0.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 7, 5);
        let b = random_matrix(&mut rng, 5, 3);
        let c = matmul(&a, &b).unwrap();
        for i in 0..7 {
            for j in 0..3 {
                let mut s = 0.0f64;
                for k in 0..5 {
                    s += a.get(i, k) as f64 * b.get(k, j) as f64;
                }
                assert!((c.get(i, j) as f64 - s).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Tensor::zeros(vec![2, 3]);
        assert!(matches!(matmul(&a, &a), Err(Error::Dimension(_))));
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&Tensor::vector(vec![0.0, 0.0]).unwrap(), 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax(&Tensor::vector(vec![1000.0, 0.0]).unwrap(), 0).unwrap();
        assert_eq!(s.data(), &[1.0, 0.0]);
        let s = softmax(&Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap(), 0).unwrap();
        let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).collect();
        let z: f64 = e.iter().sum();
        for (p, ei) in s.data().iter().zip(&e) {
            assert!((*p as f64 - ei / z).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_along_first_axis() {
        let x = Tensor::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let s = softmax(&x, 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5, 0.5, 0.5]);
        assert!(softmax(&Tensor::zeros(vec![0]), 0).is_err());
        assert!(softmax(&x, 2).is_err());
    }

    #[test]
    fn layer_norm_examples() {
        let ones = Tensor::filled(vec![4], 1.0);
        let zeros = Tensor::zeros(vec![4]);
        let out = layer_norm(&Tensor::filled(vec![4], 3.0), &ones, &zeros).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));

        let two = Tensor::filled(vec![2], 1.0);
        let out = layer_norm(
            &Tensor::vector(vec![1.0, -1.0]).unwrap(),
            &two,
            &Tensor::zeros(vec![2]),
        )
        .unwrap();
        assert!((out.data()[0] - 1.0).abs() < 1e-4 && (out.data()[1] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_matches_f64_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f32> = (0..16).map(|_| rng.gen_range(-3.0f32..3.0)).collect();
        let g: Vec<f32> = (0..16).map(|_| rng.gen_range(0.5f32..1.5)).collect();
        let b: Vec<f32> = (0..16).map(|_| rng.gen_range(-0.5f32..0.5)).collect();
        let out = layer_norm(
            &Tensor::vector(x.clone()).unwrap(),
            &Tensor::vector(g.clone()).unwrap(),
            &Tensor::vector(b.clone()).unwrap(),
        )
        .unwrap();
        let mean = x.iter().map(|&v| v as f64).sum::<f64>() / 16.0;
        let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 16.0;
        for i in 0..16 {
            let r = (x[i] as f64 - mean) / (var + 1e-5).sqrt() * g[i] as f64 + b[i] as f64;
            assert!((out.data()[i] as f64 - r).abs() < 1e-5);
        }
    }

    #[test]
    fn layer_norm_rejects_tiny_width() {
        let one = Tensor::vector(vec![1.0]).unwrap();
        assert!(layer_norm(&one, &one, &one).is_err());
    }

    #[test]
    fn gelu_examples() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-6);
        assert!(gelu_scalar(-10.0).abs() < 1e-6);
        // exact-erf value at 1: 0.5 * (1 + erf(1/sqrt 2))
        assert!((gelu_scalar(1.0) - 0.841_344_7).abs() < 1e-6);
    }

    #[test]
    fn cosine_and_norm() {
        let v = [0.3f32, -2.0, 5.0];
        assert!((cosine_similarity(&v, &v).unwrap().value - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap().value, 0.0);
        assert_eq!(euclidean_norm(&[3.0, 4.0]), 5.0);
        let c = cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(c.degenerate && c.value == 0.0);
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(
            Tensor::new(vec![2, 2], vec![0.0; 3]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            Tensor::new(vec![1], vec![f32::NAN]),
            Err(Error::Numeric { .. })
        ));
    }

    #[test]
    fn file_format_layout() {
        let t = Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], b"CTXT");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 2);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        assert_eq!(f32::from_le_bytes(bytes[24..28].try_into().unwrap()), 1.0);
        assert_eq!(bytes.len(), 24 + 12);
        let p = Path::new("mem");
        assert_eq!(Tensor::from_bytes(&bytes, p).unwrap(), t);
        assert!(Tensor::from_bytes(&bytes[..20], p).is_err());
        assert!(Tensor::from_bytes(b"NOPE\x01\x00\x00\x00", p).is_err());
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(v in proptest::collection::vec(-50.0f32..50.0, 1..40)) {
            let s = softmax(&Tensor::vector(v).unwrap(), 0).unwrap();
            let sum: f64 = s.data().iter().map(|&p| p as f64).sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            prop_assert!(s.data().iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn identity_associativity(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, 4, 6);
            let b = random_matrix(&mut rng, 6, 3);
            let i = Tensor::identity(6);
            let left = matmul(&matmul(&a, &i).unwrap(), &b).unwrap();
            let right = matmul(&a, &matmul(&i, &b).unwrap()).unwrap();
            prop_assert!(left.max_abs_diff(&right).unwrap() <= 1e-6);
        }

        #[test]
        fn layer_norm_is_idempotent(v in proptest::collection::vec(-10.0f32..10.0, 2..32)) {
            prop_assume!({
                let m = v.iter().sum::<f32>() / v.len() as f32;
                v.iter().map(|x| (x - m).powi(2)).sum::<f32>() / v.len() as f32 > 1.0
            });
            // eps shrinks the output by sqrt(var / (var + eps)), so only near-idempotent for var >> eps
            let d = v.len();
            let (g, b) = (Tensor::filled(vec![d], 1.0), Tensor::zeros(vec![d]));
            let once = layer_norm(&Tensor::vector(v).unwrap(), &g, &b).unwrap();
            let twice = layer_norm(&once, &g, &b).unwrap();
            prop_assert!(once.max_abs_diff(&twice).unwrap() < 1e-4);
            let mean: f64 = once.data().iter().map(|&x| x as f64).sum::<f64>() / d as f64;
            prop_assert!(mean.abs() < 1e-5);
        }

        #[test]
        fn tensor_file_roundtrip(dims in proptest::collection::vec(0usize..5, 0..4), seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n: usize = dims.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-1e3f32..1e3)).collect();
            let t = Tensor::new(dims, data).unwrap();
            prop_assert_eq!(Tensor::from_bytes(&t.to_bytes(), Path::new("p")).unwrap(), t);
        }
    }
}

//! Dense single-precision linear algebra with a fixed evaluation order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseVector(Vec<f32>);

impl DenseVector {
    pub fn new(data: Vec<f32>) -> Self {
        DenseVector(data)
    }

    pub fn zeros(dim: usize) -> Self {
        DenseVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f32>> for DenseVector {
    fn from(v: Vec<f32>) -> Self {
        DenseVector(v)
    }
}

impl std::ops::Deref for DenseVector {
    type Target = [f32];
    fn deref(&self) -> &[f32] {
        &self.0
    }
}

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::DimMismatch {
                expected: rows * cols,
                actual: data.len(),
                context: "matrix data",
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::Shape("matrix holds non-finite values".into()));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        DenseMatrix {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// `m · v`, accumulating each output row left to right.
pub fn matvec(m: &DenseMatrix, v: &[f32]) -> Result<DenseVector> {
    if m.cols != v.len() {
        return Err(Error::DimMismatch {
            expected: m.cols,
            actual: v.len(),
            context: "matvec",
        });
    }
    let out = (0..m.rows)
        .map(|r| {
            let mut acc = 0.0f32;
            for (a, b) in m.row(r).iter().zip(v) {
                acc += a * b;
            }
            acc
        })
        .collect();
    Ok(DenseVector(out))
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `a += b` elementwise.
pub fn add_assign(a: &mut [f32], b: &[f32]) {
    debug_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu { slope: f32 },
    Elu,
}

impl Activation {
    pub fn apply_scalar(&self, x: f32) -> f32 {
        match *self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Elu => {
                if x >= 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }

    pub fn apply(&self, v: &mut [f32]) {
        for x in v {
            *x = self.apply_scalar(*x);
        }
    }
}

pub fn activation(kind: Activation, v: &DenseVector) -> DenseVector {
    let mut out = v.clone();
    kind.apply(&mut out.0);
    out
}

/// Max-subtracted softmax, summed in input order.
pub fn softmax(scores: &[f32]) -> DenseVector {
    if scores.is_empty() {
        return DenseVector(Vec::new());
    }
    let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = scores.iter().map(|s| (s - max).exp()).collect();
    let mut total = 0.0f32;
    for e in &exps {
        total += e;
    }
    DenseVector(exps.into_iter().map(|e| e / total).collect())
}

/// Exact running sum of f64 values kept as non-overlapping partials
/// (Shewchuk's expansion). The rounded value depends only on the multiset of
/// inputs, never on the order they were added or merged in.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_partials(partials: Vec<f64>) -> Self {
        let mut s = ExactSum::new();
        for p in partials {
            s.add(p);
        }
        s
    }

    pub fn partials(&self) -> &[f64] {
        &self.partials
    }

    pub fn add(&mut self, mut x: f64) {
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    /// Correctly rounded value of the exact sum.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Round-half-even correction when the tail points the same way.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matvec_examples() {
        let v = matvec(&DenseMatrix::identity(2), &[3.0, 4.0]).unwrap();
        assert_eq!(v.as_slice(), &[3.0, 4.0]);
        let v = matvec(&DenseMatrix::zeros(2, 2), &[3.0, 4.0]).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 0.0]);
        let m = DenseMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matvec(&m, &[2.0, 1.0]).unwrap().as_slice(), &[4.0, 10.0]);
        assert!(matvec(&m, &[1.0]).is_err());
    }

    #[test]
    fn matrix_rejects_bad_data() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::new(1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn activation_examples() {
        let v = DenseVector::new(vec![-1.0, 2.0]);
        assert_eq!(activation(Activation::Relu, &v).as_slice(), &[0.0, 2.0]);
        assert_eq!(
            activation(Activation::LeakyRelu { slope: 0.2 }, &v).as_slice(),
            &[-0.2, 2.0]
        );
        assert_eq!(
            activation(Activation::Elu, &DenseVector::new(vec![0.0])).as_slice(),
            &[0.0]
        );
        let e = activation(Activation::Elu, &DenseVector::new(vec![-1.0]));
        assert!((e[0] - ((-1.0f32).exp() - 1.0)).abs() < 1e-7);
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&[0.7, 0.7, 0.7]);
        for x in s.iter() {
            assert!((x - 1.0 / 3.0).abs() < 1e-6);
        }
        assert_eq!(softmax(&[5.0]).as_slice(), &[1.0]);
        let s = softmax(&[0.0, 3.0f32.ln()]);
        assert!((s[0] - 0.25).abs() < 1e-6 && (s[1] - 0.75).abs() < 1e-6);
    }

    #[test]
    fn exact_sum_cancellation() {
        let mut s = ExactSum::new();
        for x in [1e16, 1.0, -1e16, 1e-3] {
            s.add(x);
        }
        assert_eq!(s.value(), 1.001);
        assert_eq!(ExactSum::new().value(), 0.0);
    }

    proptest! {
        #[test]
        fn matvec_is_linear(
            m in proptest::collection::vec(-2.0f32..2.0, 12),
            x in proptest::collection::vec(-2.0f32..2.0, 4),
            y in proptest::collection::vec(-2.0f32..2.0, 4),
            a in -2.0f32..2.0,
            b in -2.0f32..2.0,
        ) {
            let m = DenseMatrix::new(3, 4, m).unwrap();
            let mix: Vec<f32> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = matvec(&m, &mix).unwrap();
            let mx = matvec(&m, &x).unwrap();
            let my = matvec(&m, &y).unwrap();
            for i in 0..3 {
                prop_assert!((lhs[i] - (a * mx[i] + b * my[i])).abs() < 1e-5 * 16.0);
            }
        }

        #[test]
        fn softmax_is_distribution(
            v in proptest::collection::vec(-20.0f32..20.0, 1..16),
            c in -5.0f32..5.0,
        ) {
            let s = softmax(&v);
            prop_assert!(s.iter().all(|&p| p >= 0.0));
            prop_assert!((s.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            let shifted: Vec<f32> = v.iter().map(|x| x + c).collect();
            let t = softmax(&shifted);
            for (p, q) in s.iter().zip(t.iter()) {
                prop_assert!((p - q).abs() < 1e-6);
            }
        }

        #[test]
        fn exact_sum_order_independent(
            v in proptest::collection::vec(-1e6f64..1e6, 0..40),
            split in 0usize..40,
        ) {
            let mut fwd = ExactSum::new();
            v.iter().for_each(|&x| fwd.add(x));
            let mut rev = ExactSum::new();
            v.iter().rev().for_each(|&x| rev.add(x));
            let k = split.min(v.len());
            let mut left = ExactSum::new();
            v[..k].iter().for_each(|&x| left.add(x));
            let mut right = ExactSum::new();
            v[k..].iter().for_each(|&x| right.add(x));
            right.merge(&left);
            prop_assert_eq!(fwd.value().to_bits(), rev.value().to_bits());
            prop_assert_eq!(fwd.value().to_bits(), right.value().to_bits());
        }
    }
}

//! Double-double arithmetic for propagations whose co-state modes grow like
//! `e^{|μ| t}`. Plain `f64` loses the terminal condition to roundoff there.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn from_f64(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn mul_f64(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, rhs: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let (t, f) = two_sum(self.lo, rhs.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, rhs: Dd) -> Dd {
        self + (-rhs)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, rhs: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let e = e + (self.hi * rhs.lo + self.lo * rhs.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

pub(crate) type DdVec = Vec<Dd>;

pub(crate) fn from_dvector(v: &DVector<f64>) -> DdVec {
    v.iter().map(|&x| Dd::from_f64(x)).collect()
}

pub(crate) fn to_dvector(v: &[Dd]) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().map(|d| d.to_f64()))
}

/// `m * v` with an `f64` matrix and a double-double vector.
pub(crate) fn mat_vec(m: &DMatrix<f64>, v: &[Dd]) -> DdVec {
    let mut out = vec![Dd::ZERO; m.nrows()];
    for (j, vj) in v.iter().enumerate() {
        if vj.hi == 0.0 && vj.lo == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            let mij = m[(i, j)];
            if mij != 0.0 {
                *o = *o + vj.mul_f64(mij);
            }
        }
    }
    out
}

/// Square double-double matrix, row-major.
#[derive(Debug, Clone)]
pub(crate) struct DdMatrix {
    pub n: usize,
    pub data: Vec<Dd>,
}

impl DdMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![Dd::ZERO; n * n];
        for i in 0..n {
            data[i * n + i] = Dd::from_f64(1.0);
        }
        DdMatrix { n, data }
    }

    pub fn from_f64(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(Dd::from_f64(m[(i, j)]));
            }
        }
        DdMatrix { n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> Dd {
        self.data[i * self.n + j]
    }

    pub fn mul(&self, other: &DdMatrix) -> DdMatrix {
        let n = self.n;
        let mut data = vec![Dd::ZERO; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a.hi == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let b = other.get(k, j);
                    data[i * n + j] = data[i * n + j] + a * b;
                }
            }
        }
        DdMatrix { n, data }
    }

    /// `self^k` by binary powering.
    pub fn pow(&self, mut k: usize) -> DdMatrix {
        let mut result = DdMatrix::identity(self.n);
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    pub fn mul_vec(&self, v: &[Dd]) -> DdVec {
        (0..self.n).map(|i| (0..self.n).fold(Dd::ZERO, |acc, j| acc + self.get(i, j) * v[j])).collect()
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j).to_f64())
    }
}

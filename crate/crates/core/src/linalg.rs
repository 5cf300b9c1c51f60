//! Fixed-capacity vectors and matrices for d = 2 or d = 3.
//!
//! Everything here is `Copy` and stack allocated; unused trailing slots are
//! kept at zero so that whole-array arithmetic stays correct.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Velocity-space dimension, restricted to 2 or 3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Dim(usize);

impl Dim {
    pub const TWO: Dim = Dim(2);
    pub const THREE: Dim = Dim(3);

    pub fn new(d: usize) -> Result<Self> {
        match d {
            2 | 3 => Ok(Dim(d)),
            _ => Err(Error::Dimension(d)),
        }
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }

    #[inline]
    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    /// Number of unordered index pairs α < β.
    pub fn pairs(self) -> usize {
        self.0 * (self.0 - 1) / 2
    }

    /// Iterator over the index pairs (α, β) with α < β, in lexicographic order.
    pub fn pair_indices(self) -> impl Iterator<Item = (usize, usize)> {
        let d = self.0;
        (0..d).flat_map(move |a| (a + 1..d).map(move |b| (a, b)))
    }
}

impl TryFrom<usize> for Dim {
    type Error = Error;
    fn try_from(d: usize) -> Result<Self> {
        Dim::new(d)
    }
}

impl From<Dim> for usize {
    fn from(d: Dim) -> usize {
        d.0
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A velocity vector in R^d.
#[derive(Clone, Copy, PartialEq)]
pub struct VecD {
    c: [f64; MAX_DIM],
    d: Dim,
}

impl VecD {
    pub fn zeros(d: Dim) -> Self {
        VecD { c: [0.0; MAX_DIM], d }
    }

    /// Builds a vector from a slice whose length fixes the dimension.
    pub fn from_slice(s: &[f64]) -> Result<Self> {
        let d = Dim::new(s.len())?;
        let mut c = [0.0; MAX_DIM];
        c[..s.len()].copy_from_slice(s);
        Ok(VecD { c, d })
    }

    /// Like [`VecD::from_slice`] but trusts the caller on the length.
    #[inline]
    pub(crate) fn from_slice_unchecked(s: &[f64], d: Dim) -> Self {
        let mut c = [0.0; MAX_DIM];
        c[..d.0].copy_from_slice(&s[..d.0]);
        VecD { c, d }
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.d
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.c[..self.d.0]
    }

    #[inline]
    pub fn dot(&self, other: &VecD) -> f64 {
        self.c[0] * other.c[0] + self.c[1] * other.c[1] + self.c[2] * other.c[2]
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    /// Outer product u ⊗ w.
    pub fn outer(&self, other: &VecD) -> MatD {
        let mut m = MatD::zeros(self.d);
        for a in 0..self.d.0 {
            for b in 0..self.d.0 {
                m.m[a][b] = self.c[a] * other.c[b];
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> VecD {
        let mut out = *self;
        for x in out.c.iter_mut() {
            *x *= s;
        }
        out
    }
}

impl fmt::Debug for VecD {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl Index<usize> for VecD {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        &self.c[..self.d.0][i]
    }
}

impl IndexMut<usize> for VecD {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.c[..self.d.0][i]
    }
}

impl Add for VecD {
    type Output = VecD;
    #[inline]
    fn add(mut self, rhs: VecD) -> VecD {
        for k in 0..MAX_DIM {
            self.c[k] += rhs.c[k];
        }
        self
    }
}

impl Sub for VecD {
    type Output = VecD;
    #[inline]
    fn sub(mut self, rhs: VecD) -> VecD {
        for k in 0..MAX_DIM {
            self.c[k] -= rhs.c[k];
        }
        self
    }
}

impl Neg for VecD {
    type Output = VecD;
    fn neg(self) -> VecD {
        self.scale(-1.0)
    }
}

impl Mul<VecD> for f64 {
    type Output = VecD;
    fn mul(self, rhs: VecD) -> VecD {
        rhs.scale(self)
    }
}

/// A dense d×d matrix, row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct MatD {
    m: [[f64; MAX_DIM]; MAX_DIM],
    d: Dim,
}

impl MatD {
    pub fn zeros(d: Dim) -> Self {
        MatD { m: [[0.0; MAX_DIM]; MAX_DIM], d }
    }

    pub fn identity(d: Dim) -> Self {
        Self::scalar(d, 1.0)
    }

    pub fn scalar(d: Dim, s: f64) -> Self {
        let mut out = Self::zeros(d);
        for a in 0..d.0 {
            out.m[a][a] = s;
        }
        out
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let d = Dim::new(values.len())?;
        let mut out = Self::zeros(d);
        for (a, v) in values.iter().enumerate() {
            out.m[a][a] = *v;
        }
        Ok(out)
    }

    /// Builds a matrix from row slices.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = Dim::new(rows.len())?;
        let mut out = Self::zeros(d);
        for (a, row) in rows.iter().enumerate() {
            if row.len() != d.0 {
                return Err(Error::Dimension(row.len()));
            }
            out.m[a][..d.0].copy_from_slice(row);
        }
        Ok(out)
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.d
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.m[a][b]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, v: f64) {
        self.m[a][b] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.d.0).map(|a| self.m[a][a]).sum()
    }

    pub fn transpose(&self) -> MatD {
        let mut out = *self;
        for a in 0..self.d.0 {
            for b in 0..self.d.0 {
                out.m[a][b] = self.m[b][a];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> MatD {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &MatD) -> MatD {
        let d = self.d.0;
        let mut out = MatD::zeros(self.d);
        for a in 0..d {
            for b in 0..d {
                out.m[a][b] = (0..d).map(|k| self.m[a][k] * rhs.m[k][b]).sum();
            }
        }
        out
    }

    #[inline]
    pub fn mul_vec(&self, v: &VecD) -> VecD {
        let mut out = VecD::zeros(self.d);
        for a in 0..self.d.0 {
            out.c[a] = self.m[a][0] * v.c[0] + self.m[a][1] * v.c[1] + self.m[a][2] * v.c[2];
        }
        out
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.m.iter().flatten().map(|x| x * x).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// Largest |M_ab − M_ba|.
    pub fn asymmetry(&self) -> f64 {
        let d = self.d.0;
        let mut worst: f64 = 0.0;
        for a in 0..d {
            for b in a + 1..d {
                worst = worst.max((self.m[a][b] - self.m[b][a]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|x| x.is_finite())
    }

    /// Eigen-decomposition of a symmetric matrix.
    ///
    /// Returns eigenvalues in ascending order and the matching orthonormal
    /// eigenvectors as the columns of the second value. Only the upper
    /// triangle is read.
    pub fn symmetric_eigen(&self) -> ([f64; MAX_DIM], MatD) {
        match self.d.0 {
            2 => eigen_2x2(self),
            _ => eigen_jacobi(self),
        }
    }
}

impl fmt::Debug for MatD {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.d.0;
        let rows: Vec<&[f64]> = self.m[..d].iter().map(|r| &r[..d]).collect();
        f.debug_list().entries(rows).finish()
    }
}

impl Add for MatD {
    type Output = MatD;
    fn add(mut self, rhs: MatD) -> MatD {
        for a in 0..MAX_DIM {
            for b in 0..MAX_DIM {
                self.m[a][b] += rhs.m[a][b];
            }
        }
        self
    }
}

impl Sub for MatD {
    type Output = MatD;
    fn sub(mut self, rhs: MatD) -> MatD {
        for a in 0..MAX_DIM {
            for b in 0..MAX_DIM {
                self.m[a][b] -= rhs.m[a][b];
            }
        }
        self
    }
}

fn eigen_2x2(m: &MatD) -> ([f64; MAX_DIM], MatD) {
    let (p, q, r) = (m.m[0][0], m.m[0][1], m.m[1][1]);
    let mean = 0.5 * (p + r);
    let half_diff = 0.5 * (p - r);
    let rad = half_diff.hypot(q);
    let lo = mean - rad;
    let hi = mean + rad;
    let mut vecs = MatD::identity(m.d);
    if q != 0.0 {
        // Rotation angle of the principal axis, stable for all sign patterns.
        let theta = 0.5 * (2.0 * q).atan2(p - r);
        let (s, c) = theta.sin_cos();
        // (c, s) belongs to `hi`, (−s, c) to `lo`.
        vecs.m[0][0] = -s;
        vecs.m[1][0] = c;
        vecs.m[0][1] = c;
        vecs.m[1][1] = s;
    } else if p > r {
        vecs.m[0][0] = 0.0;
        vecs.m[1][0] = 1.0;
        vecs.m[0][1] = 1.0;
        vecs.m[1][1] = 0.0;
    }
    ([lo, hi, 0.0], vecs)
}

/// Cyclic Jacobi rotations for the 3×3 case.
fn eigen_jacobi(m: &MatD) -> ([f64; MAX_DIM], MatD) {
    let n = m.d.0;
    let mut a = *m;
    for i in 0..n {
        for j in 0..i {
            a.m[i][j] = a.m[j][i];
        }
    }
    let mut v = MatD::identity(m.d);
    let scale = a.max_abs();
    if scale == 0.0 {
        return ([0.0; MAX_DIM], v);
    }
    for _sweep in 0..64 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a.m[p][q] * a.m[p][q])
            .sum();
        if off.sqrt() <= f64::EPSILON * 1e-3 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.m[q][q] - a.m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.m[k][p];
                    let akq = a.m[k][q];
                    a.m[k][p] = c * akp - s * akq;
                    a.m[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a.m[p][k];
                    let aqk = a.m[q][k];
                    a.m[p][k] = c * apk - s * aqk;
                    a.m[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v.m[k][p];
                    let vkq = v.m[k][q];
                    v.m[k][p] = c * vkp - s * vkq;
                    v.m[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a.m[x][x].total_cmp(&a.m[y][y]));
    let mut vals = [0.0; MAX_DIM];
    let mut vecs = MatD::zeros(m.d);
    for (dst, &src) in order.iter().enumerate() {
        vals[dst] = a.m[src][src];
        for k in 0..n {
            vecs.m[k][dst] = v.m[k][src];
        }
    }
    (vals, vecs)
}

//! Small fixed-size vectors and matrices in R^3.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<T>(pub [T; 3]);

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3([x, y, z])
    }

    #[inline]
    pub fn zero() -> Self {
        Vec3([T::zero(); 3])
    }

    /// Standard basis vector `e_i` (0-based).
    #[inline]
    pub fn unit(i: usize) -> Self {
        let mut v = Self::zero();
        v.0[i] = T::one();
        v
    }

    #[inline]
    pub fn from_f64(v: [f64; 3]) -> Self {
        Vec3([T::lit(v[0]), T::lit(v[1]), T::lit(v[2])])
    }

    #[inline]
    pub fn to_f64(self) -> [f64; 3] {
        [self.0[0].to_f64_lossy(), self.0[1].to_f64_lossy(), self.0[2].to_f64_lossy()]
    }

    #[inline]
    pub fn x(self) -> T {
        self.0[0]
    }
    #[inline]
    pub fn y(self) -> T {
        self.0[1]
    }
    #[inline]
    pub fn z(self) -> T {
        self.0[2]
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        let [a1, a2, a3] = self.0;
        let [b1, b2, b3] = o.0;
        Vec3([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn scale(self, a: T) -> Self {
        Vec3([self.0[0] * a, self.0[1] * a, self.0[2] * a])
    }

    /// Unit vector in the direction of `self`; `None` for the zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        (n > T::zero() && n.is_finite()).then(|| self.scale(T::one() / n))
    }

    #[inline]
    pub fn max_abs(self) -> T {
        self.0[0].abs().max(self.0[1].abs()).max(self.0[2].abs())
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Outer product `self ⊗ o`, i.e. the matrix `w ↦ self (o·w)`.
    pub fn outer(self, o: Self) -> Mat3<T> {
        let mut m = Mat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[i] * o.0[j];
            }
        }
        m
    }

    /// Cross-product matrix `[self]×` with `[self]× w = self × w`.
    pub fn cross_matrix(self) -> Mat3<T> {
        let [a, b, c] = self.0;
        let z = T::zero();
        Mat3([[z, -c, b], [c, z, -a], [-b, a, z]])
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, a: T) -> Self {
        self.scale(a)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        for i in 0..3 {
            self.0[i] += o.0[i];
        }
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        for i in 0..3 {
            self.0[i] -= o.0[i];
        }
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

impl<T: Real> Mat3<T> {
    pub fn zero() -> Self {
        Mat3([[T::zero(); 3]; 3])
    }

    pub fn identity() -> Self {
        Self::diag(T::one())
    }

    pub fn diag(a: T) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            m.0[i][i] = a;
        }
        m
    }

    pub fn from_f64(rows: [[f64; 3]; 3]) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = T::lit(rows[i][j]);
            }
        }
        m
    }

    pub fn to_f64(self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = self.0[i][j].to_f64_lossy();
            }
        }
        out
    }

    /// Matrix with the given vectors as columns.
    pub fn from_columns(c: [Vec3<T>; 3]) -> Self {
        let mut m = Self::zero();
        for j in 0..3 {
            for i in 0..3 {
                m.0[i][j] = c[j].0[i];
            }
        }
        m
    }

    pub fn column(&self, j: usize) -> Vec3<T> {
        Vec3([self.0[0][j], self.0[1][j], self.0[2][j]])
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        let r = &self.0;
        Vec3([
            r[0][0] * v.0[0] + r[0][1] * v.0[1] + r[0][2] * v.0[2],
            r[1][0] * v.0[0] + r[1][1] * v.0[1] + r[1][2] * v.0[2],
            r[2][0] * v.0[0] + r[2][1] * v.0[1] + r[2][2] * v.0[2],
        ])
    }

    /// `selfᵀ v`.
    #[inline]
    pub fn tr_mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        let r = &self.0;
        Vec3([
            r[0][0] * v.0[0] + r[1][0] * v.0[1] + r[2][0] * v.0[2],
            r[0][1] * v.0[0] + r[1][1] * v.0[1] + r[2][1] * v.0[2],
            r[0][2] * v.0[0] + r[1][2] * v.0[1] + r[2][2] * v.0[2],
        ])
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[j][i];
            }
        }
        m
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = T::zero();
                for k in 0..3 {
                    acc += self.0[i][k] * o.0[k][j];
                }
                m.0[i][j] = acc;
            }
        }
        m
    }

    pub fn scale(&self, a: T) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for x in row.iter_mut() {
                *x *= a;
            }
        }
        m
    }

    pub fn det(&self) -> T {
        let r = &self.0;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    /// Inverse by cofactors; `None` when singular.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == T::zero() || !d.is_finite() {
            return None;
        }
        let r = &self.0;
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                let (a0, a1) = ((j + 1) % 3, (j + 2) % 3);
                let (b0, b1) = ((i + 1) % 3, (i + 2) % 3);
                m.0[i][j] = (r[a0][b0] * r[a1][b1] - r[a0][b1] * r[a1][b0]) / d;
            }
        }
        Some(m)
    }

    pub fn frobenius_sq(&self) -> T {
        self.0.iter().flat_map(|r| r.iter()).map(|&x| x * x).sum()
    }

    pub fn frobenius(&self) -> T {
        self.frobenius_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flat_map(|r| r.iter()).all(|x| x.is_finite())
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut m = self;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] += o.0[i][j];
            }
        }
        m
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut m = self;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] -= o.0[i][j];
            }
        }
        m
    }
}

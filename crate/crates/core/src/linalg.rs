//! Planar vectors and 2×2 matrices with closed-form spectral helpers.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::scalar::Scalar;

/// A point `Z = (x, y)` in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State<S> {
    pub x: S,
    pub y: S,
}

impl<S: Scalar> State<S> {
    pub fn new(x: S, y: S) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero())
    }

    pub fn norm_sq(self) -> S {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> S {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Self) -> S {
        self.x * other.x + self.y * other.y
    }

    pub fn scale(self, k: S) -> Self {
        Self::new(self.x * k, self.y * k)
    }

    pub fn distance(self, other: Self) -> S {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn from_array(v: [S; 2]) -> Self {
        Self::new(v[0], v[1])
    }

    pub fn to_array(self) -> [S; 2] {
        [self.x, self.y]
    }
}

impl<S: Scalar> Add for State<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<S: Scalar> AddAssign for State<S> {
    fn add_assign(&mut self, o: Self) {
        self.x = self.x + o.x;
        self.y = self.y + o.y;
    }
}

impl<S: Scalar> Sub for State<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<S: Scalar> Neg for State<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

impl<S: Scalar> Mul<S> for State<S> {
    type Output = Self;
    fn mul(self, k: S) -> Self {
        self.scale(k)
    }
}

/// Real 2×2 matrix, row-major `[m11, m12, m21, m22]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2<S> {
    pub m: [S; 4],
}

/// Thin QR factor of a 2×2 matrix obtained by Gram–Schmidt on its columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Qr<S> {
    pub q: Mat2<S>,
    pub r11: S,
    pub r12: S,
    pub r22: S,
}

impl<S: Scalar> Mat2<S> {
    pub fn new(m11: S, m12: S, m21: S, m22: S) -> Self {
        Self { m: [m11, m12, m21, m22] }
    }

    pub fn identity() -> Self {
        Self::new(S::one(), S::zero(), S::zero(), S::one())
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero(), S::zero(), S::zero())
    }

    pub fn diag(d1: S, d2: S) -> Self {
        Self::new(d1, S::zero(), S::zero(), d2)
    }

    /// Counter-clockwise rotation by `angle`.
    pub fn rotation(angle: S) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c, -s, s, c)
    }

    pub fn from_columns(c1: State<S>, c2: State<S>) -> Self {
        Self::new(c1.x, c2.x, c1.y, c2.y)
    }

    pub fn column(&self, j: usize) -> State<S> {
        State::new(self.m[j], self.m[2 + j])
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.m[2 * i + j]
    }

    pub fn det(&self) -> S {
        self.m[0] * self.m[3] - self.m[1] * self.m[2]
    }

    pub fn trace(&self) -> S {
        self.m[0] + self.m[3]
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.m[0], self.m[2], self.m[1], self.m[3])
    }

    pub fn scale(&self, k: S) -> Self {
        Self { m: self.m.map(|v| v * k) }
    }

    pub fn mul_vec(&self, v: State<S>) -> State<S> {
        State::new(
            self.m[0] * v.x + self.m[1] * v.y,
            self.m[2] * v.x + self.m[3] * v.y,
        )
    }

    /// Quadratic form `⟨M v, v⟩`.
    pub fn quadratic_form(&self, v: State<S>) -> S {
        self.mul_vec(v).dot(v)
    }

    pub fn max_abs(&self) -> S {
        self.m.iter().fold(S::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius(&self) -> S {
        self.m.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|v| v.is_finite())
    }

    /// Eigenvalues `(min, max)` of the symmetric part `(M + Mᵀ)/2`.
    pub fn symmetric_eigenvalues(&self) -> (S, S) {
        let half = S::lit(0.5);
        let p = self.m[0];
        let r = self.m[3];
        let q = (self.m[1] + self.m[2]) * half;
        let mean = (p + r) * half;
        let radius = ((p - r) * half).hypot(q);
        (mean - radius, mean + radius)
    }

    /// Singular values `(σ_max, σ_min)` in closed form.
    pub fn singular_values(&self) -> (S, S) {
        let half = S::lit(0.5);
        let [m11, m12, m21, m22] = self.m;
        let e = (m11 + m22) * half;
        let f = (m11 - m22) * half;
        let g = (m21 + m12) * half;
        let h = (m21 - m12) * half;
        let q = e.hypot(h);
        let r = f.hypot(g);
        let s_max = q + r;
        let s_min = if s_max > S::zero() {
            self.det().abs() / s_max
        } else {
            S::zero()
        };
        (s_max, s_min)
    }

    /// Operator 2-norm.
    pub fn norm(&self) -> S {
        self.singular_values().0
    }

    /// Gram–Schmidt QR with `r11 > 0`; `r22` carries the sign of the determinant.
    pub fn qr(&self) -> Qr<S> {
        let c1 = self.column(0);
        let c2 = self.column(1);
        let r11 = c1.norm();
        let q1 = c1.scale(r11.recip());
        let r12 = q1.dot(c2);
        let q2 = State::new(-q1.y, q1.x);
        let r22 = q2.dot(c2);
        Qr {
            q: Mat2::from_columns(q1, q2),
            r11,
            r12,
            r22,
        }
    }

    pub fn cast<T: Scalar>(&self) -> Mat2<T> {
        Mat2 { m: self.m.map(|v| T::lit(v.as_f64())) }
    }
}

impl<S: Scalar> Add for Mat2<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(
            self.m[0] + o.m[0],
            self.m[1] + o.m[1],
            self.m[2] + o.m[2],
            self.m[3] + o.m[3],
        )
    }
}

impl<S: Scalar> Sub for Mat2<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(
            self.m[0] - o.m[0],
            self.m[1] - o.m[1],
            self.m[2] - o.m[2],
            self.m[3] - o.m[3],
        )
    }
}

impl<S: Scalar> Mul for Mat2<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let [a, b, c, d] = self.m;
        let [e, f, g, h] = o.m;
        Self::new(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)
    }
}

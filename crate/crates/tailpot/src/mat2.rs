//! Minimal 2x2 matrix/vector helpers.
//!
//! Everything downstream works with symmetric 2x2 covariance blocks and the
//! lower-triangular factors derived from them, so a tiny hand-rolled type is
//! simpler than pulling in a linear-algebra crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2(pub f64, pub f64);

/// Row-major 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64, // (0,0)
    pub b: f64, // (0,1)
    pub c: f64, // (1,0)
    pub d: f64, // (1,1)
}

impl Vec2 {
    pub fn dot(self, other: Vec2) -> f64 {
        self.0 * other.0 + self.1 * other.1
    }

    pub fn sub(self, other: Vec2) -> Vec2 {
        Vec2(self.0 - other.0, self.1 - other.1)
    }

    pub fn add(self, other: Vec2) -> Vec2 {
        Vec2(self.0 + other.0, self.1 + other.1)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2(self.0 * s, self.1 * s)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl Mat2 {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn symmetric(a: f64, b: f64, d: f64) -> Self {
        Mat2 { a, b, c: b, d }
    }

    pub fn identity() -> Self {
        Mat2::new(1.0, 0.0, 0.0, 1.0)
    }

    pub fn diagonal(a: f64, d: f64) -> Self {
        Mat2::new(a, 0.0, 0.0, d)
    }

    pub fn transpose(self) -> Self {
        Mat2::new(self.a, self.c, self.b, self.d)
    }

    pub fn det(self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(self) -> f64 {
        self.a + self.d
    }

    pub fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2(self.a * v.0 + self.b * v.1, self.c * v.0 + self.d * v.1)
    }

    pub fn scale(self, s: f64) -> Mat2 {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }

    pub fn inverse(self) -> Result<Mat2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Conditioning {
                message: "singular 2x2 matrix".into(),
                eigenvalues: self.sym_eigenvalues(),
            });
        }
        Ok(Mat2::new(self.d / det, -self.b / det, -self.c / det, self.a / det))
    }

    /// Eigenvalues assuming the matrix is symmetric (uses (b+c)/2).
    pub fn sym_eigenvalues(self) -> [f64; 2] {
        let b = 0.5 * (self.b + self.c);
        let t = 0.5 * (self.a + self.d);
        let disc = (0.5 * (self.a - self.d)).powi(2) + b * b;
        let r = disc.max(0.0).sqrt();
        [t - r, t + r]
    }

    pub fn is_symmetric_positive_definite(self) -> bool {
        let eig = self.sym_eigenvalues();
        (self.b - self.c).abs() <= 1e-12 * (1.0 + self.b.abs().max(self.c.abs()))
            && eig[0] > 0.0
            && eig.iter().all(|e| e.is_finite())
    }

    /// Lower-triangular Cholesky factor L with M = L L^T.
    pub fn cholesky(self) -> Result<Mat2> {
        let fail = || Error::Conditioning {
            message: "Cholesky factorization failed (matrix not positive definite)".into(),
            eigenvalues: self.sym_eigenvalues(),
        };
        if self.a <= 0.0 {
            return Err(fail());
        }
        let l11 = self.a.sqrt();
        let l21 = 0.5 * (self.b + self.c) / l11;
        let rest = self.d - l21 * l21;
        if rest <= 0.0 {
            return Err(fail());
        }
        Ok(Mat2::new(l11, 0.0, l21, rest.sqrt()))
    }

    /// Symmetric square root via the eigendecomposition.
    pub fn sym_sqrt(self) -> Result<Mat2> {
        let eig = self.sym_eigenvalues();
        if eig[0] < 0.0 {
            return Err(Error::Conditioning {
                message: "matrix square root of an indefinite matrix".into(),
                eigenvalues: eig,
            });
        }
        let b = 0.5 * (self.b + self.c);
        if b.abs() < 1e-300 {
            return Ok(Mat2::diagonal(self.a.max(0.0).sqrt(), self.d.max(0.0).sqrt()));
        }
        // Eigenvector for eig[1]: (b, eig[1]-a) normalized.
        let (l0, l1) = (eig[0], eig[1]);
        let v1 = normalize(b, l1 - self.a);
        let v0 = (-v1.1, v1.0);
        let (s0, s1) = (l0.max(0.0).sqrt(), l1.max(0.0).sqrt());
        // sqrt = s0 v0 v0^T + s1 v1 v1^T
        Ok(Mat2::symmetric(
            s0 * v0.0 * v0.0 + s1 * v1.0 * v1.0,
            s0 * v0.0 * v0.1 + s1 * v1.0 * v1.1,
            s0 * v0.1 * v0.1 + s1 * v1.1 * v1.1,
        ))
    }

    /// Project to the nearest symmetric matrix with eigenvalues floored at
    /// `floor`. Used to repair marginally indefinite covariance estimates.
    pub fn spd_floor(self, floor: f64) -> Mat2 {
        let sym = Mat2::symmetric(self.a, 0.5 * (self.b + self.c), self.d);
        let eig = sym.sym_eigenvalues();
        if eig[0] >= floor {
            return sym;
        }
        let b = sym.b;
        if b.abs() < 1e-300 {
            return Mat2::diagonal(sym.a.max(floor), sym.d.max(floor));
        }
        let (l0, l1) = (eig[0].max(floor), eig[1].max(floor));
        let v1 = normalize(b, eig[1] - sym.a);
        let v0 = (-v1.1, v1.0);
        Mat2::symmetric(
            l0 * v0.0 * v0.0 + l1 * v1.0 * v1.0,
            l0 * v0.0 * v0.1 + l1 * v1.0 * v1.1,
            l0 * v0.1 * v0.1 + l1 * v1.1 * v1.1,
        )
    }

    pub fn max_abs_diff(self, o: Mat2) -> f64 {
        (self.a - o.a)
            .abs()
            .max((self.b - o.b).abs())
            .max((self.c - o.c).abs())
            .max((self.d - o.d).abs())
    }

    pub fn frobenius_norm(self) -> f64 {
        (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }
}

fn normalize(x: f64, y: f64) -> (f64, f64) {
    let n = (x * x + y * y).sqrt();
    (x / n, y / n)
}

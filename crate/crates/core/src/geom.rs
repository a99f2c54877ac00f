//! Small fixed-size linear algebra: 3-vectors, 3x3 matrices and a one-sided
//! Jacobi SVD.

use std::ops::{Add, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3(pub [f64; 3]);

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3(v)
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.0
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Vec3 {
    pub fn dot(&self, o: &Vec3) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    pub fn normalized(&self) -> Vec3 {
        self.scale(1.0 / self.norm())
    }

    pub fn cross(&self, o: &Vec3) -> Vec3 {
        let (a, b) = (self.0, o.0);
        Vec3([
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ])
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub fn identity() -> Mat3 {
        Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn zeros() -> Mat3 {
        Mat3([[0.0; 3]; 3])
    }

    pub fn mul(&self, o: &Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(r)
    }

    pub fn transpose(&self) -> Mat3 {
        let m = self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        let v = v.0;
        Vec3([
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn col(&self, j: usize) -> Vec3 {
        Vec3([self.0[0][j], self.0[1][j], self.0[2][j]])
    }

    /// Largest entry of |self^T self - I|.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose().mul(self);
        let mut e: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                e = e.max((p.0[i][j] - target).abs());
            }
        }
        e
    }
}

pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
}

pub fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
}

/// Rotation about unit `axis` by `angle` (Rodrigues).
pub fn axis_angle(axis: Vec3, angle: f64) -> Mat3 {
    let k = axis.normalized().0;
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    Mat3([
        [
            c + k[0] * k[0] * t,
            k[0] * k[1] * t - k[2] * s,
            k[0] * k[2] * t + k[1] * s,
        ],
        [
            k[1] * k[0] * t + k[2] * s,
            c + k[1] * k[1] * t,
            k[1] * k[2] * t - k[0] * s,
        ],
        [
            k[2] * k[0] * t - k[1] * s,
            k[2] * k[1] * t + k[0] * s,
            c + k[2] * k[2] * t,
        ],
    ])
}

/// `a = u * diag(s) * v^T` with singular values sorted descending and
/// non-negative; `u` and `v` are orthogonal but may have determinant -1.
#[derive(Debug, Clone, Copy)]
pub struct Svd3 {
    pub u: Mat3,
    pub s: [f64; 3],
    pub v: Mat3,
}

/// One-sided Jacobi: orthogonalize the columns of `a` by plane rotations
/// accumulated into `v`; the column norms are the singular values.
pub fn svd3(a: &Mat3) -> Svd3 {
    let mut w = a.0;
    let mut v = Mat3::identity().0;
    for _sweep in 0..60 {
        let mut off: f64 = 0.0;
        for p in 0..2 {
            for q in (p + 1)..3 {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for row in &w {
                    alpha += row[p] * row[p];
                    beta += row[q] * row[q];
                    gamma += row[p] * row[q];
                }
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt().max(f64::MIN_POSITIVE));
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for row in w.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
                for row in v.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }

    let mut sv = [0.0; 3];
    for (j, s) in sv.iter_mut().enumerate() {
        *s = (0..3).map(|i| w[i][j] * w[i][j]).sum::<f64>().sqrt();
    }
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());

    let mut u = [[0.0; 3]; 3];
    let mut vs = [[0.0; 3]; 3];
    let mut s_sorted = [0.0; 3];
    for (dst, &src) in idx.iter().enumerate() {
        s_sorted[dst] = sv[src];
        for i in 0..3 {
            vs[i][dst] = v[i][src];
            u[i][dst] = if sv[src] > 0.0 {
                w[i][src] / sv[src]
            } else {
                0.0
            };
        }
    }
    let mut u = Mat3(u);
    complete_basis(&mut u, &s_sorted);
    Svd3 {
        u,
        s: s_sorted,
        v: Mat3(vs),
    }
}

/// Fills left singular vectors belonging to (numerically) zero singular values
/// so `u` is orthogonal.
fn complete_basis(u: &mut Mat3, s: &[f64; 3]) {
    let tol = 1e-12 * s[0].max(f64::MIN_POSITIVE);
    let rank = s.iter().filter(|&&x| x > tol).count();
    if rank == 3 {
        return;
    }
    let set_col = |u: &mut Mat3, j: usize, c: Vec3| {
        for i in 0..3 {
            u.0[i][j] = c.0[i];
        }
    };
    if rank == 0 {
        *u = Mat3::identity();
        return;
    }
    let c0 = u.col(0).normalized();
    set_col(u, 0, c0);
    let c1 = if rank >= 2 {
        // Re-orthogonalize against c0.
        let c = u.col(1);
        (c - c0.scale(c.dot(&c0))).normalized()
    } else {
        let trial = if c0.0[0].abs() < 0.9 {
            Vec3([1.0, 0.0, 0.0])
        } else {
            Vec3([0.0, 1.0, 0.0])
        };
        (trial - c0.scale(trial.dot(&c0))).normalized()
    };
    set_col(u, 1, c1);
    set_col(u, 2, c0.cross(&c1));
}

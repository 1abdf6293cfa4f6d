//! Dense oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::f64::consts::PI;

use ekman_core::model::PhysicalParams;
use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use num_complex::Complex64;

/// Dense 4x4 solve of the boundary conditions for the general solution
/// `W = v1 + i v2 = A e^{lambda z} + B e^{-lambda z}`, `lambda^2 = i f / nu_z`.
/// Unknowns are `(Re A, Im A, Re B, Im B)`; returns `(lambda, A, B)`.
pub fn bc_oracle(p: &PhysicalParams) -> (Complex64, Complex64, Complex64) {
    let lambda = (Complex64::new(0.0, p.f / p.nu_z)).sqrt();
    let top = [lambda, -lambda]; // W'(0) coefficients of A, B
    let bottom = [(-lambda * p.h).exp(), (lambda * p.h).exp()]; // W(-h)
    let mut m = Matrix4::<f64>::zeros();
    for (c, coef) in [top[0], top[1]].iter().enumerate() {
        // A (or B) = x + i y contributes coef * (x + i y)
        m[(0, 2 * c)] = coef.re;
        m[(0, 2 * c + 1)] = -coef.im;
        m[(1, 2 * c)] = coef.im;
        m[(1, 2 * c + 1)] = coef.re;
    }
    for (c, coef) in [bottom[0], bottom[1]].iter().enumerate() {
        m[(2, 2 * c)] = coef.re;
        m[(2, 2 * c + 1)] = -coef.im;
        m[(3, 2 * c)] = coef.im;
        m[(3, 2 * c + 1)] = coef.re;
    }
    let rhs = Vector4::new(p.tau[0], p.tau[1], p.v_g[0], p.v_g[1]);
    let x = m.lu().solve(&rhs).expect("boundary system is nonsingular");
    (lambda, Complex64::new(x[0], x[1]), Complex64::new(x[2], x[3]))
}

/// Assembles every operator as a dense matrix on the collocation points,
/// with no FFTs and no Chebyshev coefficient space.
pub struct Dense {
    n: usize,
    nzp: usize,
    dx: DMatrix<f64>,
    dy: DMatrix<f64>,
    dz: DMatrix<f64>,
    /// `int_{-h}^{z}` by a collocation solve of `W' = f`, `W(-h) = 0`.
    antiderivative: DMatrix<f64>,
    lap_pinv: DMatrix<f64>,
    h: f64,
}

impl Dense {
    pub fn new(n: usize, nz: usize, l: f64, h: f64) -> Self {
        let step = 2.0 * PI / n as f64;
        let d1 = DMatrix::from_fn(n, n, |j, k| {
            if j == k {
                0.0
            } else {
                let sign = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
                0.5 * sign / (0.5 * (j as f64 - k as f64) * step).tan() * 2.0 * PI / l
            }
        });
        // Trefethen's Chebyshev matrix on x_j = cos(pi j / N), mapped to z = h (x - 1) / 2
        let x: Vec<f64> = (0..=nz).map(|j| (PI * j as f64 / nz as f64).cos()).collect();
        let c = |j: usize| if j == 0 || j == nz { 2.0 } else { 1.0 };
        let mut dc = DMatrix::from_fn(nz + 1, nz + 1, |i, j| {
            if i == j {
                0.0
            } else {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                c(i) / c(j) * sign / (x[i] - x[j])
            }
        });
        for i in 0..=nz {
            let s: f64 = (0..=nz).filter(|&j| j != i).map(|j| dc[(i, j)]).sum();
            dc[(i, i)] = -s;
        }
        let dz = dc * (2.0 / h);
        let mut sys = dz.clone();
        for j in 0..=nz {
            sys[(nz, j)] = if j == nz { 1.0 } else { 0.0 };
        }
        let mut rhs_sel = DMatrix::<f64>::identity(nz + 1, nz + 1);
        rhs_sel[(nz, nz)] = 0.0;
        let antiderivative = sys.lu().solve(&rhs_sel).unwrap();
        let eye = DMatrix::<f64>::identity(n, n);
        let dx = d1.kronecker(&eye);
        let dy = eye.kronecker(&d1);
        let lap = &dx * &dx + &dy * &dy;
        let lap_pinv = lap.pseudo_inverse(1e-9).unwrap();
        Self {
            n,
            nzp: nz + 1,
            dx,
            dy,
            dz,
            antiderivative,
            lap_pinv,
            h,
        }
    }

    pub fn idx(&self, col: usize, iz: usize) -> usize {
        col * self.nzp + iz
    }

    pub fn horizontal(&self, m: &DMatrix<f64>, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for iz in 0..self.nzp {
            let v = DVector::from_iterator(self.n * self.n, (0..self.n * self.n).map(|c| f[self.idx(c, iz)]));
            let r = m * v;
            for c in 0..self.n * self.n {
                out[self.idx(c, iz)] = r[c];
            }
        }
        out
    }

    pub fn vertical(&self, m: &DMatrix<f64>, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for c in 0..self.n * self.n {
            let v = DVector::from_column_slice(&f[c * self.nzp..(c + 1) * self.nzp]);
            let r = m * v;
            out[c * self.nzp..(c + 1) * self.nzp].copy_from_slice(r.as_slice());
        }
        out
    }

    pub fn w(&self, v: &[Vec<f64>; 2]) -> Vec<f64> {
        let div: Vec<f64> = self
            .horizontal(&self.dx, &v[0])
            .iter()
            .zip(self.horizontal(&self.dy, &v[1]))
            .map(|(a, b)| a + b)
            .collect();
        self.vertical(&self.antiderivative, &div).iter().map(|x| -x).collect()
    }

    pub fn project(&self, v: &[Vec<f64>; 2]) -> [Vec<f64>; 2] {
        let nn = self.n * self.n;
        let mean = |f: &[f64]| -> DVector<f64> {
            DVector::from_iterator(nn, (0..nn).map(|c| self.antiderivative.row(0).iter().zip(&f[c * self.nzp..(c + 1) * self.nzp]).map(|(a, b)| a * b).sum::<f64>() / self.h))
        };
        let (m1, m2) = (mean(&v[0]), mean(&v[1]));
        let div = &self.dx * m1 + &self.dy * m2;
        let phi = &self.lap_pinv * div;
        let (g1, g2) = (&self.dx * &phi, &self.dy * &phi);
        let mut out = v.clone();
        for c in 0..nn {
            for iz in 0..self.nzp {
                out[0][self.idx(c, iz)] -= g1[c];
                out[1][self.idx(c, iz)] -= g2[c];
            }
        }
        out
    }

    pub fn advection(&self, v: &[Vec<f64>; 2], vp: &[Vec<f64>; 2]) -> [Vec<f64>; 2] {
        let w = self.w(v);
        let mut out = [vec![0.0; v[0].len()], vec![0.0; v[0].len()]];
        for c in 0..2 {
            let (ax, ay, az) = (
                self.horizontal(&self.dx, &vp[c]),
                self.horizontal(&self.dy, &vp[c]),
                self.vertical(&self.dz, &vp[c]),
            );
            for i in 0..out[c].len() {
                out[c][i] = v[0][i] * ax[i] + v[1][i] * ay[i] + w[i] * az[i];
            }
        }
        out
    }

    pub fn apply_a(&self, p: &PhysicalParams, ve: &[Vec<f64>; 2], dve: &[Vec<f64>; 2], v: &[Vec<f64>; 2]) -> [Vec<f64>; 2] {
        let w = self.w(v);
        let mut out = [vec![0.0; v[0].len()], vec![0.0; v[0].len()]];
        for c in 0..2 {
            let lap = self.horizontal(&(&self.dx * &self.dx + &self.dy * &self.dy), &v[c]);
            let zz = self.vertical(&(&self.dz * &self.dz), &v[c]);
            let (ax, ay) = (self.horizontal(&self.dx, &v[c]), self.horizontal(&self.dy, &v[c]));
            for col in 0..self.n * self.n {
                for iz in 0..self.nzp {
                    let i = self.idx(col, iz);
                    let perp = if c == 0 { -v[1][i] } else { v[0][i] };
                    out[c][i] = p.nu_h * lap[i] + p.nu_z * zz[i]
                        - (ve[0][iz] * ax[i] + ve[1][iz] * ay[i])
                        - w[i] * dve[c][iz]
                        - p.f * perp;
                }
            }
        }
        self.project(&out)
    }
}


/// `-min (nu_H |k|^2 + nu_z mu_j)` over the box modes, with
/// `mu_j = ((2j+1) pi / 2h)^2` from `-phi'' = mu phi`, `phi'(0) = 0`,
/// `phi(-h) = 0`.
pub fn diffusion_oracle(p: &PhysicalParams, kmax: i32) -> f64 {
    let mut best = f64::INFINITY;
    for mx in -kmax..=kmax {
        for my in -kmax..=kmax {
            let k2 = (2.0 * PI * mx as f64 / p.l_x).powi(2) + (2.0 * PI * my as f64 / p.l_y).powi(2);
            for j in 0..4 {
                let mu = ((2 * j + 1) as f64 * PI / (2.0 * p.h)).powi(2);
                best = best.min(p.nu_h * k2 + p.nu_z * mu);
            }
        }
    }
    -best
}

//! Fourier(x, y) x Chebyshev-Lobatto(z) discretization of `T^2 x (-h, 0)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("{axis} mode count {n} must be even and >= 8")]
    HorizontalModes { axis: &'static str, n: usize },
    #[error("vertical degree {0} must be >= 16")]
    VerticalDegree(usize),
    #[error("geometry {name} = {value} must be finite and > 0")]
    Geometry { name: &'static str, value: f64 },
}

/// Dense row-major square operator acting on vertical profiles.
#[derive(Clone, Debug)]
pub struct VerticalOp {
    n: usize,
    data: Vec<f64>,
}

impl VerticalOp {
    pub(crate) fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub(crate) fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), |i, j| m[(i, j)])
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn compose(&self, other: &VerticalOp) -> VerticalOp {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        VerticalOp { n, data: out }
    }

    /// `out = self * x` for a real-operator acting on a generic scalar profile.
    #[inline]
    pub fn apply<T>(&self, x: &[T], out: &mut [T])
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        debug_assert_eq!(x.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = T::default();
            for (a, &v) in row.iter().zip(x) {
                acc = acc + v * *a;
            }
            *o = acc;
        }
    }
}

/// Chebyshev points `x_j = cos(pi j / n)` and the associated transforms.
pub mod cheb {
    use super::*;

    pub fn lobatto(n: usize) -> Vec<f64> {
        // sin form keeps the points exactly antisymmetric
        (0..=n)
            .map(|j| (PI * (n as f64 - 2.0 * j as f64) / (2.0 * n as f64)).sin())
            .collect()
    }

    /// Values at Lobatto points -> Chebyshev coefficients.
    pub fn values_to_coefs(n: usize) -> VerticalOp {
        let nf = n as f64;
        VerticalOp::from_fn(n + 1, |k, j| {
            let ck = if k == 0 || k == n { 2.0 } else { 1.0 };
            let cj = if j == 0 || j == n { 2.0 } else { 1.0 };
            let angle = PI * ((k * j) % (2 * n)) as f64 / nf;
            2.0 / (nf * ck * cj) * angle.cos()
        })
    }

    pub fn coefs_to_values(n: usize) -> VerticalOp {
        let nf = n as f64;
        VerticalOp::from_fn(n + 1, |j, k| (PI * ((k * j) % (2 * n)) as f64 / nf).cos())
    }

    /// Derivative in coefficient space, `d/dx` on `[-1, 1]`.
    pub fn diff_coefs(a: &[f64]) -> Vec<f64> {
        let n = a.len() - 1;
        let mut b = vec![0.0; n + 1];
        if n == 0 {
            return b;
        }
        b[n - 1] = 2.0 * n as f64 * a[n];
        for k in (1..n - 1).rev() {
            b[k] = b[k + 2] + 2.0 * (k + 1) as f64 * a[k + 1];
        }
        if n >= 2 {
            b[0] = 0.5 * b[2] + a[1];
        } else {
            b[0] = a[1];
        }
        b
    }

    /// Collocation differentiation matrix on `[-1, 1]` (Lobatto order, `x_0 = 1`).
    pub fn diff_matrix(n: usize) -> VerticalOp {
        let nf = n as f64;
        let c = |i: usize| if i == 0 || i == n { 2.0 } else { 1.0 };
        let mut d = vec![0.0; (n + 1) * (n + 1)];
        for i in 0..=n {
            let mut row_sum = 0.0;
            for j in 0..=n {
                if i == j {
                    continue;
                }
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                // x_i - x_j = 2 sin(pi (j + i) / 2n) sin(pi (j - i) / 2n)
                let diff = 2.0
                    * (PI * (i + j) as f64 / (2.0 * nf)).sin()
                    * (PI * (j as f64 - i as f64) / (2.0 * nf)).sin();
                let v = c(i) / c(j) * sign / diff;
                d[i * (n + 1) + j] = v;
                row_sum += v;
            }
            d[i * (n + 1) + i] = -row_sum;
        }
        VerticalOp { n: n + 1, data: d }
    }

    /// Clenshaw-Curtis weights on `[-1, 1]`.
    pub fn clenshaw_curtis(n: usize) -> Vec<f64> {
        let v2c = values_to_coefs(n);
        (0..=n)
            .map(|j| {
                (0..=n)
                    .step_by(2)
                    .map(|k| v2c.get(k, j) * 2.0 / (1.0 - (k * k) as f64))
                    .sum()
            })
            .collect()
    }

    /// Antiderivative vanishing at `x = -1`, evaluated exactly at the Lobatto
    /// points for polynomial data of degree `n`.
    pub fn integration_matrix(n: usize) -> VerticalOp {
        let v2c = values_to_coefs(n);
        let nf = n as f64;
        let t_at = |k: usize, j: usize| (PI * ((k * j) % (2 * n)) as f64 / nf).cos();
        let mut out = vec![0.0; (n + 1) * (n + 1)];
        for col in 0..=n {
            let a: Vec<f64> = (0..=n).map(|k| v2c.get(k, col)).collect();
            let coef = |k: usize| if k <= n { a[k] } else { 0.0 };
            // b_k = (c_{k-1} a_{k-1} - a_{k+1}) / 2k with c_0 = 2
            let mut b = vec![0.0; n + 2];
            for k in 1..=n + 1 {
                let prev = if k == 1 { 2.0 * coef(0) } else { coef(k - 1) };
                b[k] = (prev - coef(k + 1)) / (2.0 * k as f64);
            }
            // value at x = -1: T_k(-1) = (-1)^k
            let at_minus_one: f64 = (1..=n + 1)
                .map(|k| if k % 2 == 0 { b[k] } else { -b[k] })
                .sum();
            b[0] = -at_minus_one;
            for j in 0..=n {
                let mut s = b[0];
                for (k, bk) in b.iter().enumerate().skip(1) {
                    // T_{n+1}(x_j) = cos(pi (n+1) j / n)
                    let t = if k <= n {
                        t_at(k, j)
                    } else {
                        (PI * (((n + 1) * j) % (2 * n)) as f64 / nf).cos()
                    };
                    s += bk * t;
                }
                out[j * (n + 1) + col] = s;
            }
        }
        VerticalOp { n: n + 1, data: out }
    }
}

/// Tensor grid with cached wavenumbers, vertical operators, and FFT plans.
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    /// Vertical polynomial degree; there are `nz + 1` Lobatto points.
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub h: f64,
    /// Integer mode numbers in FFT order.
    pub mx: Vec<i64>,
    pub my: Vec<i64>,
    /// Angular wavenumbers `2 pi m / L` (1/m); zero at Nyquist for derivatives.
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    /// Lobatto heights, `z[0] = 0`, `z[nz] = -h`.
    pub z: Vec<f64>,
    /// Clenshaw-Curtis weights summing to `h`.
    pub weights: Vec<f64>,
    /// `d/dz` on nodal values.
    pub dz: VerticalOp,
    /// `d^2/dz^2` on nodal values.
    pub dz2: VerticalOp,
    /// `int_{-h}^{z} . dxi` on nodal values.
    pub integral: VerticalOp,
    pub to_coefs: VerticalOp,
    pub from_coefs: VerticalOp,
    pub(crate) fft_x: Arc<dyn Fft<f64>>,
    pub(crate) ifft_x: Arc<dyn Fft<f64>>,
    pub(crate) fft_y: Arc<dyn Fft<f64>>,
    pub(crate) ifft_y: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("nz", &self.nz)
            .field("lx", &self.lx)
            .field("ly", &self.ly)
            .field("h", &self.h)
            .finish()
    }
}

fn mode_numbers(n: usize) -> Vec<i64> {
    (0..n)
        .map(|i| if i < n / 2 { i as i64 } else { i as i64 - n as i64 })
        .collect()
}

impl Grid {
    pub fn new(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, h: f64) -> Result<Arc<Grid>, GridError> {
        for (axis, n) in [("x", nx), ("y", ny)] {
            if n < 8 || n % 2 != 0 {
                return Err(GridError::HorizontalModes { axis, n });
            }
        }
        if nz < 16 {
            return Err(GridError::VerticalDegree(nz));
        }
        for (name, value) in [("lx", lx), ("ly", ly), ("h", h)] {
            if !value.is_finite() || value <= 0.0 {
                return Err(GridError::Geometry { name, value });
            }
        }
        let mx = mode_numbers(nx);
        let my = mode_numbers(ny);
        let wave = |m: &[i64], n: usize, l: f64| -> Vec<f64> {
            m.iter()
                .map(|&m| {
                    if m == -(n as i64) / 2 {
                        0.0
                    } else {
                        2.0 * PI * m as f64 / l
                    }
                })
                .collect()
        };
        let kx = wave(&mx, nx, lx);
        let ky = wave(&my, ny, ly);

        let x = cheb::lobatto(nz);
        let z: Vec<f64> = x.iter().map(|&x| 0.5 * h * (x - 1.0)).collect();
        let weights: Vec<f64> = cheb::clenshaw_curtis(nz).iter().map(|w| 0.5 * h * w).collect();
        let scale = 2.0 / h;
        let dx = cheb::diff_matrix(nz);
        let dz = VerticalOp::from_fn(nz + 1, |i, j| scale * dx.get(i, j));
        let dz2 = dz.compose(&dz);
        let ix = cheb::integration_matrix(nz);
        let integral = VerticalOp::from_fn(nz + 1, |i, j| 0.5 * h * ix.get(i, j));

        let mut planner = FftPlanner::new();
        Ok(Arc::new(Grid {
            nx,
            ny,
            nz,
            lx,
            ly,
            h,
            mx,
            my,
            kx,
            ky,
            z,
            weights,
            dz,
            dz2,
            integral,
            to_coefs: cheb::values_to_coefs(nz),
            from_coefs: cheb::coefs_to_values(nz),
            fft_x: planner.plan_fft_forward(nx),
            ifft_x: planner.plan_fft_inverse(nx),
            fft_y: planner.plan_fft_forward(ny),
            ifft_y: planner.plan_fft_inverse(ny),
        }))
    }

    /// Number of vertical points.
    #[inline]
    pub fn nzp(&self) -> usize {
        self.nz + 1
    }

    #[inline]
    pub fn modes(&self) -> usize {
        self.nx * self.ny
    }

    /// Values per component.
    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * (self.nz + 1)
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.ny + iy) * (self.nz + 1) + iz
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.lx * ix as f64 / self.nx as f64
    }

    pub fn y(&self, iy: usize) -> f64 {
        self.ly * iy as f64 / self.ny as f64
    }

    /// `|k|^2` of the mode at flat index `m = ix * ny + iy`.
    #[inline]
    pub fn k2(&self, mode: usize) -> f64 {
        let kx = self.kx[mode / self.ny];
        let ky = self.ky[mode % self.ny];
        kx * kx + ky * ky
    }

    #[inline]
    pub fn wavevector(&self, mode: usize) -> (f64, f64) {
        (self.kx[mode / self.ny], self.ky[mode % self.ny])
    }

    /// Inside the 2/3-rule band.
    #[inline]
    pub fn resolved(&self, mode: usize) -> bool {
        let mx = self.mx[mode / self.ny].unsigned_abs() as usize;
        let my = self.my[mode % self.ny].unsigned_abs() as usize;
        3 * mx <= self.nx && 3 * my <= self.ny
    }

    pub fn volume(&self) -> f64 {
        self.lx * self.ly * self.h
    }

    /// Horizontal cell area of one collocation column.
    pub fn cell_area(&self) -> f64 {
        self.lx * self.ly / (self.nx * self.ny) as f64
    }

    pub fn min_horizontal_spacing(&self) -> f64 {
        (self.lx / self.nx as f64).min(self.ly / self.ny as f64)
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.nz == other.nz
            && self.lx == other.lx
            && self.ly == other.ly
            && self.h == other.h
    }
}

//! Physical parameters and the closed-form Ekman spiral of finite depth.
//!
//! The spiral solves `nu_z * v'' = f * v^perp` on `[-h, 0]` with the wind
//! condition `v'(0) = tau` and the geostrophic condition `v(-h) = v_g`.
//! Wind "stress" is carried in shear units (1/s): no division by
//! `rho0 * nu_z` is ever applied.

use thiserror::Error;

/// Largest admissible `2h/d`; beyond it `e^{2h/d}` leaves the f64 range
/// of the smallness constant.
pub const MAX_DEPTH_RATIO: f64 = 600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("Ekman thickness undefined: Coriolis parameter f is zero")]
    ZeroCoriolis,
    #[error("parameter {name} = {value} violates: {constraint}")]
    Invalid {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("depth ratio 2h/d = {ratio} exceeds {MAX_DEPTH_RATIO}")]
    DepthRatioOutOfRange { ratio: f64 },
    #[error("height z = {z} outside [-h, 0] with h = {h}")]
    HeightOutOfRange { z: f64, h: f64 },
}

/// One physical scenario on the periodic layer `T^2 x (-h, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Horizontal viscosity (m^2/s).
    pub nu_h: f64,
    /// Vertical viscosity (m^2/s).
    pub nu_z: f64,
    /// Coriolis parameter (1/s).
    pub f: f64,
    pub rho0: f64,
    pub g: f64,
    /// Layer depth (m).
    pub h: f64,
    /// Surface shear `dv/dz` at `z = 0` (1/s).
    pub tau: [f64; 2],
    /// Geostrophic velocity at `z = -h` (m/s).
    pub v_g: [f64; 2],
    pub l_x: f64,
    pub l_y: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("nu_h", self.nu_h),
            ("nu_z", self.nu_z),
            ("h", self.h),
            ("rho0", self.rho0),
            ("g", self.g),
            ("l_x", self.l_x),
            ("l_y", self.l_y),
        ];
        for (name, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(ModelError::Invalid {
                    name,
                    value,
                    constraint: "must be finite and > 0",
                });
            }
        }
        let finite = [
            ("f", self.f),
            ("tau1", self.tau[0]),
            ("tau2", self.tau[1]),
            ("vg1", self.v_g[0]),
            ("vg2", self.v_g[1]),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(ModelError::Invalid {
                    name,
                    value,
                    constraint: "must be finite",
                });
            }
        }
        if self.f == 0.0 {
            return Err(ModelError::ZeroCoriolis);
        }
        Ok(())
    }

    /// Same scenario with the boundary data replaced.
    pub fn with_forcing(self, tau: [f64; 2], v_g: [f64; 2]) -> Self {
        Self { tau, v_g, ..self }
    }
}

/// Ekman layer thickness `d = sqrt(2 nu_z / |f|)`.
pub fn layer_thickness(params: &PhysicalParams) -> Result<f64, ModelError> {
    if params.f == 0.0 {
        return Err(ModelError::ZeroCoriolis);
    }
    if !(params.nu_z > 0.0) || !params.nu_z.is_finite() {
        return Err(ModelError::Invalid {
            name: "nu_z",
            value: params.nu_z,
            constraint: "must be finite and > 0",
        });
    }
    Ok((2.0 * params.nu_z / params.f.abs()).sqrt())
}

/// The finite-depth Ekman spiral.
///
/// For `f > 0` the profile is
///
/// ```text
/// v1 = k1 sin(s) e^-s + k2 cos(s) e^-s + k3 sin(s) e^s + k4 cos(s) e^s
/// v2 = k1 cos(s) e^-s - k2 sin(s) e^-s - k3 cos(s) e^s + k4 sin(s) e^s
/// ```
///
/// with `s = z/d`. For `f < 0` the coefficients describe the mirror problem
/// `(v1, v2) -> (v1, -v2)`, which turns the rotation sense around; the
/// evaluators undo the mirror.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkmanSolution {
    pub k: [f64; 4],
    pub d: f64,
    pub params: PhysicalParams,
    mirror: f64,
}

/// Computes `k1..k4` from the closed form.
///
/// The expressions are rescaled by `e^{-4h/d}` so they stay finite up to
/// `2h/d = 600`.
pub fn ekman_coefficients(params: &PhysicalParams) -> Result<EkmanSolution, ModelError> {
    params.validate()?;
    let d = layer_thickness(params)?;
    let ratio = 2.0 * params.h / d;
    if ratio > MAX_DEPTH_RATIO {
        return Err(ModelError::DepthRatioOutOfRange { ratio });
    }
    let mirror = params.f.signum();
    let tau = [params.tau[0], mirror * params.tau[1]];
    let vg = [params.v_g[0], mirror * params.v_g[1]];

    let s = params.h / d;
    let (sin1, cos1) = s.sin_cos();
    let (sin2, cos2) = (2.0 * s).sin_cos();
    let q = (-s).exp();
    let e = q * q;
    let den = 2.0 * (1.0 + 2.0 * e * cos2 + e * e);

    let k1 = (-2.0 * q * (1.0 - e) * sin1 * vg[0]
        + 2.0 * q * (1.0 + e) * cos1 * vg[1]
        + d * (e * sin2 + e * cos2 + e * e) * tau[0]
        - d * (-e * sin2 + e * cos2 + e * e) * tau[1])
        / den;
    // Sign fixed against the boundary-condition solve; the commonly quoted
    // expression has the opposite overall sign.
    let k2 = (2.0 * q * (1.0 + e) * cos1 * vg[0] + 2.0 * q * (1.0 - e) * sin1 * vg[1]
        - d * (-e * sin2 + e * cos2 + e * e) * tau[0]
        - d * (e * sin2 + e * cos2 + e * e) * tau[1])
        / den;
    let k3 = (2.0 * q * (1.0 - e) * sin1 * vg[0] - 2.0 * q * (1.0 + e) * cos1 * vg[1]
        + d * (1.0 - e * sin2 + e * cos2) * tau[0]
        - d * (1.0 + e * sin2 + e * cos2) * tau[1])
        / den;
    let k4 = (2.0 * q * (1.0 + e) * cos1 * vg[0]
        + 2.0 * q * (1.0 - e) * sin1 * vg[1]
        + d * (1.0 + e * sin2 + e * cos2) * tau[0]
        + d * (1.0 - e * sin2 + e * cos2) * tau[1])
        / den;

    Ok(EkmanSolution {
        k: [k1, k2, k3, k4],
        d,
        params: *params,
        mirror,
    })
}

impl EkmanSolution {
    /// Builds a solution from raw coefficients (rotation sense taken from `params.f`).
    pub fn from_coefficients(params: &PhysicalParams, k: [f64; 4]) -> Result<Self, ModelError> {
        let d = layer_thickness(params)?;
        Ok(Self {
            k,
            d,
            params: *params,
            mirror: params.f.signum(),
        })
    }

    pub fn depth(&self) -> f64 {
        self.params.h
    }

    fn check_height(&self, z: f64) -> Result<(), ModelError> {
        let h = self.params.h;
        let slack = 1e-12 * h;
        if !(z >= -h - slack && z <= slack) {
            return Err(ModelError::HeightOutOfRange { z, h });
        }
        Ok(())
    }

    pub fn profile(&self, z: f64) -> Result<[f64; 2], ModelError> {
        self.check_height(z)?;
        Ok(self.profile_unchecked(z))
    }

    pub fn derivative(&self, z: f64) -> Result<[f64; 2], ModelError> {
        self.check_height(z)?;
        Ok(self.derivative_unchecked(z))
    }

    pub(crate) fn profile_unchecked(&self, z: f64) -> [f64; 2] {
        let [k1, k2, k3, k4] = self.k;
        let s = z / self.d;
        let (sn, cs) = s.sin_cos();
        let em = (-s).exp();
        let ep = s.exp();
        let v1 = k1 * sn * em + k2 * cs * em + k3 * sn * ep + k4 * cs * ep;
        let v2 = k1 * cs * em - k2 * sn * em - k3 * cs * ep + k4 * sn * ep;
        [v1, self.mirror * v2]
    }

    pub(crate) fn derivative_unchecked(&self, z: f64) -> [f64; 2] {
        let [k1, k2, k3, k4] = self.k;
        let s = z / self.d;
        let (sn, cs) = s.sin_cos();
        let em = (-s).exp();
        let ep = s.exp();
        let dv1 = k1 * (cs - sn) * em + k2 * (-sn - cs) * em + k3 * (sn + cs) * ep + k4 * (-sn + cs) * ep;
        let dv2 = k1 * (-sn - cs) * em + k2 * (sn - cs) * em + k3 * (sn - cs) * ep + k4 * (sn + cs) * ep;
        [dv1 / self.d, self.mirror * dv2 / self.d]
    }

    /// Full-system equilibrium pressure `-rho0 g z`.
    pub fn pressure(&self, z: f64) -> f64 {
        -self.params.rho0 * self.params.g * z
    }

    /// The bracket shared by the derivative bound and `C_E`.
    fn spiral_weight(&self) -> f64 {
        let [k1, k2, k3, k4] = self.k;
        let growth = (2.0 * self.params.h / self.d).exp();
        (k1 * k1 + k2 * k2) * growth
            + (k3 * k3 + k4 * k4)
            + 2.0 * (k1 * k3 - k2 * k4).abs()
            + 2.0 * (k2 * k3 + k1 * k4).abs()
    }
}

/// Upper bound on `sup_z |dv_E/dz|^2` over `[-h, 0]`.
pub fn sup_derivative_bound(sol: &EkmanSolution) -> f64 {
    2.0 / (sol.d * sol.d) * sol.spiral_weight()
}

/// The smallness constant and its verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smallness {
    pub c_e: f64,
    pub stable: bool,
}

/// `C_E = |f| h^4 / (2 nu_h nu_z^2) * (...)`; the stable regime is `C_E < 1`.
pub fn smallness_constant(params: &PhysicalParams) -> Result<Smallness, ModelError> {
    let sol = ekman_coefficients(params)?;
    Ok(smallness_of(&sol))
}

pub fn smallness_of(sol: &EkmanSolution) -> Smallness {
    let p = &sol.params;
    let c_e = p.f.abs() * p.h.powi(4) / (2.0 * p.nu_h * p.nu_z * p.nu_z) * sol.spiral_weight();
    Smallness {
        c_e,
        stable: c_e < 1.0,
    }
}

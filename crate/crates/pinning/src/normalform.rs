//! The perturbed normal-form vector fields, coordinate and parameter
//! transforms, and symmetry/scaling reductions.
//!
//! The family is `dz/dt = z (mu + i nu - c |z|^2) + eps * g(z, zbar)` with
//! `c = sin(alpha0) + i cos(alpha0)` (modulus one by construction; a general
//! `|c| != 1` is recovered by rescaling `z`, which we leave to the caller).
//! Each [`PerturbationKind`] selects one symmetry-breaking monomial `g`;
//! the kinds are mutually exclusive per model instance.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Radius below which polar right-hand sides are evaluated through the
/// Cartesian field to sidestep the removable `1/r` coordinate singularity.
pub const POLAR_SINGULARITY_RADIUS: f64 = 1e-9;

/// Which symmetry-breaking monomial multiplies `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbationKind {
    /// No perturbation: the SO(2)-equivariant system.
    None,
    /// Constant term `1` (monomial order p = 0).
    Const,
    /// `z * zbar = |z|^2` (p = 2, q = 1).
    Mixed,
    /// `z^2` (p = q = 2).
    Quadratic,
    /// `zbar^(m-1)`, the lowest-order monomial leaving a residual Z_m
    /// symmetry; m = 2 is the `zbar` case and m = 3 the `zbar^2` case.
    ZmResidual(u32),
}

impl PerturbationKind {
    /// Total monomial order p of the perturbation, `None` for the
    /// unperturbed kind.
    pub fn monomial_order(&self) -> Option<u32> {
        match self {
            PerturbationKind::None => None,
            PerturbationKind::Const => Some(0),
            PerturbationKind::Mixed | PerturbationKind::Quadratic => Some(2),
            PerturbationKind::ZmResidual(m) => Some(m - 1),
        }
    }

    /// Order m of the residual rotation symmetry Z_m (1 when nothing
    /// survives, `None` for the full SO(2) of the unperturbed kind).
    pub fn residual_symmetry(&self) -> Option<u32> {
        match self {
            PerturbationKind::None => None,
            PerturbationKind::Const | PerturbationKind::Mixed | PerturbationKind::Quadratic => {
                Some(1)
            }
            PerturbationKind::ZmResidual(m) => Some(*m),
        }
    }

    fn validate(&self) -> Result<()> {
        if let PerturbationKind::ZmResidual(m) = self {
            if *m < 2 {
                return Err(Error::InvalidParameter(format!(
                    "ZmResidual requires m >= 2, got m = {m}"
                )));
            }
        }
        Ok(())
    }
}

/// A point in parameter space plus the perturbation selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Unfolding parameter.
    pub mu: f64,
    /// Detuning (the small remnant of the Hopf frequency).
    pub nu: f64,
    /// Tilt angle in radians, open interval (0, pi/2); `a = sin(alpha0)`,
    /// `b = cos(alpha0)`.
    pub alpha0: f64,
    /// Imperfection amplitude, >= 0. `epsilon = 0` reduces every kind to
    /// the SO(2)-symmetric system.
    pub epsilon: f64,
    pub kind: PerturbationKind,
}

impl ModelParams {
    pub fn new(
        mu: f64,
        nu: f64,
        alpha0: f64,
        epsilon: f64,
        kind: PerturbationKind,
    ) -> Result<Self> {
        if !(mu.is_finite() && nu.is_finite() && alpha0.is_finite() && epsilon.is_finite()) {
            return Err(Error::NonFinite("model parameters must be finite".into()));
        }
        if !(alpha0 > 0.0 && alpha0 < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParameter(format!(
                "alpha0 must lie in the open interval (0, pi/2), got {alpha0}"
            )));
        }
        if epsilon < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be >= 0, got {epsilon}"
            )));
        }
        kind.validate()?;
        Ok(ModelParams {
            mu,
            nu,
            alpha0,
            epsilon,
            kind,
        })
    }

    /// The unperturbed SO(2)-symmetric system.
    pub fn symmetric(mu: f64, nu: f64, alpha0: f64) -> Result<Self> {
        Self::new(mu, nu, alpha0, 0.0, PerturbationKind::None)
    }

    /// `a = sin(alpha0)`.
    pub fn a(&self) -> f64 {
        self.alpha0.sin()
    }

    /// `b = cos(alpha0)`.
    pub fn b(&self) -> f64 {
        self.alpha0.cos()
    }

    /// The cubic coefficient `c = a + i b`.
    pub fn c(&self) -> Complex64 {
        Complex64::new(self.a(), self.b())
    }

    /// Parameter-plane coordinates rotated so the zero-frequency line L is
    /// `v = 0`.
    pub fn uv(&self) -> UVPoint {
        to_uv(self.mu, self.nu, self.alpha0)
    }

    /// Same parameters at a different `(mu, nu)`.
    pub fn at(&self, mu: f64, nu: f64) -> Self {
        ModelParams { mu, nu, ..*self }
    }

    /// Same parameters at a different `(u, v)`.
    pub fn at_uv(&self, u: f64, v: f64) -> Self {
        let (mu, nu) = from_uv(UVPoint { u, v }, self.alpha0);
        self.at(mu, nu)
    }
}

/// Phase-space state, the Cartesian components of `z = x + i y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
}

impl State {
    pub fn new(x: f64, y: f64) -> Self {
        State { x, y }
    }

    pub fn from_polar(r: f64, phi: f64) -> Self {
        State {
            x: r * phi.cos(),
            y: r * phi.sin(),
        }
    }

    pub fn r(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Phase in [0, 2*pi).
    pub fn phi(&self) -> f64 {
        let p = self.y.atan2(self.x);
        if p < 0.0 {
            p + std::f64::consts::TAU
        } else {
            p
        }
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }

    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        State {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    pub fn dist(&self, other: &State) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Parameter-plane coordinates `(u, v) = (a mu + b nu, a nu - b mu)`,
/// rotated by `alpha0` so the line L is `v = 0` and `u` is the distance
/// along L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UVPoint {
    pub u: f64,
    pub v: f64,
}

/// Rotate `(mu, nu)` into the frame adapted to the line L.
pub fn to_uv(mu: f64, nu: f64, alpha0: f64) -> UVPoint {
    let (a, b) = (alpha0.sin(), alpha0.cos());
    UVPoint {
        u: a * mu + b * nu,
        v: a * nu - b * mu,
    }
}

/// Inverse of [`to_uv`].
pub fn from_uv(uv: UVPoint, alpha0: f64) -> (f64, f64) {
    let (a, b) = (alpha0.sin(), alpha0.cos());
    (a * uv.u - b * uv.v, b * uv.u + a * uv.v)
}

/// The perturbation monomial `g(z, zbar)` multiplying `eps`.
fn perturbation_monomial(kind: PerturbationKind, z: Complex64) -> Complex64 {
    match kind {
        PerturbationKind::None => Complex64::new(0.0, 0.0),
        PerturbationKind::Const => Complex64::new(1.0, 0.0),
        PerturbationKind::Mixed => Complex64::new(z.norm_sqr(), 0.0),
        PerturbationKind::Quadratic => z * z,
        PerturbationKind::ZmResidual(m) => z.conj().powu(m - 1),
    }
}

/// Derivative of `g` with respect to `x` and to `y`.
fn perturbation_gradient(kind: PerturbationKind, z: Complex64) -> (Complex64, Complex64) {
    let i = Complex64::new(0.0, 1.0);
    match kind {
        PerturbationKind::None | PerturbationKind::Const => {
            (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
        }
        PerturbationKind::Mixed => (
            Complex64::new(2.0 * z.re, 0.0),
            Complex64::new(2.0 * z.im, 0.0),
        ),
        PerturbationKind::Quadratic => (2.0 * z, 2.0 * i * z),
        PerturbationKind::ZmResidual(m) => {
            let k = f64::from(m - 1);
            let w = z.conj().powu(m.saturating_sub(2));
            (k * w, -i * k * w)
        }
    }
}

/// Right-hand side without input validation, for hot loops.
#[inline]
pub fn rhs_unchecked(params: &ModelParams, state: State) -> State {
    let z = state.as_complex();
    let lin = Complex64::new(params.mu, params.nu);
    let dz = z * (lin - params.c() * z.norm_sqr())
        + params.epsilon * perturbation_monomial(params.kind, z);
    State { x: dz.re, y: dz.im }
}

/// Right-hand side `(dx/dt, dy/dt)` of the normal form.
///
/// Rejects non-finite states with a domain error.
pub fn rhs(params: &ModelParams, state: State) -> Result<State> {
    if !state.is_finite() {
        return Err(Error::NonFinite(format!(
            "state ({}, {}) is not finite",
            state.x, state.y
        )));
    }
    Ok(rhs_unchecked(params, state))
}

/// Polar right-hand side `(dr/dt, dphi/dt)`.
///
/// For `r < POLAR_SINGULARITY_RADIUS` the value is derived from the
/// Cartesian field with the radius floored, since the `1/r` singularity in
/// `dphi/dt` is a coordinate artifact.
pub fn rhs_polar(params: &ModelParams, r: f64, phi: f64) -> Result<(f64, f64)> {
    if !(r.is_finite() && phi.is_finite()) {
        return Err(Error::NonFinite("polar state must be finite".into()));
    }
    if r < 0.0 {
        return Err(Error::Domain(format!("radius must be >= 0, got {r}")));
    }
    let state = State::from_polar(r, phi);
    let d = rhs_unchecked(params, state);
    let r_eff = r.max(POLAR_SINGULARITY_RADIUS);
    let dr = (state.x * d.x + state.y * d.y) / r_eff;
    let dphi = (state.x * d.y - state.y * d.x) / (r_eff * r_eff);
    Ok((dr, dphi))
}

/// Analytic Jacobian of [`rhs`] as a real 2x2 matrix.
pub fn jacobian(params: &ModelParams, state: State) -> Result<nalgebra::Matrix2<f64>> {
    if !state.is_finite() {
        return Err(Error::NonFinite(format!(
            "state ({}, {}) is not finite",
            state.x, state.y
        )));
    }
    let z = state.as_complex();
    let i = Complex64::new(0.0, 1.0);
    let lin = Complex64::new(params.mu, params.nu);
    let c = params.c();
    // d/dx and d/dy of z*(mu + i nu) - c z^2 zbar.
    let dzx = lin - c * (2.0 * z * z.conj() + z * z);
    let dzy = i * lin - c * i * (2.0 * z * z.conj() - z * z);
    let (gx, gy) = perturbation_gradient(params.kind, z);
    let col_x = dzx + params.epsilon * gx;
    let col_y = dzy + params.epsilon * gy;
    Ok(nalgebra::Matrix2::new(
        col_x.re, col_y.re, col_x.im, col_y.im,
    ))
}

/// The epsilon-scaling reduction to the canonical `eps = 1` system.
///
/// With `delta = 1/(3 - p)` for the kind's monomial order p, substituting
/// `z -> eps^delta z`, `t -> eps^(-2 delta) t`, `(mu, nu) ->
/// eps^(2 delta) (mu, nu)` turns the eps-system into the same normal form
/// with `eps = 1`. The scale factors map canonical quantities back to
/// physical ones: `z_phys = z_scale * z_canon`, `t_phys = t_scale *
/// t_canon`, `mu_phys = param_scale * mu_canon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonScaling {
    pub delta: f64,
    /// `eps^delta`.
    pub z_scale: f64,
    /// `eps^(-2 delta)`.
    pub t_scale: f64,
    /// `eps^(2 delta)`.
    pub param_scale: f64,
    /// The equivalent parameters with `eps = 1`.
    pub normalized: ModelParams,
}

/// Normalize the imperfection amplitude to `eps = 1`.
///
/// Requires `eps > 0` and a perturbed kind (there is no monomial to
/// normalize otherwise).
pub fn rescale_epsilon(params: &ModelParams) -> Result<EpsilonScaling> {
    if params.kind == PerturbationKind::None {
        return Err(Error::Domain(
            "rescale_epsilon needs a perturbed kind; kind = None has no monomial".into(),
        ));
    }
    if params.epsilon <= 0.0 {
        return Err(Error::Domain(format!(
            "rescale_epsilon requires epsilon > 0, got {}",
            params.epsilon
        )));
    }
    let p = f64::from(params.kind.monomial_order().unwrap());
    let delta = 1.0 / (3.0 - p);
    let z_scale = params.epsilon.powf(delta);
    let t_scale = params.epsilon.powf(-2.0 * delta);
    let param_scale = params.epsilon.powf(2.0 * delta);
    let normalized = ModelParams {
        mu: params.mu / param_scale,
        nu: params.nu / param_scale,
        epsilon: 1.0,
        ..*params
    };
    Ok(EpsilonScaling {
        delta,
        z_scale,
        t_scale,
        param_scale,
        normalized,
    })
}

/// The sign reductions landing `(a, b)` in the open quadrant `a, b > 0`.
///
/// Time reversal together with `(mu, nu) -> (-mu, -nu)` flips the sign of
/// both `a` and `b`; the conjugation `(phi, nu) -> (-phi, -nu)` flips the
/// sign of `b` alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTransform {
    /// Canonical tilt angle with `sin(alpha0) = |a_raw|`, `cos(alpha0) = |b_raw|`.
    pub alpha0: f64,
    pub time_reversed: bool,
    pub conjugated: bool,
}

impl SignTransform {
    /// Map raw-system parameters to the canonical system's.
    pub fn apply_params(&self, mu: f64, nu: f64) -> (f64, f64) {
        let (mut mu, mut nu) = (mu, nu);
        if self.time_reversed {
            mu = -mu;
            nu = -nu;
        }
        if self.conjugated {
            nu = -nu;
        }
        (mu, nu)
    }

    /// Map a raw-system state to the canonical system's phase space.
    ///
    /// Time reversal acts on time only, so here only the conjugation
    /// (`y -> -y`) matters.
    pub fn apply_state(&self, s: State) -> State {
        if self.conjugated {
            State { x: s.x, y: -s.y }
        } else {
            s
        }
    }

    /// Additional phase rotation of `z` that restores a real positive
    /// `eps` after time reversal (which flips the sign of the perturbation
    /// term). Zero when time is not reversed.
    pub fn state_phase_shift(&self, kind: PerturbationKind) -> f64 {
        if !self.time_reversed {
            return 0.0;
        }
        match kind {
            PerturbationKind::None => 0.0,
            PerturbationKind::ZmResidual(m) => std::f64::consts::PI / f64::from(m),
            _ => std::f64::consts::PI,
        }
    }
}

/// Reduce arbitrary signs of `(a, b)` (with `a^2 + b^2 = 1`) to the
/// canonical quadrant `a > 0, b > 0`.
pub fn canonicalize_signs(a_raw: f64, b_raw: f64) -> Result<SignTransform> {
    if !(a_raw.is_finite() && b_raw.is_finite()) {
        return Err(Error::NonFinite("(a, b) must be finite".into()));
    }
    if (a_raw * a_raw + b_raw * b_raw - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "(a, b) = ({a_raw}, {b_raw}) does not satisfy a^2 + b^2 = 1"
        )));
    }
    if a_raw == 0.0 || b_raw == 0.0 {
        return Err(Error::Domain(
            "degenerate tilt: a = 0 or b = 0 lies outside the open quadrant".into(),
        ));
    }
    // Time reversal flips both signs; apply it first whenever a < 0, then
    // conjugate if b is still negative.
    let time_reversed = a_raw < 0.0;
    let b_after = if time_reversed { -b_raw } else { b_raw };
    let conjugated = b_after < 0.0;
    Ok(SignTransform {
        alpha0: a_raw.abs().atan2(b_raw.abs()),
        time_reversed,
        conjugated,
    })
}

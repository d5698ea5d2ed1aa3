//! Fixed-point solvers for each perturbation case, with eigenvalue
//! classification.
//!
//! The closed forms work on the canonical `eps = 1` system; the
//! [`fixed_points`] dispatcher rescales arbitrary `eps > 0` through
//! [`rescale_epsilon`](crate::normalform::rescale_epsilon), maps the
//! solutions back and re-polishes them on the physical system, so callers
//! never have to normalize by hand.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::normalform::{
    jacobian, rescale_epsilon, rhs_unchecked, ModelParams, PerturbationKind, State,
};
use crate::{Error, Result};

/// Tolerance on |T| and |D| below which a point is reported non-hyperbolic.
pub const NONHYPERBOLIC_TOL: f64 = 1e-9;

/// Residual norm every returned equilibrium satisfies after polish.
pub const POLISH_TOL: f64 = 1e-10;

/// Roots of the radial polynomials with |rho| below this are treated as
/// coalescing with the trivial solution.
const RHO_ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityClass {
    StableNode,
    StableFocus,
    Saddle,
    UnstableNode,
    UnstableFocus,
    NonHyperbolic,
}

impl StabilityClass {
    pub fn is_stable(&self) -> bool {
        matches!(self, StabilityClass::StableNode | StabilityClass::StableFocus)
    }
}

/// Branch label. Z_m orbits share their branch label (the members of a
/// triplet are all `Pplus` or all `Pminus`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EqLabel {
    P0,
    Pplus,
    Pminus,
    PplusStar,
    PminusStar,
    Indexed(usize),
}

/// A fixed point with Jacobian invariants and stability class.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Equilibrium {
    pub position: State,
    /// Trace of the Jacobian.
    pub trace: f64,
    /// Determinant of the Jacobian.
    pub det: f64,
    /// Discriminant Q = T^2 - 4D.
    pub discriminant: f64,
    pub eigenvalues: (Complex64, Complex64),
    pub class: StabilityClass,
    pub label: EqLabel,
}

impl Equilibrium {
    pub fn r(&self) -> f64 {
        self.position.r()
    }

    pub fn phi(&self) -> f64 {
        self.position.phi()
    }
}

/// Damped Newton iteration on the full 2-D system.
///
/// Falls back to a pseudo-inverse step when the Jacobian is near singular
/// (saddle-node points), where convergence is only linear.
pub(crate) fn newton_polish(params: &ModelParams, start: State, max_iter: usize) -> Result<State> {
    let mut s = start;
    let mut fnorm = {
        let f = rhs_unchecked(params, s);
        f.x.hypot(f.y)
    };
    for _ in 0..max_iter {
        if fnorm <= 1e-13 {
            return Ok(s);
        }
        let f = rhs_unchecked(params, s);
        let j = jacobian(params, s)?;
        let det = j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(1, 0)];
        let step = if det.abs() > 1e-13 * j.norm().max(1.0).powi(2) {
            State {
                x: -(j[(1, 1)] * f.x - j[(0, 1)] * f.y) / det,
                y: -(-j[(1, 0)] * f.x + j[(0, 0)] * f.y) / det,
            }
        } else {
            let svd = nalgebra::SVD::new(j, true, true);
            let rhs_vec = nalgebra::Vector2::new(-f.x, -f.y);
            match svd.solve(&rhs_vec, 1e-13) {
                Ok(dx) => State { x: dx[0], y: dx[1] },
                Err(_) => break,
            }
        };
        // Backtracking line search.
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..10 {
            let cand = State {
                x: s.x + lambda * step.x,
                y: s.y + lambda * step.y,
            };
            let fc = rhs_unchecked(params, cand);
            let cnorm = fc.x.hypot(fc.y);
            if cnorm < fnorm {
                s = cand;
                fnorm = cnorm;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if fnorm <= POLISH_TOL {
        Ok(s)
    } else {
        Err(Error::NoConvergence(format!(
            "Newton polish stalled at residual {fnorm:.3e} from ({}, {})",
            start.x, start.y
        )))
    }
}

fn eigenvalues_from_invariants(t: f64, q: f64) -> (Complex64, Complex64) {
    if q >= 0.0 {
        let s = q.sqrt();
        (
            Complex64::new((t + s) / 2.0, 0.0),
            Complex64::new((t - s) / 2.0, 0.0),
        )
    } else {
        let w = (-q).sqrt() / 2.0;
        (Complex64::new(t / 2.0, w), Complex64::new(t / 2.0, -w))
    }
}

fn class_from_invariants(t: f64, d: f64, q: f64) -> StabilityClass {
    if d < -NONHYPERBOLIC_TOL {
        StabilityClass::Saddle
    } else if d.abs() <= NONHYPERBOLIC_TOL || t.abs() <= NONHYPERBOLIC_TOL {
        StabilityClass::NonHyperbolic
    } else if t < 0.0 {
        if q < 0.0 {
            StabilityClass::StableFocus
        } else {
            StabilityClass::StableNode
        }
    } else if q < 0.0 {
        StabilityClass::UnstableFocus
    } else {
        StabilityClass::UnstableNode
    }
}

pub(crate) fn classify_with_label(
    params: &ModelParams,
    position: State,
    label: EqLabel,
) -> Result<Equilibrium> {
    let polished = newton_polish(params, position, 60)?;
    let j = jacobian(params, polished)?;
    let t = j[(0, 0)] + j[(1, 1)];
    let d = j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(1, 0)];
    let q = t * t - 4.0 * d;
    Ok(Equilibrium {
        position: polished,
        trace: t,
        det: d,
        discriminant: q,
        eigenvalues: eigenvalues_from_invariants(t, q),
        class: class_from_invariants(t, d, q),
        label,
    })
}

/// Classify an approximate fixed point: Newton-polish it and fill the
/// Jacobian invariants, eigenvalues and stability class.
///
/// Rejects positions whose residual exceeds 1e-6 before polish.
pub fn classify(params: &ModelParams, position: State) -> Result<Equilibrium> {
    if !position.is_finite() {
        return Err(Error::NonFinite("position must be finite".into()));
    }
    let f = rhs_unchecked(params, position);
    let res = f.x.hypot(f.y);
    if res > 1e-6 {
        return Err(Error::Domain(format!(
            "position ({}, {}) is not near a zero of the vector field (residual {res:.3e} > 1e-6)",
            position.x, position.y
        )));
    }
    let label = if position.r() < 1e-9 {
        EqLabel::P0
    } else {
        EqLabel::Indexed(0)
    };
    classify_with_label(params, position, label)
}

fn require_unit_epsilon(params: &ModelParams, what: &str) -> Result<()> {
    if (params.epsilon - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "{what} expects epsilon normalized to 1 (apply rescale_epsilon first); got {}",
            params.epsilon
        )));
    }
    Ok(())
}

fn sort_equilibria(list: &mut [Equilibrium]) {
    list.sort_by(|a, b| {
        let ka = (a.r(), a.phi());
        let kb = (b.r(), b.phi());
        ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
    });
}

/// Real roots of the monic cubic `rho^3 + c2 rho^2 + c1 rho + c0` via the
/// companion matrix, each followed by two Newton polish steps. Near-double
/// complex pairs (|Im| below `1e-6`) are collapsed onto the real axis when
/// the polished residual confirms a root.
fn cubic_real_roots(c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    let companion = nalgebra::Matrix3::new(0.0, 0.0, -c0, 1.0, 0.0, -c1, 0.0, 1.0, -c2);
    let eigen = companion.complex_eigenvalues();
    let f = |r: f64| ((r + c2) * r + c1) * r + c0;
    let fp = |r: f64| (3.0 * r + 2.0 * c2) * r + c1;
    let scale = 1.0 + c2.abs() + c1.abs() + c0.abs();
    let mut roots = Vec::new();
    for lam in eigen.iter() {
        if lam.im.abs() > 1e-6 {
            continue;
        }
        let mut r = lam.re;
        // Two guarded polish steps; near the double-root locus f' vanishes
        // and an unguarded step would fling the iterate away.
        for _ in 0..2 {
            let d = fp(r);
            if d.abs() > 1e-300 {
                let cand = r - f(r) / d;
                if f(cand).abs() <= f(r).abs() {
                    r = cand;
                }
            }
        }
        if lam.im.abs() > 1e-10 {
            // Borderline pair: keep only if it truly polishes to a root.
            if f(r).abs() > 1e-9 * scale {
                continue;
            }
        }
        roots.push(r);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // A collapsed complex pair yields a duplicated double root.
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    roots
}

/// Fixed points of the constant-perturbation case (`eps = 1`).
///
/// `rho = r^2` runs over the positive real roots of the cubic
/// `f(rho) = rho^3 - 2(a mu + b nu) rho^2 + (mu^2 + nu^2) rho - 1`;
/// phases follow from `cos(phi) = r (a r^2 - mu)`,
/// `sin(phi) = r (nu - b r^2)`. The trivial solution is not a fixed point
/// here, so the list has 1 or 3 entries.
pub fn fixed_points_const(params: &ModelParams) -> Result<Vec<Equilibrium>> {
    if params.kind != PerturbationKind::Const {
        return Err(Error::InvalidParameter(
            "fixed_points_const requires kind = Const".into(),
        ));
    }
    require_unit_epsilon(params, "fixed_points_const")?;
    let (a, b) = (params.a(), params.b());
    let (mu, nu) = (params.mu, params.nu);
    let u = a * mu + b * nu;
    let roots = cubic_real_roots(-2.0 * u, mu * mu + nu * nu, -1.0);
    let mut out = Vec::new();
    for (i, rho) in roots.into_iter().filter(|r| *r > RHO_ZERO_TOL).enumerate() {
        let r = rho.sqrt();
        let phi = (r * (nu - b * rho)).atan2(r * (a * rho - mu));
        let eq = classify_with_label(params, State::from_polar(r, phi), EqLabel::Indexed(i))?;
        out.push(eq);
    }
    sort_equilibria(&mut out);
    Ok(out)
}

/// Fixed points of the `zbar` case (`eps = 1`): the trivial solution plus
/// 0, 2 or 4 nontrivial points.
///
/// `r^2 = a mu + b nu +/- Delta` with `Delta^2 = 1 - (a nu - b mu)^2`;
/// phases are `(alpha0 +/- alpha1)/2` and their half-turn partners, where
/// `exp(i alpha1) = (a nu - b mu) - i Delta`. At `Delta = 0` the merged
/// pair is returned once (it classifies as non-hyperbolic).
pub fn fixed_points_z2(params: &ModelParams) -> Result<Vec<Equilibrium>> {
    if params.kind != PerturbationKind::ZmResidual(2) {
        return Err(Error::InvalidParameter(
            "fixed_points_z2 requires kind = ZmResidual(2)".into(),
        ));
    }
    require_unit_epsilon(params, "fixed_points_z2")?;
    let uv = params.uv();
    let mut out = vec![classify_with_label(
        params,
        State::new(0.0, 0.0),
        EqLabel::P0,
    )?];
    let delta_sq = 1.0 - uv.v * uv.v;
    if delta_sq >= -1e-12 {
        let delta = delta_sq.max(0.0).sqrt();
        let alpha1 = (-delta).atan2(uv.v);
        let merged = delta_sq.abs() <= 1e-12;
        let branches: &[(f64, EqLabel, EqLabel)] = if merged {
            &[(1.0, EqLabel::Pplus, EqLabel::PplusStar)]
        } else {
            &[
                (1.0, EqLabel::Pplus, EqLabel::PplusStar),
                (-1.0, EqLabel::Pminus, EqLabel::PminusStar),
            ]
        };
        for &(sign, label, label_star) in branches {
            let r_sq = uv.u + sign * delta;
            if r_sq <= RHO_ZERO_TOL {
                continue;
            }
            let r = r_sq.sqrt();
            let phi = (params.alpha0 + sign * alpha1) / 2.0;
            out.push(classify_with_label(
                params,
                State::from_polar(r, phi),
                label,
            )?);
            out.push(classify_with_label(
                params,
                State::from_polar(r, phi + std::f64::consts::PI),
                label_star,
            )?);
        }
    }
    sort_equilibria(&mut out[1..]);
    Ok(out)
}

/// Signed symmetry index of the unified quadratic normal form:
/// `+1` for `z^2`, `-1` for `z zbar`, `-3` for `zbar^2`.
fn quadratic_m(kind: PerturbationKind) -> Option<i32> {
    match kind {
        PerturbationKind::Quadratic => Some(1),
        PerturbationKind::Mixed => Some(-1),
        PerturbationKind::ZmResidual(3) => Some(-3),
        _ => None,
    }
}

/// Fixed points of the quadratic cases `z zbar`, `z^2`, `zbar^2`
/// (`eps = 1`): the trivial solution plus the `P+-` branches, which exist
/// only inside the parabola `u = v^2 - 1/4`.
///
/// `r^2 = u + 1/2 +/- sqrt(u + 1/4 - v^2)`; the `zbar^2` branches come in
/// Z_3 triplets with phases 120 degrees apart.
pub fn fixed_points_quadratic(params: &ModelParams) -> Result<Vec<Equilibrium>> {
    let m = quadratic_m(params.kind).ok_or_else(|| {
        Error::InvalidParameter(
            "fixed_points_quadratic requires kind in {Mixed, Quadratic, ZmResidual(3)}".into(),
        )
    })?;
    require_unit_epsilon(params, "fixed_points_quadratic")?;
    let (a, b) = (params.a(), params.b());
    let (mu, nu) = (params.mu, params.nu);
    let uv = params.uv();
    let mut out = vec![classify_with_label(
        params,
        State::new(0.0, 0.0),
        EqLabel::P0,
    )?];
    let disc = uv.u + 0.25 - uv.v * uv.v;
    if disc >= -1e-12 {
        let root = disc.max(0.0).sqrt();
        let merged = disc.abs() <= 1e-12;
        let branches: &[(f64, EqLabel)] = if merged {
            &[(1.0, EqLabel::Pplus)]
        } else {
            &[(1.0, EqLabel::Pplus), (-1.0, EqLabel::Pminus)]
        };
        for &(sign, label) in branches {
            let r_sq = uv.u + 0.5 + sign * root;
            if r_sq <= RHO_ZERO_TOL {
                continue;
            }
            let r = r_sq.sqrt();
            // cos(m phi) = a r - mu / r, sin(m phi) = b r - nu / r.
            let psi = (b * r - nu / r).atan2(a * r - mu / r);
            let fold = m.unsigned_abs();
            for k in 0..fold {
                let phi = (psi + std::f64::consts::TAU * f64::from(k)) / f64::from(m);
                out.push(classify_with_label(
                    params,
                    State::from_polar(r, phi),
                    label,
                )?);
            }
        }
    }
    sort_equilibria(&mut out[1..]);
    Ok(out)
}

/// Fixed points for the residual `Z_m` symmetry with `m >= 4`, at the
/// physical `eps` (no closed form; radial roots are located by a scan plus
/// bisection on `(r^2 - u)^2 + v^2 - eps^2 r^(2m-4)`).
///
/// Returns the trivial solution alone outside the horn, and up to `2 m`
/// nontrivial points inside.
pub fn fixed_points_zm(params: &ModelParams) -> Result<Vec<Equilibrium>> {
    let m = match params.kind {
        PerturbationKind::ZmResidual(m) if m >= 4 => m,
        _ => {
            return Err(Error::InvalidParameter(
                "fixed_points_zm requires kind = ZmResidual(m) with m >= 4".into(),
            ))
        }
    };
    if params.epsilon <= 0.0 {
        return Err(Error::Domain(
            "fixed_points_zm requires epsilon > 0".into(),
        ));
    }
    let (a, b) = (params.a(), params.b());
    let (mu, nu, eps) = (params.mu, params.nu, params.epsilon);
    let uv = params.uv();
    let mut out = vec![classify_with_label(
        params,
        State::new(0.0, 0.0),
        EqLabel::P0,
    )?];
    let g = |rho: f64| {
        let d = rho - uv.u;
        d * d + uv.v * uv.v - eps * eps * rho.powi(m as i32 - 2)
    };
    // The physically meaningful radial roots sit near rho = u; the scan
    // window covers them with a margin while excluding the large-r branch
    // where the truncated perturbation dominates the cubic.
    let span = 8.0 * eps * (uv.u.abs() + 1.0).powf(f64::from(m - 2) / 2.0);
    let rho_max = uv.u + 0.5 + span;
    if rho_max <= 0.0 {
        return Ok(out);
    }
    let n_scan = 4000;
    let rho_min = 1e-8;
    let mut rho_roots: Vec<f64> = Vec::new();
    let mut prev_rho = rho_min;
    let mut prev_g = g(prev_rho);
    for i in 1..=n_scan {
        let rho = rho_min + (rho_max - rho_min) * f64::from(i) / f64::from(n_scan);
        let val = g(rho);
        if prev_g == 0.0 {
            rho_roots.push(prev_rho);
        } else if prev_g * val < 0.0 {
            let (mut lo, mut hi) = (prev_rho, rho);
            let (mut glo, _) = (prev_g, val);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let gm = g(mid);
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if glo * gm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    glo = gm;
                }
            }
            rho_roots.push(0.5 * (lo + hi));
        }
        prev_rho = rho;
        prev_g = val;
    }
    rho_roots.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let mut positions: Vec<(State, EqLabel)> = Vec::new();
    for rho in rho_roots {
        if rho <= RHO_ZERO_TOL {
            continue;
        }
        let r = rho.sqrt();
        let denom = eps * r.powi(m as i32 - 2);
        let cos_m = (a * rho - mu) / denom;
        let sin_m = (nu - b * rho) / denom;
        let psi = sin_m.atan2(cos_m);
        let label = if rho >= uv.u {
            EqLabel::Pplus
        } else {
            EqLabel::Pminus
        };
        for k in 0..m {
            let phi = (psi + std::f64::consts::TAU * f64::from(k)) / f64::from(m);
            positions.push((State::from_polar(r, phi), label));
        }
    }
    for (pos, label) in positions {
        let eq = classify_with_label(params, pos, label)?;
        if out
            .iter()
            .all(|e| e.position.dist(&eq.position) > 1e-10)
        {
            out.push(eq);
        }
    }
    sort_equilibria(&mut out[1..]);
    Ok(out)
}

/// Map an equilibrium of the canonical `eps = 1` system back to the
/// physical system and re-classify it there.
fn unscale_equilibrium(
    params: &ModelParams,
    z_scale: f64,
    canon: &Equilibrium,
) -> Result<Equilibrium> {
    let pos = State {
        x: z_scale * canon.position.x,
        y: z_scale * canon.position.y,
    };
    classify_with_label(params, pos, canon.label)
}

/// All fixed points of the model, for any kind and any `eps >= 0`.
///
/// Closed-form kinds with `eps != 1` are solved on the rescaled canonical
/// system and mapped back; `Z_m` with `m >= 4` is solved numerically at the
/// physical `eps`. With `eps = 0` (or kind `None`) only the trivial
/// solution is isolated, so the list contains just that point.
pub fn fixed_points(params: &ModelParams) -> Result<Vec<Equilibrium>> {
    if params.kind == PerturbationKind::None || params.epsilon == 0.0 {
        return Ok(vec![classify_with_label(
            params,
            State::new(0.0, 0.0),
            EqLabel::P0,
        )?]);
    }
    match params.kind {
        PerturbationKind::ZmResidual(m) if m >= 4 => fixed_points_zm(params),
        _ => {
            if (params.epsilon - 1.0).abs() <= 1e-12 {
                return solve_unit(params);
            }
            let scaling = rescale_epsilon(params)?;
            let canon = solve_unit(&scaling.normalized)?;
            let mut out = Vec::with_capacity(canon.len());
            for eq in &canon {
                out.push(unscale_equilibrium(params, scaling.z_scale, eq)?);
            }
            Ok(out)
        }
    }
}

fn solve_unit(params: &ModelParams) -> Result<Vec<Equilibrium>> {
    match params.kind {
        PerturbationKind::Const => fixed_points_const(params),
        PerturbationKind::ZmResidual(2) => fixed_points_z2(params),
        PerturbationKind::Mixed | PerturbationKind::Quadratic | PerturbationKind::ZmResidual(3) => {
            fixed_points_quadratic(params)
        }
        _ => unreachable!("solve_unit called with an unhandled kind"),
    }
}

/// Trace and determinant of the z-bar case at the nontrivial branches,
/// from the closed forms in terms of `Delta` (used to cross-check the
/// Jacobian route).
pub fn z2_branch_invariants(params: &ModelParams, sign: f64) -> Option<(f64, f64)> {
    let uv = params.uv();
    let delta_sq = 1.0 - uv.v * uv.v;
    if delta_sq < 0.0 {
        return None;
    }
    let delta = delta_sq.sqrt();
    let (a, b) = (params.a(), params.b());
    let r_sq = uv.u + sign * delta;
    if r_sq <= 0.0 {
        return None;
    }
    let t = 2.0 * ((b * b - a * a) * params.mu - 2.0 * a * b * params.nu - 2.0 * a * sign * delta);
    let d = 4.0 * sign * delta * r_sq;
    Some((t, d))
}

/// Trace and determinant of the quadratic cases at the `P+-` branches:
/// `T = (m - 1) a r^2 - (m + 1) mu`,
/// `D = -2 m sqrt(u + 1/4 - v^2) (sqrt((u + 1/2)^2 - u^2 - v^2) +/- (u + 1/2))`.
pub fn quadratic_branch_invariants(params: &ModelParams, sign: f64) -> Option<(f64, f64)> {
    let m = f64::from(quadratic_m(params.kind)?);
    let uv = params.uv();
    let disc = uv.u + 0.25 - uv.v * uv.v;
    if disc < 0.0 {
        return None;
    }
    let r_sq = uv.u + 0.5 + sign * disc.sqrt();
    if r_sq <= 0.0 {
        return None;
    }
    let t = (m - 1.0) * params.a() * r_sq - (m + 1.0) * params.mu;
    let inner = (uv.u + 0.5) * (uv.u + 0.5) - uv.u * uv.u - uv.v * uv.v;
    let d = -2.0 * m * disc.sqrt() * (inner.max(0.0).sqrt() + sign * (uv.u + 0.5));
    Some((t, d))
}

/// Const-case invariants at a root `rho` of the cubic:
/// `T = 2 (mu - 2 a rho)`, `D = mu^2 + nu^2 - 4 (a mu + b nu) rho + 3 rho^2`.
pub fn const_invariants(params: &ModelParams, rho: f64) -> (f64, f64) {
    let (a, b) = (params.a(), params.b());
    let (mu, nu) = (params.mu, params.nu);
    let t = 2.0 * (mu - 2.0 * a * rho);
    let d = mu * mu + nu * nu - 4.0 * (a * mu + b * nu) * rho + 3.0 * rho * rho;
    (t, d)
}

/// Eigenvalues of the trivial solution in the z-bar case:
/// `lambda = mu +/- sqrt(1 - nu^2)`.
pub fn z2_origin_eigenvalues(params: &ModelParams) -> (Complex64, Complex64) {
    let disc = 1.0 - params.nu * params.nu;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (
            Complex64::new(params.mu + s, 0.0),
            Complex64::new(params.mu - s, 0.0),
        )
    } else {
        let w = (-disc).sqrt();
        (
            Complex64::new(params.mu, w),
            Complex64::new(params.mu, -w),
        )
    }
}

/// Jacobian at an arbitrary state, re-exported for callers assembling
/// saddle separatrices.
pub fn jacobian_at(params: &ModelParams, state: State) -> Result<Matrix2<f64>> {
    jacobian(params, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    fn params(kind: PerturbationKind, mu: f64, nu: f64) -> ModelParams {
        ModelParams::new(mu, nu, FRAC_PI_4, 1.0, kind).unwrap()
    }

    #[test]
    fn const_origin_point() {
        // mu = nu = 0: the cubic is rho^3 - 1, so r = 1 and
        // phi = alpha0 - pi/2.
        let p = params(PerturbationKind::Const, 0.0, 0.0);
        let eqs = fixed_points_const(&p).unwrap();
        assert_eq!(eqs.len(), 1);
        assert_relative_eq!(eqs[0].r(), 1.0, epsilon = 1e-12);
        let expect = FRAC_PI_4 - std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU;
        assert_relative_eq!(eqs[0].phi(), expect % std::f64::consts::TAU, epsilon = 1e-12);
    }

    #[test]
    fn const_on_sn_curve_double_root() {
        // s = 0 on the saddle-node curve: (u, v) = (3 * 2^(-2/3), 0) with
        // rho_2 = (1/4)^(1/3) double and rho_0 = 4^(2/3) from
        // rho_0 rho_2^2 = 1.
        let u = 3.0 * 2f64.powf(-2.0 / 3.0);
        let p0 = params(PerturbationKind::Const, 0.0, 0.0);
        let p = p0.at_uv(u, 0.0);
        let eqs = fixed_points_const(&p).unwrap();
        let mut rhos: Vec<f64> = eqs.iter().map(|e| e.r() * e.r()).collect();
        rhos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rho2 = 0.25f64.powf(1.0 / 3.0);
        let rho0 = 4f64.powf(2.0 / 3.0);
        assert_relative_eq!(rho2 * rho2 * rho0, 1.0, epsilon = 1e-12);
        // Exactly on the curve the double root appears once.
        assert_eq!(rhos.len(), 2);
        assert_relative_eq!(rhos[0], rho2, epsilon = 1e-6);
        assert_relative_eq!(rhos[1], rho0, epsilon = 1e-8);
    }

    #[test]
    fn const_roots_match_scan() {
        // Brute-force sign-change scan plus bisection on the cubic.
        let p = params(PerturbationKind::Const, 3.0, 2.0);
        let (a, b) = (p.a(), p.b());
        let u = a * p.mu + b * p.nu;
        let f = |rho: f64| ((rho - 2.0 * u) * rho + (p.mu * p.mu + p.nu * p.nu)) * rho - 1.0;
        let mut scan_roots = Vec::new();
        let n = 2000;
        for i in 0..n {
            let lo = 20.0 * f64::from(i) / f64::from(n) + 1e-9;
            let hi = 20.0 * f64::from(i + 1) / f64::from(n) + 1e-9;
            if f(lo) * f(hi) < 0.0 {
                let (mut lo, mut hi) = (lo, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if f(lo) * f(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                scan_roots.push(0.5 * (lo + hi));
            }
        }
        let eqs = fixed_points_const(&p).unwrap();
        let mut rhos: Vec<f64> = eqs.iter().map(|e| e.r() * e.r()).collect();
        rhos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rhos.len(), scan_roots.len());
        for (got, want) in rhos.iter().zip(scan_roots.iter()) {
            assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn z2_unit_circle_pair() {
        let p = params(PerturbationKind::ZmResidual(2), 0.0, 0.0);
        let eqs = fixed_points_z2(&p).unwrap();
        assert_eq!(eqs.len(), 3);
        assert_eq!(eqs[0].label, EqLabel::P0);
        for eq in &eqs[1..] {
            assert_relative_eq!(eq.r(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn z2_origin_hopf_eigenvalues() {
        let p = params(PerturbationKind::ZmResidual(2), 0.0, 2.0);
        let eqs = fixed_points_z2(&p).unwrap();
        assert_eq!(eqs.len(), 1, "only the trivial solution outside the strip");
        let (l1, l2) = (eqs[0].eigenvalues.0, eqs[0].eigenvalues.1);
        assert!(l1.re.abs() < 1e-12 && l2.re.abs() < 1e-12);
        assert_relative_eq!(l1.im.abs(), 3f64.sqrt(), epsilon = 1e-12);
        let (c1, c2) = z2_origin_eigenvalues(&p);
        assert_relative_eq!(c1.im, 3f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(c2.im, -(3f64.sqrt()), epsilon = 1e-12);
    }

    #[test]
    fn z2_snic_het_portrait_counts() {
        // Five points at the portrait parameters (1.6, 0.19): trivial
        // solution unstable, the P+ pair stable foci, the P- pair saddles.
        let p = params(PerturbationKind::ZmResidual(2), 1.6, 0.19);
        let eqs = fixed_points_z2(&p).unwrap();
        assert_eq!(eqs.len(), 5);
        let saddles = eqs.iter().filter(|e| e.class == StabilityClass::Saddle).count();
        let stable = eqs.iter().filter(|e| e.class.is_stable()).count();
        assert_eq!(saddles, 2);
        assert_eq!(stable, 2);
        assert!(!eqs[0].class.is_stable());
    }

    #[test]
    fn mixed_origin_case() {
        // mu = nu = 0: r^4 - r^2 = 0, so the trivial (double) solution and
        // P+ with r = 1.
        let p = params(PerturbationKind::Mixed, 0.0, 0.0);
        let eqs = fixed_points_quadratic(&p).unwrap();
        assert_eq!(eqs.len(), 2);
        assert_eq!(eqs[0].label, EqLabel::P0);
        assert_eq!(eqs[0].class, StabilityClass::NonHyperbolic);
        assert_relative_eq!(eqs[1].r(), 1.0, epsilon = 1e-10);
        assert_eq!(eqs[1].label, EqLabel::Pplus);
    }

    #[test]
    fn z3_triplets() {
        let p = params(PerturbationKind::ZmResidual(3), 0.4, 0.3);
        let eqs = fixed_points_quadratic(&p).unwrap();
        let nontrivial: Vec<&Equilibrium> = eqs.iter().filter(|e| e.label != EqLabel::P0).collect();
        assert_eq!(nontrivial.len(), 6);
        for branch in [EqLabel::Pplus, EqLabel::Pminus] {
            let orbit: Vec<&&Equilibrium> =
                nontrivial.iter().filter(|e| e.label == branch).collect();
            assert_eq!(orbit.len(), 3);
            let r0 = orbit[0].r();
            let mut phis: Vec<f64> = orbit.iter().map(|e| e.phi()).collect();
            phis.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for eq in &orbit {
                assert_relative_eq!(eq.r(), r0, epsilon = 1e-10);
            }
            for w in phis.windows(2) {
                assert_relative_eq!(w[1] - w[0], std::f64::consts::TAU / 3.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn mixed_pminus_is_saddle() {
        for (mu, nu) in [(0.5, 0.1), (0.2, -0.3), (1.0, 0.8), (0.05, -0.2)] {
            let p = params(PerturbationKind::Mixed, mu, nu);
            let eqs = fixed_points_quadratic(&p).unwrap();
            for eq in eqs.iter().filter(|e| e.label == EqLabel::Pminus) {
                assert_eq!(eq.class, StabilityClass::Saddle, "at ({mu}, {nu})");
            }
            // sign D(P+-) = -/+ sign m; m = -1 here, so D(P+) > 0.
            if let Some((_, d)) = quadratic_branch_invariants(&p, 1.0) {
                assert!(d > 0.0);
            }
            if let Some((_, d)) = quadratic_branch_invariants(&p, -1.0) {
                assert!(d < 0.0);
            }
        }
    }

    #[test]
    fn quadratic_pplus_is_saddle() {
        // m = 1 for the z^2 case: D(P+) < 0.
        for (mu, nu) in [(0.5, 0.1), (0.2, -0.3), (0.0, 0.5)] {
            let p = params(PerturbationKind::Quadratic, mu, nu);
            if let Some((_, d)) = quadratic_branch_invariants(&p, 1.0) {
                assert!(d < 0.0, "D(P+) = {d} at ({mu}, {nu})");
            }
            let eqs = fixed_points_quadratic(&p).unwrap();
            for eq in eqs.iter().filter(|e| e.label == EqLabel::Pplus) {
                assert_eq!(eq.class, StabilityClass::Saddle);
            }
        }
    }

    #[test]
    fn z2_tb_plus_jacobian() {
        // At TB+ = (0, 1) the Jacobian of the trivial solution is the
        // rank-one double-zero matrix [[1, -1], [1, -1]].
        let p = params(PerturbationKind::ZmResidual(2), 0.0, 1.0);
        let j = jacobian_at(&p, State::new(0.0, 0.0)).unwrap();
        let expect = Matrix2::new(1.0, -1.0, 1.0, -1.0);
        assert_relative_eq!(j, expect, epsilon = 1e-14);
    }

    #[test]
    fn zm_on_line_l() {
        // m = 5 on L at u = 1: ten nontrivial points with r^2 near 1
        // alternating stable/saddle.
        let p0 = ModelParams::new(0.0, 0.0, FRAC_PI_4, 0.01, PerturbationKind::ZmResidual(5))
            .unwrap();
        let p = p0.at_uv(1.0, 0.0);
        let eqs = fixed_points_zm(&p).unwrap();
        assert_eq!(eqs.len(), 11);
        let nontrivial = &eqs[1..];
        for eq in nontrivial {
            let rho = eq.r() * eq.r();
            assert!((rho - 1.0).abs() < 0.02, "rho = {rho}");
        }
        let stable = nontrivial.iter().filter(|e| e.class.is_stable()).count();
        let saddle = nontrivial
            .iter()
            .filter(|e| e.class == StabilityClass::Saddle)
            .count();
        assert_eq!((stable, saddle), (5, 5));
    }

    #[test]
    fn zm_outside_horn_empty() {
        let p0 = ModelParams::new(0.0, 0.0, FRAC_PI_4, 0.01, PerturbationKind::ZmResidual(5))
            .unwrap();
        let v = 2.0 * 0.01; // beyond the leading-order horn at u = 1
        let p = p0.at_uv(1.0, v);
        let eqs = fixed_points_zm(&p).unwrap();
        assert_eq!(eqs.len(), 1);
    }

    #[test]
    fn classify_rejects_non_zero() {
        let p = params(PerturbationKind::Const, 0.3, 0.1);
        assert!(classify(&p, State::new(5.0, 5.0)).is_err());
    }

    #[test]
    fn dispatcher_rescales_epsilon() {
        let phys = ModelParams::new(0.0, 0.0, FRAC_PI_4, 0.04, PerturbationKind::ZmResidual(2))
            .unwrap();
        let eqs = fixed_points(&phys).unwrap();
        // Canonical pair at r = 1 maps back to r = eps^(1/2) = 0.2.
        assert_eq!(eqs.len(), 3);
        for eq in &eqs[1..] {
            assert_relative_eq!(eq.r(), 0.2, epsilon = 1e-10);
        }
    }
}


//! Analytic local bifurcation curves, codimension-two point coordinates and
//! pinning-region geometry for every perturbation case.
//!
//! Curves are emitted as adaptively refined samples (chord deviation below
//! [`CHORD_TOL`] in `(mu, nu)` units) rather than symbolic objects, so the
//! CLI and the tests share one representation.

use serde::{Deserialize, Serialize};

use crate::equilibria::fixed_points;
use crate::normalform::{from_uv, rescale_epsilon, ModelParams, PerturbationKind, UVPoint};
use crate::{Error, Result};

/// Chord-deviation refinement tolerance for sampled curves.
pub const CHORD_TOL: f64 = 1e-4;

/// Default extent of the saddle-node curve parameter for the constant case.
pub const DEFAULT_S_MAX: f64 = 30.0;

/// Default extent of half-line curves in `u`.
pub const DEFAULT_U_MAX: f64 = 8.0;

/// Default clip for Hopf rays and asymptotic branches in `|nu|`.
pub const DEFAULT_NU_MAX: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    SNplus,
    SNminus,
    SN0,
    Hplus,
    Hminus,
    H0,
    PFplus,
    PFminus,
    Parabola,
    EllipseArc,
    Line,
}

impl CurveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CurveKind::SNplus => "SN+",
            CurveKind::SNminus => "SN-",
            CurveKind::SN0 => "SN0",
            CurveKind::Hplus => "H+",
            CurveKind::Hminus => "H-",
            CurveKind::H0 => "H0",
            CurveKind::PFplus => "PF+",
            CurveKind::PFminus => "PF-",
            CurveKind::Parabola => "parabola",
            CurveKind::EllipseArc => "ellipse",
            CurveKind::Line => "L",
        }
    }
}

/// A sampled, labeled codimension-one bifurcation curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BifCurve {
    pub kind: CurveKind,
    /// Curve parameter at each sample, strictly monotone.
    pub params: Vec<f64>,
    /// `(mu, nu)` location of each sample.
    pub samples: Vec<(f64, f64)>,
    pub param_range: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Codim2Kind {
    CuspPlus,
    CuspMinus,
    TBplus,
    TBminus,
    TB,
    DPFplus,
    DPFminus,
}

impl Codim2Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Codim2Kind::CuspPlus => "Cusp+",
            Codim2Kind::CuspMinus => "Cusp-",
            Codim2Kind::TBplus => "TB+",
            Codim2Kind::TBminus => "TB-",
            Codim2Kind::TB => "TB",
            Codim2Kind::DPFplus => "dPF+",
            Codim2Kind::DPFminus => "dPF-",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Codim2Point {
    pub kind: Codim2Kind,
    /// `(mu, nu)` location.
    pub location: (f64, f64),
    /// Parameter on the carrying curve, where applicable.
    pub curve_parameter: Option<f64>,
    /// True for the degenerate Takens-Bogdanov points of the `z^2` case.
    pub degenerate: bool,
}

/// Which saddle-node branch carries TB- in the constant case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TbMinusBranch {
    /// `alpha0 < 60` degrees.
    SnMinus,
    /// `alpha0 > 60` degrees.
    Sn0,
    /// Exactly 60 degrees: TB- coincides with Cusp-.
    AtCusp,
}

/// All analytic curves and codimension-two points of one case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseCurves {
    pub curves: Vec<BifCurve>,
    pub codim2: Vec<Codim2Point>,
}

/// Shape constants of the Hopf ellipse shared by the `zbar` and `zbar^2`
/// cases: `2 l+- = 1 + 4 a^2 +- sqrt(1 + 8 a^2)` and
/// `2 / e^2 = 1 + (1 + 4 a^2) / sqrt(1 + 8 a^2)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EllipseInfo {
    pub ell_plus: f64,
    pub ell_minus: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub eccentricity: f64,
}

/// Ellipse constants for the `zbar` case, where the semiaxis lengths are
/// `2a / sqrt(l-+)`.
pub fn z2_ellipse_info(alpha0: f64) -> EllipseInfo {
    let a = alpha0.sin();
    let root = (1.0 + 8.0 * a * a).sqrt();
    let ell_plus = 0.5 * (1.0 + 4.0 * a * a + root);
    let ell_minus = 0.5 * (1.0 + 4.0 * a * a - root);
    let e_sq = 2.0 / (1.0 + (1.0 + 4.0 * a * a) / root);
    EllipseInfo {
        ell_plus,
        ell_minus,
        semi_major: 2.0 * a / ell_minus.sqrt(),
        semi_minor: 2.0 * a / ell_plus.sqrt(),
        eccentricity: e_sq.sqrt(),
    }
}

/// Adaptive sampling of `t -> (mu, nu)` with chord-deviation refinement.
fn sample_adaptive<F>(g: F, t0: f64, t1: f64) -> (Vec<f64>, Vec<(f64, f64)>)
where
    F: Fn(f64) -> (f64, f64),
{
    fn refine<F: Fn(f64) -> (f64, f64)>(
        g: &F,
        ta: f64,
        pa: (f64, f64),
        tb: f64,
        pb: (f64, f64),
        depth: u32,
        out_t: &mut Vec<f64>,
        out_p: &mut Vec<(f64, f64)>,
    ) {
        let tm = 0.5 * (ta + tb);
        let pm = g(tm);
        let chord = (0.5 * (pa.0 + pb.0) - pm.0, 0.5 * (pa.1 + pb.1) - pm.1);
        let dev = chord.0.hypot(chord.1);
        if dev > CHORD_TOL && depth < 28 {
            refine(g, ta, pa, tm, pm, depth + 1, out_t, out_p);
            out_t.push(tm);
            out_p.push(pm);
            refine(g, tm, pm, tb, pb, depth + 1, out_t, out_p);
        }
    }

    let n0 = 32usize;
    let mut ts = Vec::new();
    let mut ps = Vec::new();
    let mut prev_t = t0;
    let mut prev_p = g(t0);
    ts.push(prev_t);
    ps.push(prev_p);
    for i in 1..=n0 {
        let t = t0 + (t1 - t0) * i as f64 / n0 as f64;
        let p = g(t);
        refine(&g, prev_t, prev_p, t, p, 0, &mut ts, &mut ps);
        ts.push(t);
        ps.push(p);
        prev_t = t;
        prev_p = p;
    }
    (ts, ps)
}

fn curve_from<F>(kind: CurveKind, g: F, t0: f64, t1: f64) -> BifCurve
where
    F: Fn(f64) -> (f64, f64),
{
    let (params, samples) = sample_adaptive(g, t0, t1);
    BifCurve {
        kind,
        params,
        samples,
        param_range: (t0, t1),
    }
}

/// One point of the constant-case saddle-node curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SnCurvePoint {
    pub uv: UVPoint,
    /// Double root of the fixed-point cubic.
    pub rho2: f64,
    /// The third root, `rho0 * rho2^2 = 1`.
    pub rho0: f64,
}

/// Saddle-node curve of the constant case,
/// `(u, v) = (3 (1 + s^2), 2 sqrt(3) s) / (2 (1 + 3 s^2))^(2/3)`.
///
/// `s in (-inf, -1)` is SN-, `|s| < 1` is SN0, `s > 1` is SN+, and the cusp
/// points sit at `s = +-1`.
pub fn sn_curve_const(s: f64) -> Result<SnCurvePoint> {
    if !s.is_finite() {
        return Err(Error::NonFinite("curve parameter s must be finite".into()));
    }
    let w = 1.0 + 3.0 * s * s;
    let denom = (2.0 * w).powf(2.0 / 3.0);
    Ok(SnCurvePoint {
        uv: UVPoint {
            u: 3.0 * (1.0 + s * s) / denom,
            v: 2.0 * 3f64.sqrt() * s / denom,
        },
        rho2: (w / 4.0).powf(1.0 / 3.0),
        rho0: (4.0 / w).powf(2.0 / 3.0),
    })
}

/// One point of the constant-case `T = 0` curve with its Hopf validity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HopfCurvePoint {
    pub mu: f64,
    pub nu: f64,
    /// Determinant of the Jacobian along the curve; the point is a Hopf
    /// bifurcation iff `det > 0`.
    pub det: f64,
    pub valid: bool,
}

/// The `T = 0` curve of the constant case,
/// `(mu, nu) = a^(1/3) (1 - s^2)^(1/3) (2, b/a + s / sqrt(1 - s^2))`,
/// a Hopf curve where `D > 0`: `s in (-1, -sqrt((1-b)/2))` on H- and
/// `s in (sqrt((1+b)/2), 1)` on H+.
pub fn hopf_curve_const(s: f64, alpha0: f64) -> Result<HopfCurvePoint> {
    if !(s > -1.0 && s < 1.0) {
        return Err(Error::Domain(format!(
            "hopf_curve_const requires |s| < 1, got {s}"
        )));
    }
    let (a, b) = (alpha0.sin(), alpha0.cos());
    let one_m = 1.0 - s * s;
    let amp = a.powf(1.0 / 3.0) * one_m.powf(1.0 / 3.0);
    let mu = 2.0 * amp;
    let nu = amp * (b / a + s / one_m.sqrt());
    let det = a.powf(2.0 / 3.0)
        * one_m.powf(-1.0 / 3.0)
        * (2.0 * s * s - 1.0 - 2.0 * (b / a) * s * one_m.sqrt());
    Ok(HopfCurvePoint {
        mu,
        nu,
        det,
        valid: det > 0.0,
    })
}

/// Validity ranges of the constant-case Hopf branches:
/// `(H- start, H- end, H+ start, H+ end)` in the curve parameter `s`.
pub fn hopf_ranges_const(alpha0: f64) -> (f64, f64, f64, f64) {
    let b = alpha0.cos();
    (
        -1.0,
        -((1.0 - b) / 2.0).sqrt(),
        ((1.0 + b) / 2.0).sqrt(),
        1.0,
    )
}

/// Codimension-two points of the constant case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstCodim2 {
    pub points: Vec<Codim2Point>,
    pub tb_minus_branch: TbMinusBranch,
}

/// Cusp and Takens-Bogdanov coordinates of the constant case:
/// `Cusp+- = (3/2)(a -+ b/sqrt(3), b +- a/sqrt(3))`,
/// `TB+- = (2a, 2b +- 1) / (2 (1 +- b))^(1/3)`.
///
/// TB+ always lies on SN0; TB- lies on SN- for `alpha0 < 60` degrees, on
/// SN0 beyond, and coincides with Cusp- at exactly 60 degrees.
pub fn codim2_const(alpha0: f64) -> Result<ConstCodim2> {
    if !(alpha0 > 0.0 && alpha0 < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidParameter(format!(
            "alpha0 must lie in (0, pi/2), got {alpha0}"
        )));
    }
    let (a, b) = (alpha0.sin(), alpha0.cos());
    let r3 = 3f64.sqrt();
    let cusp_plus = (1.5 * (a - b / r3), 1.5 * (b + a / r3));
    let cusp_minus = (1.5 * (a + b / r3), 1.5 * (b - a / r3));
    let dp = (2.0 * (1.0 + b)).powf(1.0 / 3.0);
    let dm = (2.0 * (1.0 - b)).powf(1.0 / 3.0);
    let tb_plus = (2.0 * a / dp, (2.0 * b + 1.0) / dp);
    let tb_minus = (2.0 * a / dm, (2.0 * b - 1.0) / dm);
    let s_tb_plus = ((1.0 - b) / (3.0 * (1.0 + b))).sqrt();
    let s_tb_minus = -((1.0 + b) / (3.0 * (1.0 - b))).sqrt();
    let branch = if (s_tb_minus + 1.0).abs() <= 1e-12 {
        TbMinusBranch::AtCusp
    } else if s_tb_minus < -1.0 {
        TbMinusBranch::SnMinus
    } else {
        TbMinusBranch::Sn0
    };
    Ok(ConstCodim2 {
        points: vec![
            Codim2Point {
                kind: Codim2Kind::CuspPlus,
                location: cusp_plus,
                curve_parameter: Some(1.0),
                degenerate: false,
            },
            Codim2Point {
                kind: Codim2Kind::CuspMinus,
                location: cusp_minus,
                curve_parameter: Some(-1.0),
                degenerate: false,
            },
            Codim2Point {
                kind: Codim2Kind::TBplus,
                location: tb_plus,
                curve_parameter: Some(s_tb_plus),
                degenerate: false,
            },
            Codim2Point {
                kind: Codim2Kind::TBminus,
                location: tb_minus,
                curve_parameter: Some(s_tb_minus),
                degenerate: false,
            },
        ],
        tb_minus_branch: branch,
    })
}

/// Clip parameter of the constant-case Hopf branch so `|nu| <= nu_max`,
/// bisecting toward the asymptote at `s -> sign`.
fn hopf_clip_const(alpha0: f64, sign: f64, nu_max: f64) -> f64 {
    let nu_at = |s: f64| {
        hopf_curve_const(s, alpha0)
            .map(|p| p.nu.abs())
            .unwrap_or(f64::INFINITY)
    };
    let mut lo = 0.0;
    let mut hi = sign * (1.0 - 1e-15);
    if nu_at(hi) <= nu_max {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if nu_at(mid) > nu_max {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All analytic curves and codimension-two points of the constant
/// (`eps * 1`) case, in canonical `eps = 1` coordinates.
pub fn curves_const(alpha0: f64) -> Result<CaseCurves> {
    let c2 = codim2_const(alpha0)?;
    let uv_map = |s: f64| {
        let p = sn_curve_const(s).unwrap();
        from_uv(p.uv, alpha0)
    };
    let (_, hm_hi, hp_lo, _) = hopf_ranges_const(alpha0);
    let hopf_map = |s: f64| {
        let p = hopf_curve_const(s, alpha0).unwrap();
        (p.mu, p.nu)
    };
    let s_hm = hopf_clip_const(alpha0, -1.0, DEFAULT_NU_MAX);
    let s_hp = hopf_clip_const(alpha0, 1.0, DEFAULT_NU_MAX);
    let line_l = curve_from(
        CurveKind::Line,
        |u| from_uv(UVPoint { u, v: 0.0 }, alpha0),
        0.0,
        DEFAULT_U_MAX,
    );
    Ok(CaseCurves {
        curves: vec![
            curve_from(CurveKind::SNminus, uv_map, -DEFAULT_S_MAX, -1.0),
            curve_from(CurveKind::SN0, uv_map, -1.0, 1.0),
            curve_from(CurveKind::SNplus, uv_map, 1.0, DEFAULT_S_MAX),
            curve_from(CurveKind::Hminus, hopf_map, s_hm, hm_hi),
            curve_from(CurveKind::Hplus, hopf_map, hp_lo, s_hp),
            line_l,
        ],
        codim2: c2.points,
    })
}

/// All analytic curves and codimension-two points of the `zbar` case, in
/// canonical coordinates: the pitchfork circle halves, the saddle-node
/// half-lines `v = +-1`, the Hopf rays on `mu = 0` with `|nu| > 1`, the H0
/// elliptic arc from `(0, -1)` to `(2b, (b^2 - a^2)/a)`, and the five
/// codimension-two points TB+- = (0, +-1), TB = (2b, (b^2-a^2)/a),
/// dPF+- = +-(-b, a).
pub fn curves_z2(alpha0: f64) -> Result<CaseCurves> {
    if !(alpha0 > 0.0 && alpha0 < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidParameter(format!(
            "alpha0 must lie in (0, pi/2), got {alpha0}"
        )));
    }
    let (a, b) = (alpha0.sin(), alpha0.cos());
    // a*cos(theta) + b*sin(theta) changes sign at phi0 +- pi/2.
    let phi0 = b.atan2(a);
    let circle = |theta: f64| (theta.cos(), theta.sin());
    let pf_plus = curve_from(
        CurveKind::PFplus,
        circle,
        phi0 + std::f64::consts::FRAC_PI_2,
        phi0 + 1.5 * std::f64::consts::PI,
    );
    let pf_minus = curve_from(
        CurveKind::PFminus,
        circle,
        phi0 - std::f64::consts::FRAC_PI_2,
        phi0 + std::f64::consts::FRAC_PI_2,
    );
    let sn = |v: f64| move |u: f64| from_uv(UVPoint { u, v }, alpha0);
    let h0 = |nu: f64| {
        let mu = 2.0 * a * b * nu + 2.0 * a * (1.0 - a * a * nu * nu).max(0.0).sqrt();
        (mu, nu)
    };
    let tb_nu = (b * b - a * a) / a;
    Ok(CaseCurves {
        curves: vec![
            pf_plus,
            pf_minus,
            curve_from(CurveKind::SNplus, sn(1.0), 0.0, DEFAULT_U_MAX),
            curve_from(CurveKind::SNminus, sn(-1.0), 0.0, DEFAULT_U_MAX),
            curve_from(CurveKind::Hplus, |nu| (0.0, nu), 1.0, DEFAULT_NU_MAX),
            curve_from(CurveKind::Hminus, |nu| (0.0, nu), -DEFAULT_NU_MAX, -1.0),
            curve_from(CurveKind::H0, h0, -1.0, tb_nu),
            curve_from(
                CurveKind::Line,
                |u| from_uv(UVPoint { u, v: 0.0 }, alpha0),
                0.0,
                DEFAULT_U_MAX,
            ),
        ],
        codim2: vec![
            Codim2Point {
                kind: Codim2Kind::TBplus,
                location: (0.0, 1.0),
                curve_parameter: Some(1.0),
                degenerate: false,
            },
            Codim2Point {
                kind: Codim2Kind::TBminus,
                location: (0.0, -1.0),
                curve_parameter: Some(-1.0),
                degenerate: false,
            },
            Codim2Point {
                kind: Codim2Kind::TB,
                location: (2.0 * b, tb_nu),
                curve_parameter: Some(tb_nu),
                degenerate: false,
            },
            Codim2Point {
                kind: Codim2Kind::DPFplus,
                location: (-b, a),
                curve_parameter: None,
                degenerate: false,
            },
            Codim2Point {
                kind: Codim2Kind::DPFminus,
                location: (b, -a),
                curve_parameter: None,
                degenerate: false,
            },
        ],
    })
}

/// Takens-Bogdanov tangency points of the `zbar^2` case for
/// `alpha0 <= pi/6`: `mu = (1 - 2a^2 -+ b sqrt(1 - 4a^2)) / a` with the
/// matching `nu`, as the contact points of the Hopf ellipse
/// `(b mu - 2 a nu)^2 + (a mu - 1)^2 = 1` with the saddle-node parabola.
pub fn z3_tb_points(alpha0: f64) -> Option<((f64, f64), (f64, f64))> {
    let (a, b) = (alpha0.sin(), alpha0.cos());
    let w_sq = 1.0 - 4.0 * a * a;
    if w_sq < 0.0 {
        return None;
    }
    let w = w_sq.sqrt();
    let point = |s: f64| {
        (
            (1.0 - 2.0 * a * a - s * b * w) / a,
            w * (b * w - s * (1.0 - 2.0 * a * a)) / (2.0 * a * a),
        )
    };
    Some((point(1.0), point(-1.0)))
}

/// Angle parameter on the `zbar^2` Hopf ellipse
/// (`a mu - 1 = -cos t`, `b mu - 2 a nu = sin t`) of a TB tangency point.
fn z3_tb_angle(alpha0: f64, s: f64) -> f64 {
    let (a, b) = (alpha0.sin(), alpha0.cos());
    let w = (1.0 - 4.0 * a * a).max(0.0).sqrt();
    let cos_t = 2.0 * a * a + s * b * w;
    let sin_t = a * (2.0 * b - s * w);
    sin_t.atan2(cos_t)
}

/// All analytic curves and codimension-two points of the quadratic cases
/// (`z zbar`, `z^2`, `zbar^2`), in canonical coordinates.
///
/// All three share the saddle-node parabola `u = v^2 - 1/4` and the Hopf
/// rays of the trivial solution along `mu = 0` reaching the origin. The
/// `z^2` case adds the degenerate H0 segment of `mu = 0` inside the
/// parabola, ending at degenerate TB points; the `zbar^2` case with
/// `alpha0 < pi/6` adds the H0 elliptic arc between its two TB tangency
/// points (omitted entirely for `alpha0 >= pi/6`, where no `T = 0` locus
/// with `D > 0` exists).
pub fn curves_quadratic(kind: PerturbationKind, alpha0: f64) -> Result<CaseCurves> {
    if !matches!(
        kind,
        PerturbationKind::Mixed | PerturbationKind::Quadratic | PerturbationKind::ZmResidual(3)
    ) {
        return Err(Error::InvalidParameter(
            "curves_quadratic requires kind in {Mixed, Quadratic, ZmResidual(3)}".into(),
        ));
    }
    if !(alpha0 > 0.0 && alpha0 < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidParameter(format!(
            "alpha0 must lie in (0, pi/2), got {alpha0}"
        )));
    }
    let (a, b) = (alpha0.sin(), alpha0.cos());
    let v_max = (DEFAULT_U_MAX + 0.25).sqrt();
    let parabola = curve_from(
        CurveKind::Parabola,
        |v| from_uv(UVPoint { u: v * v - 0.25, v }, alpha0),
        -v_max,
        v_max,
    );
    let mut curves = vec![
        parabola,
        curve_from(CurveKind::Hplus, |nu| (0.0, nu), 0.0, DEFAULT_NU_MAX),
        curve_from(CurveKind::Hminus, |nu| (0.0, nu), -DEFAULT_NU_MAX, 0.0),
        curve_from(
            CurveKind::Line,
            |u| from_uv(UVPoint { u, v: 0.0 }, alpha0),
            0.0,
            DEFAULT_U_MAX,
        ),
    ];
    let mut codim2 = Vec::new();
    match kind {
        PerturbationKind::Quadratic => {
            // H0: the mu = 0 segment inside the parabola, between the
            // degenerate TB points nu = -1/(2(1+b)) and nu = 1/(2(1-b)).
            let nu_minus = -0.5 / (1.0 + b);
            let nu_plus = 0.5 / (1.0 - b);
            curves.push(curve_from(CurveKind::H0, |nu| (0.0, nu), nu_minus, nu_plus));
            codim2.push(Codim2Point {
                kind: Codim2Kind::TBminus,
                location: (0.0, nu_minus),
                curve_parameter: Some(nu_minus),
                degenerate: true,
            });
            codim2.push(Codim2Point {
                kind: Codim2Kind::TBplus,
                location: (0.0, nu_plus),
                curve_parameter: Some(nu_plus),
                degenerate: true,
            });
        }
        PerturbationKind::ZmResidual(3) => {
            if let Some((tb_plus, tb_minus)) = z3_tb_points(alpha0) {
                let t_plus = z3_tb_angle(alpha0, 1.0);
                let t_minus = z3_tb_angle(alpha0, -1.0);
                // Ellipse point for angle t; the valid Hopf arc is the one
                // where T(P+) = 0 holds with the correct branch sign:
                // sqrt(disc) = -((a^2 - b^2) mu + 2 a b nu + a) / (2a) > 0.
                let ell = |t: f64| {
                    let mu = (1.0 - t.cos()) / a;
                    let nu = (b * mu - t.sin()) / (2.0 * a);
                    (mu, nu)
                };
                let cond = |t: f64| {
                    let (mu, nu) = ell(t);
                    -((a * a - b * b) * mu + 2.0 * a * b * nu + a) / (2.0 * a)
                };
                // Choose the sweep direction whose midpoint satisfies the
                // branch condition.
                let wrap = |x: f64| x.rem_euclid(std::f64::consts::TAU);
                let span_up = wrap(t_plus - t_minus);
                let mid_up = t_minus + 0.5 * span_up;
                let (t0, t1) = if cond(mid_up) > 0.0 {
                    (t_minus, t_minus + span_up)
                } else {
                    (t_plus, t_plus + wrap(t_minus - t_plus))
                };
                curves.push(curve_from(CurveKind::H0, ell, t0, t1));
                codim2.push(Codim2Point {
                    kind: Codim2Kind::TBplus,
                    location: tb_plus,
                    curve_parameter: Some(t_plus),
                    degenerate: false,
                });
                codim2.push(Codim2Point {
                    kind: Codim2Kind::TBminus,
                    location: tb_minus,
                    curve_parameter: Some(t_minus),
                    degenerate: false,
                });
            }
        }
        _ => {}
    }
    Ok(CaseCurves { curves, codim2 })
}

/// Width of the pinning region at distance `d` along L for imperfection
/// amplitude `eps`: `w = 2 eps d^((p-1)/2)` with the monomial order p of
/// the kind, i.e. `2 eps / sqrt(d)`, `2 eps`, `2 eps sqrt(d)` and
/// `2 eps d^((m-2)/2)` case by case.
pub fn pinning_width(kind: PerturbationKind, d: f64, epsilon: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!(
            "pinning_width requires d > 0, got {d}"
        )));
    }
    if epsilon < 0.0 {
        return Err(Error::Domain(format!(
            "pinning_width requires epsilon >= 0, got {epsilon}"
        )));
    }
    let p = kind.monomial_order().ok_or_else(|| {
        Error::Domain("the unperturbed system has a zero-width pinning line".into())
    })?;
    Ok(2.0 * epsilon * d.powf((f64::from(p) - 1.0) / 2.0))
}

/// True when the model at `(u, v)` has pinned (nontrivial steady)
/// solutions; the constant case counts the passage from one to three fixed
/// points instead.
fn has_pinned_states(params: &ModelParams, u: f64, v: f64) -> Result<bool> {
    let p = params.at_uv(u, v);
    let eqs = fixed_points(&p)?;
    Ok(match params.kind {
        PerturbationKind::Const => eqs.len() >= 3,
        _ => eqs.len() > 1,
    })
}

/// Numerically measured half-width of the pinning region at distance `d`
/// along L, by bisection on the existence of pinned states transverse to L
/// (in physical parameter units).
pub fn measure_pinning_halfwidth(
    kind: PerturbationKind,
    d: f64,
    epsilon: f64,
    alpha0: f64,
) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("d must be > 0, got {d}")));
    }
    let params = ModelParams::new(0.0, 0.0, alpha0, epsilon, kind)?;
    let guess = pinning_width(kind, d, epsilon)? / 2.0;
    let mut lo = 0.0;
    let mut hi = 3.0 * guess + 0.1 * epsilon;
    if !has_pinned_states(&params, d, lo)? {
        return Err(Error::Domain(format!(
            "no pinned states on L at u = {d}; the distance lies outside the pinning region"
        )));
    }
    // Grow hi until the states disappear.
    let mut tries = 0;
    while has_pinned_states(&params, d, hi)? {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::NoConvergence(
                "pinning boundary not bracketed; existence never fails transverse to L".into(),
            ));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if has_pinned_states(&params, d, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Leading-order horn boundaries `v = +- eps u^((m-2)/2)` of the residual
/// `Z_m` case, optionally refined by bisection on equilibrium existence.
pub fn zm_horn(
    m: u32,
    epsilon: f64,
    u_range: (f64, f64),
    n_samples: usize,
    refine: bool,
    alpha0: f64,
) -> Result<(BifCurve, BifCurve)> {
    if m < 4 {
        return Err(Error::InvalidParameter(format!(
            "zm_horn requires m >= 4, got {m}"
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "zm_horn requires epsilon > 0, got {epsilon}"
        )));
    }
    if !(u_range.0 >= 0.0 && u_range.1 > u_range.0) {
        return Err(Error::InvalidParameter(format!(
            "invalid u range {u_range:?}"
        )));
    }
    let n = n_samples.max(2);
    let mut bound = |sign: f64, kind: CurveKind| -> Result<BifCurve> {
        let mut params_list = Vec::with_capacity(n);
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let u = u_range.0 + (u_range.1 - u_range.0) * i as f64 / (n - 1) as f64;
            let v_lead = epsilon * u.powf(f64::from(m - 2) / 2.0);
            let v = if refine && u > 0.0 {
                sign * measure_pinning_halfwidth(
                    PerturbationKind::ZmResidual(m),
                    u,
                    epsilon,
                    alpha0,
                )?
            } else {
                sign * v_lead
            };
            params_list.push(u);
            samples.push(from_uv(UVPoint { u, v }, alpha0));
        }
        Ok(BifCurve {
            kind,
            params: params_list,
            samples,
            param_range: u_range,
        })
    };
    Ok((
        bound(1.0, CurveKind::SNplus)?,
        bound(-1.0, CurveKind::SNminus)?,
    ))
}

/// Curves for the `Z_m` (m >= 4) case: the two horn boundaries plus L.
pub fn curves_zm(m: u32, epsilon: f64, alpha0: f64) -> Result<CaseCurves> {
    let (upper, lower) = zm_horn(m, epsilon, (0.0, DEFAULT_U_MAX), 129, false, alpha0)?;
    let line_l = curve_from(
        CurveKind::Line,
        |u| from_uv(UVPoint { u, v: 0.0 }, alpha0),
        0.0,
        DEFAULT_U_MAX,
    );
    Ok(CaseCurves {
        curves: vec![upper, lower, line_l],
        codim2: Vec::new(),
    })
}

/// Curves for any case at canonical `eps = 1` (or physical `eps` for
/// `Z_m`, m >= 4).
pub fn case_curves(kind: PerturbationKind, alpha0: f64, epsilon: f64) -> Result<CaseCurves> {
    match kind {
        PerturbationKind::Const => curves_const(alpha0),
        PerturbationKind::ZmResidual(2) => curves_z2(alpha0),
        PerturbationKind::Mixed | PerturbationKind::Quadratic | PerturbationKind::ZmResidual(3) => {
            curves_quadratic(kind, alpha0)
        }
        PerturbationKind::ZmResidual(m) if m >= 4 => curves_zm(m, epsilon, alpha0),
        _ => Err(Error::InvalidParameter(
            "no analytic curves for the unperturbed kind".into(),
        )),
    }
}

/// Scale a canonical curve set to physical parameters by multiplying every
/// `(mu, nu)` sample by `eps^(2 delta)`.
pub fn unscale_case_curves(
    curves: &CaseCurves,
    kind: PerturbationKind,
    epsilon: f64,
) -> Result<CaseCurves> {
    let scale = if (epsilon - 1.0).abs() <= 1e-15 {
        1.0
    } else {
        let probe = ModelParams::new(0.0, 0.0, 0.7, epsilon, kind)?;
        rescale_epsilon(&probe)?.param_scale
    };
    let mut out = curves.clone();
    for c in &mut out.curves {
        for s in &mut c.samples {
            s.0 *= scale;
            s.1 *= scale;
        }
    }
    for p in &mut out.codim2 {
        p.location.0 *= scale;
        p.location.1 *= scale;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalform::to_uv;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn cusp_points_on_sn_curve() {
        let p = sn_curve_const(1.0).unwrap();
        assert_relative_eq!(p.uv.u, 1.5, epsilon = 1e-12);
        assert_relative_eq!(p.uv.v, 3f64.sqrt() / 2.0, epsilon = 1e-12);
        let m = sn_curve_const(-1.0).unwrap();
        assert_relative_eq!(m.uv.v, -(3f64.sqrt()) / 2.0, epsilon = 1e-12);
        let z = sn_curve_const(0.0).unwrap();
        assert_relative_eq!(z.uv.u, 3.0 * 2f64.powf(-2.0 / 3.0), epsilon = 1e-12);
        assert_relative_eq!(z.rho2, 0.25f64.powf(1.0 / 3.0), epsilon = 1e-12);
        assert_relative_eq!(z.rho0 * z.rho2 * z.rho2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sn_curve_double_root_residual() {
        // f and f' vanish at rho2 for the cubic built from the curve point.
        for s in [0.0, 0.5, -2.0, 10.0] {
            let p = sn_curve_const(s).unwrap();
            let u = p.uv.u;
            let msq = p.uv.u * p.uv.u + p.uv.v * p.uv.v;
            let f = |rho: f64| ((rho - 2.0 * u) * rho + msq) * rho - 1.0;
            let fp = |rho: f64| (3.0 * rho - 4.0 * u) * rho + msq;
            assert!(f(p.rho2).abs() <= 1e-10, "f = {} at s = {s}", f(p.rho2));
            assert!(fp(p.rho2).abs() <= 1e-10, "f' = {} at s = {s}", fp(p.rho2));
            assert!(f(p.rho0).abs() <= 1e-10);
        }
    }

    #[test]
    fn hopf_const_validity() {
        // At alpha0 = pi/4 and s = 0 the T = 0 point has D < 0.
        let p = hopf_curve_const(0.0, FRAC_PI_4).unwrap();
        assert!(!p.valid);
        assert!(hopf_curve_const(1.0, FRAC_PI_4).is_err());
        let q = hopf_curve_const(0.95, FRAC_PI_4).unwrap();
        assert!(q.valid);
    }

    #[test]
    fn tb_cusp_coincide_at_sixty_degrees() {
        let alpha0 = 60f64.to_radians();
        let c2 = codim2_const(alpha0).unwrap();
        let tb = c2
            .points
            .iter()
            .find(|p| p.kind == Codim2Kind::TBminus)
            .unwrap();
        let cusp = c2
            .points
            .iter()
            .find(|p| p.kind == Codim2Kind::CuspMinus)
            .unwrap();
        let d = (tb.location.0 - cusp.location.0).hypot(tb.location.1 - cusp.location.1);
        assert!(d <= 1e-10, "separation {d}");
        assert_eq!(c2.tb_minus_branch, TbMinusBranch::AtCusp);
    }

    #[test]
    fn cusps_lie_on_sn_parametrization() {
        for alpha0 in [0.3, FRAC_PI_4, 1.2] {
            let c2 = codim2_const(alpha0).unwrap();
            for (kind, s) in [(Codim2Kind::CuspPlus, 1.0), (Codim2Kind::CuspMinus, -1.0)] {
                let p = c2.points.iter().find(|p| p.kind == kind).unwrap();
                let on_curve = sn_curve_const(s).unwrap();
                let uv = to_uv(p.location.0, p.location.1, alpha0);
                assert_relative_eq!(uv.u, on_curve.uv.u, epsilon = 1e-12);
                assert_relative_eq!(uv.v, on_curve.uv.v, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn tb_points_on_sn_curve() {
        for alpha0 in [0.4, FRAC_PI_4, 1.3] {
            let c2 = codim2_const(alpha0).unwrap();
            for kind in [Codim2Kind::TBplus, Codim2Kind::TBminus] {
                let p = c2.points.iter().find(|p| p.kind == kind).unwrap();
                let s = p.curve_parameter.unwrap();
                let on_curve = sn_curve_const(s).unwrap();
                let uv = to_uv(p.location.0, p.location.1, alpha0);
                assert_relative_eq!(uv.u, on_curve.uv.u, epsilon = 1e-10);
                assert_relative_eq!(uv.v, on_curve.uv.v, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn z2_ellipse_through_poles_and_tangency() {
        let alpha0 = FRAC_PI_4;
        let (a, b) = (alpha0.sin(), alpha0.cos());
        let on_ellipse = |mu: f64, nu: f64| {
            mu * mu - 4.0 * a * b * mu * nu + 4.0 * a * a * nu * nu - 4.0 * a * a
        };
        assert!(on_ellipse(0.0, 1.0).abs() < 1e-12);
        assert!(on_ellipse(0.0, -1.0).abs() < 1e-12);
        // Tangency point to SN-: (2b, (b^2 - a^2)/a).
        let t = (2.0 * b, (b * b - a * a) / a);
        assert!(on_ellipse(t.0, t.1).abs() < 1e-12);
        let uv = to_uv(t.0, t.1, alpha0);
        assert_relative_eq!(uv.v, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn z2_eccentricity_cross_check() {
        let info = z2_ellipse_info(FRAC_PI_4);
        let ratio = info.semi_minor / info.semi_major;
        let e_from_axes = (1.0 - ratio * ratio).sqrt();
        assert_relative_eq!(info.eccentricity, e_from_axes, epsilon = 1e-12);
    }

    #[test]
    fn z2_h0_endpoints() {
        let alpha0 = FRAC_PI_4;
        let (a, b) = (alpha0.sin(), alpha0.cos());
        let cc = curves_z2(alpha0).unwrap();
        let h0 = cc.curves.iter().find(|c| c.kind == CurveKind::H0).unwrap();
        let first = h0.samples.first().unwrap();
        let last = h0.samples.last().unwrap();
        assert!((first.0 - 0.0).abs() < 1e-10 && (first.1 + 1.0).abs() < 1e-10);
        assert_relative_eq!(last.0, 2.0 * b, epsilon = 1e-10);
        assert_relative_eq!(last.1, (b * b - a * a) / a, epsilon = 1e-10);
    }

    #[test]
    fn parabola_vertex() {
        let cc = curves_quadratic(PerturbationKind::Mixed, FRAC_PI_4).unwrap();
        let par = cc
            .curves
            .iter()
            .find(|c| c.kind == CurveKind::Parabola)
            .unwrap();
        // The sample nearest v = 0 maps to (u, v) = (-1/4, 0).
        let best = par
            .samples
            .iter()
            .zip(&par.params)
            .min_by(|x, y| x.1.abs().partial_cmp(&y.1.abs()).unwrap())
            .unwrap();
        let uv = to_uv(best.0 .0, best.0 .1, FRAC_PI_4);
        assert!((uv.u + 0.25).abs() < 1e-6 && uv.v.abs() < 1e-6);
        for (p, s) in par.params.iter().zip(&par.samples) {
            let uv = to_uv(s.0, s.1, FRAC_PI_4);
            assert!((uv.u - (p * p - 0.25)).abs() < 1e-10);
        }
    }

    #[test]
    fn z3_tb_coalesce_at_pi_over_six() {
        let alpha0 = std::f64::consts::FRAC_PI_6;
        let (tbp, tbm) = z3_tb_points(alpha0).unwrap();
        let d = (tbp.0 - tbm.0).hypot(tbp.1 - tbm.1);
        assert!(d < 1e-7, "TB separation {d}");
        assert!(z3_tb_points(0.6).is_none(), "no TB points above pi/6");
    }

    #[test]
    fn z3_tb_points_on_parabola_and_ellipse() {
        let alpha0 = std::f64::consts::PI / 8.0;
        let (a, b) = (alpha0.sin(), alpha0.cos());
        let (tbp, tbm) = z3_tb_points(alpha0).unwrap();
        for (mu, nu) in [tbp, tbm] {
            let uv = to_uv(mu, nu, alpha0);
            assert!(
                (uv.u - (uv.v * uv.v - 0.25)).abs() <= 1e-10,
                "parabola residual"
            );
            let e = (b * mu - 2.0 * a * nu).powi(2) + (a * mu - 1.0).powi(2) - 1.0;
            assert!(e.abs() <= 1e-10, "ellipse residual {e}");
        }
    }

    #[test]
    fn z3_h0_arc_tb_endpoints_and_validity() {
        let alpha0 = std::f64::consts::PI / 8.0;
        let cc = curves_quadratic(PerturbationKind::ZmResidual(3), alpha0).unwrap();
        let h0 = cc.curves.iter().find(|c| c.kind == CurveKind::H0).unwrap();
        let (tbp, tbm) = z3_tb_points(alpha0).unwrap();
        let ends = [h0.samples.first().unwrap(), h0.samples.last().unwrap()];
        for tb in [tbp, tbm] {
            assert!(
                ends.iter().any(|e| (e.0 - tb.0).hypot(e.1 - tb.1) < 1e-8),
                "TB {tb:?} is not an endpoint"
            );
        }
        // Every interior sample satisfies T(P+) = 0 with D(P+) > 0; check
        // through the closed-form invariants.
        let base =
            ModelParams::new(0.0, 0.0, alpha0, 1.0, PerturbationKind::ZmResidual(3)).unwrap();
        for s in h0
            .samples
            .iter()
            .skip(2)
            .take(h0.samples.len().saturating_sub(4))
        {
            let p = base.at(s.0, s.1);
            let (t, d) =
                crate::equilibria::quadratic_branch_invariants(&p, 1.0).expect("inside parabola");
            assert!(t.abs() < 1e-8, "T(P+) = {t}");
            assert!(d > 0.0);
        }
        // No H0 arc for alpha0 above pi/6.
        let cc2 = curves_quadratic(PerturbationKind::ZmResidual(3), 0.8).unwrap();
        assert!(cc2.curves.iter().all(|c| c.kind != CurveKind::H0));
    }

    #[test]
    fn quadratic_h0_segment_endpoints() {
        let alpha0 = FRAC_PI_4;
        let b = alpha0.cos();
        let cc = curves_quadratic(PerturbationKind::Quadratic, alpha0).unwrap();
        let h0 = cc.curves.iter().find(|c| c.kind == CurveKind::H0).unwrap();
        assert_relative_eq!(h0.param_range.0, -0.5 / (1.0 + b), epsilon = 1e-12);
        assert_relative_eq!(h0.param_range.1, 0.5 / (1.0 - b), epsilon = 1e-12);
        assert!(cc.codim2.iter().all(|p| p.degenerate));
        // Endpoints sit on the parabola.
        for p in &cc.codim2 {
            let uv = to_uv(p.location.0, p.location.1, alpha0);
            assert!((uv.u - (uv.v * uv.v - 0.25)).abs() < 1e-10);
        }
    }

    #[test]
    fn width_law_values() {
        assert_relative_eq!(
            pinning_width(PerturbationKind::Const, 4.0, 0.1).unwrap(),
            0.1,
            epsilon = 1e-14
        );
        for d in [0.5, 1.0, 7.3] {
            assert_relative_eq!(
                pinning_width(PerturbationKind::ZmResidual(2), d, 0.05).unwrap(),
                0.1,
                epsilon = 1e-14
            );
        }
        assert_relative_eq!(
            pinning_width(PerturbationKind::ZmResidual(5), 2.0, 0.01).unwrap(),
            0.02 * 2f64.powf(1.5),
            epsilon = 1e-14
        );
        assert!(pinning_width(PerturbationKind::Const, 0.0, 0.1).is_err());
        assert!(pinning_width(PerturbationKind::Const, -1.0, 0.1).is_err());
    }

    #[test]
    fn horn_shapes() {
        let alpha0 = FRAC_PI_4;
        let (upper, lower) = zm_horn(4, 0.05, (0.0, 2.0), 21, false, alpha0).unwrap();
        // m = 4: straight wedge v = +- eps u.
        for (u, s) in upper.params.iter().zip(&upper.samples) {
            let uv = to_uv(s.0, s.1, alpha0);
            assert_relative_eq!(uv.v, 0.05 * u, epsilon = 1e-12);
        }
        let first = to_uv(lower.samples[0].0, lower.samples[0].1, alpha0);
        assert!(
            first.u.abs() < 1e-12 && first.v.abs() < 1e-12,
            "horn closes at the origin"
        );
        assert!(zm_horn(3, 0.05, (0.0, 1.0), 5, false, alpha0).is_err());
    }

    #[test]
    fn curve_params_monotone() {
        for cc in [
            curves_const(FRAC_PI_4).unwrap(),
            curves_z2(FRAC_PI_4).unwrap(),
            curves_quadratic(PerturbationKind::Quadratic, FRAC_PI_4).unwrap(),
        ] {
            for c in &cc.curves {
                for w in c.params.windows(2) {
                    assert!(w[1] > w[0], "{:?} params not monotone", c.kind);
                }
            }
        }
    }
}

//! Numerical location of infinite-period boundaries, SNIC-versus-homoclinic
//! discrimination through period-scaling fits, and the degenerate
//! Takens-Bogdanov verification of the `z^2` case.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::equilibria::{fixed_points, EqLabel, Equilibrium, StabilityClass};
use crate::flow::{
    find_limit_cycle, find_limit_cycle_on_section, CycleOptions, CycleSearch, LimitCycle,
    NotFoundReason, Section, Tolerances,
};
use crate::normalform::{rhs_unchecked, ModelParams, PerturbationKind, State};
use crate::{Error, Result};

/// Infinite-period scaling models: `T = k / sqrt(mu - mu_c) + offset` and
/// `T = (1/lambda) ln(1/(mu - mu_c)) + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingModel {
    SqrtLaw,
    LogLaw,
}

/// A fitted infinite-period model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PeriodScalingFit {
    pub model: ScalingModel,
    /// Critical parameter, constrained below the smallest sample.
    pub mu_c: f64,
    /// `k` for the square-root law, `1/lambda` for the logarithmic law.
    pub coeff: f64,
    /// The O(1) constant.
    pub offset: f64,
    pub rms_residual: f64,
    /// Parameter interval covered by the samples.
    pub window: (f64, f64),
    /// False when the refinement hit the 200-iteration cap; the fields
    /// then hold the best iterate.
    pub converged: bool,
    pub iterations: usize,
}

fn basis(model: ScalingModel, gap: f64) -> f64 {
    match model {
        ScalingModel::SqrtLaw => 1.0 / gap.sqrt(),
        ScalingModel::LogLaw => -gap.ln(),
    }
}

fn basis_dmu_c(model: ScalingModel, gap: f64) -> f64 {
    match model {
        ScalingModel::SqrtLaw => 0.5 * gap.powf(-1.5),
        ScalingModel::LogLaw => 1.0 / gap,
    }
}

/// Linear profile solve: best (coeff, offset) and SSE for a fixed mu_c.
fn profile_solve(samples: &[(f64, f64)], model: ScalingModel, mu_c: f64) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let (mut sb, mut sbb, mut st, mut sbt, mut stt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(mu, t) in samples {
        let b = basis(model, mu - mu_c);
        sb += b;
        sbb += b * b;
        st += t;
        sbt += b * t;
        stt += t * t;
    }
    let det = n * sbb - sb * sb;
    if det.abs() < 1e-300 {
        return (0.0, st / n, stt - st * st / n);
    }
    let coeff = (n * sbt - sb * st) / det;
    let offset = (st - coeff * sb) / n;
    let sse = (stt - 2.0 * coeff * sbt - 2.0 * offset * st
        + coeff * coeff * sbb
        + 2.0 * coeff * offset * sb
        + n * offset * offset)
        .max(0.0);
    (coeff, offset, sse)
}

/// Nonlinear least squares over `(mu_c, coeff, offset)`.
///
/// `mu_c` is parametrized as `min(mu) - exp(theta)` to keep it below the
/// data; a profile scan over theta (the model is linear in the other two
/// parameters) seeds a Levenberg-damped Gauss-Newton refinement.
pub fn fit_period_scaling(samples: &[(f64, f64)], model: ScalingModel) -> Result<PeriodScalingFit> {
    if samples.len() < 5 {
        return Err(Error::InvalidParameter(format!(
            "fit_period_scaling needs at least 5 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|(m, t)| !(m.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidParameter(
            "samples must have finite mu and positive periods".into(),
        ));
    }
    let min_mu = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let max_mu = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let span = (max_mu - min_mu).max(1e-12);

    // Profile scan over theta.
    let mut best = (f64::INFINITY, 0.0);
    let lo = (1e-10 * span).ln();
    let hi = (1e2 * span).ln();
    let n_scan = 240;
    for i in 0..=n_scan {
        let theta = lo + (hi - lo) * i as f64 / n_scan as f64;
        let (_, _, sse) = profile_solve(samples, model, min_mu - theta.exp());
        if sse < best.0 {
            best = (sse, theta);
        }
    }
    // Golden-section polish of the scan minimum.
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let step = (hi - lo) / n_scan as f64;
    let (mut a, mut b) = (best.1 - step, best.1 + step);
    for _ in 0..80 {
        let c = b - gr * (b - a);
        let d = a + gr * (b - a);
        let fc = profile_solve(samples, model, min_mu - c.exp()).2;
        let fd = profile_solve(samples, model, min_mu - d.exp()).2;
        if fc < fd {
            b = d;
        } else {
            a = c;
        }
    }
    let mut theta = 0.5 * (a + b);
    let (mut coeff, mut offset, mut sse) = profile_solve(samples, model, min_mu - theta.exp());

    // Levenberg-damped Gauss-Newton over (theta, coeff, offset).
    let mut lambda = 1e-6;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < 200 {
        iterations += 1;
        let mu_c = min_mu - theta.exp();
        let mut jt_j = [[0.0f64; 3]; 3];
        let mut jt_r = [0.0f64; 3];
        for &(mu, t) in samples {
            let gap = mu - mu_c;
            let bval = basis(model, gap);
            let r = coeff * bval + offset - t;
            // d(mu_c)/d(theta) = -exp(theta).
            let dr = [
                coeff * basis_dmu_c(model, gap) * theta.exp(),
                bval,
                1.0,
            ];
            for i in 0..3 {
                jt_r[i] += dr[i] * r;
                for k in 0..3 {
                    jt_j[i][k] += dr[i] * dr[k];
                }
            }
        }
        let grad_norm = jt_r.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < 1e-14 * (1.0 + sse) {
            converged = true;
            break;
        }
        // Solve (JtJ + lambda diag) step = -Jtr.
        let mut m = jt_j;
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += lambda * (1.0 + jt_j[i][i]);
        }
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        if det.abs() < 1e-300 {
            break;
        }
        let inv = |r: usize, c: usize| -> f64 {
            let (r1, r2) = match r {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let (c1, c2) = match c {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            sign * (m[c1][r1] * m[c2][r2] - m[c1][r2] * m[c2][r1]) / det
        };
        let mut step = [0.0f64; 3];
        for (i, s) in step.iter_mut().enumerate() {
            for k in 0..3 {
                *s -= inv(i, k) * jt_r[k];
            }
        }
        let theta_new = theta + step[0];
        let coeff_new = coeff + step[1];
        let offset_new = offset + step[2];
        let mu_c_new = min_mu - theta_new.exp();
        let sse_new: f64 = samples
            .iter()
            .map(|&(mu, t)| {
                let r = coeff_new * basis(model, mu - mu_c_new) + offset_new - t;
                r * r
            })
            .sum();
        if sse_new.is_finite() && sse_new <= sse {
            let rel = (sse - sse_new) / (1.0 + sse);
            theta = theta_new;
            coeff = coeff_new;
            offset = offset_new;
            sse = sse_new;
            lambda = (lambda * 0.3).max(1e-12);
            if rel < 1e-15 {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    Ok(PeriodScalingFit {
        model,
        mu_c: min_mu - theta.exp(),
        coeff,
        offset,
        rms_residual: (sse / samples.len() as f64).sqrt(),
        window: (min_mu, max_mu),
        converged,
        iterations,
    })
}

/// Boundary classification produced by [`locate_boundary`] and refined by
/// [`discriminate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryType {
    Snic,
    Homoclinic,
    Heteroclinic,
    CyclicFold,
    Undetermined,
}

/// A straight probe path `t -> (mu, nu)`, `t` in [0, 1].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ParamPath {
    pub from: (f64, f64),
    pub to: (f64, f64),
}

impl ParamPath {
    pub fn at(&self, t: f64) -> (f64, f64) {
        (
            self.from.0 + t * (self.to.0 - self.from.0),
            self.from.1 + t * (self.to.1 - self.from.1),
        )
    }

    pub fn length(&self) -> f64 {
        (self.to.0 - self.from.0).hypot(self.to.1 - self.from.1)
    }
}

/// Probe configuration for [`locate_boundary`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CycleProbe {
    /// Seed for the cycle search at the path start.
    pub seed: State,
    /// Poincare ray angle.
    pub section_phi: f64,
    pub options: CycleOptions,
    /// Periods beyond this count as "no cycle within horizon".
    pub period_cap: f64,
}

impl Default for CycleProbe {
    fn default() -> Self {
        CycleProbe {
            seed: State::from_polar(2.0, 0.3),
            section_phi: 0.0,
            options: CycleOptions {
                transient: 300.0,
                max_time: 2e4,
                ..CycleOptions::default()
            },
            period_cap: 1e4,
        }
    }
}

/// Evidence gathered while bracketing a boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryEvidence {
    /// `(mu, nu, period)` at the existing-cycle bisection samples, in the
    /// order the bisection visited them.
    pub periods: Vec<(f64, f64, f64)>,
    /// Positive eigenvalue of the saddle nearest the dying cycle, if a
    /// saddle exists near the boundary.
    pub saddle_lambda: Option<f64>,
    /// Location of the equilibrium-count change (saddle-node) along the
    /// path, bracketed independently of the cycle.
    pub sn_location: Option<(f64, f64)>,
    /// Width of the saddle-node bracket in parameter units.
    pub sn_bracket_width: Option<f64>,
}

/// A located codimension-one boundary of cycle existence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryPoint {
    /// Midpoint of the final bracket.
    pub location: (f64, f64),
    /// Bracket endpoints: cycle still exists at `bracket.0`, gone at
    /// `bracket.1`.
    pub bracket: ((f64, f64), (f64, f64)),
    /// Bracket width in parameter units.
    pub bracket_width: f64,
    pub type_guess: BoundaryType,
    pub evidence: BoundaryEvidence,
}

fn cycle_at(
    params: &ModelParams,
    path: &ParamPath,
    t: f64,
    probe: &CycleProbe,
    seed: State,
) -> Result<Option<LimitCycle>> {
    let (mu, nu) = path.at(t);
    let p = params.at(mu, nu);
    let search = find_limit_cycle(&p, seed, probe.section_phi, &probe.options)?;
    Ok(match search {
        CycleSearch::Found(c) if c.period <= probe.period_cap => Some(c),
        _ => None,
    })
}

/// Bracket the saddle-node (equilibrium-count change) along the path, if
/// the count differs between the endpoints.
fn bracket_sn(params: &ModelParams, path: &ParamPath) -> Result<(Option<(f64, f64)>, Option<f64>)> {
    let count = |t: f64| -> Result<usize> {
        let (mu, nu) = path.at(t);
        Ok(fixed_points(&params.at(mu, nu))?.len())
    };
    let c0 = count(0.0)?;
    let c1 = count(1.0)?;
    if c0 == c1 {
        return Ok((None, None));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while (hi - lo) * path.length() > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if count(mid)? == c0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_sn = 0.5 * (lo + hi);
    Ok((Some(path.at(t_sn)), Some((hi - lo) * path.length())))
}

/// Positive eigenvalue of the saddle nearest to `cycle` at the path point
/// `t`, if any saddle exists there.
fn nearest_saddle_lambda(
    params: &ModelParams,
    path: &ParamPath,
    t: f64,
    cycle: &LimitCycle,
) -> Result<Option<f64>> {
    let (mu, nu) = path.at(t);
    let eqs = fixed_points(&params.at(mu, nu))?;
    let mut best: Option<(f64, &Equilibrium)> = None;
    for eq in eqs.iter().filter(|e| e.class == StabilityClass::Saddle) {
        let d = cycle
            .samples
            .iter()
            .map(|s| s.dist(&eq.position))
            .fold(f64::INFINITY, f64::min);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, eq));
        }
    }
    Ok(best.map(|(_, eq)| eq.eigenvalues.0.re.max(eq.eigenvalues.1.re)))
}

/// Bisect the disappearance of a probe cycle along a one-dimensional
/// parameter path.
///
/// The path start must carry a detectable stable cycle and its end must
/// not; the critical parameter is bracketed to width 1e-6 (parameter
/// units), collecting `(mu, nu, period)` evidence on the existing-cycle
/// side, an independent saddle-node bracket, and the nearby saddle
/// eigenvalue. The preliminary `type_guess` comes from the period behavior
/// of the last existing-cycle samples.
pub fn locate_boundary(
    params: &ModelParams,
    path: &ParamPath,
    probe: &CycleProbe,
) -> Result<BoundaryPoint> {
    let first = cycle_at(params, path, 0.0, probe, probe.seed)?;
    let Some(first_cycle) = first else {
        return Err(Error::NoCycleAtStart);
    };
    if cycle_at(params, path, 1.0, probe, first_cycle.section_point)?.is_some() {
        return Err(Error::Domain(
            "the probe cycle still exists at the end of the path; nothing to bracket".into(),
        ));
    }
    let mut periods: Vec<(f64, f64, f64)> = Vec::new();
    let (mu0, nu0) = path.at(0.0);
    periods.push((mu0, nu0, first_cycle.period));

    let length = path.length();
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut seed = first_cycle.section_point;
    let mut last_cycle = first_cycle;
    while (hi - lo) * length > 1e-6 {
        let mid = 0.5 * (lo + hi);
        match cycle_at(params, path, mid, probe, seed)? {
            Some(c) => {
                let (mu, nu) = path.at(mid);
                periods.push((mu, nu, c.period));
                seed = c.section_point;
                last_cycle = c;
                lo = mid;
            }
            None => {
                hi = mid;
            }
        }
    }

    let (sn_location, sn_bracket_width) = bracket_sn(params, path)?;
    let saddle_lambda = nearest_saddle_lambda(params, path, lo, &last_cycle)?;

    let location = path.at(0.5 * (lo + hi));
    let bracket = (path.at(lo), path.at(hi));
    let bracket_width = (hi - lo) * length;

    // Preliminary guess from period growth: bounded period at
    // disappearance points at a cyclic fold; divergence at an
    // infinite-period boundary.
    let base_period = periods.first().map(|p| p.2).unwrap_or(last_cycle.period);
    let final_period = periods.last().map(|p| p.2).unwrap_or(base_period);
    let diverging = final_period > 3.0 * base_period;
    let type_guess = if !diverging {
        BoundaryType::CyclicFold
    } else {
        match (sn_location, bracket_width) {
            (Some(sn), w) => {
                let d = (sn.0 - location.0).hypot(sn.1 - location.1);
                if d <= 2.0 * w.max(sn_bracket_width.unwrap_or(0.0)) {
                    BoundaryType::Snic
                } else {
                    BoundaryType::Homoclinic
                }
            }
            (None, _) => BoundaryType::Undetermined,
        }
    };
    Ok(BoundaryPoint {
        location,
        bracket,
        bracket_width,
        type_guess,
        evidence: BoundaryEvidence {
            periods,
            saddle_lambda,
            sn_location,
            sn_bracket_width,
        },
    })
}

/// Both scaling models fitted on the near and far sample windows.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WindowFits {
    pub near_sqrt: PeriodScalingFit,
    pub near_log: PeriodScalingFit,
    pub far_sqrt: PeriodScalingFit,
    pub far_log: PeriodScalingFit,
}

/// Fit both laws on the nearest 30% and the farthest 50% of the samples by
/// distance to `mu_c_hint`.
pub fn fit_windows(samples: &[(f64, f64)], mu_c_hint: f64) -> Result<WindowFits> {
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    sorted.sort_by(|x, y| {
        (x.0 - mu_c_hint)
            .abs()
            .partial_cmp(&(y.0 - mu_c_hint).abs())
            .unwrap()
    });
    let n = sorted.len();
    let n_near = ((n as f64 * 0.3).ceil() as usize).clamp(5, n);
    let n_far = ((n as f64 * 0.5).ceil() as usize).clamp(5, n);
    let near = &sorted[..n_near];
    let far = &sorted[n - n_far..];
    Ok(WindowFits {
        near_sqrt: fit_period_scaling(near, ScalingModel::SqrtLaw)?,
        near_log: fit_period_scaling(near, ScalingModel::LogLaw)?,
        far_sqrt: fit_period_scaling(far, ScalingModel::SqrtLaw)?,
        far_log: fit_period_scaling(far, ScalingModel::LogLaw)?,
    })
}

/// Final boundary classification.
///
/// SNIC requires the saddle-node and the cycle loss to coincide within the
/// bracket and the square-root law to dominate on all windows; a separate
/// saddle-node or a dominant near-window logarithmic law indicates a
/// saddle collision, upgraded from homoclinic to heteroclinic when the
/// residual Z_m symmetry carries the colliding saddle to distinct
/// simultaneous partners. Conflicting evidence is reported as
/// undetermined, never guessed.
pub fn discriminate(
    params: &ModelParams,
    boundary: &BoundaryPoint,
    fits: &WindowFits,
) -> BoundaryType {
    if boundary.type_guess == BoundaryType::CyclicFold {
        return BoundaryType::CyclicFold;
    }
    let sqrt_dominates_all = fits.near_sqrt.rms_residual < fits.near_log.rms_residual
        && fits.far_sqrt.rms_residual < fits.far_log.rms_residual;
    let log_dominates_near = fits.near_log.rms_residual < fits.near_sqrt.rms_residual;
    let sn_coincides = match boundary.evidence.sn_location {
        Some(sn) => {
            let d = (sn.0 - boundary.location.0).hypot(sn.1 - boundary.location.1);
            d <= 2.0
                * boundary
                    .bracket_width
                    .max(boundary.evidence.sn_bracket_width.unwrap_or(0.0))
        }
        None => false,
    };
    let symmetric = params
        .kind
        .residual_symmetry()
        .map(|m| m >= 2)
        .unwrap_or(false);
    if sn_coincides && sqrt_dominates_all {
        return BoundaryType::Snic;
    }
    let saddle_collision =
        (boundary.evidence.sn_location.is_some() && !sn_coincides) || log_dominates_near;
    if saddle_collision {
        // The colliding saddle sits away from the origin, so a residual
        // Z_m symmetry provides m distinct simultaneous partners.
        return if symmetric {
            BoundaryType::Heteroclinic
        } else {
            BoundaryType::Homoclinic
        };
    }
    BoundaryType::Undetermined
}

/// Configurations the gluing probe can report near the TB- point of the
/// `zbar` case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GluingConfig {
    /// The pair of small unstable cycles around the nontrivial foci.
    TwoSmallCycles,
    /// The single large unstable cycle around all three fixed points left
    /// by the gluing bifurcation.
    GluedLargeCycle,
    /// No unstable cycle (past the cyclic fold).
    NoUnstableCycle,
}

/// Detect the unstable-cycle configuration by reverse-time integration
/// (unstable cycles are attractors of the reversed flow) seeded beside the
/// stable focus; classification is by which equilibria the reverse
/// attractor encloses.
pub fn gluing_probe(params: &ModelParams) -> Result<GluingConfig> {
    if params.kind != PerturbationKind::ZmResidual(2) {
        return Err(Error::InvalidParameter(
            "gluing_probe requires kind = ZmResidual(2)".into(),
        ));
    }
    let eqs = fixed_points(params)?;
    let focus = eqs
        .iter()
        .find(|e| e.class.is_stable() && e.r() > 1e-6)
        .ok_or_else(|| {
            Error::Domain("no stable nontrivial focus to seed the reverse probe".into())
        })?;
    let partner = State {
        x: -focus.position.x,
        y: -focus.position.y,
    };
    let offset = 0.05 * (1.0 + focus.r());
    let seed = State {
        x: focus.position.x + offset,
        y: focus.position.y,
    };
    let f = rhs_unchecked(params, seed);
    let norm = f.x.hypot(f.y).max(1e-12);
    let section = Section::Plane {
        point: (focus.position.x, focus.position.y),
        nx: f.x / norm,
        ny: f.y / norm,
    };
    let opts = CycleOptions {
        transient: 100.0,
        max_time: 5e3,
        reverse_time: true,
        ..CycleOptions::default()
    };
    let search = find_limit_cycle_on_section(params, seed, section, &opts)?;
    match search {
        CycleSearch::Found(cycle) => {
            let around_origin = cycle.encloses(State::new(0.0, 0.0));
            let around_partner = cycle.encloses(partner);
            if around_origin && around_partner {
                Ok(GluingConfig::GluedLargeCycle)
            } else {
                Ok(GluingConfig::TwoSmallCycles)
            }
        }
        CycleSearch::NotFound(
            NotFoundReason::Escaped { .. }
            | NotFoundReason::HorizonExceeded { .. }
            | NotFoundReason::FixedPointAttractor { .. },
        ) => Ok(GluingConfig::NoUnstableCycle),
    }
}

/// Report of the degenerate Takens-Bogdanov verification for the `z^2`
/// case.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DegTbReport {
    pub alpha0: f64,
    pub disc_radius: f64,
    /// Fitted normal-form coefficient of `x^2` in the second component;
    /// the analytic value is `4 cos(alpha/2)`.
    pub quadratic_coeff: f64,
    /// Coefficient of `x^3`; analytic value `16 cos^2(alpha/2)`.
    pub cubic_coeff: f64,
    /// Coefficient of `x y`; it vanishes in this degenerate (cusp) case.
    pub xy_coeff: f64,
    /// Largest orbit-closure gap of the closed orbits at the degenerate
    /// Hopf segment (the normal form is Hamiltonian through third order).
    pub hamiltonian_residual: f64,
    /// Condition number of the polynomial fit after column scaling.
    pub condition_number: f64,
}

/// Vector field of the shifted and rescaled `z^2` system at its TB- point
/// in the Jordan-form plane `(x1, y1)`.
fn deg_tb_field(alpha0: f64, x1: f64, y1: f64) -> (f64, f64) {
    let (a, b) = (alpha0.sin(), alpha0.cos());
    let cos_half = (0.5 * alpha0).cos();
    let nu_tb = -0.5 / (1.0 + b);
    let params = ModelParams {
        mu: 0.0,
        nu: nu_tb,
        alpha0,
        epsilon: 1.0,
        kind: PerturbationKind::Quadratic,
    };
    // zeta = (y1 + 2 i x1) e^(-i alpha); z = z- + zeta / (2 cos(alpha/2)).
    let (sa, ca) = alpha0.sin_cos();
    let zeta = (y1 * ca + 2.0 * x1 * sa, 2.0 * x1 * ca - y1 * sa);
    let denom = 2.0 * (1.0 + b);
    let z_fix = (a / denom, (b + 1.0) / denom);
    let s = State {
        x: z_fix.0 + zeta.0 / (2.0 * cos_half),
        y: z_fix.1 + zeta.1 / (2.0 * cos_half),
    };
    let dz = rhs_unchecked(&params, s);
    // d(zeta)/d(tau) = 8 cos^3(alpha/2) dz/dt.
    let scale = 8.0 * cos_half.powi(3);
    let dzeta = (scale * dz.x, scale * dz.y);
    // y1 + 2 i x1 = e^(i alpha) zeta.
    let d_eta = (ca * dzeta.0 - sa * dzeta.1, sa * dzeta.0 + ca * dzeta.1);
    (d_eta.1 / 2.0, d_eta.0)
}

/// Fit a cubic polynomial planar vector field to samples on a disc around
/// the degenerate TB point and reduce it to the Takens-Bogdanov normal
/// form coefficients.
///
/// The reduction rewrites the system as a second-order equation and
/// applies the quadratic near-identity transformation; the reported
/// coefficients are invariant under the remaining freedom:
/// `A2 = q20`, `B2 = q11 + 2 p20`, `A3 = q30 - q11 p20 + p11 q20`.
pub fn degenerate_tb_check(alpha0: f64, disc_radius: f64) -> Result<DegTbReport> {
    if !(alpha0 > 0.0 && alpha0 < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidParameter(format!(
            "alpha0 must lie in (0, pi/2), got {alpha0}"
        )));
    }
    if !(disc_radius > 0.0 && disc_radius < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "disc radius must lie in (0, 1), got {disc_radius}"
        )));
    }
    // Sample the field on rings inside the disc.
    let radii = [0.35, 0.6, 0.8, 1.0];
    let n_angles = 20;
    let mut points = vec![(0.0, 0.0)];
    for r in radii {
        for k in 0..n_angles {
            let th = std::f64::consts::TAU * k as f64 / n_angles as f64 + 0.05 * r;
            points.push((disc_radius * r * th.cos(), disc_radius * r * th.sin()));
        }
    }
    let monomials: [(i32, i32); 10] = [
        (0, 0),
        (1, 0),
        (0, 1),
        (2, 0),
        (1, 1),
        (0, 2),
        (3, 0),
        (2, 1),
        (1, 2),
        (0, 3),
    ];
    let n_pts = points.len();
    let mut design = DMatrix::zeros(n_pts, monomials.len());
    let mut rhs_x = DVector::zeros(n_pts);
    let mut rhs_y = DVector::zeros(n_pts);
    for (i, &(x, y)) in points.iter().enumerate() {
        for (j, &(px, py)) in monomials.iter().enumerate() {
            design[(i, j)] = x.powi(px) * y.powi(py);
        }
        let (fx, fy) = deg_tb_field(alpha0, x, y);
        rhs_x[i] = fx;
        rhs_y[i] = fy;
    }
    // Column scaling keeps the disc-radius powers from wrecking the
    // conditioning.
    let mut scales = vec![1.0; monomials.len()];
    for j in 0..monomials.len() {
        let norm = design.column(j).norm();
        if norm > 0.0 {
            scales[j] = norm;
            for i in 0..n_pts {
                design[(i, j)] /= norm;
            }
        }
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let condition_number = smax / smin.max(1e-300);
    if condition_number > 1e10 {
        return Err(Error::IllConditioned(format!(
            "polynomial fit condition number {condition_number:.3e}; adjust the disc radius"
        )));
    }
    let sol_x = svd
        .solve(&rhs_x, 1e-14)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    let sol_y = svd
        .solve(&rhs_y, 1e-14)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    let coef = |sol: &DVector<f64>, idx: usize| sol[idx] / scales[idx];
    // Index map into `monomials`.
    let (ix2, ixy, ix3) = (3, 4, 6);
    let p20 = coef(&sol_x, ix2);
    let p11 = coef(&sol_x, ixy);
    let q20 = coef(&sol_y, ix2);
    let q11 = coef(&sol_y, ixy);
    let q30 = coef(&sol_y, ix3);
    let quadratic_coeff = q20;
    let xy_coeff = q11 + 2.0 * p20;
    let cubic_coeff = q30 - q11 * p20 + p11 * q20;

    // Orbit-closure residual on the degenerate Hopf segment: the loop
    // interior is filled with periodic orbits, so one return must close
    // the curve.
    let b = alpha0.cos();
    let nu_mid = 0.5 * (-0.5 / (1.0 + b) + 0.5 / (1.0 - b));
    let params = ModelParams {
        mu: 0.0,
        nu: nu_mid,
        alpha0,
        epsilon: 1.0,
        kind: PerturbationKind::Quadratic,
    };
    let eqs = fixed_points(&params)?;
    let center = eqs
        .iter()
        .find(|e| e.label == EqLabel::Pminus)
        .ok_or_else(|| Error::Domain("no interior branch point on the Hopf segment".into()))?;
    let saddle = eqs
        .iter()
        .find(|e| e.label == EqLabel::Pplus)
        .ok_or_else(|| Error::Domain("no saddle on the Hopf segment".into()))?;
    let gap_dist = center.position.dist(&saddle.position);
    let mut residual: f64 = 0.0;
    for frac in [0.2, 0.45] {
        let seed = State {
            x: center.position.x + frac * gap_dist,
            y: center.position.y,
        };
        let f = rhs_unchecked(&params, seed);
        let norm = f.x.hypot(f.y).max(1e-12);
        let section = Section::Plane {
            point: (seed.x, seed.y),
            nx: f.x / norm,
            ny: f.y / norm,
        };
        let opts = CycleOptions {
            transient: 0.0,
            max_time: 2e3,
            tolerances: Tolerances::default(),
            radius_tol: 1e-6,
            reverse_time: false,
        };
        if let CycleSearch::Found(orbit) =
            find_limit_cycle_on_section(&params, seed, section, &opts)?
        {
            let gap = orbit
                .samples
                .first()
                .unwrap()
                .dist(orbit.samples.last().unwrap());
            residual = residual.max(gap);
        } else {
            return Err(Error::NoConvergence(
                "closed orbit did not return to the section".into(),
            ));
        }
    }

    Ok(DegTbReport {
        alpha0,
        disc_radius,
        quadratic_coeff,
        cubic_coeff,
        xy_coeff,
        hamiltonian_residual: residual,
        condition_number,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn synthetic_sqrt_fit_recovers_parameters() {
        let samples: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let mu = 2.001 + 0.199 * i as f64 / 19.0;
                (mu, 5.0 / (mu - 2.0).sqrt() + 1.0)
            })
            .collect();
        let fit = fit_period_scaling(&samples, ScalingModel::SqrtLaw).unwrap();
        assert_relative_eq!(fit.mu_c, 2.0, epsilon = 1e-6);
        assert_relative_eq!(fit.coeff, 5.0, epsilon = 1e-6);
        assert_relative_eq!(fit.offset, 1.0, epsilon = 1e-6);
        assert!(fit.rms_residual < 1e-9);
    }

    #[test]
    fn synthetic_log_fit_recovers_parameters() {
        let samples: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let mu = 2.001 + 0.199 * i as f64 / 19.0;
                (mu, 3.0 * (1.0 / (mu - 2.0)).ln() + 0.7)
            })
            .collect();
        let fit = fit_period_scaling(&samples, ScalingModel::LogLaw).unwrap();
        assert_relative_eq!(fit.mu_c, 2.0, epsilon = 1e-6);
        assert_relative_eq!(fit.coeff, 3.0, epsilon = 1e-6);
        assert_relative_eq!(fit.offset, 0.7, epsilon = 1e-6);
        assert!(fit.rms_residual < 1e-9);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let too_few = vec![(2.1, 3.0); 4];
        assert!(fit_period_scaling(&too_few, ScalingModel::SqrtLaw).is_err());
        let bad = vec![(2.1, -1.0); 6];
        assert!(fit_period_scaling(&bad, ScalingModel::LogLaw).is_err());
    }

    #[test]
    fn deg_tb_jordan_linear_part() {
        // The transformed field must have linear part [[0, 1], [0, 0]].
        for alpha0 in [0.3, std::f64::consts::FRAC_PI_4, 1.0] {
            let h = 1e-6;
            let (fx_x, fy_x) = deg_tb_field(alpha0, h, 0.0);
            let (fx_y, fy_y) = deg_tb_field(alpha0, 0.0, h);
            assert!((fx_x / h).abs() < 1e-4, "dx1dot/dx1 = {}", fx_x / h);
            assert!((fy_x / h).abs() < 1e-4);
            assert_relative_eq!(fx_y / h, 1.0, epsilon = 1e-4);
            assert!((fy_y / h).abs() < 1e-4);
        }
    }

    #[test]
    fn deg_tb_coefficients_match_normal_form() {
        for alpha0 in [0.3, std::f64::consts::FRAC_PI_4] {
            let report = degenerate_tb_check(alpha0, 1e-3).unwrap();
            let half = 0.5 * alpha0;
            assert_relative_eq!(
                report.quadratic_coeff,
                4.0 * half.cos(),
                max_relative = 1e-5
            );
            assert_relative_eq!(
                report.cubic_coeff,
                16.0 * half.cos() * half.cos(),
                max_relative = 1e-4
            );
            assert!(report.xy_coeff.abs() <= 1e-6, "xy = {}", report.xy_coeff);
            assert!(report.hamiltonian_residual <= 1e-6);
        }
    }
}

//! Deconvolution `F * G = delta` and its split `G = lambda C_mu + f`.
//!
//! The constants `lambda`, `mu` are chosen so that the error kernel
//! `E = (delta - mu D) - lambda F` has vanishing zeroth and second moments;
//! then `f = C_mu * E * G` decays faster than the Gaussian term.
//!
//! The exponent arithmetic at the bottom is done in exact rationals.

use num_complex::Complex64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{a_d, walk_kernel, walk_symbol};
use crate::lattice::{
    bracket_of_norm, check_symmetry, convolve, convolve_at, fit_envelope, fit_power_law, moment, Directions,
    LatticeFunction, LatticePoint, MultiIndex,
};
use crate::orbit::TupleSpace;
use crate::spectral::{forward_transform, inverse_on_box_many, spectral_derivative, SpectralField, TorusGrid};

/// `|F^(0)|` below this counts as critical.
pub const CRITICAL_THRESHOLD: f64 = 1e-12;

/// Relative tolerance on the two vanishing moments of `E`.
pub const MOMENT_TOLERANCE: f64 = 1e-10;

// ----- constants and error kernel ----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalConstants {
    pub lambda: f64,
    pub mu: f64,
    /// `-sum |x|^2 F(x)`.
    #[serde(rename = "K_F_second")]
    pub k_f_second: f64,
    #[serde(rename = "F_hat_zero")]
    pub f_hat_zero: f64,
    pub critical: bool,
}

/// `lambda = 1/(F^(0) + K''_F)` and `mu = 1 - lambda F^(0)`.
pub fn critical_constants(f: &LatticeFunction) -> Result<CriticalConstants> {
    if !f.is_fully_symmetric() && !check_symmetry(f).symmetric {
        return Err(Error::NotSymmetric("kernel F".into()));
    }
    let f0 = moment(f, 0.0, false);
    if f0 < -CRITICAL_THRESHOLD {
        return Err(Error::AssumptionFailed(format!("F^(0) = {f0:e} < 0")));
    }
    let k2 = -moment(f, 2.0, false);
    let critical = f0.abs() <= CRITICAL_THRESHOLD;
    let f0 = if critical { 0.0 } else { f0 };
    let denom = f0 + k2;
    if !(denom > 0.0) {
        return Err(Error::NonPositiveDenominator(denom));
    }
    let lambda = 1.0 / denom;
    let mu = if critical { 1.0 } else { 1.0 - lambda * f0 };
    Ok(CriticalConstants {
        lambda,
        mu,
        k_f_second: k2,
        f_hat_zero: f0,
        critical,
    })
}

#[derive(Debug, Clone)]
pub struct ErrorKernel {
    pub e: LatticeFunction,
    /// `sum E`.
    pub zeroth: f64,
    /// `sum |x|^2 E`.
    pub second: f64,
    /// `sum |x|^2 |E|`, the scale both moments are compared against.
    pub scale: f64,
}

impl ErrorKernel {
    pub fn relative_residuals(&self) -> (f64, f64) {
        if self.scale == 0.0 {
            (self.zeroth.abs(), self.second.abs())
        } else {
            (self.zeroth.abs() / self.scale, self.second.abs() / self.scale)
        }
    }
}

/// `E = (delta - mu D) - lambda F` with its moment report.
pub fn error_kernel(f: &LatticeFunction, c: &CriticalConstants) -> Result<ErrorKernel> {
    let e = walk_kernel(f.dim(), c.mu).linear_combination(1.0, f, -c.lambda)?;
    let zeroth = moment(&e, 0.0, false);
    let second = moment(&e, 2.0, false);
    let scale = moment(&e, 2.0, true);
    let tol = MOMENT_TOLERANCE * scale.max(f64::MIN_POSITIVE);
    if zeroth.abs() > tol.max(1e-15) || second.abs() > tol.max(1e-15) {
        return Err(Error::MomentResidual { zeroth, second, scale });
    }
    Ok(ErrorKernel { e, zeroth, second, scale })
}

// ----- decay fits ----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub window: (f64, f64),
    pub directions: Directions,
    pub r_squared: f64,
    pub radii: usize,
}

impl DecayFit {
    /// The result for a function vanishing on the whole window.
    pub fn zero(window: (f64, f64), directions: Directions) -> Self {
        Self {
            exponent: f64::INFINITY,
            amplitude: 0.0,
            window,
            directions,
            r_squared: 1.0,
            radii: 0,
        }
    }

    pub fn is_zero_sentinel(&self) -> bool {
        self.exponent.is_infinite() && self.amplitude == 0.0
    }
}

/// Power-law fit of `|f|` over the window; needs 8 radii with nonzero `f`.
pub fn decay_fit(f: &LatticeFunction, window: (f64, f64), directions: Directions) -> Result<DecayFit> {
    let (r_min, r_max) = window;
    if !(r_min >= 1.0 && r_min < r_max && r_max <= f.radius() as f64) {
        return Err(Error::InvalidParameter(format!(
            "fit window [{r_min}, {r_max}] must lie inside the box of radius {}",
            f.radius()
        )));
    }
    match fit_power_law(f, r_min, r_max, directions) {
        None if all_zero_in(f, window) => Ok(DecayFit::zero(window, directions)),
        Some(fit) if fit.radii >= 8 => Ok(DecayFit {
            exponent: fit.exponent,
            amplitude: fit.amplitude,
            window,
            directions,
            r_squared: fit.r_squared,
            radii: fit.radii,
        }),
        Some(fit) if fit.samples == 0 => Ok(DecayFit::zero(window, directions)),
        other => Err(Error::InsufficientData(format!(
            "{} radii with nonzero values in [{r_min}, {r_max}] along {directions:?}, need 8",
            other.map_or(0, |f| f.radii)
        ))),
    }
}

fn all_zero_in(f: &LatticeFunction, (r_min, r_max): (f64, f64)) -> bool {
    f.samples().iter().all(|(x, v, _)| {
        let r = LatticePoint(x.clone()).norm();
        r < r_min || r > r_max || *v == 0.0
    })
}

/// Copy of `f` with entries of modulus at most `floor` set to zero.
fn denoised(f: &LatticeFunction, floor: f64) -> LatticeFunction {
    let values: Vec<f64> = f.raw_values().iter().map(|&v| if v.abs() <= floor { 0.0 } else { v }).collect();
    LatticeFunction::orbit(f.dim(), f.radius(), values).expect("same shape")
}

// ----- deconvolution -------------------------------------------------------------------

/// `max |(F * G)(x) - delta(x)|` at a subset of points where the periodic
/// convolution is exact from the box values of `G`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TorusIdentityCheck {
    pub max_residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct DeconvolutionResult {
    pub g: LatticeFunction,
    pub c: LatticeFunction,
    pub f: LatticeFunction,
    pub constants: CriticalConstants,
    pub error: ErrorKernel,
    /// Fit of `|f|` over the annulus using all directions.
    pub decay: DecayFit,
    /// Axis and diagonal fits, when the window has enough radii along them.
    pub directional: Vec<DecayFit>,
    pub torus_identity: TorusIdentityCheck,
    /// Max over nodes of `|(1/F^ - lambda/A^) - E^/(A^ F^)|`, relative to
    /// `|1/F^| + |lambda/A^|`.
    pub split_consistency: f64,
    /// `G(x) <x>^{d-2}` at `x = (R/3) e_1`.
    pub g_scaled_at_third: f64,
    /// `a_d / K''_F`, the limit of `G(x) <x>^{d-2}` in the critical case.
    pub amplitude_target: f64,
    pub grid: TorusGrid,
    pub annulus: (f64, f64),
    /// Values of `|f|` at or below this were treated as zero in the fits.
    pub noise_floor: f64,
}

impl DeconvolutionResult {
    /// `G(x) <x>^{d-2}` relative to `a_d / K''_F`, minus one.
    pub fn amplitude_deviation(&self) -> f64 {
        self.g_scaled_at_third / self.amplitude_target - 1.0
    }
}

/// Points for the torus identity: orbit representatives with `|x|_inf <= 1`,
/// plus axis and diagonal points up to `reach`.
fn identity_points(d: usize, reach: usize) -> Vec<LatticePoint> {
    let mut pts: Vec<LatticePoint> = TupleSpace::new(reach.min(1) + 1, d)
        .iter()
        .map(|t| LatticePoint(t.iter().map(|&a| a as i64).collect()))
        .collect();
    let mut ts = vec![reach / 2, reach];
    ts.retain(|&t| t >= 2);
    ts.dedup();
    for t in ts {
        pts.push(LatticePoint::on_axis(d, 0, t as i64));
        pts.push(LatticePoint(vec![t as i64; d]));
    }
    pts
}

pub fn torus_identity_check(f: &LatticeFunction, g: &LatticeFunction) -> Result<TorusIdentityCheck> {
    if g.radius() < f.radius() {
        return Err(Error::InvalidParameter(format!(
            "G box radius {} smaller than kernel radius {}",
            g.radius(),
            f.radius()
        )));
    }
    let pts = identity_points(f.dim(), g.radius() - f.radius());
    let vals = convolve_at(f, g, &pts)?;
    let max_residual = pts
        .iter()
        .zip(&vals)
        .map(|(x, v)| {
            let want = if x.norm_sq() == 0 { 1.0 } else { 0.0 };
            (v - want).abs()
        })
        .fold(0.0, f64::max);
    Ok(TorusIdentityCheck {
        max_residual,
        points: pts.len(),
    })
}

/// Solves `F * G = delta` on the torus and splits off `lambda C_mu`.
pub fn deconvolve(f: &LatticeFunction, radius: usize, grid: &TorusGrid) -> Result<DeconvolutionResult> {
    deconvolve_with(f, radius, grid, None)
}

/// As [`deconvolve`], with an explicit fit annulus (default `[R/4, R/2]`).
pub fn deconvolve_with(
    f: &LatticeFunction,
    radius: usize,
    grid: &TorusGrid,
    annulus: Option<(f64, f64)>,
) -> Result<DeconvolutionResult> {
    let d = f.dim();
    if grid.dim != d {
        return Err(Error::DimensionMismatch(grid.dim, d));
    }
    if !grid.shifted {
        return Err(Error::InvalidParameter("deconvolution needs the shifted grid".into()));
    }
    if grid.m() < 4 * radius {
        return Err(Error::InvalidParameter(format!(
            "grid M = {} below 4R = {}",
            grid.m(),
            4 * radius
        )));
    }
    let constants = critical_constants(f)?;
    let error = error_kernel(f, &constants)?;
    let f_hat = forward_transform(f, grid)?;
    let a_hat = walk_symbol(*grid, constants.mu);
    let mut both = inverse_on_box_many(&[&f_hat, &a_hat], radius, true)?;
    let c = both.pop().expect("two channels").declare_symmetric();
    let g = both.pop().expect("two channels").declare_symmetric();
    let split = g.linear_combination(1.0, &c, -constants.lambda)?.declare_symmetric();

    let noise_floor = 64.0 * f64::EPSILON * g.sup_norm();
    let quiet = if split.is_fully_symmetric() { denoised(&split, noise_floor) } else { split.clone() };
    let annulus = annulus.unwrap_or((radius as f64 / 4.0, radius as f64 / 2.0));
    let decay = decay_fit(&quiet, annulus, Directions::All)?;
    let directional = [Directions::Axis, Directions::Diagonal]
        .into_iter()
        .filter_map(|dir| decay_fit(&quiet, annulus, dir).ok())
        .collect();

    let torus_identity = torus_identity_check(f, &g)?;
    let e_hat = forward_transform(&error.e, grid)?;
    let split_consistency = split_consistency(&f_hat, &a_hat, &e_hat, constants.lambda)?;

    let third = (radius / 3).max(1) as i64;
    let g_scaled_at_third = g.value_at(&LatticePoint::on_axis(d, 0, third)) * (third as f64).powi(d as i32 - 2);
    let amplitude_target = a_d(d)? / constants.k_f_second;
    Ok(DeconvolutionResult {
        g,
        c,
        f: split,
        constants,
        error,
        decay,
        directional,
        torus_identity,
        split_consistency,
        g_scaled_at_third,
        amplitude_target,
        grid: *grid,
        annulus,
        noise_floor,
    })
}

fn split_consistency(f_hat: &SpectralField, a_hat: &SpectralField, e_hat: &SpectralField, lambda: f64) -> Result<f64> {
    let rel = SpectralField::combine(&[f_hat, a_hat, e_hat], |v| {
        let (fv, av, ev) = (v[0], v[1], v[2]);
        let lhs = 1.0 / fv - lambda / av;
        let rhs = ev / (av * fv);
        let scale = (1.0 / fv).norm() + (lambda / av).norm();
        Complex64::new((lhs - rhs).norm() / scale, 0.0)
    })?;
    let mut worst = 0.0_f64;
    rel.for_each_class(|_, v, _| worst = worst.max(v.re));
    Ok(worst)
}

// ----- inhomogeneous equation ---------------------------------------------------------

#[derive(Debug, Clone)]
pub struct InhomogeneousResult {
    pub h: LatticeFunction,
    pub g: LatticeFunction,
    /// `sup |H - g * G|` over the inner half box.
    pub cross_check: f64,
    /// `a_d sum g / K''_F`.
    pub amplitude_target: f64,
    /// Max over the annulus of `|H(x) <x>^{d-2} / target - 1|`.
    pub max_amplitude_deviation: f64,
    pub annulus: (f64, f64),
}

/// Solves `F * H = g` on the torus for critical `F`.
pub fn inhomogeneous_solve(
    f: &LatticeFunction,
    source: &LatticeFunction,
    radius: usize,
    grid: &TorusGrid,
    rho: f64,
) -> Result<InhomogeneousResult> {
    let d = f.dim();
    if source.dim() != d {
        return Err(Error::DimensionMismatch(source.dim(), d));
    }
    if !source.is_fully_symmetric() && !check_symmetry(source).symmetric {
        return Err(Error::NotSymmetric("source g".into()));
    }
    if 2 * source.radius() > radius {
        return Err(Error::InvalidParameter(format!(
            "source radius {} exceeds half the box radius {radius}",
            source.radius()
        )));
    }
    if source.radius() >= 4 {
        let env = fit_envelope(source, 2.0, source.radius() as f64)?;
        let need = d as f64 + rho.min(2.0);
        if !env.is_zero_sentinel() && env.b < need {
            return Err(Error::AssumptionFailed(format!(
                "source envelope exponent {:.4} below d + min(rho, 2) = {need}",
                env.b
            )));
        }
    }
    let constants = critical_constants(f)?;
    if !constants.critical {
        return Err(Error::AssumptionFailed(format!(
            "inhomogeneous solve needs critical F, F^(0) = {:e}",
            constants.f_hat_zero
        )));
    }
    let f_hat = forward_transform(f, grid)?;
    f_hat.check_poles()?;
    let s_hat = forward_transform(source, grid)?;
    let ratio = SpectralField::combine(&[&s_hat, &f_hat], |v| v[0] / v[1])?;
    let inv = SpectralField::combine(&[&f_hat], |v| 1.0 / v[0])?;
    let mut both = inverse_on_box_many(&[&ratio, &inv], radius, false)?;
    let g = both.pop().expect("two channels").declare_symmetric();
    let h = both.pop().expect("two channels").declare_symmetric();

    let direct = convolve(source, &g)?;
    let half = radius / 2;
    let mut cross_check = 0.0_f64;
    for t in TupleSpace::new(half + 1, d).iter() {
        let x: Vec<i64> = t.iter().map(|&a| a as i64).collect();
        cross_check = cross_check.max((h.value(&x) - direct.value(&x)).abs());
    }

    let mass = moment(source, 0.0, false);
    let amplitude_target = a_d(d)? * mass / constants.k_f_second;
    let annulus = (radius as f64 / 4.0, radius as f64 / 2.0);
    let mut worst = 0.0_f64;
    for (x, v, _) in h.samples() {
        let r = LatticePoint(x).norm();
        if r >= annulus.0 && r <= annulus.1 {
            let scaled = v * bracket_of_norm(r).powi(d as i32 - 2);
            worst = worst.max((scaled / amplitude_target - 1.0).abs());
        }
    }
    Ok(InhomogeneousResult {
        h,
        g,
        cross_check,
        amplitude_target,
        max_amplitude_deviation: worst,
        annulus,
    })
}

// ----- symbol bounds on E ---------------------------------------------------------------

/// `max_k |E^_alpha(k)| / |k|^{2 + sigma - |alpha|}` over the grid nodes.
pub fn error_symbol_ratio(e: &LatticeFunction, alpha: &MultiIndex, sigma: f64, grid: &TorusGrid) -> Result<f64> {
    if !(sigma > 0.0 && sigma <= 2.0) {
        return Err(Error::InvalidParameter(format!("sigma = {sigma} outside (0, 2]")));
    }
    let field = spectral_derivative(e, alpha, grid)?;
    let power = 2.0 + sigma - alpha.order() as f64;
    let mut worst = 0.0_f64;
    field.for_each_class(|k, v, _| {
        let k2: f64 = k.iter().map(|c| c * c).sum();
        if k2 > 0.0 {
            worst = worst.max(v.norm() / k2.sqrt().powf(power));
        }
    });
    Ok(worst)
}

// ----- exponent arithmetic ---------------------------------------------------------------

pub type Rational = Ratio<i64>;

/// `max((d - 8)/2, 0)`, the lower limit for `rho`.
pub fn rho_lower_bound(d: u32) -> Rational {
    let half = Rational::new(d as i64 - 8, 2);
    if half > Rational::from_integer(0) {
        half
    } else {
        Rational::from_integer(0)
    }
}

fn min_r(a: Rational, b: Rational) -> Rational {
    if a < b {
        a
    } else {
        b
    }
}

/// Admissible decay exponents for given `(d, rho)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentBudget {
    pub d: u32,
    pub rho: Rational,
    /// Supremum of the admissible extra decay `s`.
    pub s_sup: Rational,
    /// Largest integer `s` that is admissible, capped at 1.
    pub s0: u32,
    /// `d - 2 + s0`, the number of derivatives taken on `f^`.
    pub n_d: u32,
    /// `min(d - 2 + min(rho, 2), d/2 + 2 + rho)`, which `n_d` stays below.
    pub n_d_bound: Rational,
    pub n_d_bound_ok: bool,
}

pub fn admissible_s(d: u32, rho: Rational) -> Result<ExponentBudget> {
    if d <= 2 {
        return Err(Error::DimensionTooSmall(d as usize));
    }
    let bound = rho_lower_bound(d);
    if rho <= bound {
        return Err(Error::RhoOutOfRange {
            d,
            rho: rho.to_string(),
            bound: bound.to_string(),
        });
    }
    let two = Rational::from_integer(2);
    let one = Rational::from_integer(1);
    let di = d as i64;
    let s_sup = if d <= 8 {
        min_r(rho, two)
    } else {
        min_r(rho - Rational::new(di - 8, 2), two)
    };
    let s0 = if rho > one + bound { 1 } else { 0 };
    let n_d = d - 2 + s0;
    let n_d_bound = min_r(
        Rational::from_integer(di - 2) + min_r(rho, two),
        Rational::new(di, 2) + two + rho,
    );
    Ok(ExponentBudget {
        d,
        rho,
        s_sup,
        s0,
        n_d,
        n_d_bound,
        n_d_bound_ok: Rational::from_integer(n_d as i64) < n_d_bound,
    })
}

/// Parses `"2"`, `"0.45"`, `"-1.5"` or `"3/7"` exactly.
pub fn parse_ratio(s: &str) -> Result<Rational> {
    let bad = || Error::InvalidParameter(format!("not a decimal or fraction: {s:?}"));
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| bad())?;
        let d: i64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 15 {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let numer: i64 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
    let denom = 10i64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
    let r = Rational::new(numer, denom);
    Ok(if neg { -r } else { r })
}

/// Orders of one split of a multi-index: derivatives landing on the
/// smooth factors, on the singular factor, and on the `G`-like factors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub delta_orders: Vec<u32>,
    pub alpha2: u32,
    pub gamma_orders: Vec<u32>,
}

impl Split {
    pub fn order(&self) -> u32 {
        self.delta_orders.iter().sum::<u32>() + self.alpha2 + self.gamma_orders.iter().sum::<u32>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitBudget {
    pub split: Split,
    /// Strict lower bound on `1/r`.
    pub inverse_r_lower: Rational,
    /// `r = 1` admissible: the lower bound is below 1.
    pub r1_feasible: bool,
    /// `|gamma| / d`.
    pub q1_threshold: Rational,
    /// `(2 - sigma + |gamma| + eta) / d`.
    pub q2_threshold: Rational,
}

/// Holder budget per split: `1/r > sum|delta|/d + (2 - sigma + |alpha2| + eta)/d + sum|gamma|/d`.
pub fn holder_budget(d: u32, rho: Rational, sigma: Rational, eta: Rational, splits: &[Split]) -> Result<Vec<SplitBudget>> {
    let zero = Rational::from_integer(0);
    let one = Rational::from_integer(1);
    let two = Rational::from_integer(2);
    if d <= 2 {
        return Err(Error::DimensionTooSmall(d as usize));
    }
    if !(sigma > zero && sigma <= two && sigma < rho) {
        return Err(Error::InvalidParameter(format!(
            "sigma = {sigma} must satisfy 0 < sigma <= 2 and sigma < rho = {rho}"
        )));
    }
    if !(eta >= zero && eta <= one) {
        return Err(Error::InvalidParameter(format!("eta = {eta} outside [0, 1]")));
    }
    let dr = Rational::from_integer(d as i64);
    Ok(splits
        .iter()
        .map(|s| {
            let delta: i64 = s.delta_orders.iter().map(|&a| a as i64).sum();
            let gamma: i64 = s.gamma_orders.iter().map(|&a| a as i64).sum();
            let inverse_r_lower = (Rational::from_integer(delta) + two - sigma + Rational::from_integer(s.alpha2 as i64)
                + eta
                + Rational::from_integer(gamma))
                / dr;
            SplitBudget {
                split: s.clone(),
                inverse_r_lower,
                r1_feasible: inverse_r_lower < one,
                q1_threshold: Rational::from_integer(gamma) / dr,
                q2_threshold: (two - sigma + Rational::from_integer(gamma) + eta) / dr,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{perturbed_kernel, srw_kernel, ModelKind, ModelSpec};

    fn r(s: &str) -> Rational {
        parse_ratio(s).unwrap()
    }

    #[test]
    fn constants_of_walk_kernels() {
        for mu0 in [0.25, 0.5, 0.75, 1.0] {
            let c = critical_constants(&srw_kernel(3, mu0).unwrap()).unwrap();
            assert_eq!(c.lambda, 1.0);
            assert!((c.mu - mu0).abs() < 1e-15);
            assert!((c.k_f_second - mu0).abs() < 1e-15);
            assert_eq!(c.critical, mu0 == 1.0);
        }
    }

    #[test]
    fn rejects_bad_kernels() {
        let neg = LatticeFunction::delta(3).scaled(-1.0);
        assert!(critical_constants(&neg).is_err());
        // F^(0) = 0 and K'' < 0
        let flipped = srw_kernel(3, 1.0).unwrap().scaled(-1.0);
        assert!(matches!(critical_constants(&flipped), Err(Error::NonPositiveDenominator(_))));
    }

    #[test]
    fn error_kernel_of_walk_is_zero() {
        let f = srw_kernel(4, 0.5).unwrap();
        let c = critical_constants(&f).unwrap();
        let e = error_kernel(&f, &c).unwrap();
        assert!(e.e.sup_norm() <= 1e-15);
    }

    fn synthetic(d: usize, rho: f64, tail: usize) -> LatticeFunction {
        let spec = ModelSpec {
            kind: ModelKind::Perturbed,
            dim: d,
            mu0: 1.0,
            rho,
            epsilon: 0.05,
            tail_radius: tail,
            seed: None,
            exploratory: false,
        };
        perturbed_kernel(&spec).unwrap().kernel
    }

    #[test]
    fn error_kernel_moments_vanish_and_scale() {
        let f = synthetic(3, 0.5, 8);
        let c = critical_constants(&f).unwrap();
        assert!(c.critical && c.mu == 1.0);
        let e = error_kernel(&f, &c).unwrap();
        let (z, s) = e.relative_residuals();
        assert!(z < 1e-12 && s < 1e-12);
        assert!(e.e.sup_norm() > 0.0);
        let c2 = critical_constants(&f.scaled(2.0)).unwrap();
        assert!((c2.lambda - c.lambda / 2.0).abs() < 1e-15);
        let e2 = error_kernel(&f.scaled(2.0), &c2).unwrap();
        for (a, b) in e.e.raw_values().iter().zip(e2.e.raw_values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn trivial_deconvolution_is_exact() {
        let f = srw_kernel(3, 1.0).unwrap();
        let grid = TorusGrid::shifted(3, 32).unwrap();
        let res = deconvolve(&f, 8, &grid).unwrap();
        assert!(res.f.sup_norm() <= 1e-12);
        assert!(res.decay.is_zero_sentinel());
        assert!(res.torus_identity.max_residual < 1e-11);
        assert!(res.split_consistency < 1e-10);
    }

    #[test]
    fn synthetic_deconvolution_d3() {
        let f = synthetic(3, 0.5, 8);
        let grid = TorusGrid::shifted(3, 64).unwrap();
        let res = deconvolve(&f, 16, &grid).unwrap();
        assert!(res.torus_identity.max_residual < 1e-11, "{:?}", res.torus_identity);
        assert!(res.split_consistency < 1e-10);
        // G = lambda C + f exactly
        let rebuilt = res.c.linear_combination(res.constants.lambda, &res.f, 1.0).unwrap();
        assert_eq!(rebuilt.raw_values(), res.g.raw_values());
        assert!(res.decay.exponent > 1.0, "{:?}", res.decay);
    }

    #[test]
    fn scaling_covariance() {
        let f = synthetic(3, 0.5, 8);
        let grid = TorusGrid::shifted(3, 64).unwrap();
        let a = deconvolve(&f, 16, &grid).unwrap();
        let b = deconvolve(&f.scaled(2.0), 16, &grid).unwrap();
        assert!((a.decay.exponent - b.decay.exponent).abs() < 1e-6);
        assert!((a.g.value(&[3, 1, 0]) - 2.0 * b.g.value(&[3, 1, 0])).abs() < 1e-12);
    }

    #[test]
    fn inhomogeneous_with_delta_source_is_g() {
        let f = srw_kernel(3, 1.0).unwrap();
        let grid = TorusGrid::shifted(3, 32).unwrap();
        let one = inhomogeneous_solve(&f, &LatticeFunction::delta(3), 8, &grid, 1.0).unwrap();
        for (a, b) in one.h.raw_values().iter().zip(one.g.raw_values()) {
            assert!((a - b).abs() < 1e-14);
        }
        let two = inhomogeneous_solve(&f, &LatticeFunction::delta(3).scaled(2.0), 8, &grid, 1.0).unwrap();
        assert!((two.amplitude_target - 2.0 * one.amplitude_target).abs() < 1e-15);
        assert!(one.cross_check < 1e-12);
    }

    #[test]
    fn decay_fit_cases() {
        let f = LatticeFunction::orbit_from_fn(3, 12, |t| {
            let r = (t.iter().map(|&a| (a * a) as f64).sum::<f64>()).sqrt();
            bracket_of_norm(r).powi(-4)
        })
        .unwrap();
        let fit = decay_fit(&f, (3.0, 12.0), Directions::All).unwrap();
        assert!((fit.exponent - 4.0).abs() < 1e-6);
        let axis = decay_fit(&f, (3.0, 12.0), Directions::Axis).unwrap();
        assert!((axis.exponent - 4.0).abs() < 1e-6);
        let zero = LatticeFunction::delta(3).with_radius(12).unwrap();
        assert!(decay_fit(&zero, (3.0, 12.0), Directions::All).unwrap().is_zero_sentinel());
        assert!(decay_fit(&f, (3.0, 13.0), Directions::All).is_err());
    }

    #[test]
    fn exponent_table_examples() {
        let saw = admissible_s(5, r("2")).unwrap();
        assert_eq!((saw.s_sup, saw.s0, saw.n_d), (r("2"), 1, 4));
        let perc = admissible_s(11, r("5")).unwrap();
        assert_eq!((perc.s_sup, perc.s0, perc.n_d), (r("2"), 1, 10));
        let ltla = admissible_s(27, r("17")).unwrap();
        assert_eq!(ltla.s_sup, r("2"));
        assert!(matches!(admissible_s(9, r("0.4")), Err(Error::RhoOutOfRange { .. })));
        assert!(matches!(admissible_s(9, r("0.5")), Err(Error::RhoOutOfRange { .. })));
        let low = admissible_s(3, r("0.5")).unwrap();
        assert_eq!((low.s_sup, low.s0, low.n_d), (r("1/2"), 0, 1));
        let edge = admissible_s(10, r("2")).unwrap();
        assert_eq!((edge.s_sup, edge.s0), (r("1"), 0));
    }

    #[test]
    fn holder_budget_examples() {
        let split = |a: u32| Split {
            delta_orders: vec![],
            alpha2: a,
            gamma_orders: vec![],
        };
        let b = holder_budget(5, r("2"), r("1.9"), r("0"), &[split(4)]).unwrap();
        assert_eq!(b[0].inverse_r_lower, r("0.82"));
        assert!(b[0].r1_feasible);
        let spread = Split {
            delta_orders: vec![1, 1],
            alpha2: 1,
            gamma_orders: vec![1],
        };
        let b = holder_budget(5, r("2"), r("1.9"), r("0"), &[spread]).unwrap();
        assert_eq!(b[0].inverse_r_lower, r("0.82"));
        assert_eq!(b[0].q1_threshold, r("1/5"));
        let b = holder_budget(3, r("0.5"), r("0.4"), r("0"), &[split(1)]).unwrap();
        assert_eq!(b[0].inverse_r_lower, r("2.6") / r("3"));
        assert!(b[0].r1_feasible);
        let b = holder_budget(5, r("2"), r("1.9"), r("0.95"), &[split(4)]).unwrap();
        assert!(!b[0].r1_feasible);
        assert!(holder_budget(5, r("2"), r("2"), r("0"), &[]).is_err());
        assert!(holder_budget(5, r("2"), r("1"), r("1.5"), &[]).is_err());
    }

    #[test]
    fn parse_ratio_forms() {
        assert_eq!(r("0.4"), Rational::new(2, 5));
        assert_eq!(r("-1.5"), Rational::new(-3, 2));
        assert_eq!(r("3/7"), Rational::new(3, 7));
        assert_eq!(r("17"), Rational::from_integer(17));
        assert!(parse_ratio("abc").is_err());
        assert!(parse_ratio("1/0").is_err());
    }

    #[test]
    fn symbol_ratio_trivial_is_zero() {
        let grid = TorusGrid::shifted(3, 16).unwrap();
        let e = LatticeFunction::delta(3).scaled(0.0);
        assert_eq!(error_symbol_ratio(&e, &MultiIndex::zero(3), 1.5, &grid).unwrap(), 0.0);
    }
}

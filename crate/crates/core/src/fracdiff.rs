//! Fractional smoothness probes on the torus.
//!
//! The first-coordinate shift difference `(U_u v)(k) = v(k + u e_1) - v(k - u e_1)`
//! measures Holder regularity of a transform: `||U_u v||_1 <~ u^eta`. The
//! constant `c_delta = int_0^inf sin(u) u^{-1-delta} du` turns an integral of
//! `U_u` over `u` into the multiplier `sgn(x_1) |x_1|^delta`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{bracket_of_norm, LatticeFunction, LatticePoint, MultiIndex};
use crate::numerics::{fit_line, gauss_legendre, KahanSum};
use crate::spectral::{forward_transform, inverse_on_box, lp_norm, spectral_derivative, SpectralField, TorusGrid};

// ----- c_delta ---------------------------------------------------------------------------

/// `int_0^inf sin(t u) u^{-1-delta} du` by quadrature, for `t > 0`.
///
/// On `[0, pi/t]` the integrand is split as `(sin(tu) - tu) u^{-1-delta}`,
/// integrated on dyadically graded panels, plus the exact integral of
/// `t u^{-delta}`. Beyond `pi/t` the half-period integrals alternate in sign
/// and their partial sums are accelerated by repeated averaging.
pub fn sine_weight_integral(t: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("frequency t = {t} must be positive")));
    }
    let half = PI / t;
    let p = -1.0 - delta;
    let (nodes, weights) = gauss_legendre(20);
    let panel = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        let mid = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        nodes.iter().zip(&weights).map(|(z, w)| h * w * f(mid + h * z)).sum()
    };

    // head: dyadic panels towards 0, where the integrand behaves like u^{2-delta}
    let head_fn = |u: f64| {
        let tu = t * u;
        // sin(x) - x without cancellation for small x
        let diff = if tu < 1e-2 {
            let x2 = tu * tu;
            -tu * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0))
        } else {
            tu.sin() - tu
        };
        diff * u.powf(p)
    };
    let mut head = KahanSum::new();
    let mut hi = half;
    for _ in 0..60 {
        let lo = 0.5 * hi;
        head.add(panel(lo, hi, &head_fn));
        hi = lo;
    }
    head.add(t * half.powf(1.0 - delta) / (1.0 - delta));

    // tail: half periods [n pi/t, (n+1) pi/t], n >= 1
    const TERMS: usize = 48;
    let tail_fn = |u: f64| (t * u).sin() * u.powf(p);
    let mut partial = Vec::with_capacity(TERMS);
    let mut acc = 0.0;
    for n in 1..=TERMS {
        let lo = n as f64 * half;
        acc += panel(lo, lo + half, &tail_fn);
        partial.push(acc);
    }
    while partial.len() > 1 {
        partial = partial.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    Ok(head.value() + partial[0])
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "delta = {delta} outside (0, 1): the integral diverges at the endpoints"
        )))
    }
}

/// `c_delta = int_0^inf sin(u) u^{-1-delta} du`.
pub fn c_delta(delta: f64) -> Result<f64> {
    sine_weight_integral(1.0, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracConstants {
    pub delta: f64,
    pub c_delta: f64,
}

impl FracConstants {
    pub fn new(delta: f64) -> Result<Self> {
        Ok(Self {
            delta,
            c_delta: c_delta(delta)?,
        })
    }
}

// ----- shift differences --------------------------------------------------------------------

/// Number of grid spacings in `u`; fails unless `u` is a multiple of `2 pi / M`.
pub fn grid_steps(grid: &TorusGrid, u: f64) -> Result<i64> {
    let steps = u / grid.spacing();
    let rounded = steps.round();
    if (steps - rounded).abs() > 1e-9 * rounded.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "u = {u} is not a multiple of the grid spacing 2 pi / {}",
            grid.m()
        )));
    }
    Ok(rounded as i64)
}

/// `(U_u v)(k) = v(k + u e_1) - v(k - u e_1)` for grid-aligned `u`.
pub fn u_shift_difference(field: &SpectralField, u: f64) -> Result<SpectralField> {
    field.shift_difference(grid_steps(field.grid(), u)?)
}

/// Grid-aligned `u` values in `(0, u_max]`, roughly log-spaced, always
/// including every multiple of the spacing in the first decade.
pub fn aligned_u_values(grid: &TorusGrid, u_max: f64, per_decade: usize) -> Vec<f64> {
    let h = grid.spacing();
    let top = (u_max / h).floor() as i64;
    let mut steps: Vec<i64> = (1..=top.min(10)).collect();
    let mut s = 10.0_f64;
    let factor = 10f64.powf(1.0 / per_decade.max(1) as f64);
    while (s * factor).round() as i64 <= top {
        s *= factor;
        steps.push(s.round() as i64);
    }
    steps.dedup();
    steps.into_iter().map(|j| j as f64 * h).collect()
}

// ----- fractional weight transform -------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FractionalWeight {
    /// Transform of `sgn(x_1) |x_1|^delta g(x)` built from the `u`-integral.
    pub w_hat: SpectralField,
    /// Its inverse transform on the box of `g`.
    pub w: LatticeFunction,
    /// Max pointwise deviation of `w` from `sgn(x_1) |x_1|^delta g(x)`.
    pub max_error: f64,
    /// Sampled `int u^{-1-delta} ||U_u g^||_1 du` over grid-aligned `u <= pi`.
    pub sampled_u_integral: f64,
    pub c_delta: f64,
}

/// `w^(k) = (1/(2 i c_delta)) int_0^inf u^{-1-delta} (U_u g^)(k) du`.
///
/// Along each line in `k_1`, `u -> (U_u g^)(k)` is an odd trigonometric
/// polynomial of degree at most `R` sampled at the grid-aligned `u_j`. Its
/// sine coefficients come from the samples, and each `sin(m u)` is
/// integrated against `u^{-1-delta}` by [`sine_weight_integral`].
pub fn fractional_weight_transform(g: &LatticeFunction, delta: f64, grid: &TorusGrid) -> Result<FractionalWeight> {
    check_delta(delta)?;
    let m = grid.m();
    let radius = g.radius();
    if m < 2 * radius + 2 {
        return Err(Error::GridTooSmall { m, r: radius });
    }
    let c = c_delta(delta)?;
    let g_hat = forward_transform(g, grid)?.to_dense()?;
    let values = g_hat.dense_values().expect("dense field");
    let half = m / 2;
    let weights: Vec<f64> = (0..half)
        .map(|freq| if freq == 0 { Ok(0.0) } else { sine_weight_integral(freq as f64, delta) })
        .collect::<Result<_>>()?;
    let sines: Vec<f64> = (0..m * half)
        .map(|i| {
            let (freq, j) = (i / m, i % m);
            (2.0 * PI * (freq * j) as f64 / m as f64).sin()
        })
        .collect();
    let inner = values.len() / m;
    let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
    let mut phi = vec![Complex64::new(0.0, 0.0); m];
    for j in 0..inner {
        for i1 in 0..m {
            for (s, p) in phi.iter_mut().enumerate() {
                let plus = (i1 + s) % m;
                let minus = (i1 + m - s) % m;
                *p = values[plus * inner + j] - values[minus * inner + j];
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for freq in 1..half {
                let row = &sines[freq * m..(freq + 1) * m];
                let b: Complex64 = phi.iter().zip(row).map(|(p, s)| p * s).sum::<Complex64>() * (2.0 / m as f64);
                acc += b * weights[freq];
            }
            out[i1 * inner + j] = acc / (Complex64::new(0.0, 2.0) * c);
        }
    }
    let w_hat = SpectralField::from_dense(*grid, out);
    let w = inverse_on_box(&w_hat, radius, false)?;
    let mut max_error = 0.0_f64;
    let dense_g = g.to_dense()?;
    dense_g.for_each_point(|x, v| {
        let weight = (x[0].signum() as f64) * (x[0].unsigned_abs() as f64).powf(delta);
        max_error = max_error.max((w.value(x) - weight * v).abs());
    });

    let mut integral = KahanSum::new();
    for s in 1..=half {
        let u = s as f64 * grid.spacing();
        let norm = lp_norm(&g_hat.shift_difference(s as i64)?, 1.0)?;
        let trap = if s == half { 0.5 } else { 1.0 };
        integral.add(trap * grid.spacing() * u.powf(-1.0 - delta) * norm);
    }
    let sampled_u_integral = integral.value();
    if !sampled_u_integral.is_finite() {
        return Err(Error::InvalidParameter("u-integral of ||U_u g^||_1 diverges".into()));
    }
    Ok(FractionalWeight {
        w_hat,
        w,
        max_error,
        sampled_u_integral,
        c_delta: c,
    })
}

// ----- Holder curves ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderCurve {
    pub u_values: Vec<f64>,
    pub norms: Vec<f64>,
    /// Log-log slope over the smallest decade of `u`; `+inf` when all norms vanish.
    pub fitted_eta: f64,
}

impl HolderCurve {
    /// `max_u ||U_u v||_1 / u^eta`.
    pub fn prefactor(&self, eta: f64) -> f64 {
        self.u_values
            .iter()
            .zip(&self.norms)
            .map(|(u, n)| n / u.powf(eta))
            .fold(0.0, f64::max)
    }

    pub fn ratios(&self, eta: f64) -> Vec<f64> {
        self.u_values.iter().zip(&self.norms).map(|(u, n)| n / u.powf(eta)).collect()
    }
}

/// `||U_u v||_1` for each `u`, where `v` is the transform of `(ix)^alpha h`.
pub fn holder_curve(h: &LatticeFunction, alpha: &MultiIndex, u_values: &[f64], grid: &TorusGrid) -> Result<HolderCurve> {
    let field = spectral_derivative(h, alpha, grid)?;
    holder_curve_of(&field, u_values)
}

/// As [`holder_curve`], for a transform already on the grid.
pub fn holder_curve_of(field: &SpectralField, u_values: &[f64]) -> Result<HolderCurve> {
    if u_values.len() < 4 {
        return Err(Error::InsufficientData(format!("{} u values, need 4", u_values.len())));
    }
    if u_values.iter().any(|&u| !(u > 0.0 && u <= 1.0 + 1e-12)) {
        return Err(Error::InvalidParameter("u values must lie in (0, 1]".into()));
    }
    let norms: Vec<f64> = u_values
        .iter()
        .map(|&u| lp_norm(&u_shift_difference(field, u)?, 1.0))
        .collect::<Result<_>>()?;
    let fitted_eta = smallest_decade_slope(u_values, &norms)?;
    Ok(HolderCurve {
        u_values: u_values.to_vec(),
        norms,
        fitted_eta,
    })
}

fn smallest_decade_slope(us: &[f64], norms: &[f64]) -> Result<f64> {
    if norms.iter().all(|&n| n == 0.0) {
        return Ok(f64::INFINITY);
    }
    let u_min = us.iter().copied().fold(f64::INFINITY, f64::min);
    let (xs, ys): (Vec<f64>, Vec<f64>) = us
        .iter()
        .zip(norms)
        .filter(|(&u, &n)| u <= 10.0 * u_min * (1.0 + 1e-12) && n > 0.0)
        .map(|(u, n)| (u.ln(), n.ln()))
        .unzip();
    if xs.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} usable u values in the smallest decade, need 4",
            xs.len()
        )));
    }
    Ok(fit_line(&xs, &ys).map_or(f64::NAN, |l| l.slope))
}

// ----- bound checks ----------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftedBoundReport {
    pub max_ratio: f64,
    /// `u` and node where the maximum is attained.
    pub argmax_u: f64,
    pub argmax_node: Vec<f64>,
    pub exponent: f64,
}

/// Wraps a coordinate to `(-pi, pi]`.
fn wrap(k: f64) -> f64 {
    let mut x = (k + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Max over `u` and nodes of `|U_u E^_alpha(k)| / (u^eta (|k+u~|^p + |k-u~|^p))`
/// with `p = 2 + sigma - eta - |alpha|`.
pub fn shifted_e_bound_check(
    e: &LatticeFunction,
    sigma: f64,
    eta: f64,
    alpha: &MultiIndex,
    u_values: &[f64],
    grid: &TorusGrid,
) -> Result<ShiftedBoundReport> {
    if !(sigma > 0.0 && sigma <= 2.0) || !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("sigma = {sigma}, eta = {eta} out of range")));
    }
    let p = 2.0 + sigma - eta - alpha.order() as f64;
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "|alpha| + eta = {} must stay below 2 + sigma = {}",
            alpha.order() as f64 + eta,
            2.0 + sigma
        )));
    }
    let field = spectral_derivative(e, alpha, grid)?;
    let mut best = ShiftedBoundReport {
        max_ratio: 0.0,
        argmax_u: 0.0,
        argmax_node: vec![0.0; grid.dim],
        exponent: p,
    };
    for &u in u_values {
        let diff = u_shift_difference(&field, u)?;
        let scale = u.powf(eta);
        diff.for_each_class(|k, v, _| {
            let rest: f64 = k[1..].iter().map(|c| c * c).sum();
            let plus = (wrap(k[0] + u).powi(2) + rest).sqrt();
            let minus = (wrap(k[0] - u).powi(2) + rest).sqrt();
            let env = scale * (plus.powf(p) + minus.powf(p));
            let ratio = v.norm() / env;
            if ratio > best.max_ratio {
                best.max_ratio = ratio;
                best.argmax_u = u;
                best.argmax_node = k.to_vec();
            }
        });
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceQuotientReport {
    pub p: f64,
    pub p_eta: f64,
    pub eta: f64,
    pub sobolev_norm: f64,
    pub u_values: Vec<f64>,
    /// `||U_u g||_{p_eta} / (u^eta ||g||_{W^{1,p}})` per `u`.
    pub ratios: Vec<f64>,
}

impl DifferenceQuotientReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Fractional difference quotients against the Sobolev norm, with
/// `1/p_eta = 1/p - (1 - eta)/d`.
pub fn difference_quotient_check(
    g: &SpectralField,
    gradient: &[SpectralField],
    p: f64,
    eta: f64,
    u_values: &[f64],
) -> Result<DifferenceQuotientReport> {
    let d = g.grid().dim;
    if !(p >= 1.0 && p < d as f64) {
        return Err(Error::InvalidParameter(format!("p = {p} must satisfy 1 <= p < d = {d}")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("eta = {eta} outside [0, 1]")));
    }
    if gradient.len() != d {
        return Err(Error::DimensionMismatch(gradient.len(), d));
    }
    let inv = 1.0 / p - (1.0 - eta) / d as f64;
    let p_eta = 1.0 / inv;
    let mut sob = lp_norm(g, p)?.powf(p);
    for grad in gradient {
        sob += lp_norm(grad, p)?.powf(p);
    }
    let sobolev_norm = sob.powf(1.0 / p);
    let ratios = u_values
        .iter()
        .map(|&u| {
            let num = lp_norm(&u_shift_difference(g, u)?, p_eta)?;
            Ok(if num == 0.0 { 0.0 } else { num / (u.powf(eta) * sobolev_norm) })
        })
        .collect::<Result<_>>()?;
    Ok(DifferenceQuotientReport {
        p,
        p_eta,
        eta,
        sobolev_norm,
        u_values: u_values.to_vec(),
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayBoundReport {
    pub a: f64,
    pub eta: f64,
    /// `max |h(x)| <x>^a` over the annulus.
    pub max_scaled: f64,
    /// `||h^||_1 + max_alpha (K_alpha + ||h^_alpha||_1)`.
    pub rhs: f64,
    /// `max_scaled / rhs`; zero when both vanish.
    pub constant: f64,
    /// Slope of `log |h(x)| <x>^a` against `log |x|` over the annulus.
    pub trend: f64,
    pub annulus: (f64, f64),
}

/// Checks `|h(x)| <x>^a <= c (||h^||_1 + max_alpha (K_alpha + ||h^_alpha||_1))`.
pub fn shifted_decay_bound(
    h: &LatticeFunction,
    a: f64,
    eta: f64,
    prefactors: &[(MultiIndex, f64)],
    annulus: (f64, f64),
    grid: &TorusGrid,
) -> Result<DecayBoundReport> {
    let frac = a - a.floor();
    if frac == 0.0 {
        return Err(Error::InvalidParameter(format!("a = {a} must not be an integer")));
    }
    if !(eta > frac && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("eta = {eta} outside ({frac}, 1)")));
    }
    let base = lp_norm(&forward_transform(h, grid)?, 1.0)?;
    let mut worst: f64 = 0.0;
    for (alpha, k) in prefactors {
        let norm = lp_norm(&spectral_derivative(h, alpha, grid)?, 1.0)?;
        worst = worst.max(k + norm);
    }
    let rhs = base + worst;
    let mut max_scaled: f64 = 0.0;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (x, v, _) in h.samples() {
        let r = LatticePoint(x).norm();
        if r >= annulus.0 && r <= annulus.1 {
            let scaled = v.abs() * bracket_of_norm(r).powf(a);
            max_scaled = max_scaled.max(scaled);
            if scaled > 0.0 {
                xs.push(bracket_of_norm(r).ln());
                ys.push(scaled.ln());
            }
        }
    }
    let trend = fit_line(&xs, &ys).map_or(0.0, |l| l.slope);
    Ok(DecayBoundReport {
        a,
        eta,
        max_scaled,
        rhs,
        constant: if max_scaled == 0.0 { 0.0 } else { max_scaled / rhs },
        trend,
        annulus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeFunction;

    #[test]
    fn c_half_is_sqrt_two_pi() {
        let c = c_delta(0.5).unwrap();
        assert!((c - (2.0 * PI).sqrt()).abs() < 1e-9 * c, "{c}");
    }

    #[test]
    fn c_delta_matches_gamma_closed_form() {
        for delta in [0.05, 0.25, 0.3, 0.75, 0.95] {
            let closed = -libm::tgamma(-delta) * (PI * delta / 2.0).sin();
            let c = c_delta(delta).unwrap();
            assert!((c - closed).abs() < 1e-8 * closed, "delta {delta}: {c} vs {closed}");
        }
        assert!((c_delta(1e-3).unwrap() - PI / 2.0).abs() < 1e-2);
        assert!(c_delta(0.0).is_err() && c_delta(1.0).is_err());
    }

    #[test]
    fn scaling_identity() {
        let delta = 0.3;
        let c = c_delta(delta).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let lhs = sine_weight_integral(t, delta).unwrap() / c;
            assert!((lhs - t.powf(delta)).abs() < 1e-6, "t {t}");
        }
    }

    fn pair_on_axis(d: usize, dist: i64) -> LatticeFunction {
        LatticeFunction::dense_from_fn(d, dist as usize, |x| {
            if x[0].abs() == dist && x[1..].iter().all(|&c| c == 0) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn shift_difference_of_cosine() {
        let grid = TorusGrid::shifted(3, 16).unwrap();
        let g_hat = forward_transform(&pair_on_axis(3, 1), &grid).unwrap();
        for s in [0, 1, 3] {
            let u = s as f64 * grid.spacing();
            let diff = u_shift_difference(&g_hat, u).unwrap();
            diff.for_each_class(|k, v, _| {
                assert!((v.re + 4.0 * k[0].sin() * u.sin()).abs() < 1e-13 && v.im.abs() < 1e-13);
            });
        }
        assert!(u_shift_difference(&g_hat, 0.1).is_err());
        let constant = SpectralField::constant(grid, 3.0);
        let zero = u_shift_difference(&constant, 2.0 * grid.spacing()).unwrap();
        zero.for_each_class(|_, v, _| assert_eq!(v.norm(), 0.0));
    }

    #[test]
    fn shift_difference_is_transform_of_sine_weight() {
        let grid = TorusGrid::shifted(2, 16).unwrap();
        let f = LatticeFunction::dense_from_fn(2, 3, |x| 1.0 / (1.0 + (x[0] * x[0] + 2 * x[1] * x[1]) as f64)).unwrap();
        let s = 3;
        let u = s as f64 * grid.spacing();
        let lhs = forward_transform(&f, &grid).unwrap().shift_difference(s).unwrap().to_dense().unwrap();
        // 2i sin(u x_1) f(x) is imaginary; transform its real weight and rotate
        let weighted = LatticeFunction::dense_from_fn(2, 3, |x| 2.0 * (u * x[0] as f64).sin() * f.value(x)).unwrap();
        let rhs = forward_transform(&weighted, &grid).unwrap().times_i_pow(1).to_dense().unwrap();
        for (a, b) in lhs.dense_values().unwrap().iter().zip(rhs.dense_values().unwrap()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn fractional_weight_on_pairs() {
        let grid = TorusGrid::shifted(3, 16).unwrap();
        for dist in [1, 2] {
            let g = pair_on_axis(3, dist);
            for delta in [0.25, 0.5, 0.75] {
                let fw = fractional_weight_transform(&g, delta, &grid).unwrap();
                assert!(fw.max_error < 1e-6, "dist {dist} delta {delta}: {}", fw.max_error);
                let want = (dist as f64).powf(delta);
                assert!((fw.w.value(&[dist, 0, 0]) - want).abs() < 1e-6);
                assert!((fw.w.value(&[-dist, 0, 0]) + want).abs() < 1e-6);
            }
        }
        let fw = fractional_weight_transform(&LatticeFunction::delta(3), 0.5, &grid).unwrap();
        assert!(fw.w.sup_norm() < 1e-12);
    }

    #[test]
    fn difference_quotient_bounds() {
        let grid = TorusGrid::shifted(3, 32).unwrap();
        let d = LatticeFunction::nearest_neighbour(3);
        let g = forward_transform(&d, &grid).unwrap();
        let grads: Vec<SpectralField> = (0..3)
            .map(|j| spectral_derivative(&d, &MultiIndex::along(3, j, 1), &grid).unwrap())
            .collect();
        let us = aligned_u_values(&grid, 1.0, 4);
        let rep = difference_quotient_check(&g, &grads, 2.0, 1.0, &us).unwrap();
        assert!(rep.max_ratio() <= 2.0, "{:?}", rep.ratios);
        let constant = SpectralField::constant(grid, 1.0);
        let zero = difference_quotient_check(&constant, &grads, 2.0, 0.5, &us).unwrap();
        assert_eq!(zero.max_ratio(), 0.0);
        assert!(difference_quotient_check(&g, &grads, 3.0, 0.5, &us).is_err());
    }

    #[test]
    fn holder_curve_of_zero_is_sentinel() {
        let grid = TorusGrid::shifted(3, 32).unwrap();
        let zero = LatticeFunction::delta(3).scaled(0.0);
        let us = aligned_u_values(&grid, 1.0, 4);
        let curve = holder_curve(&zero, &MultiIndex::zero(3), &us, &grid).unwrap();
        assert!(curve.fitted_eta.is_infinite());
        assert!(curve.norms.iter().all(|&n| n == 0.0));
    }

    #[test]
    fn holder_curve_of_smooth_symbol_is_linear() {
        // U_u of the cosine sum is -2 sin(k_1) sin(u)
        let grid = TorusGrid::shifted(3, 64).unwrap();
        let us = aligned_u_values(&grid, 1.0, 5);
        let curve = holder_curve(&LatticeFunction::nearest_neighbour(3), &MultiIndex::zero(3), &us, &grid).unwrap();
        let base = curve.norms[0] / curve.u_values[0].sin();
        for (u, n) in curve.u_values.iter().zip(&curve.norms) {
            assert!((n / u.sin() - base).abs() < 1e-10 * base);
        }
        assert!(curve.fitted_eta > 0.9 && curve.fitted_eta < 1.0, "{}", curve.fitted_eta);
    }

    #[test]
    fn exact_power_law_scaled_constant() {
        let grid = TorusGrid::shifted(3, 32).unwrap();
        let h = LatticeFunction::orbit_from_fn(3, 8, |t| {
            let r = (t.iter().map(|&a| (a * a) as f64).sum::<f64>()).sqrt();
            bracket_of_norm(r).powf(-3.5)
        })
        .unwrap();
        let rep = shifted_decay_bound(&h, 3.5, 0.75, &[], (2.0, 8.0), &grid).unwrap();
        assert!((rep.max_scaled - 1.0).abs() < 1e-6);
        assert!(rep.trend.abs() < 1e-6);
        assert!(shifted_decay_bound(&h, 3.5, 0.4, &[], (2.0, 8.0), &grid).is_err());
    }

    #[test]
    fn shifted_bound_trivial_e() {
        let grid = TorusGrid::shifted(3, 16).unwrap();
        let e = LatticeFunction::delta(3).scaled(0.0);
        let us = aligned_u_values(&grid, 1.0, 4);
        let rep = shifted_e_bound_check(&e, 1.8, 0.5, &MultiIndex::zero(3), &us, &grid).unwrap();
        assert_eq!(rep.max_ratio, 0.0);
    }
}

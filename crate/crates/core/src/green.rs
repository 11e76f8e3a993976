//! Lattice Green functions `C_mu`, solving `(delta - mu D) * C_mu = delta`.
//!
//! Two independent routes: the spectral one inverts `1 - mu D^(k)` on a torus
//! grid, and the walk sum adds `mu^n D^{*n}(x)` term by term.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{bracket_of_norm, fit_power_law, Directions, LatticeFunction, LatticePoint};
use crate::numerics::{fit_line, KahanSum};
use crate::orbit::{advance, Binomials, TupleSpace};
use crate::spectral::{inverse_on_box, inverse_on_box_many, SpectralField, TorusGrid};

/// Amplitude of the critical decay `C_1(x) ~ a_d / |x|^{d-2}`.
pub fn a_d(d: usize) -> Result<f64> {
    if d <= 2 {
        return Err(Error::DimensionTooSmall(d));
    }
    let df = d as f64;
    Ok(df * libm::tgamma((df - 2.0) / 2.0) / (2.0 * std::f64::consts::PI.powf(df / 2.0)))
}

/// `delta - mu D`.
pub fn walk_kernel(dim: usize, mu: f64) -> LatticeFunction {
    LatticeFunction::delta(dim)
        .linear_combination(1.0, &LatticeFunction::nearest_neighbour(dim), -mu)
        .expect("same dimension")
        .declare_symmetric()
}

/// `1 - mu D^(k)` on the grid.
pub fn walk_symbol(grid: TorusGrid, mu: f64) -> SpectralField {
    let d = grid.dim as f64;
    SpectralField::orbit_from_fn(grid, move |k| 1.0 - mu * k.iter().map(|c| c.cos()).sum::<f64>() / d)
}

// ----- walk sums -------------------------------------------------------------------

/// How the walk-sum tail was estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailKind {
    /// `mu^{n+1} / (1 - mu)`, a strict bound since `D^{*n} <= 1`.
    Geometric,
    /// Power law `A j^p` fitted to pair sums over the last decade of terms.
    PowerFit,
}

/// Truncated walk sum at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkSum {
    pub partial_sum: f64,
    pub tail: f64,
    pub tail_kind: TailKind,
    pub n_max: usize,
}

impl WalkSum {
    /// Partial sum plus tail estimate.
    pub fn estimate(&self) -> f64 {
        self.partial_sum + self.tail
    }
}

/// Truncated walk sums on a whole box.
#[derive(Debug, Clone)]
pub struct WalkField {
    pub partial_sum: LatticeFunction,
    pub tail: LatticeFunction,
    pub tail_kind: TailKind,
    pub n_max: usize,
}

impl WalkField {
    pub fn estimate(&self) -> LatticeFunction {
        self.partial_sum
            .linear_combination(1.0, &self.tail, 1.0)
            .expect("same shape")
            .declare_symmetric()
    }
}

fn check_walk_args(mu: f64, d: usize) -> Result<()> {
    if d <= 2 {
        return Err(Error::DimensionTooSmall(d));
    }
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::InvalidParameter(format!("mu = {mu} outside [0, 1]")));
    }
    Ok(())
}

/// `sum_{n <= n_max} mu^n D^{*n}(x)` with a tail estimate.
pub fn walk_sum(mu: f64, d: usize, x: &LatticePoint, n_max: usize) -> Result<WalkSum> {
    if x.dim() != d {
        return Err(Error::DimensionMismatch(x.dim(), d));
    }
    let radius = x.0.iter().map(|c| c.unsigned_abs() as usize).max().unwrap_or(0);
    let field = walk_sum_field(mu, d, radius, n_max)?;
    Ok(WalkSum {
        partial_sum: field.partial_sum.value(&x.0),
        tail: field.tail.value(&x.0),
        tail_kind: field.tail_kind,
        n_max: field.n_max,
    })
}

/// Walk sums at every point of the box of radius `radius`.
///
/// The step distributions `D^{*m}` are iterated in orbit storage on a box
/// that shrinks once later steps can no longer reach the target box, so the
/// partial sums on the target box are exact. For `mu = 1`, `n_max` is rounded
/// up to odd so the terms split into pairs `(2j, 2j+1)`; the parity zeros of
/// single terms would spoil a power-law fit.
pub fn walk_sum_field(mu: f64, d: usize, radius: usize, n_max: usize) -> Result<WalkField> {
    check_walk_args(mu, d)?;
    let critical = mu == 1.0;
    let n_max = if critical { n_max | 1 } else { n_max };
    let pairs = (n_max + 1) / 2;
    if critical && pairs < 20 {
        return Err(Error::InvalidParameter(format!("n_max = {n_max} too small for a tail fit (>= 39 needed)")));
    }
    let binom = Binomials::new(n_max + radius + d + 3, d + 1);
    let target = TupleSpace::new(radius + 1, d).count();

    // pair sums stored at log-spaced j in the last decade for the tail fit
    let fit_js: Vec<usize> = if critical {
        let lo = (pairs / 10).max(2);
        let mut js: Vec<usize> = (0..=16)
            .map(|i| (lo as f64 * ((pairs - 1) as f64 / lo as f64).powf(i as f64 / 16.0)).round() as usize)
            .collect();
        js.dedup();
        js
    } else {
        Vec::new()
    };
    let mut fit_store = vec![0.0; fit_js.len() * target];

    let mut current = vec![1.0f64];
    let mut current_radius = 0usize;
    let mut sums: Vec<KahanSum> = vec![KahanSum::new(); target];
    let mut pair_acc = vec![0.0; target];
    let mut weight = 1.0;
    for step in 0..=n_max {
        for (i, s) in sums.iter_mut().enumerate() {
            let v = current.get(i).copied().unwrap_or(0.0);
            s.add(weight * v);
        }
        if critical {
            for (i, p) in pair_acc.iter_mut().enumerate() {
                *p += current.get(i).copied().unwrap_or(0.0);
            }
            if step % 2 == 1 {
                let j = step / 2;
                if let Some(slot) = fit_js.iter().position(|&q| q == j) {
                    fit_store[slot * target..(slot + 1) * target].copy_from_slice(&pair_acc);
                }
                pair_acc.iter_mut().for_each(|p| *p = 0.0);
            }
        }
        if step == n_max {
            break;
        }
        let next_radius = (step + 1).min(n_max - step - 1 + radius);
        current = step_orbit(&current, current_radius, next_radius, d, &binom);
        current_radius = next_radius;
        weight *= mu;
    }

    let partial: Vec<f64> = sums.iter().map(KahanSum::value).collect();
    let (tail, tail_kind) = if critical {
        let mut tails = Vec::with_capacity(target);
        for i in 0..target {
            tails.push(power_tail(&fit_js, |slot| fit_store[slot * target + i], pairs)?);
        }
        (tails, TailKind::PowerFit)
    } else {
        let t = if mu == 0.0 { 0.0 } else { mu.powi(n_max as i32 + 1) / (1.0 - mu) };
        (vec![t; target], TailKind::Geometric)
    };
    Ok(WalkField {
        partial_sum: LatticeFunction::orbit(d, radius, partial)?.declare_symmetric(),
        tail: LatticeFunction::orbit(d, radius, tail)?.declare_symmetric(),
        tail_kind,
        n_max,
    })
}

/// Fits `P_j = A j^p` and sums the fitted law over `j >= pairs`.
fn power_tail(js: &[usize], value: impl Fn(usize) -> f64, pairs: usize) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (slot, &j) in js.iter().enumerate() {
        let p = value(slot);
        if p > 0.0 {
            xs.push((j as f64).ln());
            ys.push(p.ln());
        }
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData(
            "walk-sum tail fit: fewer than 3 nonzero pair sums; raise n_max".into(),
        ));
    }
    let line = fit_line(&xs, &ys).ok_or_else(|| Error::InsufficientData("degenerate tail fit".into()))?;
    let p = line.slope;
    if p >= -1.0 {
        return Err(Error::InsufficientData(format!(
            "walk-sum tail exponent {p:.3} >= -1: terms not yet in the decaying regime; raise n_max"
        )));
    }
    let a = line.intercept.exp();
    Ok(a * (pairs as f64 - 0.5).powf(p + 1.0) / (-p - 1.0))
}

/// One application of `D` to an orbit-stored function.
///
/// Colex ranks do not depend on the alphabet, so the input and output share
/// one index space and a neighbour's rank differs from the centre's in one
/// term. Moving one copy of value `v` up lands on the last slot of its run,
/// moving it down on the first slot; `v = 0` moves to `1` either way.
fn step_orbit(h: &[f64], h_radius: usize, out_radius: usize, d: usize, binom: &Binomials) -> Vec<f64> {
    let out_space = TupleSpace::new(out_radius + 1, d);
    let count = out_space.count();
    let scale = 1.0 / (2 * d) as f64;
    let lookup = |rank: usize, top: usize| -> f64 {
        if top > h_radius {
            0.0
        } else {
            h[rank]
        }
    };
    const CHUNK: usize = 4096;
    let mut out = vec![0.0; count];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
        let mut t = out_space.unrank(ci * CHUNK);
        for slot in chunk.iter_mut() {
            let rank: usize = t.iter().enumerate().map(|(j, &a)| binom.get(a + j, j + 1)).sum();
            let top = t[d - 1];
            let mut acc = 0.0;
            let mut j = 0;
            while j < d {
                let v = t[j];
                let mut end = j;
                while end + 1 < d && t[end + 1] == v {
                    end += 1;
                }
                let mult = (end - j + 1) as f64;
                // up: last slot of the run
                let up_rank = rank - binom.get(v + end, end + 1) + binom.get(v + 1 + end, end + 1);
                let up_top = if end == d - 1 { v + 1 } else { top };
                let up = lookup(up_rank, up_top);
                let down = if v == 0 {
                    up
                } else {
                    let down_top = if j == d - 1 { v - 1 } else { top };
                    lookup(rank - binom.get(v + j, j + 1) + binom.get(v - 1 + j, j + 1), down_top)
                };
                acc += mult * (up + down);
                j = end + 1;
            }
            *slot = scale * acc;
            advance(&mut t, out_radius + 1);
        }
    });
    out
}

// ----- Green functions -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GreenMethod {
    /// Torus inverse of `1 - mu D^`.
    Spectral,
    /// Torus inverses on `M` and `2M` combined to cancel the leading
    /// periodization offset, which scales as `M^{2-d}` at criticality.
    SpectralExtrapolated,
    /// Walk sum up to `n_max` steps plus the tail estimate.
    WalkSum { n_max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenSpec {
    pub dim: usize,
    pub mu: f64,
    pub box_radius: usize,
    pub method: GreenMethod,
}

impl GreenSpec {
    pub fn new(dim: usize, mu: f64, box_radius: usize, method: GreenMethod) -> Result<Self> {
        let spec = Self { dim, mu, box_radius, method };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim <= 2 {
            return Err(Error::DimensionTooSmall(self.dim));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::InvalidParameter(format!("mu = {} outside (0, 1]", self.mu)));
        }
        Ok(())
    }
}

/// `C_mu` on the box of radius `spec.box_radius`, in orbit storage.
pub fn green_function(spec: &GreenSpec, grid: &TorusGrid) -> Result<LatticeFunction> {
    spec.validate()?;
    if grid.dim != spec.dim {
        return Err(Error::DimensionMismatch(grid.dim, spec.dim));
    }
    let r = spec.box_radius;
    let out = match spec.method {
        GreenMethod::Spectral => inverse_on_box(&walk_symbol(*grid, spec.mu), r, true)?,
        GreenMethod::SpectralExtrapolated => {
            let fine = TorusGrid::new(grid.dim, 2 * grid.m(), grid.shifted)?;
            let coarse_c = inverse_on_box(&walk_symbol(*grid, spec.mu), r, true)?;
            let fine_c = inverse_on_box(&walk_symbol(fine, spec.mu), r, true)?;
            let ratio = 2f64.powi(spec.dim as i32 - 2);
            fine_c.linear_combination(ratio / (ratio - 1.0), &coarse_c, -1.0 / (ratio - 1.0))?
        }
        GreenMethod::WalkSum { n_max } => walk_sum_field(spec.mu, spec.dim, r, n_max)?.estimate(),
    };
    Ok(out.declare_symmetric())
}

/// `C_mu` for several values of `mu` from one pass of the inverse transform.
pub fn green_functions_spectral(dim: usize, mus: &[f64], radius: usize, grid: &TorusGrid) -> Result<Vec<LatticeFunction>> {
    let symbols: Vec<SpectralField> = mus.iter().map(|&mu| walk_symbol(*grid, mu)).collect();
    let refs: Vec<&SpectralField> = symbols.iter().collect();
    if grid.dim != dim {
        return Err(Error::DimensionMismatch(grid.dim, dim));
    }
    Ok(inverse_on_box_many(&refs, radius, true)?
        .into_iter()
        .map(LatticeFunction::declare_symmetric)
        .collect())
}

// ----- asymptotics -----------------------------------------------------------------

/// Comparison of `C` with `a_d / <x>^{d-2}` over an annulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub annulus: (f64, f64),
    pub fitted_amplitude: f64,
    pub fitted_exponent: f64,
    /// Max over the annulus of `|C(x) - a_d/<x>^{d-2}| <x>^d`.
    pub max_scaled_residual: f64,
    /// Slope of `log` scaled residual against `log |x|`; near or below zero
    /// when the correction is `O(<x>^{-d})`.
    pub residual_trend: f64,
    pub samples: usize,
}

pub fn asymptotic_report(c: &LatticeFunction, d: usize, annulus: (f64, f64)) -> Result<AsymptoticReport> {
    if c.dim() != d {
        return Err(Error::DimensionMismatch(c.dim(), d));
    }
    let amp = a_d(d)?;
    let (r_min, r_max) = annulus;
    if !(r_min >= 1.0 && r_min < r_max && r_max <= c.radius() as f64) {
        return Err(Error::InvalidParameter(format!(
            "annulus [{r_min}, {r_max}] must satisfy 1 <= r_min < r_max <= R = {}",
            c.radius()
        )));
    }
    let fit = fit_power_law(c, r_min, r_max, Directions::All)
        .filter(|f| f.radii >= 2)
        .ok_or_else(|| Error::InsufficientData(format!("fewer than two radii with nonzero C in [{r_min}, {r_max}]")))?;
    let mut max_res: f64 = 0.0;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (x, v, _) in c.samples() {
        let r = LatticePoint(x).norm();
        if r < r_min || r > r_max {
            continue;
        }
        let b = bracket_of_norm(r);
        let res = (v - amp / b.powi(d as i32 - 2)).abs() * b.powi(d as i32);
        max_res = max_res.max(res);
        if res > 0.0 {
            xs.push(b.ln());
            ys.push(res.ln());
        }
    }
    let trend = fit_line(&xs, &ys).map_or(0.0, |l| l.slope);
    Ok(AsymptoticReport {
        annulus,
        fitted_amplitude: fit.amplitude,
        fitted_exponent: fit.exponent,
        max_scaled_residual: max_res,
        residual_trend: trend,
        samples: fit.samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::convolve;

    #[test]
    fn a_d_closed_forms() {
        use std::f64::consts::PI;
        let cases = [(3, 3.0 / (2.0 * PI)), (4, 2.0 / (PI * PI)), (6, 3.0 / PI.powi(3))];
        for (d, want) in cases {
            let got = a_d(d).unwrap();
            assert!((got - want).abs() < 1e-12 * want, "d={d}: {got} vs {want}");
        }
        assert!((a_d(5).unwrap() - 0.126_651).abs() < 1e-5);
        assert!(matches!(a_d(2), Err(Error::DimensionTooSmall(2))));
    }

    #[test]
    fn walk_sum_trivial_cases() {
        let w = walk_sum(0.0, 4, &LatticePoint::origin(4), 10).unwrap();
        assert_eq!(w.estimate(), 1.0);
        // one step: D(e_1) = 1/(2d)
        let w = walk_sum(0.5, 3, &LatticePoint::on_axis(3, 0, 1), 1).unwrap();
        assert!((w.partial_sum - 0.5 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn step_orbit_matches_dense_convolution() {
        let d = 3;
        let nn = LatticeFunction::nearest_neighbour(d);
        let mut h = LatticeFunction::delta(d);
        let binom = Binomials::new(20, d + 1);
        let mut orbit = vec![1.0];
        for step in 0..5 {
            h = convolve(&h, &nn).unwrap();
            orbit = step_orbit(&orbit, step, step + 1, d, &binom);
            let space = TupleSpace::new(step + 2, d);
            for (i, t) in space.iter().enumerate() {
                let x: Vec<i64> = t.iter().map(|&a| a as i64).collect();
                assert!((orbit[i] - h.value(&x)).abs() < 1e-15, "step {step} at {t:?}");
            }
        }
    }

    #[test]
    fn walk_sum_subcritical_tail_is_a_bound() {
        let x = LatticePoint::on_axis(3, 0, 2);
        let short = walk_sum(0.5, 3, &x, 20).unwrap();
        let long = walk_sum(0.5, 3, &x, 80).unwrap();
        assert!(long.partial_sum >= short.partial_sum);
        assert!(long.partial_sum - short.partial_sum <= short.tail);
    }

    #[test]
    fn spectral_subcritical_matches_walk_sum() {
        let grid = TorusGrid::new(3, 64, false).unwrap();
        let spec = GreenSpec::new(3, 0.5, 4, GreenMethod::Spectral).unwrap();
        let c = green_function(&spec, &grid).unwrap();
        let walk = walk_sum_field(0.5, 3, 4, 60).unwrap();
        let bound = walk.tail.value(&[0, 0, 0]);
        for x in [[0, 0, 0], [2, 0, 0], [1, 1, 1], [4, 3, 0]] {
            let a = c.value(&x);
            let b = walk.partial_sum.value(&x);
            assert!(a >= b - 1e-14 && a - b <= bound + 1e-14, "{x:?}: {a} vs {b} (+{bound})");
        }
    }

    #[test]
    fn torus_identity_subcritical() {
        // on the torus the defining equation holds at every box point with |x|_inf < M/2
        let grid = TorusGrid::new(3, 16, false).unwrap();
        let spec = GreenSpec::new(3, 0.5, 8, GreenMethod::Spectral).unwrap();
        let c = green_function(&spec, &grid).unwrap();
        let lhs = convolve(&walk_kernel(3, 0.5), &c).unwrap();
        for x in [[0i64, 0, 0], [1, 0, 0], [3, 2, 1], [7, 7, 7]] {
            let want = if x == [0, 0, 0] { 1.0 } else { 0.0 };
            assert!((lhs.value(&x) - want).abs() < 1e-12, "{x:?}");
        }
    }

    #[test]
    fn critical_walk_sum_return_constant() {
        let w = walk_sum(1.0, 3, &LatticePoint::origin(3), 400).unwrap();
        assert_eq!(w.tail_kind, TailKind::PowerFit);
        assert!((w.estimate() - 1.516_386).abs() < 1e-3, "{w:?}");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(GreenSpec::new(2, 0.5, 4, GreenMethod::Spectral).is_err());
        assert!(GreenSpec::new(3, 0.0, 4, GreenMethod::Spectral).is_err());
        assert!(GreenSpec::new(3, 1.5, 4, GreenMethod::Spectral).is_err());
        let grid = TorusGrid::new(3, 16, false).unwrap();
        let spec = GreenSpec::new(3, 1.0, 4, GreenMethod::Spectral).unwrap();
        assert!(matches!(green_function(&spec, &grid), Err(Error::PoleOnGrid { .. })));
    }

    #[test]
    fn monotone_in_mu_and_positive() {
        let grid = TorusGrid::shifted(3, 32).unwrap();
        let cs = green_functions_spectral(3, &[0.3, 0.6, 0.9, 1.0], 6, &grid).unwrap();
        for pair in cs.windows(2) {
            for (lo, hi) in pair[0].raw_values().iter().zip(pair[1].raw_values()) {
                assert!(*lo > 0.0 && lo <= hi);
            }
        }
    }

    #[test]
    fn asymptotic_report_on_exact_power_law() {
        let d = 4;
        let amp = a_d(d).unwrap();
        let c = LatticeFunction::orbit_from_fn(d, 12, |t| {
            let r = (t.iter().map(|&a| (a * a) as f64).sum::<f64>()).sqrt();
            amp / bracket_of_norm(r).powi(2)
        })
        .unwrap();
        let rep = asymptotic_report(&c, d, (3.0, 12.0)).unwrap();
        assert!((rep.fitted_exponent - 2.0).abs() < 1e-6);
        assert!((rep.fitted_amplitude - amp).abs() < 1e-6 * amp);
        assert_eq!(rep.max_scaled_residual, 0.0);
        assert!(asymptotic_report(&c, d, (3.0, 13.0)).is_err());
    }
}

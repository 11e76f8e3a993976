use lattice_deconv::deconv::{critical_constants, deconvolve, error_kernel};
use lattice_deconv::fracdiff::{
    aligned_u_values, difference_quotient_check, holder_curve, holder_curve_of, shifted_decay_bound,
    shifted_e_bound_check, u_shift_difference,
};
use lattice_deconv::lattice::{bracket_of_norm, LatticeFunction, MultiIndex};
use lattice_deconv::models::{perturbed_kernel, srw_kernel, ModelKind, ModelSpec};
use lattice_deconv::spectral::{forward_transform, lp_norm, spectral_derivative, TorusGrid};

fn synthetic_d5(tail_radius: usize) -> LatticeFunction {
    let spec = ModelSpec {
        kind: ModelKind::Perturbed,
        dim: 5,
        mu0: 1.0,
        rho: 2.0,
        epsilon: 0.05,
        tail_radius,
        seed: None,
        exploratory: false,
    };
    perturbed_kernel(&spec).unwrap().kernel
}

fn error_of(f: &LatticeFunction) -> LatticeFunction {
    error_kernel(f, &critical_constants(f).unwrap()).unwrap().e
}

#[test]
fn error_kernel_holder_slope_near_one() {
    let e = error_of(&synthetic_d5(8));
    let grid = TorusGrid::shifted(5, 64).unwrap();
    let us = aligned_u_values(&grid, 1.0, 5);
    let curve = holder_curve(&e, &MultiIndex::zero(5), &us, &grid).unwrap();
    assert!(curve.fitted_eta >= 0.9, "{}", curve.fitted_eta);
}

#[test]
fn kernel_first_derivative_curve() {
    let f = synthetic_d5(8);
    let grid = TorusGrid::shifted(5, 64).unwrap();
    let us = aligned_u_values(&grid, 1.0, 5);
    let curve = holder_curve(&f, &MultiIndex::along(5, 0, 1), &us, &grid).unwrap();
    assert!(curve.norms.windows(2).all(|w| w[0] <= w[1]), "{:?}", curve.norms);
    assert!(curve.fitted_eta >= 0.5);
}

#[test]
fn shifted_error_bounds_are_finite_and_stable() {
    let e = error_of(&synthetic_d5(8));
    let mut maxima = Vec::new();
    for m in [32, 64] {
        let grid = TorusGrid::shifted(5, m).unwrap();
        let us = aligned_u_values(&grid, 1.0, 5);
        let flat = shifted_e_bound_check(&e, 1.8, 0.5, &MultiIndex::zero(5), &us, &grid).unwrap();
        let third = shifted_e_bound_check(&e, 1.8, 0.5, &MultiIndex::along(5, 0, 3), &us, &grid).unwrap();
        assert!(flat.max_ratio.is_finite() && flat.max_ratio > 0.0);
        assert!(third.max_ratio.is_finite() && third.max_ratio > 0.0);
        maxima.push(flat.max_ratio);
    }
    let change = (maxima[1] - maxima[0]).abs() / maxima[0];
    assert!(change < 0.05, "{maxima:?}");

    let grid = TorusGrid::shifted(5, 32).unwrap();
    let us = aligned_u_values(&grid, 1.0, 5);
    // |alpha| + eta must stay below 2 + sigma
    assert!(shifted_e_bound_check(&e, 1.0, 0.5, &MultiIndex::along(5, 0, 3), &us, &grid).is_err());
    assert!(shifted_e_bound_check(&e, 2.5, 0.5, &MultiIndex::zero(5), &us, &grid).is_err());
}

#[test]
fn difference_quotient_without_smoothness_gain() {
    let grid = TorusGrid::shifted(3, 32).unwrap();
    let d = LatticeFunction::nearest_neighbour(3);
    let g = forward_transform(&d, &grid).unwrap();
    let grads: Vec<_> = (0..3)
        .map(|j| spectral_derivative(&d, &MultiIndex::along(3, j, 1), &grid).unwrap())
        .collect();
    let us = aligned_u_values(&grid, 1.0, 4);
    let rep = difference_quotient_check(&g, &grads, 2.0, 0.0, &us).unwrap();
    // eta = 0: p_eta = p* = 6, and ||U_u g||_6 <= 2 ||g||_6
    assert!((rep.p_eta - 6.0).abs() < 1e-12);
    let bound = 2.0 * lp_norm(&g, 6.0).unwrap() / rep.sobolev_norm;
    assert!(rep.max_ratio() <= bound * (1.0 + 1e-12), "{} vs {bound}", rep.max_ratio());
}

#[test]
fn decay_bound_on_trivial_remainder_is_zero() {
    let f = srw_kernel(3, 1.0).unwrap();
    let grid = TorusGrid::shifted(3, 32).unwrap();
    let res = deconvolve(&f, 8, &grid).unwrap();
    let zero = res.f.scaled(0.0);
    let rep = shifted_decay_bound(&zero, 1.5, 0.75, &[(MultiIndex::along(3, 0, 1), 0.0)], (2.0, 4.0), &grid).unwrap();
    assert_eq!(rep.max_scaled, 0.0);
    assert_eq!(rep.rhs, 0.0);
    assert_eq!(rep.constant, 0.0);
}

#[test]
fn decay_bound_on_synthetic_remainder() {
    let f = synthetic_d5(8);
    let grid = TorusGrid::shifted(5, 64).unwrap();
    let res = deconvolve(&f, 16, &grid).unwrap();
    let us = aligned_u_values(&grid, 1.0, 5);
    let eta = 0.75;
    let prefactors: Vec<(MultiIndex, f64)> = (1..=3)
        .map(|j| {
            let alpha = MultiIndex::along(5, 0, j);
            let k = holder_curve(&res.f, &alpha, &us, &grid).unwrap().prefactor(eta);
            (alpha, k)
        })
        .collect();
    let rep = shifted_decay_bound(&res.f, 3.5, eta, &prefactors, res.annulus, &grid).unwrap();
    assert!(rep.constant.is_finite() && rep.constant > 0.0);
    assert!(rep.trend <= 0.1, "scaled |f| grows: slope {}", rep.trend);
}

#[test]
fn power_law_transform_is_uniformly_holder() {
    // h = <x>^{-b} with b > d + eta: ||U_u h^||_inf / u^eta stays bounded
    let (d, eta) = (3, 0.5);
    let h = LatticeFunction::orbit_from_fn(d, 24, |t| {
        let r = (t.iter().map(|&a| (a * a) as f64).sum::<f64>()).sqrt();
        bracket_of_norm(r).powf(-4.0)
    })
    .unwrap();
    let grid = TorusGrid::shifted(d, 128).unwrap();
    let field = forward_transform(&h, &grid).unwrap();
    let us = aligned_u_values(&grid, 1.0, 5);
    let ratios: Vec<f64> = us
        .iter()
        .map(|&u| lp_norm(&u_shift_difference(&field, u).unwrap(), f64::INFINITY).unwrap() / u.powf(eta))
        .collect();
    let max = ratios.iter().copied().fold(0.0, f64::max);
    assert!(max <= 2.0 * ratios.last().unwrap(), "{ratios:?}");
    let curve = holder_curve_of(&field, &us).unwrap();
    assert!(curve.fitted_eta > eta);
}

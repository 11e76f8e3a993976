use proptest::prelude::*;

use lattice_deconv::deconv::{admissible_s, parse_ratio, rho_lower_bound, Rational};
use lattice_deconv::fracdiff::u_shift_difference;
use lattice_deconv::lattice::{check_symmetry, convolve, moment, symmetrize, LatticeFunction};
use lattice_deconv::spectral::{forward_transform, inverse_on_box, SpectralField, TorusGrid};

fn dense(dim: usize, radius: usize) -> impl Strategy<Value = LatticeFunction> {
    let cells = (2 * radius + 1).pow(dim as u32);
    proptest::collection::vec(-1.0f64..1.0, cells).prop_map(move |v| LatticeFunction::dense(dim, radius, v).unwrap())
}

fn sup_diff(a: &LatticeFunction, b: &LatticeFunction) -> f64 {
    a.linear_combination(1.0, b, -1.0).unwrap().sup_norm()
}

fn field_diff(a: &SpectralField, b: &SpectralField) -> f64 {
    let diff = SpectralField::combine(&[a, b], |v| v[0] - v[1]).unwrap();
    let mut worst = 0.0_f64;
    diff.for_each_class(|_, v, _| worst = worst.max(v.norm()));
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn symmetrization_is_idempotent(f in dense(3, 2)) {
        let s = symmetrize(&f).unwrap();
        prop_assert!(check_symmetry(&s).symmetric);
        let twice = symmetrize(&s).unwrap();
        prop_assert!(sup_diff(&s, &twice) <= 1e-15);
    }

    #[test]
    fn convolution_commutes_and_has_identity(f in dense(2, 2), g in dense(2, 3)) {
        let fg = convolve(&f, &g).unwrap();
        let gf = convolve(&g, &f).unwrap();
        prop_assert!(sup_diff(&fg, &gf) <= 1e-14);
        let id = convolve(&LatticeFunction::delta(2), &f).unwrap();
        prop_assert_eq!(sup_diff(&id, &f), 0.0);
    }

    #[test]
    fn moments_are_linear(f in dense(3, 2), g in dense(3, 2), a in -3.0f64..3.0, b in -3.0f64..3.0, p in 0u32..5) {
        let p = p as f64;
        let combo = f.linear_combination(a, &g, b).unwrap();
        let lhs = moment(&combo, p, false);
        let rhs = a * moment(&f, p, false) + b * moment(&g, p, false);
        let scale = (a.abs() * moment(&f, p, true) + b.abs() * moment(&g, p, true)).max(1.0);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn transform_round_trip(f in dense(2, 3)) {
        let grid = TorusGrid::shifted(2, 8).unwrap();
        let back = inverse_on_box(&forward_transform(&f, &grid).unwrap(), 3, false).unwrap();
        prop_assert!(sup_diff(&back, &f) <= 1e-13);
    }

    #[test]
    fn symmetric_transforms_are_real(f in dense(3, 2)) {
        let s = symmetrize(&f).unwrap();
        let grid = TorusGrid::shifted(3, 8).unwrap();
        prop_assert!(forward_transform(&s, &grid).unwrap().max_imag() < 1e-12);
    }

    #[test]
    fn shift_difference_is_linear_and_odd(f in dense(2, 2), g in dense(2, 2), a in -2.0f64..2.0, steps in 0i64..12) {
        let grid = TorusGrid::shifted(2, 12).unwrap();
        let (fh, gh) = (forward_transform(&f, &grid).unwrap(), forward_transform(&g, &grid).unwrap());
        let u = steps as f64 * grid.spacing();
        let combo = SpectralField::combine(&[&fh, &gh], |v| v[0] * a + v[1]).unwrap();
        let lhs = u_shift_difference(&combo, u).unwrap();
        let uf = u_shift_difference(&fh, u).unwrap();
        let ug = u_shift_difference(&gh, u).unwrap();
        let rhs = SpectralField::combine(&[&uf, &ug], |v| v[0] * a + v[1]).unwrap();
        prop_assert!(field_diff(&lhs, &rhs) <= 1e-13);
        let back = u_shift_difference(&fh, -u).unwrap();
        let negated = SpectralField::combine(&[&uf], |v| -v[0]).unwrap();
        prop_assert_eq!(field_diff(&back, &negated), 0.0);
    }

    #[test]
    fn exponent_budget_is_consistent(d in 3u32..40, num in 1i64..200, den in 1i64..20) {
        let rho = Rational::new(num, den);
        match admissible_s(d, rho) {
            Ok(b) => {
                prop_assert!(b.s_sup > Rational::from_integer(0) && b.s_sup <= Rational::from_integer(2));
                prop_assert_eq!(b.n_d, d - 2 + b.s0);
            }
            Err(_) => prop_assert!(rho <= rho_lower_bound(d)),
        }
        prop_assert_eq!(parse_ratio(&format!("{num}/{den}")).unwrap(), rho);
    }
}

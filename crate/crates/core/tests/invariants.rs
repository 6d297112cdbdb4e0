use proptest::prelude::*;

use lipd::fbi::{inverse_semiclassical_fourier, semiclassical_fourier};
use lipd::io::{read_field_csv, read_market_csv, write_field_csv, write_market_csv, MarketObservation, Pchip};
use lipd::kernels::{apply_semigroup, heat_kernel, kernel_mass_defect, weight_w_real};
use lipd::{Field, Grid};

fn field(vals: &[f64]) -> Field {
    Field::from_real(Grid::new(-6.0, 6.0, vals.len()).unwrap(), vals).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heat_kernel_is_positive_with_unit_mass(tau in 1e-3f64..3.0, y in -5.0f64..5.0, a in -2.0f64..2.0) {
        prop_assert!(heat_kernel(tau, y, a).unwrap() > 0.0);
        prop_assert!(kernel_mass_defect(tau, a).unwrap() <= 1e-10);
    }

    #[test]
    fn weight_is_positive_and_increasing(tau in 1e-3f64..1.0, y in -4.0f64..6.0, dy in 1e-3f64..1.0, a in -1.5f64..1.5) {
        let lo = weight_w_real(tau, y, a).unwrap();
        let hi = weight_w_real(tau, y + dy, a).unwrap();
        prop_assert!(lo > 0.0);
        prop_assert!(hi >= lo);
    }

    #[test]
    fn semigroup_is_linear(
        u in proptest::collection::vec(-1.0f64..1.0, 128),
        v in proptest::collection::vec(-1.0f64..1.0, 128),
        c in -3.0f64..3.0,
        tau in 0.01f64..0.5,
    ) {
        let (fu, fv) = (field(&u), field(&v));
        let lhs = apply_semigroup(tau, &fu.scale(c).add(&fv).unwrap(), -0.8125).unwrap();
        let rhs = apply_semigroup(tau, &fu, -0.8125).unwrap().scale(c).add(&apply_semigroup(tau, &fv, -0.8125).unwrap()).unwrap();
        let scale = 1.0 + lhs.l2_norm();
        prop_assert!(lhs.sub(&rhs).unwrap().l2_norm() <= 1e-12 * scale);
    }

    #[test]
    fn semiclassical_fourier_round_trips(vals in proptest::collection::vec(-1.0f64..1.0, 64), h in 0.02f64..1.0) {
        let u = field(&vals);
        let back = inverse_semiclassical_fourier(&semiclassical_fourier(&u, h).unwrap(), h, u.grid.y_min).unwrap();
        prop_assert!(back.sub(&u).unwrap().l2_norm() <= 1e-12 * (1.0 + u.l2_norm()));
        // discrete Parseval
        let fu = semiclassical_fourier(&u, h).unwrap();
        let e_u: f64 = u.values.iter().map(|x| x.norm_sqr()).sum::<f64>() * u.grid.dy;
        let e_f: f64 = fu.values.iter().map(|x| x.norm_sqr()).sum::<f64>() * fu.grid.dy;
        prop_assert!((e_u - e_f).abs() <= 1e-12 * (1.0 + e_u));
    }

    #[test]
    fn field_csv_round_trips_bit_exactly(vals in proptest::collection::vec(-1e3f64..1e3, 2..200), lo in -10.0f64..0.0, len in 0.5f64..20.0) {
        let f = Field::from_real(Grid::new(lo, lo + len, vals.len()).unwrap(), &vals).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &f).unwrap();
        let g = read_field_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(g.values, f.values);
        prop_assert!(g.grid.same_as(&f.grid));
    }

    #[test]
    fn market_csv_round_trips(steps in proptest::collection::vec((0.01f64..2.0, 0.0f64..5.0), 4..40)) {
        let mut a = 0.0;
        let (xs, ps): (Vec<f64>, Vec<f64>) = steps.iter().map(|&(d, p)| { a += d; (a, p) }).unzip();
        let obs = MarketObservation::new(xs, ps).unwrap();
        let mut buf = Vec::new();
        write_market_csv(&mut buf, &obs).unwrap();
        prop_assert_eq!(read_market_csv(buf.as_slice()).unwrap(), obs);
    }

    #[test]
    fn pchip_interpolates_and_preserves_monotone_data(steps in proptest::collection::vec((0.05f64..1.0, 0.0f64..1.0), 4..20), pick in 0usize..64, t in 0.0f64..1.0) {
        let (mut x, mut y) = (0.0, 0.0);
        let (xs, ys): (Vec<f64>, Vec<f64>) = steps.iter().map(|&(dx, dy)| { x += dx; y += dy; (x, y) }).unzip();
        let p = Pchip::new(&xs, &ys).unwrap();
        for (xi, yi) in xs.iter().zip(&ys) {
            prop_assert!((p.eval(*xi) - yi).abs() <= 1e-12 * (1.0 + yi.abs()));
        }
        let k = pick % (xs.len() - 1);
        let xm = xs[k] + t * (xs[k + 1] - xs[k]);
        let v = p.eval(xm);
        prop_assert!(v >= ys[k] - 1e-12 && v <= ys[k + 1] + 1e-12);
    }
}

#[test]
fn market_rows_must_increase() {
    assert!(MarketObservation::new(vec![1.0, 2.0, 2.0, 3.0], vec![0.0; 4]).is_err());
    assert!(MarketObservation::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.1, -0.2, 0.3, 0.4]).is_err());
}

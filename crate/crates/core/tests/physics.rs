use ddtune::maglev::*;
use ddtune::trajectory::{plan_fourth_order, validate_profile, ProfileBounds};
use proptest::prelude::*;

const TS: f64 = 1.0 / 5000.0;

#[test]
fn determinant_closed_form_on_grid() {
    let g = MaglevGeometry::default();
    for iz in 0..10 {
        let z = iz as f64 * 4e-4;
        let closed = closed_form_determinant(z, &g).unwrap();
        assert!(closed > 0.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for ix in 0..100 {
            let x = -0.02 + ix as f64 * 6e-4;
            let d = direct_determinant(x, z, &g).unwrap();
            assert!((d - closed).abs() <= 1e-10 * closed, "x={x} z={z}");
            lo = lo.min(d);
            hi = hi.max(d);
        }
        assert!((hi - lo) / closed < 1e-10);
    }
}

#[test]
fn phi_entries_are_shifted_constants() {
    let g = MaglevGeometry::default();
    let (x, z) = (0.0042, 0.0011);
    let m = phi_matrix(x, z, &g).unwrap();
    let (a, b) = force_constants(x, z, &g).unwrap();
    let (c, d) = force_constants(x + 3.0 * g.tau, z, &g).unwrap();
    assert_eq!([m[(0, 0)], m[(1, 0)], m[(0, 1)], m[(1, 1)]], [a, b, c, d]);
}

#[test]
fn margin_squared_times_decay_is_determinant() {
    let g = MaglevGeometry { cf: 3.5, ..Default::default() };
    let m = invertibility_margin(&g);
    for z in [0.0, 1e-3, 5e-3] {
        let expect = (g.cf * (-g.gamma() * z).exp() * m).powi(2);
        let d = direct_determinant(0.0123, z, &g).unwrap();
        assert!((d - expect).abs() <= 1e-10 * expect);
    }
}

#[test]
fn allocated_currents_vary_smoothly_with_position() {
    let g = MaglevGeometry::default();
    let f = ForceVector { fx: 2e-3, fz: 1e-3 };
    let mut prev: Option<PhaseCurrents> = None;
    for k in 0..400 {
        let x = k as f64 * 1e-4;
        let i = allocate_currents(f, x, 1e-3, &g, 10.0).unwrap();
        // a scaled rotation preserves the current norm
        let n = (i.i1 * i.i1 + i.i2 * i.i2).sqrt();
        let n0 = (f.fx * f.fx + f.fz * f.fz).sqrt() / (f64::from(g.n_coils) * closed_form_determinant(1e-3, &g).unwrap().sqrt());
        assert!((n - n0).abs() <= 1e-12 * n0);
        if let Some(p) = prev {
            assert!((i.i1 - p.i1).abs() < 0.05 * n0 && (i.i2 - p.i2).abs() < 0.05 * n0);
        }
        prev = Some(i);
    }
}

proptest! {
    #[test]
    fn force_round_trip(
        x in -0.05f64..0.05,
        z in 0.0f64..0.004,
        fx in -0.01f64..0.01,
        fz in -0.01f64..0.01,
    ) {
        let g = MaglevGeometry::default();
        let want = ForceVector { fx, fz };
        let i = allocate_currents(want, x, z, &g, f64::INFINITY).unwrap();
        let got = forcer_force(x, z, i, &g).unwrap();
        let scale = fx.abs().max(fz.abs()).max(1e-300);
        prop_assert!((got.fx - fx).abs() <= 1e-9 * scale);
        prop_assert!((got.fz - fz).abs() <= 1e-9 * scale);
    }

    #[test]
    fn generated_profiles_are_valid(
        v in 0.01f64..0.2,
        a in 0.5f64..5.0,
        j in 50.0f64..500.0,
        s in 5e3f64..5e4,
        d in 0.002f64..0.05,
        neg in any::<bool>(),
    ) {
        let b = ProfileBounds {
            v_max: v,
            a_max: a,
            j_max: j,
            s_max: s,
            displacement: if neg { -d } else { d },
        };
        let p = plan_fourth_order(&b, TS).unwrap();
        let r = validate_profile(&p, &b);
        prop_assert!(r.all_passed(), "{}", r);
    }
}

use proptest::prelude::*;

use chiral_film::config::SurfaceSpec;
use chiral_film::harness::{
    EpsEntry, IdentityCheck, SolveSummary, SweepChecks, SweepReport, PRESET_J,
};
use chiral_film::report::{field_csv, parse_field_csv, report_from_json, report_to_json};
use chiral_film::stencil::DiffStencil;
use chiral_film::surface::{metric_tangent_coeff, metric_volume_factor, ParametricSurface};
use chiral_film::{
    eval_limit_energy, eval_thin_energy, optimal_corrector, random_field, recovery_field, DirectorField, Energy,
    EnergyBreakdown, Layout, Mat3, PerturbationKind, RunConfig, SurfaceKind, TargetManifold, Termination, Vec3,
};

fn unit_vec() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-4)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalized().unwrap())
}

fn ellipsoid() -> impl Strategy<Value = TargetManifold> {
    (0.6..1.6f64, 0.6..1.6f64, 0.6..1.6f64).prop_map(|(a, b, c)| TargetManifold::ellipsoid(a, b, c).unwrap())
}

fn kinds() -> Vec<PerturbationKind> {
    vec![
        PerturbationKind::BulkDmi { kappa: 1.3 },
        PerturbationKind::InterfacialDmi { kappa: 0.7 },
        PerturbationKind::AnisotropicDmi { j: Mat3::from_f64(PRESET_J) },
    ]
}

fn rotation(axis: Vec3, angle: f64) -> Mat3 {
    let k = axis.cross_matrix();
    Mat3::identity() + k.scale(angle.sin()) + k.mul_mat(&k).scale(1.0 - angle.cos())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn projection_is_stationary_and_distance_is_signed(target in ellipsoid(), dir in unit_vec(), t in -0.9..0.9f64) {
        let sigma = target.project(dir.scale(2.0)).unwrap();
        let n = target.normal(sigma).unwrap();
        let y = sigma + n.scale(t * target.admissible_radius());
        let p = target.project(y).unwrap();
        prop_assert!(target.level_residual(p).abs() <= 1e-9);
        prop_assert!((y - p).cross(target.normal(p).unwrap()).norm() <= 1e-9);
        prop_assert!((target.signed_distance(y).unwrap() - t * target.admissible_radius()).abs() <= 1e-9);
        prop_assert!((target.project(p).unwrap() - p).norm() <= 1e-12);
    }

    #[test]
    fn tangent_projection_is_orthogonal_and_idempotent(target in ellipsoid(), dir in unit_vec(), g in unit_vec()) {
        let sigma = target.project(dir.scale(2.0)).unwrap();
        let t = target.tangent_project(sigma, g);
        prop_assert!(t.dot(target.normal(sigma).unwrap()).abs() <= 1e-14);
        prop_assert!((target.tangent_project(sigma, t) - t).norm() <= 1e-15);
    }

    #[test]
    fn perturbation_is_antisymmetric_and_linear(w1 in unit_vec(), w2 in unit_vec(), sigma in unit_vec(), alpha in -3.0..3.0f64, k in 0usize..64) {
        let grid = SurfaceSpec::sphere_band(8).build().unwrap();
        for kind in kinds() {
            let bound = kind.bind(&grid).unwrap();
            let m = bound.eval_k(k, sigma).unwrap();
            if !matches!(kind, PerturbationKind::InterfacialDmi { .. }) {
                prop_assert!(m.mul_vec(w1).dot(sigma).abs() <= 1e-14 * m.frobenius().max(1.0));
            }
            let lhs = m.mul_vec(w1.scale(alpha) + w2);
            let rhs = m.mul_vec(w1).scale(alpha) + m.mul_vec(w2);
            prop_assert!((lhs - rhs).norm() <= 1e-14 * m.frobenius().max(1.0) * (alpha.abs() + 1.0));
        }
        let interfacial = PerturbationKind::InterfacialDmi { kappa: 0.7 }.bind(&grid).unwrap();
        prop_assert_eq!(interfacial.apply(k, sigma, 2), Vec3::zero());
    }

    #[test]
    fn stencil_transpose_is_adjoint(n in 3usize..24, h in 0.01..2.0f64, periodic in any::<bool>(), seed in any::<u64>()) {
        let st = DiffStencil::<f64>::new(n, h, periodic);
        let f: Vec<f64> = (0..n).map(|i| ((seed.wrapping_add(i as u64) % 1000) as f64 / 500.0) - 1.0).collect();
        let g: Vec<f64> = (0..n).map(|i| (((seed >> 7).wrapping_mul(i as u64 + 3) % 997) as f64 / 498.5) - 1.0).collect();
        let df: Vec<f64> = (0..n).map(|i| st.row(i).map(|(j, c)| c * f[j]).sum()).collect();
        let lhs: f64 = df.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = (0..n).map(|j| f[j] * st.column(j).iter().map(|&(i, c)| c * g[i]).sum::<f64>()).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()) / h);
    }

    #[test]
    fn metric_factors_stay_in_budget(k1 in -4.0..4.0f64, k2 in -4.0..4.0f64, frac in 0.0..1.0f64, s in -1.0..1.0f64) {
        let kmax = k1.abs().max(k2.abs()).max(1e-6);
        let eps = frac / (2.0 * kmax);
        let c_n = 4.0;
        let g = metric_volume_factor(k1, k2, eps, s);
        prop_assert!((1.0 / c_n..=c_n).contains(&g));
        for k in [k1, k2] {
            let h = metric_tangent_coeff(k, eps, s);
            prop_assert!((1.0 / c_n..=c_n).contains(&h));
        }
    }

    #[test]
    fn frames_are_orthonormal(major in 1.5..3.0f64, minor in 0.2..1.0f64, n in 4usize..12) {
        for kind in [
            SurfaceKind::Torus { major, minor },
            SurfaceKind::Cylinder { radius: minor, height: major },
            SurfaceKind::SphereLatLong { radius: major, theta_cap: 0.15 },
        ] {
            let grid = ParametricSurface::new(kind, n, n + 1).build().unwrap();
            for f in &grid.frames {
                prop_assert!((f.tau1.norm() - 1.0).abs() <= 1e-12);
                prop_assert!((f.tau2.norm() - 1.0).abs() <= 1e-12);
                prop_assert!(f.tau1.dot(f.tau2).abs() <= 1e-12);
                prop_assert!((f.tau1.cross(f.tau2) - f.normal).norm() <= 1e-12);
                prop_assert!(f.area_weight > 0.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn energies_are_nonnegative_and_additive(seed in any::<u64>(), eps in 0.01..0.5f64, target in ellipsoid()) {
        let grid = SurfaceSpec::sphere_band(8).build().unwrap();
        for kind in kinds() {
            let bound = kind.bind(&grid).unwrap();
            let limit = eval_limit_energy(&random_field(&grid, &target, Layout::Surface, seed).unwrap(), &grid, &target, &bound).unwrap();
            let thin = eval_thin_energy(&random_field(&grid, &target, Layout::Thin { n_s: 4 }, seed).unwrap(), &grid, &target, &bound, eps).unwrap();
            for e in [limit, thin] {
                prop_assert!(e.tangential >= 0.0 && e.normal_or_anisotropy >= 0.0);
                prop_assert_eq!(e.total, e.tangential + e.normal_or_anisotropy);
            }
        }
    }

    #[test]
    fn unperturbed_energy_is_rotation_invariant(seed in any::<u64>(), axis in unit_vec(), angle in 0.0..6.3f64) {
        let grid = SurfaceSpec::sphere_band(8).build().unwrap();
        let sphere = TargetManifold::sphere(1.0).unwrap();
        let zero = PerturbationKind::Zero.bind(&grid).unwrap();
        let u = random_field(&grid, &sphere, Layout::Thin { n_s: 4 }, seed).unwrap();
        let r = rotation(axis, angle);
        let ru = DirectorField { values: u.values.iter().map(|&v| r.mul_vec(v)).collect(), ..u.clone() };
        let e = Energy::thin(&grid, &sphere, &zero, 0.1, None);
        let (a, b) = (e.evaluate(&u).unwrap().total, e.evaluate(&ru).unwrap().total);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn recovery_fields_stay_on_target(seed in any::<u64>(), eps in 0.005..0.2f64, target in ellipsoid()) {
        let grid = SurfaceSpec::sphere_band(8).build().unwrap();
        let bound = PerturbationKind::BulkDmi { kappa: 1.0 }.bind(&grid).unwrap();
        let u0 = random_field(&grid, &target, Layout::Surface, seed).unwrap();
        let d0 = optimal_corrector(&u0, &grid, &target, &bound, None).unwrap();
        let max_d0 = d0.iter().map(|d| d.norm()).fold(0.0, f64::max);
        match recovery_field(&u0, &d0, eps, 4, &target) {
            Ok(u) => {
                prop_assert!(u.max_distance_to(&target) <= 1e-9);
                prop_assert_eq!(u.layout, Layout::Thin { n_s: 4 });
            }
            Err(_) => prop_assert!(eps * max_d0 >= target.admissible_radius()),
        }
    }

    #[test]
    fn field_csv_round_trips(seed in any::<u64>(), thin in any::<bool>()) {
        let grid = SurfaceSpec::sphere_band(6).build().unwrap();
        let target = TargetManifold::sphere(1.0).unwrap();
        let layout = if thin { Layout::Thin { n_s: 5 } } else { Layout::Surface };
        let u = random_field(&grid, &target, layout, seed).unwrap();
        prop_assert_eq!(parse_field_csv(&field_csv(&u, &grid).unwrap(), &grid, "f").unwrap(), u);
    }

    #[test]
    fn config_echo_is_a_fixed_point(seed in any::<u64>(), n in 4usize..40, first in 0.05..0.45f64, ratio in 0.1..0.9f64, len in 1usize..5) {
        let mut cfg = chiral_film::harness::preset("interfacial").unwrap();
        cfg.seed = seed;
        cfg.surface = SurfaceSpec::sphere_band(n);
        cfg.sweep.eps = Some((0..len).map(|i| first * ratio.powi(i as i32)).collect());
        let echo = cfg.echo();
        let back = RunConfig::from_json(&echo, "echo").unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.echo(), echo);
    }

    #[test]
    fn report_json_round_trips(values in prop::collection::vec(-1e300..1e300f64, 12), iterations in any::<u32>()) {
        let summary = |x: f64, y: f64| SolveSummary {
            energy: EnergyBreakdown::new(x.abs(), y.abs()),
            iterations: iterations as usize,
            gradient_norm: y.abs() * 1e-300,
            termination: Termination::MaxIterations,
        };
        let entry = EpsEntry {
            eps: values[0].abs(),
            n_s: 8,
            error: None,
            minimum: Some(summary(values[1], values[2])),
            gap: Some(values[3].abs()),
            recovery_energy: Some(values[4]),
            recovery_gap: Some(values[5]),
            h1_distance: Some(values[6].abs()),
            s_derivative_share: Some(values[7].abs() * 1e-310),
        };
        let failed = EpsEntry { error: Some("non-finite value: \"x\"".into()), minimum: None, gap: None, recovery_energy: None, recovery_gap: None, h1_distance: None, s_derivative_share: None, ..entry.clone() };
        let report = SweepReport {
            version: "1".into(),
            perturbation: "bulk".into(),
            limit: summary(values[8], values[9]),
            entries: vec![entry, failed],
            identities: IdentityCheck { samples: 1000, max_residual: values[10].abs(), scale: values[11].abs(), relative_residual: 0.0, vanishing_expected: true, passed: false },
            checks: SweepChecks {
                all_entries_ok: false, gaps_non_increasing: true, gap_ratio: values[3].abs(), gap_ratio_ok: true,
                recovery_upper_bound: true, recovery_gap_non_increasing: false, recovery_energy_non_increasing: true,
                recovery_lower_bound: true, h1_non_increasing: false, s_share_decreasing: true, identity_ok: false, passed: false,
            },
        };
        let text = report_to_json(&report);
        let back = report_from_json(&text).unwrap();
        prop_assert_eq!(&back, &report);
        prop_assert_eq!(report_to_json(&back), text);
    }
}

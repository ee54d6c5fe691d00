use fracobstacle::benchmarks;
use fracobstacle::discretization::Grid;
use fracobstacle::field::SpaceTimeField;
use fracobstacle::kernel::{KernelSpec, KernelVariant};
use fracobstacle::oracle::{solve_vi, PsorOptions};
use fracobstacle::regularity::*;
use proptest::prelude::*;

fn line(cells: usize) -> Grid {
    Grid::interval(-1.0, 1.0, cells).unwrap()
}

#[test]
fn linear_in_time_gap_gives_its_slope() {
    let grid = line(32);
    let psi = SpaceTimeField::sample(&grid, 0.05, 9, |x, t| 0.3 - x[0] * x[0] + 0.1 * t).unwrap();
    let u = SpaceTimeField::sample(&grid, 0.05, 9, |x, t| 0.3 - x[0] * x[0] + 0.1 * t + t * x[0].sin()).unwrap();
    let v = derived_field(&u, &psi).unwrap();
    for k in 0..v.n_slices() {
        for (i, x) in grid.all_coords().iter().enumerate() {
            assert!((v.at(k, i) - x[0].sin()).abs() < 1e-12);
        }
    }
    let flat = derived_field(&psi, &psi).unwrap();
    assert!(flat.values().iter().all(|&a| a == 0.0));
}

#[test]
fn oracle_mask_is_the_clamp_set() {
    let p = benchmarks::b1();
    let u = solve_vi(&p, &PsorOptions::default()).unwrap().field;
    let psi = p.obstacle_field().unwrap();
    let mask = coincidence_mask(&u, &psi, 0.0).unwrap();
    assert!(mask.tolerance <= 1e-9);
    let mut contacts = 0;
    for k in 0..u.n_slices() {
        for i in 0..u.nodes() {
            let gap = u.at(k, i) - psi.at(k, i);
            if gap == 0.0 {
                assert!(mask.at(k, i));
                contacts += 1;
            }
            if mask.at(k, i) {
                assert!(gap <= mask.tolerance);
            }
        }
    }
    assert!(contacts > 0);
}

#[test]
fn inactive_obstacle_gives_an_empty_mask() {
    let grid = line(16);
    let u = SpaceTimeField::sample(&grid, 0.1, 4, |_, _| 0.0).unwrap();
    let psi = SpaceTimeField::sample(&grid, 0.1, 4, |_, _| -5.0).unwrap();
    let mask = coincidence_mask(&u, &psi, 1e-3).unwrap();
    assert_eq!((0..4).map(|k| mask.count(k)).sum::<usize>(), 0);
    assert_eq!(mask.first_contact_slice(), None);
}

#[test]
fn trivial_masks_have_density_zero_and_one() {
    let grid = line(64);
    let cyl = ParabolicCylinder::new(vec![0.0], 0.5, 0.25, 1.5).unwrap();
    let full = CoincidenceMask::from_fn(&grid, 1.0 / 64.0, 65, |_, _| true);
    let empty = CoincidenceMask::from_fn(&grid, 1.0 / 64.0, 65, |_, _| false);
    assert_eq!(parabolic_density(&full, &cyl).unwrap(), 1.0);
    assert_eq!(parabolic_density(&empty, &cyl).unwrap(), 0.0);
}

#[test]
fn half_space_mask_has_density_one_half() {
    let cells = 64;
    let grid = line(cells);
    let h = grid.h();
    let mask = CoincidenceMask::from_fn(&grid, 1.0 / 64.0, 65, |x, _| x[0] <= 0.0);
    for r in [0.5, 0.25, 0.125] {
        let cyl = ParabolicCylinder::new(vec![0.0], 0.75, r, 1.5).unwrap();
        let d = parabolic_density(&mask, &cyl).unwrap();
        // m nodes on each side of the centre plus the centre itself.
        let m = (r / h).round();
        assert!((d - (m + 1.0) / (2.0 * m + 1.0)).abs() < 1e-12, "r {r}: {d}");
        if r >= 0.25 {
            assert!((d - 0.5).abs() <= 2.0 / cells as f64, "r {r}: {d}");
        }
    }
    let profile = density_profile(&mask, &[0.0], 0.75, &[0.5, 0.25], 1.5, 0.05).unwrap();
    assert!((profile.c_estimate - 0.5).abs() <= 2.0 / cells as f64);
    assert!(profile.positive_density);
    assert_eq!(profile.r0_estimate, Some(0.5));
}

#[test]
fn point_away_from_the_mask_has_zero_density() {
    let grid = line(64);
    let mask = CoincidenceMask::from_fn(&grid, 1.0 / 64.0, 65, |x, _| x[0] <= -0.5);
    let profile = density_profile(&mask, &[0.25], 0.75, &[0.25, 0.125, 0.0625], 1.5, 0.05).unwrap();
    assert_eq!(profile.c_estimate, 0.0);
    assert_eq!(profile.r0_estimate, None);
    assert!(!profile.positive_density);
}

#[test]
fn cusp_mask_is_flagged_thin() {
    // {|x| <= (t0 - t)^2} with alpha = 1: in Q_r the slice width is at most
    // r^2, so the cell fraction is about r / 3.
    let grid = line(512);
    let dt = 1.0 / 512.0;
    let t0 = 1.0;
    let mask = CoincidenceMask::from_fn(&grid, dt, 513, |x, t| x[0].abs() <= (t0 - t).max(0.0).powi(2));
    let radii = [0.5, 0.25, 0.125];
    let profile = density_profile(&mask, &[0.0], t0, &radii, 1.0, 0.05).unwrap();
    let d: Vec<f64> = profile.densities.iter().map(|p| p.1).collect();
    assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    for (r, di) in radii.iter().zip(&d) {
        // Cell counting adds the centre column of width one node.
        let expected = r / 3.0 + 1.0 / (2.0 * r * 256.0);
        assert!((di - expected).abs() < 0.25 * expected, "r {r}: {di} vs {expected}");
    }
    assert_eq!(profile.c_estimate, d[2]);
    assert!(!profile.positive_density);
}

#[test]
fn cylinder_outside_the_box_is_a_domain_error() {
    let grid = line(32);
    let mask = CoincidenceMask::from_fn(&grid, 0.05, 11, |_, _| true);
    let low = ParabolicCylinder::new(vec![0.0], 0.1, 0.5, 1.5).unwrap();
    assert!(matches!(parabolic_density(&mask, &low), Err(fracobstacle::Error::Domain(_))));
    let wide = ParabolicCylinder::new(vec![0.9], 0.4, 0.25, 1.5).unwrap();
    assert!(parabolic_density(&mask, &wide).is_err());
}

#[test]
fn constant_field_has_zero_modulus() {
    let grid = line(32);
    let v = SpaceTimeField::sample(&grid, 0.05, 11, |_, _| 0.7).unwrap();
    let base = [SpaceTimeNode { node: 16, slice: 5 }];
    let table = positive_part_modulus(&v, &base, &[0.5, 0.1], 1.5).unwrap();
    assert!(table.rows.iter().all(|r| r.omega == Some(0.0)));
    let edge = [SpaceTimeNode { node: 16, slice: 0 }];
    assert!(modulus(&v, &edge, &[0.1], 1.5).is_err());
}

#[test]
fn sub_grid_radius_is_skipped() {
    let grid = line(32);
    let v = SpaceTimeField::sample(&grid, 0.05, 11, |x, t| x[0] + t).unwrap();
    let base = [SpaceTimeNode { node: 16, slice: 5 }];
    let table = modulus(&v, &base, &[0.5, 1e-4], 1.5).unwrap();
    assert!(table.rows[0].omega.unwrap() > 0.0);
    assert_eq!(table.rows[1].omega, None);
    assert_eq!(table.skipped, vec![1e-4]);
}

#[test]
fn local_energy_of_constants() {
    let grid = line(32);
    let kernel = KernelSpec::pure(1.5, 1).unwrap();
    let point = SpaceTimeNode { node: 16, slice: 8 };
    let zero = SpaceTimeField::sample(&grid, 0.05, 11, |_, _| 0.0).unwrap();
    assert_eq!(local_energy(&zero, point, 0.25, &kernel).unwrap(), 0.0);
    let one = SpaceTimeField::sample(&grid, 0.05, 11, |_, _| 1.0).unwrap();
    assert_eq!(local_energy(&one, point, 0.25, &kernel).unwrap(), 1.0);
    let tempered = KernelSpec::new(1.5, 1.0, 1, KernelVariant::Truncated { radius: 2.0 }).unwrap();
    assert!(matches!(
        local_energy(&one, point, 0.25, &tempered),
        Err(fracobstacle::Error::Unsupported(_))
    ));
}

#[test]
fn power_law_samples_are_recovered() {
    let samples: Vec<(f64, f64)> = [1.0, 0.2, 0.04].iter().map(|&r: &f64| (r, r.sqrt())).collect();
    let fit = holder_fit(&samples).unwrap();
    assert!((fit.gamma - 0.5).abs() < 1e-12);
    assert!((fit.r2 - 1.0).abs() < 1e-12);
    let flat = holder_fit(&[(1.0, 0.3), (0.2, 0.3), (0.04, 0.3)]).unwrap();
    assert!(flat.gamma.abs() < 1e-12);
    assert!(matches!(
        holder_fit(&[(1.0, 0.3), (0.2, 0.0), (0.04, 0.1)]),
        Err(fracobstacle::Error::InsufficientData(_))
    ));
}

#[test]
fn mask_survives_run_length_encoding() {
    let grid = line(32);
    let mask = CoincidenceMask::from_fn(&grid, 0.05, 11, |x, t| x[0].abs() < 0.3 + t);
    let rle = mask.to_rle();
    let text = serde_json::to_string(&rle).unwrap();
    let back = CoincidenceMask::from_rle(&serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(back, mask);
    assert_eq!(rle.interpretation, INTERPRETATION);
}

fn field_from(values: &[f64]) -> SpaceTimeField {
    let grid = line(8);
    let n = grid.len();
    SpaceTimeField::from_flat(&grid, 0.1, values.len() / n, values.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parts_decompose_exactly(values in prop::collection::vec(-3.0f64..3.0, 7 * 4)) {
        let v = field_from(&values);
        let (p, n) = (positive_part(&v), negative_part(&v));
        for i in 0..values.len() {
            let (a, b) = (p.values()[i], n.values()[i]);
            prop_assert_eq!(a - b, values[i]);
            prop_assert_eq!(a * b, 0.0);
            prop_assert!(a >= 0.0 && b >= 0.0);
        }
    }

    #[test]
    fn density_is_monotone_under_inclusion(a in 0.0f64..1.0, b in 0.0f64..0.5, r in 0.1f64..0.4, t0 in 0.6f64..1.0) {
        let grid = line(32);
        let small = CoincidenceMask::from_fn(&grid, 1.0 / 32.0, 33, |x, t| x[0] * x[0] + t * t <= a);
        let large = CoincidenceMask::from_fn(&grid, 1.0 / 32.0, 33, |x, t| x[0] * x[0] + t * t <= a + b);
        prop_assert!(small.is_subset_of(&large));
        let cyl = ParabolicCylinder::new(vec![0.0], t0, r, 1.2).unwrap();
        prop_assert!(parabolic_density(&small, &cyl).unwrap() <= parabolic_density(&large, &cyl).unwrap());
    }

    #[test]
    fn modulus_grows_with_the_radius(values in prop::collection::vec(-1.0f64..1.0, 7 * 6), node in 0usize..7, slice in 1usize..5) {
        let v = field_from(&values);
        let rhos = [0.05, 0.2, 0.4, 0.8, 1.6];
        let table = positive_part_modulus(&v, &[SpaceTimeNode { node, slice }], &rhos, 1.5).unwrap();
        let omegas: Vec<f64> = table.rows.iter().map(|r| r.omega.unwrap_or(0.0)).collect();
        prop_assert!(omegas.windows(2).all(|w| w[0] <= w[1]), "{:?}", omegas);
    }

    #[test]
    fn mask_grows_with_the_tolerance(values in prop::collection::vec(0.0f64..0.01, 7 * 3), e1 in 0.0f64..0.005, de in 0.0f64..0.005) {
        let u = field_from(&values);
        let psi = u.map(|_| 0.0);
        let m1 = coincidence_mask(&u, &psi, e1).unwrap();
        let m2 = coincidence_mask(&u, &psi, e1 + de).unwrap();
        prop_assert!(m1.is_subset_of(&m2));
    }
}

mod common;

use approx::assert_abs_diff_eq;
use common::{gauss, oracle_moments, random_model, rng};
use nalgebra::DMatrix;
use nphmm::harness::rho_on_grid;
use nphmm::spectral::*;
use nphmm::{build_kernel, choose_level, eval_kl, simulate, BandwidthLevel, EmissionModel, Error, HmmParams, Kernel};
use rand::Rng as _;

fn naive_p(x: &[f64], fs: &FeatureSet) -> DMatrix<f64> {
    let l0 = fs.len();
    let t = x.len() - 2;
    DMatrix::from_fn(l0, l0, |l, m| {
        (0..t)
            .map(|n| fs.features()[l].eval(x[n]) * fs.features()[m].eval(x[n + 2]))
            .sum::<f64>()
            / t as f64
    })
}

fn naive_m(x: &[f64], fs: &FeatureSet, k: &Kernel, lev: BandwidthLevel, at: f64) -> DMatrix<f64> {
    let l0 = fs.len();
    let t = x.len() - 2;
    DMatrix::from_fn(l0, l0, |l, m| {
        (0..t)
            .map(|n| fs.features()[l].eval(x[n]) * eval_kl(k, lev, at, x[n + 1]) * fs.features()[m].eval(x[n + 2]))
            .sum::<f64>()
            / t as f64
    })
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

#[test]
fn empirical_p_examples() {
    let x = [0.3, -1.0, 2.0, 4.0, 0.1];
    let one = FeatureSet::new(vec![Feature::Constant { value: 1.0 }]).unwrap();
    assert_abs_diff_eq!(empirical_p(&x, &one).unwrap()[(0, 0)], 1.0, epsilon = 1e-15);

    let ind = FeatureSet::new(vec![Feature::Interval { lo: Some(0.0), hi: None }]).unwrap();
    let x = [-1.0, 5.0, 2.0, -3.0];
    let p = empirical_p(&x, &ind).unwrap();
    assert_eq!(p[(0, 0)], naive_p(&x, &ind)[(0, 0)]);
    assert_eq!(p[(0, 0)], 0.0);

    assert!(matches!(empirical_p(&[1.0, 2.0], &one), Err(Error::TooFewObservations { .. })));
}

#[test]
fn empirical_p_matches_naive_and_permutes() {
    let mut r = rng(1);
    let x: Vec<f64> = (0..500).map(|_| r.random_range(-2.0..2.0)).collect();
    let fs = FeatureSet::partition(&[-1.0, 0.0, 0.5]).unwrap();
    let p = empirical_p(&x, &fs).unwrap();
    assert!(max_abs(&(&p - naive_p(&x, &fs))) < 1e-14);
    assert!(p.iter().all(|v| v.abs() <= fs.bound().powi(2)));
    let perm = [1, 0, 3, 2];
    let pp = empirical_p(&x, &fs.permuted(&perm)).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(pp[(i, j)], p[(perm[i], perm[j])]);
        }
    }
}

#[test]
fn empirical_m_matches_naive_loop() {
    let mut r = rng(2);
    let x: Vec<f64> = (0..400).map(|_| r.random_range(-2.0..2.0)).collect();
    let fs = FeatureSet::partition(&[0.0]).unwrap();
    let mm = MomentMatrices::new(&x, &fs).unwrap();
    let k = build_kernel(2.0);
    for lev in [BandwidthLevel(0), BandwidthLevel(2), BandwidthLevel(4)] {
        for _ in 0..100 {
            let at = r.random_range(-2.5..2.5);
            let fast = empirical_m(&mm, &k, lev, at);
            assert!(max_abs(&(&fast - naive_m(&x, &fs, &k, lev, at))) < 1e-12);
        }
    }
    // far from every middle coordinate
    assert_eq!(max_abs(&empirical_m(&mm, &k, BandwidthLevel(1), 10.0)), 0.0);
    // a single triple with h = 1
    let one = FeatureSet::new(vec![Feature::Constant { value: 1.0 }]).unwrap();
    let tiny = MomentMatrices::new(&[0.0, 0.2, 5.0], &one).unwrap();
    let m = empirical_m(&tiny, &k, BandwidthLevel(1), 0.1);
    assert_abs_diff_eq!(m[(0, 0)], eval_kl(&k, BandwidthLevel(1), 0.1, 0.2), epsilon = 1e-15);
}

#[test]
fn population_moments_match_state_sums() {
    let mut r = rng(3);
    for trial in 0..6 {
        let h = random_model(&mut r, 2 + trial % 2);
        let fs = FeatureSet::partition(&[-0.5, 0.4, 1.2]).unwrap();
        let k = build_kernel([1.0, 2.0, 3.0][trial % 3]);
        let lev = BandwidthLevel(1 + trial as u32 % 3);
        let x = r.random_range(-1.0..2.0);
        let pop = population_moments(&h, &fs, &k, lev, x).unwrap();
        let (p, m) = oracle_moments(&h, &fs, &k, lev, x);
        assert!(max_abs(&(&pop.p - p)) < 1e-6);
        assert!(max_abs(&(&pop.m - m)) < 1e-6);
    }
}

#[test]
fn population_o_examples() {
    let u0 = EmissionModel::Uniform { lo: -1.0, hi: 0.0 };
    let u1 = EmissionModel::Uniform { lo: 0.0, hi: 1.0 };
    let h = HmmParams::two_state(0.2, 0.3, u0.clone(), u1).unwrap();
    let fs = FeatureSet::constant_and_indicator(Some(0.0), None);
    let pop = population_moments(&h, &fs, &build_kernel(1.0), BandwidthLevel(2), 0.3).unwrap();
    let expect = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    assert!(max_abs(&(&pop.o - expect)) < 1e-12);

    let same = HmmParams::two_state(0.2, 0.3, u0.clone(), u0).unwrap();
    let pop = population_moments(&same, &FeatureSet::partition(&[-0.5]).unwrap(), &build_kernel(1.0), BandwidthLevel(2), 0.3)
        .unwrap();
    assert_eq!(pop.o.column(0), pop.o.column(1));
    assert_eq!(pop.o.rank(1e-12), 1);
}

#[test]
fn empirical_moments_converge_to_population() {
    let h = HmmParams::two_state(0.2, 0.3, gauss(0.0, 1.0), gauss(2.0, 1.0)).unwrap();
    let path = simulate(&h, 200_000, 5);
    let fs = FeatureSet::partition(&[0.0, 1.0, 2.0]).unwrap();
    let k = build_kernel(2.0);
    let lev = BandwidthLevel(1);
    let mm = MomentMatrices::new(&path.observations, &fs).unwrap();
    for x in [0.0, 1.0, 2.5] {
        let pop = population_moments(&h, &fs, &k, lev, x).unwrap();
        assert!(max_abs(&(mm.p_hat() - &pop.p)) < 0.01);
        assert!(max_abs(&(empirical_m(&mm, &k, lev, x) - &pop.m)) < 0.01);
    }
}

#[test]
fn project_svd_examples() {
    let v = project_svd(&DMatrix::identity(2, 2), 2).unwrap();
    assert!(max_abs(&(v.transpose() * &v - DMatrix::<f64>::identity(2, 2))) < 1e-12);
    for c in 0..2 {
        assert_abs_diff_eq!(v.column(c).iter().map(|x| x.abs()).sum::<f64>(), 1.0, epsilon = 1e-12);
    }
    let degenerate = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1e-15]));
    assert!(matches!(project_svd(&degenerate, 2), Err(Error::RankDeficient { .. })));

    // top-J right singular subspace, checked against the eigenvectors of P^T P
    let mut r = rng(4);
    for _ in 0..20 {
        let p = DMatrix::from_fn(5, 5, |_, _| r.random_range(-1.0..1.0));
        let v = project_svd(&p, 2).unwrap();
        assert!(max_abs(&(v.transpose() * &v - DMatrix::<f64>::identity(2, 2))) < 1e-10);
        let eig = (p.transpose() * &p).symmetric_eigen();
        let mut idx: Vec<usize> = (0..5).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = DMatrix::from_fn(5, 2, |i, c| eig.eigenvectors[(i, idx[c])]);
        let proj_a = &v * v.transpose();
        let proj_b = &top * top.transpose();
        assert!(max_abs(&(proj_a - proj_b)) < 1e-8);
        for c in 0..2 {
            let col = v.column(c);
            let big = col.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(big > 0.0);
        }
    }
}

fn sample_mm(seed: u64, n: usize, fs: &FeatureSet) -> (Vec<f64>, MomentMatrices) {
    let h = HmmParams::two_state(0.2, 0.3, gauss(0.0, 1.0), gauss(3.0, 1.0)).unwrap();
    let x = simulate(&h, n, seed).observations;
    let mm = MomentMatrices::new(&x, fs).unwrap();
    (x, mm)
}

#[test]
fn b_matrix_examples() {
    let fs = FeatureSet::partition(&[0.5, 1.5]).unwrap();
    let (_, mm) = sample_mm(6, 5000, &fs);
    let v = project_svd(mm.p_hat(), 2).unwrap();
    let proj = Projector::new(&mm, &v).unwrap();
    // weight one everywhere turns M into P
    let b = proj.b_weighted(f64::NEG_INFINITY, f64::INFINITY, |_| 1.0);
    assert!(max_abs(&(b - DMatrix::<f64>::identity(2, 2))) < 1e-10);
    let k = build_kernel(2.0);
    assert_eq!(max_abs(&b_matrix(&mm, &v, &k, BandwidthLevel(2), 100.0).unwrap()), 0.0);

    // fast path agrees with the definition
    for x in [-1.0, 0.0, 1.3, 3.0] {
        let slow = b_matrix(&mm, &v, &k, BandwidthLevel(2), x).unwrap();
        assert!(max_abs(&(slow - proj.b_at(&k, BandwidthLevel(2), x))) < 1e-12);
    }
}

#[test]
fn b_matrix_is_similar_to_p_inverse_m() {
    let fs = FeatureSet::partition(&[1.0]).unwrap();
    let (_, mm) = sample_mm(7, 5000, &fs);
    let k = build_kernel(2.0);
    let lev = BandwidthLevel(2);
    let theta: f64 = 0.7;
    let w = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
    for x in [0.0, 1.0, 2.5] {
        let b = b_matrix(&mm, &w, &k, lev, x).unwrap();
        let direct = mm.p_hat().clone().try_inverse().unwrap() * empirical_m(&mm, &k, lev, x);
        let mut e1: Vec<f64> = b.complex_eigenvalues().iter().map(|c| c.re).collect();
        let mut e2: Vec<f64> = direct.complex_eigenvalues().iter().map(|c| c.re).collect();
        e1.sort_by(f64::total_cmp);
        e2.sort_by(f64::total_cmp);
        for (a, c) in e1.iter().zip(&e2) {
            assert_abs_diff_eq!(a, c, epsilon = 1e-9);
        }
    }
}

#[test]
fn near_singular_projection_is_reported() {
    let fs = FeatureSet::partition(&[0.5, 1.5]).unwrap();
    let (_, mm) = sample_mm(8, 2000, &fs);
    let v = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(matches!(
        b_matrix(&mm, &v, &build_kernel(1.0), BandwidthLevel(1), 0.0),
        Err(Error::NearSingularProjection { .. })
    ));
}

#[test]
fn separation_examples() {
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0]));
    assert_eq!(eigen_separation(&diag), 2.0);
    assert_eq!(eigen_separation(&DMatrix::identity(2, 2)), 0.0);
    let upper = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 5.0]);
    assert_abs_diff_eq!(eigen_separation(&upper), 3.0, epsilon = 1e-12);
    let rotation = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    assert_eq!(eigen_separation(&rotation), 0.0);
    let three = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0, 2.5]));
    assert_abs_diff_eq!(eigen_separation(&three), 1.5, epsilon = 1e-12);
}

#[test]
fn selection_maximises_separation_over_the_space() {
    let fs = FeatureSet::partition(&[0.5, 1.5, 2.5]).unwrap();
    let h = HmmParams::two_state(0.2, 0.3, gauss(0.0, 1.0), gauss(4.0, 1.0)).unwrap();
    let x = simulate(&h, 20_000, 9).observations;
    let mm = MomentMatrices::new(&x, &fs).unwrap();
    let v = project_svd(mm.p_hat(), 2).unwrap();
    let k = build_kernel(2.0);
    let lev = BandwidthLevel(2);
    let space = DiagonalizerSearchSpace::dyadic(2, -8.0, 8.0, 7).unwrap();
    let best = select_diagonalizer(&mm, &v, &k, lev, &space).unwrap();
    // exhaustive scan with the slow definition
    let scan: Vec<f64> = space
        .points()
        .iter()
        .map(|p| eigen_separation(&b_matrix(&mm, &v, &k, lev, p.u[0]).unwrap()))
        .collect();
    let top = scan.iter().copied().fold(0.0, f64::max);
    assert_abs_diff_eq!(best.sep, top, epsilon = 1e-12);
    let first = scan.iter().position(|&s| (s - top).abs() < 1e-12).unwrap();
    assert_eq!(best.u, space.points()[first].u);
    // the separation is largest where the two densities differ most
    let u = best.u[0];
    assert!((-1.0..=1.0).contains(&u) || (3.0..=5.0).contains(&u), "u = {u}");
    assert!(best.sep > 0.0);
    assert!(best.eigenvalues[0] < best.eigenvalues[1]);
    for c in 0..2 {
        assert_abs_diff_eq!(best.r_hat.column(c).norm(), 1.0, epsilon = 1e-10);
    }
}

#[test]
fn selection_tie_break_and_failure() {
    let space = DiagonalizerSearchSpace::scalar(&[0.0, 1.0, 2.0]).unwrap();
    let constant = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
    let d = select_with(|_| constant.clone(), &space).unwrap();
    assert_eq!(d.u, vec![0.0]);
    assert!(matches!(
        select_with(|_| DMatrix::identity(2, 2), &space),
        Err(Error::NotDiagonalisable { .. })
    ));
}

#[test]
fn search_space_contracts() {
    let s = DiagonalizerSearchSpace::dyadic(2, -1.0, 1.0, 3).unwrap();
    assert_eq!(s.len(), 9);
    assert!(s.points().iter().all(|p| p.a == vec![1.0]));
    let s3 = DiagonalizerSearchSpace::dyadic(3, 0.0, 1.0, 2).unwrap();
    assert!(s3.points().iter().all(|p| p.a.iter().map(|a| a.abs()).sum::<f64>() <= 1.0 + 1e-12));
    assert_eq!(s3, DiagonalizerSearchSpace::dyadic(3, 0.0, 1.0, 2).unwrap());
    let bad = SearchPoint { a: vec![0.8, 0.8, 0.0], u: vec![0.0; 3] };
    assert!(DiagonalizerSearchSpace::new(3, vec![bad]).is_err());
}

#[test]
fn population_matrices_diagonalise_simultaneously() {
    let h = HmmParams::two_state(0.2, 0.3, gauss(0.0, 1.0), gauss(2.5, 0.8)).unwrap();
    let fs = FeatureSet::partition(&[0.0, 1.0, 2.0]).unwrap();
    let k = build_kernel(2.0);
    let lev = BandwidthLevel(2);
    let at = |x: f64| population_moments(&h, &fs, &k, lev, x).unwrap();
    let p = at(0.0).p;
    let v = project_svd(&p, 2).unwrap();
    let gram_inv = (v.transpose() * &p * &v).try_inverse().unwrap();
    let b = |x: f64| &gram_inv * v.transpose() * at(x).m * &v;
    let space = DiagonalizerSearchSpace::scalar(&[0.0]).unwrap();
    let r_hat = select_with(|u| b(u), &space).unwrap().r_hat;
    let r_inv = r_hat.clone().try_inverse().unwrap();
    let mut r = rng(10);
    for _ in 0..10 {
        let x = r.random_range(-2.0..4.0);
        let d = &r_inv * b(x) * &r_hat;
        assert!(d[(0, 1)].abs() < 1e-6 && d[(1, 0)].abs() < 1e-6);
        // diagonal entries are the smoothed emission densities
        let mut diag = vec![d[(0, 0)], d[(1, 1)]];
        let mut truth: Vec<f64> = at(x).d.diagonal().iter().copied().collect();
        diag.sort_by(f64::total_cmp);
        truth.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(diag[0], truth[0], epsilon = 1e-6);
        assert_abs_diff_eq!(diag[1], truth[1], epsilon = 1e-6);
    }
}

#[test]
fn read_off_is_invariant_to_a_rotation_of_v() {
    let fs = FeatureSet::partition(&[0.0, 1.0, 2.0, 3.0]).unwrap();
    let (_, mm) = sample_mm(11, 20_000, &fs);
    let k = build_kernel(2.0);
    let lev = BandwidthLevel(2);
    let v = project_svd(mm.p_hat(), 2).unwrap();
    let theta: f64 = 1.1;
    let w = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
    let vw = &v * w;
    let space = DiagonalizerSearchSpace::dyadic(2, -3.0, 6.0, 6).unwrap();
    let fit = |vm: &DMatrix<f64>, x: f64| {
        let proj = Projector::new(&mm, vm).unwrap();
        let d = select_with(|u| proj.b_at(&k, lev, u), &space).unwrap();
        let r_inv = d.r_hat.clone().try_inverse().unwrap();
        read_off(&r_inv, &d.r_hat, &proj.b_at(&k, lev, x))
    };
    for x in [-1.0, 0.0, 0.7, 2.0, 3.5] {
        let mut a = fit(&v, x);
        let mut b = fit(&vw, x);
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-8);
        assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-8);
    }
}

#[test]
fn estimate_recovers_gaussian_emissions() {
    let h = HmmParams::new(
        nphmm::TransitionMatrix::new(vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap(),
        vec![gauss(0.0, 1.0), gauss(3.0, 1.0)],
        nphmm::Measure::Continuous,
    )
    .unwrap();
    let x = simulate(&h, 50_000, 12).observations;
    let cfg = EstimatorConfig::default();
    let fit = estimate_emissions_with(&x, &cfg).unwrap();

    let v = fit.v_matrix();
    assert!(max_abs(&(v.transpose() * &v - DMatrix::<f64>::identity(2, 2))) < 1e-10);
    for c in 0..2 {
        assert_abs_diff_eq!(fit.r_matrix().column(c).norm(), 1.0, epsilon = 1e-10);
    }
    let cap = (x.len() as f64).powf(cfg.alpha);
    assert!(fit.densities.iter().all(|d| d.values.iter().all(|v| v.abs() <= cap)));
    assert_eq!(fit.level, choose_level(x.len(), cfg.smoothness));

    let grid = fit.grid.points();
    let est: Vec<Vec<f64>> = (0..2).map(|j| grid.iter().map(|&t| fit.density(j).value_at(t)).collect()).collect();
    let truth: Vec<Vec<f64>> = (0..2).map(|j| grid.iter().map(|&t| h.emission(j).density_at(t)).collect()).collect();
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let err = [[0, 1], [1, 0]]
        .iter()
        .map(|p| sup(&est[0], &truth[p[0]]).max(sup(&est[1], &truth[p[1]])))
        .fold(f64::INFINITY, f64::min);
    assert!(err <= 0.08, "sup error {err}");
    assert!(rho_on_grid(&est, &truth) <= 0.16);

    let back = SpectralFit::from_json(&fit.to_json().unwrap()).unwrap();
    assert_eq!(back, fit);
    assert_eq!(fit.permuted(&[1, 0]).density(0), fit.density(1));
}

#[test]
fn truncation_caps_small_samples() {
    let h = HmmParams::two_state(0.2, 0.3, gauss(0.0, 1.0), gauss(3.0, 1.0)).unwrap();
    for seed in 0..5 {
        let x = simulate(&h, 100, seed).observations;
        let cfg = EstimatorConfig { alpha: 0.1, ..Default::default() };
        if let Ok(fit) = estimate_emissions_with(&x, &cfg) {
            let cap = 100f64.powf(0.1);
            assert!(fit.densities.iter().all(|d| d.values.iter().all(|v| v.abs() <= cap + 1e-15)));
        }
    }
    let x = simulate(&h, 99, 0).observations;
    assert!(matches!(
        estimate_emissions_with(&x, &EstimatorConfig::default()),
        Err(Error::TooFewObservations { needed: 100, .. })
    ));
}

fn two_point(a: f64, b: f64) -> EmissionModel {
    EmissionModel::DiscretePmf { support: [(0, a), (1, b)].into() }
}

#[test]
fn discrete_two_point_recovery() {
    let h = HmmParams::two_state(0.2, 0.3, two_point(0.9, 0.1), two_point(0.2, 0.8)).unwrap();
    let x = simulate(&h, 100_000, 13).observations;
    let fit = estimate_emissions_discrete(&x, 2, None, None).unwrap();
    assert_eq!(fit.support, vec![0, 1]);
    let err = |perm: [usize; 2]| {
        (0..2)
            .flat_map(|j| (0..2).map(move |k| (j, k)))
            .map(|(j, k)| (fit.pmf_at(j, k as i64) - h.emission(perm[j]).density_at(k as f64)).abs())
            .fold(0.0, f64::max)
    };
    assert!(err([0, 1]).min(err([1, 0])) < 0.02);
    for p in &fit.pmfs {
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(p.iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn discrete_rejects_non_integers() {
    let x: Vec<f64> = (0..200).map(|i| i as f64 * 0.5).collect();
    assert!(estimate_emissions_discrete(&x, 2, None, None).is_err());
}

#[test]
fn identical_emissions_cannot_be_separated() {
    // exact degeneracy: every observation falls in one cell, so P_hat has rank one
    let x = vec![0.25; 300];
    let fs = FeatureSet::partition(&[0.5]).unwrap();
    let mm = MomentMatrices::new(&x, &fs).unwrap();
    assert!(matches!(project_svd(mm.p_hat(), 2), Err(Error::RankDeficient { .. })));
}

mod common;

use approx::assert_abs_diff_eq;
use common::simpson;
use nphmm::kernels::{choose_level_scaled, smooth_fn};
use nphmm::{build_kernel, choose_level, eval_kl, smooth, BandwidthLevel, EmissionModel};

#[test]
fn moments_vanish_to_the_right_order() {
    for s in [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0] {
        let k = build_kernel(s);
        assert_eq!(k.order(), (s.ceil() as usize) - 1);
        for j in 0..=k.order() {
            let m = simpson(|u| u.powi(j as i32) * k.eval(u), -1.0, 1.0, 4000);
            let target = if j == 0 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(m, target, epsilon = 1e-8);
        }
    }
}

#[test]
fn support_and_endpoints() {
    for s in [0.5, 2.0, 3.0] {
        let k = build_kernel(s);
        assert_eq!(k.eval(1.0), 0.0);
        assert_eq!(k.eval(-1.0), 0.0);
        assert_eq!(k.eval(1.3), 0.0);
        // the polynomial itself also vanishes at the endpoints
        let poly = |u: f64| k.coeffs().iter().rev().fold(0.0, |acc, &c| acc * u + c);
        assert_abs_diff_eq!(poly(1.0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(poly(-1.0), 0.0, epsilon = 1e-12);
    }
}

#[test]
fn lipschitz_and_sup_bounds_hold() {
    for s in [0.5, 1.0, 2.0, 3.0] {
        let k = build_kernel(s);
        let n = 20_000;
        let us: Vec<f64> = (0..=n).map(|i| -1.1 + 2.2 * i as f64 / n as f64).collect();
        for w in us.windows(2) {
            let d = (k.eval(w[1]) - k.eval(w[0])).abs();
            assert!(d <= k.lipschitz_bound() * (w[1] - w[0]) + 1e-12);
        }
        assert!(us.iter().all(|&u| k.eval(u).abs() <= k.sup_bound() + 1e-12));
    }
}

#[test]
fn level_examples() {
    assert_eq!(choose_level(3, 10.0), BandwidthLevel(0));
    assert_eq!(choose_level(1000, 1.0), BandwidthLevel(2));
    // (10^6 / ln 10^6)^(1/3) = 41.6 and log2 = 5.38, which rounds to 5
    let target = (1e6f64 / 1e6f64.ln()).powf(1.0 / 3.0).log2();
    assert!((target - 5.38).abs() < 0.01);
    assert_eq!(choose_level(1_000_000, 1.0), BandwidthLevel(target.round() as u32));
    assert_eq!(choose_level_scaled(1_000_000, 1.0, 2.0), BandwidthLevel(6));
}

#[test]
fn kl_examples() {
    let k = build_kernel(2.0);
    let l = BandwidthLevel(3);
    assert_eq!(eval_kl(&k, l, 0.4, 0.4), 8.0 * k.eval(0.0));
    assert_eq!(eval_kl(&k, BandwidthLevel(2), 0.0, 1.0), 0.0);
    let poly = |u: f64| k.coeffs().iter().enumerate().map(|(i, c)| c * u.powi(i as i32)).sum::<f64>();
    for &(x, y, lev) in &[(0.1, 0.15, 4u32), (-1.0, -0.8, 2), (3.0, 3.01, 6)] {
        let sc = (lev as f64).exp2();
        let direct = sc * poly(sc * (x - y));
        assert_abs_diff_eq!(eval_kl(&k, BandwidthLevel(lev), x, y), direct, epsilon = 1e-10);
        assert_abs_diff_eq!(
            eval_kl(&k, BandwidthLevel(lev), x, y),
            sc * eval_kl(&k, BandwidthLevel(0), sc * x, sc * y),
            epsilon = 1e-10
        );
    }
}

#[test]
fn smooth_examples() {
    let k = build_kernel(2.0);
    let u = EmissionModel::Uniform { lo: -10.0, hi: 10.0 };
    let f = smooth(&k, BandwidthLevel(2), &u).unwrap();
    for x in [-8.5, 0.0, 3.3] {
        assert_abs_diff_eq!(f(x).unwrap(), 0.05, epsilon = 1e-8);
    }
    let g = EmissionModel::Gaussian { mean: 0.0, sd: 1.0 };
    let l = BandwidthLevel(6);
    let v = smooth(&k, l, &g).unwrap()(0.0).unwrap();
    assert!((v - 0.398_942_280_4).abs() < 10.0 * l.bandwidth().powi(2));
    let far = EmissionModel::Uniform { lo: 5.0, hi: 6.0 };
    assert_eq!(smooth(&k, BandwidthLevel(1), &far).unwrap()(0.0).unwrap(), 0.0);
    let pmf = EmissionModel::DiscretePmf { support: [(0, 1.0)].into() };
    assert!(smooth(&k, l, &pmf).is_err());
}

#[test]
fn triangle_rate_for_s_one() {
    let k = build_kernel(1.0);
    let tri = |x: f64| (1.0 - x.abs()).max(0.0);
    let err = |l: u32| -> f64 {
        (0..=200)
            .map(|i| -1.5 + 3.0 * i as f64 / 200.0)
            .chain([0.0])
            .map(|x| (tri(x) - smooth_fn(&k, BandwidthLevel(l), tri, &[-1.0, 0.0, 1.0], x, 1e-13).unwrap()).abs())
            .fold(0.0, f64::max)
    };
    let (e4, e6, e8) = (err(4), err(6), err(8));
    assert!((e4 / e6 - 4.0).abs() < 0.4, "ratio {}", e4 / e6);
    assert!((e6 / e8 - 4.0).abs() < 0.4, "ratio {}", e6 / e8);
}

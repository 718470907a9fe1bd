use ma_lab::radial::{core_ball_integral, fd_ma_density, l1_ma_distance, ma_density, random_direction, rho_smooth, sup_distance, RadialProfile, TranslatedProfile};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn profile() -> RadialProfile {
    RadialProfile::new(1.0, 0.5, 0.1, 2, 0.05).unwrap()
}

fn along_e1(h: f64) -> Vec<Complex64> {
    vec![Complex64::new(h, 0.0), Complex64::new(0.0, 0.0)]
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Marsaglia polar method.
    loop {
        let (u, v) = (rng.gen_range(-1.0..1.0f64), rng.gen_range(-1.0..1.0f64));
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

#[test]
fn core_ball_integral_matches_monte_carlo() {
    // \int_{|z|<1} |z|^{-3.6} dV in R^4 = 2 pi^2 / 0.4.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples = 400_000;
    let mut sum = 0.0;
    for _ in 0..samples {
        // Radius r = U^2 has density 1 / (2 sqrt r); direction from four Gaussians.
        let u: f64 = rng.gen_range(0.0..1.0f64).max(1e-300);
        let r = u * u;
        let dir: Vec<f64> = (0..4).map(|_| gaussian(&mut rng)).collect();
        let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let z: Vec<f64> = dir.iter().map(|x| r * x / len).collect();
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        let shell = 2.0 * std::f64::consts::PI.powi(2) * r.powi(3);
        sum += norm.powf(-3.6) * shell * 2.0 * r.sqrt();
    }
    let mc = sum / samples as f64;
    let exact = core_ball_integral(2, 0.1, 1.0);
    assert!((exact - 2.0 * std::f64::consts::PI.powi(2) / 0.4).abs() < 1e-12);
    assert!((mc / exact - 1.0).abs() < 5e-3, "mc {mc} vs {exact}");
}

#[test]
fn density_matches_finite_differences() {
    let p = profile();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..6 {
        let r = rng.gen_range(0.2..0.7);
        let z = random_direction(2, r, &mut rng);
        let u = |w: &[Complex64]| rho_smooth(w, &p);
        let fd = fd_ma_density(&u, &z, 2e-3);
        let exact = ma_density(&z, &p).unwrap();
        assert!((fd / exact - 1.0).abs() < 1e-4, "r = {r}: fd {fd} vs {exact}");
    }
}

#[test]
fn collar_density_matches_finite_differences() {
    let p = profile();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for r in [1.02, 1.3, 1.7, 2.01] {
        let z = random_direction(2, r, &mut rng);
        let u = |w: &[Complex64]| rho_smooth(w, &p);
        let fd = fd_ma_density(&u, &z, 1e-3);
        let exact = p.ma_density_radial(r);
        // The collar is only C^2 across |x| = w, so the stencil error is larger there.
        assert!((fd / exact - 1.0).abs() < 5e-4, "r = {r}: fd {fd} vs {exact}");
    }
}

#[test]
fn distances_depend_only_on_translation_length() {
    let p = profile();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for h in [2e-3, 2e-2] {
        let mut sups = Vec::new();
        let mut l1s = Vec::new();
        for _ in 0..3 {
            let tp = TranslatedProfile::new(p, random_direction(2, h, &mut rng)).unwrap();
            sups.push(sup_distance(&tp).value);
            l1s.push(l1_ma_distance(&tp).unwrap().total);
        }
        let spread = |v: &[f64]| {
            let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(*x), b.max(*x)));
            (hi - lo) / hi
        };
        assert!(spread(&sups) < 0.01, "sup spread at |h| = {h}: {sups:?}");
        assert!(spread(&l1s) < 0.01, "L1 spread at |h| = {h}: {l1s:?}");
    }
}

#[test]
fn distances_grow_with_translation() {
    let p = profile();
    let hs = [1e-3, 3e-3, 1e-2, 3e-2];
    let rows: Vec<(f64, f64)> = hs
        .iter()
        .map(|h| {
            let tp = TranslatedProfile::new(p, along_e1(*h)).unwrap();
            (sup_distance(&tp).value, l1_ma_distance(&tp).unwrap().total)
        })
        .collect();
    assert!(rows.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1), "{rows:?}");
}

#[test]
fn l1_pieces_respect_their_bounds() {
    let p = profile();
    for h in [1e-3, 1e-2] {
        let d = l1_ma_distance(&TranslatedProfile::new(p, along_e1(h)).unwrap()).unwrap();
        assert!(d.converged);
        assert!((d.total - d.global_check).abs() <= 1e-6 * d.total, "{d:?}");
        assert!(d.pieces[0] <= d.inner_majorant, "{d:?}");
        assert!(d.pieces[2] <= d.outer_gradient_bound * (1.0 + 1e-6), "{d:?}");
        assert!((d.pieces.iter().sum::<f64>() - d.total).abs() <= 1e-12 * d.total);
    }
}

#[test]
fn sup_distance_at_least_origin_value() {
    let p = profile();
    for h in [1e-3, 1e-2, 1e-1] {
        let s = sup_distance(&TranslatedProfile::new(p, along_e1(h)).unwrap());
        let witness = p.b * h.powf(2.0 * p.alpha);
        assert!(s.value >= witness * (1.0 - 1e-12));
        assert!((s.origin_witness - witness).abs() < 1e-12);
    }
}

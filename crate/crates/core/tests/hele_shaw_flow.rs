use std::f64::consts::PI;

use loewner_core::hele_shaw::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn perturbed() -> LaurentMap {
    LaurentMap::exterior(1.0, vec![c(0.0, 0.0), c(0.05, 0.0), c(0.03, 0.01), c(0.02, 0.0), c(0.01, -0.005)]).unwrap()
}

#[test]
fn circle_radius_follows_the_square_root_law() {
    let f = LaurentMap::exterior(1.0, vec![]).unwrap();
    let traj = evolve_string(&f, 1e-3, 1000, EvolveOptions::default()).unwrap();
    let (t_end, _) = traj.last().unwrap();
    assert!((t_end - 1.0).abs() < 1e-9);
    for (t, m) in traj.times.iter().zip(&traj.maps) {
        let exact = (t + 1.0).sqrt();
        assert!((m.r() - exact).abs() / exact < 1e-6, "t = {t}");
    }
    assert!(traj.residuals.iter().all(|&r| r < 1e-8));
}

#[test]
fn moments_are_conserved_at_second_order() {
    let f = perturbed();
    let drift = |dt: f64| {
        let traj = evolve_string(&f, dt, (0.5 / dt).round() as usize, EvolveOptions::default()).unwrap();
        assert!(traj.residuals.iter().all(|&r| r < 1e-8));
        richardson_invariance(&traj, 5).unwrap()
    };
    let coarse = drift(2e-3);
    let fine = drift(1e-3);
    for k in 0..5 {
        assert!(fine[k] < 1e-5, "I_{} drifts by {}", k + 1, fine[k]);
        let ratio = coarse[k] / fine[k];
        assert!((3.5..4.5).contains(&ratio), "I_{} ratio {ratio}", k + 1);
    }
}

#[test]
fn area_grows_monotonically_at_unit_flux() {
    let traj = evolve_string(&perturbed(), 1e-2, 50, EvolveOptions::default()).unwrap();
    let areas: Vec<f64> = traj.maps.iter().map(|m| m.area()).collect();
    assert!(areas.windows(2).all(|p| p[1] > p[0]));
    for (t, a) in traj.times.iter().zip(&areas) {
        assert!((a - areas[0] - PI * (t - traj.times[0])).abs() < 1e-6 * (1.0 + t));
    }
}

#[test]
fn final_domain_depends_only_on_total_flux() {
    let f = perturbed();
    let (dt, steps) = (1e-3, 500);
    let steady = evolve_string(&f, dt, steps, EvolveOptions::default()).unwrap();
    // same integral over [0, 0.5], very different history
    let pulsed = evolve_string_with_rate(&f, dt, steps, |t| 1.0 + 0.8 * (4.0 * PI * t).sin(), EvolveOptions::default()).unwrap();
    let a = harmonic_moments(steady.last().unwrap().1, 5, 512).unwrap();
    let b = harmonic_moments(pulsed.last().unwrap().1, 5, 512).unwrap();
    assert!((a.area - b.area).abs() < 1e-6, "{} vs {}", a.area, b.area);
    for (x, y) in a.moments.iter().zip(&b.moments) {
        assert!((x - y).norm() < 1e-6, "{x} vs {y}");
    }
}

#[test]
fn ellipse_area_agrees_with_monte_carlo() {
    let f = LaurentMap::exterior(1.0, vec![c(0.0, 0.0), c(0.2, 0.0)]).unwrap();
    assert!((f.area() - 0.96 * PI).abs() < 1e-12);
    let poly = f.boundary(1024);
    let inside = |p: Complex64| {
        let winding: f64 = (0..poly.len()).map(|j| ((poly[(j + 1) % poly.len()] - p) / (poly[j] - p)).arg()).sum();
        winding.abs() > PI
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let n = 40_000;
    let half = 1.3;
    let hits = (0..n)
        .filter(|_| inside(c(half * (2.0 * rng.random::<f64>() - 1.0), half * (2.0 * rng.random::<f64>() - 1.0))))
        .count() as f64;
    let box_area = 4.0 * half * half;
    let p = hits / n as f64;
    let se = box_area * (p * (1.0 - p) / n as f64).sqrt();
    assert!((p * box_area - 0.96 * PI).abs() < 4.0 * se, "{} ± {se}", p * box_area);
}

#[test]
fn grown_droplet_is_a_quadrature_domain() {
    // a nearly point-like droplet at z₁ grows into a one-point quadrature domain
    let z1 = c(0.3, -0.1);
    let f = LaurentMap::interior(z1, 0.05, vec![c(1e-4, 0.0)]).unwrap();
    let traj = evolve_string(&f, 1e-2, 50, EvolveOptions::default()).unwrap();
    let last = traj.last().unwrap().1;
    let q = Multipole { q0: last.area(), q: vec![] };
    for phi in [HarmonicTest::RePow(1), HarmonicTest::ImPow(2), HarmonicTest::RePow(3)] {
        let r = quadrature_check(last, phi, &q, z1).unwrap();
        assert!(r < 1e-4 * last.area(), "{phi:?}: {r}");
    }
}

#[test]
fn near_cusp_data_halts() {
    let f = LaurentMap::exterior(1.0, vec![c(0.0, 0.0), c(0.0, 0.0), c(0.4, 0.0)]).unwrap();
    let err = evolve_string(&f, 1e-3, 1000, EvolveOptions::default()).unwrap_err();
    assert!(!err.partial.is_empty());
    assert!(err.partial.residuals.iter().all(|&r| r < 1e-8));
    let strong = LaurentMap::exterior(1.0, vec![c(0.0, 0.0), c(0.99, 0.0)]).unwrap();
    // expanding rounds the ellipse off; running the flow backwards pinches it
    assert!(evolve_string(&strong, 1e-3, 100, EvolveOptions::default()).is_ok());
    let backwards = EvolveOptions {
        direction: Direction::Contract,
        allow_ill_posed: true,
        ..EvolveOptions::default()
    };
    let err = evolve_string(&strong, 1e-4, 1000, backwards).unwrap_err();
    assert!(err.partial.residuals.iter().all(|&r| r < 1e-8));
    assert!(matches!(err.error, loewner_core::error::Error::Cusp { .. } | loewner_core::error::Error::Numeric(_)), "{}", err.error);
}

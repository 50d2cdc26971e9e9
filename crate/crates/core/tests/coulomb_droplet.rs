use loewner_core::coulomb_gas::*;
use loewner_core::drivers::RngSeed;
use num_complex::Complex64;

fn run(n: usize, hbar: f64, potential: Vec<Complex64>, sweeps: usize, seed: u64) -> Chain {
    let s = GasState::scattered(n, hbar, potential, Kernel::Plane, RngSeed::new(seed)).unwrap();
    let opts = MetropolisOptions {
        sweeps,
        thin: 10,
        tune_sweeps: 2000,
        ..Default::default()
    };
    metropolis_run(s, opts, RngSeed::new(seed + 1000)).unwrap()
}

/// Fraction of Ginibre mass inside radius `r`: the squared moduli are
/// independent Gamma(k + 1, ħ) variables, k = 0..n−1.
fn ginibre_mass_within(n: usize, hbar: f64, r: f64) -> f64 {
    let x = r * r / hbar;
    let mut total = 0.0;
    // P(k + 1, x) = 1 − e^{−x} Σ_{j ≤ k} x^j / j!
    let mut term = (-x).exp();
    let mut partial = 0.0;
    for j in 0..n {
        partial += term;
        total += 1.0 - partial;
        term *= x / (j + 1) as f64;
    }
    total / n as f64
}

fn ginibre_radius(n: usize, hbar: f64, mass: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0 * (hbar * n as f64).sqrt() + 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ginibre_mass_within(n, hbar, mid) < mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn single_charge_is_gaussian() {
    let hbar = 0.3;
    let chain = run(1, hbar, vec![], 200_000, 3);
    let x: Vec<f64> = chain.equilibrated().iter().map(|s| s[0].norm_sqr() / hbar).collect();
    // batch means absorb the autocorrelation of the chain
    let batches: Vec<f64> = x.chunks(x.len() / 50).map(|b| b.iter().sum::<f64>() / b.len() as f64).collect();
    let m = batches.iter().sum::<f64>() / batches.len() as f64;
    let v = batches.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (batches.len() - 1) as f64;
    let se = (v / batches.len() as f64).sqrt();
    assert!((m - 1.0).abs() < 3.0 * se, "⟨|z|²⟩/ħ = {m} ± {se}");

    // |z|²/ħ is Exp(1); KS on a thinned subsample to cut correlation
    let mut sub: Vec<f64> = x.iter().step_by(10).cloned().collect();
    sub.sort_by(f64::total_cmp);
    let n = sub.len() as f64;
    let d = sub
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let cdf = 1.0 - (-v).exp();
            (cdf - i as f64 / n).max((i + 1) as f64 / n - cdf)
        })
        .fold(0.0, f64::max);
    assert!(d < 1.628 / n.sqrt(), "KS {d}");
}

#[test]
fn energy_is_symmetric_under_exchange() {
    let s = GasState::scattered(12, 0.05, vec![Complex64::new(0.01, 0.02)], Kernel::Plane, RngSeed::new(4)).unwrap();
    let mut p = s.positions().to_vec();
    let e0 = energy_of(&p, 0.05, s.potential(), Kernel::Plane);
    p.swap(2, 9);
    p.reverse();
    let e1 = energy_of(&p, 0.05, s.potential(), Kernel::Plane);
    assert!((e0 - e1).abs() < 1e-12 * e0.abs().max(1.0));
}

#[test]
fn incremental_energy_tracks_recomputation() {
    let chain = run(32, 0.02, vec![], 10_000, 5);
    assert!(chain.max_energy_drift < 1e-8, "{}", chain.max_energy_drift);
    let mut state = chain.state.clone();
    let cached = state.energy();
    assert!(state.recompute() < 1e-8 * cached.abs().max(1.0));
    assert_eq!(state.energy(), energy(&state));
}

#[test]
fn droplet_matches_the_finite_size_oracle() {
    let (n, hbar) = (64, 0.02);
    let chain = run(n, hbar, vec![], 20_000, 11);
    let stats = droplet_stats(&chain, 16).unwrap();
    let oracle = ginibre_radius(n, hbar, 0.99);
    assert!((stats.support_radius / oracle - 1.0).abs() < 0.02, "{} vs {oracle}", stats.support_radius);
    assert!(stats.flatness(0.8 * stats.support_radius).unwrap() < 0.1);
    // the bulk density 2πħ·(1/πħ) = 2
    let bulk = stats.density[..6].iter().sum::<f64>() / 6.0;
    assert!((bulk - 2.0).abs() < 0.1, "{bulk}");
}

#[test]
fn droplet_area_is_linear_in_the_charge_count() {
    let hbar = 0.02;
    for n in [16, 32, 64] {
        let chain = run(n, hbar, vec![], 10_000, 20 + n as u64);
        let snaps = chain.equilibrated();
        let r2 = snaps.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() / (snaps.len() * n) as f64;
        // a uniform disk of area πħn has ⟨|z|²⟩ = ħn/2; the exact finite-n value is ħ(n + 1)/2
        let exact = hbar * (n + 1) as f64 / 2.0;
        assert!((r2 / exact - 1.0).abs() < 0.05, "n = {n}: {r2} vs {exact}");
    }
}

#[test]
fn quadrupole_coupling_stretches_the_droplet() {
    let harmonic = |t2: f64| {
        let chain = run(64, 0.02, vec![Complex64::new(0.0, 0.0), Complex64::new(t2, 0.0)], 10_000, 31);
        radius_harmonic(&droplet_boundary(&chain, 32).unwrap(), 2).re
    };
    let (plus, minus) = (harmonic(0.1), harmonic(-0.1));
    // V = 2t₂ Re z² pushes charges off the x axis when t₂ > 0
    assert!(plus < 0.0 && minus > 0.0, "{plus} {minus}");
}

#[test]
fn boundary_fluctuations_shrink_with_size() {
    let hbar = 0.02;
    let d: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&n| {
            let chain = run(n, hbar, vec![], 10_000, 40);
            compare_to_hele_shaw(&droplet_boundary(&chain, 32).unwrap(), &equal_area_circle(n, hbar).unwrap()).unwrap()
        })
        .collect();
    assert!(d[1] < 0.1);
    assert!(d.windows(2).all(|p| p[1] <= p[0]), "{d:?}");
}

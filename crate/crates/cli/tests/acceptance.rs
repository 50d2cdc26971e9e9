//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! The process exits zero whatever the verdicts; regressions are guarded by the
//! ordinary integration tests. Full run takes about 12 minutes on one core.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use loewner_core::coulomb_gas::*;
use loewner_core::drivers::{DriverParams, RngSeed};
use loewner_core::growth::*;
use loewner_core::hele_shaw::*;
use loewner_core::multifractal::*;
use loewner_core::tau_functions::*;
use loewner_core::{AdlerMoserQ, SolitonData64};
use num_complex::Complex64;
use num_rational::BigRational;

type Verdict = Result<(bool, String), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Deterministic uniform samples in [0, 1) from a 64-bit LCG.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn exact_spectrum() -> Verdict {
    let mut worst = 0.0_f64;
    let mut jump = 0.0_f64;
    for i in 0..40 {
        let kappa = 0.5 + 7.5 * i as f64 / 39.0;
        let a = kappa + 4.0;
        let top = a * a / (8.0 * kappa);
        for j in 0..25 {
            let q = -6.0 + (top + 6.0) * j as f64 / 24.0;
            worst = worst.max(gamma_identity_check(q, kappa));
        }
        for b in [3.0 * a * a / (32.0 * kappa), -1.0 - 3.0 * kappa / 8.0] {
            jump = jump.max((beta_exact_sle(b + 1e-9, kappa) - beta_exact_sle(b - 1e-9, kappa)).abs());
        }
    }
    Ok((
        worst < 1e-10 && jump < 1e-7,
        format!("1000 (q, κ) pairs: max γ residual {worst:.1e}, max jump across branch points {jump:.1e}"),
    ))
}

fn sle_beta() -> Verdict {
    let eps = [0.1, 0.0562, 0.0316, 0.0178, 0.01];
    let opts = WholePlaneOptions {
        driver: DriverParams::Brownian { kappa: 6.0 },
        t: 0.0,
        burn_in: 10.0,
        dt: 5e-4,
    };
    let est = beta_estimate_with(
        200,
        |i| Ok(grow_whole_plane::<f64>(opts, RngSeed::new(7).with_stream(i as u64))?.map),
        &[1.0],
        &eps,
        BetaOptions::default(),
    )
    .map_err(err)?;
    let e = &est[0];
    let exact = beta_exact_sle(1.0, 6.0);
    let z = (e.beta - exact).abs() / e.stderr;
    Ok((
        z < 3.0 && e.stderr <= 0.05,
        format!("κ = 6, q = 1, 200 maps: β = {:.4} ± {:.4} vs {exact:.5} ({z:.1} se)", e.beta, e.stderr),
    ))
}

fn stationarity() -> Verdict {
    let z = |dt: f64| -> Result<f64, String> {
        let spec = EnsembleSpec {
            whole_plane: WholePlaneOptions {
                driver: DriverParams::Brownian { kappa: 2.0 },
                t: 0.0,
                burn_in: 10.0,
                dt,
            },
            members: 500,
            seed: RngSeed::new(3),
        };
        Ok(moment_stationarity(spec, 1.0, c(1.5, 0.0), &[0.5, 1.0, 2.0], Variant::Bounded).map_err(err)?.max_z)
    };
    let (coarse, fine) = (z(1e-3)?, z(5e-4)?);
    Ok((
        coarse < 3.0 && fine < 3.0 && fine <= coarse,
        format!("κ = 2, w = 1.5, 500 maps: max z {coarse:.3} at dt 1e-3, {fine:.3} at dt 5e-4"),
    ))
}

fn string_equation() -> Verdict {
    let circle = LaurentMap::exterior(1.0, vec![]).map_err(err)?;
    let traj = evolve_string(&circle, 1e-3, 1000, EvolveOptions::default()).map_err(|a| err(a.error))?;
    let radius_err = traj
        .times
        .iter()
        .zip(&traj.maps)
        .map(|(t, m)| (m.r() / (t + 1.0).sqrt() - 1.0).abs())
        .fold(0.0, f64::max);
    let residual = traj.residuals.iter().cloned().fold(0.0, f64::max);

    let f = LaurentMap::exterior(1.0, vec![c(0.0, 0.0), c(0.05, 0.0), c(0.03, 0.01), c(0.02, 0.0), c(0.01, -0.005)])
        .map_err(err)?;
    let drift = |dt: f64| -> Result<(Vec<f64>, f64), String> {
        let traj = evolve_string(&f, dt, (0.5 / dt).round() as usize, EvolveOptions::default()).map_err(|a| err(a.error))?;
        let res = traj.residuals.iter().cloned().fold(0.0, f64::max);
        Ok((richardson_invariance(&traj, 5).map_err(err)?, res))
    };
    let (coarse, r1) = drift(1e-3)?;
    let (fine, r2) = drift(5e-4)?;
    let worst = coarse.iter().cloned().fold(0.0, f64::max);
    let ratios: Vec<f64> = coarse.iter().zip(&fine).map(|(a, b)| a / b).collect();
    let residual = residual.max(r1).max(r2);
    let pass = radius_err < 1e-6 && residual < 1e-8 && worst < 1e-5 && ratios.iter().all(|r| (3.0..5.0).contains(r));
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    Ok((
        pass,
        format!(
            "circle radius error {radius_err:.1e}, residual {residual:.1e}, I₁..I₅ drift {worst:.1e}, halving ratios [{}]",
            shown.join(", ")
        ),
    ))
}

fn history_independence() -> Verdict {
    let f = LaurentMap::exterior(1.0, vec![c(0.0, 0.0), c(0.05, 0.0), c(0.03, 0.01), c(0.02, 0.0), c(0.01, -0.005)])
        .map_err(err)?;
    let (dt, steps) = (1e-3, 500);
    let steady = evolve_string(&f, dt, steps, EvolveOptions::default()).map_err(|a| err(a.error))?;
    let pulsed = evolve_string_with_rate(&f, dt, steps, |t| 1.0 + 0.8 * (4.0 * PI * t).sin(), EvolveOptions::default())
        .map_err(|a| err(a.error))?;
    let a = harmonic_moments(steady.last().unwrap().1, 5, 512).map_err(err)?;
    let b = harmonic_moments(pulsed.last().unwrap().1, 5, 512).map_err(err)?;
    let gap = a.moments.iter().zip(&b.moments).map(|(x, y)| (x - y).norm()).fold((a.area - b.area).abs(), f64::max);
    Ok((gap < 1e-6, format!("constant vs pulsed flux over t ∈ [0, 0.5]: max moment gap {gap:.1e}")))
}

fn dla() -> Verdict {
    let seed = LatticeCluster::seed();
    let field = dla_harmonic_field(&seed, box_half_width(&seed, 4.0)).map_err(err)?;
    let charges = dla_charges(&seed, &field).map_err(err)?;
    let seed_gap = charges.iter().map(|(_, q)| (q - 0.25).abs()).fold(0.0, f64::max);
    let seed_ok = charges.len() == 4 && seed_gap < 1e-12;

    let run = dla_grow(2000, RngSeed::new(1), DlaMode::ExactCharges).map_err(|a| err(a.error))?;
    let q = run.final_charges.as_ref().ok_or("exact run kept no charges")?;
    let sum_gap = run.charge_sums.iter().map(|s| (s - 1.0).abs()).fold((q.total() - 1.0).abs(), f64::max);
    let tau = tau_boxcount(q, &[0.0, 1.0], &dyadic_scales(run.cluster.radius())).map_err(err)?;
    let (d0, t1) = (-tau.values[0], tau.values[1]);
    // the seed is particle one: 1999 attachments drew from a charge map, plus the final one
    let (sites, steps) = (run.cluster.sites().len(), run.charge_sums.len());
    let pass = seed_ok && sites == 2000 && steps == sites - 1 && sum_gap < 1e-9 && d0 > 1.0 && d0 < 2.0 && t1.abs() < 0.05;
    Ok((
        pass,
        format!(
            "seed charges within {seed_gap:.0e} of 1/4; {sites} particles, {} charge maps with |Σq − 1| ≤ {sum_gap:.1e}; −τ(0) = {d0:.3}, τ(1) = {t1:.1e}",
            steps + 1
        ),
    ))
}

fn hl_sanity() -> Verdict {
    let run = grow_hl::<f64>(0.0, 1e-3, 1000, RngSeed::new(4)).map_err(err)?;
    let constant = run.capacities().iter().all(|&c| c == 1e-3);
    let eps = [0.1, 0.0562, 0.0316, 0.0178, 0.01];
    let est = beta_estimate_with(
        100,
        |i| Ok(grow_hl::<f64>(0.0, 1e-7, 1000, RngSeed::new(5).with_stream(i as u64))?.map),
        &[1.0, 2.0],
        &eps,
        BetaOptions::default(),
    )
    .map_err(err)?;
    let within = est.iter().all(|e| e.beta.abs() < 3.0 * e.stderr);
    let shown: Vec<String> = est
        .iter()
        .map(|e| format!("β({}) = {:.1e} ± {:.1e}", e.q, e.beta, e.stderr))
        .collect();
    Ok((
        constant && within,
        format!("capacities constant: {constant}; 100 maps of 1000 slits, δa = 1e-7: {}", shown.join(", ")),
    ))
}

/// Fraction of finite-n Ginibre mass inside radius `r`; the squared moduli
/// are independent Gamma(k + 1, ħ), k = 0..n−1.
fn ginibre_mass_within(n: usize, hbar: f64, r: f64) -> f64 {
    let x = r * r / hbar;
    let (mut total, mut partial, mut term) = (0.0, 0.0, (-x).exp());
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

fn coulomb() -> Verdict {
    let (n, hbar) = (64, 0.02);
    let state = GasState::scattered(n, hbar, vec![], Kernel::Plane, RngSeed::new(11)).map_err(err)?;
    let opts = MetropolisOptions {
        sweeps: 20_000,
        tune_sweeps: 2_000,
        ..Default::default()
    };
    let chain = metropolis_run(state, opts, RngSeed::new(1011)).map_err(err)?;
    let stats = droplet_stats(&chain, 16).map_err(err)?;
    let radius = stats.support_radius;
    let flat = stats.flatness(0.8 * radius).map_err(err)?;
    let boundary = droplet_boundary(&chain, 32).map_err(err)?;
    let dist = compare_to_hele_shaw(&boundary, &equal_area_circle(n, hbar).map_err(err)?).map_err(err)?;
    let target = (2.0 * hbar * n as f64).sqrt();
    let oracle = ginibre_radius(n, hbar, 0.99);
    let pass = (radius / target - 1.0).abs() < 0.05 && flat < 0.1 && dist < 0.1;
    Ok((
        pass,
        format!(
            "99% radius {radius:.4} vs √(2ħT) = {target:.4}; finite-N oracle {oracle:.4}, √(ħT) = {:.4}; flatness {flat:.3}, boundary distance {dist:.4}",
            (hbar * n as f64).sqrt()
        ),
    ))
}

fn tau_functions() -> Verdict {
    let mut rng = Lcg(1);
    let mut four = 0.0_f64;
    for _ in 0..20 {
        let (k1, k2) = (0.5 + rng.next(), 1.6 + rng.next());
        let (p1, p2) = (rng.next(), rng.next());
        let (x, t3) = (4.0 * rng.next() - 2.0, 0.2 * rng.next());
        let d = SolitonData64::kdv(vec![k1, k2], vec![p1, p2], vec![x, t3]).map_err(err)?;
        let th1 = -p1 - k1 * x + k1.powi(3) * t3;
        let th2 = -p2 - k2 * x + k2.powi(3) * t3;
        let g12 = -((k1 - k2).powi(2) / (k1 + k2).powi(2)).ln();
        let explicit = 1.0 + (-th1).exp() + (-th2).exp() + (-g12 - th1 - th2).exp();
        four = four.max((tau_hirota(&d) / explicit - 1.0).abs());
    }

    let sets: [(Vec<f64>, Vec<f64>); 3] = [
        (vec![1.0], vec![0.0]),
        (vec![0.8, 1.4], vec![0.3, -0.2]),
        (vec![0.7, 1.2, 1.9], vec![0.1, 0.0, -0.3]),
    ];
    let mut orders = Vec::new();
    for (ks, phases) in &sets {
        let v = |x: f64, t: f64| kdv_potential(&SolitonData64::kdv(ks.clone(), phases.clone(), vec![x, t]).unwrap()).unwrap();
        let res = |h: f64| {
            kdv_residual_of(v, KdvGrid { x: (-2.0, 2.0), t3: (0.0, 0.1), dx: h, dt: h }).map_err(err)
        };
        orders.push((res(1e-2)? / res(5e-3)?).log2());
    }

    let gm = geometric_momenta(0.7, 0.3, 10).map_err(err)?.max_identity_error();

    let mut kp = 0.0_f64;
    for _ in 0..1000 {
        let z = c(4.0 * rng.next() - 2.0, 0.01 + 2.0 * rng.next());
        let w = c(4.0 * rng.next() - 2.0, 0.01 + 2.0 * rng.next());
        let (a, b) = (kp_phase_shift(z, w).map_err(err)?, half_plane_potential(z, w).map_err(err)?);
        kp = kp.max((a - b).abs() / a.abs().max(1.0));
    }
    let pass = four < 1e-12 && orders.iter().all(|o| (1.8..2.3).contains(o)) && gm < 1e-12 && kp < 1e-12;
    let shown: Vec<String> = orders.iter().map(|o| format!("{o:.2}")).collect();
    Ok((
        pass,
        format!(
            "four-term τ₂ gap {four:.1e}, KdV orders for N = 1..3 [{}], G = U identity {gm:.1e}, KP phase shift gap {kp:.1e}",
            shown.join(", ")
        ),
    ))
}

fn adler_moser_levels() -> Verdict {
    let q = |n: i64, d: i64| BigRational::new(n.into(), d.into());
    let params: Vec<BigRational> = (0..7).map(|k| q(2 * k - 5, k + 2)).collect();
    let seq = adler_moser_sequence(8, &params).map_err(err)?;
    let low = seq[1].poly.coeffs() == [q(0, 1), q(1, 1)]
        && seq[2].poly.coeffs() == [params[0].clone(), q(0, 1), q(0, 1), q(1, 1)];
    let degrees = (1..=8).all(|l| seq[l].degree() == l * (l + 1) / 2);
    let zero = (1..=8).all(|l| recurrence_residual(&seq[l].poly, &seq[l - 1].poly).is_zero());
    let p8: &AdlerMoserQ = &seq[8];
    Ok((
        low && degrees && zero,
        format!("p₁ = x, p₂ = x³ + t₃: {low}; degrees l(l+1)/2: {degrees}; exact zero residual through l = 8: {zero} (deg p₈ = {})", p8.degree()),
    ))
}

fn generator() -> Verdict {
    let kappa = 2.0;
    let spec = GeneratorSpec::brownian(kappa, 1.0);
    let tests = [
        TrigTest { power: 0.0, terms: vec![(1, 1.0, 0.0)] },
        TrigTest { power: 1.0, terms: vec![(2, 0.3, -0.7)] },
        TrigTest { power: -0.5, terms: vec![(0, 0.2, 0.0), (1, 0.5, 0.1), (3, -0.4, 0.25)] },
    ];
    let (r, phi) = (1.4, 0.9);
    let mut worst = 0.0_f64;
    for rho in &tests {
        // (ρ − E ρ(φ + √κ B_τ)) / τ by trapezoid quadrature, then Richardson in τ
        let d = |tau: f64| {
            let s = (kappa * tau).sqrt();
            let n = 801;
            let h = 20.0 * s / (n - 1) as f64;
            let mean: f64 = (0..n)
                .map(|j| {
                    let x = -10.0 * s + h * j as f64;
                    rho.value(r, phi + x) * (-x * x / (2.0 * s * s)).exp()
                })
                .sum::<f64>()
                * h
                / (s * (2.0 * PI).sqrt());
            (rho.value(r, phi) - mean) / tau
        };
        let tau = 1e-4;
        let (d1, d2, d4) = (d(tau), d(tau / 2.0), d(tau / 4.0));
        let limit = (4.0 * (2.0 * d4 - d2) - (2.0 * d2 - d1)) / 3.0;
        worst = worst.max((eta_hat(&spec, rho, r, phi).map_err(err)? - limit).abs());
    }
    let lambda = 0.7;
    let jumps = GeneratorSpec {
        kappa: 0.0,
        levy_atoms: vec![(PI, lambda)],
        q: 1.0,
        sign: GeneratorSign::Bounded,
    };
    let cos = TrigTest { power: 0.0, terms: vec![(1, 1.0, 0.0)] };
    let mut atom = 0.0_f64;
    for phi in [0.0, 0.4, 2.0] {
        atom = atom.max((eta_hat(&jumps, &cos, 1.0, phi).map_err(err)? - 2.0 * lambda * phi.cos()).abs());
    }
    Ok((
        worst < 1e-6 && atom < 1e-14,
        format!("Brownian η̂ vs heat-kernel limit {worst:.1e}; jump atom vs two-point sum {atom:.1e}"),
    ))
}

fn forge(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_loewner-forge"))
        .args(args)
        .env_remove("LOEWNER_FORGE_WORKERS")
        .output()
        .map_err(err)?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn csv_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Verdict {
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    let runs: [(&str, &[&str]); 7] = [
        ("hl", &["grow-hl", "-s", "n=500", "-s", "alpha=1.0"]),
        ("dla", &["grow-dla", "-s", "n=300", "-s", "mode=\"walker\""]),
        ("sle", &["grow-sle", "-s", "whole_plane=true", "-s", "members=100", "-s", "dt=0.1", "-s", "kappa=6.0"]),
        ("lle", &["grow-lle", "-s", "whole_plane=true", "-s", "members=8", "-s", "dt=0.05"]),
        ("hele-shaw", &["hele-shaw", "-s", "coeffs=[[0.0, 0.0], [0.1, 0.0], [0.02, 0.01]]"]),
        ("coulomb", &["coulomb", "-s", "n=32", "-s", "sweeps=1000", "-s", "tune_sweeps=200"]),
        ("tau", &["tau", "-s", "x=[-4.0, 4.0]", "-s", "t3=[0.0, 0.5]"]),
    ];
    let mut compared = 0;
    let mut differ = Vec::new();
    for (name, args) in runs {
        let mut seen: Vec<Vec<(PathBuf, Vec<u8>)>> = Vec::new();
        for (rep, workers) in [("a", "1"), ("b", "1"), ("c", "3")] {
            let dir = root.join(name).join(rep);
            let mut full = args.to_vec();
            let d = dir.to_str().unwrap().to_string();
            full.extend(["--seed", "17", "--workers", workers, "--out", &d]);
            forge(&full)?;
            if name == "sle" {
                let spec = root.join("spectrum").join(rep);
                let ens = format!("ensemble=\"{}\"", dir.join("ensemble.json").display());
                forge(&["spectrum", "--workers", workers, "--out", spec.to_str().unwrap(), "-s", &ens, "-s", "bootstrap=50"])?;
                let mut files = csv_files(&dir);
                files.extend(csv_files(&spec));
                seen.push(files);
            } else {
                seen.push(csv_files(&dir));
            }
        }
        if seen[0].is_empty() {
            return Err(format!("{name} wrote no CSV"));
        }
        compared += seen[0].len();
        if seen[1] != seen[0] || seen[2] != seen[0] {
            differ.push(name);
        }
    }
    Ok((
        differ.is_empty(),
        format!("{compared} CSV files from 8 commands, rerun with 1 and 3 workers; differing: {differ:?}"),
    ))
}

fn main() {
    // the harness is invoked with test-runner arguments; bare numbers select criteria
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let only: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Verdict); 12] = [
        ("exact β spectrum identities", exact_spectrum),
        ("SLE β(1) at κ = 6", sle_beta),
        ("moment stationarity", stationarity),
        ("string-equation evolution", string_equation),
        ("history independence", history_independence),
        ("DLA charges and box counting", dla),
        ("HL(0) sanity", hl_sanity),
        ("Coulomb droplet", coulomb),
        ("tau functions", tau_functions),
        ("Adler–Moser polynomials", adler_moser_levels),
        ("generator validation", generator),
        ("determinism across workers", determinism),
    ];
    let mut passed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(k + 1)) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match run() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        passed += ok as usize;
        println!(
            "AC{:<2} {} {name}: {detail} [{:.1}s]",
            k + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    let ran = if only.is_empty() { criteria.len() } else { only.len() };
    println!("acceptance: {passed}/{ran} criteria pass");
}

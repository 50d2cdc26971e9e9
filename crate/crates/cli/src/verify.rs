use std::path::{Path, PathBuf};

use loewner_core::conformal::CompositeMap;
use loewner_core::coulomb_gas::{droplet_stats, sampling_radius, Chain, GasState};
use loewner_core::growth::{dla_charges, LatticeCluster};
use loewner_core::hele_shaw::{harmonic_moments, Orientation, Trajectory};
use loewner_core::tau_functions::{adler_moser_sequence, kdv_potential, recurrence_residual, SolitonData};
use loewner_core::AdlerMoserQ;
use num_complex::Complex64;
use toml::{Table, Value};

use crate::commands::{kernel_from, read_field, EnsembleFile};
use crate::config::{config_err, Outcome};
use crate::manifest::{load, sha256_hex, Manifest};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    fn push(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        });
    }

    /// Records an `Err` from a check as a failure.
    fn run(&mut self, name: &str, f: impl FnOnce() -> Result<(bool, String), String>) {
        match f() {
            Ok((pass, detail)) => self.push(name, pass, detail),
            Err(e) => self.push(name, false, e),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn num(t: &Table, key: &str, default: f64) -> f64 {
    match t.get(key) {
        Some(Value::Float(x)) => *x,
        Some(Value::Integer(i)) => *i as f64,
        _ => default,
    }
}

fn text(t: &Table, key: &str, default: &str) -> String {
    t.get(key).and_then(Value::as_str).unwrap_or(default).to_string()
}

fn complexes(t: &Table, key: &str) -> Vec<Complex64> {
    let Some(Value::Array(a)) = t.get(key) else {
        return Vec::new();
    };
    a.iter()
        .filter_map(|v| {
            let p = v.as_array()?;
            let f = |v: &Value| v.as_float().or_else(|| v.as_integer().map(|i| i as f64));
            Some(Complex64::new(f(p.first()?)?, f(p.get(1)?)?))
        })
        .collect()
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>, String> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| format!("{}: {e}", path.display()))
}

/// Re-runs the cheap invariants of a finished run.
pub fn verify(manifest_path: &Path) -> Outcome<Report> {
    let m = load(manifest_path)?;
    let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let missing: Vec<&str> = m
        .artifacts
        .iter()
        .filter(|a| !dir.join(&a.path).is_file())
        .map(|a| a.path.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(config_err(format!("missing artifacts: {}", missing.join(", "))));
    }
    let mut r = Report::default();
    for a in &m.artifacts {
        let bytes = std::fs::read(dir.join(&a.path))?;
        let ok = sha256_hex(&bytes) == a.sha256;
        r.push(&format!("checksum {}", a.path), ok, if ok { "matches" } else { "differs from manifest" });
    }
    let has = |name: &str| m.artifacts.iter().any(|a| a.path == name);
    let p = &m.config.params;
    match m.config.command.as_str() {
        "grow-hl" | "grow-sle" | "grow-lle" => verify_maps(&mut r, &m, &dir),
        "grow-dla" if has("cluster.csv") => verify_dla(&mut r, &dir, has("field.csv")),
        "hele-shaw" if has("trajectory.csv") => verify_hele_shaw(&mut r, p, &dir.join("trajectory.csv")),
        "coulomb" if has("chain.csv") => verify_coulomb(&mut r, p, &dir),
        "tau" => verify_tau(&mut r, p, &dir, &m),
        "spectrum" => verify_spectrum(&mut r, &dir, &m),
        _ => {}
    }
    Ok(r)
}

fn leading_check(map: &CompositeMap<f64>) -> Result<(bool, String), String> {
    let c = map.leading_coefficient(2.0, 256).map_err(|e| e.to_string())?;
    let want = map.capacity_coefficient();
    let rel = (c - want).norm() / want;
    Ok((rel < 1e-6, format!("|F(w)/w mean − e^(Σδt)| / e^(Σδt) = {rel:.3e}")))
}

fn verify_maps(r: &mut Report, m: &Manifest, dir: &Path) {
    if dir.join("ensemble.json").is_file() {
        let ens: Result<EnsembleFile, String> = std::fs::read_to_string(dir.join("ensemble.json"))
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str(&s).map_err(|e| e.to_string()));
        let ens = match ens {
            Ok(e) => e,
            Err(e) => return r.push("ensemble", false, e),
        };
        r.run("ensemble capacity", || {
            let mut worst = 0.0_f64;
            for i in 0..ens.maps.len() {
                let map = ens.member(dir, i).map_err(|e| format!("member {i}: {e}"))?;
                worst = worst.max((map.total_capacity() - (ens.burn_in + ens.t)).abs());
            }
            Ok((worst <= ens.dt, format!("largest |Σδt − (T + t)| = {worst:.3e} over {} dumps", ens.maps.len())))
        });
        if !ens.maps.is_empty() {
            r.run("leading coefficient (member 0)", || leading_check(&ens.member(dir, 0).map_err(|e| e.to_string())?));
        }
        return;
    }
    if !m.artifacts.iter().any(|a| a.path == "map.csv") {
        return;
    }
    let map = match open(&dir.join("map.csv")).and_then(|f| CompositeMap::<f64>::read_csv(f).map_err(|e| e.to_string())) {
        Ok(map) => map,
        Err(e) => return r.push("map dump", false, e),
    };
    let bad = map.slits().iter().position(|s| !(s.capacity() > 0.0));
    r.push(
        "capacities positive",
        bad.is_none(),
        bad.map_or(format!("{} slits", map.len()), |i| format!("slit {i} has non-positive capacity")),
    );
    r.run("leading coefficient", || leading_check(&map));
}

fn verify_dla(r: &mut Report, dir: &Path, with_field: bool) {
    let cluster = match open(&dir.join("cluster.csv")).and_then(|f| LatticeCluster::read_csv(f).map_err(|e| e.to_string())) {
        Ok(c) => c,
        Err(e) => return r.push("cluster dump", false, e),
    };
    r.push("cluster dump", true, format!("{} connected sites", cluster.sites().len()));
    if !with_field {
        return;
    }
    let field = match read_field(&dir.join("field.csv")) {
        Ok(f) => f,
        Err(e) => return r.push("field dump", false, e.to_string()),
    };
    let res = field.max_residual(&cluster);
    r.push("field harmonic", res < 1e-6, format!("max five-point residual {res:.3e}"));
    r.run("charge normalization", || {
        let charges = dla_charges(&cluster, &field).map_err(|e| e.to_string())?;
        let total = charges.total();
        let stored = read_charges(&dir.join("charges.csv"))?;
        let mut worst = 0.0_f64;
        for ((m, n), q) in &stored {
            let c = charges.get((*m, *n)).ok_or_else(|| format!("stored charge at ({m}, {n}) is not a boundary site"))?;
            worst = worst.max((c - q).abs());
        }
        let ok = (total - 1.0).abs() < 1e-9 && worst < 1e-12 && stored.len() == charges.len();
        Ok((ok, format!("Σ charges − 1 = {:.3e}, largest stored mismatch {worst:.3e}", total - 1.0)))
    });
}

fn read_charges(path: &Path) -> Result<Vec<((i32, i32), f64)>, String> {
    let mut out = Vec::new();
    for (row, rec) in csv::Reader::from_reader(open(path)?).deserialize::<(i32, i32, f64)>().enumerate() {
        let (m, n, q) = rec.map_err(|e| format!("charges row {}: {e}", row + 1))?;
        out.push(((m, n), q));
    }
    Ok(out)
}

fn verify_hele_shaw(r: &mut Report, p: &Table, path: &Path) {
    let orientation = if text(p, "orientation", "exterior") == "interior" {
        Orientation::Interior
    } else {
        Orientation::Exterior
    };
    let traj = match open(path).and_then(|f| Trajectory::read_csv(f, orientation).map_err(|e| e.to_string())) {
        Ok(t) => t,
        Err(e) => return r.push("trajectory dump", false, e),
    };
    if traj.is_empty() {
        return r.push("trajectory dump", false, "no rows");
    }
    let sign = if text(p, "direction", "expand") == "contract" { -1.0 } else { 1.0 };
    let n_quad = 64 * (traj.maps[0].degree() + 2);
    let m = (num(p, "moments", 5.0) as usize).max(1);
    let base = harmonic_moments(&traj.maps[0], m, n_quad);
    r.run("area law", || {
        let base = base.as_ref().map_err(|e| e.to_string())?;
        for (i, (t, f)) in traj.times.iter().zip(&traj.maps).enumerate() {
            let mv = harmonic_moments(f, 1, n_quad).map_err(|e| format!("row {}: {e}", i + 1))?;
            let err = mv.t_area - base.t_area - sign * (t - traj.times[0]);
            if err.abs() > 1e-6 * (1.0 + t.abs()) {
                return Ok((false, format!("row {}: area/π off by {err:.3e}", i + 1)));
            }
        }
        Ok((true, format!("{} rows", traj.len())))
    });
    r.run("moment conservation", || {
        let base = base.as_ref().map_err(|e| e.to_string())?;
        let mut worst = 0.0_f64;
        for (i, f) in traj.maps.iter().enumerate() {
            let cur = harmonic_moments(f, m, n_quad).map_err(|e| format!("row {}: {e}", i + 1))?;
            for k in 0..m {
                let d = (cur.moments[k] - base.moments[k]).norm() / (base.moments[k].norm() + 1e-12);
                let tol = 1e-4f64.max(1e-4 * base.moments[k].norm());
                if (cur.moments[k] - base.moments[k]).norm() > tol {
                    return Ok((false, format!("row {}: moment I_{} drifted by {d:.3e} (relative)", i + 1, k + 1)));
                }
                worst = worst.max(d);
            }
        }
        Ok((true, format!("largest relative drift {worst:.3e}")))
    });
    let circle = orientation == Orientation::Exterior && complexes(p, "coeffs").iter().all(|c| c.norm() == 0.0);
    if circle {
        let r0 = num(p, "r0", 1.0);
        r.run("circle closed form", || {
            for (i, (t, f)) in traj.times.iter().zip(&traj.maps).enumerate() {
                let want = (sign * t + r0 * r0).sqrt();
                if ((f.r() - want) / want).abs() > 1e-6 {
                    return Ok((false, format!("row {}: r = {} but √(t + r₀²) = {want}", i + 1, f.r())));
                }
            }
            Ok((true, format!("r(t) = √(t + {r0}²) on {} rows", traj.len())))
        });
    }
}

fn verify_coulomb(r: &mut Report, p: &Table, dir: &Path) {
    let n = num(p, "n", 64.0) as usize;
    let hbar = num(p, "hbar", 0.02);
    let bins = num(p, "bins", 16.0) as usize;
    let mut sweeps: Vec<usize> = Vec::new();
    let mut snaps: Vec<Vec<Complex64>> = Vec::new();
    let wall = sampling_radius(n, hbar);
    let read = (|| -> Result<(), String> {
        for (row, rec) in csv::Reader::from_reader(open(&dir.join("chain.csv"))?)
            .deserialize::<(usize, usize, f64, f64)>()
            .enumerate()
        {
            let (s, i, x, y) = rec.map_err(|e| format!("chain row {}: {e}", row + 1))?;
            if i == 0 {
                sweeps.push(s);
                snaps.push(Vec::with_capacity(n));
            }
            let z = Complex64::new(x, y);
            let snap = snaps.last_mut().ok_or_else(|| format!("chain row {}: snapshot does not start at i = 0", row + 1))?;
            if i != snap.len() || sweeps.last() != Some(&s) || !(z.norm() <= wall) {
                return Err(format!("chain row {}: particle out of order or outside the wall", row + 1));
            }
            snap.push(z);
        }
        if let Some(k) = snaps.iter().position(|s| s.len() != n) {
            return Err(format!("snapshot {k} holds {} particles, expected {n}", snaps[k].len()));
        }
        Ok(())
    })();
    if let Err(e) = read {
        return r.push("chain dump", false, e);
    }
    r.push("chain dump", true, format!("{} snapshots of {n} particles", snaps.len()));
    if !dir.join("density.csv").is_file() || snaps.is_empty() {
        return;
    }
    r.run("density profile", || {
        let kernel = kernel_from(&text(p, "kernel", "plane"));
        let state = GasState::new(snaps[snaps.len() - 1].clone(), hbar, complexes(p, "potential"), kernel)
            .map_err(|e| e.to_string())?;
        let chain = Chain {
            snapshots: snaps.clone(),
            sweeps: sweeps.clone(),
            acceptance: f64::NAN,
            proposal_scale: f64::NAN,
            low_acceptance: false,
            max_energy_drift: f64::NAN,
            state,
        };
        let stats = droplet_stats(&chain, bins).map_err(|e| e.to_string())?;
        let stored: Vec<(f64, f64, f64)> = csv::Reader::from_reader(open(&dir.join("density.csv"))?)
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        if stored.len() != stats.density.len() {
            return Ok((false, format!("{} bins stored, {} recomputed", stored.len(), stats.density.len())));
        }
        for (k, (s, d)) in stored.iter().zip(&stats.density).enumerate() {
            if (s.2 - d).abs() > 1e-12 * d.abs().max(1.0) {
                return Ok((false, format!("bin {k}: stored {} recomputed {d}", s.2)));
            }
        }
        Ok((true, format!("{} bins recomputed from the chain", stored.len())))
    });
}

fn verify_tau(r: &mut Report, p: &Table, dir: &Path, m: &Manifest) {
    let has = |name: &str| m.artifacts.iter().any(|a| a.path == name);
    if has("adler_moser.json") {
        r.run("adler-moser recurrence", || {
            let s = std::fs::read_to_string(dir.join("adler_moser.json")).map_err(|e| e.to_string())?;
            let stored = AdlerMoserQ::from_json(&s).map_err(|e| e.to_string())?;
            let seq = adler_moser_sequence(stored.l, &stored.params).map_err(|e| e.to_string())?;
            let same = seq.last().map(|p| &p.poly) == Some(&stored.poly);
            let zero = stored.l == 0 || recurrence_residual(&stored.poly, &seq[stored.l - 1].poly).is_zero();
            Ok((same && zero, format!("p_{} reproduced: {same}, residual zero: {zero}", stored.l)))
        });
    }
    if has("tau_grid.csv") {
        r.run("kdv potential", || {
            let momenta: Vec<f64> = p
                .get("momenta")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(|v| v.as_float().or(v.as_integer().map(|i| i as f64))).collect())
                .unwrap_or_default();
            let phases: Vec<f64> = p
                .get("phases")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(|v| v.as_float().or(v.as_integer().map(|i| i as f64))).collect())
                .unwrap_or_else(|| vec![0.0; momenta.len()]);
            let mut data = SolitonData::kdv(momenta, phases, vec![0.0, 0.0]).map_err(|e| e.to_string())?;
            for (row, rec) in csv::Reader::from_reader(open(&dir.join("tau_grid.csv"))?)
                .deserialize::<(f64, f64, f64, f64)>()
                .enumerate()
            {
                let (x, t, _, v) = rec.map_err(|e| format!("grid row {}: {e}", row + 1))?;
                data.times = vec![x, t];
                let want = kdv_potential(&data).map_err(|e| e.to_string())?;
                if (want - v).abs() > 1e-9 * want.abs().max(1.0) {
                    return Ok((false, format!("grid row {}: V = {v} but recomputed {want}", row + 1)));
                }
            }
            Ok((true, "potential recomputed on every grid row".to_string()))
        });
    }
}

fn verify_spectrum(r: &mut Report, dir: &Path, m: &Manifest) {
    for name in ["spectrum.csv", "tau.csv", "f.csv"] {
        if !m.artifacts.iter().any(|a| a.path == name) {
            continue;
        }
        r.run(&format!("{name} values"), || {
            let rows: Vec<(f64, f64, f64, String, f64, f64)> = csv::Reader::from_reader(open(&dir.join(name))?)
                .deserialize()
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            if let Some(i) = rows.iter().position(|row| !row.0.is_finite() || !row.1.is_finite() || !(row.2 >= 0.0) && !row.2.is_nan()) {
                return Ok((false, format!("row {}: non-finite value or negative stderr", i + 1)));
            }
            if name == "tau.csv" {
                if let Some(row) = rows.iter().find(|row| row.0 == 1.0) {
                    return Ok((row.1.abs() <= 0.05, format!("τ(1) = {:.4}", row.1)));
                }
            }
            Ok((true, format!("{} rows", rows.len())))
        });
    }
}

pub fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(crate::manifest::MANIFEST)
    } else {
        p.to_path_buf()
    }
}

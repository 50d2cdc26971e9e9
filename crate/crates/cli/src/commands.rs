use std::path::{Path, PathBuf};

use loewner_core::conformal::CompositeMap;
use loewner_core::coulomb_gas::{
    compare_to_hele_shaw, droplet_boundary, droplet_stats, equal_area_circle, metropolis_run, render_svg, GasState, Kernel,
    MetropolisOptions,
};
use loewner_core::drivers::{sample, DriverParams, RngSeed};
use loewner_core::growth::{
    box_half_width, dla_charges, dla_grow_with, dla_harmonic_field, grow_driven, grow_hl_with, grow_whole_plane, DlaMode,
    DlaOptions, HlOptions, LatticeCluster, LatticeField, MapRun, WholePlaneOptions,
};
use loewner_core::hele_shaw::{
    evolve_string, richardson_invariance, write_moments_csv, Direction, EvolveOptions, LaurentMap,
};
use loewner_core::multifractal::{
    beta_curve, beta_estimate_with, dyadic_scales, legendre_beta_to_f, legendre_tau_to_f, tau_boxcount, AnalysisManifest,
    BetaOptions,
};
use loewner_core::svg::{ramp, Canvas};
use loewner_core::tau_functions::{adler_moser_sequence, kdv_residual, log_tau, write_tau_grid, KdvGrid, SolitonData};
use num_complex::Complex64;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{config_err, relative_to, Emit, Failure, Outcome, Params, RunConfig};
use crate::manifest::Output;

/// A validated experiment, ready to run.
type Job = Box<dyn FnOnce(&mut Output) -> Outcome<Value> + Send>;

/// Reads and validates every parameter of `cfg`, returning the resolved
/// parameter table and the job. No work happens before the job is called.
pub fn prepare(cfg: &RunConfig) -> Outcome<(toml::Table, Job)> {
    let p = Params::new(&cfg.command, cfg.params.clone());
    let seed = RngSeed::new(cfg.seed);
    let emit = cfg.emit.clone();
    let job: Job = match cfg.command.as_str() {
        "grow-hl" => grow_hl_job(&p, seed, emit)?,
        "grow-dla" => grow_dla_job(&p, seed, emit)?,
        "grow-sle" => driven_job(&p, seed, emit, false)?,
        "grow-lle" => driven_job(&p, seed, emit, true)?,
        "hele-shaw" => hele_shaw_job(&p, emit)?,
        "coulomb" => coulomb_job(&p, seed, emit)?,
        "tau" => tau_job(&p, emit)?,
        "spectrum" => spectrum_job(&p, seed, emit)?,
        other => return Err(config_err(format!("unknown command `{other}`"))),
    };
    Ok((p.finish()?, job))
}

type Emits = std::collections::BTreeSet<Emit>;

fn positive(p: &Params, key: &str, x: f64) -> Outcome<f64> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(config_err(format!("[{}] `{key}` must be positive, got {x}", p.command())))
    }
}

fn at_least_one(p: &Params, key: &str, n: usize) -> Outcome<usize> {
    if n >= 1 {
        Ok(n)
    } else {
        Err(config_err(format!("[{}] `{key}` must be at least 1", p.command())))
    }
}

fn trace_svg(map: &CompositeMap<f64>, points: usize, offset: f64) -> Outcome<String> {
    let tr = map.trace(points, offset)?;
    let mut c = Canvas::fit(600.0, &tr);
    c.polyline(&tr, "#1f4e79", 1.0, true);
    Ok(c.finish())
}

fn map_summary(run: &MapRun<f64>) -> Value {
    json!({
        "slits": run.map.len(),
        "total_capacity": run.map.total_capacity(),
        "log_scale": run.map.log_scale(),
        "capacity_coefficient": run.map.capacity_coefficient(),
    })
}

fn emit_map_run(out: &mut Output, emit: &Emits, run: &MapRun<f64>, trace_points: usize) -> Outcome<()> {
    if emit.contains(&Emit::Csv) {
        out.write_with("map.csv", |b| run.map.write_csv(b))?;
        out.write_with("driver.csv", |b| run.driver.write_csv(b))?;
    }
    if emit.contains(&Emit::Json) {
        out.write_json("summary.json", &map_summary(run))?;
    }
    if emit.contains(&Emit::Svg) {
        out.write("trace.svg", trace_svg(&run.map, trace_points, 1e-3)?.as_bytes())?;
    }
    Ok(())
}

fn grow_hl_job(p: &Params, seed: RngSeed, emit: Emits) -> Outcome<Job> {
    let alpha = p.f64("alpha", 0.0)?;
    let delta_a = positive(p, "delta_a", p.f64("delta_a", 1e-2)?)?;
    let n = at_least_one(p, "n", p.usize("n", 1000)?)?;
    let reg = positive(p, "regularization_scale", p.f64("regularization_scale", 1.0)?)?;
    let trace_points = at_least_one(p, "trace_points", p.usize("trace_points", 2048)?)?;
    Ok(Box::new(move |out| {
        let run = grow_hl_with::<f64>(alpha, delta_a, n, seed, HlOptions { regularization_scale: reg })?;
        emit_map_run(out, &emit, &run, trace_points)?;
        Ok(map_summary(&run))
    }))
}

fn grow_dla_job(p: &Params, seed: RngSeed, emit: Emits) -> Outcome<Job> {
    let n = at_least_one(p, "n", p.usize("n", 200)?)?;
    let mode = match p.choice("mode", "exact", &["exact", "walker"])?.as_str() {
        "exact" => DlaMode::ExactCharges,
        _ => DlaMode::RandomWalker,
    };
    let box_factor = p.f64("box_factor", 4.0)?;
    if box_factor < 2.0 {
        return Err(config_err("[grow-dla] `box_factor` must be at least 2"));
    }
    let store_field = p.bool("store_field", true)?;
    Ok(Box::new(move |out| {
        let opts = DlaOptions {
            box_factor,
            ..DlaOptions::default()
        };
        let run = dla_grow_with(n, seed, mode, opts)?;
        let cluster = &run.cluster;
        if emit.contains(&Emit::Csv) {
            out.write_with("cluster.csv", |b| cluster.write_csv(b))?;
            if let (Some(field), Some(charges)) = (&run.final_field, &run.final_charges) {
                out.write("charges.csv", charges_csv(charges.iter()).as_bytes())?;
                if store_field {
                    out.write("field.csv", field_csv(field).as_bytes())?;
                }
            }
        }
        if emit.contains(&Emit::Svg) {
            out.write("cluster.svg", cluster_svg(cluster).as_bytes())?;
        }
        let worst_sum = run.charge_sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        let summary = json!({
            "particles": cluster.sites().len(),
            "radius": cluster.radius(),
            "mode": mode,
            "max_charge_sum_deviation": worst_sum,
            "min_charge": run.min_charges.iter().cloned().fold(f64::INFINITY, f64::min),
        });
        if emit.contains(&Emit::Json) {
            out.write_json("summary.json", &summary)?;
        }
        Ok(summary)
    }))
}

pub fn charges_csv(charges: impl Iterator<Item = ((i32, i32), f64)>) -> String {
    let mut s = String::from("m,n,charge\n");
    for ((m, n), q) in charges {
        s.push_str(&format!("{m},{n},{q:e}\n"));
    }
    s
}

/// Field dump: a `half_width` line followed by the row-major values.
fn field_csv(field: &LatticeField) -> String {
    let mut s = format!("half_width\n{}\nvalue\n", field.half_width());
    for v in field.values() {
        s.push_str(&format!("{v:e}\n"));
    }
    s
}

pub fn read_field(path: &Path) -> Outcome<LatticeField> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = || config_err(format!("{}: malformed field dump", path.display()));
    if lines.next() != Some("half_width") {
        return Err(bad());
    }
    let hw: i32 = lines.next().and_then(|l| l.trim().parse().ok()).ok_or_else(bad)?;
    if lines.next() != Some("value") {
        return Err(bad());
    }
    let values = lines
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| config_err(format!("{}: bad value on data line {}", path.display(), i + 1)))
        })
        .collect::<Outcome<Vec<_>>>()?;
    Ok(LatticeField::from_values(hw, values)?)
}

fn cluster_svg(cluster: &LatticeCluster) -> String {
    let pts: Vec<Complex64> = cluster.sites().iter().map(|&(m, n)| Complex64::new(m as f64, n as f64)).collect();
    let mut c = Canvas::fit(600.0, &pts);
    let n = pts.len().max(2) as f64;
    for (k, z) in pts.iter().enumerate() {
        c.square(*z, 1.0, &ramp(k as f64 / (n - 1.0)));
    }
    c.finish()
}

/// Whole-plane ensemble description, enough to rebuild every member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub driver: DriverParams,
    pub t: f64,
    pub burn_in: f64,
    pub dt: f64,
    /// Member `i` was grown from stream `i` of `seed`.
    pub seed: u64,
    pub members: usize,
    pub log_scale: f64,
    /// Map dumps relative to this file, one per member; empty when the maps
    /// were not stored.
    pub maps: Vec<String>,
}

impl EnsembleFile {
    pub fn options(&self) -> WholePlaneOptions {
        WholePlaneOptions {
            driver: self.driver,
            t: self.t,
            burn_in: self.burn_in,
            dt: self.dt,
        }
    }

    /// Member `i`, from its dump when one exists and regrown otherwise.
    pub fn member(&self, base: &Path, i: usize) -> loewner_core::error::Result<CompositeMap<f64>> {
        match self.maps.get(i) {
            Some(rel) => {
                let f = std::fs::File::open(relative_to(base, Path::new(rel)))?;
                Ok(CompositeMap::read_csv(std::io::BufReader::new(f))?.with_log_scale(self.log_scale))
            }
            None => Ok(grow_whole_plane::<f64>(self.options(), RngSeed::new(self.seed).with_stream(i as u64))?.map),
        }
    }
}

fn driver_params(p: &Params, levy: bool) -> Outcome<DriverParams> {
    let kappa = p.f64("kappa", 2.0)?;
    if levy {
        Ok(DriverParams::Levy {
            kappa,
            jump_rate: p.f64("jump_rate", 1.0)?,
            jump_scale: p.f64("jump_scale", 1.0)?,
        })
    } else {
        Ok(DriverParams::Brownian { kappa })
    }
}

fn driven_job(p: &Params, seed: RngSeed, emit: Emits, levy: bool) -> Outcome<Job> {
    let driver = driver_params(p, levy)?;
    let dt = positive(p, "dt", p.f64("dt", 1e-3)?)?;
    let trace_points = at_least_one(p, "trace_points", p.usize("trace_points", 2048)?)?;
    if p.bool("whole_plane", false)? {
        let opts = WholePlaneOptions {
            driver,
            t: p.f64("t", 0.0)?,
            burn_in: p.f64("burn_in", 10.0)?,
            dt,
        };
        let members = at_least_one(p, "members", p.usize("members", 1)?)?;
        return Ok(Box::new(move |out| {
            let runs: Vec<MapRun<f64>> = (0..members)
                .into_par_iter()
                .map(|i| grow_whole_plane::<f64>(opts, seed.with_stream(i as u64)))
                .collect::<Result<_, _>>()?;
            let mut maps = Vec::new();
            if emit.contains(&Emit::Csv) {
                for (i, r) in runs.iter().enumerate() {
                    let name = format!("maps/member_{i:04}.csv");
                    out.write_with(&name, |b| r.map.write_csv(b))?;
                    maps.push(name);
                }
            }
            let ens = EnsembleFile {
                driver,
                t: opts.t,
                burn_in: opts.burn_in,
                dt,
                seed: seed.seed,
                members,
                log_scale: runs[0].map.log_scale(),
                maps,
            };
            out.write_json("ensemble.json", &ens)?;
            if emit.contains(&Emit::Svg) {
                out.write("trace.svg", trace_svg(&runs[0].map, trace_points, 1e-3)?.as_bytes())?;
            }
            Ok(json!({
                "members": members,
                "slits_per_member": runs[0].map.len(),
                "log_scale": ens.log_scale,
            }))
        }));
    }
    let t = positive(p, "t", p.f64("t", 1.0)?)?;
    let steps = (t / dt).round() as usize;
    Ok(Box::new(move |out| {
        let path = sample(driver, dt, steps.max(1), seed)?;
        let run = grow_driven::<f64>(&path, dt)?;
        let run = MapRun { seed: Some(seed), ..run };
        emit_map_run(out, &emit, &run, trace_points)?;
        Ok(map_summary(&run))
    }))
}

pub fn laurent_from(orientation: &str, r0: f64, coeffs: Vec<Complex64>) -> loewner_core::error::Result<LaurentMap> {
    if orientation == "interior" {
        let z1 = coeffs.first().copied().unwrap_or_default();
        LaurentMap::interior(z1, r0, coeffs.into_iter().skip(1).collect())
    } else {
        LaurentMap::exterior(r0, coeffs)
    }
}

fn hele_shaw_job(p: &Params, emit: Emits) -> Outcome<Job> {
    let r0 = p.f64("r0", 1.0)?;
    let coeffs = p.complex_list("coeffs")?;
    let orientation = p.choice("orientation", "exterior", &["exterior", "interior"])?;
    let dt = positive(p, "dt", p.f64("dt", 1e-3)?)?;
    let steps = at_least_one(p, "steps", p.usize("steps", 1000)?)?;
    let moments = p.usize("moments", 5)?;
    let tolerance = positive(p, "tolerance", p.f64("tolerance", 1e-8)?)?;
    let direction = match p.choice("direction", "expand", &["expand", "contract"])?.as_str() {
        "expand" => Direction::Expand,
        _ => Direction::Contract,
    };
    let allow_ill_posed = p.bool("allow_ill_posed", false)?;
    if direction == Direction::Contract && !allow_ill_posed {
        return Err(config_err("[hele-shaw] `direction = \"contract\"` is ill-posed; set `allow_ill_posed = true` to run it"));
    }
    let f = laurent_from(&orientation, r0, coeffs)?;
    if !f.is_univalent(EvolveOptions::default().univalence_points) {
        return Err(config_err("[hele-shaw] the initial map is not univalent"));
    }
    let opts = EvolveOptions {
        tolerance,
        direction,
        allow_ill_posed,
        ..EvolveOptions::default()
    };
    Ok(Box::new(move |out| {
        let (traj, failure) = match evolve_string(&f, dt, steps, opts) {
            Ok(t) => (t, None),
            Err(a) => (a.partial, Some(a.error)),
        };
        if emit.contains(&Emit::Csv) {
            out.write_with("trajectory.csv", |b| traj.write_csv(b))?;
            if moments > 0 {
                out.write_with("moments.csv", |b| write_moments_csv(&traj, moments, b))?;
            }
        }
        if emit.contains(&Emit::Svg) {
            let every = (traj.len() / 10).max(1);
            let curves: Vec<Vec<Complex64>> = traj.maps.iter().step_by(every).map(|m| m.boundary(512)).collect();
            let mut c = Canvas::fit(600.0, curves.iter().flatten());
            for (k, b) in curves.iter().enumerate() {
                c.polyline(b, &ramp(k as f64 / curves.len().max(2) as f64), 1.0, true);
            }
            out.write("boundary.svg", c.finish().as_bytes())?;
        }
        let drift = if moments > 0 && traj.len() > 1 {
            richardson_invariance(&traj, moments)?
        } else {
            Vec::new()
        };
        let summary = json!({
            "steps": traj.len(),
            "final_t": traj.last().map(|(t, _)| t),
            "final_r": traj.last().map(|(_, m)| m.r()),
            "max_residual": traj.residuals.iter().cloned().fold(0.0, f64::max),
            "moment_drift": drift,
        });
        if emit.contains(&Emit::Json) {
            out.write_json("summary.json", &summary)?;
        }
        match failure {
            Some(e) => {
                let f: Failure = e.into();
                Err(Failure::Numeric(format!("{} (partial trajectory of {} steps written)", f, traj.len())))
            }
            None => Ok(summary),
        }
    }))
}

pub fn kernel_from(name: &str) -> Kernel {
    if name == "half_plane" {
        Kernel::HalfPlane
    } else {
        Kernel::Plane
    }
}

fn coulomb_job(p: &Params, seed: RngSeed, emit: Emits) -> Outcome<Job> {
    let n = at_least_one(p, "n", p.usize("n", 64)?)?;
    let hbar = positive(p, "hbar", p.f64("hbar", 0.02)?)?;
    let d = MetropolisOptions::default();
    let opts = MetropolisOptions {
        sweeps: at_least_one(p, "sweeps", p.usize("sweeps", d.sweeps)?)?,
        proposal_scale: positive(p, "proposal_scale", p.f64("proposal_scale", d.proposal_scale)?)?,
        tune_sweeps: p.usize("tune_sweeps", d.tune_sweeps)?,
        thin: at_least_one(p, "thin", p.usize("thin", d.thin)?)?,
        recompute_every: at_least_one(p, "recompute_every", p.usize("recompute_every", d.recompute_every)?)?,
    };
    let kernel = kernel_from(&p.choice("kernel", "plane", &["plane", "half_plane"])?);
    let potential = p.complex_list("potential")?;
    let bins = at_least_one(p, "bins", p.usize("bins", 16)?)?;
    let sectors = at_least_one(p, "sectors", p.usize("sectors", 32)?)?;
    // Build the initial state now so its preconditions are checked up front.
    let state = GasState::scattered(n, hbar, potential, kernel, seed.with_stream(1 << 32))?;
    Ok(Box::new(move |out| {
        let chain = metropolis_run(state, opts, seed)?;
        let stats = droplet_stats(&chain, bins)?;
        let boundary = droplet_boundary(&chain, sectors)?;
        let circle = equal_area_circle(n, hbar)?;
        let distance = if kernel == Kernel::Plane {
            Some(compare_to_hele_shaw(&boundary, &circle)?)
        } else {
            None
        };
        if emit.contains(&Emit::Csv) {
            out.write_with("chain.csv", |b| chain.write_csv(b))?;
            out.write_with("density.csv", |b| stats.write_csv(b))?;
        }
        if emit.contains(&Emit::Svg) {
            let map = (kernel == Kernel::Plane).then_some(&circle);
            out.write("droplet.svg", render_svg(&chain, Some(&boundary), map).as_bytes())?;
        }
        let summary = json!({
            "acceptance": chain.acceptance,
            "proposal_scale": chain.proposal_scale,
            "low_acceptance": chain.low_acceptance,
            "max_energy_drift": chain.max_energy_drift,
            "support_radius": stats.support_radius,
            "snapshots": chain.snapshots.len(),
            "boundary_distance": distance,
        });
        if emit.contains(&Emit::Json) {
            out.write_json("summary.json", &summary)?;
        }
        Ok(summary)
    }))
}

/// Rationals written as integers, floats with exact binary value, or
/// `"p/q"` strings.
pub fn rational(v: &toml::Value) -> Option<BigRational> {
    match v {
        toml::Value::Integer(i) => Some(BigRational::from_integer((*i).into())),
        toml::Value::Float(x) => BigRational::from_float(*x),
        toml::Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn tau_job(p: &Params, emit: Emits) -> Outcome<Job> {
    let kind = p.choice("kind", "kdv", &["kdv", "kp", "adler_moser"])?;
    match kind.as_str() {
        "adler_moser" => {
            let l = p.usize("l", 3)?;
            let params = p
                .list("params")?
                .iter()
                .map(|v| rational(v).ok_or_else(|| config_err(format!("[tau] `params` entry {v} is not a rational"))))
                .collect::<Outcome<Vec<_>>>()?;
            if params.len() != l.saturating_sub(1) {
                return Err(config_err(format!("[tau] `params` needs l − 1 = {} entries, got {}", l.saturating_sub(1), params.len())));
            }
            Ok(Box::new(move |out| {
                let seq = adler_moser_sequence(l, &params)?;
                let last = seq.last().expect("sequence holds p_0");
                if emit.contains(&Emit::Json) {
                    out.write("adler_moser.json", format!("{}\n", last.to_json()?).as_bytes())?;
                }
                Ok(json!({ "l": l, "degree": last.degree() }))
            }))
        }
        "kdv" => {
            let momenta = p.f64_list("momenta", &[1.0, 2.0])?;
            let phases = p.f64_list("phases", &vec![0.0; momenta.len()])?;
            let x = p.f64_list("x", &[-10.0, 10.0])?;
            let t3 = p.f64_list("t3", &[0.0, 1.0])?;
            let dx = positive(p, "dx", p.f64("dx", 0.05)?)?;
            let dt = positive(p, "dt", p.f64("dt", 0.05)?)?;
            if x.len() != 2 || t3.len() != 2 {
                return Err(config_err("[tau] `x` and `t3` are [lo, hi] ranges"));
            }
            let data = SolitonData::kdv(momenta, phases, vec![0.0, 0.0])?;
            let grid = KdvGrid {
                x: (x[0], x[1]),
                t3: (t3[0], t3[1]),
                dx,
                dt,
            };
            Ok(Box::new(move |out| {
                let residual = kdv_residual(&data, grid)?;
                if emit.contains(&Emit::Csv) {
                    out.write_with("tau_grid.csv", |b| write_tau_grid(&data, grid, b))?;
                }
                let summary = json!({ "solitons": data.len(), "kdv_residual": residual });
                if emit.contains(&Emit::Json) {
                    out.write_json("summary.json", &summary)?;
                }
                Ok(summary)
            }))
        }
        _ => {
            let points = p.complex_list("points")?;
            let phases = p.f64_list("phases", &vec![0.0; points.len()])?;
            let times = p.f64_list("times", &[0.0, 0.0, 0.0])?;
            let data = SolitonData::kp(points, phases, times)?;
            Ok(Box::new(move |out| {
                let lt = log_tau(&data);
                let summary = json!({ "solitons": data.len(), "log_tau": lt, "phase_shifts": data.phase_shifts() });
                if emit.contains(&Emit::Json) {
                    out.write_json("summary.json", &summary)?;
                }
                Ok(summary)
            }))
        }
    }
}

fn spectrum_job(p: &Params, seed: RngSeed, emit: Emits) -> Outcome<Job> {
    let kind = p.choice("kind", "beta", &["beta", "tau"])?;
    if kind == "tau" {
        let cluster_path = p.path("cluster")?;
        let qs = p.f64_list("qs", &[-2.0, -1.0, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0])?;
        let box_factor = p.f64("box_factor", 4.0)?;
        let cluster = LatticeCluster::read_csv(std::fs::File::open(&cluster_path).map_err(|e| {
            config_err(format!("[spectrum] `cluster` {}: {e}", cluster_path.display()))
        })?)?;
        return Ok(Box::new(move |out| {
            let hw = box_half_width(&cluster, box_factor);
            let field = dla_harmonic_field(&cluster, hw)?;
            let charges = dla_charges(&cluster, &field)?;
            let scales = dyadic_scales(cluster.radius());
            let tau = tau_boxcount(&charges, &qs, &scales)?;
            let f = legendre_tau_to_f(&tau)?;
            if emit.contains(&Emit::Csv) {
                out.write_with("tau.csv", |b| tau.write_csv(b))?;
                out.write_with("f.csv", |b| f.curve.write_csv(b))?;
            }
            let summary = json!({
                "particles": cluster.sites().len(),
                "scales": scales,
                "dimension": -tau.values[qs.iter().position(|&q| q == 0.0).unwrap_or(0)],
                "tau": tau.values,
            });
            if emit.contains(&Emit::Json) {
                out.write_json("summary.json", &summary)?;
            }
            Ok(summary)
        }));
    }
    let ens_path = p.path("ensemble")?;
    let qs = p.f64_list("qs", &[1.0, 2.0])?;
    let eps = p.f64_list("eps", &[0.1, 0.0562, 0.0316, 0.0178, 0.01])?;
    let angles = at_least_one(p, "angles", p.usize("angles", 256)?)?;
    let bootstrap = p.usize("bootstrap", 1000)?;
    let legendre = p.bool("legendre", false)?;
    let text = std::fs::read_to_string(&ens_path)
        .map_err(|e| config_err(format!("[spectrum] `ensemble` {}: {e}", ens_path.display())))?;
    let ens: EnsembleFile = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("[spectrum] `ensemble` {}: {e}", ens_path.display())))?;
    let base: PathBuf = ens_path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Box::new(move |out| {
        let opts = BetaOptions { angles, bootstrap, seed };
        let est = beta_estimate_with(ens.members, |i| ens.member(&base, i), &qs, &eps, opts)?;
        let curve = beta_curve(&est)?;
        if emit.contains(&Emit::Csv) {
            out.write_with("spectrum.csv", |b| curve.write_csv(b))?;
            if legendre {
                let f = legendre_beta_to_f(&curve)?;
                out.write_with("f.csv", |b| f.curve.write_csv(b))?;
            }
        }
        if emit.contains(&Emit::Json) {
            let m = AnalysisManifest {
                ensemble_size: ens.members,
                seed,
                q_grid: qs.clone(),
                scale_grid: eps.clone(),
                angles,
                bootstrap,
            };
            out.write_json("analysis.json", &m)?;
        }
        Ok(json!({ "estimates": est }))
    }))
}

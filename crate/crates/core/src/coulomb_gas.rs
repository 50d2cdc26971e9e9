//! Metropolis sampling of the normal-matrix eigenvalue gas (2D log-gas at
//! inverse temperature 2) and droplet statistics.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drivers::RngSeed;
use crate::error::{param, Error, Result};
use crate::hele_shaw::LaurentMap;
use crate::svg::Canvas;
use crate::tau_functions::kp_phase_shift;

/// Two-body interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `−2 log|z − z'|`.
    #[default]
    Plane,
    /// KP phase shift, the Coulomb potential of the upper half-plane with a
    /// grounded real axis. Particles live in `Im z > 0`.
    HalfPlane,
}

impl Kernel {
    fn pair(self, a: Complex64, b: Complex64) -> f64 {
        match self {
            Kernel::Plane => {
                let d = (a - b).norm_sqr();
                if d == 0.0 {
                    f64::INFINITY
                } else {
                    -d.ln()
                }
            }
            Kernel::HalfPlane => kp_phase_shift(a, b).unwrap_or(f64::INFINITY),
        }
    }

    fn admits(self, z: Complex64) -> bool {
        match self {
            Kernel::Plane => true,
            Kernel::HalfPlane => z.im > 0.0,
        }
    }
}

/// `V(z) = Σ_k (t_k z^k + t̄_k z̄^k)` with `t[k−1] = t_k`.
pub fn harmonic_potential(t: &[Complex64], z: Complex64) -> f64 {
    let mut zk = z;
    let mut v = 0.0;
    for c in t {
        v += 2.0 * (c * zk).re;
        zk *= z;
    }
    v
}

/// Radius of the hard wall that closes the sampling disk: twice the droplet
/// radius plus six edge widths.
pub fn sampling_radius(n: usize, hbar: f64) -> f64 {
    2.0 * (hbar * n as f64).sqrt() + 6.0 * hbar.sqrt()
}

#[derive(Debug, Clone)]
pub struct GasState {
    positions: Vec<Complex64>,
    hbar: f64,
    potential: Vec<Complex64>,
    kernel: Kernel,
    wall: f64,
    energy_cache: f64,
}

impl GasState {
    /// Checks `ħ > 0`, distinct points inside the sampling disk, and
    /// `Σ 2|t_k| R^k < R²/2` on the wall radius `R` so the quadratic
    /// confinement dominates.
    pub fn new(positions: Vec<Complex64>, hbar: f64, potential: Vec<Complex64>, kernel: Kernel) -> Result<Self> {
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(param("hbar", format!("must be positive, got {hbar}")));
        }
        if positions.is_empty() {
            return Err(param("positions", "need at least one particle"));
        }
        let wall = sampling_radius(positions.len(), hbar);
        let bound: f64 = potential
            .iter()
            .enumerate()
            .map(|(k, t)| 2.0 * t.norm() * wall.powi(k as i32 + 1))
            .sum();
        if !(bound < 0.5 * wall * wall) {
            return Err(param(
                "potential",
                format!("|V| bound {bound:.3e} is not below |z|²/2 = {:.3e} on the sampling disk", 0.5 * wall * wall),
            ));
        }
        for (i, z) in positions.iter().enumerate() {
            if !z.re.is_finite() || !z.im.is_finite() || z.norm() > wall || !kernel.admits(*z) {
                return Err(param("positions", format!("particle {i} at {z} is outside the sampling domain")));
            }
        }
        let energy_cache = energy_of(&positions, hbar, &potential, kernel);
        if !energy_cache.is_finite() {
            return Err(Error::Domain("coincident particles".into()));
        }
        Ok(Self {
            positions,
            hbar,
            potential,
            kernel,
            wall,
            energy_cache,
        })
    }

    /// `n` points uniform on the disk of radius `√(ħn)` (the upper half of it
    /// for the half-plane kernel).
    pub fn scattered(n: usize, hbar: f64, potential: Vec<Complex64>, kernel: Kernel, seed: RngSeed) -> Result<Self> {
        if n == 0 {
            return Err(param("n", "need at least one particle"));
        }
        let mut rng = seed.rng();
        let r0 = (hbar.max(0.0) * n as f64).sqrt();
        let span = match kernel {
            Kernel::Plane => TAU,
            Kernel::HalfPlane => PI,
        };
        let pts = (0..n)
            .map(|_| loop {
                let r = r0 * rng.random::<f64>().sqrt();
                let z = Complex64::from_polar(r, span * rng.random::<f64>());
                if kernel.admits(z) {
                    break z;
                }
            })
            .collect();
        Self::new(pts, hbar, potential, kernel)
    }

    pub fn positions(&self) -> &[Complex64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn potential(&self) -> &[Complex64] {
        &self.potential
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn wall(&self) -> f64 {
        self.wall
    }

    /// Cached energy, updated incrementally by the sampler.
    pub fn energy(&self) -> f64 {
        self.energy_cache
    }

    /// Replaces the cache with a full recomputation; returns the discrepancy.
    pub fn recompute(&mut self) -> f64 {
        let full = energy_of(&self.positions, self.hbar, &self.potential, self.kernel);
        let drift = (full - self.energy_cache).abs();
        self.energy_cache = full;
        drift
    }

    fn one_body(&self, z: Complex64) -> f64 {
        (z.norm_sqr() + harmonic_potential(&self.potential, z)) / self.hbar
    }

    /// Energy change when particle `i` moves to `z`.
    fn delta(&self, i: usize, z: Complex64) -> f64 {
        let old = self.positions[i];
        let mut d = self.one_body(z) - self.one_body(old);
        for (j, &p) in self.positions.iter().enumerate() {
            if j != i {
                d += self.kernel.pair(z, p) - self.kernel.pair(old, p);
            }
        }
        d
    }
}

/// `E = Σ_{i<j} pair(z_i, z_j) + (1/ħ) Σ_i (|z_i|² + V(z_i))`; `+∞` at
/// coincident points.
pub fn energy(state: &GasState) -> f64 {
    energy_of(&state.positions, state.hbar, &state.potential, state.kernel)
}

pub fn energy_of(positions: &[Complex64], hbar: f64, potential: &[Complex64], kernel: Kernel) -> f64 {
    let mut e = 0.0;
    for (i, &a) in positions.iter().enumerate() {
        e += (a.norm_sqr() + harmonic_potential(potential, a)) / hbar;
        for &b in &positions[i + 1..] {
            e += kernel.pair(a, b);
        }
    }
    e
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetropolisOptions {
    /// Recorded sweeps after tuning.
    pub sweeps: usize,
    /// Proposal standard deviation per coordinate; the starting point when tuning.
    pub proposal_scale: f64,
    /// Unrecorded burn-in sweeps that steer acceptance into 30–50%. The scale
    /// is frozen afterwards.
    pub tune_sweeps: usize,
    /// Keep every `thin`-th sweep.
    pub thin: usize,
    /// Full energy recomputation period, in sweeps.
    pub recompute_every: usize,
}

impl Default for MetropolisOptions {
    fn default() -> Self {
        Self {
            sweeps: 10_000,
            proposal_scale: 0.1,
            tune_sweeps: 1_000,
            thin: 10,
            recompute_every: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Chain {
    pub snapshots: Vec<Vec<Complex64>>,
    /// Sweep index of each snapshot.
    pub sweeps: Vec<usize>,
    /// Acceptance over the recorded sweeps.
    pub acceptance: f64,
    pub proposal_scale: f64,
    /// Acceptance fell below 1%.
    pub low_acceptance: bool,
    /// Largest gap between the incremental energy and a full recomputation.
    pub max_energy_drift: f64,
    pub state: GasState,
}

impl Chain {
    pub fn hbar(&self) -> f64 {
        self.state.hbar
    }

    /// Snapshots in the second half of the chain.
    pub fn equilibrated(&self) -> &[Vec<Complex64>] {
        &self.snapshots[self.snapshots.len() / 2..]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["sweep", "i", "x", "y"])?;
        for (s, snap) in self.sweeps.iter().zip(&self.snapshots) {
            for (i, z) in snap.iter().enumerate() {
                w.serialize((s, i, z.re, z.im))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn sweep(state: &mut GasState, scale: f64, rng: &mut impl Rng) -> usize {
    let mut accepted = 0;
    for i in 0..state.positions.len() {
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        let z = state.positions[i] + Complex64::new(dx, dy) * scale;
        if z.norm() > state.wall || !state.kernel.admits(z) {
            continue;
        }
        let d = state.delta(i, z);
        if d <= 0.0 || rng.random::<f64>() < (-d).exp() {
            state.positions[i] = z;
            state.energy_cache += d;
            accepted += 1;
        }
    }
    accepted
}

/// Single-particle Gaussian-proposal Metropolis chain for the density `e^{−E}`.
pub fn metropolis_run(mut state: GasState, opts: MetropolisOptions, seed: RngSeed) -> Result<Chain> {
    if opts.sweeps == 0 {
        return Err(param("sweeps", "must be at least 1"));
    }
    if opts.thin == 0 || opts.recompute_every == 0 {
        return Err(param("thin", "thinning and recompute periods must be at least 1"));
    }
    if !(opts.proposal_scale > 0.0) || !opts.proposal_scale.is_finite() {
        return Err(param("proposal_scale", format!("must be positive, got {}", opts.proposal_scale)));
    }
    let mut rng = seed.rng();
    let n = state.positions.len();
    let mut scale = opts.proposal_scale;
    let block = 20;
    let mut done = 0;
    while done < opts.tune_sweeps {
        let len = block.min(opts.tune_sweeps - done);
        let acc: usize = (0..len).map(|_| sweep(&mut state, scale, &mut rng)).sum();
        let rate = acc as f64 / (len * n) as f64;
        if rate > 0.5 {
            scale *= 1.25;
        } else if rate < 0.3 {
            scale /= 1.25;
        }
        done += len;
    }
    let mut max_drift = state.recompute();
    let mut accepted = 0;
    let mut snapshots = Vec::with_capacity(opts.sweeps / opts.thin);
    let mut sweeps = Vec::with_capacity(opts.sweeps / opts.thin);
    for s in 1..=opts.sweeps {
        accepted += sweep(&mut state, scale, &mut rng);
        if s % opts.recompute_every == 0 {
            max_drift = max_drift.max(state.recompute());
        }
        if s % opts.thin == 0 {
            snapshots.push(state.positions.clone());
            sweeps.push(s);
        }
    }
    max_drift = max_drift.max(state.recompute());
    let acceptance = accepted as f64 / (opts.sweeps * n) as f64;
    Ok(Chain {
        snapshots,
        sweeps,
        acceptance,
        proposal_scale: scale,
        low_acceptance: acceptance < 0.01,
        max_energy_drift: max_drift,
        state,
    })
}

/// Independent chains, chain `i` on stream `i` of `seed`.
pub fn metropolis_ensemble(states: Vec<GasState>, opts: MetropolisOptions, seed: RngSeed) -> Result<Vec<Chain>> {
    states
        .into_par_iter()
        .enumerate()
        .map(|(i, s)| metropolis_run(s, opts, seed.with_stream(i as u64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropletStats {
    /// Radial bin edges enclosing equal areas.
    pub edges: Vec<f64>,
    /// Normalized density `2πħ ⟨Σ_i δ(z − z_i)⟩` averaged over each annulus.
    pub density: Vec<f64>,
    /// Radius enclosing 99% of the mass.
    pub support_radius: f64,
    /// Snapshots used.
    pub samples: usize,
}

impl DropletStats {
    /// Largest relative deviation from the mean over bins lying inside `radius`.
    pub fn flatness(&self, radius: f64) -> Result<f64> {
        let inner: Vec<f64> = self
            .density
            .iter()
            .zip(&self.edges[1..])
            .filter(|(_, &r)| r <= radius)
            .map(|(&d, _)| d)
            .collect();
        if inner.is_empty() {
            return Err(param("radius", "no bin lies inside"));
        }
        let mean = inner.iter().sum::<f64>() / inner.len() as f64;
        Ok(inner.iter().map(|d| (d / mean - 1.0).abs()).fold(0.0, f64::max))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["r_inner", "r_outer", "density"])?;
        for (k, d) in self.density.iter().enumerate() {
            w.serialize((self.edges[k], self.edges[k + 1], d))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Radial profile and 99%-mass radius over the second half of the chain.
pub fn droplet_stats(chain: &Chain, bins: usize) -> Result<DropletStats> {
    if bins == 0 {
        return Err(param("bins", "must be at least 1"));
    }
    let snaps = chain.equilibrated();
    if snaps.is_empty() {
        return Err(param("chain", "no equilibrated snapshots"));
    }
    let mut radii: Vec<f64> = snaps.iter().flatten().map(|z| z.norm()).collect();
    radii.sort_by(f64::total_cmp);
    let r_max = radii[radii.len() - 1] * (1.0 + 1e-12);
    let edges: Vec<f64> = (0..=bins).map(|k| r_max * (k as f64 / bins as f64).sqrt()).collect();
    let mut counts = vec![0usize; bins];
    for r in &radii {
        let k = (((r / r_max).powi(2) * bins as f64) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let area = PI * r_max * r_max / bins as f64;
    let scale = 2.0 * PI * chain.hbar() / (snaps.len() as f64 * area);
    let idx = ((0.99 * radii.len() as f64).ceil() as usize).clamp(1, radii.len()) - 1;
    Ok(DropletStats {
        edges,
        density: counts.iter().map(|&c| c as f64 * scale).collect(),
        support_radius: radii[idx],
        samples: snaps.len(),
    })
}

/// Boundary estimate on `sectors` equal angular sectors about the origin:
/// `R(θ) = √(2⟨r²⟩)` over the particles in the sector, exact for a uniform
/// star-shaped droplet.
pub fn droplet_boundary(chain: &Chain, sectors: usize) -> Result<Vec<Complex64>> {
    if sectors < 3 {
        return Err(param("sectors", "need at least 3"));
    }
    let mut sum = vec![0.0; sectors];
    let mut count = vec![0usize; sectors];
    for z in chain.equilibrated().iter().flatten() {
        let a = z.arg().rem_euclid(TAU);
        let k = ((a / TAU * sectors as f64) as usize).min(sectors - 1);
        sum[k] += z.norm_sqr();
        count[k] += 1;
    }
    (0..sectors)
        .map(|k| {
            if count[k] == 0 {
                return Err(Error::Numeric(format!("sector {k} holds no particles")));
            }
            let theta = (k as f64 + 0.5) * TAU / sectors as f64;
            Ok(Complex64::from_polar((2.0 * sum[k] / count[k] as f64).sqrt(), theta))
        })
        .collect()
}

/// `k`-th Fourier coefficient of `|z(θ)|` over boundary points.
pub fn radius_harmonic(boundary: &[Complex64], k: i32) -> Complex64 {
    let s: Complex64 = boundary
        .iter()
        .map(|z| z.norm() * Complex64::from_polar(1.0, -(k as f64) * z.arg()))
        .sum();
    s / boundary.len() as f64
}

/// Disk of radius `√(ħn)`, the equal-area droplet of `n` charges at density `1/(πħ)`.
pub fn equal_area_circle(n: usize, hbar: f64) -> Result<LaurentMap> {
    LaurentMap::interior(Complex64::new(0.0, 0.0), (hbar * n as f64).sqrt(), vec![])
}

fn segment_distance(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let len = d.norm_sqr();
    let s = if len == 0.0 {
        0.0
    } else {
        (((p - a) * d.conj()).re / len).clamp(0.0, 1.0)
    };
    (p - (a + d * s)).norm()
}

fn polygon_distance(p: Complex64, poly: &[Complex64]) -> f64 {
    (0..poly.len())
        .map(|k| segment_distance(p, poly[k], poly[(k + 1) % poly.len()]))
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric Hausdorff distance between two closed polygons.
pub fn curve_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let ab = a.iter().map(|&p| polygon_distance(p, b)).fold(0.0, f64::max);
    let ba = b.iter().map(|&p| polygon_distance(p, a)).fold(0.0, f64::max);
    ab.max(ba)
}

/// Distance between the droplet boundary estimate and the map's boundary
/// curve, in units of the map's equal-area radius.
pub fn compare_to_hele_shaw(boundary: &[Complex64], f: &LaurentMap) -> Result<f64> {
    if boundary.len() < 3 {
        return Err(param("boundary", "need at least 3 points"));
    }
    let area = f.area();
    if !(area > 0.0) {
        return Err(param("f", "map encloses no area"));
    }
    Ok(curve_distance(boundary, &f.boundary(1024)) / (area / PI).sqrt())
}

/// Last snapshot as a scatter plot, with an optional boundary estimate and
/// map boundary drawn over it.
pub fn render_svg(chain: &Chain, boundary: Option<&[Complex64]>, map: Option<&LaurentMap>) -> String {
    let last = chain.snapshots.last().map_or(chain.state.positions(), |s| s.as_slice());
    let mut pts: Vec<Complex64> = last.to_vec();
    let curve = map.map(|f| f.boundary(512));
    pts.extend(boundary.unwrap_or(&[]));
    pts.extend(curve.iter().flatten());
    let mut c = Canvas::fit(600.0, &pts);
    let dot = 0.01 * pts.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-9);
    for &z in last {
        c.circle(z, dot, "#1f4e79", true);
    }
    if let Some(b) = boundary {
        c.polyline(b, "#c0392b", 1.5, true);
    }
    if let Some(k) = curve {
        c.polyline(&k, "#27ae60", 1.0, true);
    }
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64, y: f64) -> Complex64 {
        Complex64::new(x, y)
    }

    #[test]
    fn energy_examples() {
        let one = GasState::new(vec![c(0.0, 0.0)], 1.0, vec![], Kernel::Plane).unwrap();
        assert_eq!(energy(&one), 0.0);
        let two = GasState::new(vec![c(0.5, 0.0), c(-0.5, 0.0)], 1.0, vec![], Kernel::Plane).unwrap();
        assert!((energy(&two) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn translation_changes_only_confinement() {
        let pts = vec![c(0.1, 0.2), c(-0.3, 0.05), c(0.2, -0.4)];
        let s = c(0.07, -0.02);
        let moved: Vec<Complex64> = pts.iter().map(|z| z + s).collect();
        let hbar = 0.5;
        let e0 = energy_of(&pts, hbar, &[], Kernel::Plane);
        let e1 = energy_of(&moved, hbar, &[], Kernel::Plane);
        let conf = |p: &[Complex64]| p.iter().map(|z| z.norm_sqr()).sum::<f64>() / hbar;
        assert!(((e1 - conf(&moved)) - (e0 - conf(&pts))).abs() < 1e-13);
    }

    #[test]
    fn coincident_points_are_rejected() {
        assert!(GasState::new(vec![c(0.1, 0.0), c(0.1, 0.0)], 1.0, vec![], Kernel::Plane).is_err());
        assert_eq!(energy_of(&[c(0.1, 0.0), c(0.1, 0.0)], 1.0, &[], Kernel::Plane), f64::INFINITY);
    }

    #[test]
    fn strong_potentials_are_rejected() {
        assert!(GasState::scattered(16, 0.02, vec![c(0.0, 0.0), c(0.3, 0.0)], Kernel::Plane, RngSeed::new(1)).is_err());
        assert!(GasState::scattered(16, 0.02, vec![c(0.0, 0.0), c(0.05, 0.0)], Kernel::Plane, RngSeed::new(1)).is_ok());
    }

    #[test]
    fn tiny_proposals_are_accepted() {
        let s = GasState::scattered(8, 0.1, vec![], Kernel::Plane, RngSeed::new(3)).unwrap();
        let opts = MetropolisOptions {
            sweeps: 200,
            proposal_scale: 1e-7,
            tune_sweeps: 0,
            thin: 10,
            recompute_every: 50,
        };
        let ch = metropolis_run(s, opts, RngSeed::new(4)).unwrap();
        assert!(ch.acceptance > 0.999);
        assert_eq!(ch.snapshots.len(), 20);
    }

    #[test]
    fn tuning_lands_in_band_and_cache_tracks_energy() {
        let s = GasState::scattered(32, 0.05, vec![], Kernel::Plane, RngSeed::new(5)).unwrap();
        let opts = MetropolisOptions {
            sweeps: 2000,
            proposal_scale: 1.0,
            tune_sweeps: 600,
            thin: 20,
            recompute_every: 2000,
        };
        let ch = metropolis_run(s, opts, RngSeed::new(6)).unwrap();
        assert!(ch.acceptance > 0.25 && ch.acceptance < 0.55, "{}", ch.acceptance);
        assert!(ch.max_energy_drift < 1e-8, "{}", ch.max_energy_drift);
        assert!(!ch.low_acceptance);
    }

    #[test]
    fn half_plane_gas_stays_above_the_axis() {
        let s = GasState::scattered(10, 0.1, vec![], Kernel::HalfPlane, RngSeed::new(7)).unwrap();
        let ch = metropolis_run(s, MetropolisOptions { sweeps: 500, ..Default::default() }, RngSeed::new(8)).unwrap();
        assert!(ch.snapshots.iter().flatten().all(|z| z.im > 0.0));
        assert!(ch.max_energy_drift < 1e-8);
    }

    #[test]
    fn identical_curves_are_at_distance_zero() {
        let f = equal_area_circle(64, 0.02).unwrap();
        assert!(compare_to_hele_shaw(&f.boundary(1024), &f).unwrap() < 1e-15);
        let g = equal_area_circle(64, 0.025).unwrap();
        let d = compare_to_hele_shaw(&g.boundary(256), &f).unwrap();
        let expect = ((0.025f64 / 0.02).sqrt() - 1.0) * 1.0;
        assert!((d - expect).abs() < 1e-3, "{d} {expect}");
    }

    #[test]
    fn boundary_harmonics_of_an_ellipse() {
        let pts: Vec<Complex64> = (0..64)
            .map(|k| {
                let t = TAU * (k as f64 + 0.5) / 64.0;
                Complex64::from_polar(1.0 + 0.1 * (2.0 * t).cos(), t)
            })
            .collect();
        let h = radius_harmonic(&pts, 2);
        assert!((h.re - 0.05).abs() < 1e-12 && h.im.abs() < 1e-12);
    }
}

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::laplace::{LatticeField, SolverOptions};
use super::Aborted;
use crate::drivers::RngSeed;
use crate::error::{param, Error, Result};

/// Lattice site `(m, n)`.
pub type Site = (i32, i32);

const NEIGHBOURS: [Site; 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

fn shift((m, n): Site, (dm, dn): Site) -> Site {
    (m + dm, n + dn)
}

/// Occupied sites in order of attachment together with the set of their
/// unoccupied 4-neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeCluster {
    sites: Vec<Site>,
    occupied: HashSet<Site>,
    boundary: BTreeSet<Site>,
}

impl LatticeCluster {
    pub fn seed() -> Self {
        Self::from_sites(&[(0, 0)]).expect("single seed")
    }

    /// Builds a cluster from sites listed in attachment order.
    pub fn from_sites(sites: &[Site]) -> Result<Self> {
        if sites.is_empty() {
            return Err(param("sites", "cluster needs at least one site"));
        }
        let mut c = Self {
            sites: Vec::with_capacity(sites.len()),
            occupied: HashSet::with_capacity(sites.len()),
            boundary: BTreeSet::new(),
        };
        for &s in sites {
            if !c.occupied.insert(s) {
                return Err(Error::Format(format!("site {s:?} listed twice")));
            }
            c.sites.push(s);
        }
        for &s in &c.sites {
            for d in NEIGHBOURS {
                let t = shift(s, d);
                if !c.occupied.contains(&t) {
                    c.boundary.insert(t);
                }
            }
        }
        Ok(c)
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn boundary(&self) -> impl Iterator<Item = &Site> {
        self.boundary.iter()
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_boundary(&self, s: Site) -> bool {
        self.boundary.contains(&s)
    }

    pub fn is_occupied(&self, s: Site) -> bool {
        self.occupied.contains(&s)
    }

    /// Number of particles attached so far.
    pub fn step(&self) -> usize {
        self.sites.len()
    }

    /// Attaches a boundary site.
    pub fn attach(&mut self, s: Site) -> Result<()> {
        if !self.boundary.remove(&s) {
            return Err(Error::Domain(format!("site {s:?} is not on the cluster boundary")));
        }
        self.occupied.insert(s);
        self.sites.push(s);
        for d in NEIGHBOURS {
            let t = shift(s, d);
            if !self.occupied.contains(&t) {
                self.boundary.insert(t);
            }
        }
        Ok(())
    }

    /// Largest Euclidean distance of an occupied site from the origin.
    pub fn radius(&self) -> f64 {
        self.sites
            .iter()
            .map(|&(m, n)| ((m as f64).powi(2) + (n as f64).powi(2)).sqrt())
            .fold(0.0, f64::max)
    }

    pub(crate) fn radius_linf(&self) -> i32 {
        self.sites.iter().map(|&(m, n)| m.abs().max(n.abs())).max().unwrap_or(0)
    }

    /// CSV with columns `step, m, n`; steps count from 1.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "m", "n"])?;
        for (k, &(m, n)) in self.sites.iter().enumerate() {
            w.serialize((k + 1, m, n))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rows: Vec<(usize, i32, i32)> = Vec::new();
        for rec in csv::Reader::from_reader(reader).deserialize() {
            rows.push(rec?);
        }
        for (k, row) in rows.iter().enumerate() {
            if row.0 != k + 1 {
                return Err(Error::Format(format!("row {}: expected step {}, found {}", k + 1, k + 1, row.0)));
            }
        }
        let sites: Vec<Site> = rows.iter().map(|&(_, m, n)| (m, n)).collect();
        Self::from_sites(&sites)
    }
}

/// Normalized boundary charges keyed by site.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChargeMap(BTreeMap<Site, f64>);

impl ChargeMap {
    pub fn get(&self, s: Site) -> Option<f64> {
        self.0.get(&s).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        self.0.iter().map(|(&s, &q)| (s, q))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    pub fn min(&self) -> f64 {
        self.0.values().copied().fold(f64::INFINITY, f64::min)
    }

    /// Site selected by the cumulative charge at `u ∈ [0, 1)`.
    pub fn pick(&self, u: f64) -> Option<Site> {
        let target = u * self.total();
        let mut acc = 0.0;
        let mut last = None;
        for (&s, &q) in &self.0 {
            if q <= 0.0 {
                continue;
            }
            acc += q;
            last = Some(s);
            if acc > target {
                return last;
            }
        }
        last
    }
}

impl FromIterator<(Site, f64)> for ChargeMap {
    fn from_iter<I: IntoIterator<Item = (Site, f64)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Boundary charges: the discrete normal flux `Σ (P_b − P_j)` over free
/// neighbours `j` of each boundary site `b`, normalized to total one.
pub fn dla_charges(cluster: &LatticeCluster, field: &LatticeField) -> Result<ChargeMap> {
    let mut raw = Vec::with_capacity(cluster.boundary_len());
    for &b in cluster.boundary() {
        let pb = field
            .get(b)
            .ok_or_else(|| Error::BoxExhausted(format!("boundary site {b:?} lies outside the field box")))?;
        let mut flux = 0.0;
        for d in NEIGHBOURS {
            let j = shift(b, d);
            if cluster.is_occupied(j) || cluster.is_boundary(j) {
                continue;
            }
            let pj = field
                .get(j)
                .ok_or_else(|| Error::BoxExhausted(format!("site {j:?} lies outside the field box")))?;
            flux += pb - pj;
        }
        raw.push((b, flux));
    }
    let total: f64 = raw.iter().map(|&(_, q)| q).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numeric(format!("total boundary flux {total} is not positive")));
    }
    // the field is only known to the solver residual, so deep fjord sites
    // whose true charge is below it may come out slightly negative
    let floor = 1e-12_f64.max(100.0 * field.residual().max(0.0) / total);
    let mut out = BTreeMap::new();
    for (b, q) in raw {
        let q = q / total;
        if q < -floor {
            return Err(Error::Numeric(format!("negative charge {q:.3e} at {b:?}")));
        }
        out.insert(b, q.max(0.0));
    }
    Ok(ChargeMap(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DlaMode {
    ExactCharges,
    RandomWalker,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DlaOptions {
    pub solver: SolverOptions,
    /// The field box half-width is at least this multiple of the cluster radius.
    pub box_factor: f64,
    /// Growth stops with a box-exhaustion error past this cluster radius.
    pub max_radius: f64,
    /// Walkers start this far outside the cluster radius.
    pub launch_margin: f64,
    /// Walkers past this multiple of the launch radius are re-injected.
    pub kill_factor: f64,
}

impl Default for DlaOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            box_factor: 4.0,
            max_radius: 2000.0,
            launch_margin: 5.0,
            kill_factor: 100.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DlaRun {
    pub cluster: LatticeCluster,
    pub mode: DlaMode,
    pub seed: RngSeed,
    /// Total of the normalized charges used at each exact-mode step.
    pub charge_sums: Vec<f64>,
    /// Smallest charge at each exact-mode step.
    pub min_charges: Vec<f64>,
    /// Field and charges of the final cluster (exact mode).
    pub final_field: Option<LatticeField>,
    pub final_charges: Option<ChargeMap>,
}

pub fn dla_grow(n: usize, seed: RngSeed, mode: DlaMode) -> Result<DlaRun, Aborted<DlaRun>> {
    dla_grow_with(n, seed, mode, DlaOptions::default())
}

/// Box half-width for a cluster: `box_factor·(radius + 1)` rounded up to a
/// multiple of 16 so the multigrid hierarchy coarsens cleanly.
pub fn box_half_width(cluster: &LatticeCluster, box_factor: f64) -> i32 {
    let want = (box_factor * (cluster.radius() + 1.0)).ceil().max(16.0) as i32;
    (want + 15) / 16 * 16
}

pub fn dla_grow_with(n: usize, seed: RngSeed, mode: DlaMode, opts: DlaOptions) -> Result<DlaRun, Aborted<DlaRun>> {
    let mut run = DlaRun {
        cluster: LatticeCluster::seed(),
        mode,
        seed,
        charge_sums: Vec::new(),
        min_charges: Vec::new(),
        final_field: None,
        final_charges: None,
    };
    if n == 0 {
        return Err(Aborted {
            error: param("n_particles", "must be at least 1"),
            partial: run,
        });
    }
    let res = match mode {
        DlaMode::ExactCharges => grow_exact(&mut run, n, opts),
        DlaMode::RandomWalker => grow_walker(&mut run, n, opts),
    };
    match res {
        Ok(()) => Ok(run),
        Err(error) => Err(Aborted { error, partial: run }),
    }
}

fn grow_exact(run: &mut DlaRun, n: usize, opts: DlaOptions) -> Result<()> {
    let mut rng = run.seed.rng();
    let mut field: Option<LatticeField> = None;
    let mut half_width = 0;
    loop {
        let c = &run.cluster;
        if c.radius() > opts.max_radius {
            return Err(Error::BoxExhausted(format!(
                "cluster radius {:.1} exceeds the limit {}",
                c.radius(),
                opts.max_radius
            )));
        }
        half_width = half_width.max(box_half_width(c, opts.box_factor));
        let f = LatticeField::solve(c, half_width, field.as_ref(), opts.solver)?;
        let charges = dla_charges(c, &f)?;
        if c.step() == n {
            run.final_field = Some(f);
            run.final_charges = Some(charges);
            return Ok(());
        }
        run.charge_sums.push(charges.total());
        run.min_charges.push(charges.min());
        let u: f64 = rng.random();
        let site = charges
            .pick(u)
            .ok_or_else(|| Error::Numeric("no boundary site carries charge".into()))?;
        run.cluster.attach(site)?;
        field = Some(f);
    }
}

/// Off-lattice jumps: a walker at distance `d` beyond the cluster moves to a
/// uniform point on the circle of radius `d − radius − 2` around itself, which
/// is where a continuum walk would first cross it.
fn grow_walker(run: &mut DlaRun, n: usize, opts: DlaOptions) -> Result<()> {
    let mut rng = run.seed.rng();
    let g = (opts.max_radius.ceil() as i32) + 4;
    let side = (2 * g + 1) as usize;
    let mut occ = vec![false; side * side];
    let idx = |(m, n): Site| (n + g) as usize * side + (m + g) as usize;
    occ[idx((0, 0))] = true;
    let mut radius = 0.0_f64;
    let tau = std::f64::consts::TAU;
    while run.cluster.step() < n {
        if radius > opts.max_radius {
            return Err(Error::BoxExhausted(format!(
                "cluster radius {radius:.1} exceeds the limit {}",
                opts.max_radius
            )));
        }
        let launch = radius + opts.launch_margin;
        let kill = opts.kill_factor * launch;
        let start = |rng: &mut rand_chacha::ChaCha12Rng| {
            let a: f64 = rng.random::<f64>() * tau;
            ((launch * a.cos()).round() as i32, (launch * a.sin()).round() as i32)
        };
        let mut p = start(&mut rng);
        loop {
            let d = ((p.0 as f64).powi(2) + (p.1 as f64).powi(2)).sqrt();
            if d > kill {
                p = start(&mut rng);
                continue;
            }
            let gap = d - radius - 2.0;
            if gap > 1.0 {
                let a: f64 = rng.random::<f64>() * tau;
                p = (
                    (p.0 as f64 + gap * a.cos()).round() as i32,
                    (p.1 as f64 + gap * a.sin()).round() as i32,
                );
                continue;
            }
            if p.0.abs() < g && p.1.abs() < g {
                let touching = NEIGHBOURS.iter().any(|&dd| occ[idx(shift(p, dd))]);
                if touching && !occ[idx(p)] {
                    break;
                }
            }
            let k: usize = rng.random_range(0..4);
            p = shift(p, NEIGHBOURS[k]);
        }
        run.cluster.attach(p)?;
        occ[idx(p)] = true;
        radius = radius.max(((p.0 as f64).powi(2) + (p.1 as f64).powi(2)).sqrt());
    }
    Ok(())
}

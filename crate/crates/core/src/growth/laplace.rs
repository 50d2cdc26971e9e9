//! Five-point lattice Laplace solver for the DLA pressure field.
//!
//! Unknowns live on a square box `[-L, L]²`. Occupied and boundary sites of
//! the cluster carry `P = 0`, the outer box edge carries the continuum far field
//! `-(1/4π) log(m² + n²)`. The system is solved with conjugate gradients
//! preconditioned by a geometric multigrid V-cycle.

use std::f64::consts::PI;

use super::dla::{LatticeCluster, Site};
use crate::error::{param, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target for the largest five-point residual over free sites.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 5000,
        }
    }
}

/// Solved pressure field on the box `[-half_width, half_width]²`.
#[derive(Debug, Clone)]
pub struct LatticeField {
    half_width: i32,
    values: Vec<f64>,
    residual: f64,
    iterations: usize,
}

pub fn far_field(m: i32, n: i32) -> f64 {
    let r2 = (m as f64).powi(2) + (n as f64).powi(2);
    -(r2.ln()) / (4.0 * PI)
}

impl LatticeField {
    pub fn half_width(&self) -> i32 {
        self.half_width
    }

    fn side(&self) -> usize {
        (2 * self.half_width + 1) as usize
    }

    fn index(&self, (m, n): Site) -> Option<usize> {
        let l = self.half_width;
        if m.abs() > l || n.abs() > l {
            return None;
        }
        Some((n + l) as usize * self.side() + (m + l) as usize)
    }

    /// Field value at a site inside the box.
    pub fn get(&self, site: Site) -> Option<f64> {
        self.index(site).map(|i| self.values[i])
    }

    /// Largest five-point residual reached by the solver.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Builds a field from stored values (row-major, `n` outer) without solving.
    pub fn from_values(half_width: i32, values: Vec<f64>) -> Result<Self> {
        let side = (2 * half_width + 1) as usize;
        if half_width < 1 || values.len() != side * side {
            return Err(Error::Format(format!(
                "field of half-width {half_width} needs {} values, got {}",
                side * side,
                values.len()
            )));
        }
        Ok(Self {
            half_width,
            values,
            residual: f64::NAN,
            iterations: 0,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest five-point residual over sites that are neither cluster,
    /// boundary nor box edge.
    pub fn max_residual(&self, cluster: &LatticeCluster) -> f64 {
        let mask = build_mask(cluster, self.half_width);
        let r = residual(&self.values, &mask, self.side());
        r.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Solves the field for `cluster`, optionally warm-started from an earlier
    /// field (which may live on a smaller box).
    pub fn solve(
        cluster: &LatticeCluster,
        half_width: i32,
        warm: Option<&LatticeField>,
        opts: SolverOptions,
    ) -> Result<Self> {
        if half_width < 2 {
            return Err(param("box_radius", format!("must be at least 2, got {half_width}")));
        }
        let reach = cluster.radius_linf() + 1;
        if reach >= half_width {
            return Err(Error::BoxExhausted(format!(
                "cluster reaches |m|,|n| = {reach} but the box half-width is {half_width}"
            )));
        }
        let side = (2 * half_width + 1) as usize;
        let mask = build_mask(cluster, half_width);
        let mut x = vec![0.0; side * side];
        for n in -half_width..=half_width {
            for m in -half_width..=half_width {
                let i = (n + half_width) as usize * side + (m + half_width) as usize;
                let on_edge = m.abs() == half_width || n.abs() == half_width;
                x[i] = if on_edge {
                    far_field(m, n)
                } else if mask[i] {
                    0.0
                } else if let Some(v) = warm.and_then(|w| w.get((m, n))) {
                    v
                } else {
                    far_field(m, n).min(0.0)
                };
            }
        }
        let mut levels = Hierarchy::new(mask, side);
        let (iterations, residual) = pcg(&mut levels, &mut x, opts)?;
        Ok(Self {
            half_width,
            values: x,
            residual,
            iterations,
        })
    }
}

/// Solves the DLA pressure field on the box of the given half-width.
pub fn dla_harmonic_field(cluster: &LatticeCluster, box_radius: i32) -> Result<LatticeField> {
    LatticeField::solve(cluster, box_radius, None, SolverOptions::default())
}

fn build_mask(cluster: &LatticeCluster, l: i32) -> Vec<bool> {
    let side = (2 * l + 1) as usize;
    let mut mask = vec![false; side * side];
    let mut set = |(m, n): Site| {
        if m.abs() <= l && n.abs() <= l {
            mask[(n + l) as usize * side + (m + l) as usize] = true;
        }
    };
    for &s in cluster.sites() {
        set(s);
    }
    for &s in cluster.boundary() {
        set(s);
    }
    for k in 0..side {
        mask[k] = true;
        mask[(side - 1) * side + k] = true;
        mask[k * side] = true;
        mask[k * side + side - 1] = true;
    }
    // free pockets the cluster has sealed off from the box edge hold P = 0
    let mut reached = vec![false; side * side];
    let mut stack: Vec<usize> = Vec::new();
    for k in 0..side {
        for start in [side + k, (side - 2) * side + k, k * side + 1, k * side + side - 2] {
            if start < side * side && !mask[start] && !reached[start] {
                reached[start] = true;
                stack.push(start);
            }
        }
    }
    while let Some(k) = stack.pop() {
        for nb in [k - 1, k + 1, k - side, k + side] {
            if !mask[nb] && !reached[nb] {
                reached[nb] = true;
                stack.push(nb);
            }
        }
    }
    for (m, r) in mask.iter_mut().zip(&reached) {
        *m |= !*r;
    }
    mask
}

/// `Σ neighbours − 4 u` on free nodes, zero on masked ones.
fn residual(u: &[f64], mask: &[bool], side: usize) -> Vec<f64> {
    let mut r = vec![0.0; u.len()];
    for j in 1..side - 1 {
        for i in 1..side - 1 {
            let k = j * side + i;
            if !mask[k] {
                r[k] = u[k - 1] + u[k + 1] + u[k - side] + u[k + side] - 4.0 * u[k];
            }
        }
    }
    r
}

/// `A p = 4 p − Σ neighbours` with homogeneous values on masked nodes.
fn apply(p: &[f64], mask: &[bool], side: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for j in 1..side - 1 {
        for i in 1..side - 1 {
            let k = j * side + i;
            if !mask[k] {
                out[k] = 4.0 * p[k] - p[k - 1] - p[k + 1] - p[k - side] - p[k + side];
            }
        }
    }
}

struct Level {
    side: usize,
    mask: Vec<bool>,
    rhs: Vec<f64>,
    e: Vec<f64>,
    defect: Vec<f64>,
}

impl Level {
    fn new(side: usize, mask: Vec<bool>) -> Self {
        let n = side * side;
        Self {
            side,
            mask,
            rhs: vec![0.0; n],
            e: vec![0.0; n],
            defect: vec![0.0; n],
        }
    }

    fn smooth(&mut self, colour: usize) {
        let side = self.side;
        let (e, r, mask) = (&mut self.e, &self.rhs, &self.mask);
        for j in 1..side - 1 {
            let row = j * side;
            let mut i = 1 + (j + 1 + colour) % 2;
            while i < side - 1 {
                let k = row + i;
                if !mask[k] {
                    e[k] = 0.25 * (r[k] + e[k - 1] + e[k + 1] + e[k - side] + e[k + side]);
                }
                i += 2;
            }
        }
    }

    fn symmetric_sweep(&mut self) {
        self.smooth(0);
        self.smooth(1);
    }

    fn compute_defect(&mut self) {
        let side = self.side;
        let (e, r, mask, d) = (&self.e, &self.rhs, &self.mask, &mut self.defect);
        for j in 1..side - 1 {
            for i in 1..side - 1 {
                let k = j * side + i;
                d[k] = if mask[k] {
                    0.0
                } else {
                    r[k] - (4.0 * e[k] - e[k - 1] - e[k + 1] - e[k - side] - e[k + side])
                };
            }
        }
    }
}

const SWEEPS: usize = 3;

/// Multigrid V-cycle preconditioner with scratch buffers kept across cycles.
struct Hierarchy {
    levels: Vec<Level>,
}

impl Hierarchy {
    fn new(mask: Vec<bool>, side: usize) -> Self {
        let mut levels = vec![Level::new(side, mask)];
        loop {
            let fine = levels.last().expect("at least one level");
            if (fine.side - 1) % 2 != 0 || fine.side <= 9 {
                break;
            }
            let cs = (fine.side - 1) / 2 + 1;
            let mut cmask = vec![false; cs * cs];
            for cj in 0..cs {
                for ci in 0..cs {
                    let (fi, fj) = (2 * ci as isize, 2 * cj as isize);
                    let mut hit = false;
                    for dj in -1..=1 {
                        for di in -1..=1 {
                            let (x, y) = (fi + di, fj + dj);
                            if x < 0 || y < 0 || x >= fine.side as isize || y >= fine.side as isize {
                                continue;
                            }
                            hit |= fine.mask[y as usize * fine.side + x as usize];
                        }
                    }
                    cmask[cj * cs + ci] = hit;
                }
            }
            levels.push(Level::new(cs, cmask));
        }
        Self { levels }
    }

    fn mask(&self) -> &[bool] {
        &self.levels[0].mask
    }

    fn side(&self) -> usize {
        self.levels[0].side
    }

    fn precondition(&mut self, r: &[f64], z: &mut [f64]) {
        self.levels[0].rhs.copy_from_slice(r);
        self.vcycle(0);
        z.copy_from_slice(&self.levels[0].e);
    }

    fn vcycle(&mut self, l: usize) {
        let last = l + 1 == self.levels.len();
        let lev = &mut self.levels[l];
        lev.e.iter_mut().for_each(|v| *v = 0.0);
        if last {
            for _ in 0..20 {
                lev.symmetric_sweep();
            }
            for _ in 0..20 {
                lev.smooth(1);
                lev.smooth(0);
            }
            return;
        }
        for _ in 0..SWEEPS {
            lev.symmetric_sweep();
        }
        lev.compute_defect();
        {
            let (fine, coarse) = self.levels.split_at_mut(l + 1);
            let (f, c) = (&fine[l], &mut coarse[0]);
            let (side, cs) = (f.side, c.side);
            let rr = &f.defect;
            for cj in 1..cs - 1 {
                for ci in 1..cs - 1 {
                    let ck = cj * cs + ci;
                    if c.mask[ck] {
                        c.rhs[ck] = 0.0;
                        continue;
                    }
                    let k = 2 * cj * side + 2 * ci;
                    let edge = rr[k - 1] + rr[k + 1] + rr[k - side] + rr[k + side];
                    let corner = rr[k - side - 1] + rr[k - side + 1] + rr[k + side - 1] + rr[k + side + 1];
                    // full weighting times the h² ratio of the coarse grid
                    c.rhs[ck] = 4.0 * (rr[k] / 4.0 + edge / 8.0 + corner / 16.0);
                }
            }
        }
        self.vcycle(l + 1);
        let (fine, coarse) = self.levels.split_at_mut(l + 1);
        let (f, c) = (&mut fine[l], &coarse[0]);
        let (side, cs, ec) = (f.side, c.side, &c.e);
        for j in 1..side - 1 {
            let (cj, oj) = (j / 2, j % 2);
            for i in 1..side - 1 {
                let k = j * side + i;
                if f.mask[k] {
                    continue;
                }
                let (ci, oi) = (i / 2, i % 2);
                let b = cj * cs + ci;
                let v = match (oi, oj) {
                    (0, 0) => ec[b],
                    (1, 0) => 0.5 * (ec[b] + ec[b + 1]),
                    (0, 1) => 0.5 * (ec[b] + ec[b + cs]),
                    _ => 0.25 * (ec[b] + ec[b + 1] + ec[b + cs] + ec[b + cs + 1]),
                };
                f.e[k] += v;
            }
        }
        for _ in 0..SWEEPS {
            f.smooth(1);
            f.smooth(0);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn pcg(h: &mut Hierarchy, x: &mut [f64], opts: SolverOptions) -> Result<(usize, f64)> {
    let side = h.side();
    let mut r = residual(x, h.mask(), side);
    let mut res = max_abs(&r);
    if res < opts.tolerance {
        return Ok((0, res));
    }
    let mut z = vec![0.0; x.len()];
    h.precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; x.len()];
    for it in 1..=opts.max_iterations {
        apply(&p, h.mask(), side, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        res = 0.0;
        for ((xi, ri), (pi, qi)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&q)) {
            *xi += alpha * pi;
            *ri -= alpha * qi;
            res = res.max(ri.abs());
        }
        if res < opts.tolerance {
            // confirm against the true residual before stopping
            r = residual(x, h.mask(), side);
            res = max_abs(&r);
            if res < opts.tolerance {
                return Ok((it, res));
            }
            h.precondition(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        h.precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    let res = max_abs(&residual(x, h.mask(), side));
    if res < opts.tolerance {
        return Ok((opts.max_iterations, res));
    }
    Err(Error::Convergence(format!(
        "lattice solver stopped at residual {res:.3e} after {} iterations",
        opts.max_iterations
    )))
}

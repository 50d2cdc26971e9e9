//! Hele-Shaw dynamics of finite Laurent and polynomial conformal maps.
//!
//! Exterior maps `f = r w + Σ_{k≥0} u_k w^{-k}` send `|w| > 1` onto the
//! exterior of a bounded domain; interior maps `f = z₁ + r w + Σ_{l≥2} u_l w^l`
//! send the unit disk onto the domain. Both are evolved by the
//! Polubarinova–Kochina equation `{f, f̄} = 1`, under which the area enclosed
//! by the boundary grows at rate π.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::growth::Aborted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Exterior,
    Interior,
}

/// Conformal map with finitely many coefficients.
///
/// For interior maps `coeffs[0]` is the source point `z₁`, `coeffs[1]` is
/// always zero (that term is `r`), and `coeffs[l]` multiplies `w^l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentMap {
    r: f64,
    coeffs: Vec<Complex64>,
    orientation: Orientation,
}

/// Time derivative of a [`LaurentMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct MapVelocity {
    pub r_dot: f64,
    pub coeff_dots: Vec<Complex64>,
}

/// Two-sided finite Laurent series `Σ c_p w^p`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Laurent {
    pub terms: Vec<(i32, Complex64)>,
}

impl Laurent {
    pub fn eval(&self, w: Complex64) -> Complex64 {
        self.terms.iter().map(|&(p, c)| c * w.powi(p)).sum()
    }

    /// `w ∂_w` of the series at `w`.
    pub fn w_derivative(&self, w: Complex64) -> Complex64 {
        self.terms.iter().map(|&(p, c)| c * p as f64 * w.powi(p)).sum()
    }

    /// `conj(g(1/w̄))`, the reflected series.
    pub fn reflect(&self) -> Self {
        Self {
            terms: self.terms.iter().map(|&(p, c)| (-p, c.conj())).collect(),
        }
    }
}

fn circle(n: usize) -> impl Iterator<Item = Complex64> {
    (0..n).map(move |j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64))
}

impl LaurentMap {
    pub fn exterior(r: f64, coeffs: Vec<Complex64>) -> Result<Self> {
        Self::checked(r, coeffs, Orientation::Exterior)
    }

    /// Interior polynomial map `z₁ + r w + Σ_{l≥2} higher[l−2] w^l`.
    pub fn interior(z1: Complex64, r: f64, higher: Vec<Complex64>) -> Result<Self> {
        let mut coeffs = vec![z1, Complex64::new(0.0, 0.0)];
        coeffs.extend(higher);
        Self::checked(r, coeffs, Orientation::Interior)
    }

    fn checked(r: f64, coeffs: Vec<Complex64>, orientation: Orientation) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(param("r", format!("conformal radius must be positive, got {r}")));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(param("coeffs", "coefficients must be finite"));
        }
        if orientation == Orientation::Interior && coeffs.len() > 1 && coeffs[1] != Complex64::new(0.0, 0.0) {
            return Err(param("coeffs", "the linear term of an interior map is r"));
        }
        Ok(Self { r, coeffs, orientation })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Highest coefficient index `K`.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    fn power(&self, k: usize) -> i32 {
        match self.orientation {
            Orientation::Exterior => -(k as i32),
            Orientation::Interior => k as i32,
        }
    }

    /// Coefficient indices that move under the evolution.
    fn moving(&self) -> std::ops::Range<usize> {
        match self.orientation {
            Orientation::Exterior => 0..self.coeffs.len(),
            Orientation::Interior => 2.min(self.coeffs.len())..self.coeffs.len(),
        }
    }

    pub fn series(&self) -> Laurent {
        let mut terms = vec![(1, Complex64::new(self.r, 0.0))];
        for (k, &c) in self.coeffs.iter().enumerate() {
            if c != Complex64::new(0.0, 0.0) {
                terms.push((self.power(k), c));
            }
        }
        Laurent { terms }
    }

    pub fn eval(&self, w: Complex64) -> Complex64 {
        self.series().eval(w)
    }

    pub fn derivative(&self, w: Complex64) -> Complex64 {
        self.series().w_derivative(w) / w
    }

    /// Boundary curve `f(e^{iθ})` on `n` equispaced angles.
    pub fn boundary(&self, n: usize) -> Vec<Complex64> {
        let s = self.series();
        circle(n).map(|w| s.eval(w)).collect()
    }

    /// Area of the bounded domain enclosed by the boundary.
    pub fn area(&self) -> f64 {
        let s: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c.norm_sqr())
            .sum();
        match self.orientation {
            Orientation::Exterior => PI * (self.r * self.r - s),
            Orientation::Interior => PI * (self.r * self.r + s),
        }
    }

    /// `min |f_w| / r` over `n` boundary points; zero at a cusp.
    pub fn derivative_ratio(&self, n: usize) -> f64 {
        let s = self.series();
        circle(n).map(|w| s.w_derivative(w).norm()).fold(f64::INFINITY, f64::min) / self.r
    }

    /// The boundary sampled at `n` points is a positively oriented simple
    /// closed polygon.
    pub fn is_univalent(&self, n: usize) -> bool {
        let pts = self.boundary(n);
        signed_area(&pts) > 0.0 && !self_intersects(&pts)
    }

    pub fn advanced(&self, v: &MapVelocity, h: f64) -> Self {
        Self {
            r: self.r + h * v.r_dot,
            coeffs: self.coeffs.iter().zip(&v.coeff_dots).map(|(c, d)| c + d * h).collect(),
            orientation: self.orientation,
        }
    }
}

impl MapVelocity {
    pub fn zero(f: &LaurentMap) -> Self {
        Self {
            r_dot: 0.0,
            coeff_dots: vec![Complex64::new(0.0, 0.0); f.coeffs.len()],
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            r_dot: c * self.r_dot,
            coeff_dots: self.coeff_dots.iter().map(|d| d * c).collect(),
        }
    }

    fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        Self {
            r_dot: a * self.r_dot + b * other.r_dot,
            coeff_dots: self.coeff_dots.iter().zip(&other.coeff_dots).map(|(x, y)| x * a + y * b).collect(),
        }
    }

    /// The velocity as a series in `w`, using the powers of `f`.
    pub fn series(&self, f: &LaurentMap) -> Laurent {
        let mut terms = vec![(1, Complex64::new(self.r_dot, 0.0))];
        for (k, &c) in self.coeff_dots.iter().enumerate() {
            terms.push((f.power(k), c));
        }
        Laurent { terms }
    }
}

/// `{f, g} = w f_w g_t − w g_w f_t` sampled at `n` equispaced points of the
/// unit circle.
pub fn poisson_bracket(f: &Laurent, f_t: &Laurent, g: &Laurent, g_t: &Laurent, n: usize) -> Vec<Complex64> {
    circle(n)
        .map(|w| f.w_derivative(w) * g_t.eval(w) - g.w_derivative(w) * f_t.eval(w))
        .collect()
}

fn grid_size(f: &LaurentMap) -> usize {
    8 * (f.degree() + 2)
}

/// `max |{f, f̄} − 1|` over the projection grid.
pub fn pk_residual(f: &LaurentMap, v: &MapVelocity) -> f64 {
    let fs = f.series();
    let vs = v.series(f);
    poisson_bracket(&fs, &vs, &fs.reflect(), &vs.reflect(), grid_size(f).max(64))
        .into_iter()
        .map(|b| (b - 1.0).norm())
        .fold(0.0, f64::max)
}

/// Velocity solving `{f, f̄} = 1` in least squares on `8(K+1)` boundary points.
///
/// On the circle the bracket is `2 Re(w f_w conj(f_t))`, which is linear in
/// `(ṙ, Re u̇_k, Im u̇_k)`. Interior maps keep the source point fixed.
pub fn string_velocity(f: &LaurentMap) -> Result<MapVelocity> {
    let moving = f.moving();
    let cols = 1 + 2 * moving.len();
    let n = grid_size(f);
    let fs = f.series();
    let mut a = DMatrix::<f64>::zeros(n, cols);
    for (j, w) in circle(n).enumerate() {
        let big_w = fs.w_derivative(w);
        a[(j, 0)] = 2.0 * (big_w * w.conj()).re;
        for (c, k) in moving.clone().enumerate() {
            let e = w.powi(f.power(k)).conj();
            a[(j, 1 + 2 * c)] = 2.0 * (big_w * e).re;
            a[(j, 2 + 2 * c)] = 2.0 * (big_w * e).im;
        }
    }
    let b = DVector::<f64>::from_element(n, 1.0);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::Singular(format!(
            "string-equation projection has condition number {:.3e}",
            smax / smin
        )));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Singular(format!("least-squares solve failed: {e}")))?;
    let mut v = MapVelocity::zero(f);
    v.r_dot = x[0];
    for (c, k) in moving.enumerate() {
        v.coeff_dots[k] = Complex64::new(x[1 + 2 * c], x[2 + 2 * c]);
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Enclosed area grows.
    Expand,
    /// Time-reversed flow; ill-posed and only run when explicitly allowed.
    Contract,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Largest accepted string-equation residual.
    pub tolerance: f64,
    pub max_halvings: u32,
    /// Evolution halts once `min |f_w| / r` drops below this.
    pub cusp_threshold: f64,
    pub univalence_points: usize,
    pub direction: Direction,
    pub allow_ill_posed: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_halvings: 20,
            cusp_threshold: 1e-3,
            univalence_points: 2048,
            direction: Direction::Expand,
            allow_ill_posed: false,
        }
    }
}

/// Accepted states of an evolution, one per accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub maps: Vec<LaurentMap>,
    /// String-equation residual of each state.
    pub residuals: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &LaurentMap)> {
        Some((*self.times.last()?, self.maps.last()?))
    }

    /// CSV with columns `t, r, re_u0, im_u0, …`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let k = self.maps.first().map_or(0, |m| m.coeffs.len());
        let mut header = vec!["t".to_string(), "r".to_string()];
        for i in 0..k {
            header.push(format!("re_u{i}"));
            header.push(format!("im_u{i}"));
        }
        w.write_record(&header)?;
        for (t, m) in self.times.iter().zip(&self.maps) {
            let mut row = vec![format!("{t:e}"), format!("{:e}", m.r)];
            for c in &m.coeffs {
                row.push(format!("{:e}", c.re));
                row.push(format!("{:e}", c.im));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, orientation: Orientation) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(reader);
        let mut out = Trajectory {
            times: Vec::new(),
            maps: Vec::new(),
            residuals: Vec::new(),
        };
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("trajectory row {}: {e}", row + 1)))?;
            if vals.len() < 2 || vals.len() % 2 != 0 {
                return Err(Error::Format(format!("trajectory row {}: bad column count", row + 1)));
            }
            let coeffs = vals[2..].chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
            let m = LaurentMap::checked(vals[1], coeffs, orientation)
                .map_err(|e| Error::Format(format!("trajectory row {}: {e}", row + 1)))?;
            out.times.push(vals[0]);
            out.maps.push(m);
            out.residuals.push(f64::NAN);
        }
        Ok(out)
    }
}

/// Evolves `f` by `{f, f̄} = 1` for `steps` steps of size `dt`.
pub fn evolve_string(
    f: &LaurentMap,
    dt: f64,
    steps: usize,
    opts: EvolveOptions,
) -> Result<Trajectory, Aborted<Trajectory>> {
    evolve_string_with_rate(f, dt, steps, |_| 1.0, opts)
}

/// Evolves `f_t = q(t) V(f)`, where `V` solves the string equation; the total
/// flux is `∫ q dt`.
///
/// Steps are Heun (second order). A step whose result is not univalent, whose
/// velocity cannot be solved or whose residual exceeds the tolerance is retried
/// at half the size.
pub fn evolve_string_with_rate(
    f: &LaurentMap,
    dt: f64,
    steps: usize,
    rate: impl Fn(f64) -> f64,
    opts: EvolveOptions,
) -> Result<Trajectory, Aborted<Trajectory>> {
    let mut traj = Trajectory {
        times: Vec::new(),
        maps: Vec::new(),
        residuals: Vec::new(),
    };
    macro_rules! bail {
        ($e:expr) => {
            return Err(Aborted { error: $e, partial: traj })
        };
    }
    if !(dt > 0.0) || !dt.is_finite() {
        bail!(param("dt", format!("must be positive, got {dt}")));
    }
    if opts.direction == Direction::Contract && !opts.allow_ill_posed {
        bail!(param(
            "direction",
            "contraction is ill-posed; set allow_ill_posed to run it anyway"
        ));
    }
    if !f.is_univalent(opts.univalence_points) {
        bail!(Error::Domain("initial map is not univalent".into()));
    }
    let sign = match opts.direction {
        Direction::Expand => 1.0,
        Direction::Contract => -1.0,
    };
    let res0 = match string_velocity(f) {
        Ok(v) => pk_residual(f, &v),
        Err(e) => bail!(e),
    };
    traj.times.push(0.0);
    traj.maps.push(f.clone());
    traj.residuals.push(res0);

    let mut cur = f.clone();
    let mut t = 0.0;
    for k in 0..steps {
        let target = (k + 1) as f64 * dt;
        let mut halvings = 0;
        while t < target - 1e-12 * dt {
            let h = (dt / 2f64.powi(halvings as i32)).min(target - t);
            match heun_step(&cur, t, h, sign, &rate, opts) {
                Ok((next, res)) => {
                    t += h;
                    cur = next;
                    traj.times.push(t);
                    traj.maps.push(cur.clone());
                    traj.residuals.push(res);
                    let ratio = cur.derivative_ratio(opts.univalence_points);
                    if ratio < opts.cusp_threshold {
                        bail!(Error::Cusp {
                            t,
                            detail: format!("min |f_w|/r = {ratio:.3e}"),
                        });
                    }
                }
                Err(e) => {
                    halvings += 1;
                    if halvings > opts.max_halvings {
                        bail!(Error::Cusp {
                            t,
                            detail: format!("step rejected after {} halvings: {e}", opts.max_halvings),
                        });
                    }
                }
            }
        }
    }
    Ok(traj)
}

fn heun_step(
    f: &LaurentMap,
    t: f64,
    h: f64,
    sign: f64,
    rate: &impl Fn(f64) -> f64,
    opts: EvolveOptions,
) -> Result<(LaurentMap, f64)> {
    let q1 = sign * rate(t);
    let q2 = sign * rate(t + h);
    let v1 = string_velocity(f)?;
    let mid = f.advanced(&v1, h * q1);
    if !(mid.r > 0.0) {
        return Err(Error::Numeric("conformal radius left (0, ∞)".into()));
    }
    let v2 = string_velocity(&mid)?;
    let next = f.advanced(&v1.combine(q1 / 2.0, &v2, q2 / 2.0), h);
    if !(next.r > 0.0) || !next.r.is_finite() || next.coeffs.iter().any(|c| !c.norm().is_finite()) {
        return Err(Error::Numeric("state is not finite".into()));
    }
    if !next.is_univalent(opts.univalence_points) {
        return Err(Error::Domain("boundary self-intersects".into()));
    }
    let res = pk_residual(&next, &string_velocity(&next)?);
    if !(res < opts.tolerance) {
        return Err(Error::Numeric(format!("string residual {res:.3e}")));
    }
    Ok((next, res))
}

/// Area and harmonic moments of a domain.
///
/// For exterior maps `moments[k−1] = I_k = ∫_{ℂ∖Ω} z^{−k} dx dy`, from the
/// contour formula `I_k = −½ ∮ z̄ z^{−k} w f_w dθ`; the circle at infinity
/// contributes nothing, which also fixes the values for `k = 1, 2` (zero for a
/// centred circle). For interior maps `moments[k−1] = ∫_Ω z^k dx dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    /// `area / π`, which advances at the evolution time's rate.
    pub t_area: f64,
    pub area: f64,
    pub moments: Vec<Complex64>,
}

fn moments_at(f: &LaurentMap, m: usize, n: usize) -> Vec<Complex64> {
    let s = f.series();
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    let h = 2.0 * PI / n as f64;
    for w in circle(n) {
        let z = s.eval(w);
        let base = z.conj() * s.w_derivative(w) * h;
        match f.orientation {
            Orientation::Exterior => {
                let zi = 1.0 / z;
                let mut p = zi;
                for o in out.iter_mut() {
                    *o -= 0.5 * base * p;
                    p *= zi;
                }
            }
            Orientation::Interior => {
                let mut p = z;
                for o in out.iter_mut() {
                    *o += 0.5 * base * p;
                    p *= z;
                }
            }
        }
    }
    out
}

fn winding_about_origin(pts: &[Complex64]) -> f64 {
    let n = pts.len();
    (0..n).map(|j| (pts[(j + 1) % n] / pts[j]).arg()).sum::<f64>() / (2.0 * PI)
}

pub fn harmonic_moments(f: &LaurentMap, m: usize, quad_points: usize) -> Result<MomentVector> {
    if m == 0 {
        return Err(param("M", "need at least one moment"));
    }
    if quad_points < 8 {
        return Err(param("quad_points", "need at least 8 points"));
    }
    if f.orientation == Orientation::Exterior {
        let pts = f.boundary(quad_points.max(256));
        if pts.iter().any(|z| z.norm() == 0.0) || (winding_about_origin(&pts) - 1.0).abs() > 1e-6 {
            return Err(Error::Domain("the origin must lie inside the bounded domain".into()));
        }
    }
    let a = moments_at(f, m, quad_points);
    let b = moments_at(f, m, 2 * quad_points);
    for (k, (x, y)) in a.iter().zip(&b).enumerate() {
        if (x - y).norm() > 1e-8 * y.norm().max(1.0) {
            return Err(Error::Convergence(format!(
                "moment {} changes by {:.3e} when the quadrature is doubled",
                k + 1,
                (x - y).norm()
            )));
        }
    }
    let area = f.area();
    Ok(MomentVector {
        t_area: area / PI,
        area,
        moments: b,
    })
}

/// Largest relative drift `|I_k(t) − I_k(0)| / (|I_k(0)| + 10⁻¹²)` of each
/// moment along a trajectory.
pub fn richardson_invariance(traj: &Trajectory, m: usize) -> Result<Vec<f64>> {
    let first = traj
        .maps
        .first()
        .ok_or_else(|| param("trajectory", "trajectory is empty"))?;
    let n = 64 * (first.degree() + 2);
    let base = harmonic_moments(first, m, n)?.moments;
    let mut drift = vec![0.0_f64; m];
    for f in &traj.maps[1..] {
        let cur = harmonic_moments(f, m, n)?.moments;
        for k in 0..m {
            drift[k] = drift[k].max((cur[k] - base[k]).norm() / (base[k].norm() + 1e-12));
        }
    }
    Ok(drift)
}

/// Moments CSV rows `t, k, re, im` for every state of a trajectory.
pub fn write_moments_csv<W: Write>(traj: &Trajectory, m: usize, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "k", "re_I", "im_I"])?;
    for (t, f) in traj.times.iter().zip(&traj.maps) {
        let mv = harmonic_moments(f, m, 64 * (f.degree() + 2))?;
        for (k, c) in mv.moments.iter().enumerate() {
            w.write_record([format!("{t:e}"), (k + 1).to_string(), format!("{:e}", c.re), format!("{:e}", c.im)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Harmonic test functions `Re z^k` and `Im z^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarmonicTest {
    RePow(u32),
    ImPow(u32),
}

impl HarmonicTest {
    pub fn value(&self, z: Complex64) -> f64 {
        match *self {
            HarmonicTest::RePow(k) => z.powu(k).re,
            HarmonicTest::ImPow(k) => z.powu(k).im,
        }
    }

    /// `∂_z^j φ` at `z`.
    pub fn dz(&self, j: u32, z: Complex64) -> Complex64 {
        let k = match *self {
            HarmonicTest::RePow(k) | HarmonicTest::ImPow(k) => k,
        };
        if j == 0 {
            return Complex64::new(self.value(z), 0.0);
        }
        if j > k {
            return Complex64::new(0.0, 0.0);
        }
        let falling: f64 = ((k - j + 1)..=k).map(f64::from).product();
        let d = z.powu(k - j) * falling * 0.5;
        match self {
            HarmonicTest::RePow(_) => d,
            HarmonicTest::ImPow(_) => d / Complex64::new(0.0, 1.0),
        }
    }
}

/// Multipole operator `Q₀ + Σ_j (Q_j ∂_z^j + Q̄_j ∂_z̄^j)`; `q[j−1] = Q_j`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Multipole {
    pub q0: f64,
    pub q: Vec<Complex64>,
}

impl Multipole {
    pub fn apply(&self, phi: HarmonicTest, z1: Complex64) -> f64 {
        let mut s = self.q0 * phi.value(z1);
        for (j, qj) in self.q.iter().enumerate() {
            s += 2.0 * (qj * phi.dz(j as u32 + 1, z1)).re;
        }
        s
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (x + 1.0), 0.5 * w));
    }
    out
}

/// `∫_Ω φ dx dy` for an interior map by quadrature over the unit disk,
/// `∫_{|w|<1} φ(f(w)) |f'(w)|² dA_w`.
pub fn domain_integral(f: &LaurentMap, phi: HarmonicTest, radial: usize, angular: usize) -> Result<f64> {
    if f.orientation != Orientation::Interior {
        return Err(Error::Domain("domain quadrature needs an interior map".into()));
    }
    let s = f.series();
    let mut total = 0.0;
    for (rho, wr) in gauss_legendre_unit(radial) {
        let mut ring = 0.0;
        for j in 0..angular {
            let w = Complex64::from_polar(rho, 2.0 * PI * j as f64 / angular as f64);
            let jac = (s.w_derivative(w) / w).norm_sqr();
            ring += phi.value(s.eval(w)) * jac;
        }
        total += wr * rho * ring * 2.0 * PI / angular as f64;
    }
    Ok(total)
}

/// `|∫_Ω φ dx dy − Q̂[φ](z₁)|` for an interior map.
pub fn quadrature_check(f: &LaurentMap, phi: HarmonicTest, q: &Multipole, z1: Complex64) -> Result<f64> {
    let k = match phi {
        HarmonicTest::RePow(k) | HarmonicTest::ImPow(k) => k as usize,
    };
    let deg = (k + 2) * (f.degree() + 1) + 4;
    let coarse = domain_integral(f, phi, deg / 2 + 4, 2 * deg + 8)?;
    let fine = domain_integral(f, phi, deg + 8, 4 * deg + 16)?;
    if (coarse - fine).abs() > 1e-8 * fine.abs().max(1.0) {
        return Err(Error::Convergence(format!(
            "domain quadrature changes by {:.3e} under refinement",
            (coarse - fine).abs()
        )));
    }
    Ok((fine - q.apply(phi, z1)).abs())
}

fn signed_area(pts: &[Complex64]) -> f64 {
    let n = pts.len();
    (0..n).map(|j| (pts[j].conj() * pts[(j + 1) % n]).im).sum::<f64>() / 2.0
}

fn orient(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    ((b - a).conj() * (c - a)).im
}

fn segments_cross(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Whether the closed polygon through `pts` crosses itself, using a uniform
/// grid of buckets sized to the longest edge.
pub fn self_intersects(pts: &[Complex64]) -> bool {
    let n = pts.len();
    if n < 4 {
        return false;
    }
    let seg = |i: usize| (pts[i], pts[(i + 1) % n]);
    let cell = (0..n)
        .map(|i| (seg(i).1 - seg(i).0).norm())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for i in 0..n {
        let (a, b) = seg(i);
        let (x0, x1) = ((a.re.min(b.re) / cell).floor() as i64, (a.re.max(b.re) / cell).floor() as i64);
        let (y0, y1) = ((a.im.min(b.im) / cell).floor() as i64, (a.im.max(b.im) / cell).floor() as i64);
        for x in x0..=x1 {
            for y in y0..=y1 {
                buckets.entry((x, y)).or_default().push(i);
            }
        }
    }
    for list in buckets.values() {
        for (u, &i) in list.iter().enumerate() {
            for &j in &list[u + 1..] {
                let gap = (i as isize - j as isize).unsigned_abs();
                if gap <= 1 || gap == n - 1 {
                    continue;
                }
                let (a, b) = seg(i);
                let (c, d) = seg(j);
                if segments_cross(a, b, c, d) {
                    return true;
                }
            }
        }
    }
    false
}

//! Hirota N-soliton tau functions, their lattice-gas reading, and the
//! rational and Coxeter structures of integrable elliptic growth.

mod adler_moser;
mod coxeter;

pub use adler_moser::{adler_moser, adler_moser_sequence, recurrence_residual, AdlerMoserPoly, Poly};
pub use coxeter::{coxeter_weight, non_coxeter_weight, stratified_weight, MediumWeight};

use std::io::Write;

use num_complex::Complex;

use crate::error::{param, Error, Result};
use crate::scalar::Real;

/// Soliton momenta: positive reals for KdV, upper half-plane points for KP.
#[derive(Debug, Clone, PartialEq)]
pub enum Momenta<T> {
    Kdv(Vec<T>),
    Kp(Vec<Complex<T>>),
}

/// Momenta, phases and hierarchy times of an N-soliton solution.
///
/// KdV times are `(x, t₃, t₅, …)`; KP times are `(t₁, t₂, t₃, …)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolitonData<T> {
    pub momenta: Momenta<T>,
    pub phases: Vec<T>,
    pub times: Vec<T>,
}

impl<T: Real> SolitonData<T> {
    pub fn kdv(momenta: Vec<T>, phases: Vec<T>, times: Vec<T>) -> Result<Self> {
        let d = Self {
            momenta: Momenta::Kdv(momenta),
            phases,
            times,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn kp(points: Vec<Complex<T>>, phases: Vec<T>, times: Vec<T>) -> Result<Self> {
        let d = Self {
            momenta: Momenta::Kp(points),
            phases,
            times,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        match &self.momenta {
            Momenta::Kdv(k) => k.len(),
            Momenta::Kp(z) => z.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.phases.len() != n {
            return Err(param("phases", format!("expected {n} phases, got {}", self.phases.len())));
        }
        if n > 24 {
            return Err(param("momenta", format!("at most 24 solitons, got {n}")));
        }
        match &self.momenta {
            Momenta::Kdv(k) => {
                for (i, &a) in k.iter().enumerate() {
                    if !(a > T::zero()) {
                        return Err(param("momenta", "KdV momenta must be positive"));
                    }
                    if k[..i].contains(&a) {
                        return Err(param("momenta", "KdV momenta must be distinct"));
                    }
                }
            }
            Momenta::Kp(z) => {
                for (i, a) in z.iter().enumerate() {
                    if !(a.im > T::zero()) {
                        return Err(param("momenta", "KP points must lie in the upper half-plane"));
                    }
                    if z[..i].contains(a) {
                        return Err(param("momenta", "KP points must be distinct"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Phases `θ_l`.
    ///
    /// KdV: `θ = −φ − k x + k³ t₃ + k⁵ t₅ + …`. KP: `θ = φ + Σ_j c_j t_j` with
    /// `c_j = z^j + z̄^j` for odd `j` and `c_j = (z^j − z̄^j)/i = 2 Im z^j` for
    /// even `j`, which keeps the phases real.
    pub fn thetas(&self) -> Vec<T> {
        match &self.momenta {
            Momenta::Kdv(ks) => ks
                .iter()
                .zip(&self.phases)
                .map(|(&k, &phi)| {
                    let mut th = -phi;
                    for (j, &t) in self.times.iter().enumerate() {
                        let c = if j == 0 { -k } else { k.powi(2 * j as i32 + 1) };
                        th = th + c * t;
                    }
                    th
                })
                .collect(),
            Momenta::Kp(zs) => zs
                .iter()
                .zip(&self.phases)
                .map(|(&z, &phi)| {
                    let mut th = phi;
                    let two = T::lit(2.0);
                    for (j, &t) in self.times.iter().enumerate() {
                        let p = z.powi(j as i32 + 1);
                        let c = if j % 2 == 0 { two * p.re } else { two * p.im };
                        th = th + c * t;
                    }
                    th
                })
                .collect(),
        }
    }

    /// Phase shifts `G_{ll'}` (zero diagonal).
    pub fn phase_shifts(&self) -> Vec<Vec<T>> {
        let n = self.len();
        let mut g = vec![vec![T::zero(); n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let v = match &self.momenta {
                    Momenta::Kdv(k) => kdv_phase_shift(k[a], k[b]),
                    Momenta::Kp(z) => kp_phase_shift(z[a], z[b]).unwrap_or(T::infinity()),
                };
                g[a][b] = v;
                g[b][a] = v;
            }
        }
        g
    }
}

/// `G = −log((k − k')² / (k + k')²)`.
pub fn kdv_phase_shift<T: Real>(k: T, kp: T) -> T {
    -(((k - kp) * (k - kp)) / ((k + kp) * (k + kp))).ln()
}

/// KP phase shift `−log[(z − z')(z̄ − z̄') / ((z − z̄')(z̄ − z'))]`.
pub fn kp_phase_shift<T: Real>(z: Complex<T>, zp: Complex<T>) -> Result<T> {
    if z == zp {
        return Err(Error::Singular("KP phase shift at coincident points".into()));
    }
    let num = (z - zp) * (z.conj() - zp.conj());
    let den = (z - zp.conj()) * (z.conj() - zp);
    Ok(-(num / den).re.ln())
}

/// Coulomb potential of the upper half-plane, `−2 log|z − z'| + 2 log|z̄ − z'|`.
pub fn half_plane_potential<T: Real>(z: Complex<T>, zp: Complex<T>) -> Result<T> {
    if z == zp {
        return Err(Error::Singular("half-plane potential at coincident points".into()));
    }
    let two = T::lit(2.0);
    Ok(-two * (z - zp).norm().ln() + two * (z.conj() - zp).norm().ln())
}

/// Lattice-gas energy `Σ_{l<l'} G σ_l σ_{l'} + Σ θ_l σ_l` and particle count.
pub fn lattice_gas_energy<T: Real>(sigma: &[bool], g: &[Vec<T>], theta: &[T]) -> Result<(T, usize)> {
    let n = sigma.len();
    if theta.len() != n || g.len() != n || g.iter().any(|row| row.len() != n) {
        return Err(param("sigma", "σ, G and θ must have matching sizes"));
    }
    let mut e = T::zero();
    let mut count = 0;
    for a in 0..n {
        if !sigma[a] {
            continue;
        }
        count += 1;
        e = e + theta[a];
        for b in a + 1..n {
            if sigma[b] {
                e = e + g[a][b];
            }
        }
    }
    Ok((e, count))
}

/// Walks all `2^N` occupations depth first, calling `leaf` with the energy
/// and `Σ σ_l w_l` of each.
fn enumerate<T: Real>(g: &[Vec<T>], theta: &[T], weights: &[T], leaf: &mut impl FnMut(T, T)) {
    fn go<T: Real>(
        d: usize,
        field: &mut Vec<T>,
        g: &[Vec<T>],
        weights: &[T],
        e: T,
        a: T,
        leaf: &mut impl FnMut(T, T),
    ) {
        let n = field.len();
        if d == n {
            leaf(e, a);
            return;
        }
        go(d + 1, field, g, weights, e, a, leaf);
        let e1 = e + field[d];
        for j in d + 1..n {
            field[j] = field[j] + g[d][j];
        }
        go(d + 1, field, g, weights, e1, a + weights[d], leaf);
        for j in d + 1..n {
            field[j] = field[j] - g[d][j];
        }
    }
    let mut field = theta.to_vec();
    go(0, &mut field, g, weights, T::zero(), T::zero(), leaf);
}

/// `log τ` by log-sum-exp over the `2^N` Hirota terms.
pub fn log_tau<T: Real>(data: &SolitonData<T>) -> T {
    let g = data.phase_shifts();
    let theta = data.thetas();
    let zeros = vec![T::zero(); theta.len()];
    let mut m = T::neg_infinity();
    let mut s = T::zero();
    enumerate(&g, &theta, &zeros, &mut |e, _| {
        let x = -e;
        if x > m {
            s = s * (m - x).exp() + T::one();
            m = x;
        } else {
            s = s + (x - m).exp();
        }
    });
    m + s.ln()
}

/// `τ = Σ_σ exp(−Σ_{l<l'} G σσ' − Σ θ σ)`; overflows to infinity only when
/// `log τ` itself exceeds the floating range.
pub fn tau_hirota<T: Real>(data: &SolitonData<T>) -> T {
    log_tau(data).exp()
}

/// `𝒱 = −2 ∂²_x log τ` for KdV data, computed exactly as `−2 Var(a)` where
/// `a_σ = Σ σ_l k_l` is the x-slope of each term.
pub fn kdv_potential<T: Real>(data: &SolitonData<T>) -> Result<T> {
    let Momenta::Kdv(ks) = &data.momenta else {
        return Err(param("momenta", "KdV potential needs KdV data"));
    };
    let g = data.phase_shifts();
    let theta = data.thetas();
    let ltau = log_tau(data);
    let (mut m1, mut m2) = (T::zero(), T::zero());
    enumerate(&g, &theta, ks, &mut |e, a| {
        let p = (-e - ltau).exp();
        m1 = m1 + p * a;
        m2 = m2 + p * a * a;
    });
    Ok(-T::lit(2.0) * (m2 - m1 * m1))
}

/// Rectangle of `(x, t₃)` points for the KdV residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdvGrid {
    pub x: (f64, f64),
    pub t3: (f64, f64),
    pub dx: f64,
    pub dt: f64,
}

/// Largest `|𝒱_t + 𝒱_xxx − 6 𝒱 𝒱_x|` over the grid for a potential
/// `v(x, t)`, by second-order central differences.
pub fn kdv_residual_of(v: impl Fn(f64, f64) -> f64, grid: KdvGrid) -> Result<f64> {
    let KdvGrid { x, t3, dx, dt } = grid;
    if !(dx > 0.0 && dt > 0.0) || x.1 < x.0 || t3.1 < t3.0 {
        return Err(param("grid", "spacings must be positive and ranges ordered"));
    }
    let nx = ((x.1 - x.0) / dx).round() as usize;
    let nt = ((t3.1 - t3.0) / dt).round() as usize;
    let mut worst = 0.0_f64;
    for i in 0..=nx {
        let xi = x.0 + i as f64 * dx;
        for j in 0..=nt {
            let tj = t3.0 + j as f64 * dt;
            let f = |k: f64| v(xi + k * dx, tj);
            let (vm2, vm1, v0, vp1, vp2) = (f(-2.0), f(-1.0), f(0.0), f(1.0), f(2.0));
            let vx = (vp1 - vm1) / (2.0 * dx);
            let vxxx = (vp2 - 2.0 * vp1 + 2.0 * vm1 - vm2) / (2.0 * dx.powi(3));
            let vt = (v(xi, tj + dt) - v(xi, tj - dt)) / (2.0 * dt);
            let r = vt + vxxx - 6.0 * v0 * vx;
            if !r.is_finite() {
                return Err(Error::Numeric(format!("KdV residual is not finite at x={xi}, t3={tj}")));
            }
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

/// KdV residual of the N-soliton potential, with `times = (x, t₃)` replaced
/// by the grid coordinates.
pub fn kdv_residual(data: &SolitonData<f64>, grid: KdvGrid) -> Result<f64> {
    if !matches!(data.momenta, Momenta::Kdv(_)) {
        return Err(param("momenta", "KdV residual needs KdV data"));
    }
    let v = |x: f64, t: f64| {
        let mut d = data.clone();
        d.times = vec![x, t];
        kdv_potential(&d).unwrap_or(f64::NAN)
    };
    kdv_residual_of(v, grid)
}

/// Geometric momenta `k_l = C e^{2ħl}` (`l = 1..N`) and the pair potential
/// `U(l) = −2 log tanh|ħl|`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMomenta {
    pub momenta: Vec<f64>,
    pub hbar: f64,
}

impl GeometricMomenta {
    pub fn potential(&self, l: i64) -> f64 {
        -2.0 * (self.hbar * l.unsigned_abs() as f64).tanh().ln()
    }

    /// Largest `|G_{ll'} − U(l − l')|` over all pairs.
    pub fn max_identity_error(&self) -> f64 {
        let n = self.momenta.len();
        let mut worst = 0.0_f64;
        for a in 0..n {
            for b in a + 1..n {
                let g = kdv_phase_shift(self.momenta[a], self.momenta[b]);
                worst = worst.max((g - self.potential(a as i64 - b as i64)).abs());
            }
        }
        worst
    }
}

pub fn geometric_momenta(c: f64, hbar: f64, n: usize) -> Result<GeometricMomenta> {
    if !(c > 0.0) || !(hbar > 0.0) {
        return Err(param("hbar", "C and ħ must be positive"));
    }
    Ok(GeometricMomenta {
        momenta: (1..=n).map(|l| c * (2.0 * hbar * l as f64).exp()).collect(),
        hbar,
    })
}

/// τ grid CSV with columns `x, t3, log_tau, V` for KdV data.
pub fn write_tau_grid<W: Write>(data: &SolitonData<f64>, grid: KdvGrid, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "t3", "log_tau", "V"])?;
    let nx = ((grid.x.1 - grid.x.0) / grid.dx).round() as usize;
    let nt = ((grid.t3.1 - grid.t3.0) / grid.dt).round() as usize;
    for j in 0..=nt {
        for i in 0..=nx {
            let mut d = data.clone();
            let (x, t) = (grid.x.0 + i as f64 * grid.dx, grid.t3.0 + j as f64 * grid.dt);
            d.times = vec![x, t];
            let v = kdv_potential(&d)?;
            w.write_record([format!("{x:e}"), format!("{t:e}"), format!("{:e}", log_tau(&d)), format!("{v:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(data: &SolitonData<f64>) -> f64 {
        let n = data.len();
        let g = data.phase_shifts();
        let th = data.thetas();
        (0..1u32 << n)
            .map(|mask| {
                let s: Vec<bool> = (0..n).map(|l| mask >> l & 1 == 1).collect();
                (-lattice_gas_energy(&s, &g, &th).unwrap().0).exp()
            })
            .sum()
    }

    #[test]
    fn empty_and_single_soliton() {
        let d = SolitonData::<f64>::kdv(vec![], vec![], vec![0.3, 0.1]).unwrap();
        assert_eq!(tau_hirota(&d), 1.0);
        let (k, phi, x, t3): (f64, f64, f64, f64) = (1.3, 0.2, 0.4, 0.1);
        let d = SolitonData::kdv(vec![k], vec![phi], vec![x, t3]).unwrap();
        let theta = -phi - k * x + k.powi(3) * t3;
        assert!((tau_hirota(&d) - (1.0 + (-theta).exp())).abs() < 1e-14);
    }

    #[test]
    fn two_solitons_are_four_terms() {
        let (k1, k2): (f64, f64) = (0.8, 1.7);
        let d = SolitonData::kdv(vec![k1, k2], vec![0.1, -0.3], vec![0.25, 0.05]).unwrap();
        let th = d.thetas();
        let g12 = -((k1 - k2) * (k1 - k2) / ((k1 + k2) * (k1 + k2))).ln();
        let four = 1.0 + (-th[0]).exp() + (-th[1]).exp() + (-g12 - th[0] - th[1]).exp();
        assert!((tau_hirota(&d) - four).abs() < 1e-13 * four);
    }

    #[test]
    fn log_sum_exp_matches_naive_and_survives_overflow() {
        let ks: Vec<f64> = (0..10).map(|l| 0.5 + 0.15 * l as f64).collect();
        let d = SolitonData::kdv(ks.clone(), vec![0.0; 10], vec![0.7, 0.02]).unwrap();
        assert!((tau_hirota(&d) / naive(&d) - 1.0).abs() < 1e-12);
        let far = SolitonData::kdv(ks, vec![0.0; 10], vec![400.0, 0.0]).unwrap();
        let lt = log_tau(&far);
        assert!(lt.is_finite() && lt > 700.0);
    }

    #[test]
    fn kdv_potential_matches_closed_form_soliton() {
        let k = 1.2f64;
        for x in [-2.0f64, -0.3, 0.0, 0.9] {
            let d = SolitonData::kdv(vec![k], vec![0.0], vec![x, 0.0]).unwrap();
            let exact = -0.5 * k * k / ((k * x / 2.0).cosh().powi(2));
            assert!((kdv_potential(&d).unwrap() - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn single_soliton_residual_shrinks_quadratically() {
        let d = SolitonData::kdv(vec![1.0], vec![0.0], vec![0.0, 0.0]).unwrap();
        let grid = |h: f64| KdvGrid { x: (-3.0, 3.0), t3: (0.0, 0.5), dx: h, dt: h };
        let a = kdv_residual(&d, grid(1e-2)).unwrap();
        let b = kdv_residual(&d, grid(5e-3)).unwrap();
        assert!(a < 1e-4, "{a}");
        assert!(b < 2.6e-5, "{b}");
        assert!((a / b - 4.0).abs() < 0.2);
        let empty = SolitonData::kdv(vec![], vec![], vec![0.0, 0.0]).unwrap();
        assert_eq!(kdv_residual(&empty, grid(1e-2)).unwrap(), 0.0);
    }

    #[test]
    fn geometric_momenta_identity() {
        let gm = geometric_momenta(0.7, 0.3, 10).unwrap();
        assert!(gm.max_identity_error() < 1e-12);
        assert!((gm.potential(1) - gm.potential(-1)).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for l in 1..40 {
            let u = gm.potential(l);
            assert!(u < prev && u > 0.0);
            prev = u;
        }
        let half = geometric_momenta(1.0, 0.5, 2).unwrap();
        assert_eq!(half.potential(1), -2.0 * 0.5f64.tanh().ln());
    }

    #[test]
    fn kp_phase_shift_examples() {
        let i = Complex::new(0.0f64, 1.0);
        let g: f64 = kp_phase_shift(i, 2.0 * i).unwrap();
        assert!((g - 2.0 * 3f64.ln()).abs() < 1e-14);
        let near: f64 = kp_phase_shift(Complex::new(0.3, 1.0), Complex::new(-0.5, 1e-9)).unwrap();
        assert!(near.abs() < 1e-8);
        assert!(kp_phase_shift(i, i).is_err());
    }

    #[test]
    fn lattice_gas_trivial_cases() {
        let g = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(lattice_gas_energy(&[false, false], &g, &[0.3, 0.4]).unwrap(), (0.0, 0));
        assert_eq!(lattice_gas_energy(&[true, false], &g, &[0.0, 0.0]).unwrap(), (0.0, 1));
        assert_eq!(lattice_gas_energy(&[true, true], &g, &[0.5, 0.25]).unwrap(), (1.75, 2));
    }

    #[test]
    fn kp_thetas_are_real() {
        let z = Complex::new(0.4f64, 0.9);
        let d = SolitonData::kp(vec![z], vec![0.1], vec![0.2, 0.3, 0.4]).unwrap();
        let th = d.thetas()[0];
        let expect = 0.1 + 2.0 * z.re * 0.2 + 2.0 * (z * z).im * 0.3 + 2.0 * (z * z * z).re * 0.4;
        assert!((th - expect).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(SolitonData::kdv(vec![1.0, 1.0], vec![0.0, 0.0], vec![]).is_err());
        assert!(SolitonData::kdv(vec![-1.0], vec![0.0], vec![]).is_err());
        assert!(SolitonData::kp(vec![Complex::new(0.0, -1.0)], vec![0.0], vec![]).is_err());
        assert!(SolitonData::kdv(vec![1.0], vec![], vec![]).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let d = SolitonData::<f32>::kdv(vec![1.0, 2.0], vec![0.0, 0.0], vec![0.1, 0.0]).unwrap();
        let d64 = SolitonData::<f64>::kdv(vec![1.0, 2.0], vec![0.0, 0.0], vec![0.1, 0.0]).unwrap();
        assert!((tau_hirota(&d) as f64 - tau_hirota(&d64)).abs() < 1e-5 * tau_hirota(&d64));
    }
}

use num_complex::Complex64;

use super::Poly;
use crate::error::{param, Error, Result};

/// Permeability κ and porosity η of an integrable elliptic-growth medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediumWeight {
    pub kappa: f64,
    pub eta: f64,
    /// The point lies within 10⁻⁶ of the singular locus.
    pub near_singular: bool,
}

const NEAR: f64 = 1e-6;

/// Coxeter medium `κ = |z^l − z̄^l|^{−2m₁} |z^l + z̄^l|^{−2m₂}`, `η = 1`.
///
/// Moduli keep κ positive on every chamber.
pub fn coxeter_weight(l: u32, m1: u32, m2: u32, z: Complex64) -> Result<MediumWeight> {
    if l == 0 {
        return Err(param("l", "must be at least 1"));
    }
    let zl = z.powu(l);
    let a = (zl - zl.conj()).norm();
    let b = (zl + zl.conj()).norm();
    if (m1 > 0 && a == 0.0) || (m2 > 0 && b == 0.0) {
        return Err(Error::Singular(format!("z = {z} lies on the singular locus")));
    }
    let kappa = a.powi(-2 * m1 as i32) * b.powi(-2 * m2 as i32);
    Ok(MediumWeight {
        kappa,
        eta: 1.0,
        near_singular: (m1 > 0 && a < NEAR) || (m2 > 0 && b < NEAR),
    })
}

/// Non-Coxeter medium `κ = |x|^{−2m} |(2m+1) y² − x²|^{−2}`, `η = 1`.
pub fn non_coxeter_weight(m: u32, z: Complex64) -> Result<MediumWeight> {
    let (x, y) = (z.re, z.im);
    let a = x.abs();
    let b = ((2 * m + 1) as f64 * y * y - x * x).abs();
    if (m > 0 && a == 0.0) || b == 0.0 {
        return Err(Error::Singular(format!("z = {z} lies on the singular locus")));
    }
    Ok(MediumWeight {
        kappa: a.powi(-2 * m as i32) * b.powi(-2),
        eta: 1.0,
        near_singular: (m > 0 && a < NEAR) || b < NEAR,
    })
}

/// Stratified medium from consecutive Adler–Moser polynomials:
/// `ξ = p_n / p_{n−1}`, `κ η = ξ^{−2}`, `η = p_{n−1} S` with the porosity
/// factor `S` supplied by the caller.
pub fn stratified_weight(p_n: &Poly<f64>, p_prev: &Poly<f64>, s: &Poly<f64>, x: f64) -> Result<MediumWeight> {
    let (a, b, sv) = (p_n.eval(x), p_prev.eval(x), s.eval(x));
    if a == 0.0 || b == 0.0 || sv == 0.0 {
        return Err(Error::Singular(format!("x = {x} lies on the singular locus")));
    }
    let xi = a / b;
    let eta = b * sv;
    Ok(MediumWeight {
        kappa: 1.0 / (xi * xi * eta),
        eta,
        near_singular: a.abs() < NEAR || b.abs() < NEAR || sv.abs() < NEAR,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_case() {
        let z = Complex64::new(0.7, 0.4);
        let w = coxeter_weight(1, 1, 0, z).unwrap();
        assert!((w.kappa - 1.0 / (4.0 * 0.16)).abs() < 1e-12);
        assert_eq!(w.eta, 1.0);
    }

    #[test]
    fn reflection_invariance_and_laplacian_case() {
        for l in 1..5 {
            let z = Complex64::new(0.3, 0.8);
            let a = coxeter_weight(l, 2, 1, z).unwrap().kappa;
            let b = coxeter_weight(l, 2, 1, z.conj()).unwrap().kappa;
            assert!((a - b).abs() < 1e-12 * a);
            assert_eq!(coxeter_weight(l, 0, 0, z).unwrap().kappa, 1.0);
        }
    }

    #[test]
    fn singular_locus() {
        assert!(coxeter_weight(1, 1, 0, Complex64::new(1.0, 0.0)).is_err());
        assert!(coxeter_weight(1, 1, 0, Complex64::new(1.0, 1e-8)).unwrap().near_singular);
    }

    #[test]
    fn a2_case_of_non_coxeter_family() {
        let z = Complex64::new(0.5, 0.9);
        let w = non_coxeter_weight(1, z).unwrap();
        let expect = 0.25f64.powi(-1) * (3.0 * 0.81 - 0.25f64).powi(-2);
        assert!((w.kappa - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn stratified_product() {
        let p1 = Poly::new(vec![0.0, 1.0]);
        let p2 = Poly::new(vec![0.5, 0.0, 0.0, 1.0]);
        let s = Poly::new(vec![2.0]);
        let w = stratified_weight(&p2, &p1, &s, 1.3).unwrap();
        let xi = p2.eval(1.3) / 1.3;
        assert!((w.kappa * w.eta - xi.powi(-2)).abs() < 1e-12);
        assert!((w.eta - 2.6).abs() < 1e-12);
    }
}

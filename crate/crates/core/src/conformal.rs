//! Elementary slit maps, their composition, and the radial Loewner vector field.
//!
//! A [`CompositeMap`] is the iterated map `F_n = F_{n-1} ∘ f_n` sending the
//! exterior of the unit disk onto the exterior of a growing hull. Evaluation is
//! sequential, `O(n)` per point: the slit maps do not commute and no closed form
//! for the composition exists.

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A point of the `w` or `z` plane.
pub type ComplexPoint<T> = Complex<T>;

/// Anything that maps the exterior of the unit disk conformally and can report
/// its derivative.
pub trait ConformalMap<T: Real> {
    fn eval(&self, w: Complex<T>) -> Result<Complex<T>>;

    /// Value and derivative together; cheaper than two calls for composed maps.
    fn eval_with_derivative(&self, w: Complex<T>) -> Result<(Complex<T>, Complex<T>)>;

    fn derivative(&self, w: Complex<T>) -> Result<Complex<T>> {
        self.eval_with_derivative(w).map(|(_, d)| d)
    }
}

/// Principal square root without the polar round trip.
#[inline]
pub(crate) fn csqrt<T: Real>(z: Complex<T>) -> Complex<T> {
    let two = T::lit(2.0);
    let r = z.norm_sqr().sqrt();
    if r == T::zero() {
        return Complex::zero();
    }
    if z.re >= T::zero() {
        let t = ((r + z.re) / two).sqrt();
        Complex::new(t, z.im / (two * t))
    } else {
        let t = ((r - z.re) / two).sqrt();
        let re = z.im.abs() / (two * t);
        Complex::new(re, if z.im.is_sign_negative() { -t } else { t })
    }
}

#[inline]
fn finite<T: Real>(z: Complex<T>) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Tolerance below the unit circle still accepted as "on the circle".
#[inline]
pub fn domain_tolerance<T: Real>() -> T {
    T::epsilon().sqrt()
}

/// The map `f(w) = e^{iφ} h(e^{-iφ} w, δt)` that attaches a radial slit of
/// capacity `δt` at angle `φ` to the unit disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementarySlitMap<T> {
    angle: T,
    capacity: T,
    rot: Complex<T>,
    exp_t: T,
    exp_neg_t: T,
}

impl<T: Real> ElementarySlitMap<T> {
    /// Angles are reduced into `[0, 2π)`. A zero capacity is accepted and acts as
    /// the identity.
    pub fn new(angle: T, capacity: T) -> Result<Self> {
        if !angle.is_finite() {
            return Err(crate::error::param("angle", "must be finite"));
        }
        if !capacity.is_finite() || capacity < T::zero() {
            return Err(crate::error::param(
                "capacity",
                format!("must be finite and non-negative, got {capacity}"),
            ));
        }
        let two_pi = T::TAU();
        let mut a = angle % two_pi;
        if a < T::zero() {
            a = a + two_pi;
        }
        if a >= two_pi {
            a = T::zero();
        }
        Ok(Self {
            angle: a,
            capacity,
            rot: Complex::from_polar(T::one(), a),
            exp_t: capacity.exp(),
            exp_neg_t: (-capacity).exp(),
        })
    }

    pub fn angle(&self) -> T {
        self.angle
    }

    pub fn capacity(&self) -> T {
        self.capacity
    }

    /// Square root of `(w+1)^2 - 4 e^{-t} w` on the branch that behaves like
    /// `w + 1` at infinity. Away from `w = -1` this is `(w+1) sqrt(1 - u)` with
    /// the principal root; on the unit-circle arc where `1 - u` lands on the
    /// negative axis the sign follows the exterior limit.
    #[inline]
    fn branch_root(&self, w: Complex<T>) -> Complex<T> {
        let one = T::one();
        let four = T::lit(4.0);
        let a = w + one;
        let near = T::lit(1e-4) * self.exp_neg_t.sqrt().min(one);
        if a.norm_sqr() >= near * near {
            let arg = Complex::new(one, T::zero()) - w * (four * self.exp_neg_t) / (a * a);
            let mut s = csqrt(arg);
            if arg.re < T::zero() && arg.im.abs() <= T::lit(1e-12) * arg.norm() {
                let mag = (-arg.re).sqrt();
                let sign = if w.im < T::zero() { -one } else { one };
                s = Complex::new(T::zero(), sign * mag);
            }
            a * s
        } else {
            // analytic continuation through w = -1, where the root equals -2e^{-t/2}
            let d = a * a - w * (four * self.exp_neg_t);
            -csqrt(d)
        }
    }

    /// `h(w, t)` for the slit at angle zero.
    #[inline]
    fn h_value(&self, w: Complex<T>) -> Complex<T> {
        let one = T::one();
        let a = w + one;
        let r = self.branch_root(w);
        a * (a + r) * w.inv() * (self.exp_t / T::lit(2.0)) - one
    }

    /// `h(w, t)` and `h'(w, t)`.
    #[inline]
    fn h_with_derivative(&self, w: Complex<T>) -> (Complex<T>, Complex<T>) {
        let one = T::one();
        let two = T::lit(2.0);
        let a = w + one;
        let r = self.branch_root(w);
        let ar = a + r;
        let inv_w = w.inv();
        let value = a * ar * inv_w * (self.exp_t / two) - one;
        let dr = (a - Complex::new(two * self.exp_neg_t, T::zero())) / r;
        let deriv = ((ar + a * (dr + one)) * inv_w - a * ar * inv_w * inv_w) * (self.exp_t / two);
        (value, deriv)
    }

    fn check_domain(&self, w: Complex<T>) -> Result<()> {
        if !finite(w) {
            return Err(Error::Numeric(format!("non-finite argument {w}")));
        }
        let lo = T::one() - domain_tolerance::<T>();
        if w.norm_sqr() < lo * lo {
            return Err(Error::Domain(format!("|w| = {} is inside the unit disk", w.norm())));
        }
        Ok(())
    }

    /// Rejects boundary points within `1e-12` radians of the slit base, where the
    /// derivative diverges.
    fn check_base(&self, w: Complex<T>) -> Result<()> {
        let edge = T::one() + T::lit(1e-12);
        if self.capacity == T::zero() || w.norm_sqr() > edge * edge {
            return Ok(());
        }
        let base = (T::lit(2.0) * self.exp_neg_t - T::one()).max(-T::one()).min(T::one()).acos();
        let rel = (w * self.rot.conj()).arg().abs();
        if (rel - base).abs() < T::lit(1e-12) {
            return Err(Error::Singular(format!(
                "w = {w} sits on the base of the slit at angle {}",
                self.angle
            )));
        }
        Ok(())
    }

    pub fn eval(&self, w: Complex<T>) -> Result<Complex<T>> {
        self.eval_with_derivative(w).map(|(z, _)| z)
    }

    /// `f(w)` and `f'(w)`. The derivative may be infinite at the slit base and
    /// is reported as a numeric error there.
    pub fn eval_with_derivative(&self, w: Complex<T>) -> Result<(Complex<T>, Complex<T>)> {
        self.check_domain(w)?;
        if self.capacity == T::zero() {
            return Ok((w, Complex::one()));
        }
        self.check_base(w)?;
        let (hz, dh) = self.h_with_derivative(w * self.rot.conj());
        let z = hz * self.rot;
        if !finite(z) || !finite(dh) {
            return Err(Error::Numeric(format!("slit map not finite at w = {w}")));
        }
        Ok((z, dh))
    }

    /// Value only, skipping the derivative arithmetic and guards. Callers
    /// guarantee `|w| >= 1 - tol`.
    #[inline]
    pub(crate) fn eval_unchecked(&self, w: Complex<T>) -> Complex<T> {
        if self.capacity == T::zero() {
            return w;
        }
        self.h_value(w * self.rot.conj()) * self.rot
    }

    /// Tip of the slit, `f(e^{iφ})`.
    pub fn tip(&self) -> Complex<T> {
        let t = self.exp_t;
        let two = T::lit(2.0);
        let r = t * (two + two * (T::one() - self.exp_neg_t).sqrt()) - T::one();
        self.rot * r
    }
}

/// Ordered composition `F_n(w) = F_{n-1}(f_n(w))`, scaled by `exp(log_scale)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompositeMap<T> {
    slits: Vec<ElementarySlitMap<T>>,
    log_scale: T,
}

impl<T: Real> CompositeMap<T> {
    pub fn identity() -> Self {
        Self {
            slits: Vec::new(),
            log_scale: T::zero(),
        }
    }

    pub fn from_slits(slits: Vec<ElementarySlitMap<T>>) -> Self {
        Self {
            slits,
            log_scale: T::zero(),
        }
    }

    pub fn with_log_scale(mut self, log_scale: T) -> Self {
        self.log_scale = log_scale;
        self
    }

    pub fn push(&mut self, slit: ElementarySlitMap<T>) {
        self.slits.push(slit);
    }

    pub fn slits(&self) -> &[ElementarySlitMap<T>] {
        &self.slits
    }

    pub fn len(&self) -> usize {
        self.slits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slits.is_empty()
    }

    pub fn log_scale(&self) -> T {
        self.log_scale
    }

    pub fn total_capacity(&self) -> T {
        self.slits.iter().fold(T::zero(), |acc, s| acc + s.capacity)
    }

    /// The first `n` slits, keeping the scale.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            slits: self.slits[..n.min(self.slits.len())].to_vec(),
            log_scale: self.log_scale,
        }
    }

    /// Expected leading Laurent coefficient, `exp(Σδt + log_scale)`.
    pub fn capacity_coefficient(&self) -> T {
        (self.total_capacity() + self.log_scale).exp()
    }

    /// Numerical leading coefficient: the mean of `F(w)/w` over `n` equispaced
    /// points on `|w| = radius`. Lower Laurent terms average out exactly except
    /// for aliasing at order `radius^{-n}`.
    pub fn leading_coefficient(&self, radius: T, n: usize) -> Result<Complex<T>> {
        let mut acc = Complex::zero();
        let n_t = T::from_usize(n).expect("count");
        for j in 0..n {
            let th = T::TAU() * T::from_usize(j).expect("count") / n_t;
            let w = Complex::from_polar(radius, th);
            acc = acc + self.eval(w)? / w;
        }
        Ok(acc / n_t)
    }

    /// Value and derivative with the index of a failing slit attached to errors.
    pub fn eval_with_derivative(&self, w: Complex<T>) -> Result<(Complex<T>, Complex<T>)> {
        let tol = domain_tolerance::<T>();
        let mut z = w;
        let mut d = Complex::one();
        for (index, slit) in self.slits.iter().enumerate().rev() {
            let (nz, nd) = slit
                .eval_with_derivative(z)
                .map_err(|e| Error::Slit { index, source: Box::new(e) })?;
            d = d * nd;
            z = nz;
            let r2 = z.norm_sqr();
            if r2 < T::one() && r2 >= (T::one() - tol) * (T::one() - tol) {
                z = z / r2.sqrt();
            }
        }
        let scale = self.log_scale.exp();
        let out = (z * scale, d * scale);
        if !finite(out.0) || !finite(out.1) {
            return Err(Error::Numeric(format!("composite map not finite at w = {w}")));
        }
        Ok(out)
    }

    pub fn eval(&self, w: Complex<T>) -> Result<Complex<T>> {
        let tol = domain_tolerance::<T>();
        if !finite(w) {
            return Err(Error::Numeric(format!("non-finite argument {w}")));
        }
        if w.norm() < T::one() - tol {
            return Err(Error::Domain(format!("|w| = {} is inside the unit disk", w.norm())));
        }
        let mut z = w;
        for slit in self.slits.iter().rev() {
            z = slit.eval_unchecked(z);
            let r2 = z.norm_sqr();
            if r2 < T::one() {
                z = z / r2.sqrt();
            }
        }
        let out = z * self.log_scale.exp();
        if !finite(out) {
            return Err(Error::Numeric(format!("composite map not finite at w = {w}")));
        }
        Ok(out)
    }

    /// `F'(w)` by the chain rule. Requires `|w| > 1` strictly.
    pub fn eval_derivative(&self, w: Complex<T>) -> Result<Complex<T>> {
        if w.norm() <= T::one() {
            return Err(Error::Domain(format!(
                "derivative needs |w| > 1, got |w| = {}",
                w.norm()
            )));
        }
        self.eval_with_derivative(w).map(|(_, d)| d)
    }

    /// Boundary trace: images of `n` equispaced points on `|w| = 1 + offset`.
    pub fn trace(&self, n: usize, offset: T) -> Result<Vec<Complex<T>>> {
        let n_t = T::from_usize(n.max(1)).expect("count");
        (0..n)
            .map(|j| {
                let th = T::TAU() * T::from_usize(j).expect("count") / n_t;
                self.eval(Complex::from_polar(T::one() + offset, th))
            })
            .collect()
    }

    /// Map dump, columns `index, angle, capacity`. The scale is not part of
    /// the dump.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "angle", "capacity"])?;
        for (i, s) in self.slits.iter().enumerate() {
            w.write_record([i.to_string(), s.angle.as_f64().to_string(), s.capacity.as_f64().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut slits = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = || Error::Format(format!("map row {}: expected index, angle, capacity", row + 1));
            let index: usize = rec.get(0).and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
            if index != row {
                return Err(Error::Format(format!("map row {}: index {index} out of order", row + 1)));
            }
            let get = |i: usize| -> Result<f64> { rec.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(bad) };
            let slit = ElementarySlitMap::new(T::lit(get(1)?), T::lit(get(2)?))
                .map_err(|e| Error::Format(format!("map row {}: {e}", row + 1)))?;
            slits.push(slit);
        }
        Ok(Self::from_slits(slits))
    }
}

impl<T: Real> ConformalMap<T> for CompositeMap<T> {
    fn eval(&self, w: Complex<T>) -> Result<Complex<T>> {
        CompositeMap::eval(self, w)
    }

    fn eval_with_derivative(&self, w: Complex<T>) -> Result<(Complex<T>, Complex<T>)> {
        CompositeMap::eval_with_derivative(self, w)
    }
}

/// The unbounded whole-plane map `w ↦ 1/F(1/w)`, defined on the unit disk.
#[derive(Debug, Clone, Copy)]
pub struct InvertedMap<'a, T> {
    inner: &'a CompositeMap<T>,
}

impl<'a, T: Real> InvertedMap<'a, T> {
    pub fn new(inner: &'a CompositeMap<T>) -> Self {
        Self { inner }
    }
}

impl<T: Real> ConformalMap<T> for InvertedMap<'_, T> {
    fn eval(&self, w: Complex<T>) -> Result<Complex<T>> {
        Ok(self.inner.eval(w.inv())?.inv())
    }

    fn eval_with_derivative(&self, w: Complex<T>) -> Result<(Complex<T>, Complex<T>)> {
        let v = w.inv();
        let (z, dz) = self.inner.eval_with_derivative(v)?;
        Ok((z.inv(), dz / (z * z * w * w)))
    }
}

/// Velocity factor of the radial Loewner equation,
/// `w (w + e^{iL}) / (w - e^{iL})`, multiplying `∂F/∂w`.
pub fn loewner_rhs<T: Real>(w: Complex<T>, driver_value: T) -> Result<Complex<T>> {
    let e = Complex::from_polar(T::one(), driver_value);
    let den = w - e;
    if den.norm() < T::lit(1e-12) {
        return Err(Error::Singular(format!(
            "w = {w} coincides with the driving point e^(i{driver_value})"
        )));
    }
    Ok(w * (w + e) / den)
}

/// The whole-plane rescaling `e^{-T} F(w, T + t)`: sets `log_scale = -T`.
pub fn whole_plane_rescale<T: Real>(map: &CompositeMap<T>, burn_in: T) -> Result<CompositeMap<T>> {
    if !(burn_in >= T::zero()) {
        return Err(crate::error::param("T", "burn-in time must be non-negative"));
    }
    Ok(CompositeMap {
        slits: map.slits.clone(),
        log_scale: -burn_in,
    })
}

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::scalar::Field;

/// Dense polynomial in `x`; `coeffs[i]` multiplies `x^i`, no trailing zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<T> {
    coeffs: Vec<T>,
}

impl<T: Field> Poly<T> {
    pub fn new(mut coeffs: Vec<T>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn derivative(&self) -> Self {
        let c = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| c.clone() * from_usize::<T>(i))
            .collect();
        Self::new(c)
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![T::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Self::new(out)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let get = |p: &Self, i: usize| p.coeffs.get(i).cloned().unwrap_or_else(T::zero);
        Self::new((0..n).map(|i| get(self, i) + get(other, i)).collect())
    }

    pub fn scale(&self, c: T) -> Self {
        Self::new(self.coeffs.iter().map(|a| a.clone() * c.clone()).collect())
    }

    pub fn eval(&self, x: T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * x.clone() + c.clone())
    }
}

impl Poly<BigRational> {
    /// Floating-point copy of the coefficients.
    pub fn to_f64(&self) -> Poly<f64> {
        use num_traits::ToPrimitive;
        Poly::new(self.coeffs.iter().map(|c| c.to_f64().unwrap_or(f64::NAN)).collect())
    }
}

fn from_usize<T: Field>(n: usize) -> T {
    let mut v = T::zero();
    for _ in 0..n {
        v = v + T::one();
    }
    v
}

/// `p'' q − 2 p' q' + p q''`, the bilinear recurrence applied to `(p, q)`.
pub fn recurrence_residual<T: Field>(next: &Poly<T>, cur: &Poly<T>) -> Poly<T> {
    let (n1, n2) = (next.derivative(), next.derivative().derivative());
    let (c1, c2) = (cur.derivative(), cur.derivative().derivative());
    let two = T::one() + T::one();
    n2.mul(cur).add(&n1.mul(&c1).scale(-two)).add(&next.mul(&c2))
}

/// The `l`-th Adler–Moser polynomial with its parameters `t₃, t₅, …, t_{2l−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdlerMoserPoly<T> {
    pub l: usize,
    pub params: Vec<T>,
    pub poly: Poly<T>,
}

impl<T: Field> AdlerMoserPoly<T> {
    pub fn degree(&self) -> usize {
        self.poly.degree()
    }
}

#[derive(Serialize)]
struct PolyJson {
    l: usize,
    degree: usize,
    params: Vec<(String, String)>,
    coefficients: Vec<(String, String)>,
}

fn pair(c: &BigRational) -> (String, String) {
    (c.numer().to_string(), c.denom().to_string())
}

impl AdlerMoserPoly<BigRational> {
    /// JSON with the degree and `[numerator, denominator]` pairs from the
    /// constant term up.
    pub fn to_json(&self) -> Result<String> {
        let j = PolyJson {
            l: self.l,
            degree: self.degree(),
            params: self.params.iter().map(pair).collect(),
            coefficients: self.poly.coeffs().iter().map(pair).collect(),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(serde::Deserialize)]
        struct In {
            l: usize,
            params: Vec<(String, String)>,
            coefficients: Vec<(String, String)>,
        }
        let parse = |(n, d): &(String, String)| -> Result<BigRational> {
            let n: BigInt = n.parse().map_err(|e| Error::Format(format!("numerator {n}: {e}")))?;
            let d: BigInt = d.parse().map_err(|e| Error::Format(format!("denominator {d}: {e}")))?;
            if d == BigInt::from(0) {
                return Err(Error::Format("zero denominator".into()));
            }
            Ok(BigRational::new(n, d))
        };
        let v: In = serde_json::from_str(s)?;
        Ok(Self {
            l: v.l,
            params: v.params.iter().map(parse).collect::<Result<_>>()?,
            poly: Poly::new(v.coefficients.iter().map(parse).collect::<Result<_>>()?),
        })
    }
}

fn max_abs<'a, T: Field + 'a>(xs: impl IntoIterator<Item = &'a T>) -> T {
    xs.into_iter().fold(T::zero(), |m, x| if x.abs() > m { x.abs() } else { m })
}

/// Solves for the monic `p_{l+1}` of degree `(l+1)(l+2)/2` annihilating the
/// recurrence with `p_l`. Solutions differ by multiples of `p_{l−1}`; the
/// coefficient of `x^{deg p_{l−1}}` is set to `t`.
fn next_poly<T: Field>(prev: &Poly<T>, cur: &Poly<T>, l: usize, t: T) -> Result<Poly<T>> {
    let d = (l + 1) * (l + 2) / 2;
    let pinned = prev.degree();
    // unknowns: coefficients 0..d except `pinned`; x^d is 1
    let unknowns: Vec<usize> = (0..d).filter(|&i| i != pinned).collect();
    let mono = |i: usize| {
        let mut c = vec![T::zero(); i + 1];
        c[i] = T::one();
        Poly::new(c)
    };
    let rows = d + cur.degree() + 1;
    let column = |p: &Poly<T>| -> Vec<T> { (0..rows).map(|r| p.coeffs().get(r).cloned().unwrap_or_else(T::zero)).collect() };
    let cols: Vec<Vec<T>> = unknowns.iter().map(|&i| column(&recurrence_residual(&mono(i), cur))).collect();
    let fixed = recurrence_residual(&mono(d), cur).add(&recurrence_residual(&mono(pinned), cur).scale(t.clone()));
    let rhs: Vec<T> = column(&fixed).into_iter().map(|v| -v).collect();

    let scale = max_abs(cols.iter().flatten().chain(&rhs));

    // Gaussian elimination on the augmented system
    let m = unknowns.len();
    let mut a: Vec<Vec<T>> = (0..rows)
        .map(|r| {
            let mut row: Vec<T> = cols.iter().map(|c| c[r].clone()).collect();
            row.push(rhs[r].clone());
            row
        })
        .collect();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..m {
        let best = (row..rows)
            .filter(|&r| !a[r][col].is_zero())
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap_or(std::cmp::Ordering::Equal));
        let Some(p) = best else {
            return Err(Error::Singular(format!(
                "Adler–Moser level {}: coefficient of x^{} is not determined",
                l + 1,
                unknowns[col]
            )));
        };
        a.swap(row, p);
        let inv = T::one() / a[row][col].clone();
        for c in col..=m {
            a[row][c] = a[row][c].clone() * inv.clone();
        }
        for r in 0..rows {
            if r != row && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in col..=m {
                    let v = a[row][c].clone() * f.clone();
                    a[r][c] = a[r][c].clone() - v;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    for r in row..rows {
        if !a[r][m].negligible(&scale) {
            return Err(Error::Numeric(format!(
                "Adler–Moser level {}: recurrence system is inconsistent",
                l + 1
            )));
        }
    }
    let mut coeffs = vec![T::zero(); d + 1];
    coeffs[d] = T::one();
    coeffs[pinned] = t;
    for (r, &col) in pivots.iter().enumerate() {
        coeffs[unknowns[col]] = a[r][m].clone();
    }
    Ok(Poly::new(coeffs))
}

/// `p_0, …, p_l` for parameters `t₃, …, t_{2l−1}` (`params.len() = l − 1`).
pub fn adler_moser_sequence<T: Field>(l: usize, params: &[T]) -> Result<Vec<AdlerMoserPoly<T>>> {
    if l > 12 {
        return Err(param("l", format!("at most 12 in exact arithmetic, got {l}")));
    }
    if params.len() != l.saturating_sub(1) {
        return Err(param(
            "params",
            format!("level {l} needs {} parameters, got {}", l.saturating_sub(1), params.len()),
        ));
    }
    let mut out = vec![AdlerMoserPoly {
        l: 0,
        params: vec![],
        poly: Poly::new(vec![T::one()]),
    }];
    if l >= 1 {
        out.push(AdlerMoserPoly {
            l: 1,
            params: vec![],
            poly: Poly::new(vec![T::zero(), T::one()]),
        });
    }
    for k in 1..l {
        let p = next_poly(&out[k - 1].poly, &out[k].poly, k, params[k - 1].clone())?;
        let scale = max_abs(p.coeffs()) * max_abs(out[k].poly.coeffs()) * from_usize::<T>((p.degree() + 1).pow(2));
        if !recurrence_residual(&p, &out[k].poly).coeffs().iter().all(|c| c.negligible(&scale)) {
            return Err(Error::Numeric(format!("Adler–Moser level {}: residual is not zero", k + 1)));
        }
        out.push(AdlerMoserPoly {
            l: k + 1,
            params: params[..k].to_vec(),
            poly: p,
        });
    }
    Ok(out)
}

pub fn adler_moser<T: Field>(l: usize, params: &[T]) -> Result<AdlerMoserPoly<T>> {
    Ok(adler_moser_sequence(l, params)?.pop().expect("sequence holds p_0"))
}

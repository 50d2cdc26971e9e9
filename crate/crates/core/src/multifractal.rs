//! Multifractal spectra: integral means β(q), box-counting τ(q), Legendre
//! transforms, moment stationarity and the LLE generator.

use std::collections::HashMap;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{CompositeMap, ConformalMap, InvertedMap};
use crate::drivers::RngSeed;
use crate::error::{param, Error, Result};
use crate::growth::{grow_whole_plane, ChargeMap, WholePlaneOptions};
use crate::scalar::Real;

/// `γ(q, κ) = (κ + 4 − √((κ+4)² − 8qκ)) / 2κ`; NaN past the square-root domain.
pub fn sle_gamma(q: f64, kappa: f64) -> f64 {
    let a = kappa + 4.0;
    (a - (a * a - 8.0 * q * kappa).sqrt()) / (2.0 * kappa)
}

/// Integral-means spectrum of bounded whole-plane SLE_κ (`κ > 0`).
pub fn beta_exact_sle(q: f64, kappa: f64) -> f64 {
    let a = kappa + 4.0;
    if q >= 3.0 * a * a / (32.0 * kappa) {
        return q - a * a / (16.0 * kappa);
    }
    let g = sle_gamma(q, kappa);
    if q <= -1.0 - 3.0 * kappa / 8.0 {
        kappa * g * g / 2.0 - 2.0 * g - 1.0
    } else {
        kappa * g * g / 2.0
    }
}

/// `|κγ² − (κ+4)γ + 2q|` at `γ = γ(q, κ)`.
pub fn gamma_identity_check(q: f64, kappa: f64) -> f64 {
    let g = sle_gamma(q, kappa);
    (kappa * g * g - (kappa + 4.0) * g + 2.0 * q).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    Beta,
    Tau,
    F,
}

impl SpectrumKind {
    fn name(self) -> &'static str {
        match self {
            SpectrumKind::Beta => "beta",
            SpectrumKind::Tau => "tau",
            SpectrumKind::F => "f",
        }
    }
}

/// Sampled spectrum. The abscissa is `q` for β and τ and `α` for f. The scale
/// range is that of the regression (ε for β, box side for τ); zero when not
/// applicable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCurve {
    pub kind: SpectrumKind,
    pub abscissa: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl SpectrumCurve {
    pub fn new(kind: SpectrumKind, abscissa: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = abscissa.len();
        Self::with_stderr(kind, abscissa, values, vec![0.0; n], 0.0, 0.0)
    }

    pub fn with_stderr(
        kind: SpectrumKind,
        abscissa: Vec<f64>,
        values: Vec<f64>,
        stderr: Vec<f64>,
        scale_min: f64,
        scale_max: f64,
    ) -> Result<Self> {
        if abscissa.len() != values.len() || stderr.len() != values.len() {
            return Err(param("values", "abscissa, values and stderr lengths differ"));
        }
        if abscissa.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(param("abscissa", "must be strictly increasing"));
        }
        Ok(Self {
            kind,
            abscissa,
            values,
            stderr,
            scale_min,
            scale_max,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Columns `q, value, stderr, kind, scale_min, scale_max`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["q", "value", "stderr", "kind", "scale_min", "scale_max"])?;
        for k in 0..self.len() {
            w.serialize((
                self.abscissa[k],
                self.values[k],
                self.stderr[k],
                self.kind.name(),
                self.scale_min,
                self.scale_max,
            ))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Least-squares slope and its standard error.
fn regress(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    if x.len() < 3 {
        return (slope, 0.0);
    }
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (slope, (sse / (n - 2.0) / sxx).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaOptions {
    /// Equispaced angles on each circle `|w| = e^ε`.
    pub angles: usize,
    /// Bootstrap resamples of the ensemble.
    pub bootstrap: usize,
    /// Seed of the bootstrap resampling.
    pub seed: RngSeed,
}

impl Default for BetaOptions {
    fn default() -> Self {
        Self {
            angles: 256,
            bootstrap: 1000,
            seed: RngSeed::new(0),
        }
    }
}

/// `(1/n) Σ_θ |F′(e^{ε+iθ})|^q` for every `(q, ε)`, indexed `[q][ε]`.
pub fn member_moments<T: Real, M: ConformalMap<T>>(map: &M, qs: &[f64], eps: &[f64], angles: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![vec![0.0; eps.len()]; qs.len()];
    for (e, &ep) in eps.iter().enumerate() {
        let r = ep.exp();
        let mut logs = Vec::with_capacity(angles);
        for j in 0..angles {
            let th = std::f64::consts::TAU * (j as f64 + 0.5) / angles as f64;
            let w = Complex64::from_polar(r, th);
            let d = map.derivative(num_complex::Complex::new(T::lit(w.re), T::lit(w.im)))?;
            logs.push(d.norm().as_f64().ln());
        }
        for (k, &q) in qs.iter().enumerate() {
            out[k][e] = logs.iter().map(|l| (q * l).exp()).sum::<f64>() / angles as f64;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub q: f64,
    pub beta: f64,
    /// Bootstrap standard error over ensemble members.
    pub stderr: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub members: usize,
    /// `log ⟨moment⟩` at each ε, in the order given.
    pub log_moments: Vec<f64>,
}

fn check_eps(eps: &[f64]) -> Result<()> {
    if eps.len() < 2 {
        return Err(param("eps", "need at least two scales"));
    }
    if eps.iter().any(|&e| !(1e-3..=1e-1).contains(&e)) {
        return Err(param("eps", "scales must lie in [1e-3, 1e-1]"));
    }
    let mut s = eps.to_vec();
    s.sort_by(f64::total_cmp);
    if s.windows(2).any(|p| p[0] == p[1]) {
        return Err(param("eps", "scales must be distinct"));
    }
    Ok(())
}

/// β by regression of the log of the pooled moment on `−log ε`, with a
/// bootstrap over members. `moments[i][q][ε]` comes from [`member_moments`].
pub fn beta_from_moments(moments: &[Vec<Vec<f64>>], qs: &[f64], eps: &[f64], opts: BetaOptions) -> Result<Vec<BetaEstimate>> {
    check_eps(eps)?;
    let n = moments.len();
    if n == 0 {
        return Err(param("ensemble", "is empty"));
    }
    let x: Vec<f64> = eps.iter().map(|e| -e.ln()).collect();
    let slope = |pick: &[usize], k: usize| -> Result<(f64, Vec<f64>)> {
        let y: Vec<f64> = (0..eps.len())
            .map(|e| (pick.iter().map(|&i| moments[i][k][e]).sum::<f64>() / pick.len() as f64).ln())
            .collect();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite moment at q = {}", qs[k])));
        }
        Ok((regress(&x, &y).0, y))
    };
    let all: Vec<usize> = (0..n).collect();
    let mut rng = opts.seed.rng();
    let picks: Vec<Vec<usize>> = (0..opts.bootstrap)
        .map(|_| (0..n).map(|_| rng.random_range(0..n)).collect())
        .collect();
    let eps_min = eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let eps_max = eps.iter().cloned().fold(0.0, f64::max);
    (0..qs.len())
        .map(|k| {
            let (beta, y) = slope(&all, k)?;
            let boots: Vec<f64> = picks.iter().map(|p| slope(p, k).map(|s| s.0)).collect::<Result<_>>()?;
            let stderr = if boots.len() > 1 {
                let m = boots.iter().sum::<f64>() / boots.len() as f64;
                (boots.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (boots.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            Ok(BetaEstimate {
                q: qs[k],
                beta,
                stderr,
                eps_min,
                eps_max,
                members: n,
                log_moments: y,
            })
        })
        .collect()
}

/// β(q) of an ensemble produced member by member; `make(i)` builds member `i`.
/// Members are reduced to their moments as soon as they are built.
pub fn beta_estimate_with<F>(members: usize, make: F, qs: &[f64], eps: &[f64], opts: BetaOptions) -> Result<Vec<BetaEstimate>>
where
    F: Fn(usize) -> Result<CompositeMap<f64>> + Sync,
{
    if members < 100 {
        return Err(param("ensemble", format!("need at least 100 members, got {members}")));
    }
    check_eps(eps)?;
    let moments: Vec<Vec<Vec<f64>>> = (0..members)
        .into_par_iter()
        .map(|i| member_moments(&make(i)?, qs, eps, opts.angles))
        .collect::<Result<_>>()?;
    beta_from_moments(&moments, qs, eps, opts)
}

/// β(q) of a stored ensemble.
pub fn beta_estimate<T: Real, M: ConformalMap<T> + Sync>(ensemble: &[M], q: f64, eps: &[f64], opts: BetaOptions) -> Result<BetaEstimate> {
    if ensemble.len() < 100 {
        return Err(param("ensemble", format!("need at least 100 members, got {}", ensemble.len())));
    }
    check_eps(eps)?;
    let moments: Vec<Vec<Vec<f64>>> = ensemble
        .par_iter()
        .map(|m| member_moments(m, &[q], eps, opts.angles))
        .collect::<Result<_>>()?;
    Ok(beta_from_moments(&moments, &[q], eps, opts)?.remove(0))
}

/// β estimates as a curve.
pub fn beta_curve(estimates: &[BetaEstimate]) -> Result<SpectrumCurve> {
    let (lo, hi) = estimates
        .first()
        .map_or((0.0, 0.0), |e| (e.eps_min, e.eps_max));
    SpectrumCurve::with_stderr(
        SpectrumKind::Beta,
        estimates.iter().map(|e| e.q).collect(),
        estimates.iter().map(|e| e.beta).collect(),
        estimates.iter().map(|e| e.stderr).collect(),
        lo,
        hi,
    )
}

/// A Legendre transform and the abscissae whose extremum fell on the edge of
/// the input grid (widen the grid to resolve them).
#[derive(Debug, Clone, PartialEq)]
pub struct Legendre {
    pub curve: SpectrumCurve,
    pub at_edge: Vec<f64>,
}

/// Sorted, de-duplicated chord slopes of a sampled curve.
fn chord_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = x
        .windows(2)
        .zip(y.windows(2))
        .map(|(a, b)| (b[1] - b[0]) / (a[1] - a[0]))
        .collect();
    s.sort_by(f64::total_cmp);
    s.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
    s
}

/// `min_k g(x_k)` with a flag for a minimum at either end of the grid.
fn inf_over(n: usize, g: impl Fn(usize) -> f64) -> (f64, bool) {
    let mut best = (f64::INFINITY, 0);
    for k in 0..n {
        let v = g(k);
        if v < best.0 - 1e-12 * v.abs().max(1.0) {
            best = (v, k);
        }
    }
    // ties with an interior point count as interior
    let tied_inside = (1..n.saturating_sub(1)).any(|k| (g(k) - best.0).abs() <= 1e-12 * best.0.abs().max(1.0));
    (best.0, (best.1 == 0 || best.1 + 1 == n) && !tied_inside)
}

/// `f(α) = inf_q [q + α(β(q) + 1 − q)]` on the α grid `1/(1 − β′)` from chord
/// slopes `β′ < 1`.
pub fn legendre_beta_to_f(beta: &SpectrumCurve) -> Result<Legendre> {
    if beta.kind != SpectrumKind::Beta {
        return Err(param("curve", "expected a beta spectrum"));
    }
    if beta.len() < 2 {
        return Err(param("curve", "need at least two points"));
    }
    let (q, b) = (&beta.abscissa, &beta.values);
    let mut alphas: Vec<f64> = chord_slopes(q, b)
        .into_iter()
        .filter(|&s| s < 1.0 - 1e-12)
        .map(|s| 1.0 / (1.0 - s))
        .collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    if alphas.is_empty() {
        return Err(Error::Numeric("no chord slope below 1; f(α) is empty".into()));
    }
    let mut values = Vec::with_capacity(alphas.len());
    let mut at_edge = Vec::new();
    for &a in &alphas {
        let (v, edge) = inf_over(q.len(), |k| q[k] + a * (b[k] + 1.0 - q[k]));
        if edge {
            at_edge.push(a);
        }
        values.push(v);
    }
    Ok(Legendre {
        curve: SpectrumCurve::new(SpectrumKind::F, alphas, values)?,
        at_edge,
    })
}

/// `f(α) = inf_q [qα − τ(q)]` on the chord slopes of τ.
pub fn legendre_tau_to_f(tau: &SpectrumCurve) -> Result<Legendre> {
    if tau.kind != SpectrumKind::Tau || tau.len() < 2 {
        return Err(param("curve", "expected a tau spectrum with at least two points"));
    }
    let (q, t) = (&tau.abscissa, &tau.values);
    let alphas = chord_slopes(q, t);
    let mut values = Vec::with_capacity(alphas.len());
    let mut at_edge = Vec::new();
    for &a in &alphas {
        let (v, edge) = inf_over(q.len(), |k| q[k] * a - t[k]);
        if edge && q.len() > 2 {
            at_edge.push(a);
        }
        values.push(v);
    }
    Ok(Legendre {
        curve: SpectrumCurve::new(SpectrumKind::F, alphas, values)?,
        at_edge,
    })
}

/// `τ(q) = inf_α [qα − f(α)]` on the given q grid.
pub fn legendre_f_to_tau(f: &SpectrumCurve, qs: &[f64]) -> Result<SpectrumCurve> {
    if f.kind != SpectrumKind::F || f.is_empty() {
        return Err(param("curve", "expected a non-empty f spectrum"));
    }
    let values = qs
        .iter()
        .map(|&q| inf_over(f.len(), |k| q * f.abscissa[k] - f.values[k]).0)
        .collect();
    SpectrumCurve::new(SpectrumKind::Tau, qs.to_vec(), values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrip {
    /// `max |τ_back − τ|` on the q grid.
    pub discrepancy: f64,
    /// The input was not concave and came back as its concave hull.
    pub convexified: bool,
}

/// τ → f → τ on the input grid.
pub fn legendre_tau_f_roundtrip(tau: &SpectrumCurve) -> Result<RoundTrip> {
    let f = legendre_tau_to_f(tau)?;
    let back = legendre_f_to_tau(&f.curve, &tau.abscissa)?;
    let scale = tau.values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut disc = 0.0_f64;
    let mut lifted = false;
    for (a, b) in back.values.iter().zip(&tau.values) {
        disc = disc.max((a - b).abs());
        lifted |= a - b > 1e-9 * scale;
    }
    Ok(RoundTrip {
        discrepancy: disc,
        convexified: lifted,
    })
}

/// Dyadic box sides `1, 2, 4, …` up to `radius / 4`.
pub fn dyadic_scales(radius: f64) -> Vec<u32> {
    let mut out = vec![1];
    while ((out[out.len() - 1] * 2) as f64) <= radius / 4.0 {
        let next = out[out.len() - 1] * 2;
        out.push(next);
    }
    out
}

/// τ(q) from `Σ_j p_j^q ≍ l^{τ(q)}` over square boxes of side `l`.
///
/// The measure must be normalized to within 10⁻⁶; `τ(1) = 0` then follows and
/// is checked, never imposed.
pub fn tau_boxcount(charges: &ChargeMap, qs: &[f64], scales: &[u32]) -> Result<SpectrumCurve> {
    let mut sc: Vec<u32> = scales.iter().cloned().filter(|&l| l >= 1).collect();
    sc.sort();
    sc.dedup();
    if sc.len() < 3 {
        return Err(param("scales", format!("need at least 3 usable scales, got {}", sc.len())));
    }
    let total = charges.total();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Numeric(format!("measure is not normalized: total {total}")));
    }
    let x: Vec<f64> = sc.iter().map(|&l| (l as f64).ln()).collect();
    let mut logs = vec![Vec::with_capacity(sc.len()); qs.len()];
    for &l in &sc {
        let l = l as i32;
        let mut boxes: HashMap<(i32, i32), f64> = HashMap::new();
        for ((m, n), p) in charges.iter() {
            if p > 0.0 {
                *boxes.entry((m.div_euclid(l), n.div_euclid(l))).or_default() += p;
            }
        }
        let mut ps: Vec<f64> = boxes.into_values().collect();
        ps.sort_by(f64::total_cmp);
        for (k, &q) in qs.iter().enumerate() {
            logs[k].push(ps.iter().map(|p| p.powf(q)).sum::<f64>().ln());
        }
    }
    let (mut values, mut stderr) = (Vec::new(), Vec::new());
    for y in &logs {
        let (s, e) = regress(&x, y);
        values.push(s);
        stderr.push(e);
    }
    let mut order: Vec<usize> = (0..qs.len()).collect();
    order.sort_by(|&a, &b| qs[a].total_cmp(&qs[b]));
    let curve = SpectrumCurve::with_stderr(
        SpectrumKind::Tau,
        order.iter().map(|&k| qs[k]).collect(),
        order.iter().map(|&k| values[k]).collect(),
        order.iter().map(|&k| stderr[k]).collect(),
        sc[0] as f64,
        sc[sc.len() - 1] as f64,
    )?;
    if let Some(k) = curve.abscissa.iter().position(|&q| q == 1.0) {
        if curve.values[k].abs() > 1e-6 {
            return Err(Error::Numeric(format!("τ(1) = {} for a normalized measure", curve.values[k])));
        }
    }
    Ok(curve)
}

/// Bounded (`ρ = e^{−qt}⟨|F′|^q⟩`, `|w| > 1`) or unbounded (`ρ = e^{+qt}⟨|G′|^q⟩`
/// with `G(w) = 1/F(1/w)`, `|w| < 1`) whole-plane variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Bounded,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    /// Driver, burn-in and step; `t` is ignored.
    pub whole_plane: WholePlaneOptions,
    pub members: usize,
    pub seed: RngSeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stationarity {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Largest pairwise `|ρ_a − ρ_b| / √(se_a² + se_b²)`.
    pub max_z: f64,
}

/// Estimates `ρ(t)` at each listed time from one ensemble grown to the latest
/// time; member `i` uses stream `i`.
pub fn moment_stationarity(spec: EnsembleSpec, q: f64, w: Complex64, times: &[f64], variant: Variant) -> Result<Stationarity> {
    if times.is_empty() {
        return Err(param("times", "need at least one time"));
    }
    match variant {
        Variant::Bounded if !(w.norm() > 1.0) => return Err(param("w", "bounded case needs |w| > 1")),
        Variant::Unbounded if !(w.norm() < 1.0) || w.norm() == 0.0 => {
            return Err(param("w", "unbounded case needs 0 < |w| < 1"))
        }
        _ => {}
    }
    if spec.members < 2 {
        return Err(param("members", "need at least two"));
    }
    let t_max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let opts = WholePlaneOptions { t: t_max, ..spec.whole_plane };
    let samples: Vec<Vec<f64>> = (0..spec.members)
        .into_par_iter()
        .map(|i| {
            let run = grow_whole_plane::<f64>(opts, spec.seed.with_stream(i as u64))?;
            times
                .iter()
                .map(|&t| {
                    let map = run
                        .whole_plane_at(t)
                        .ok_or_else(|| param("times", format!("t = {t} is before the start of the run")))?;
                    let rot = map
                        .slits()
                        .last()
                        .map_or(Complex64::new(1.0, 0.0), |s| Complex64::from_polar(1.0, s.angle()));
                    let d = match variant {
                        Variant::Bounded => map.derivative(rot * w)?,
                        Variant::Unbounded => InvertedMap::new(&map).derivative(rot * w)?,
                    };
                    let sign = if variant == Variant::Bounded { -1.0 } else { 1.0 };
                    Ok((sign * q * t).exp() * d.norm().powf(q))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let n = samples.len() as f64;
    let mut rho = Vec::new();
    let mut stderr = Vec::new();
    for k in 0..times.len() {
        let m = samples.iter().map(|s| s[k]).sum::<f64>() / n;
        let v = samples.iter().map(|s| (s[k] - m).powi(2)).sum::<f64>() / (n - 1.0);
        rho.push(m);
        stderr.push((v / n).sqrt());
    }
    let mut max_z = 0.0_f64;
    for a in 0..times.len() {
        for b in a + 1..times.len() {
            let diff = (rho[a] - rho[b]).abs();
            let se = (stderr[a].powi(2) + stderr[b].powi(2)).sqrt();
            if diff > 0.0 {
                max_z = max_z.max(if se > 0.0 { diff / se } else { f64::INFINITY });
            }
        }
    }
    Ok(Stationarity {
        times: times.to_vec(),
        rho,
        stderr,
        max_z,
    })
}

/// Sign of the eigenvalue in `Lρ = ±qρ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorSign {
    /// `+q`, bounded whole-plane.
    Bounded,
    /// `−q`, unbounded whole-plane.
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kappa: f64,
    /// `(size, rate)`: jumps of `±size` at total rate `rate`, half each way.
    pub levy_atoms: Vec<(f64, f64)>,
    pub q: f64,
    pub sign: GeneratorSign,
}

impl GeneratorSpec {
    pub fn brownian(kappa: f64, q: f64) -> Self {
        Self {
            kappa,
            levy_atoms: vec![],
            q,
            sign: GeneratorSign::Bounded,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(param("kappa", format!("must be non-negative, got {}", self.kappa)));
        }
        if self.levy_atoms.iter().any(|&(s, r)| !(r >= 0.0) || !s.is_finite() || !r.is_finite()) {
            return Err(param("levy_atoms", "rates must be non-negative and sizes finite"));
        }
        Ok(())
    }

    /// The eigenvalue `±q`.
    pub fn eigenvalue(&self) -> f64 {
        match self.sign {
            GeneratorSign::Bounded => self.q,
            GeneratorSign::Unbounded => -self.q,
        }
    }
}

/// Test function `r^p Σ_m (a_m cos mφ + b_m sin mφ)` with analytic derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTest {
    pub power: f64,
    /// `(m, a_m, b_m)`.
    pub terms: Vec<(i32, f64, f64)>,
}

impl TrigTest {
    pub fn value(&self, r: f64, phi: f64) -> f64 {
        r.powf(self.power)
            * self
                .terms
                .iter()
                .map(|&(m, a, b)| a * (m as f64 * phi).cos() + b * (m as f64 * phi).sin())
                .sum::<f64>()
    }

    fn d_phi(&self, r: f64, phi: f64, order: u32) -> f64 {
        r.powf(self.power)
            * self
                .terms
                .iter()
                .map(|&(m, a, b)| {
                    let m = m as f64;
                    let (c, s) = ((m * phi).cos(), (m * phi).sin());
                    match order {
                        1 => m * (b * c - a * s),
                        _ => -m * m * (a * c + b * s),
                    }
                })
                .sum::<f64>()
    }
}

/// `η̂ρ = −(κ/2)∂²_φρ + Σ_atoms (rate/2) Σ_± (ρ(φ) − ρ(φ ± size))`.
pub fn eta_hat(spec: &GeneratorSpec, rho: &TrigTest, r: f64, phi: f64) -> Result<f64> {
    spec.validate()?;
    let base = rho.value(r, phi);
    let jumps: f64 = spec
        .levy_atoms
        .iter()
        .map(|&(s, rate)| 0.5 * rate * (2.0 * base - rho.value(r, phi + s) - rho.value(r, phi - s)))
        .sum();
    Ok(-0.5 * spec.kappa * rho.d_phi(r, phi, 2) + jumps)
}

/// `L[ρ] = −η̂ρ + w(w+1)/(w−1) ∂_wρ + c.c. − qρ/(w−1)² − qρ/(w̄−1)² + qρ`
/// at `w = r e^{iφ}`.
pub fn apply_generator(spec: &GeneratorSpec, rho: &TrigTest, w: Complex64) -> Result<f64> {
    if (w - 1.0).norm() < 1e-12 {
        return Err(Error::Singular("the generator is singular at w = 1".into()));
    }
    let (r, phi) = (w.norm(), w.arg());
    let eta = eta_hat(spec, rho, r, phi)?;
    let val = rho.value(r, phi);
    // w∂_w = (r∂_r − i∂_φ)/2 on functions of (r, φ)
    let w_dw = Complex64::new(rho.power * val, -rho.d_phi(r, phi, 1)) * 0.5;
    let drift = 2.0 * ((w + 1.0) / (w - 1.0) * w_dw).re;
    let inv = (w - 1.0).powi(-2);
    let potential = spec.q * (1.0 - 2.0 * inv.re);
    Ok(-eta + drift + potential * val)
}

/// Provenance of a spectrum run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisManifest {
    pub ensemble_size: usize,
    pub seed: RngSeed,
    pub q_grid: Vec<f64>,
    pub scale_grid: Vec<f64>,
    pub angles: usize,
    pub bootstrap: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::ElementarySlitMap;
    use crate::growth::LatticeCluster;

    #[test]
    fn exact_spectrum_examples() {
        assert_eq!(beta_exact_sle(0.0, 3.0), 0.0);
        let g = (10.0 - 52f64.sqrt()) / 12.0;
        assert!((beta_exact_sle(1.0, 6.0) - 3.0 * g * g).abs() < 1e-15);
        assert!((beta_exact_sle(1.0, 6.0) - 0.16205).abs() < 1e-5);
        let q0 = 3.0 * 36.0 / 64.0;
        let mid = 2.0 * sle_gamma(q0, 2.0).powi(2) / 2.0;
        assert!((mid - 0.5625).abs() < 1e-12);
        assert!((beta_exact_sle(q0, 2.0) - 0.5625).abs() < 1e-12);
    }

    #[test]
    fn gamma_identity() {
        assert_eq!(gamma_identity_check(0.0, 2.0), 0.0);
        for kappa in [0.5, 2.0, 8.0] {
            let edge = (kappa + 4.0f64).powi(2) / (8.0 * kappa);
            assert!(gamma_identity_check(edge, kappa) < 1e-12);
        }
    }

    #[test]
    fn identity_ensemble_has_flat_spectrum() {
        let maps = vec![CompositeMap::<f64>::identity(); 100];
        let e = beta_estimate(&maps, 1.5, &[0.01, 0.03, 0.1], BetaOptions { bootstrap: 50, ..Default::default() }).unwrap();
        assert!(e.beta.abs() < 1e-12 && e.stderr < 1e-12);
    }

    #[test]
    fn small_ensembles_are_rejected() {
        let maps = vec![CompositeMap::<f64>::identity(); 10];
        assert!(beta_estimate(&maps, 1.0, &[0.01, 0.1], BetaOptions::default()).is_err());
        let maps = vec![CompositeMap::<f64>::identity(); 100];
        assert!(beta_estimate(&maps, 1.0, &[0.5, 0.1], BetaOptions::default()).is_err());
    }

    #[test]
    fn flat_beta_legendre_is_a_point() {
        let b = SpectrumCurve::new(SpectrumKind::Beta, vec![-1.0, 0.0, 1.0, 2.0], vec![0.0; 4]).unwrap();
        let f = legendre_beta_to_f(&b).unwrap();
        assert_eq!(f.curve.abscissa, vec![1.0]);
        assert!((f.curve.values[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sle_f_spectrum_is_concave() {
        let qs: Vec<f64> = (0..61).map(|k| -3.0 + 0.1 * k as f64).collect();
        let b = SpectrumCurve::new(SpectrumKind::Beta, qs.clone(), qs.iter().map(|&q| beta_exact_sle(q, 2.0)).collect()).unwrap();
        let f = legendre_beta_to_f(&b).unwrap().curve;
        for k in 1..f.len() - 1 {
            let (x0, x1, x2) = (f.abscissa[k - 1], f.abscissa[k], f.abscissa[k + 1]);
            let chord = f.values[k - 1] + (f.values[k + 1] - f.values[k - 1]) * (x1 - x0) / (x2 - x0);
            assert!(f.values[k] >= chord - 1e-9);
        }
    }

    #[test]
    fn trivial_and_binomial_round_trips() {
        let qs: Vec<f64> = (0..21).map(|k| -2.0 + 0.25 * k as f64).collect();
        let line = SpectrumCurve::new(SpectrumKind::Tau, qs.clone(), qs.iter().map(|q| q - 1.0).collect()).unwrap();
        let rt = legendre_tau_f_roundtrip(&line).unwrap();
        assert!(rt.discrepancy < 1e-14 && !rt.convexified);
        let p: f64 = 0.3;
        let binom: Vec<f64> = qs.iter().map(|&q| -(p.powf(q) + (1.0 - p).powf(q)).log2()).collect();
        let c = SpectrumCurve::new(SpectrumKind::Tau, qs.clone(), binom).unwrap();
        assert!(legendre_tau_f_roundtrip(&c).unwrap().discrepancy < 1e-12);
        let bumpy = SpectrumCurve::new(SpectrumKind::Tau, vec![0.0, 1.0, 2.0], vec![0.0, -1.0, 0.0]).unwrap();
        assert!(legendre_tau_f_roundtrip(&bumpy).unwrap().convexified);
    }

    #[test]
    fn boxcount_line_and_single_box() {
        let n = 256;
        let line: ChargeMap = (0..n).map(|m| ((m, 0), 1.0 / n as f64)).collect();
        let qs = [0.0, 1.0, 2.0, 3.0];
        let tau = tau_boxcount(&line, &qs, &[1, 2, 4, 8, 16, 32]).unwrap();
        for (q, t) in qs.iter().zip(&tau.values) {
            assert!((t - (q - 1.0)).abs() < 1e-12, "{q} {t}");
        }
        let one: ChargeMap = [((3, -2), 1.0)].into_iter().collect();
        let tau = tau_boxcount(&one, &[0.5, 1.0, 2.0], &[1, 2, 4]).unwrap();
        assert!(tau.values.iter().all(|v| v.abs() < 1e-15));
        assert!(tau_boxcount(&one, &[1.0], &[1, 2]).is_err());
    }

    #[test]
    fn seed_charges_have_no_dimension() {
        let c = LatticeCluster::seed();
        let f = crate::growth::dla_harmonic_field(&c, 16).unwrap();
        let ch = crate::growth::dla_charges(&c, &f).unwrap();
        let tau = tau_boxcount(&ch, &[1.0], &[1, 2, 4]).unwrap();
        assert!(tau.values[0].abs() < 1e-12);
    }

    #[test]
    fn generator_on_constants_and_cosines() {
        let one = TrigTest { power: 0.0, terms: vec![(0, 1.0, 0.0)] };
        let spec = GeneratorSpec::brownian(3.0, 0.0);
        assert!(apply_generator(&spec, &one, Complex64::new(1.3, 0.7)).unwrap().abs() < 1e-15);
        let cos = TrigTest { power: 0.0, terms: vec![(1, 1.0, 0.0)] };
        let phi = 0.4;
        let e = eta_hat(&spec, &cos, 1.5, phi).unwrap();
        assert!((e - 1.5 * phi.cos()).abs() < 1e-15);
        let jump = GeneratorSpec {
            kappa: 0.0,
            levy_atoms: vec![(std::f64::consts::PI, 0.7)],
            q: 0.0,
            sign: GeneratorSign::Bounded,
        };
        let e = eta_hat(&jump, &cos, 1.5, phi).unwrap();
        assert!((e - 2.0 * 0.7 * phi.cos()).abs() < 1e-15);
        assert!(apply_generator(&spec, &cos, Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn generator_drift_matches_finite_differences() {
        let rho = TrigTest { power: 1.5, terms: vec![(2, 0.3, -0.4), (1, 1.0, 0.2)] };
        let spec = GeneratorSpec::brownian(0.0, 0.0);
        let w = Complex64::new(1.2, 0.9);
        let f = |z: Complex64| rho.value(z.norm(), z.arg());
        let h = 1e-5;
        // ∂_w = (∂_x − i∂_y)/2
        let dx = (f(w + h) - f(w - h)) / (2.0 * h);
        let dy = (f(w + Complex64::new(0.0, h)) - f(w - Complex64::new(0.0, h))) / (2.0 * h);
        let dw = Complex64::new(dx, -dy) * 0.5;
        let expect = 2.0 * (w * (w + 1.0) / (w - 1.0) * dw).re;
        assert!((apply_generator(&spec, &rho, w).unwrap() - expect).abs() < 1e-8);
    }

    #[test]
    fn single_slit_derivative_moments_are_finite() {
        let m = CompositeMap::from_slits(vec![ElementarySlitMap::new(0.3, 0.2).unwrap()]);
        let mm = member_moments(&m, &[2.0], &[0.01, 0.1], 64).unwrap();
        assert!(mm[0].iter().all(|v| v.is_finite() && *v > 0.0));
    }
}

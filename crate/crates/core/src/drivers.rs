//! Sample paths of the driving function `L(t)`.
//!
//! Paths are piecewise constant: `values[k]` holds on `[breakpoints[k],
//! breakpoints[k+1])` and the last value holds from the final breakpoint on.
//! Angles are stored unwrapped on the real line and only reduced mod 2π when a
//! slit map consumes them.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// `(seed, stream)` fully determines every sample. Worker or ensemble member
/// `i` draws from `stream = i`, so members never depend on each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }

    /// Counter-based generator for this pair.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriverKind {
    Brownian { kappa: f64 },
    Levy { kappa: f64, jump_rate: f64, jump_scale: f64 },
    UniformIid,
    Prescribed,
}

/// Parameters of a zero-drift Lévy driver; Brownian motion is the jump-free case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DriverParams {
    Brownian { kappa: f64 },
    /// Compound-Poisson jumps of size `±jump_scale` (each sign with probability
    /// 1/2) at total rate `jump_rate`, on top of a Brownian part.
    Levy { kappa: f64, jump_rate: f64, jump_scale: f64 },
}

impl DriverParams {
    pub fn kappa(&self) -> f64 {
        match *self {
            DriverParams::Brownian { kappa } | DriverParams::Levy { kappa, .. } => kappa,
        }
    }

    fn kind(&self) -> DriverKind {
        match *self {
            DriverParams::Brownian { kappa } => DriverKind::Brownian { kappa },
            DriverParams::Levy {
                kappa,
                jump_rate,
                jump_scale,
            } => DriverKind::Levy {
                kappa,
                jump_rate,
                jump_scale,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let kappa = self.kappa();
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(param("kappa", format!("must be non-negative, got {kappa}")));
        }
        if let DriverParams::Levy {
            jump_rate,
            jump_scale,
            ..
        } = *self
        {
            if !(jump_rate >= 0.0) || !jump_rate.is_finite() {
                return Err(param("jump_rate", format!("must be non-negative, got {jump_rate}")));
            }
            if !(jump_scale > 0.0) || !jump_scale.is_finite() {
                return Err(param("jump_scale", format!("must be positive, got {jump_scale}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverPath {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    kind: DriverKind,
    /// Interval indices at which a jump happened (Lévy kind only); an index
    /// repeats when several jumps land in one interval.
    jumps: Vec<usize>,
}

impl DriverPath {
    /// Builds a prescribed path, validating the breakpoint invariants.
    pub fn prescribed(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_breakpoints(&breakpoints, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("driver values must be finite".into()));
        }
        Ok(Self {
            breakpoints,
            values,
            kind: DriverKind::Prescribed,
            jumps: Vec::new(),
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> DriverKind {
        self.kind
    }

    pub fn jumps(&self) -> &[usize] {
        &self.jumps
    }

    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    pub fn end_time(&self) -> f64 {
        *self.breakpoints.last().unwrap_or(&0.0)
    }

    /// Number of finite intervals `[t_k, t_{k+1})`.
    pub fn intervals(&self) -> usize {
        self.breakpoints.len().saturating_sub(1)
    }

    /// `L(t)`, right-continuous.
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        self.values[idx.saturating_sub(1)]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "L"])?;
        for (t, l) in self.breakpoints.iter().zip(&self.values) {
            w.write_record([t.to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a `prescribed` path from the `(t, L)` CSV layout.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut ts = Vec::new();
        let mut ls = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Format(format!("row {}: bad column {i}", row + 1)))
            };
            ts.push(parse(0)?);
            ls.push(parse(1)?);
        }
        Self::prescribed(ts, ls)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn validate_breakpoints(bp: &[f64], n_values: usize) -> Result<()> {
    if bp.is_empty() || bp.len() != n_values {
        return Err(Error::Format(format!(
            "need one value per breakpoint ({} breakpoints, {n_values} values)",
            bp.len()
        )));
    }
    if bp[0] != 0.0 {
        return Err(Error::Format(format!("breakpoints must start at 0, got {}", bp[0])));
    }
    if let Some(k) = bp.windows(2).position(|p| !(p[1] > p[0])) {
        return Err(Error::Format(format!(
            "breakpoints not strictly increasing at row {}",
            k + 2
        )));
    }
    Ok(())
}

fn check_step(dt: f64, steps: usize) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(param("dt", format!("must be positive, got {dt}")));
    }
    if steps == 0 {
        return Err(param("steps", "must be at least 1"));
    }
    Ok(())
}

/// One increment of the driver over a step of length `dt`, plus its jump count.
fn increment<R: Rng>(params: &DriverParams, dt: f64, rng: &mut R) -> (f64, usize) {
    let kappa = params.kappa();
    let normal: f64 = rng.sample(StandardNormal);
    let mut dl = (kappa * dt).sqrt() * normal;
    let mut count = 0;
    if let DriverParams::Levy {
        jump_rate,
        jump_scale,
        ..
    } = *params
    {
        if jump_rate > 0.0 {
            let n = Poisson::new(jump_rate * dt).expect("positive rate").sample(rng) as usize;
            for _ in 0..n {
                dl += if rng.random::<bool>() { jump_scale } else { -jump_scale };
            }
            count = n;
        }
    }
    (dl, count)
}

fn forward_path(params: DriverParams, dt: f64, incs: &[(f64, usize)]) -> DriverPath {
    let mut breakpoints = Vec::with_capacity(incs.len() + 1);
    let mut values = Vec::with_capacity(incs.len() + 1);
    let mut jumps = Vec::new();
    let mut l = 0.0;
    breakpoints.push(0.0);
    values.push(0.0);
    for (k, &(dl, n)) in incs.iter().enumerate() {
        l += dl;
        breakpoints.push((k + 1) as f64 * dt);
        values.push(l);
        // the jump separates interval k from interval k+1
        jumps.extend(std::iter::repeat_n(k + 1, n));
    }
    DriverPath {
        breakpoints,
        values,
        kind: params.kind(),
        jumps,
    }
}

/// Zero-drift path with i.i.d. increments; `L(0) = 0`.
pub fn sample(params: DriverParams, dt: f64, steps: usize, seed: RngSeed) -> Result<DriverPath> {
    params.validate()?;
    check_step(dt, steps)?;
    let mut rng = seed.rng();
    let incs: Vec<_> = (0..steps).map(|_| increment(&params, dt, &mut rng)).collect();
    Ok(forward_path(params, dt, &incs))
}

/// Like [`sample`] but the increments are drawn starting from the end of the
/// path. A longer path with the same seed therefore extends a shorter one at
/// its start: the shared tail differs only by a constant rotation.
pub fn sample_backward(
    params: DriverParams,
    dt: f64,
    steps: usize,
    seed: RngSeed,
) -> Result<DriverPath> {
    params.validate()?;
    check_step(dt, steps)?;
    let mut rng = seed.rng();
    let mut incs: Vec<_> = (0..steps).map(|_| increment(&params, dt, &mut rng)).collect();
    incs.reverse();
    Ok(forward_path(params, dt, &incs))
}

/// Brownian driver with `⟨(L(t+τ) − L(t))²⟩ = κτ`.
pub fn sample_brownian(kappa: f64, dt: f64, steps: usize, seed: RngSeed) -> Result<DriverPath> {
    sample(DriverParams::Brownian { kappa }, dt, steps, seed)
}

pub fn sample_levy(
    kappa: f64,
    jump_rate: f64,
    jump_scale: f64,
    dt: f64,
    steps: usize,
    seed: RngSeed,
) -> Result<DriverPath> {
    sample(
        DriverParams::Levy {
            kappa,
            jump_rate,
            jump_scale,
        },
        dt,
        steps,
        seed,
    )
}

/// `n` i.i.d. angles uniform on `[0, 2π)`. Capacities are unknown when the
/// angles are drawn, so the breakpoints are placeholders `0, 1, …, n−1`.
pub fn sample_uniform_angles(n: usize, seed: RngSeed) -> Result<DriverPath> {
    if n == 0 {
        return Err(param("n", "must be at least 1"));
    }
    let mut rng = seed.rng();
    let values = (0..n)
        .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
        .collect();
    Ok(DriverPath {
        breakpoints: (0..n).map(|k| k as f64).collect(),
        values,
        kind: DriverKind::UniformIid,
        jumps: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_temperature_is_flat() {
        let p = sample_brownian(0.0, 0.01, 100, RngSeed::new(3)).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
        assert_eq!(p.breakpoints().len(), 101);
        let p = sample_levy(0.0, 0.0, 1.0, 0.01, 100, RngSeed::new(3)).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parameters_are_validated() {
        assert!(sample_brownian(1.0, 0.0, 10, RngSeed::new(1)).is_err());
        assert!(sample_brownian(1.0, -1.0, 10, RngSeed::new(1)).is_err());
        assert!(sample_brownian(-1.0, 0.1, 10, RngSeed::new(1)).is_err());
        assert!(sample_brownian(1.0, 0.1, 0, RngSeed::new(1)).is_err());
        assert!(sample_levy(1.0, 1.0, 0.0, 0.1, 10, RngSeed::new(1)).is_err());
        assert!(sample_uniform_angles(0, RngSeed::new(1)).is_err());
    }

    #[test]
    fn value_lookup_is_right_continuous() {
        let p = DriverPath::prescribed(vec![0.0, 1.0, 2.5], vec![0.0, 0.3, -1.0]).unwrap();
        assert_eq!(p.value_at(0.0), 0.0);
        assert_eq!(p.value_at(0.99), 0.0);
        assert_eq!(p.value_at(1.0), 0.3);
        assert_eq!(p.value_at(2.6), -1.0);
        assert_eq!(p.intervals(), 2);
    }

    #[test]
    fn prescribed_rejects_bad_breakpoints() {
        assert!(DriverPath::prescribed(vec![0.1, 1.0], vec![0.0, 0.0]).is_err());
        assert!(DriverPath::prescribed(vec![0.0, 1.0, 1.0], vec![0.0; 3]).is_err());
        assert!(DriverPath::prescribed(vec![0.0, 1.0], vec![0.0]).is_err());
    }

    #[test]
    fn determinism_and_streams() {
        let a = sample_brownian(2.0, 0.01, 50, RngSeed::new(9)).unwrap();
        let b = sample_brownian(2.0, 0.01, 50, RngSeed::new(9)).unwrap();
        let c = sample_brownian(2.0, 0.01, 50, RngSeed::new(9).with_stream(1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let u = sample_uniform_angles(1, RngSeed::new(4)).unwrap();
        assert_eq!(u.values().len(), 1);
        assert!((0.0..std::f64::consts::TAU).contains(&u.values()[0]));
    }

    #[test]
    fn backward_sampling_extends_at_the_start() {
        let params = DriverParams::Brownian { kappa: 2.0 };
        let short = sample_backward(params, 0.01, 100, RngSeed::new(5)).unwrap();
        let long = sample_backward(params, 0.01, 150, RngSeed::new(5)).unwrap();
        let shift = long.values()[50];
        for k in 0..=100 {
            assert!((long.values()[k + 50] - shift - short.values()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let p = sample_levy(1.0, 5.0, 0.7, 0.01, 40, RngSeed::new(2)).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = DriverPath::read_csv(buf.as_slice()).unwrap();
        assert_eq!(q.values(), p.values());
        assert_eq!(q.breakpoints(), p.breakpoints());
        assert_eq!(q.kind(), DriverKind::Prescribed);
    }

    #[test]
    fn jump_indices_mark_value_changes() {
        let p = sample_levy(0.0, 3.0, 0.5, 0.01, 2000, RngSeed::new(8)).unwrap();
        assert!(p.jump_count() > 0);
        for w in p.values().windows(2).enumerate() {
            let (k, pair) = w;
            let n = p.jumps().iter().filter(|&&j| j == k + 1).count();
            if n == 0 {
                assert_eq!(pair[0], pair[1]);
            }
        }
    }
}

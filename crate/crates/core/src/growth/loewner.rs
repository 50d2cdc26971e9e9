use super::{MapRun, ModelParams};
use crate::conformal::{whole_plane_rescale, CompositeMap, ElementarySlitMap};
use crate::drivers::{sample_backward, DriverParams, DriverPath, RngSeed};
use crate::error::{param, Result};
use crate::scalar::Real;

/// Composite map of a piecewise-constant driver: every interval becomes slits
/// at the driver's angle whose capacities add up to the interval length.
/// Intervals longer than `max_dt` are split evenly.
///
/// A Brownian driver gives the radial SLE_κ sampler, a Lévy driver the LLE
/// sampler.
pub fn grow_driven<T: Real>(driver: &DriverPath, max_dt: f64) -> Result<MapRun<T>> {
    if !(max_dt > 0.0) || !max_dt.is_finite() {
        return Err(param("dt", format!("must be positive, got {max_dt}")));
    }
    let bp = driver.breakpoints();
    let vals = driver.values();
    let mut map = CompositeMap::identity();
    for k in 0..driver.intervals() {
        let len = bp[k + 1] - bp[k];
        // breakpoints carry rounding of order 1e-12 relative to a step
        let pieces = (len / max_dt - 1e-9).ceil().max(1.0) as usize;
        let cap = T::lit(len / pieces as f64);
        let slit = ElementarySlitMap::new(T::lit(vals[k]), cap)?;
        for _ in 0..pieces {
            map.push(slit);
        }
    }
    Ok(MapRun {
        map,
        driver: driver.clone(),
        params: ModelParams::Driven { max_dt },
        seed: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WholePlaneOptions {
    pub driver: DriverParams,
    /// Whole-plane time at which the map is taken.
    pub t: f64,
    pub burn_in: f64,
    pub dt: f64,
}

/// Bounded whole-plane map `e^{-T} F(w, T + t)`.
///
/// The driver is sampled backwards from its end, so runs with the same seed and
/// a longer burn-in share the late part of the driver up to a rotation.
pub fn grow_whole_plane<T: Real>(opts: WholePlaneOptions, seed: RngSeed) -> Result<MapRun<T>> {
    let WholePlaneOptions { driver, t, burn_in, dt } = opts;
    if !(burn_in >= 10.0) {
        return Err(param("burn_in", format!("must be at least 10, got {burn_in}")));
    }
    if !(t >= -burn_in) || !t.is_finite() {
        return Err(param("t", format!("must be finite and above -burn_in, got {t}")));
    }
    if !(dt > 0.0) {
        return Err(param("dt", format!("must be positive, got {dt}")));
    }
    let steps = ((burn_in + t) / dt).round() as usize;
    let path = sample_backward(driver, dt, steps.max(1), seed)?;
    let run = grow_driven::<T>(&path, dt)?;
    Ok(MapRun {
        map: whole_plane_rescale(&run.map, T::lit(burn_in))?,
        driver: path,
        params: ModelParams::WholePlane {
            driver,
            t,
            burn_in,
            dt,
        },
        seed: Some(seed),
    })
}

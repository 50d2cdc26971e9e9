use num_complex::Complex;

use super::{Aborted, MapRun, ModelParams};
use crate::conformal::{CompositeMap, ElementarySlitMap};
use crate::drivers::{sample_uniform_angles, RngSeed};
use crate::error::{param, Error, Result};
use crate::scalar::Real;

/// Tuning of the derivative regularization in HL(α).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlOptions {
    /// The derivative is evaluated at radius `1 + scale·sqrt(δt_prev)`.
    pub regularization_scale: f64,
}

impl Default for HlOptions {
    fn default() -> Self {
        Self {
            regularization_scale: 1.0,
        }
    }
}

/// Hastings–Levitov HL(α): uniform angles, capacities
/// `δt_n = δa |F'_{n-1}((1+ε_d) e^{iφ_n})|^{-α}` with `ε_d = sqrt(δt_{n-1})`
/// (and `sqrt(δa)` for the first step).
pub fn grow_hl<T: Real>(
    alpha: f64,
    delta_a: f64,
    n: usize,
    seed: RngSeed,
) -> Result<MapRun<T>, Aborted<MapRun<T>>> {
    grow_hl_with(alpha, delta_a, n, seed, HlOptions::default())
}

pub fn grow_hl_with<T: Real>(
    alpha: f64,
    delta_a: f64,
    n: usize,
    seed: RngSeed,
    opts: HlOptions,
) -> Result<MapRun<T>, Aborted<MapRun<T>>> {
    let params = ModelParams::HastingsLevitov { alpha, delta_a };
    let fail = |error: Error, map: CompositeMap<T>, driver| Aborted {
        error,
        partial: MapRun {
            map,
            driver,
            params,
            seed: Some(seed),
        },
    };
    let validate = || -> Result<()> {
        if !(delta_a > 0.0) || !delta_a.is_finite() {
            return Err(param("delta_a", format!("must be positive, got {delta_a}")));
        }
        if !alpha.is_finite() {
            return Err(param("alpha", "must be finite"));
        }
        if n == 0 {
            return Err(param("n", "must be at least 1"));
        }
        Ok(())
    };
    let angles = match validate().and_then(|_| sample_uniform_angles(n, seed)) {
        Ok(a) => a,
        Err(e) => {
            return Err(fail(
                e,
                CompositeMap::identity(),
                crate::drivers::DriverPath::prescribed(vec![0.0], vec![0.0]).expect("trivial path"),
            ))
        }
    };

    let mut map = CompositeMap::<T>::identity();
    let mut prev = delta_a;
    for (k, &phi) in angles.values().iter().enumerate() {
        let dt = if alpha == 0.0 {
            delta_a
        } else {
            let radius = 1.0 + opts.regularization_scale * prev.sqrt();
            let w = Complex::from_polar(T::lit(radius), T::lit(phi));
            match map.eval_derivative(w) {
                Ok(d) => delta_a * d.norm().as_f64().powf(-alpha),
                Err(e) => return Err(fail(e, map, angles.clone())),
            }
        };
        if !dt.is_finite() || dt <= 0.0 {
            let e = Error::Numeric(format!("step {}: capacity {dt} is not positive and finite", k + 1));
            return Err(fail(e, map, angles.clone()));
        }
        match ElementarySlitMap::new(T::lit(phi), T::lit(dt)) {
            Ok(s) => map.push(s),
            Err(e) => return Err(fail(e, map, angles.clone())),
        }
        prev = dt;
    }
    Ok(MapRun {
        map,
        driver: angles,
        params,
        seed: Some(seed),
    })
}

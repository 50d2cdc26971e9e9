//! Growth models: Hastings–Levitov iterated maps, Loewner-driven slit
//! compositions (radial and whole-plane SLE/LLE) and lattice DLA.

mod dla;
mod hl;
mod laplace;
mod loewner;

pub use dla::{
    box_half_width, dla_charges, dla_grow, dla_grow_with, ChargeMap, DlaMode, DlaOptions, DlaRun, LatticeCluster, Site,
};
pub use hl::{grow_hl, grow_hl_with, HlOptions};
pub use laplace::{dla_harmonic_field, LatticeField, SolverOptions};
pub use loewner::{grow_driven, grow_whole_plane, WholePlaneOptions};

use serde::{Deserialize, Serialize};

use crate::conformal::CompositeMap;
use crate::drivers::{DriverParams, DriverPath, RngSeed};
use crate::error::Error;

/// Parameters of the model that produced a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelParams {
    HastingsLevitov { alpha: f64, delta_a: f64 },
    Driven { max_dt: f64 },
    WholePlane { driver: DriverParams, t: f64, burn_in: f64, dt: f64 },
}

/// A map-valued growth run: the composite map, the driver that steered it and
/// the realized per-slit capacities.
#[derive(Debug, Clone)]
pub struct MapRun<T> {
    pub map: CompositeMap<T>,
    pub driver: DriverPath,
    pub params: ModelParams,
    pub seed: Option<RngSeed>,
}

impl<T: crate::Real> MapRun<T> {
    pub fn capacities(&self) -> Vec<T> {
        self.map.slits().iter().map(|s| s.capacity()).collect()
    }

    /// Whole-plane map `e^{-T} F(w, T + t)` for an earlier time `t` of a
    /// whole-plane run, formed from the slits laid down by radial time `T + t`.
    pub fn whole_plane_at(&self, t: f64) -> Option<CompositeMap<T>> {
        let ModelParams::WholePlane { burn_in, dt, .. } = self.params else {
            return None;
        };
        let n = ((burn_in + t) / dt).round();
        if n < 0.0 || n as usize > self.map.len() {
            return None;
        }
        Some(self.map.prefix(n as usize).with_log_scale(T::lit(-burn_in)))
    }
}

/// A run that stopped early; the steps completed before the failure are kept.
#[derive(Debug)]
pub struct Aborted<R> {
    pub error: Error,
    pub partial: R,
}

impl<R: std::fmt::Debug> std::fmt::Display for Aborted<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted: {}", self.error)
    }
}

impl<R: std::fmt::Debug> std::error::Error for Aborted<R> {}

impl<R> From<Aborted<R>> for Error {
    fn from(a: Aborted<R>) -> Self {
        a.error
    }
}

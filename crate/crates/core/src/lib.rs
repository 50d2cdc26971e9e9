pub mod conformal;
pub mod coulomb_gas;
pub mod drivers;
pub mod error;
pub mod growth;
pub mod hele_shaw;
pub mod multifractal;
pub mod scalar;
pub mod svg;
pub mod tau_functions;

pub use scalar::Real;

pub type CompositeMap64 = conformal::CompositeMap<f64>;
pub type CompositeMap32 = conformal::CompositeMap<f32>;
pub type SlitMap64 = conformal::ElementarySlitMap<f64>;
pub type MapRun64 = growth::MapRun<f64>;
pub type SolitonData64 = tau_functions::SolitonData<f64>;
/// Adler–Moser polynomials in exact rational arithmetic.
pub type AdlerMoserQ = tau_functions::AdlerMoserPoly<num_rational::BigRational>;
pub type AdlerMoser64 = tau_functions::AdlerMoserPoly<f64>;

pub mod certify;
pub mod error;
pub mod forward;
pub mod kinetic;
pub mod legendre;
pub mod linalg;
pub mod newton;
pub mod polytope;
pub mod potential;
pub mod region;
pub mod spectral1d;

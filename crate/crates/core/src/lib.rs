//! Discrete weak KAM theory on the flat torus.
//!
//! Tonelli Hamiltonians are discretized into one-step action costs between
//! grid points. Everything downstream (critical values, Lax-Oleinik
//! semigroups, Peierls barriers, Aubry and Mañé sets, the quotient Aubry set
//! and common subsolutions of commuting pairs) is exact min-plus algebra on
//! those costs, so identities that hold at the grid level hold to rounding.
//!
//! The [`verify`] module turns statements about commuting Hamiltonians into
//! defects measured at two resolutions.

pub mod cache;
pub mod error;
pub mod hamiltonian;
pub mod minplus;
pub mod torus;
pub mod verify;
pub mod weak_kam;

pub use error::{Error, Result};
pub use hamiltonian::{HamiltonianSpec, LagrangianValue};
pub use minplus::CostMatrix;
pub use torus::{OneForm, ScalarField, TorusGrid};
pub use weak_kam::{AubryData, BarrierMatrix, BarrierParams, CriticalValue, WeakKamSystem};

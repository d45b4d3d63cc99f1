//! Pseudo-metrics, Clifford algebras, connections and Dirac operators on
//! wedge complexes of lines, computed exactly where possible.

pub mod linalg;
pub mod symexpr;
pub mod dvspace;
pub mod clifford;
pub mod complex;
pub mod sampling;
pub mod bundle;
pub mod forms;
pub mod connection;
pub mod dirac;
pub mod cli;

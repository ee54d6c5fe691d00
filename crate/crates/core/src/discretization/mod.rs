//! Discrete nonlocal operator on uniform grids with zero exterior data.

mod consistency;
mod grid;
mod operator;

pub use consistency::{consistency_study, reference_apply, ConsistencyRow, TestProfile};
pub use grid::Grid;
pub use operator::{apply_operator, build_operator, DiscreteOperator};

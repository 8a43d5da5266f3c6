//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] is rebuilt for every forward pass. Parameters live outside
//! graphs in a [`ParamSet`] and are bound into each new graph as leaves;
//! [`Graph::backward`] returns a [`GradientMap`] keyed by leaf, which an
//! [`OptimizerState`] consumes to update the parameter set in place.

mod backward;
mod gradcheck;
mod graph;
mod optim;
mod params;

pub use backward::GradientMap;
pub use gradcheck::check_gradients;
pub use graph::{Broadcast, Graph, Op, Var};
pub use optim::{OptimizerKind, OptimizerState};
pub use params::{Bound, ParamId, ParamSet};

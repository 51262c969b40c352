//! Travelling waves of the Fisher-KPP equation `u_t = (d(u) u_x)_x + g(u)`
//! with degenerate or singular diffusion and non-Lipschitz reaction.

// `!(x > 0.0)` is deliberate: it rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod config;
pub mod expr;
pub mod interp;
pub mod ode;
pub mod pde;
pub mod phase;
pub mod problem;
pub mod profile;
pub mod quad;

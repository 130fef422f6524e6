//! Joint decomposition for two-stage multiscenario mixed-binary bilinear
//! programs, with the LP, MILP and spatial branch-and-bound solvers it runs on.
pub mod flat;
pub mod global;
pub mod jd;
pub mod lp;
pub mod milp;
pub mod model;
pub mod pooling;
pub mod relax;
pub mod standardize;
pub mod synth;

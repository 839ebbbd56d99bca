//! Frequency control of asynchronous AC areas coupled through a
//! multi-terminal HVDC grid.
//!
//! The crate assembles and simulates the closed loop under three generation
//! controllers (decentralized droop, secondary control over a complete
//! communication graph, and consensus-based distributed secondary control),
//! certifies stability through Lyapunov equations, and evaluates the static
//! error bounds for frequencies, DC voltages and power sharing.
//!
//! Modules, bottom up:
//! - [`densela`]: dense matrix kernels (LU, Cholesky, Jacobi, Lyapunov).
//! - [`netgraph`]: DC-grid and communication graphs, Laplacians.
//! - [`plant`]: parameters, control laws, closed-loop assembly.
//! - [`analysis`]: equilibria, certificates, Lyapunov values, error bounds.
//! - [`sim`]: fixed-step RK4 time integration and parameter sweeps.
//! - [`cli`]: scenario files, reports and the command-line front end.

pub mod densela;
pub mod netgraph;
pub mod plant;
pub mod analysis;
pub mod sim;
pub mod cli;

//! Order positions and best bid/ask queues in a limit order book.
//!
//! An order resting in the best bid queue is executed when the volume ahead
//! of it (the order position Z) reaches zero; the queue itself may deplete
//! first. This crate simulates the scaled queue triple (Q_b, Q_a, Z) under
//! several arrival processes and evaluates the corresponding scaling-limit
//! objects in closed form, then cross-validates the two against each other:
//!
//! * [`point_processes`] — Poisson, Hawkes, Cox shot-noise and
//!   state-dependent arrival streams with their rate and CLT constants;
//! * [`order_flow`] — the six-type mark sequence and every covariance object
//!   the limit theorems need;
//! * [`lob_simulator`] — exact event-driven simulation of the scaled system;
//! * [`fluid_engine`] — law-of-large-numbers trajectories and hitting times;
//! * [`diffusion_engine`] — Brownian limits: first-passage laws, fluctuation
//!   variances, execution/depletion-time asymptotics;
//! * [`ldp_engine`] — large-deviations rate functions and path costs;
//! * [`verify_harness`] — Monte Carlo experiments binding simulation to the
//!   analytics;
//! * [`cli`] — configuration and artifact plumbing for the `lobq` binary.

pub mod cli;
pub mod diffusion_engine;
pub mod fluid_engine;
pub mod ldp_engine;
pub mod lob_simulator;
pub mod numerics;
pub mod order_flow;
pub mod output;
pub mod point_processes;
pub mod rng;
pub mod verify_harness;

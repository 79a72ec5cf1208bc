//! Numerical kernels shared by the analytic engines.

pub mod bessel;
pub mod ks;
pub mod matrix6;
pub mod normal;
pub mod ode;
pub mod quad;
pub mod roots;
pub mod stats;

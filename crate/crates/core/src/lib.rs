//! Simulation, hypothesis testing and numerical verification for latent
//! geometry in random graphs and random matrices.
//!
//! The crate is organised by concern:
//!
//! * [`spectrum`]: the weight vector α, its norms, effective dimension and
//!   the large/small split with its peel interpolation.
//! * [`sampling`]: reproducible samplers for G(n,p), G(n,p,α), W(n,α), M(n)
//!   and M(n,u), plus the thresholding maps between them.
//! * [`quantile`]: the edge threshold t_{p,α} by Monte Carlo or by
//!   characteristic-function inversion.
//! * [`statistics`]: signed triangles, tr(M³), their null moments and the
//!   one-sided z-test.
//! * [`divergence`]: density ratios of the spiked ensemble, the truncation
//!   set, truncated χ² Monte Carlo and empirical TV lower bounds.
//! * [`oracle`]: brute-force and quadrature checks of the closed forms.
//! * [`harness`]: experiment configuration, runners and persistence.

pub mod divergence;
pub mod error;
pub mod harness;
pub mod io;
pub mod normal;
pub mod oracle;
pub mod quadrature;
pub mod quantile;
pub mod rng;
pub mod sampling;
pub mod spectrum;
pub mod statistics;

pub use error::{Error, Result};
pub use rng::SeedSpec;
pub use sampling::{GraphSample, LatentMatrix, SymMatrixSample};
pub use spectrum::{Spectrum, SpectrumSplit};

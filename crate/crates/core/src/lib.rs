//! Exponentiated kernel density estimation.
//!
//! The estimator raises a Gaussian kernel density estimate to a power `w`
//! and renormalizes it:
//!
//! ```text
//! f_{w,h}(x) = f_h(x)^w / Z,   Z = ∫ f_h(t)^w dt
//! ```
//!
//! Both the bandwidth `h` and the exponent `w` are chosen from the data by
//! minimizing the empirical Hyvärinen score, which only involves derivatives
//! of `log f_h^w` and is therefore blind to the intractable constant `Z`.
//!
//! Module map:
//!
//! - [`kernel`]: kernel values, derivatives, moments and roughness.
//! - [`exp_kde`]: samples, KDE evaluation, the normalized exponentiated model.
//! - [`hscore`]: the Hyvärinen score and the `(w, h)` tuner.
//! - [`baselines`]: unbiased cross-validation and the AMISE plug-in rule.
//! - [`mixture`]: Gaussian mixture ground truths and the benchmark scenarios.
//! - [`theory`]: asymptotic constants, optimal `(w*, h*)`, exact Fisher divergence.
//! - [`sim`]: accuracy metrics and the Monte Carlo study harness.
//! - [`cli`]: the `expkde` command-line front end.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod exp_kde;
pub mod hermite;
pub mod hscore;
pub mod kernel;
pub mod mixture;
pub mod optim;
pub mod plot;
pub mod quad;
pub mod sim;
pub mod theory;

pub use error::{Error, Result};
pub use exp_kde::{ExpKdeModel, SampleSet};
pub use hscore::{tune, TuneConfig, TuneResult};
pub use kernel::KernelSpec;
pub use mixture::{GaussianMixture, Scenario};
pub use theory::TheoryConstants;

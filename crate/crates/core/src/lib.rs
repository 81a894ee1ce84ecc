//! Robust linear transceiver design for dual-hop amplify-and-forward MIMO
//! relay links whose channel estimates carry Gaussian errors.
//!
//! The source precoder, relay matrix and destination equalizer are chosen
//! to minimize the mean-square error averaged over data, noise and the
//! channel-estimation errors. See the guide in `book/` for the derivations
//! and worked examples.
//!
//! ```
//! use afrelay::channel::{ChannelPreset, CorrelationParams};
//! use afrelay::design::{alternate, DesignConfig};
//! use afrelay::objective::PowerBudget;
//! use afrelay::simulate::build_model;
//!
//! let preset = ChannelPreset::resolve("paper-4x4").unwrap();
//! let corr = CorrelationParams { alpha: 0.5, beta: 0.4, sigma_e2: 0.01 };
//! let budget = PowerBudget::new(4.0, 4.0).unwrap();
//! let model = build_model(&preset, &corr, &budget, 30.0, 20.0, 4).unwrap();
//! let out = alternate(&model, &budget, &DesignConfig::default()).unwrap();
//! let mse = out.trace.mse_values();
//! assert!(mse.windows(2).all(|w| w[1] <= w[0] + 1e-9));
//! ```

pub mod channel;
pub mod design;
pub mod error;
pub mod matfmt;
pub mod matkit;
pub mod objective;
pub mod qmp;
pub mod simulate;
pub mod validate;

pub use error::{Error, Result};

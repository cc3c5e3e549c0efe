//! Self- and cross-Kerr effects in a microwave cavity coupled to two magnon
//! modes of a YIG sphere: the Kittel mode and a higher-order magnetostatic
//! (HMS) mode.
//!
//! Driving one magnon mode shifts both mode frequencies. The driven mode
//! follows a cubic steady-state equation and turns bistable above a power
//! threshold, while the other mode follows through the cross-Kerr term. The
//! crate simulates the resulting transmission maps, extracts both shift
//! curves from measured or synthetic traces, and fits the drive strength and
//! the cross-to-self Kerr ratio.
//!
//! * [`model`]: configuration, coefficients from material constants, field
//!   calibration
//! * [`steady_state`]: cubic steady state, stability and hysteretic sweeps
//! * [`spectrum`]: transmission of the three-mode system and map synthesis
//! * [`extract`]: dip finding, mode assignment, background removal
//! * [`fit`]: drive-product and ratio fits, ratio-stability reports
//! * [`pipeline`], [`scenarios`]: the analysis chain and ready-made drives
//! * [`config`], [`io`], [`manifest`], [`cli`]: files, provenance, `magkerr`
//!
//! Every capability has a runnable example:
//!
//! ```text
//! cargo run --example derive_coefficients
//! cargo run --example bistability_sweep > loop.csv
//! cargo run --release --example anticrossing_map
//! cargo run --release --example kittel_drive
//! cargo run --release --example hms_drive
//! cargo run --release --example ratio_stability
//! cargo run --release --example vna_import
//! ```

pub mod cli;
pub mod config;
pub mod error;
pub mod extract;
pub mod fit;
pub mod io;
pub mod manifest;
pub mod model;
pub mod pipeline;
pub mod scenarios;
pub mod spectrum;
pub mod steady_state;

pub use error::{Error, Result};

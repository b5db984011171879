// SPDX-License-Identifier: Apache-2.0

//! Analytical placement for two-die face-to-face bonded 3D ICs.

pub mod error;
pub mod evaluate;
pub mod flow;
pub mod global_place;
pub mod hbt;
pub mod io;
pub mod legalize;
pub mod density;
pub mod detail_place;
pub mod model;
pub mod spectral;
pub mod synth;
pub mod wirelength;

pub use error::{Error, Result};

//! Steerable CNN construction kit over the dihedral group D4 and its
//! torus-restricted wallpaper group p4m.

pub mod capsules;
pub mod cli;
pub mod error;
pub mod field;
pub mod group;
pub mod induction;
pub mod intertwiner;
pub mod net;
pub mod rep;
pub mod tensor;

pub use error::{Error, Result};

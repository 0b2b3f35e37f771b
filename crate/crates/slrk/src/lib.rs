//! Scheme search, the spectral Navier-Stokes benchmark, tableau files and
//! run manifests on top of [`slrk_core`].

pub mod format;
pub mod manifest;
pub mod navier_stokes;
pub mod search;

pub use slrk_core;

//! Command-line front end for the `posnet` library.

pub mod model;

pub mod design;
pub mod epidemic;
pub mod error;
pub mod gpcore;
pub mod mjls;
pub mod network;
pub mod posmat;
pub mod simulate;

pub use error::{Error, Result};

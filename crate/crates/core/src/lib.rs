pub mod addr;
pub mod cluster;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod gen;
pub mod io;
pub mod lm;
pub mod numcore;
pub mod pipeline;
pub mod synthoracle;

pub use error::{Error, Result};

//! Column-type, column-pair and table-type annotation from column embeddings
//! refined by message passing over a graph of a table's columns.

pub mod codec;
pub mod colgraph;
pub mod embed;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod table;

pub use error::{Error, Result};

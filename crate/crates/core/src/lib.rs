pub mod cli;
pub mod clustering;
pub mod data;
pub mod explainer;
mod framing;
pub mod model;
pub mod numerics;
pub mod pipeline;

pub use framing::FramingError;

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fbs;
pub mod forward;
pub mod io;
pub mod linops;
pub mod oracle;
pub mod prox;
pub mod scalar;
pub mod schemes;
pub mod splines;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Image64 = tensor::Image<f64>;
pub type Image32 = tensor::Image<f32>;
pub type ChannelStack64 = tensor::ChannelStack<f64>;
pub type ChannelStack32 = tensor::ChannelStack<f32>;
pub type FilterBank64 = linops::FilterBank<f64>;
pub type FilterBank32 = linops::FilterBank<f32>;
pub type MmrModel64 = schemes::MmrModel<f64>;
pub type MmrModel32 = schemes::MmrModel<f32>;
pub type SafiModel64 = schemes::SafiModel<f64>;
pub type SafiModel32 = schemes::SafiModel<f32>;
pub type SolverConfig64 = fbs::SolverConfig<f64>;
pub type SolverConfig32 = fbs::SolverConfig<f32>;

//! Forward/backward numeric primitives for the fixed CNN.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod loss;
pub mod pool;

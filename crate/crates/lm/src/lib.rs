// Range checks are written as negated comparisons so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Decoder-only transformer over codec token ids, its training loop and
//! reward fine-tuning.

pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod rl;
pub mod sample;
pub mod tensor;
pub mod training;

// Range checks are written as negated comparisons so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod manifest;
pub mod sampling;

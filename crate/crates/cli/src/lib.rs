// `!(x > 0)` is meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod pipelines;
pub mod report;

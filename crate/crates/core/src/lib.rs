// Range checks are written as `!(x >= lo)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bits;
pub mod crypto;
pub mod jinan;
pub mod kms;
pub mod pipeline;
pub mod sim;
pub mod stats;
pub mod topology;

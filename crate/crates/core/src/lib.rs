#![no_std]
// comparisons are written to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cauchy;
pub mod certify;
pub mod expr;
pub mod linalg;
pub mod improper;
pub mod ode;
pub mod pipeline;
pub mod problem;

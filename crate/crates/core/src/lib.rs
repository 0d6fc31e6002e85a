// `!(x > y)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrangement;
pub mod flatness;
pub mod io;
pub mod plan;
pub mod qp;
pub mod spline;
pub mod verify;

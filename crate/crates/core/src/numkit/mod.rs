//! Dense kernels, reverse-mode tape, Adam and a finite-difference checker.

mod adam;
mod dense;
mod gradcheck;
mod params;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::{
    affine, affine_rows, axpy, dot, l2_normalize, matmul, matmul_t, mean_rows, relu_map,
    softmax_rows, tanh_map, Dense1, Dense2, MIN_NORM,
};
pub use gradcheck::{grad_check, grad_check_nudged, GradCheckReport, NUDGE_STEPS};
pub use params::{Grads, ParamSet};
pub use tape::{Tape, Var};

//! Dense matrices, a small reverse-mode graph, Xavier initialisation and
//! Adam with an optional non-negativity projection.

mod gradcheck;
mod graph;
mod matrix;
mod param;

pub use gradcheck::{
    central_difference_noise, check_op_kind, finite_difference_check, relative_error, FdEntry, FdOptions, FdReport,
    DIFFERENTIABLE_OPS,
};
pub use graph::{bce_term, Graph, NodeId, OpKind, BCE_CLAMP};
pub use matrix::{sigmoid, Matrix};
pub use param::{
    adam_step, project_nonnegative, xavier_normal, xavier_normal_init, AdamConfig, AdamState, Gradients, ParamId,
    ParamStore, ParamTensor,
};

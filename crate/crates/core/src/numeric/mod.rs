//! Numerical substrate: tensors, reverse-mode gradients, and the optimizer.

mod graph;
mod optim;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use optim::{lr_at, sgd_step, OptimizerState, ScheduleConfig, ScheduleKind};
pub use params::{Bound, GradMap, ParamSet};
pub use tensor::{dot, log_sum_exp, Tensor};

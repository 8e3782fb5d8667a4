//! Joint model definition: specification, parameter transforms, and the log
//! posterior for all five variants.

mod context;
mod layout;
mod likelihood;
mod prior;
mod spec;
mod transform;

pub use context::{ModelContext, PostParts};
pub use layout::ParamLayout;
pub use likelihood::cum_hazard_weibull_cv;
pub use spec::{Approach, Delta0Support, ModelSpec, PriorConfig, ReFamily};
pub use transform::{constrained_vector, dof_at, transform, untransform_hyper, ConstrainedState};

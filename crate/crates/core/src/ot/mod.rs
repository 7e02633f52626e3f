//! Optimal-transport solvers between finite distributions.

mod dist;
mod exact;
mod joint;
mod semidual;
mod sinkhorn;

pub use dist::{sq_euclidean_cost, DiscreteDist, GroundCost, TransportPlan};
pub use exact::{exact_ot, exact_ot_weights, MAX_EXACT_CELLS};
pub use joint::{independent_coupling, independent_joint_cost, IndependentCoupling};
pub use semidual::{
    dual_ascent, latent_components, semi_dual_from_cost, semi_dual_latents_on_tape,
    semi_dual_on_tape, semi_dual_value, DualAscent, DualPotentials,
};
pub use sinkhorn::{sinkhorn, sinkhorn_weights, SinkhornOptions, SinkhornResult};

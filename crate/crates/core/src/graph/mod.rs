//! Primal road network, segment unification and the oriented dual graph.

mod attrs;
mod dual;
pub mod io;
mod primal;
mod unify;

pub use attrs::{
    aggregate_links, average_profiles, MeanMode, StaticAttrs, NUM_STATIC, STATIC_NAMES,
};
pub use dual::{build_dual, DualGraph, DualNode, Subgraph};
pub use primal::{
    DirectedLink, Directionality, IntersectionId, Link, LinkId, Maneuver, PrimalGraph, Travel,
};
pub use unify::unify_segments;

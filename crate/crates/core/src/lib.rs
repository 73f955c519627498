//! Planning under uncertainty with abstraction hierarchies: evidential
//! possible worlds, expected-fulfilment driven hierarchical planning, plan
//! reuse across worlds and merging into a branching super-plan.

pub mod cli;
pub mod dsl;
pub mod evidence;
pub mod exec;
pub mod merge;
pub mod model;
pub mod pipeline;
pub mod planner;
pub mod reuse;
pub mod sensitivity;

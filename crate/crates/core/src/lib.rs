//! Kernel for service-oriented human-robot collaboration: situation formulas,
//! an upper ontology, service registry and planner, a failure-recovery
//! transaction protocol, safeguards, and a deterministic simulator.

pub mod formula;
pub mod frp;
pub mod ontology;
pub mod planner;
pub mod registry;
pub mod safeguards;
pub mod scenario;
pub mod services;
pub mod simenv;

//! Static and on-the-fly analysis of collaborative business processes.
//!
//! The crate tracks how digital assets travel and merge across partner
//! interactions so that every provider's protection requirements (RoP) stay
//! attached to whatever artifact its asset ends up in, and every consumer
//! chain's protection profile (QoP) is known before an asset is handed over.
//!
//! The pieces fit together like this:
//!
//! * [`scg`] — the service call graph: partners/variables as nodes, service
//!   call tuples as edges, and the direct/indirect dependency calculus.
//! * [`trace`] — a line-oriented text format for service call tuples.
//! * [`slicer`] — asset-based and request-based slicing of a tuple list into
//!   versioned sub-contexts, including the on-behalf-of protocols and the
//!   combined on-the-fly mode with policy negotiation.
//! * [`policy`] — the usage-control policy model: rules, RoP/QoP documents,
//!   aggregation with conflict detection, and a predicate negotiator.
//! * [`bpel`] — a WS-BPEL-subset process model and the coordinator/analyze
//!   pre-processing pass that slices a process definition without running it.
//!
//! The crate is `no_std` (with `alloc`); anything touching files, XML or a
//! terminal lives in the companion CLI crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bpel;
pub mod dot;
pub mod policy;
pub mod scg;
pub mod slicer;
pub mod trace;

pub use scg::{AssetId, DependencyKind, PartyId, PartyKind, ServiceCallGraph, ServiceCallTuple, TupleKind};
pub use slicer::{ContextDevelopmentTuple, DevelopmentKind, SliceReport};

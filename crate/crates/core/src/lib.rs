//! Dual block-coordinate ascent for cell tracking with divisions and
//! mutually exclusive detection hypotheses.
//!
//! The tracking problem is a binary program over detections and
//! transitions (moves and divisions between consecutive frames). It is
//! decomposed into one small factor per detection and one per conflict
//! set; [`bca::run`] maximizes the resulting Lagrangean lower bound with
//! monotone coordinate updates and rounds the reparametrized costs into
//! feasible tracks with [`primal::extract_primal`].
//!
//! ```
//! use lagtrack_core::prelude::*;
//!
//! let a = DetectionId::new(1, 0);
//! let b = DetectionId::new(2, 0);
//! let instance = Instance {
//!     frame_count: 2,
//!     detections: vec![
//!         Detection { id: a, cost: -1.0, appearance_cost: 0.0, disappearance_cost: 0.0 },
//!         Detection { id: b, cost: -1.0, appearance_cost: 0.0, disappearance_cost: 0.0 },
//!     ],
//!     transitions: vec![Transition { kind: TransitionKind::Move { from: a, to: b }, cost: 0.5 }],
//!     conflicts: vec![],
//! };
//! let graph = decompose(&instance).unwrap();
//! let result = run(&graph, &SolverConfig::default()).unwrap();
//! assert_eq!(result.energy, -2.0);
//! assert!(result.dual_bound <= result.energy);
//! ```

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bca;
pub mod cost_model;
pub mod decomposition;
pub mod instance;
pub mod oracle;
pub mod primal;
pub mod set_packing;
pub mod synth;

pub mod prelude {
    pub use crate::bca::{run, run_with_clock, Clock, Direction, SolveResult, SolverConfig};
    pub use crate::decomposition::{decompose, DecomposedGraph, Reparametrization};
    pub use crate::instance::{
        Assignment, ConflictSet, Detection, DetectionId, Instance, Transition, TransitionKind,
    };
    pub use crate::oracle::brute_force_solve;
    pub use crate::primal::extract_primal;
}

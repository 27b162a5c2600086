//! Dynamic-policy-regret algorithms for online convex optimization with
//! memory and for online non-stochastic control of linear systems.
//!
//! The layers build on each other:
//! [`oco`] holds decisions, memory losses and regret metrics, [`omd`] the
//! OGD and Hedge updates, [`scream`] the meta-expert learner and its
//! baselines. [`lds`] simulates linear systems, [`dac`] reduces control to
//! OCO with memory through disturbance-action policies, [`control`] runs the
//! meta-expert controller and [`sysid`] estimates unknown dynamics.

pub mod error;
pub mod linalg;
pub mod oco;
pub mod omd;
pub mod scream;
pub mod lds;
pub mod dac;
pub mod control;
pub mod sysid;

pub use error::{Error, Result};

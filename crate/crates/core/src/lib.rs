//! Sampling-based model predictive control with language-model planners.
//!
//! The [`mpc`] module holds the domain-agnostic receding-horizon loop. The
//! spring-mass system in [`spring`] exercises it with numeric plans; the
//! [`trip`] and [`meeting`] domains drive it through text prompts via
//! [`refine`]. [`gateway`] talks to a chat-completion endpoint or replays a
//! response cache, and [`harness`] runs configured experiments.

pub mod gateway;
pub mod harness;
pub mod meeting;
pub mod mpc;
pub mod refine;
pub mod sampling;
pub mod spring;
pub mod trip;

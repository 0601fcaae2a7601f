//! Simulation toolkit for super-resolution guided visual servoing of a
//! parallel-plane needle positioning robot.
//!
//! The pipeline mirrors an imaging-in-the-loop setup:
//!
//! - [`scene`] renders ground-truth markers and degrades them into
//!   base-resolution frames (shift, PSF blur, area sampling, noise).
//! - [`sr`] plans sub-pixel offsets, reconstructs a super-resolved image by
//!   gradient descent on the multi-frame least-squares objective, and offers
//!   the bicubic baseline.
//! - [`detect`] finds circular markers with sub-pixel centers.
//! - [`kinematics`] models the two-stage needle guide and image Jacobians.
//! - [`nav`] closes the loop on a simulated rig.
//! - [`harness`] runs the numerical and benchtop experiments and reports
//!   statistics.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detect;
pub mod error;
pub mod harness;
pub mod image;
pub mod kinematics;
pub mod nav;
pub mod ops;
pub mod scene;
pub mod sr;

pub use error::{Error, Result};
pub use image::{Image, Window};

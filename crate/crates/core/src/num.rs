//! Scalar abstraction for the numeric kernels.
//!
//! Similarity scores and classification metrics are generic over [`Real`] so
//! the same kernels run in `f32` (the storage scalar for embeddings) and
//! `f64` (the reporting scalar). Concrete aliases live at the crate root.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the similarity and metric kernels accept.
pub trait Real: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {
    /// Convert a count into the scalar. Counts in this crate are dataset
    /// sizes (hundreds), far below either float's exact-integer range.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in scalar")
    }
}

impl<T> Real for T where T: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {}

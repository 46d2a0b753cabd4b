//! Model-drift detection for reinforcement-learning environments.
//!
//! Episodes are rendered as integer token sequences, compared against a
//! reference trajectory with edit-operation and time-warping measures, and
//! the resulting sample sets are tested for a shift with Welch's t-test.

pub mod cartpole;
pub mod episodes;
pub mod gridmdp;
pub mod harness;
pub mod rng;
pub mod seqmeasure;
pub mod stats;

pub use seqmeasure::{compute_measure, MeasureError, MeasureKind, MeasureValue, Token};
pub use stats::{welch_t_test, WelchResult};

//! Command-line front end for `fehomog-core`: problem files, result
//! dumps, benchmark templates and a threaded FFT backend.

pub mod backend;
pub mod commands;
pub mod output;
pub mod problem;
pub mod templates;

pub use backend::{RustFft, StdClock};
pub use commands::Failure;
pub use problem::{Problem, ProblemError, ProblemFile};
pub use templates::Template;

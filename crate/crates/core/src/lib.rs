//! Exact computation on finite filtered probability spaces: `BMO^alpha`
//! martingale norms, fractional Carleson measures, stopping times and tents,
//! the martingale transform, square function and maximal function, plus
//! seeded verification suites that check the identities relating them.
//!
//! A filtration is a finite rooted tree of atoms ([`filtration`]); processes
//! store one value per atom per level ([`process`]); stopping times are
//! antichains of atoms ([`stopping`]). Every integral is a finite sum, so the
//! only error anywhere is floating-point rounding.

pub mod carleson;
pub mod error;
pub mod filtration;
pub mod norms;
pub mod operators;
pub mod process;
pub mod stopping;
pub mod tolerance;
pub mod verify;

pub use error::{parse_json, Error, Result};
pub use filtration::{build_dyadic, build_random, AtomRef, FiltrationTree};
pub use norms::{Alpha, Mode, NormResult, Witness};
pub use process::{AdaptedProcess, Martingale, PredictableSequence, RandomVariable};
pub use stopping::StoppingTime;

//! Iteration helpers that switch between rayon and sequential iterators.
//!
//! With the default `parallel` feature the macros expand to rayon parallel
//! iterators; with `--no-default-features` the same call sites compile to
//! plain sequential iterators. Callers that reduce floating-point values
//! must collect into an ordered `Vec` first so results do not depend on
//! reduction order.

#[cfg(feature = "parallel")]
pub use rayon::prelude::*;

/// Choose between `iter` and `par_iter`.
#[cfg(not(feature = "parallel"))]
#[macro_export]
macro_rules! maybe_par_iter {
    ($e:expr) => {
        $e.iter()
    };
}

/// Choose between `iter` and `par_iter`.
#[cfg(feature = "parallel")]
#[macro_export]
macro_rules! maybe_par_iter {
    ($e:expr) => {
        $e.par_iter()
    };
}

/// Choose between `into_iter` and `into_par_iter`.
#[cfg(not(feature = "parallel"))]
#[macro_export]
macro_rules! maybe_par_into_iter {
    ($e:expr) => {
        $e.into_iter()
    };
}

/// Choose between `into_iter` and `into_par_iter`.
#[cfg(feature = "parallel")]
#[macro_export]
macro_rules! maybe_par_into_iter {
    ($e:expr) => {
        $e.into_par_iter()
    };
}

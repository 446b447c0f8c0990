//! Closed forms and reference solutions.

pub mod free;
pub mod ntk;
pub mod numerics;
pub mod nu4;
pub mod recurrence;
pub mod sym2;

pub mod catalog;
pub mod dual;
pub mod error;
pub mod gsi;
pub mod piecewise;
pub mod verify;

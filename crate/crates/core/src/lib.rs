#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod autodiff;
pub mod env;
pub mod pipeline;
pub mod planner;
pub mod worldmodel;

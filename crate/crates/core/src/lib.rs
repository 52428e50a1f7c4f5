pub mod catalog;
pub mod cli;
pub mod demo;
pub mod engine;
pub mod error;
pub mod lang;
pub mod persist;
pub mod rcompiler;
pub mod relalg;
pub mod rvars;
pub mod storage;
pub mod typesys;

pub use error::{Error, Result};

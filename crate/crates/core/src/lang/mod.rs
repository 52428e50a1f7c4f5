//! Command language: lexer, parser and canonical printer.

pub mod ast;
pub mod lexer;
mod parser;
pub mod pretty;

pub use ast::*;
pub use parser::{is_reserved, parse_body, parse_command, parse_expr, parse_script};

//! Workbench for the separation logic of relations (SLR): inductive
//! definitions, weak (M)SO model checking, rank-r types, treewidth tooling
//! and translators between these formalisms.

pub mod cli;
pub mod compile;
pub mod error;
pub mod gallery;
pub mod lexer;
pub mod sat;
pub mod slr;
pub mod so;
pub mod structure;
pub mod text;
pub mod treewidth;
pub mod types;

pub use error::{Error, Result};
pub use structure::{Elem, Signature, Store, Structure};

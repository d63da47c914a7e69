//! Exact symbolic algebra for the multi-time Dyson and Airy equations.
//!
//! Layers, bottom up:
//!
//! * [`ring`]: rational polynomials over declared generators, including
//!   exponential generators and an optional truncated small parameter;
//! * [`jet`]: polynomials in the formal derivatives of `logP`;
//! * [`diffop`]: differential operators, Leibniz composition, commutators,
//!   Wronskians;
//! * [`families`]: the named operator families on window endpoints and times;
//! * [`theorem`], [`series`], [`commutators`], [`corollary`], [`jk`]: the
//!   checks built on top, each producing a serialisable report.

pub mod commutators;
pub mod corollary;
pub mod diffop;
pub mod dsl;
pub mod families;
pub mod jet;
pub mod jk;
pub mod ring;
pub mod series;
pub mod theorem;

pub use diffop::{wronskian, DiffOp, NumOp};
pub use families::{AiryOps, DysonOps, Layout};
pub use jet::{Jet, JetExpr};
pub use ring::{Context, GenKind, Poly, Q};
pub use theorem::AiryForm;

#[derive(Debug, thiserror::Error)]
pub enum SymbolicError {
    #[error("context error: {0}")]
    Context(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("type error: {0}")]
    Type(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

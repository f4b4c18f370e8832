//! Einstein index notation: parsing, validation and evaluation.
//!
//! ```text
//! equation := factor '=' ['+'|'-'] term (('+'|'-') term)*
//! term     := factor (['*'] factor)*
//! factor   := number | Name ['^' group] ['_' group]      (either order)
//! group    := letter | '{' letter+ '}'
//! ```
//!
//! The minus sign may be ASCII `-` or `−`. Spans are byte offsets into the
//! original text.

mod eval;
mod parse;
mod validate;

use serde::{Deserialize, Serialize};

pub use eval::{evaluate, explicit_form};
pub use parse::parse;
pub use validate::{validate, IndexClass, TermIndices, ValidationReport, Verdict, Violation};

/// Half-open byte range `[start, end)` into the source text.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at byte {}: {message}", span.start)]
pub struct ParseError {
    pub message: String,
    pub span: Span,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Upper,
    Lower,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexOccurrence {
    pub letter: char,
    pub level: Level,
    pub span: Span,
}

/// A named tensor with its upper and lower index letters, in slot order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Symbol {
    pub name: String,
    pub span: Span,
    pub upper: Vec<IndexOccurrence>,
    pub lower: Vec<IndexOccurrence>,
}

impl Symbol {
    /// Occurrences in slot order: upper first, then lower.
    pub fn occurrences(&self) -> impl Iterator<Item = &IndexOccurrence> {
        self.upper.iter().chain(&self.lower)
    }
}

/// Coefficient times a product of symbols. Numeric factors and signs are
/// folded into `coefficient`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coefficient: f64,
    pub factors: Vec<Symbol>,
    pub span: Span,
}

impl Term {
    pub fn occurrences(&self) -> impl Iterator<Item = &IndexOccurrence> {
        self.factors.iter().flat_map(Symbol::occurrences)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexExpression {
    pub source: String,
    pub lhs: Symbol,
    pub terms: Vec<Term>,
}

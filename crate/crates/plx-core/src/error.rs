//! Error taxonomy shared by every module in the crate.
//!
//! The library never touches the filesystem; IO errors stay in the CLI. Every
//! failure here is either a malformed input document, a structurally invalid
//! tree, or a request that names something the receiving artifact does not
//! contain.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Textual input (JSON document, source file, condition, feature model)
    /// could not be tokenized or parsed.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A tree violates a structural rule (nesting, token placement, label
    /// requirements, id uniqueness). `node` names the offending node.
    #[error("invalid structure at {node}: {message}")]
    Structure { node: String, message: String },

    /// A variant id was requested that the receiving artifact does not know.
    #[error("unknown variant: {0}")]
    UnknownVariant(String),

    /// The same variant id was supplied twice where ids must be unique.
    #[error("duplicate variant: {0}")]
    DuplicateVariant(String),

    /// A node id does not exist in the graph or platform it was used against.
    #[error("unknown node id: {0}")]
    UnknownNode(u32),

    /// A feature name does not exist in the feature model it was used against.
    #[error("unknown feature: {0}")]
    UnknownFeature(String),

    /// A configuration or algorithm parameter is out of its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A component binding is incomplete or names unknown slots.
    #[error("invalid binding: {0}")]
    Binding(String),

    /// Folding a clone-class member into a component template failed, or the
    /// folded template could not reproduce a member.
    #[error("component extraction failed for member {member}: {message}")]
    Extraction { member: u32, message: String },

    /// Clone classes handed to the refactoring step share nodes or nest into
    /// each other.
    #[error("overlapping clone classes: {0}")]
    OverlappingClasses(String),

    /// The generator ran out of eligible sites for the requested workload.
    #[error("generator capacity exceeded: {0}")]
    Capacity(String),

    /// Enumeration or expansion would exceed a hard safety bound.
    #[error("limit exceeded: {0}")]
    LimitExceeded(String),
}

impl Error {
    /// Convenience constructor for [`Error::Structure`] with a node id.
    pub fn structure(node_id: u32, message: impl Into<String>) -> Self {
        Error::Structure {
            node: format!("node {node_id}"),
            message: message.into(),
        }
    }

    /// Convenience constructor for [`Error::Parse`].
    pub fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}

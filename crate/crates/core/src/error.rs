use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("signature error: {0}")]
    Signature(String),

    #[error("invalid world {world} (structure has {world_count} worlds)")]
    InvalidWorld { world: usize, world_count: usize },

    #[error("structures must have at least one world")]
    EmptyStructure,

    #[error("line {line}: {message}")]
    StructureSyntax { line: usize, message: String },

    #[error("syntax error at offset {offset}: {message}")]
    FormulaSyntax { offset: usize, message: String },

    #[error("formula is not in the fragment (c = {c}, l = {l}): crk = {crk}, nd = {nd}")]
    OutsideFragment {
        c: usize,
        l: usize,
        crk: usize,
        nd: usize,
    },

    #[error("unassigned variable `{0}`")]
    UnassignedVariable(String),

    #[error("arity violation: {0}")]
    Arity(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resource guard exceeded: {0}")]
    ResourceLimit(String),
}

impl Error {
    pub fn is_resource_limit(&self) -> bool {
        matches!(self, Error::ResourceLimit(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

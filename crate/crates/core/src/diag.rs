use std::fmt;

use serde::Serialize;

/// Broad class of a model diagnostic, used by callers that need to tell
/// anticipated mutant defects apart from referential breakage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagKind {
    /// Feature tree shape: parents, cycles, unreachable features.
    Tree,
    GroupSize,
    /// Dangling or cross-region references.
    Reference,
    DuplicateId,
    /// Out-degree and trigger rules of pseudo-states.
    PseudoState,
    Type,
    /// Duplicate `(feature, value)` pairs or empty mappings.
    Mapping,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Diagnostic {
    pub kind: DiagKind,
    /// Dotted path to the offending element, e.g. `region Shop/transition t4`.
    pub location: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(kind: DiagKind, location: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { kind, location: location.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

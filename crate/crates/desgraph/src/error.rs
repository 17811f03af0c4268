use thiserror::Error;

/// Errors raised while building, assigning, serving or exporting a design.
#[derive(Debug, Error)]
pub enum Error {
    #[error("factor `{0}` is already defined")]
    DuplicateFactor(String),
    #[error("unknown parent factor `{0}`")]
    UnknownParent(String),
    #[error("parent level `{0}` does not exist in factor `{1}`")]
    UnknownParentLevel(String, String),
    #[error("level specification for `{0}` is empty")]
    EmptySpec(String),
    #[error("duplicate level `{0}` in factor `{1}`")]
    DuplicateLevel(String, String),
    #[error("crossing requires at least two factors")]
    FewerThanTwoParents,
    #[error("rules for `{0}` do not cover parent level `{1}`")]
    IncompleteRules(String, String),
    #[error("no treatment factors are defined")]
    NoTreatments,
    #[error("unknown unit factor `{0}`")]
    UnknownUnit(String),
    #[error("`{0}` is not a unit factor")]
    TargetNotAUnit(String),
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("factor `{0}` has role {1} where {2} was expected")]
    RoleMismatch(String, String, String),
    #[error("factor `{0}` cannot be alloted to itself")]
    SelfAllotment(String),
    #[error("treatment factor `{0}` appears in more than one allotment")]
    DuplicateAllotment(String),
    #[error("no allotment to assign")]
    NoAllotment,
    #[error("unknown ordering `{0}`")]
    UnknownOrdering(String),
    #[error("`{0}` is a reserved ordering name")]
    ReservedName(String),
    #[error("constraint factor `{0}` is not an ancestor of `{1}`")]
    ConstraintRefersToNonAncestor(String, String),
    #[error("ordering for `{0}` returned {1} indices for {2} units")]
    LengthMismatch(String, usize, usize),
    #[error("expected a constraint of {0} unit factors, got {1}")]
    BadConstraintArity(usize, usize),
    #[error("the row unit has {0} levels but there are {1} treatments")]
    RowCountMismatch(usize, usize),
    #[error("The graph cannot be converted to a table format.")]
    NotConvertible,
    #[error("allotment `{0}` has not been assigned")]
    UnassignedTreatments(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("unknown record factor `{0}`")]
    UnknownRecord(String),
    #[error("contradictory bounds for `{0}`")]
    ContradictoryBounds(String),
    #[error("process `{0}` matches no record factor and does not start with `.`")]
    BadName(String),
    #[error("process `{0}` declares output `{1}` which is not a record factor")]
    UnknownRecordColumn(String, String),
    #[error("unknown simulation process `{0}`")]
    UnknownProcess(String),
    #[error("process `{0}` returned {1} values for {2} rows")]
    ShapeMismatch(String, usize, usize),
    #[error("unknown recipe `{0}`")]
    UnknownKind(String),
    #[error("invalid recipe parameters: {0}")]
    InvalidParams(String),
    #[error("`{0}` already exists (pass overwrite to replace)")]
    TargetExists(String),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Semantic { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

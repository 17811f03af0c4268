//! A grammar of experimental designs: declare units, treatments and records
//! as factors in a paired graph, allot and assign treatments with pluggable
//! orderings, then serve the design as a table for export or simulation.

pub mod assign;
pub mod design;
pub mod dsl;
pub mod error;
pub mod factors;
pub mod menu;
pub mod records;
pub mod rng;
pub mod serve;
pub mod simulate;
pub mod squares;

pub use assign::{register_ordering, registered, ordering_williams, Table};
pub use design::{Design, EdgeKind, Factor, Role, Scalar};
pub use error::{Error, Result};
pub use factors::{
    conditioned_on, count, crossed_by, lvls, nested_in, nested_in_rules, rule, rule_rest, values,
    LevelSpec,
};
pub use records::{export_design, parse_validation, Expectation, RuleKind, ValidationRule, ValueType};
pub use serve::{ingest_table, Cell, ColType, DesignTable, TableColumn};
pub use simulate::{CensorSpec, Invocation, Params, SimCtx, SimOutput, SimProcess};
pub use squares::{mols, williams_square};

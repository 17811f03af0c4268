//! Expected-value rules for record factors and design export: CSV data
//! sheets plus a JSON validation sidecar and manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{Design, EdgeKind, Role};
use crate::error::{Error, Result};
use crate::serve::{Cell, DesignTable};

/// A machine-checkable constraint on a record factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRule {
    pub record: String,
    pub kind: RuleKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RuleKind {
    Range {
        min: Option<f64>,
        max: Option<f64>,
        min_inclusive: bool,
        max_inclusive: bool,
    },
    Levels {
        allowed: Vec<String>,
    },
    Valuetype {
        valuetype: ValueType,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Numeric,
    Integer,
    Text,
}

impl ValidationRule {
    pub(crate) fn is_level_set(&self) -> bool {
        matches!(self.kind, RuleKind::Levels { .. })
    }
}

/// One expectation expression, before merging into rules.
#[derive(Debug, Clone, PartialEq)]
pub enum Expectation {
    Gt(String, f64),
    Ge(String, f64),
    Lt(String, f64),
    Le(String, f64),
    Levels(String, Vec<String>),
    IsType(String, ValueType),
}

impl Expectation {
    fn record(&self) -> &str {
        match self {
            Expectation::Gt(r, _)
            | Expectation::Ge(r, _)
            | Expectation::Lt(r, _)
            | Expectation::Le(r, _)
            | Expectation::Levels(r, _)
            | Expectation::IsType(r, _) => r,
        }
    }
}

impl Design {
    /// Stores expected-value rules. One-sided comparisons on the same record
    /// merge into a single (possibly two-sided) range.
    pub fn expect_rcrds(mut self, exps: Vec<Expectation>) -> Result<Design> {
        for e in &exps {
            let f = self
                .factor_by_name(e.record())
                .filter(|f| f.role == Role::Record)
                .ok_or_else(|| Error::UnknownRecord(e.record().to_string()))?;
            let _ = f;
        }
        // fold comparisons per record, in expression order
        let mut seen: Vec<String> = Vec::new();
        for e in &exps {
            match e {
                Expectation::Levels(r, allowed) => self.rules.push(ValidationRule {
                    record: r.clone(),
                    kind: RuleKind::Levels {
                        allowed: allowed.clone(),
                    },
                }),
                Expectation::IsType(r, vt) => self.rules.push(ValidationRule {
                    record: r.clone(),
                    kind: RuleKind::Valuetype { valuetype: *vt },
                }),
                _ => {
                    if !seen.contains(&e.record().to_string()) {
                        seen.push(e.record().to_string());
                    }
                }
            }
        }
        for r in seen {
            let (mut min, mut max) = (None, None);
            let (mut min_inc, mut max_inc) = (false, false);
            for e in exps.iter().filter(|e| e.record() == r) {
                match *e {
                    Expectation::Gt(_, v) => (min, min_inc) = (Some(v), false),
                    Expectation::Ge(_, v) => (min, min_inc) = (Some(v), true),
                    Expectation::Lt(_, v) => (max, max_inc) = (Some(v), false),
                    Expectation::Le(_, v) => (max, max_inc) = (Some(v), true),
                    _ => {}
                }
            }
            if let (Some(lo), Some(hi)) = (min, max) {
                if lo > hi || (lo == hi && !(min_inc && max_inc)) {
                    return Err(Error::ContradictoryBounds(r));
                }
            }
            self.rules.push(ValidationRule {
                record: r,
                kind: RuleKind::Range {
                    min,
                    max,
                    min_inclusive: min_inc,
                    max_inclusive: max_inc,
                },
            });
        }
        Ok(self)
    }

    /// Per-value verdicts against every rule for `record`. Missing values are
    /// always valid; a record with no rules accepts everything.
    pub fn validate_values(&self, record: &str, values: &[Cell]) -> Result<Vec<bool>> {
        self.factor_by_name(record)
            .filter(|f| f.role == Role::Record)
            .ok_or_else(|| Error::UnknownRecord(record.to_string()))?;
        let rules: Vec<&ValidationRule> =
            self.rules.iter().filter(|r| r.record == record).collect();
        Ok(values
            .iter()
            .map(|v| v.is_missing() || rules.iter().all(|r| r.kind.accepts(v)))
            .collect())
    }
}

impl RuleKind {
    pub fn accepts(&self, v: &Cell) -> bool {
        match self {
            RuleKind::Range {
                min,
                max,
                min_inclusive,
                max_inclusive,
            } => {
                let Some(n) = v.as_num() else { return false };
                let lo_ok = match min {
                    Some(lo) if *min_inclusive => n >= *lo,
                    Some(lo) => n > *lo,
                    None => true,
                };
                let hi_ok = match max {
                    Some(hi) if *max_inclusive => n <= *hi,
                    Some(hi) => n < *hi,
                    None => true,
                };
                lo_ok && hi_ok
            }
            RuleKind::Levels { allowed } => allowed.iter().any(|a| *a == v.csv()),
            RuleKind::Valuetype { valuetype } => match valuetype {
                ValueType::Numeric => v.as_num().is_some(),
                ValueType::Integer => v.as_num().is_some_and(|n| n.fract() == 0.0),
                ValueType::Text => matches!(v, Cell::Text(_)),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Export

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RuleEntry {
    record: String,
    unit: String,
    rule: RuleKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub title: String,
    pub seed: Option<u64>,
    pub files: Vec<String>,
    pub row_counts: BTreeMap<String, usize>,
}

/// Writes `design.csv`, one `sheet_<unit>.csv` per record-carrying unit,
/// `validation.json` and `manifest.json` into `dir`.
pub fn export_design(
    design: &Design,
    table: &DesignTable,
    dir: &Path,
    overwrite: bool,
) -> Result<Manifest> {
    if dir.exists() && !overwrite {
        return Err(Error::TargetExists(dir.display().to_string()));
    }
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut row_counts = BTreeMap::new();

    std::fs::write(dir.join("design.csv"), table.to_csv())?;
    files.push("design.csv".to_string());
    row_counts.insert("design.csv".to_string(), table.nrows());

    for unit in design.factors().iter().filter(|f| f.role == Role::Unit) {
        let records: Vec<String> = design
            .factor_children(unit.id, Some(EdgeKind::Records))
            .into_iter()
            .map(|r| design.factors()[r].name.clone())
            .collect();
        if records.is_empty() {
            continue;
        }
        // one row per level: ancestor unit key columns, the unit itself,
        // then the record columns left empty for data entry
        let ancestors: Vec<_> = {
            let mut a: Vec<_> = design
                .factor_ancestors(unit.id)
                .into_iter()
                .filter(|&f| design.factors()[f].role == Role::Unit)
                .collect();
            a.sort_unstable();
            a
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ancestors
            .iter()
            .map(|&f| design.factors()[f].name.clone())
            .collect();
        header.push(unit.name.clone());
        header.extend(records.iter().cloned());
        w.write_record(&header).unwrap();
        for l in design.levels_of(unit.id) {
            let anc = design.level_ancestry(l);
            let mut row: Vec<String> = ancestors
                .iter()
                .map(|f| {
                    anc.get(f)
                        .map(|&p| design.level_label(p))
                        .unwrap_or_default()
                })
                .collect();
            row.push(design.level_label(l));
            row.extend(records.iter().map(|_| String::new()));
            w.write_record(&row).unwrap();
        }
        let name = format!("sheet_{}.csv", unit.name);
        std::fs::write(dir.join(&name), w.into_inner().unwrap())?;
        row_counts.insert(name.clone(), design.level_count(unit.id));
        files.push(name);
    }

    if !design.rules.is_empty() {
        let entries: Vec<RuleEntry> = design
            .rules
            .iter()
            .map(|r| RuleEntry {
                record: r.record.clone(),
                unit: design
                    .factor_by_name(&r.record)
                    .and_then(|f| design.record_unit(f.id))
                    .map(|u| design.factors()[u].name.clone())
                    .unwrap_or_default(),
                rule: r.kind.clone(),
            })
            .collect();
        std::fs::write(
            dir.join("validation.json"),
            serde_json::to_string_pretty(&entries).unwrap(),
        )?;
        files.push("validation.json".to_string());
    }

    let manifest = Manifest {
        title: design.title_text().to_string(),
        seed: design.seed_state,
        files: {
            let mut f = files.clone();
            f.push("manifest.json".to_string());
            f
        },
        row_counts,
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )?;
    Ok(manifest)
}

/// Parses a validation.json back into rules (unit names are dropped).
pub fn parse_validation(json: &str) -> Result<Vec<ValidationRule>> {
    let entries: Vec<RuleEntry> = serde_json::from_str(json)
        .map_err(|e| Error::InvalidParams(format!("validation.json: {e}")))?;
    Ok(entries
        .into_iter()
        .map(|e| ValidationRule {
            record: e.record,
            kind: e.rule,
        })
        .collect())
}

//! The design object: paired factor and level DAGs plus everything hung off
//! them (allotments, validation rules, simulation processes).

use std::collections::HashMap;
use std::fmt;

use crate::assign::Allotment;
use crate::error::{Error, Result};
use crate::records::ValidationRule;
use crate::simulate::SimProcess;

pub type FactorId = usize;
pub type LevelId = usize;

pub const DEFAULT_TITLE: &str = "An edibble design";

/// The role an experimental factor plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Unit,
    Treatment,
    Record,
}

impl Role {
    pub fn tag(self) -> &'static str {
        match self {
            Role::Unit => "U",
            Role::Treatment => "T",
            Role::Record => "R",
        }
    }

    pub fn export_name(self) -> &'static str {
        match self {
            Role::Unit => "unit",
            Role::Treatment => "trt",
            Role::Record => "rcrd",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Unit => "unit",
            Role::Treatment => "treatment",
            Role::Record => "record",
        };
        f.write_str(s)
    }
}

/// A scalar level value: either text or a number.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Num(f64),
    Text(String),
}

impl Scalar {
    /// Display form; numbers are printed without a trailing `.0`.
    pub fn label(&self) -> String {
        match self {
            Scalar::Text(s) => s.clone(),
            Scalar::Num(n) => format_num(*n),
        }
    }

    pub fn is_num(&self) -> bool {
        matches!(self, Scalar::Num(_))
    }
}

pub fn format_num(n: f64) -> String {
    if n == n.trunc() && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Text(s.to_string())
    }
}
impl From<String> for Scalar {
    fn from(s: String) -> Self {
        Scalar::Text(s)
    }
}
impl From<f64> for Scalar {
    fn from(n: f64) -> Self {
        Scalar::Num(n)
    }
}
impl From<i32> for Scalar {
    fn from(n: i32) -> Self {
        Scalar::Num(n as f64)
    }
}

/// A node of the factor graph.
#[derive(Debug, Clone)]
pub struct Factor {
    pub id: FactorId,
    pub name: String,
    pub role: Role,
    /// Whether the level values (and so the served column) are numeric.
    pub numeric: bool,
}

/// A node of the level graph.
#[derive(Debug, Clone)]
pub struct Level {
    pub id: LevelId,
    pub factor: FactorId,
    pub value: Scalar,
    /// True when the label was generated (`plot01`) rather than user-supplied.
    pub auto_label: bool,
    /// 1-based index within the nesting parent; equals the global index for
    /// unnested factors.
    pub local_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Nests,
    Allots,
    Records,
}

impl EdgeKind {
    pub fn export_name(self) -> &'static str {
        match self {
            EdgeKind::Nests => "nests",
            EdgeKind::Allots => "allots",
            EdgeKind::Records => "records",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FactorEdge {
    pub from: FactorId,
    pub to: FactorId,
    pub kind: EdgeKind,
}

/// The progressively built design: title, both graphs, allotments, validation
/// rules and simulation processes.
#[derive(Debug, Clone, Default)]
pub struct Design {
    pub title: Option<String>,
    pub(crate) factors: Vec<Factor>,
    pub(crate) levels: Vec<Level>,
    pub(crate) factor_edges: Vec<FactorEdge>,
    /// Level edges point from the coarser (or treatment) level to the finer
    /// (or unit) level.
    pub(crate) level_edges: Vec<(LevelId, LevelId)>,
    /// Incoming level edges per level, kept in insertion order.
    pub(crate) level_parents: Vec<Vec<LevelId>>,
    pub allotments: Vec<Allotment>,
    pub(crate) assigned: Vec<bool>,
    pub rules: Vec<ValidationRule>,
    pub(crate) processes: Vec<SimProcess>,
    /// The seed in effect for the last randomised step, recorded so the
    /// design can be reproduced.
    pub seed_state: Option<u64>,
}

impl Design {
    /// Starts a new design; the title is echoed by every renderer.
    pub fn new(title: Option<&str>) -> Design {
        Design {
            title: title.map(|t| t.to_string()),
            ..Default::default()
        }
    }

    pub fn title_text(&self) -> &str {
        self.title.as_deref().unwrap_or(DEFAULT_TITLE)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn factor_by_name(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn factor_id(&self, name: &str) -> Result<FactorId> {
        self.factor_by_name(name)
            .map(|f| f.id)
            .ok_or_else(|| Error::UnknownFactor(name.to_string()))
    }

    pub fn levels_of(&self, factor: FactorId) -> Vec<LevelId> {
        self.levels
            .iter()
            .filter(|l| l.factor == factor)
            .map(|l| l.id)
            .collect()
    }

    pub fn level_count(&self, factor: FactorId) -> usize {
        self.levels.iter().filter(|l| l.factor == factor).count()
    }

    pub(crate) fn add_factor(&mut self, name: &str, role: Role, numeric: bool) -> Result<FactorId> {
        if self.factor_by_name(name).is_some() {
            return Err(Error::DuplicateFactor(name.to_string()));
        }
        let id = self.factors.len();
        self.factors.push(Factor {
            id,
            name: name.to_string(),
            role,
            numeric,
        });
        Ok(id)
    }

    pub(crate) fn add_level(
        &mut self,
        factor: FactorId,
        value: Scalar,
        auto_label: bool,
        local_index: usize,
    ) -> LevelId {
        let id = self.levels.len();
        self.levels.push(Level {
            id,
            factor,
            value,
            auto_label,
            local_index,
        });
        self.level_parents.push(Vec::new());
        id
    }

    pub(crate) fn add_factor_edge(&mut self, from: FactorId, to: FactorId, kind: EdgeKind) {
        debug_assert!(!self.factor_reaches(to, from), "factor graph cycle");
        self.factor_edges.push(FactorEdge { from, to, kind });
    }

    pub(crate) fn add_level_edge(&mut self, from: LevelId, to: LevelId) {
        self.level_edges.push((from, to));
        self.level_parents[to].push(from);
    }

    /// True when `to` is reachable from `from` in the factor graph.
    pub(crate) fn factor_reaches(&self, from: FactorId, to: FactorId) -> bool {
        if from == to {
            return true;
        }
        self.factor_edges
            .iter()
            .filter(|e| e.from == from)
            .any(|e| self.factor_reaches(e.to, to))
    }

    /// Direct parents of `f` in the factor graph, optionally filtered by kind.
    pub(crate) fn factor_parents(&self, f: FactorId, kind: Option<EdgeKind>) -> Vec<FactorId> {
        self.factor_edges
            .iter()
            .filter(|e| e.to == f && kind.map_or(true, |k| e.kind == k))
            .map(|e| e.from)
            .collect()
    }

    pub(crate) fn factor_children(&self, f: FactorId, kind: Option<EdgeKind>) -> Vec<FactorId> {
        self.factor_edges
            .iter()
            .filter(|e| e.from == f && kind.map_or(true, |k| e.kind == k))
            .map(|e| e.to)
            .collect()
    }

    /// All strict ancestors of `f` along nesting and allotment edges.
    pub(crate) fn factor_ancestors(&self, f: FactorId) -> Vec<FactorId> {
        let mut seen = vec![false; self.factors.len()];
        let mut stack = vec![f];
        let mut out = Vec::new();
        while let Some(x) = stack.pop() {
            for p in self.factor_parents(x, None) {
                if !seen[p] {
                    seen[p] = true;
                    out.push(p);
                    stack.push(p);
                }
            }
        }
        out
    }

    /// Ancestor levels of a level, one entry per factor reached. The walk
    /// crosses nesting, unit-allotment and treatment-assignment edges alike.
    pub(crate) fn level_ancestry(&self, level: LevelId) -> HashMap<FactorId, LevelId> {
        let mut out = HashMap::new();
        let mut stack = vec![level];
        while let Some(l) = stack.pop() {
            for &p in &self.level_parents[l] {
                let f = self.levels[p].factor;
                if !out.contains_key(&f) {
                    out.insert(f, p);
                    stack.push(p);
                }
            }
        }
        out
    }

    /// Distinct label of a level (`plot07`), or the user-supplied value.
    pub fn level_label(&self, level: LevelId) -> String {
        let l = &self.levels[level];
        if l.auto_label {
            let f = &self.factors[l.factor];
            let width = digits(self.level_count(l.factor));
            format!("{}{:0width$}", f.name, l.id_within_factor(self) + 1)
        } else {
            l.value.label()
        }
    }

    /// Nested label of a level (`row2` restarting per parent).
    pub fn level_label_nested(&self, level: LevelId) -> String {
        let l = &self.levels[level];
        if l.auto_label {
            let f = &self.factors[l.factor];
            let width = digits(
                self.levels
                    .iter()
                    .filter(|x| x.factor == l.factor)
                    .map(|x| x.local_index)
                    .max()
                    .unwrap_or(1),
            );
            format!("{}{:0width$}", f.name, l.local_index)
        } else {
            l.value.label()
        }
    }

    /// Merges two designs with disjoint factor names; keeps the left title.
    pub fn combine(mut self, other: Design) -> Result<Design> {
        for f in &other.factors {
            if self.factor_by_name(&f.name).is_some() {
                return Err(Error::DuplicateFactor(f.name.clone()));
            }
        }
        let foff = self.factors.len();
        let loff = self.levels.len();
        for f in &other.factors {
            self.factors.push(Factor {
                id: f.id + foff,
                ..f.clone()
            });
        }
        for l in &other.levels {
            self.levels.push(Level {
                id: l.id + loff,
                factor: l.factor + foff,
                ..l.clone()
            });
            self.level_parents.push(Vec::new());
        }
        for e in &other.factor_edges {
            self.factor_edges.push(FactorEdge {
                from: e.from + foff,
                to: e.to + foff,
                kind: e.kind,
            });
        }
        for &(a, b) in &other.level_edges {
            self.level_edges.push((a + loff, b + loff));
            self.level_parents[b + loff].push(a + loff);
        }
        self.allotments.extend(other.allotments.iter().cloned());
        self.assigned.extend(other.assigned.iter().copied());
        self.rules.extend(other.rules.iter().cloned());
        self.processes.extend(other.processes.iter().cloned());
        Ok(self)
    }

    /// Prettified tree: title as root, unit nesting as branches. A factor
    /// nested in several parents appears under each of them.
    pub fn print_tree(&self) -> String {
        let mut out = String::new();
        out.push_str(self.title_text());
        let is_tree_child = |f: &Factor| {
            self.factor_parents(f.id, Some(EdgeKind::Nests))
                .iter()
                .any(|&p| self.factors[p].role == Role::Unit && f.role == Role::Unit)
        };
        let roots: Vec<FactorId> = self
            .factors
            .iter()
            .filter(|f| !is_tree_child(f))
            .map(|f| f.id)
            .collect();
        for (i, &r) in roots.iter().enumerate() {
            self.tree_branch(&mut out, r, "", i + 1 == roots.len());
        }
        out
    }

    fn tree_branch(&self, out: &mut String, f: FactorId, prefix: &str, last: bool) {
        let n = self.level_count(f);
        let word = if n == 1 { "level" } else { "levels" };
        out.push('\n');
        out.push_str(prefix);
        out.push_str(if last { "\\-" } else { "+-" });
        out.push_str(&format!("{} ({} {})", self.factors[f].name, n, word));
        let children: Vec<FactorId> = if self.factors[f].role == Role::Unit {
            self.factor_children(f, Some(EdgeKind::Nests))
                .into_iter()
                .filter(|&c| self.factors[c].role == Role::Unit)
                .collect()
        } else {
            Vec::new()
        };
        let child_prefix = format!("{}{}", prefix, if last { "  " } else { "| " });
        for (i, &c) in children.iter().enumerate() {
            self.tree_branch(out, c, &child_prefix, i + 1 == children.len());
        }
    }

    /// Export one of the two graphs as DOT or JSON.
    pub fn graph_export(&self, which: GraphKind, format: GraphFormat) -> String {
        match (which, format) {
            (GraphKind::Factors, GraphFormat::Dot) => self.factors_dot(),
            (GraphKind::Levels, GraphFormat::Dot) => self.levels_dot(),
            (GraphKind::Factors, GraphFormat::Json) => self.factors_json(),
            (GraphKind::Levels, GraphFormat::Json) => self.levels_json(),
        }
    }

    fn factors_dot(&self) -> String {
        let mut s = String::from("digraph design {\n");
        for f in &self.factors {
            s.push_str(&format!(
                "  n{} [label=\"{} ({})\", role=\"{}\"];\n",
                f.id,
                f.name,
                self.level_count(f.id),
                f.role.export_name()
            ));
        }
        for e in &self.factor_edges {
            s.push_str(&format!(
                "  n{} -> n{} [kind=\"{}\"];\n",
                e.from,
                e.to,
                e.kind.export_name()
            ));
        }
        s.push_str("}\n");
        s
    }

    fn levels_dot(&self) -> String {
        let mut s = String::from("digraph design {\n");
        for l in &self.levels {
            s.push_str(&format!(
                "  n{} [label=\"{}\", factor=\"{}\"];\n",
                l.id,
                self.level_label(l.id),
                self.factors[l.factor].name
            ));
        }
        for &(a, b) in &self.level_edges {
            s.push_str(&format!("  n{a} -> n{b};\n"));
        }
        s.push_str("}\n");
        s
    }

    fn factors_json(&self) -> String {
        let nodes: Vec<serde_json::Value> = self
            .factors
            .iter()
            .map(|f| {
                serde_json::json!({
                    "id": f.id,
                    "name": f.name,
                    "role": f.role.export_name(),
                    "levels": self.level_count(f.id),
                })
            })
            .collect();
        let edges: Vec<serde_json::Value> = self
            .factor_edges
            .iter()
            .map(|e| {
                serde_json::json!({
                    "from": e.from, "to": e.to, "kind": e.kind.export_name(),
                })
            })
            .collect();
        serde_json::json!({ "title": self.title_text(), "nodes": nodes, "edges": edges })
            .to_string()
    }

    fn levels_json(&self) -> String {
        let nodes: Vec<serde_json::Value> = self
            .levels
            .iter()
            .map(|l| {
                serde_json::json!({
                    "id": l.id,
                    "label": self.level_label(l.id),
                    "factor": self.factors[l.factor].name,
                })
            })
            .collect();
        let edges: Vec<serde_json::Value> = self
            .level_edges
            .iter()
            .map(|&(a, b)| serde_json::json!({ "from": a, "to": b }))
            .collect();
        serde_json::json!({ "title": self.title_text(), "nodes": nodes, "edges": edges })
            .to_string()
    }
}

impl Level {
    fn id_within_factor(&self, d: &Design) -> usize {
        d.levels[..self.id]
            .iter()
            .filter(|l| l.factor == self.factor)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Factors,
    Levels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Dot,
    Json,
}

pub(crate) fn digits(n: usize) -> usize {
    n.max(1).to_string().len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::count;

    #[test]
    fn new_design_titles() {
        let d = Design::new(Some("Wheat field trial"));
        assert_eq!(d.title_text(), "Wheat field trial");
        assert_eq!(d.factors().len(), 0);
        let d = Design::new(None);
        assert_eq!(d.title_text(), "An edibble design");
    }

    #[test]
    fn tree_single_unit() {
        let d = Design::new(Some("Demo for defining units"))
            .set_units([("site", count(4))])
            .unwrap();
        assert_eq!(
            d.print_tree(),
            "Demo for defining units\n\\-site (4 levels)"
        );
    }

    #[test]
    fn tree_empty_design() {
        assert_eq!(Design::new(Some("t")).print_tree(), "t");
    }

    #[test]
    fn combine_self_collides() {
        let d = Design::new(None).set_units([("site", count(4))]).unwrap();
        let e = d.clone().combine(d).unwrap_err();
        assert!(matches!(e, Error::DuplicateFactor(_)));
    }

    #[test]
    fn combine_empty() {
        let d = Design::new(None).combine(Design::new(None)).unwrap();
        assert_eq!(d.factors().len(), 0);
    }

    #[test]
    fn empty_graph_export() {
        let d = Design::new(None);
        let dot = d.graph_export(GraphKind::Factors, GraphFormat::Dot);
        assert_eq!(dot, "digraph design {\n}\n");
    }
}

//! Defining unit, treatment and record factors, and the within-role helpers
//! for nesting, crossing and conditional treatments.

use crate::design::{Design, EdgeKind, FactorId, LevelId, Role, Scalar};
use crate::error::{Error, Result};

/// How the levels of a new factor are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelSpec {
    /// `n` auto-labelled levels.
    Count(usize),
    /// One level per listed value.
    Values(Vec<Scalar>),
    /// Like `Values` but the whole list is taken literally even for a single
    /// number (`lvls(4)` is one level whose value is 4).
    SingleLevels(Vec<Scalar>),
    /// Levels exist within each level of `parent`.
    Nested {
        parent: String,
        inner: Box<NestedSpec>,
    },
    /// Cartesian product of two or more factors; the first varies fastest.
    Crossed(Vec<String>),
    /// A treatment whose admissible values depend on another treatment.
    Conditioned {
        parent: String,
        rules: Vec<PerParentRule>,
    },
}

/// What goes inside `nested_in`.
#[derive(Debug, Clone, PartialEq)]
pub enum NestedSpec {
    Spec(LevelSpec),
    Rules(Vec<PerParentRule>),
}

/// One `matches ~ spec` rule; `matches = None` is the `.` catch-all.
#[derive(Debug, Clone, PartialEq)]
pub struct PerParentRule {
    pub matches: Option<Vec<String>>,
    pub spec: RuleSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleSpec {
    Count(usize),
    Values(Vec<Scalar>),
}

pub fn count(n: usize) -> LevelSpec {
    LevelSpec::Count(n)
}

pub fn values<S: Into<Scalar>, I: IntoIterator<Item = S>>(vs: I) -> LevelSpec {
    LevelSpec::Values(vs.into_iter().map(Into::into).collect())
}

pub fn lvls<S: Into<Scalar>, I: IntoIterator<Item = S>>(vs: I) -> LevelSpec {
    LevelSpec::SingleLevels(vs.into_iter().map(Into::into).collect())
}

pub fn nested_in(parent: &str, inner: LevelSpec) -> LevelSpec {
    LevelSpec::Nested {
        parent: parent.to_string(),
        inner: Box::new(NestedSpec::Spec(inner)),
    }
}

pub fn nested_in_rules(parent: &str, rules: Vec<PerParentRule>) -> LevelSpec {
    LevelSpec::Nested {
        parent: parent.to_string(),
        inner: Box::new(NestedSpec::Rules(rules)),
    }
}

pub fn crossed_by<I: IntoIterator<Item = S>, S: Into<String>>(factors: I) -> LevelSpec {
    LevelSpec::Crossed(factors.into_iter().map(Into::into).collect())
}

pub fn conditioned_on(parent: &str, rules: Vec<PerParentRule>) -> LevelSpec {
    LevelSpec::Conditioned {
        parent: parent.to_string(),
        rules,
    }
}

/// `matches ~ spec` rule constructor.
pub fn rule<I: IntoIterator<Item = S>, S: Into<String>>(matches: I, spec: RuleSpec) -> PerParentRule {
    PerParentRule {
        matches: Some(matches.into_iter().map(Into::into).collect()),
        spec,
    }
}

/// `. ~ spec` catch-all rule.
pub fn rule_rest(spec: RuleSpec) -> PerParentRule {
    PerParentRule {
        matches: None,
        spec,
    }
}

impl From<usize> for LevelSpec {
    fn from(n: usize) -> Self {
        LevelSpec::Count(n)
    }
}

impl Design {
    pub fn set_units<S, I>(self, specs: I) -> Result<Design>
    where
        S: Into<String>,
        I: IntoIterator<Item = (S, LevelSpec)>,
    {
        self.set_factors(Role::Unit, specs)
    }

    pub fn set_trts<S, I>(self, specs: I) -> Result<Design>
    where
        S: Into<String>,
        I: IntoIterator<Item = (S, LevelSpec)>,
    {
        self.set_factors(Role::Treatment, specs)
    }

    fn set_factors<S, I>(mut self, role: Role, specs: I) -> Result<Design>
    where
        S: Into<String>,
        I: IntoIterator<Item = (S, LevelSpec)>,
    {
        for (name, spec) in specs {
            let name = name.into();
            expand_spec(&mut self, &name, role, &spec)?;
        }
        Ok(self)
    }

    /// `record = unit` pairs: a record factor measured on an existing unit.
    pub fn set_rcrds<S, I>(mut self, pairs: I) -> Result<Design>
    where
        S: Into<String>,
        I: IntoIterator<Item = (S, S)>,
    {
        for (record, unit) in pairs {
            let (record, unit) = (record.into(), unit.into());
            let uf = self
                .factor_by_name(&unit)
                .ok_or_else(|| Error::UnknownUnit(unit.clone()))?;
            if uf.role != Role::Unit {
                return Err(Error::TargetNotAUnit(unit));
            }
            let uid = uf.id;
            let rid = self.add_factor(&record, Role::Record, true)?;
            self.add_factor_edge(uid, rid, EdgeKind::Records);
        }
        Ok(self)
    }

    /// `unit = [records...]` orientation; the resulting graph is identical.
    pub fn set_rcrds_of<S, I, R>(mut self, pairs: I) -> Result<Design>
    where
        S: Into<String>,
        R: Into<String>,
        I: IntoIterator<Item = (S, Vec<R>)>,
    {
        for (unit, records) in pairs {
            let unit = unit.into();
            let records: Vec<(String, String)> = records
                .into_iter()
                .map(|r| (r.into(), unit.clone()))
                .collect();
            self = self.set_rcrds(records)?;
        }
        Ok(self)
    }

    /// The unit a record factor is measured on.
    pub(crate) fn record_unit(&self, record: FactorId) -> Option<FactorId> {
        self.factor_parents(record, Some(EdgeKind::Records))
            .into_iter()
            .next()
    }
}

fn expand_spec(d: &mut Design, name: &str, role: Role, spec: &LevelSpec) -> Result<()> {
    match spec {
        LevelSpec::Count(n) => {
            if *n < 1 {
                return Err(Error::EmptySpec(name.to_string()));
            }
            let f = d.add_factor(name, role, false)?;
            for i in 0..*n {
                d.add_level(f, Scalar::Text(String::new()), true, i + 1);
            }
            Ok(())
        }
        LevelSpec::Values(vs) => {
            add_value_levels(d, name, role, vs)?;
            Ok(())
        }
        LevelSpec::SingleLevels(vs) => {
            if vs.is_empty() {
                return Err(Error::EmptySpec(name.to_string()));
            }
            let numeric = vs.iter().all(Scalar::is_num);
            let f = d.add_factor(name, role, numeric)?;
            for (i, v) in vs.iter().enumerate() {
                d.add_level(f, v.clone(), false, i + 1);
            }
            Ok(())
        }
        LevelSpec::Nested { parent, inner } => expand_nested(d, name, role, parent, inner),
        LevelSpec::Crossed(factors) => {
            let f = prepare_crossed(d, name, role, factors)?;
            let parent_levels: Vec<Vec<LevelId>> = factors
                .iter()
                .map(|p| d.levels_of(d.factor_id(p).unwrap()))
                .collect();
            cross_product(d, f, &parent_levels, None, &mut 0);
            Ok(())
        }
        LevelSpec::Conditioned { parent, rules } => expand_conditioned(d, name, parent, rules),
    }
}

fn add_value_levels(d: &mut Design, name: &str, role: Role, vs: &[Scalar]) -> Result<FactorId> {
    if vs.is_empty() {
        return Err(Error::EmptySpec(name.to_string()));
    }
    let numeric = vs.iter().all(Scalar::is_num);
    let f = d.add_factor(name, role, numeric)?;
    for (i, v) in vs.iter().enumerate() {
        let label = v.label();
        if vs[..i].iter().any(|w| w.label() == label) {
            return Err(Error::DuplicateLevel(label, name.to_string()));
        }
        d.add_level(f, v.clone(), false, i + 1);
    }
    Ok(f)
}

fn expand_nested(
    d: &mut Design,
    name: &str,
    role: Role,
    parent: &str,
    inner: &NestedSpec,
) -> Result<()> {
    let pf = d
        .factor_by_name(parent)
        .ok_or_else(|| Error::UnknownParent(parent.to_string()))?;
    if pf.role != role {
        return Err(Error::RoleMismatch(
            parent.to_string(),
            pf.role.to_string(),
            role.to_string(),
        ));
    }
    let pid = pf.id;
    let parent_levels = d.levels_of(pid);

    match inner {
        NestedSpec::Spec(LevelSpec::Crossed(factors)) => {
            let f = prepare_crossed(d, name, role, factors)?;
            d.add_factor_edge(pid, f, EdgeKind::Nests);
            let mut local = 0usize;
            for pl in parent_levels {
                // Restrict each crossed factor to the levels under this parent.
                let groups: Vec<Vec<LevelId>> = factors
                    .iter()
                    .map(|p| {
                        let cf = d.factor_id(p).unwrap();
                        d.levels_of(cf)
                            .into_iter()
                            .filter(|&l| d.level_ancestry(l).get(&pid) == Some(&pl))
                            .collect()
                    })
                    .collect();
                cross_product(d, f, &groups, Some(pl), &mut local);
            }
            Ok(())
        }
        NestedSpec::Spec(spec) => {
            let per_parent: Vec<RuleSpec> = match spec {
                LevelSpec::Count(n) => {
                    if *n < 1 {
                        return Err(Error::EmptySpec(name.to_string()));
                    }
                    vec![RuleSpec::Count(*n); parent_levels.len()]
                }
                LevelSpec::Values(vs) => vec![RuleSpec::Values(vs.clone()); parent_levels.len()],
                other => {
                    return Err(Error::EmptySpec(format!(
                        "{name}: unsupported nested spec {other:?}"
                    )))
                }
            };
            add_nested_levels(d, name, role, pid, &parent_levels, &per_parent)
        }
        NestedSpec::Rules(rules) => {
            let resolved = resolve_rules(d, name, pid, &parent_levels, rules)?;
            add_nested_levels(d, name, role, pid, &parent_levels, &resolved)
        }
    }
}

/// Matches per-parent rules against parent levels, in parent-level order.
/// Explicit matches win; the `.` catch-all picks up whatever is left.
fn resolve_rules(
    d: &Design,
    name: &str,
    parent: FactorId,
    parent_levels: &[LevelId],
    rules: &[PerParentRule],
) -> Result<Vec<RuleSpec>> {
    let labels: Vec<String> = parent_levels.iter().map(|&l| d.level_label(l)).collect();
    let parent_name = d.factors()[parent].name.clone();
    let mut out: Vec<Option<RuleSpec>> = vec![None; parent_levels.len()];
    let mut wildcard: Option<&PerParentRule> = None;
    for r in rules {
        match &r.matches {
            None => {
                if wildcard.is_some() {
                    return Err(Error::IncompleteRules(name.to_string(), ".".to_string()));
                }
                wildcard = Some(r);
            }
            Some(ms) => {
                for m in ms {
                    let idx = labels
                        .iter()
                        .position(|l| l == m)
                        .ok_or_else(|| Error::UnknownParentLevel(m.clone(), parent_name.clone()))?;
                    out[idx] = Some(r.spec.clone());
                }
            }
        }
    }
    for (i, slot) in out.iter_mut().enumerate() {
        if slot.is_none() {
            match wildcard {
                Some(r) => *slot = Some(r.spec.clone()),
                None => {
                    return Err(Error::IncompleteRules(name.to_string(), labels[i].clone()))
                }
            }
        }
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

fn add_nested_levels(
    d: &mut Design,
    name: &str,
    role: Role,
    parent: FactorId,
    parent_levels: &[LevelId],
    per_parent: &[RuleSpec],
) -> Result<()> {
    let numeric = per_parent.iter().all(|s| match s {
        RuleSpec::Count(_) => false,
        RuleSpec::Values(vs) => vs.iter().all(Scalar::is_num),
    }) && per_parent
        .iter()
        .any(|s| matches!(s, RuleSpec::Values(_)));
    let f = d.add_factor(name, role, numeric)?;
    d.add_factor_edge(parent, f, EdgeKind::Nests);
    for (&pl, spec) in parent_levels.iter().zip(per_parent) {
        match spec {
            RuleSpec::Count(n) => {
                if *n < 1 {
                    return Err(Error::EmptySpec(name.to_string()));
                }
                for i in 0..*n {
                    let l = d.add_level(f, Scalar::Text(String::new()), true, i + 1);
                    d.add_level_edge(pl, l);
                }
            }
            RuleSpec::Values(vs) => {
                if vs.is_empty() {
                    return Err(Error::EmptySpec(name.to_string()));
                }
                for (i, v) in vs.iter().enumerate() {
                    let label = v.label();
                    if d.levels_of(f).iter().any(|&x| d.level_label(x) == label) {
                        return Err(Error::DuplicateLevel(label, name.to_string()));
                    }
                    let l = d.add_level(f, v.clone(), false, i + 1);
                    d.add_level_edge(pl, l);
                }
            }
        }
    }
    Ok(())
}

fn prepare_crossed(d: &mut Design, name: &str, role: Role, factors: &[String]) -> Result<FactorId> {
    if factors.len() < 2 {
        return Err(Error::FewerThanTwoParents);
    }
    let mut ids = Vec::new();
    for p in factors {
        let pf = d
            .factor_by_name(p)
            .ok_or_else(|| Error::UnknownParent(p.clone()))?;
        if pf.role != role {
            return Err(Error::RoleMismatch(
                p.clone(),
                pf.role.to_string(),
                role.to_string(),
            ));
        }
        ids.push(pf.id);
    }
    let f = d.add_factor(name, role, false)?;
    for pid in ids {
        d.add_factor_edge(pid, f, EdgeKind::Nests);
    }
    Ok(f)
}

/// Adds one level per combination; the first constituent varies fastest.
fn cross_product(
    d: &mut Design,
    f: FactorId,
    groups: &[Vec<LevelId>],
    extra_parent: Option<LevelId>,
    local: &mut usize,
) {
    let total: usize = groups.iter().map(Vec::len).product();
    for r in 0..total {
        let mut idx = r;
        let mut combo = Vec::with_capacity(groups.len());
        for g in groups {
            combo.push(g[idx % g.len()]);
            idx /= g.len();
        }
        *local += 1;
        let l = d.add_level(f, Scalar::Text(String::new()), true, *local);
        if let Some(p) = extra_parent {
            d.add_level_edge(p, l);
        }
        for c in combo {
            d.add_level_edge(c, l);
        }
    }
}

fn expand_conditioned(
    d: &mut Design,
    name: &str,
    parent: &str,
    rules: &[PerParentRule],
) -> Result<()> {
    let pf = d
        .factor_by_name(parent)
        .ok_or_else(|| Error::UnknownParent(parent.to_string()))?;
    if pf.role != Role::Treatment {
        return Err(Error::RoleMismatch(
            parent.to_string(),
            pf.role.to_string(),
            Role::Treatment.to_string(),
        ));
    }
    let pid = pf.id;
    let parent_levels = d.levels_of(pid);
    let resolved = resolve_rules(d, name, pid, &parent_levels, rules)?;
    let all_values: Vec<Vec<Scalar>> = resolved
        .iter()
        .map(|s| match s {
            RuleSpec::Values(vs) => Ok(vs.clone()),
            RuleSpec::Count(_) => Err(Error::EmptySpec(format!(
                "{name}: conditioned rules must list values"
            ))),
        })
        .collect::<Result<_>>()?;
    let numeric = all_values.iter().flatten().all(Scalar::is_num);
    let f = d.add_factor(name, Role::Treatment, numeric)?;
    d.add_factor_edge(pid, f, EdgeKind::Nests);
    // One level per distinct value, in order of first appearance; the level
    // graph links it from every parent level it is admissible under.
    let mut level_of: Vec<(String, LevelId)> = Vec::new();
    for (&pl, vs) in parent_levels.iter().zip(&all_values) {
        for v in vs {
            let label = v.label();
            let lid = match level_of.iter().find(|(l, _)| *l == label) {
                Some(&(_, lid)) => lid,
                None => {
                    let lid = d.add_level(f, v.clone(), false, level_of.len() + 1);
                    level_of.push((label, lid));
                    lid
                }
            };
            d.add_level_edge(pl, lid);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Treatment combinations

/// The joint treatment combinations of a set of treatment factors, in the
/// canonical row order used by `trts_table` and by assignment.
pub(crate) struct TrtCombos {
    pub factors: Vec<FactorId>,
    pub rows: Vec<Vec<LevelId>>,
}

impl Design {
    /// Joint combinations for `subset` (all treatment factors when `None`).
    ///
    /// Unconditioned factors are fully crossed with earlier-declared factors
    /// varying fastest. A conditioned factor whose parent is included expands
    /// with it: parent levels in declaration order, admissible child values
    /// within each.
    pub(crate) fn treatment_combos(&self, subset: Option<&[FactorId]>) -> Result<TrtCombos> {
        let included: Vec<FactorId> = self
            .factors()
            .iter()
            .filter(|f| f.role == Role::Treatment)
            .map(|f| f.id)
            .filter(|id| subset.map_or(true, |s| s.contains(id)))
            .collect();
        if included.is_empty() {
            return Err(Error::NoTreatments);
        }

        // Conditioned parent of a treatment factor, when both are included.
        let cond_parent = |f: FactorId| -> Option<FactorId> {
            self.factor_parents(f, Some(EdgeKind::Nests))
                .into_iter()
                .find(|&p| self.factors()[p].role == Role::Treatment && included.contains(&p))
        };

        // Slots in declaration order; conditioned children ride along with
        // their parent's slot.
        struct Slot {
            factors: Vec<FactorId>,          // parent first, then children
            rows: Vec<Vec<LevelId>>,         // one row per joint slot value
        }
        let mut slots: Vec<Slot> = Vec::new();
        for &f in &included {
            if cond_parent(f).is_some() {
                continue;
            }
            let children: Vec<FactorId> = included
                .iter()
                .copied()
                .filter(|&c| cond_parent(c) == Some(f))
                .collect();
            let mut rows: Vec<Vec<LevelId>> = Vec::new();
            for pl in self.levels_of(f) {
                let mut partial = vec![vec![pl]];
                for &c in &children {
                    let vals: Vec<LevelId> = self
                        .levels_of(c)
                        .into_iter()
                        .filter(|&l| self.level_parents[l].contains(&pl))
                        .collect();
                    let mut next = Vec::new();
                    for row in &partial {
                        for &v in &vals {
                            let mut r = row.clone();
                            r.push(v);
                            next.push(r);
                        }
                    }
                    partial = next;
                }
                rows.extend(partial);
            }
            let mut factors = vec![f];
            factors.extend(children);
            slots.push(Slot { factors, rows });
        }

        let total: usize = slots.iter().map(|s| s.rows.len()).product();
        let mut rows = Vec::with_capacity(total);
        for r in 0..total {
            let mut idx = r;
            let mut assignment: Vec<(FactorId, LevelId)> = Vec::new();
            for s in &slots {
                let row = &s.rows[idx % s.rows.len()];
                idx /= s.rows.len();
                assignment.extend(s.factors.iter().copied().zip(row.iter().copied()));
            }
            // Emit columns in declaration order.
            let row: Vec<LevelId> = included
                .iter()
                .map(|f| assignment.iter().find(|(g, _)| g == f).unwrap().1)
                .collect();
            rows.push(row);
        }
        Ok(TrtCombos {
            factors: included,
            rows,
        })
    }
}

//! Allotment (factor-graph edges) and assignment (level-graph edges): the
//! in-built ordering algorithms, constraint handling, named square-based
//! orderings and the pluggable ordering registry.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::design::{Design, EdgeKind, FactorId, LevelId, Role};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::squares;

/// One declared high-level mapping, `treatments ~ unit` or `unit ~ unit`.
#[derive(Debug, Clone)]
pub struct Allotment {
    pub lhs: Vec<String>,
    pub rhs: String,
    pub kind: AllotKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllotKind {
    TrtsToUnit,
    UnitToUnit,
}

/// A plain rectangular view handed to ordering functions: treatment
/// combinations or units (the latter with all ancestor unit columns).
/// Row position is the stable internal row index.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let i = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

/// An ordering plugin: receives the treatments table, the units table, the
/// constraint factor names and a seeded RNG; returns one 0-based treatment
/// row index per unit row, order-aligned with the units table.
pub type OrderingFn =
    dyn Fn(&Table, &Table, &[String], &mut ChaCha8Rng) -> Result<Vec<usize>> + Send + Sync;

const BUILT_IN: &[&str] = &[
    "systematic",
    "systematic-fastest",
    "systematic-slowest",
    "systematic-random",
    "systematic-random-fastest",
    "systematic-random-slowest",
    "random",
    "latin",
    "graeco",
    "hyper-graeco",
    "youden",
    "bibd",
];

fn registry() -> &'static RwLock<HashMap<String, Arc<OrderingFn>>> {
    static REG: OnceLock<RwLock<HashMap<String, Arc<OrderingFn>>>> = OnceLock::new();
    REG.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Registers a custom ordering usable in assign_trts/assign_units.
/// Re-registering a name replaces the previous implementation.
pub fn register_ordering(name: &str, f: Arc<OrderingFn>) -> Result<()> {
    if BUILT_IN.contains(&name) {
        return Err(Error::ReservedName(name.to_string()));
    }
    registry().write().unwrap().insert(name.to_string(), f);
    Ok(())
}

pub fn registered(name: &str) -> Option<Arc<OrderingFn>> {
    registry().read().unwrap().get(name).cloned()
}

/// The canonical systematic variants (synonyms resolved).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InBuilt {
    SystematicFastest,
    SystematicSlowest,
    SystematicRandomFastest,
    SystematicRandomSlowest,
    Random,
}

fn in_built(name: &str) -> Option<InBuilt> {
    match name {
        "systematic" | "systematic-fastest" => Some(InBuilt::SystematicFastest),
        "systematic-slowest" => Some(InBuilt::SystematicSlowest),
        "systematic-random" | "systematic-random-fastest" => Some(InBuilt::SystematicRandomFastest),
        "systematic-random-slowest" => Some(InBuilt::SystematicRandomSlowest),
        "random" => Some(InBuilt::Random),
        _ => None,
    }
}

impl Design {
    /// Declares treatment-to-unit allotments; lhs may be an interaction
    /// written `a:b`. No level edges are created yet.
    pub fn allot_trts(self, formulas: &[(&str, &str)]) -> Result<Design> {
        self.allot(formulas, AllotKind::TrtsToUnit)
    }

    /// Declares unit-to-unit allotments (lhs the coarser factor).
    pub fn allot_units(self, formulas: &[(&str, &str)]) -> Result<Design> {
        self.allot(formulas, AllotKind::UnitToUnit)
    }

    fn allot(mut self, formulas: &[(&str, &str)], kind: AllotKind) -> Result<Design> {
        let lhs_role = match kind {
            AllotKind::TrtsToUnit => Role::Treatment,
            AllotKind::UnitToUnit => Role::Unit,
        };
        for &(lhs, rhs) in formulas {
            let lhs_names: Vec<String> = lhs.split(':').map(|s| s.trim().to_string()).collect();
            if lhs_names.iter().any(|n| n == rhs) {
                return Err(Error::SelfAllotment(rhs.to_string()));
            }
            let rf = self
                .factor_by_name(rhs)
                .ok_or_else(|| Error::UnknownFactor(rhs.to_string()))?;
            if rf.role != Role::Unit {
                return Err(Error::RoleMismatch(
                    rhs.to_string(),
                    rf.role.to_string(),
                    Role::Unit.to_string(),
                ));
            }
            let rid = rf.id;
            let mut lhs_ids = Vec::new();
            for n in &lhs_names {
                let f = self
                    .factor_by_name(n)
                    .ok_or_else(|| Error::UnknownFactor(n.clone()))?;
                if f.role != lhs_role {
                    return Err(Error::RoleMismatch(
                        n.clone(),
                        f.role.to_string(),
                        lhs_role.to_string(),
                    ));
                }
                let already = self
                    .allotments
                    .iter()
                    .filter(|a| a.kind == kind)
                    .any(|a| a.lhs.contains(n));
                if already {
                    return Err(Error::DuplicateAllotment(n.clone()));
                }
                lhs_ids.push(f.id);
            }
            for &l in &lhs_ids {
                self.add_factor_edge(l, rid, EdgeKind::Allots);
            }
            self.allotments.push(Allotment {
                lhs: lhs_names,
                rhs: rhs.to_string(),
                kind,
            });
            self.assigned.push(false);
        }
        Ok(self)
    }

    /// Assigns every pending treatment allotment, in declared order. A single
    /// ordering recycles to all allotments.
    pub fn assign_trts(
        self,
        order: &[&str],
        seed: Option<u64>,
        constrain: &[(&str, &[&str])],
    ) -> Result<Design> {
        self.assign(AllotKind::TrtsToUnit, order, seed, constrain)
    }

    /// Assigns every pending unit allotment.
    pub fn assign_units(
        self,
        order: &[&str],
        seed: Option<u64>,
        constrain: &[(&str, &[&str])],
    ) -> Result<Design> {
        self.assign(AllotKind::UnitToUnit, order, seed, constrain)
    }

    fn assign(
        mut self,
        kind: AllotKind,
        order: &[&str],
        seed: Option<u64>,
        constrain: &[(&str, &[&str])],
    ) -> Result<Design> {
        let targets: Vec<usize> = (0..self.allotments.len())
            .filter(|&i| self.allotments[i].kind == kind && !self.assigned[i])
            .collect();
        if targets.is_empty() {
            return Err(Error::NoAllotment);
        }
        if order.len() != 1 && order.len() != targets.len() {
            return Err(Error::LengthMismatch(
                "order".to_string(),
                order.len(),
                targets.len(),
            ));
        }
        let master = seed
            .or(self.seed_state)
            .unwrap_or_else(crate::rng::entropy_seed);
        self.seed_state = Some(master);
        for (k, &ai) in targets.iter().enumerate() {
            let name = order[if order.len() == 1 { 0 } else { k }];
            self.assign_one(ai, name, master, constrain)?;
            self.assigned[ai] = true;
        }
        Ok(self)
    }

    /// Constraint factors for `rhs`: the explicit entry if given, otherwise
    /// the direct nesting parents (the structure defined among the units).
    fn constraint_factors(
        &self,
        rhs: FactorId,
        constrain: &[(&str, &[&str])],
    ) -> Result<Vec<FactorId>> {
        let rhs_name = &self.factors()[rhs].name;
        if let Some((_, names)) = constrain.iter().find(|(u, _)| u == rhs_name) {
            let ancestors = self.factor_ancestors(rhs);
            let mut out = Vec::new();
            for n in *names {
                let f = self
                    .factor_by_name(n)
                    .ok_or_else(|| Error::UnknownFactor(n.to_string()))?;
                if f.role != Role::Unit || !ancestors.contains(&f.id) {
                    return Err(Error::ConstraintRefersToNonAncestor(
                        n.to_string(),
                        rhs_name.clone(),
                    ));
                }
                out.push(f.id);
            }
            Ok(out)
        } else {
            Ok(self
                .factor_parents(rhs, Some(EdgeKind::Nests))
                .into_iter()
                .filter(|&p| self.factors()[p].role == Role::Unit)
                .collect())
        }
    }

    fn assign_one(
        &mut self,
        ai: usize,
        order: &str,
        master: u64,
        constrain: &[(&str, &[&str])],
    ) -> Result<()> {
        let alot = self.allotments[ai].clone();
        let rhs = self.factor_id(&alot.rhs)?;
        let units = self.levels_of(rhs);

        // lhs rows: treatment combinations, or the coarser unit's levels
        let (lhs_factors, rows): (Vec<FactorId>, Vec<Vec<LevelId>>) = match alot.kind {
            AllotKind::TrtsToUnit => {
                let ids: Vec<FactorId> = alot
                    .lhs
                    .iter()
                    .map(|n| self.factor_id(n))
                    .collect::<Result<_>>()?;
                let combos = self.treatment_combos(Some(&ids))?;
                (combos.factors, combos.rows)
            }
            AllotKind::UnitToUnit => {
                let f = self.factor_id(&alot.lhs[0])?;
                (vec![f], self.levels_of(f).into_iter().map(|l| vec![l]).collect())
            }
        };

        let cfs = self.constraint_factors(rhs, constrain)?;
        let picks: Vec<usize> = if let Some(ib) = in_built(order) {
            self.grouped_assignment(ib, master, ai, &units, &rows, &cfs)?
        } else {
            let f = named_ordering(order)
                .or_else(|| registered(order))
                .ok_or_else(|| Error::UnknownOrdering(order.to_string()))?;
            let trts_view = self.trts_view(&lhs_factors, &rows);
            let units_view = self.units_view(rhs, &units);
            let cnames: Vec<String> = cfs
                .iter()
                .map(|&c| self.factors()[c].name.clone())
                .collect();
            let mut rng = stream(master, &[3, ai as u64]);
            let picks = f(&trts_view, &units_view, &cnames, &mut rng)?;
            if picks.len() != units.len() {
                return Err(Error::LengthMismatch(
                    order.to_string(),
                    picks.len(),
                    units.len(),
                ));
            }
            if let Some(&bad) = picks.iter().find(|&&p| p >= rows.len()) {
                return Err(Error::InvalidParams(format!(
                    "ordering `{order}` returned treatment index {bad} out of range"
                )));
            }
            picks
        };

        for (&u, &p) in units.iter().zip(&picks) {
            for &l in &rows[p] {
                self.add_level_edge(l, u);
            }
        }
        Ok(())
    }

    /// Runs an in-built ordering within each randomisation group. Groups are
    /// keyed by the units' constraint-factor ancestor levels and processed in
    /// unit-id order; each group draws from its own child RNG stream.
    fn grouped_assignment(
        &self,
        ib: InBuilt,
        master: u64,
        ai: usize,
        units: &[LevelId],
        rows: &[Vec<LevelId>],
        cfs: &[FactorId],
    ) -> Result<Vec<usize>> {
        // one seeded shuffle of the treatment row order per allotment
        let shuffled: Vec<usize> = {
            let mut idx: Vec<usize> = (0..rows.len()).collect();
            if matches!(
                ib,
                InBuilt::SystematicRandomFastest | InBuilt::SystematicRandomSlowest
            ) {
                idx.shuffle(&mut stream(master, &[2, ai as u64]));
            }
            idx
        };

        // group units by their constraint-level key, first-appearance order
        let mut keys: Vec<Vec<Option<LevelId>>> = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new(); // unit positions
        for (i, &u) in units.iter().enumerate() {
            let anc = self.level_ancestry(u);
            let key: Vec<Option<LevelId>> = cfs.iter().map(|f| anc.get(f).copied()).collect();
            match keys.iter().position(|k| *k == key) {
                Some(g) => groups[g].push(i),
                None => {
                    keys.push(key);
                    groups.push(vec![i]);
                }
            }
        }

        let mut picks = vec![0usize; units.len()];
        for (gi, (key, members)) in keys.iter().zip(&groups).enumerate() {
            // admissible rows: lhs levels consistent with the group key
            let adm: Vec<usize> = shuffled
                .iter()
                .copied()
                .filter(|&r| {
                    rows[r].iter().all(|&l| {
                        let anc = self.level_ancestry(l);
                        cfs.iter().zip(key).all(|(f, k)| match (anc.get(f), k) {
                            (Some(a), Some(b)) => a == b,
                            _ => true,
                        })
                    })
                })
                .collect();
            if adm.is_empty() {
                return Err(Error::NoTreatments);
            }
            let n = members.len();
            let t = adm.len();
            let seq: Vec<usize> = match ib {
                InBuilt::SystematicFastest | InBuilt::SystematicRandomFastest => {
                    (0..n).map(|j| adm[j % t]).collect()
                }
                InBuilt::SystematicSlowest | InBuilt::SystematicRandomSlowest => {
                    // first n mod t levels get the extra replicate, contiguous
                    let (q, extra) = (n / t, n % t);
                    let mut s = Vec::with_capacity(n);
                    for (k, &r) in adm.iter().enumerate() {
                        let reps = q + usize::from(k < extra);
                        s.extend(std::iter::repeat(r).take(reps));
                    }
                    s
                }
                InBuilt::Random => {
                    let mut rng = stream(master, &[1, ai as u64, gi as u64]);
                    let mut s = Vec::with_capacity(n);
                    for &r in &adm {
                        s.extend(std::iter::repeat(r).take(n / t));
                    }
                    let mut pool = adm.clone();
                    pool.shuffle(&mut rng);
                    s.extend(pool.into_iter().take(n % t));
                    s.shuffle(&mut rng);
                    s
                }
            };
            for (&pos, &r) in members.iter().zip(&seq) {
                picks[pos] = r;
            }
        }
        Ok(picks)
    }

    fn trts_view(&self, factors: &[FactorId], rows: &[Vec<LevelId>]) -> Table {
        Table {
            columns: factors.iter().map(|&f| self.factors()[f].name.clone()).collect(),
            rows: rows
                .iter()
                .map(|r| r.iter().map(|&l| self.level_label(l)).collect())
                .collect(),
        }
    }

    /// Units view: the unit itself plus every ancestor factor column.
    fn units_view(&self, rhs: FactorId, units: &[LevelId]) -> Table {
        let mut cols = vec![rhs];
        cols.extend(self.factor_ancestors(rhs));
        Table {
            columns: cols.iter().map(|&f| self.factors()[f].name.clone()).collect(),
            rows: units
                .iter()
                .map(|&u| {
                    let anc = self.level_ancestry(u);
                    cols.iter()
                        .map(|&f| {
                            if f == rhs {
                                self.level_label(u)
                            } else {
                                anc.get(&f).map(|&l| self.level_label(l)).unwrap_or_default()
                            }
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Named square-based orderings

fn named_ordering(name: &str) -> Option<Arc<OrderingFn>> {
    match name {
        "latin" => Some(Arc::new(ordering_latin)),
        "graeco" => Some(Arc::new(|t: &Table, u: &Table, c: &[String], r: &mut ChaCha8Rng| {
            ordering_mols(t, u, c, r, 2)
        })),
        "hyper-graeco" => Some(Arc::new(
            |t: &Table, u: &Table, c: &[String], r: &mut ChaCha8Rng| ordering_mols(t, u, c, r, 3),
        )),
        "youden" => Some(Arc::new(ordering_youden)),
        "bibd" => Some(Arc::new(ordering_bibd)),
        _ => None,
    }
}

/// Unique values of a column in first-appearance order.
fn uniques<'a>(col: &[&'a str]) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for &v in col {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn row_col_layout<'a>(
    units: &'a Table,
    constraint: &[String],
) -> Result<(Vec<&'a str>, Vec<&'a str>, Vec<&'a str>, Vec<&'a str>)> {
    if constraint.len() != 2 {
        return Err(Error::BadConstraintArity(2, constraint.len()));
    }
    let a = units.column(&constraint[0])?;
    let b = units.column(&constraint[1])?;
    let (ua, ub) = (uniques(&a), uniques(&b));
    // smaller unit is the row, larger the column
    if ua.len() <= ub.len() {
        Ok((a, b, ua, ub))
    } else {
        Ok((b, a, ub, ua))
    }
}

/// Tiled, treatment-relabelled Williams squares across the columns; the row
/// unit's cardinality must equal the number of treatments.
pub fn ordering_williams(
    trts: &Table,
    units: &Table,
    constraint: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let (rows, cols, urows, ucols) = row_col_layout(units, constraint)?;
    let t = trts.rows.len();
    if urows.len() != t {
        return Err(Error::RowCountMismatch(urows.len(), t));
    }
    let design = squares::williams_design(t);
    let width = design[0].len();
    let ncols = ucols.len();
    let ntiles = ncols.div_ceil(width);
    // trt index per (row, col) cell, surplus columns truncated
    let mut cell = vec![vec![0usize; ncols]; t];
    for tile in 0..ntiles {
        let mut relabel: Vec<usize> = (0..t).collect();
        relabel.shuffle(rng);
        for w in 0..width {
            let c = tile * width + w;
            if c >= ncols {
                break;
            }
            for (p, row) in design.iter().enumerate() {
                cell[p][c] = relabel[row[w]];
            }
        }
    }
    emit_cells(&rows, &cols, &urows, &ucols, |r, c| cell[r][c])
}

fn ordering_latin(
    trts: &Table,
    units: &Table,
    constraint: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let (rows, cols, urows, ucols) = row_col_layout(units, constraint)?;
    let t = trts.rows.len();
    if urows.len() != t || ucols.len() != t {
        return Err(Error::RowCountMismatch(urows.len().min(ucols.len()), t));
    }
    let sq = squares::latin_square(t);
    let (pr, pc, ps) = three_perms(t, rng);
    emit_cells(&rows, &cols, &urows, &ucols, |r, c| ps[sq[pr[r]][pc[c]]])
}

/// Graeco (k=2) and hyper-Graeco (k=3) assignment of a joint treatment table
/// of t^k combinations onto a t×t row/column layout.
fn ordering_mols(
    trts: &Table,
    units: &Table,
    constraint: &[String],
    rng: &mut ChaCha8Rng,
    k: usize,
) -> Result<Vec<usize>> {
    let (rows, cols, urows, ucols) = row_col_layout(units, constraint)?;
    let t = urows.len();
    if ucols.len() != t || trts.rows.len() != t.pow(k as u32) {
        return Err(Error::RowCountMismatch(trts.rows.len(), t.pow(k as u32)));
    }
    let squares = squares::mols(t, k)?;
    let (pr, pc, _) = three_perms(t, rng);
    let syms: Vec<Vec<usize>> = (0..k).map(|_| permutation(t, rng)).collect();
    emit_cells(&rows, &cols, &urows, &ucols, |r, c| {
        // joint combination index: first treatment factor varies fastest
        squares
            .iter()
            .zip(&syms)
            .rev()
            .fold(0usize, |acc, (sq, sym)| acc * t + sym[sq[pr[r]][pc[c]]])
    })
}

fn ordering_youden(
    trts: &Table,
    units: &Table,
    constraint: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let (rows, cols, urows, ucols) = row_col_layout(units, constraint)?;
    let (nc, t) = (urows.len(), ucols.len());
    if trts.rows.len() != t {
        return Err(Error::RowCountMismatch(ucols.len(), trts.rows.len()));
    }
    let y = squares::youden_rows(t, nc)?;
    let pr = permutation(nc, rng);
    let pc = permutation(t, rng);
    let ps = permutation(t, rng);
    emit_cells(&rows, &cols, &urows, &ucols, |r, c| ps[y[pr[r]][pc[c]]])
}

/// Blocks of equal size k; treatments per block from a BIBD search.
fn ordering_bibd(
    trts: &Table,
    units: &Table,
    constraint: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if constraint.len() != 1 {
        return Err(Error::BadConstraintArity(1, constraint.len()));
    }
    let col = units.column(&constraint[0])?;
    let blocks = uniques(&col);
    let b = blocks.len();
    let k = col.len() / b;
    if k * b != col.len() || blocks.iter().any(|&g| col.iter().filter(|&&v| v == g).count() != k)
    {
        return Err(Error::InvalidParams(
            "bibd ordering requires equal-sized blocks".to_string(),
        ));
    }
    let t = trts.rows.len();
    if (k * b) % t != 0 {
        return Err(Error::InvalidParams(format!(
            "bibd ordering: {b} blocks of {k} units cannot replicate {t} treatments equally"
        )));
    }
    let r = k * b / t;
    let mut design = squares::bibd(t, k, r, rng)?;
    for bl in &mut design {
        bl.shuffle(rng);
    }
    let mut used = vec![0usize; b];
    col.iter()
        .map(|&g| {
            let gi = blocks.iter().position(|&x| x == g).unwrap();
            let pick = design[gi][used[gi]];
            used[gi] += 1;
            Ok(pick)
        })
        .collect()
}

fn permutation(t: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..t).collect();
    p.shuffle(rng);
    p
}

fn three_perms(t: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    (permutation(t, rng), permutation(t, rng), permutation(t, rng))
}

/// Maps each unit row's (row-level, col-level) to a treatment index.
fn emit_cells(
    rows: &[&str],
    cols: &[&str],
    urows: &[&str],
    ucols: &[&str],
    cell: impl Fn(usize, usize) -> usize,
) -> Result<Vec<usize>> {
    rows.iter()
        .zip(cols)
        .map(|(rv, cv)| {
            let r = urows.iter().position(|x| x == rv).unwrap();
            let c = ucols.iter().position(|x| x == cv).unwrap();
            Ok(cell(r, c))
        })
        .collect()
}

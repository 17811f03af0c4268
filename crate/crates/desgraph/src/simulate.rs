//! Simulation of record values: user-registered processes executed with
//! parameters and censoring, plus an automatic scheme that fills every
//! record with values satisfying its validation rules.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::design::{Design, Role};
use crate::error::{Error, Result};
use crate::records::{RuleKind, ValueType};
use crate::rng::{entropy_seed, stream};
use crate::serve::{Cell, DesignTable};

/// Named parameter sets passed to process bodies; a scalar is a one-element
/// vector.
pub type Params = BTreeMap<String, Vec<f64>>;

/// Read-only view of the served table handed to process bodies.
pub struct SimCtx<'a> {
    table: &'a DesignTable,
}

impl SimCtx<'_> {
    /// Row count of the table being simulated over.
    pub fn n(&self) -> usize {
        self.table.nrows()
    }

    /// Column values rendered as strings.
    pub fn labels(&self, name: &str) -> Result<Vec<String>> {
        Ok(self.table.column(name)?.cells.iter().map(Cell::csv).collect())
    }

    /// Integer codes per row, numbered by first appearance.
    pub fn codes(&self, name: &str) -> Result<Vec<usize>> {
        let labels = self.labels(name)?;
        let mut seen: Vec<&str> = Vec::new();
        Ok(labels
            .iter()
            .map(|l| {
                if let Some(i) = seen.iter().position(|s| s == l) {
                    i
                } else {
                    seen.push(l);
                    seen.len() - 1
                }
            })
            .collect())
    }

    /// Numeric column values.
    pub fn nums(&self, name: &str) -> Result<Vec<f64>> {
        self.table
            .column(name)?
            .cells
            .iter()
            .map(|c| {
                c.as_num()
                    .ok_or_else(|| Error::InvalidParams(format!("column `{name}` is not numeric")))
            })
            .collect()
    }
}

/// What a process body hands back.
pub enum SimOutput {
    /// One value per row, for the record the process is named after.
    Single(Vec<Cell>),
    /// Named record columns, each one value per row.
    Multi(Vec<(String, Vec<Cell>)>),
}

pub type ProcBody = Arc<dyn Fn(&SimCtx, &Params, &mut ChaCha8Rng) -> Result<SimOutput> + Send + Sync>;

/// A user simulation scheme. A name matching a record factor yields that one
/// column; a leading-dot name declares the record columns it produces.
#[derive(Clone)]
pub struct SimProcess {
    pub name: String,
    /// Declared output records; required for (and only for) dotted names.
    pub outputs: Vec<String>,
    pub params: Params,
    pub body: ProcBody,
}

impl std::fmt::Debug for SimProcess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimProcess")
            .field("name", &self.name)
            .field("outputs", &self.outputs)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl SimProcess {
    pub fn single(
        name: &str,
        params: Params,
        body: impl Fn(&SimCtx, &Params, &mut ChaCha8Rng) -> Result<SimOutput> + Send + Sync + 'static,
    ) -> SimProcess {
        SimProcess {
            name: name.to_string(),
            outputs: Vec::new(),
            params,
            body: Arc::new(body),
        }
    }

    pub fn multi(
        name: &str,
        outputs: &[&str],
        params: Params,
        body: impl Fn(&SimCtx, &Params, &mut ChaCha8Rng) -> Result<SimOutput> + Send + Sync + 'static,
    ) -> SimProcess {
        SimProcess {
            name: name.to_string(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            params,
            body: Arc::new(body),
        }
    }
}

/// Per-record treatment of values falling outside the expected range.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CensorSpec {
    /// Keep the raw value.
    None,
    /// Replace with a missing cell.
    #[default]
    ToMissing,
    /// Pin below-lower to lower and above-upper to upper.
    Clamp(Option<f64>, Option<f64>),
}

/// One simulate_rcrds entry: which process to run, with optional parameter
/// overrides and per-record censoring.
#[derive(Clone, Default)]
pub struct Invocation {
    pub name: String,
    pub params: Params,
    pub censor: BTreeMap<String, CensorSpec>,
}

impl Invocation {
    pub fn new(name: &str) -> Invocation {
        Invocation {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn with_params(mut self, params: Params) -> Invocation {
        self.params = params;
        self
    }

    pub fn censor(mut self, record: &str, spec: CensorSpec) -> Invocation {
        self.censor.insert(record.to_string(), spec);
        self
    }
}

impl Design {
    /// Registers simulation processes; redefining a name replaces it.
    pub fn simulate_process(mut self, processes: Vec<SimProcess>) -> Result<Design> {
        for p in processes {
            if p.name.starts_with('.') {
                for out in &p.outputs {
                    self.factor_by_name(out)
                        .filter(|f| f.role == Role::Record)
                        .ok_or_else(|| Error::UnknownRecordColumn(p.name.clone(), out.clone()))?;
                }
            } else {
                self.factor_by_name(&p.name)
                    .filter(|f| f.role == Role::Record)
                    .ok_or_else(|| Error::BadName(p.name.clone()))?;
            }
            if let Some(slot) = self.processes.iter_mut().find(|q| q.name == p.name) {
                *slot = p;
            } else {
                self.processes.push(p);
            }
        }
        Ok(self)
    }

    /// Runs the named processes against the served table. Every invocation
    /// reads the pristine table, so processes cannot observe each other's
    /// output. Values outside a record's expected range are censored, to
    /// missing by default.
    pub fn simulate_rcrds(&self, invocations: &[Invocation], seed: Option<u64>) -> Result<DesignTable> {
        let base = self.serve_table(&[])?;
        let master = seed.or(self.seed_state).unwrap_or_else(entropy_seed);
        let mut out = base.clone();
        out.seed = Some(master);
        for (i, inv) in invocations.iter().enumerate() {
            let proc = self
                .processes
                .iter()
                .find(|p| p.name == inv.name)
                .ok_or_else(|| Error::UnknownProcess(inv.name.clone()))?;
            let mut params = proc.params.clone();
            for (k, v) in &inv.params {
                params.insert(k.clone(), v.clone());
            }
            let mut rng = stream(master, &[10, i as u64]);
            let ctx = SimCtx { table: &base };
            let produced = (proc.body)(&ctx, &params, &mut rng)?;
            let columns: Vec<(String, Vec<Cell>)> = match produced {
                SimOutput::Single(cells) => vec![(proc.name.clone(), cells)],
                SimOutput::Multi(cols) => {
                    for (name, _) in &cols {
                        if !proc.outputs.contains(name) {
                            return Err(Error::UnknownRecordColumn(proc.name.clone(), name.clone()));
                        }
                    }
                    cols
                }
            };
            for (name, cells) in columns {
                if cells.len() != base.nrows() {
                    return Err(Error::ShapeMismatch(name, base.nrows(), cells.len()));
                }
                let rules: Vec<&RuleKind> = self
                    .rules
                    .iter()
                    .filter(|r| r.record == name)
                    .map(|r| &r.kind)
                    .collect();
                let spec = inv.censor.get(&name).copied().unwrap_or_default();
                let col = out.column_mut(&name)?;
                col.cells = cells
                    .into_iter()
                    .map(|c| censor_value(c, &rules, spec))
                    .collect();
                col.filled = true;
            }
        }
        Ok(out)
    }

    /// Fills every record with automatically simulated values that satisfy
    /// its validation rules.
    pub fn autofill_rcrds(&self, seed: Option<u64>) -> Result<DesignTable> {
        let master = seed.or(self.seed_state).unwrap_or_else(entropy_seed);
        let mut out = self.serve_table(&[])?;
        out.seed = Some(master);
        let records: Vec<_> = self
            .factors()
            .iter()
            .filter(|f| f.role == Role::Record)
            .map(|f| (f.id, f.name.clone()))
            .collect();
        for (ri, (fid, name)) in records.iter().enumerate() {
            let mut rng = stream(master, &[20, ri as u64]);
            let cells = self.autofill_one(*fid, &out, &mut rng)?;
            let col = out.column_mut(name)?;
            col.cells = cells;
            col.filled = true;
        }
        Ok(out)
    }

    fn autofill_one(&self, record: crate::design::FactorId, table: &DesignTable, rng: &mut ChaCha8Rng) -> Result<Vec<Cell>> {
        let name = &self.factors()[record].name;
        let rules: Vec<&RuleKind> = self
            .rules
            .iter()
            .filter(|r| r.record == *name)
            .map(|r| &r.kind)
            .collect();
        let n = table.nrows();

        // A level-set rule makes the record categorical: sample from the
        // allowed set with Dirichlet(1) weights.
        if let Some(RuleKind::Levels { allowed }) = rules.iter().find(|k| matches!(k, RuleKind::Levels { .. })) {
            let mut w: Vec<f64> = (0..allowed.len())
                .map(|_| -f64::ln(1.0 - rng.random::<f64>()))
                .collect();
            let total: f64 = w.iter().sum();
            for x in &mut w {
                *x /= total;
            }
            return Ok((0..n)
                .map(|_| {
                    let mut u = rng.random::<f64>();
                    let mut pick = allowed.len() - 1;
                    for (i, wi) in w.iter().enumerate() {
                        if u < *wi {
                            pick = i;
                            break;
                        }
                        u -= wi;
                    }
                    Cell::Text(allowed[pick].clone())
                })
                .collect());
        }

        let (mut lo, mut hi) = (None, None);
        let (mut lo_inc, mut hi_inc) = (true, true);
        let mut integer = false;
        for k in &rules {
            match k {
                RuleKind::Range {
                    min,
                    max,
                    min_inclusive,
                    max_inclusive,
                } => {
                    lo = *min;
                    hi = *max;
                    lo_inc = *min_inclusive;
                    hi_inc = *max_inclusive;
                }
                RuleKind::Valuetype { valuetype } => integer = *valuetype == ValueType::Integer,
                RuleKind::Levels { .. } => unreachable!(),
            }
        }
        let width = match (lo, hi) {
            (Some(a), Some(b)) => b - a,
            _ => 1.0,
        };

        // 0-2 influencing factors from the record's unit ancestry plus any
        // treatments; each level gets a normal effect at 10% of the range.
        let unit = self
            .record_unit(record)
            .ok_or_else(|| Error::UnknownRecord(name.clone()))?;
        let mut pool: Vec<_> = self
            .factor_ancestors(unit)
            .into_iter()
            .chain(std::iter::once(unit))
            .filter(|&f| self.factors()[f].role == Role::Unit)
            .chain(
                self.factors()
                    .iter()
                    .filter(|f| f.role == Role::Treatment)
                    .map(|f| f.id),
            )
            .filter(|&f| table.column(&self.factors()[f].name).is_ok())
            .collect();
        pool.sort_unstable();
        pool.dedup();
        let k = rng.random_range(0..=pool.len().min(2));
        pool.shuffle(rng);
        pool.truncate(k);

        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut raw = vec![0.0f64; n];
        let ctx = SimCtx { table };
        for f in pool {
            let codes = ctx.codes(&self.factors()[f].name)?;
            let nlev = codes.iter().max().map_or(0, |m| m + 1);
            let effects: Vec<f64> = (0..nlev)
                .map(|_| normal.sample(rng) * 0.1 * width)
                .collect();
            for (r, c) in codes.iter().enumerate() {
                raw[r] += effects[*c];
            }
        }
        for x in raw.iter_mut() {
            *x += normal.sample(rng) * 0.1 * width;
        }

        let eps = 1e-3 * width.abs().max(1.0);
        let softplus = |x: f64| (1.0 + x.exp()).ln();
        let mapped: Vec<f64> = match (lo, hi) {
            (Some(a), Some(b)) => {
                // affine squash into the open interval (a+eps, b-eps)
                let (rmin, rmax) = raw
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), &x| {
                        (mn.min(x), mx.max(x))
                    });
                let (tlo, thi) = (a + eps, b - eps);
                raw.iter()
                    .map(|&x| {
                        if rmax > rmin {
                            tlo + (x - rmin) / (rmax - rmin) * (thi - tlo)
                        } else {
                            (tlo + thi) / 2.0
                        }
                    })
                    .collect()
            }
            (Some(a), None) => raw.iter().map(|&x| a + softplus(x)).collect(),
            (None, Some(b)) => raw.iter().map(|&x| b - softplus(x)).collect(),
            (None, None) => raw,
        };
        Ok(mapped
            .into_iter()
            .map(|v| {
                let v = if integer {
                    let mut r = v.round();
                    if let Some(a) = lo {
                        let floor = if lo_inc { a.ceil() } else { (a + 1.0).floor() };
                        r = r.max(floor);
                    }
                    if let Some(b) = hi {
                        let ceil = if hi_inc { b.floor() } else { (b - 1.0).ceil() };
                        r = r.min(ceil);
                    }
                    r
                } else {
                    v
                };
                Cell::Num(v)
            })
            .collect())
    }
}

fn censor_value(c: Cell, rules: &[&RuleKind], spec: CensorSpec) -> Cell {
    if c.is_missing() {
        return c;
    }
    match spec {
        CensorSpec::None => c,
        CensorSpec::ToMissing => {
            if rules.iter().all(|k| k.accepts(&c)) {
                c
            } else {
                Cell::Missing
            }
        }
        CensorSpec::Clamp(lo, hi) => match c.as_num() {
            Some(mut v) => {
                if let Some(a) = lo {
                    v = v.max(a);
                }
                if let Some(b) = hi {
                    v = v.min(b);
                }
                Cell::Num(v)
            }
            None => Cell::Missing,
        },
    }
}

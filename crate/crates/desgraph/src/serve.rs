//! Serving a design as a rectangular table: one row per finest unit, plus the
//! decorated text rendering, the allot_table shorthand, the treatments-only
//! table and tabular ingestion of existing data.

use crate::design::{format_num, Design, FactorId, Role};
use crate::error::{Error, Result};

/// One table cell; records start out missing.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(n) => Some(*n),
            _ => None,
        }
    }

    /// CSV form; missing is an empty field.
    pub fn csv(&self) -> String {
        match self {
            Cell::Missing => String::new(),
            Cell::Num(n) => format_num(*n),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColType {
    Chr,
    Dbl,
    Int,
    Fct,
}

impl ColType {
    fn tag(self) -> &'static str {
        match self {
            ColType::Chr => "<chr>",
            ColType::Dbl => "<dbl>",
            ColType::Int => "<int>",
            ColType::Fct => "<fct>",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TableColumn {
    pub name: String,
    pub role: Option<Role>,
    /// Level count shown in the role tag, e.g. the 80 in `<R(80)>`.
    pub count: usize,
    pub ctype: ColType,
    pub cells: Vec<Cell>,
    /// Record columns flip to true once simulated or entered; until then the
    /// cells render as the placeholder mark.
    pub filled: bool,
    /// User-supplied text levels are rendered left-aligned.
    pub user_labels: bool,
}

/// The served design: immutable once constructed.
#[derive(Debug, Clone)]
pub struct DesignTable {
    pub title: String,
    pub columns: Vec<TableColumn>,
    pub seed: Option<u64>,
}

impl Design {
    /// Reconciles the level graph into a table with one row per level of the
    /// finest unit. `label_nested` names the unit factors rendered with
    /// per-parent restarting labels; all others show distinct labels.
    pub fn serve_table(&self, label_nested: &[&str]) -> Result<DesignTable> {
        for (a, &done) in self.allotments.iter().zip(self.assigned.iter()) {
            if !done {
                return Err(Error::UnassignedTreatments(a.lhs.join(":")));
            }
        }
        let units: Vec<FactorId> = self
            .factors()
            .iter()
            .filter(|f| f.role == Role::Unit)
            .map(|f| f.id)
            .collect();
        // finest unit: the unique unit with no outgoing edge to another unit
        let sinks: Vec<FactorId> = units
            .iter()
            .copied()
            .filter(|&u| {
                !self
                    .factor_children(u, None)
                    .iter()
                    .any(|&c| self.factors()[c].role == Role::Unit)
            })
            .collect();
        let &[finest] = &sinks[..] else {
            return Err(Error::NotConvertible);
        };

        let rows = self.levels_of(finest);
        let ancestries: Vec<_> = rows.iter().map(|&u| self.level_ancestry(u)).collect();

        let mut columns = Vec::new();
        for f in self.factors() {
            let label = |l: crate::design::LevelId| {
                if label_nested.contains(&f.name.as_str()) {
                    self.level_label_nested(l)
                } else {
                    self.level_label(l)
                }
            };
            let col = match f.role {
                Role::Unit | Role::Treatment => {
                    let cells: Vec<Cell> = rows
                        .iter()
                        .zip(&ancestries)
                        .map(|(&u, anc)| {
                            let l = if f.id == finest {
                                Some(u)
                            } else {
                                anc.get(&f.id).copied()
                            };
                            match (l, f.role) {
                                (Some(l), _) if f.numeric => Ok(Cell::Num(
                                    self.levels()[l].value.as_num().unwrap_or_default(),
                                )),
                                (Some(l), _) => Ok(Cell::Text(label(l))),
                                (None, Role::Treatment) => {
                                    Err(Error::UnassignedTreatments(f.name.clone()))
                                }
                                (None, _) => Err(Error::NotConvertible),
                            }
                        })
                        .collect::<Result<_>>()?;
                    TableColumn {
                        name: f.name.clone(),
                        role: Some(f.role),
                        count: self.level_count(f.id),
                        ctype: if f.numeric { ColType::Dbl } else { ColType::Chr },
                        cells,
                        filled: true,
                        user_labels: self
                            .levels_of(f.id)
                            .iter()
                            .any(|&l| !self.levels()[l].auto_label && !f.numeric),
                    }
                }
                Role::Record => {
                    let unit = self.record_unit(f.id).ok_or(Error::NotConvertible)?;
                    let levelled = self
                        .rules
                        .iter()
                        .any(|r| r.record == f.name && r.is_level_set());
                    TableColumn {
                        name: f.name.clone(),
                        role: Some(Role::Record),
                        count: self.level_count(unit),
                        ctype: if levelled { ColType::Chr } else { ColType::Dbl },
                        cells: vec![Cell::Missing; rows.len()],
                        filled: false,
                        user_labels: false,
                    }
                }
            };
            columns.push(col);
        }
        Ok(DesignTable {
            title: self.title_text().to_string(),
            columns,
            seed: self.seed_state,
        })
    }

    /// Shorthand for allot_trts + assign_trts + serve_table.
    pub fn allot_table(
        self,
        formulas: &[(&str, &str)],
        order: &[&str],
        seed: Option<u64>,
        constrain: &[(&str, &[&str])],
        label_nested: &[&str],
    ) -> Result<DesignTable> {
        self.allot_trts(formulas)?
            .assign_trts(order, seed, constrain)?
            .serve_table(label_nested)
    }

    /// The joint treatment combinations as a plain table (no units needed).
    pub fn trts_table(&self) -> Result<DesignTable> {
        let combos = self.treatment_combos(None)?;
        let columns = combos
            .factors
            .iter()
            .enumerate()
            .map(|(ci, &f)| {
                let fac = &self.factors()[f];
                let cells: Vec<Cell> = combos
                    .rows
                    .iter()
                    .map(|r| {
                        if fac.numeric {
                            Cell::Num(self.levels()[r[ci]].value.as_num().unwrap_or_default())
                        } else {
                            Cell::Text(self.level_label(r[ci]))
                        }
                    })
                    .collect();
                TableColumn {
                    name: fac.name.clone(),
                    role: None,
                    count: self.level_count(f),
                    ctype: if fac.numeric { ColType::Dbl } else { ColType::Chr },
                    cells,
                    filled: true,
                    user_labels: !fac.numeric,
                }
            })
            .collect();
        Ok(DesignTable {
            title: String::new(),
            columns,
            seed: None,
        })
    }
}

impl crate::design::Scalar {
    pub(crate) fn as_num(&self) -> Option<f64> {
        match self {
            crate::design::Scalar::Num(n) => Some(*n),
            crate::design::Scalar::Text(_) => None,
        }
    }
}

/// Builds a DesignTable from existing rectangular data (header + rows),
/// attaching roles to the selected columns; unselected columns keep a blank
/// role. Level counts are the distinct value counts.
pub fn ingest_table(
    header: &[String],
    data: &[Vec<String>],
    units: &[&str],
    trts: &[&str],
    rcrds: &[&str],
    title: &str,
) -> Result<DesignTable> {
    for sel in [units, trts, rcrds] {
        for name in sel {
            if !header.iter().any(|h| h == name) {
                return Err(Error::UnknownColumn(name.to_string()));
            }
        }
    }
    let columns = header
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let raw: Vec<&str> = data.iter().map(|r| r[i].as_str()).collect();
            let all_int = raw.iter().all(|v| v.parse::<i64>().is_ok());
            let all_num = raw.iter().all(|v| v.parse::<f64>().is_ok());
            let role = if units.contains(&name.as_str()) {
                Some(Role::Unit)
            } else if trts.contains(&name.as_str()) {
                Some(Role::Treatment)
            } else if rcrds.contains(&name.as_str()) {
                Some(Role::Record)
            } else {
                None
            };
            let ctype = if all_int {
                ColType::Int
            } else if all_num {
                ColType::Dbl
            } else if role.is_some() {
                ColType::Fct
            } else {
                ColType::Chr
            };
            let cells: Vec<Cell> = raw
                .iter()
                .map(|v| match ctype {
                    ColType::Int | ColType::Dbl => Cell::Num(v.parse().unwrap()),
                    _ => Cell::Text(v.to_string()),
                })
                .collect();
            let mut distinct: Vec<&str> = Vec::new();
            for &v in &raw {
                if !distinct.contains(&v) {
                    distinct.push(v);
                }
            }
            TableColumn {
                name: name.clone(),
                role,
                count: distinct.len(),
                ctype,
                cells,
                filled: true,
                user_labels: matches!(ctype, ColType::Chr | ColType::Fct),
            }
        })
        .collect();
    Ok(DesignTable {
        title: title.to_string(),
        columns,
        seed: None,
    })
}

/// Counts ≥ 1000 use an SI prefix, with `~` marking inexact rounding.
pub fn si_count(n: usize) -> String {
    for (unit, suffix) in [(1_000_000usize, "M"), (1_000, "k")] {
        if n >= unit {
            let whole = (n + unit / 2) / unit;
            return if n % unit == 0 {
                format!("{whole}{suffix}")
            } else {
                format!("~{whole}{suffix}")
            };
        }
    }
    n.to_string()
}

impl DesignTable {
    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.cells.len())
    }

    pub fn column(&self, name: &str) -> Result<&TableColumn> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column_mut(&mut self, name: &str) -> Result<&mut TableColumn> {
        self.columns
            .iter_mut()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// The decorated print: title, dimensions, name/role/type header rows,
    /// up to `max_rows` data rows and a more-rows footer.
    pub fn render_table(&self, max_rows: usize) -> String {
        self.render(max_rows, false)
    }

    /// Plain tibble-style print (no title or role rows), used for treatment
    /// tables and the menu catalogue.
    pub fn render_tibble(&self, max_rows: usize) -> String {
        self.render(max_rows, true)
    }

    fn render(&self, max_rows: usize, tibble: bool) -> String {
        let nrows = self.nrows();
        let shown = nrows.min(max_rows);
        let idx_w = shown.to_string().len();

        // per-column rendered cells with decimal alignment for numerics
        let rendered: Vec<Vec<String>> = self.columns.iter().map(|c| c.render_cells(shown)).collect();
        let widths: Vec<usize> = self
            .columns
            .iter()
            .zip(&rendered)
            .map(|(c, cells)| {
                let meta = [
                    c.name.len(),
                    c.role_tag().len(),
                    c.ctype.tag().len(),
                ];
                meta.into_iter()
                    .chain(cells.iter().map(String::len))
                    .max()
                    .unwrap_or(0)
            })
            .collect();

        // tibble style left-aligns text columns including their headers;
        // the decorated style right-aligns all header rows
        let left: Vec<bool> = self
            .columns
            .iter()
            .map(|c| matches!(c.ctype, ColType::Chr | ColType::Fct) && c.user_labels)
            .collect();
        let pad = |s: &str, w: usize, left: bool| {
            if left {
                format!("{s:<w$}")
            } else {
                format!("{s:>w$}")
            }
        };
        let mut out = String::new();
        if tibble {
            out.push_str(&format!("# A tibble: {} x {}\n", nrows, self.columns.len()));
        } else {
            out.push_str(&format!("# {} \n", self.title));
            out.push_str(&format!("# An edibble: {} x {}\n", nrows, self.columns.len()));
        }
        // header rows are left-aligned only in the tibble style
        let head_rows: Vec<Vec<String>> = {
            let names: Vec<String> = self.columns.iter().map(|c| c.name.clone()).collect();
            let roles: Vec<String> = self.columns.iter().map(|c| c.role_tag()).collect();
            let types: Vec<String> = self.columns.iter().map(|c| c.ctype.tag().to_string()).collect();
            if tibble {
                vec![names, types]
            } else {
                vec![names, roles, types]
            }
        };
        for row in head_rows {
            let mut cells = vec![" ".repeat(idx_w)];
            for (i, v) in row.iter().enumerate() {
                cells.push(pad(v, widths[i], tibble && left[i]));
            }
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        for r in 0..shown {
            let mut cells = vec![format!("{:>idx_w$}", r + 1)];
            for (i, col) in rendered.iter().enumerate() {
                cells.push(pad(&col[r], widths[i], left[i]));
            }
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        if nrows > shown {
            out.push_str(&format!("# i {} more rows\n", si_count(nrows - shown)));
        }
        out
    }

    /// RFC-4180 CSV of the full table; missing cells are empty fields.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .unwrap();
        for r in 0..self.nrows() {
            w.write_record(self.columns.iter().map(|c| c.cells[r].csv()))
                .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

impl TableColumn {
    fn role_tag(&self) -> String {
        match self.role {
            Some(r) => format!("<{}({})>", r.tag(), si_count(self.count)),
            None => String::new(),
        }
    }

    /// Rendered cell texts for the first `shown` rows. Numeric cells align on
    /// the decimal point; unfilled records show the placeholder mark.
    fn render_cells(&self, shown: usize) -> Vec<String> {
        let cells = &self.cells[..shown.min(self.cells.len())];
        let placeholder = if self.filled { "NA" } else { "o" };
        if matches!(self.ctype, ColType::Dbl | ColType::Int) {
            let parts: Vec<Option<(String, String)>> = cells
                .iter()
                .map(|c| {
                    c.as_num().map(|n| {
                        let s = format_num(n);
                        match s.split_once('.') {
                            Some((i, f)) => (i.to_string(), f.to_string()),
                            None => (s, String::new()),
                        }
                    })
                })
                .collect();
            let int_w = parts
                .iter()
                .flatten()
                .map(|(i, _)| i.len())
                .max()
                .unwrap_or(0);
            let frac_w = parts
                .iter()
                .flatten()
                .map(|(_, f)| f.len())
                .max()
                .unwrap_or(0);
            parts
                .iter()
                .map(|p| match p {
                    Some((i, f)) if frac_w > 0 => {
                        let tail = if f.is_empty() {
                            " ".repeat(frac_w + 1)
                        } else {
                            format!(".{f:<frac_w$}")
                        };
                        format!("{i:>int_w$}{tail}")
                    }
                    Some((i, _)) => format!("{i:>int_w$}"),
                    None => placeholder.to_string(),
                })
                .collect()
        } else {
            cells
                .iter()
                .map(|c| match c {
                    Cell::Missing => placeholder.to_string(),
                    Cell::Text(s) => s.clone(),
                    Cell::Num(n) => format_num(*n),
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::{count, crossed_by, nested_in, values};

    fn complex() -> Design {
        Design::new(Some("Complex structure"))
            .set_units([
                ("site", values(["Narrabri", "Horsham", "Parkes", "Roseworthy"])),
                ("col", nested_in("site", count(6))),
                ("row", nested_in("site", count(3))),
                ("plot", nested_in("site", crossed_by(["row", "col"]))),
            ])
            .unwrap()
    }

    #[test]
    fn single_unit_table_renders_verbatim() {
        let t = Design::new(Some("Character vector input demo"))
            .set_units([("site", values(["Narrabri", "Horsham", "Parkes", "Roseworthy"]))])
            .unwrap()
            .serve_table(&[])
            .unwrap();
        let expect = "# Character vector input demo \n\
# An edibble: 4 x 1\n\
\x20       site\n\
\x20     <U(4)>\n\
\x20      <chr>\n\
1 Narrabri  \n\
2 Horsham   \n\
3 Parkes    \n\
4 Roseworthy\n";
        assert_eq!(t.render_table(6), expect);
    }

    #[test]
    fn complex_distinct_labels_verbatim() {
        let t = complex().serve_table(&[]).unwrap();
        let out = t.render_table(20);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "# Complex structure ");
        assert_eq!(lines[1], "# An edibble: 72 x 4");
        assert_eq!(lines[2], "       site     col     row    plot");
        assert_eq!(lines[3], "     <U(4)> <U(24)> <U(12)> <U(72)>");
        assert_eq!(lines[4], "      <chr>   <chr>   <chr>   <chr>");
        assert_eq!(lines[5], " 1 Narrabri   col01   row01  plot01");
        assert_eq!(lines[6], " 2 Narrabri   col01   row02  plot02");
        assert_eq!(lines[23], "19 Horsham    col07   row04  plot19");
        assert_eq!(lines[24], "20 Horsham    col07   row05  plot20");
        assert_eq!(lines[25], "# i 52 more rows");
    }

    #[test]
    fn complex_nested_labels_verbatim() {
        let t = complex().serve_table(&["row", "col"]).unwrap();
        let out = t.render_table(20);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[5], " 1 Narrabri    col1    row1  plot01");
        assert_eq!(lines[23], "19 Horsham     col1    row1  plot19");
    }

    #[test]
    fn unlinked_units_not_convertible() {
        let demo2 = Design::new(Some("Demo for defining units"))
            .set_units([("site", count(4)), ("plot", count(72))])
            .unwrap();
        let e = demo2.serve_table(&[]).unwrap_err();
        assert_eq!(
            e.to_string(),
            "The graph cannot be converted to a table format."
        );
    }

    #[test]
    fn unassigned_allotment_is_an_error() {
        let d = Design::new(None)
            .set_units([("pen", count(2))])
            .unwrap()
            .set_trts([("hay", count(2))])
            .unwrap()
            .allot_trts(&[("hay", "pen")])
            .unwrap();
        assert!(matches!(
            d.serve_table(&[]).unwrap_err(),
            Error::UnassignedTreatments(_)
        ));
    }

    #[test]
    fn calf_table_shape_and_header() {
        let t = Design::new(Some("Calf feeding"))
            .set_units([("pen", count(8)), ("calf", nested_in("pen", count(10)))])
            .unwrap()
            .set_rcrds([("weight", "calf")])
            .unwrap()
            .set_trts([("hay", count(2)), ("antiscour", count(2))])
            .unwrap()
            .allot_table(
                &[("hay", "pen"), ("antiscour", "calf")],
                &["random"],
                Some(645),
                &[],
                &[],
            )
            .unwrap();
        assert_eq!(t.nrows(), 80);
        assert_eq!(t.columns.len(), 5);
        let out = t.render_table(6);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "# Calf feeding ");
        assert_eq!(lines[1], "# An edibble: 80 x 5");
        assert_eq!(lines[2], "     pen    calf  weight    hay  antiscour");
        assert_eq!(lines[3], "  <U(8)> <U(80)> <R(80)> <T(2)>     <T(2)>");
        assert_eq!(lines[4], "   <chr>   <chr>   <dbl>  <chr>      <chr>");
        assert!(lines[5].starts_with("1   pen1  calf01       o   hay"));
        assert_eq!(lines[11], "# i 74 more rows");
    }

    #[test]
    fn trts_table_tibble_verbatim() {
        let d = Design::new(None)
            .set_trts([
                ("variety", values(["a", "b"])),
                ("fertilizer", values(["A", "B"])),
                ("amount", values([0.5, 1.0, 2.0])),
            ])
            .unwrap();
        let out = d.trts_table().unwrap().render_tibble(20);
        let expect = "# A tibble: 12 x 3\n\
\x20  variety fertilizer amount\n\
\x20  <chr>   <chr>       <dbl>\n\
\x201 a       A             0.5\n\
\x202 b       A             0.5\n\
\x203 a       B             0.5\n\
\x204 b       B             0.5\n\
\x205 a       A             1  \n\
\x206 b       A             1  \n\
\x207 a       B             1  \n\
\x208 b       B             1  \n\
\x209 a       A             2  \n\
10 b       A             2  \n\
11 a       B             2  \n\
12 b       B             2  \n";
        assert_eq!(out, expect);
    }

    #[test]
    fn ingest_assigns_roles_and_counts() {
        let header: Vec<String> = ["col", "row", "gen", "yield"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let data: Vec<Vec<String>> = (0..6)
            .map(|i| {
                vec![
                    (i % 3 + 1).to_string(),
                    (i / 3 + 1).to_string(),
                    format!("g{}", i % 2),
                    (400 + i).to_string(),
                ]
            })
            .collect();
        let t = ingest_table(&header, &data, &["col", "row"], &["gen"], &[], "Wheat").unwrap();
        assert_eq!(t.column("col").unwrap().role, Some(Role::Unit));
        assert_eq!(t.column("col").unwrap().count, 3);
        assert_eq!(t.column("gen").unwrap().count, 2);
        assert_eq!(t.column("yield").unwrap().role, None);
        let out = t.render_table(6);
        // role row leaves the unselected column blank
        assert!(out.lines().nth(3).unwrap().contains("<T(2)>"));
        assert!(!out.lines().nth(3).unwrap().contains("yield"));
        let e = ingest_table(&header, &data, &["nope"], &[], &[], "t").unwrap_err();
        assert!(matches!(e, Error::UnknownColumn(_)));
    }

    #[test]
    fn si_counts() {
        assert_eq!(si_count(80), "80");
        assert_eq!(si_count(1000), "1k");
        assert_eq!(si_count(1800), "~2k");
        assert_eq!(si_count(2_000_000), "2M");
    }

    #[test]
    fn csv_round_trip_shape() {
        let t = complex().serve_table(&[]).unwrap();
        let csv = t.to_csv();
        let mut rdr = csv::Reader::from_reader(csv.as_bytes());
        assert_eq!(rdr.records().count(), 72);
    }
}

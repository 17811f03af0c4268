//! Named recipe designs: each expands to spec source the user can copy and
//! tweak, `takeout` runs one immediately, and `scan_menu` lists the
//! catalogue.

use std::collections::BTreeMap;

use rand::prelude::*;

use crate::design::Design;
use crate::dsl;
use crate::error::{Error, Result};
use crate::serve::{Cell, ColType, DesignTable, TableColumn};
use crate::squares;

/// A recipe parameter as given on the command line or in code.
#[derive(Debug, Clone, PartialEq)]
pub enum MenuParam {
    Num(f64),
    List(Vec<f64>),
    Word(String),
}

pub type MenuParams = BTreeMap<String, MenuParam>;

/// An expanded recipe: the spec source plus the seed baked into it.
#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub kind: String,
    pub seed: u64,
    pub source: String,
}

pub const KINDS: &[&str] = &[
    "bibd",
    "crd",
    "factorial",
    "graeco",
    "hyper_graeco",
    "lsd",
    "rcbd",
    "split",
    "strip",
    "youden",
];

const GRAECO_TS: &[usize] = &[3, 4, 5, 7, 8, 9];
const HYPER_GRAECO_TS: &[usize] = &[4, 5, 7, 8, 9];

fn get_int(params: &MenuParams, name: &str) -> Result<Option<usize>> {
    match params.get(name) {
        None => Ok(None),
        Some(MenuParam::Num(n)) if n.fract() == 0.0 && *n >= 0.0 => Ok(Some(*n as usize)),
        Some(other) => Err(Error::InvalidParams(format!(
            "`{name}` must be a non-negative integer, got {other:?}"
        ))),
    }
}

/// Missing numeric parameters are drawn uniformly: counts of units from
/// [2,50], treatments from [2,12], seeds from [1,1000].
fn draw_n(rng: &mut impl Rng) -> usize {
    rng.random_range(2..=50)
}

fn draw_t(rng: &mut impl Rng) -> usize {
    rng.random_range(2..=12)
}

fn draw_seed(rng: &mut impl Rng) -> u64 {
    rng.random_range(1..=1000)
}

/// Expands a recipe with the given parameters; absent parameters are drawn
/// randomly and embedded in the source.
pub fn menu(kind: &str, params: &MenuParams) -> Result<Recipe> {
    menu_with_rng(kind, params, &mut rand::rng())
}

pub fn menu_with_rng(kind: &str, params: &MenuParams, rng: &mut impl Rng) -> Result<Recipe> {
    if !KINDS.contains(&kind) {
        return Err(Error::UnknownKind(kind.to_string()));
    }
    let seed = match get_int(params, "seed")? {
        Some(s) => s as u64,
        None => draw_seed(rng),
    };
    let source = match kind {
        "crd" => {
            let t = get_int(params, "t")?.unwrap_or_else(|| draw_t(rng));
            let n = match (get_int(params, "n")?, get_int(params, "r")?) {
                (Some(n), _) => n,
                (None, Some(r)) => r * t,
                (None, None) => draw_n(rng).max(t),
            };
            format!(
                "design \"Completely Randomised Design\"\n\
                 units:\n  unit = {n}\n\
                 trts:\n  trt = {t}\n\
                 allot:\n  trt ~ unit\n\
                 assign: order = [random], seed = {seed}\n"
            )
        }
        "rcbd" => {
            let t = get_int(params, "t")?.unwrap_or_else(|| draw_t(rng));
            let r = get_int(params, "r")?.unwrap_or_else(|| rng.random_range(2..=10));
            format!(
                "design \"Randomised Complete Block Design\"\n\
                 units:\n  block = {r}\n  unit = nested_in(block, {t})\n\
                 trts:\n  trt = {t}\n\
                 allot:\n  trt ~ unit\n\
                 assign: order = [random], seed = {seed}\n"
            )
        }
        "lsd" => {
            let t = get_int(params, "t")?.unwrap_or_else(|| draw_t(rng));
            format!(
                "design \"Latin Square Design\"\n\
                 units:\n  row = {t}\n  col = {t}\n  unit = crossed_by(row, col)\n\
                 trts:\n  trt = {t}\n\
                 allot:\n  trt ~ unit\n\
                 assign: order = [latin], seed = {seed}\n"
            )
        }
        "graeco" => {
            let t = match get_int(params, "t")? {
                Some(t) => t,
                None => *GRAECO_TS.choose(rng).unwrap(),
            };
            if !GRAECO_TS.contains(&t) {
                return Err(Error::InvalidParams(format!(
                    "graeco requires t in {GRAECO_TS:?}, got {t}"
                )));
            }
            format!(
                "design \"Graeco-Latin Square Design\"\n\
                 units:\n  row = {t}\n  col = {t}\n  unit = crossed_by(row, col)\n\
                 trts:\n  trt1 = {t}\n  trt2 = {t}\n\
                 allot:\n  trt1:trt2 ~ unit\n\
                 assign: order = [graeco], seed = {seed}\n"
            )
        }
        "hyper_graeco" => {
            let t = match get_int(params, "t")? {
                Some(t) => t,
                None => *HYPER_GRAECO_TS.choose(rng).unwrap(),
            };
            if !HYPER_GRAECO_TS.contains(&t) {
                return Err(Error::InvalidParams(format!(
                    "hyper_graeco requires t in {HYPER_GRAECO_TS:?}, got {t}"
                )));
            }
            format!(
                "design \"Hyper-Graeco-Latin Square Design\"\n\
                 units:\n  row = {t}\n  col = {t}\n  unit = crossed_by(row, col)\n\
                 trts:\n  trt1 = {t}\n  trt2 = {t}\n  trt3 = {t}\n\
                 allot:\n  trt1:trt2:trt3 ~ unit\n\
                 assign: order = [hyper-graeco], seed = {seed}\n"
            )
        }
        "factorial" => {
            let trt: Vec<usize> = match params.get("trt") {
                Some(MenuParam::List(vs)) => vs.iter().map(|v| *v as usize).collect(),
                Some(MenuParam::Num(n)) => vec![*n as usize],
                Some(other) => {
                    return Err(Error::InvalidParams(format!(
                        "`trt` must be a list of level counts, got {other:?}"
                    )))
                }
                None => vec![draw_t(rng).min(4), draw_t(rng).min(4)],
            };
            if trt.iter().any(|&x| x < 2) {
                return Err(Error::InvalidParams(
                    "factorial treatment level counts must be at least 2".to_string(),
                ));
            }
            let r = get_int(params, "r")?.unwrap_or_else(|| rng.random_range(2..=10));
            let design = match params.get("design") {
                Some(MenuParam::Word(w)) => w.clone(),
                None => "crd".to_string(),
                Some(other) => {
                    return Err(Error::InvalidParams(format!(
                        "`design` must be crd or rcbd, got {other:?}"
                    )))
                }
            };
            let ncomb: usize = trt.iter().product();
            let trts_block: String = trt
                .iter()
                .enumerate()
                .map(|(i, t)| format!("  trt{} = {t}\n", i + 1))
                .collect();
            let lhs: Vec<String> = (1..=trt.len()).map(|i| format!("trt{i}")).collect();
            let units_block = match design.as_str() {
                "crd" => format!("  unit = {}\n", r * ncomb),
                "rcbd" => format!("  block = {r}\n  unit = nested_in(block, {ncomb})\n"),
                other => {
                    return Err(Error::InvalidParams(format!(
                        "`design` must be crd or rcbd, got `{other}`"
                    )))
                }
            };
            format!(
                "design \"Factorial Design\"\n\
                 units:\n{units_block}\
                 trts:\n{trts_block}\
                 allot:\n  {} ~ unit\n\
                 assign: order = [random], seed = {seed}\n",
                lhs.join(":")
            )
        }
        "split" => {
            let t1 = get_int(params, "t1")?.unwrap_or_else(|| draw_t(rng));
            let t2 = get_int(params, "t2")?.unwrap_or_else(|| draw_t(rng));
            let r = get_int(params, "r")?.unwrap_or_else(|| rng.random_range(2..=10));
            format!(
                "design \"Split-Plot Design\"\n\
                 units:\n  mainplot = {}\n  subplot = nested_in(mainplot, {t2})\n\
                 trts:\n  trt1 = {t1}\n  trt2 = {t2}\n\
                 allot:\n  trt1 ~ mainplot\n  trt2 ~ subplot\n\
                 assign: order = [random, random], seed = {seed}\n",
                t1 * r
            )
        }
        "strip" => {
            let t1 = get_int(params, "t1")?.unwrap_or_else(|| draw_t(rng));
            let t2 = get_int(params, "t2")?.unwrap_or_else(|| draw_t(rng));
            let r = get_int(params, "r")?.unwrap_or_else(|| rng.random_range(2..=10));
            format!(
                "design \"Strip-Plot Design\"\n\
                 units:\n  block = {r}\n  row = nested_in(block, {t1})\n  col = nested_in(block, {t2})\n  unit = nested_in(block, crossed_by(row, col))\n\
                 trts:\n  trt1 = {t1}\n  trt2 = {t2}\n\
                 allot:\n  trt1 ~ row\n  trt2 ~ col\n\
                 assign: order = [random, random], seed = {seed}\n"
            )
        }
        "bibd" => {
            let (t, k, r) = match (get_int(params, "t")?, get_int(params, "k")?, get_int(params, "r")?) {
                (Some(t), Some(k), Some(r)) => (t, k, r),
                (t, k, r) => {
                    // draw a feasible triple: k < t, then the smallest
                    // replication making the block count and pair count whole
                    let t = t.unwrap_or_else(|| rng.random_range(4..=8));
                    let k = k.unwrap_or_else(|| rng.random_range(2..t.max(3)));
                    let r = r.unwrap_or_else(|| {
                        (1..=60)
                            .find(|r| r * (k - 1) % (t - 1) == 0 && r * t % k == 0)
                            .unwrap_or(t - 1)
                    });
                    (t, k, r)
                }
            };
            if k >= t || k < 2 {
                return Err(Error::InvalidParams(format!(
                    "bibd requires 2 <= k < t, got t={t}, k={k}"
                )));
            }
            if r * (k - 1) % (t - 1) != 0 || r * t % k != 0 {
                return Err(Error::InvalidParams(format!(
                    "bibd necessary conditions fail for t={t}, k={k}, r={r}"
                )));
            }
            let b = r * t / k;
            format!(
                "design \"Balanced Incomplete Block Design\"\n\
                 units:\n  block = {b}\n  unit = nested_in(block, {k})\n\
                 trts:\n  trt = {t}\n\
                 allot:\n  trt ~ unit\n\
                 assign: order = [bibd], seed = {seed}\n"
            )
        }
        "youden" => {
            let (t, nc) = match (get_int(params, "t")?, get_int(params, "nc")?) {
                (Some(t), Some(nc)) => (t, nc),
                (t, nc) => {
                    let t = t.unwrap_or_else(|| rng.random_range(3..=7));
                    (t, nc.unwrap_or(t - 1))
                }
            };
            if nc >= t || nc < 2 {
                return Err(Error::InvalidParams(format!(
                    "youden requires 2 <= nc < t, got t={t}, nc={nc}"
                )));
            }
            // feasibility via the symmetric-BIBD condition
            squares::youden_rows(t, nc)?;
            format!(
                "design \"Youden Square Design\"\n\
                 units:\n  row = {nc}\n  col = {t}\n  unit = crossed_by(row, col)\n\
                 trts:\n  trt = {t}\n\
                 allot:\n  trt ~ unit\n\
                 assign: order = [youden], seed = {seed}\n"
            )
        }
        _ => unreachable!(),
    };
    Ok(Recipe {
        kind: kind.to_string(),
        seed,
        source,
    })
}

/// Executes a recipe (or a random one) through the full pipeline.
pub fn takeout(recipe: Option<Recipe>) -> Result<(Recipe, Design, DesignTable)> {
    let recipe = match recipe {
        Some(r) => r,
        None => {
            let mut rng = rand::rng();
            let kind = *KINDS.choose(&mut rng).unwrap();
            menu_with_rng(kind, &MenuParams::new(), &mut rng)?
        }
    };
    let ast = dsl::parse_spec(&recipe.source)?;
    let (design, table) = dsl::run_spec(&ast, None)?;
    Ok((recipe, design, table))
}

/// The catalogue of the ten recipe designs.
pub fn scan_menu() -> DesignTable {
    let rows: [(&str, &str, &str); 10] = [
        ("bibd", "t, k, r, seed", "Balanced Incomplete Block Design"),
        ("crd", "t, n, r, seed", "Completely Randomised Design"),
        ("factorial", "trt, r, design, seed", "Factorial Design"),
        ("graeco", "t, seed", "Graeco-Latin Square Design"),
        ("hyper_graeco", "t, seed", "Hyper-Graeco-Latin Square Design"),
        ("lsd", "t, seed", "Latin Square Design"),
        ("rcbd", "t, r, seed", "Randomised Complete Block Design"),
        ("split", "t1, t2, r, seed", "Split-Plot Design, Split-Unit Design"),
        ("strip", "t1, t2, r, seed", "Strip-Plot Design, Strip-Unit Design"),
        ("youden", "nc, t, seed", "Youden Square Design"),
    ];
    let column = |name: &str, values: Vec<String>| TableColumn {
        name: name.to_string(),
        role: None,
        count: 0,
        ctype: ColType::Chr,
        cells: values.into_iter().map(Cell::Text).collect(),
        filled: true,
        user_labels: true,
    };
    DesignTable {
        title: String::new(),
        columns: vec![
            column("package", vec!["desgraph".to_string(); 10]),
            column("name", rows.iter().map(|r| r.0.to_string()).collect()),
            column("args", rows.iter().map(|r| r.1.to_string()).collect()),
            column("name_full", rows.iter().map(|r| r.2.to_string()).collect()),
        ],
        seed: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, f64)]) -> MenuParams {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), MenuParam::Num(*v)))
            .collect()
    }

    #[test]
    fn crd_source_matches_expected_shape() {
        let r = menu("crd", &params(&[("n", 10.0), ("t", 2.0), ("seed", 1.0)])).unwrap();
        assert_eq!(
            r.source,
            "design \"Completely Randomised Design\"\n\
             units:\n  unit = 10\n\
             trts:\n  trt = 2\n\
             allot:\n  trt ~ unit\n\
             assign: order = [random], seed = 1\n"
        );
    }

    #[test]
    fn omitted_params_are_drawn_and_embedded() {
        let r = menu("crd", &MenuParams::new()).unwrap();
        assert!(r.source.contains("unit = "));
        assert!((1..=1000).contains(&r.seed));
        dsl::parse_spec(&r.source).unwrap();
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!(matches!(
            menu("nope", &MenuParams::new()),
            Err(Error::UnknownKind(_))
        ));
    }

    #[test]
    fn bibd_infeasible_params_rejected() {
        // λ = r(k−1)/(t−1) = 3·2/6 = 1 but b = rt/k = 21/3 = 7 fine; pick a bad one:
        // t=7, k=3, r=2 → r(k-1)=4 not divisible by 6
        let e = menu("bibd", &params(&[("t", 7.0), ("k", 3.0), ("r", 2.0)])).unwrap_err();
        assert!(matches!(e, Error::InvalidParams(_)));
    }

    #[test]
    fn every_recipe_round_trips_and_executes() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for kind in KINDS {
            for _ in 0..3 {
                let r = menu_with_rng(kind, &MenuParams::new(), &mut rng).unwrap();
                let ast = dsl::parse_spec(&r.source)
                    .unwrap_or_else(|e| panic!("{kind}: {e}\n{}", r.source));
                let text = dsl::unparse(&ast);
                assert_eq!(dsl::parse_spec(&text).unwrap(), ast, "{kind}");
                let (_, _, table) = takeout(Some(r.clone()))
                    .unwrap_or_else(|e| panic!("{kind}: {e}\n{}", r.source));
                assert!(table.nrows() > 0, "{kind}");
            }
        }
    }

    #[test]
    fn takeout_crd_balances_treatments() {
        let r = menu("crd", &params(&[("n", 4.0), ("t", 2.0), ("seed", 3.0)])).unwrap();
        let (_, _, table) = takeout(Some(r)).unwrap();
        assert_eq!(table.nrows(), 4);
        let trt = table.column("trt").unwrap();
        let ones = trt.cells.iter().filter(|c| c.csv() == "trt1").count();
        assert_eq!(ones, 2);
    }

    #[test]
    fn scan_menu_catalogue() {
        let t = scan_menu();
        assert_eq!(t.nrows(), 10);
        assert_eq!(
            t.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(),
            vec!["package", "name", "args", "name_full"]
        );
        let args = t.column("args").unwrap();
        assert_eq!(args.cells[0].csv(), "t, k, r, seed");
        let full = t.column("name_full").unwrap();
        assert!(full.cells[7].csv().contains("Split-Plot Design"));
    }

    #[test]
    fn random_takeout_smoke() {
        for _ in 0..5 {
            let (_, _, table) = takeout(None).unwrap();
            assert!(table.nrows() > 0);
        }
    }
}

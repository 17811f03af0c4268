use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use desgraph::design::{GraphFormat, GraphKind};
use desgraph::error::Error;
use desgraph::menu::{menu, scan_menu, takeout, MenuParam, MenuParams};
use desgraph::serve::ingest_table;
use desgraph::{dsl, records};

/// A grammar of experimental designs: build, randomise and export them.
#[derive(Parser)]
#[command(name = "desgraph", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a design spec and run the full pipeline.
    Build {
        /// Path to the spec file.
        spec: PathBuf,
        /// Write the served design as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Export design, data-entry sheets, validation and manifest files.
        #[arg(long)]
        export: Option<PathBuf>,
        /// Allow --export to replace an existing directory.
        #[arg(long)]
        overwrite: bool,
        /// Write a graph as DOT: kind (factors|levels) and output file.
        #[arg(long, num_args = 2, value_names = ["KIND", "FILE"])]
        graph: Option<Vec<String>>,
        /// Print the unit hierarchy as a tree.
        #[arg(long)]
        tree: bool,
        /// Override every seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
        /// Fill record columns with automatically simulated valid values.
        #[arg(long)]
        autofill: bool,
    },
    /// Read an existing design from CSV, marking factor roles.
    Ingest {
        /// Path to the CSV file.
        csv: PathBuf,
        /// Column names to treat as unit factors.
        #[arg(long, value_delimiter = ',')]
        units: Vec<String>,
        /// Column names to treat as treatment factors.
        #[arg(long, value_delimiter = ',')]
        trts: Vec<String>,
        /// Column names to treat as record factors.
        #[arg(long, value_delimiter = ',')]
        rcrds: Vec<String>,
        /// Title for the ingested design.
        #[arg(long)]
        title: Option<String>,
    },
    /// Print the expanded spec source for a named recipe design.
    Menu {
        /// Recipe kind (see scan-menu).
        kind: String,
        /// Parameters as name=value; lists as name=a,b and words as-is.
        params: Vec<String>,
    },
    /// Expand a recipe (random if omitted) and run it immediately.
    Takeout {
        /// Recipe kind; omit for a random pick.
        kind: Option<String>,
        /// Parameters as name=value.
        params: Vec<String>,
    },
    /// List the catalogue of recipe designs.
    ScanMenu,
}

const MAX_PRINT_ROWS: usize = 10;

fn parse_params(args: &[String]) -> Result<MenuParams, Error> {
    let mut params = MenuParams::new();
    for arg in args {
        let (name, value) = arg.split_once('=').ok_or_else(|| {
            Error::InvalidParams(format!("expected name=value, got `{arg}`"))
        })?;
        let parsed = if value.contains(',') {
            let nums: Result<Vec<f64>, _> = value.split(',').map(str::parse).collect();
            MenuParam::List(nums.map_err(|_| {
                Error::InvalidParams(format!("`{name}` list must be numeric, got `{value}`"))
            })?)
        } else if let Ok(n) = value.parse::<f64>() {
            MenuParam::Num(n)
        } else {
            MenuParam::Word(value.to_string())
        };
        params.insert(name.to_string(), parsed);
    }
    Ok(params)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Build {
            spec,
            out,
            export,
            overwrite,
            graph,
            tree,
            seed,
            autofill,
        } => {
            let text = std::fs::read_to_string(&spec)?;
            let ast = dsl::parse_spec(&text)?;
            let (design, mut table) = dsl::run_spec(&ast, seed)?;
            if autofill {
                table = design.autofill_rcrds(seed)?;
            }
            if tree {
                println!("{}", design.print_tree());
            }
            println!("{}", table.render_table(MAX_PRINT_ROWS));
            if let Some(path) = &out {
                std::fs::write(path, table.to_csv())?;
            }
            if let Some(dir) = &export {
                records::export_design(&design, &table, dir, overwrite)?;
            }
            if let Some(args) = &graph {
                let kind = match args[0].as_str() {
                    "factors" => GraphKind::Factors,
                    "levels" => GraphKind::Levels,
                    other => {
                        return Err(Error::InvalidParams(format!(
                            "--graph kind must be factors or levels, got `{other}`"
                        )))
                    }
                };
                std::fs::write(&args[1], design.graph_export(kind, GraphFormat::Dot))?;
            }
            Ok(())
        }
        Command::Ingest {
            csv,
            units,
            trts,
            rcrds,
            title,
        } => {
            let mut reader =
                csv::Reader::from_path(&csv).map_err(|e| Error::InvalidParams(e.to_string()))?;
            let header: Vec<String> = reader
                .headers()
                .map_err(|e| Error::InvalidParams(e.to_string()))?
                .iter()
                .map(str::to_string)
                .collect();
            let mut data = Vec::new();
            for record in reader.records() {
                let record = record.map_err(|e| Error::InvalidParams(e.to_string()))?;
                data.push(record.iter().map(str::to_string).collect::<Vec<_>>());
            }
            fn to_refs(v: &[String]) -> Vec<&str> {
                v.iter().map(String::as_str).collect()
            }
            let table = ingest_table(
                &header,
                &data,
                &to_refs(&units),
                &to_refs(&trts),
                &to_refs(&rcrds),
                title.as_deref().unwrap_or(desgraph::design::DEFAULT_TITLE),
            )?;
            println!("{}", table.render_table(MAX_PRINT_ROWS));
            Ok(())
        }
        Command::Menu { kind, params } => {
            let recipe = menu(&kind, &parse_params(&params)?)?;
            print!("{}", recipe.source);
            Ok(())
        }
        Command::Takeout { kind, params } => {
            let recipe = match kind {
                Some(kind) => Some(menu(&kind, &parse_params(&params)?)?),
                None => None,
            };
            let (recipe, _, table) = takeout(recipe)?;
            print!("{}", recipe.source);
            println!();
            println!("{}", table.render_table(MAX_PRINT_ROWS));
            Ok(())
        }
        Command::ScanMenu => {
            println!("{}", scan_menu().render_tibble(MAX_PRINT_ROWS));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (Error::Syntax { .. } | Error::Semantic { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

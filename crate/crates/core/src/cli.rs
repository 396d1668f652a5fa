//! Command-line front end: `solve`, `converge`, `extrapolate`, `estimate`.
//!
//! Settings come from built-in defaults, then an optional TOML file
//! (`--config`), then command-line flags. Tables are written as CSV (header
//! row, shortest round-trip floats, `inf` for infinity) or as JSON with a
//! metadata object.

use crate::error::BvpError;
use crate::grid::{GridMap, MapKind};
use crate::newton::{continuation_solve, validate_doubling, ContinuationRun, NewtonConfig, StartPath};
use crate::problems::{colloid_continuation, linear_exact, linear_fixture, ColloidProblem};
use crate::richardson::{
    error_estimate, extrapolate_common_nodes, global_error, max_abs_by_component, observed_orders,
    restrict_to_coarse, ExtrapolationTable, NormKind, OrderEstimate, ROUND_OFF_FLOOR,
};
use crate::scheme::DiscreteSolution;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Bvp(#[from] BvpError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("config file {path}: {message}")]
    ConfigFile { path: String, message: String },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "nsfd-bvp", version, about = "Finite differences on quasi-uniform grids for BVPs on [0, inf)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mesh continuation over the grid list; writes the finest solution.
    Solve(CommonArgs),
    /// Errors against the exact (or a reference) solution and observed orders.
    Converge {
        #[command(flatten)]
        common: CommonArgs,
        /// Use a solution on this many intervals instead of the exact solution.
        #[arg(long)]
        reference_n: Option<usize>,
    },
    /// Richardson table for one nodal value.
    Extrapolate {
        #[command(flatten)]
        common: CommonArgs,
        /// comp=<1|2>,node=<index on the coarsest grid>
        #[arg(long)]
        quantity: Option<String>,
        /// Number of extrapolation levels.
        #[arg(long)]
        levels: Option<usize>,
        /// First grid size of the table (continuation still starts at the list head).
        #[arg(long)]
        table_from: Option<usize>,
    },
    /// A posteriori error estimate from a grid pair N,2N.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        pair: Option<String>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file with default settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// colloid | linear
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub u0: Option<f64>,
    /// log | alg
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub c: Option<f64>,
    /// Comma-separated doubling list, e.g. 5,10,20,40
    #[arg(long)]
    pub n_list: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long)]
    pub order_step: Option<f64>,
    /// csv | json
    #[arg(long)]
    pub format: Option<String>,
    /// Output file; the table goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite an existing output file.
    #[arg(long)]
    pub force: bool,
}

/// Keys accepted in the `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: Option<String>,
    pub u0: Option<f64>,
    pub map: Option<String>,
    pub c: Option<f64>,
    pub n_list: Option<Vec<usize>>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub p0: Option<f64>,
    pub order_step: Option<f64>,
    pub format: Option<String>,
    pub out: Option<PathBuf>,
    pub quantity: Option<String>,
    pub levels: Option<usize>,
    pub table_from: Option<usize>,
    pub pair: Option<Vec<usize>>,
    pub reference_n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    Colloid { u0: f64 },
    Linear,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemKind::Colloid { .. } => write!(f, "colloid"),
            ProblemKind::Linear => write!(f, "linear"),
        }
    }
}

impl ProblemKind {
    pub fn exact(&self, x: f64) -> Vec<f64> {
        match self {
            ProblemKind::Colloid { u0 } => ColloidProblem::new(*u0)
                .expect("validated u0")
                .exact_vec(x),
            ProblemKind::Linear => linear_exact(x).to_vec(),
        }
    }

    pub fn has_exact(&self) -> bool {
        true
    }

    pub fn continuation(&self, map: GridMap, n_list: &[usize], cfg: &NewtonConfig) -> CliResult<ContinuationRun> {
        Ok(match self {
            ProblemKind::Colloid { u0 } => colloid_continuation(&ColloidProblem::new(*u0)?, map, n_list, cfg)?,
            ProblemKind::Linear => continuation_solve(
                &linear_fixture(),
                map,
                n_list,
                |g| DiscreteSolution::constant(g.clone(), &[1.0, -1.0]),
                cfg,
            )?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// A nodal value: zero-based component, node index on the coarsest grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantity {
    pub component: usize,
    pub node: usize,
}

impl Quantity {
    pub fn label(&self) -> String {
        format!("{}U_{}", self.component + 1, self.node)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub map: GridMap,
    pub n_list: Vec<usize>,
    pub newton: NewtonConfig,
    pub p0: f64,
    pub order_step: f64,
    pub format: OutputFormat,
    pub output_path: Option<PathBuf>,
    pub force: bool,
    pub quantity: Quantity,
    pub levels: usize,
    pub table_from: Option<usize>,
    pub pair: Option<(usize, usize)>,
    pub reference_n: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemKind::Colloid { u0: 1.0 },
            map: GridMap::default(),
            n_list: (0..11).map(|k| 5usize << k).collect(),
            newton: NewtonConfig::default(),
            p0: 2.0,
            order_step: 2.0,
            format: OutputFormat::Csv,
            output_path: None,
            force: false,
            quantity: Quantity { component: 1, node: 0 },
            levels: 2,
            table_from: None,
            pair: None,
            reference_n: None,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn parse_map_kind(s: &str) -> CliResult<MapKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "log" | "logarithmic" => Ok(MapKind::Logarithmic),
        "alg" | "algebraic" => Ok(MapKind::Algebraic),
        other => Err(config_err(format!("unknown map '{other}', expected log or alg"))),
    }
}

pub fn parse_usize_list(s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| config_err(format!("'{t}' is not a grid size")))
        })
        .collect()
}

pub fn parse_quantity(s: &str) -> CliResult<Quantity> {
    let mut comp = None;
    let mut node = None;
    for part in s.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| config_err(format!("quantity part '{part}' is not key=value")))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| config_err(format!("quantity value '{value}' is not an index")))?;
        match key.trim() {
            "comp" => comp = Some(value),
            "node" => node = Some(value),
            other => return Err(config_err(format!("unknown quantity key '{other}'"))),
        }
    }
    let comp = comp.ok_or_else(|| config_err("quantity needs comp=<1|2>"))?;
    if comp == 0 {
        return Err(config_err("quantity components are numbered from 1"));
    }
    Ok(Quantity {
        component: comp - 1,
        node: node.unwrap_or(0),
    })
}

fn parse_pair(v: &[usize]) -> CliResult<(usize, usize)> {
    match v {
        [a, b] if *b == 2 * *a && *a > 0 => Ok((*a, *b)),
        _ => Err(config_err(format!("pair must be N,2N, got {v:?}"))),
    }
}

fn parse_format(s: &str) -> CliResult<OutputFormat> {
    match s.trim().to_ascii_lowercase().as_str() {
        "csv" => Ok(OutputFormat::Csv),
        "json" => Ok(OutputFormat::Json),
        other => Err(config_err(format!("unknown format '{other}', expected csv or json"))),
    }
}

pub fn load_config_file(path: &Path) -> CliResult<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| CliError::ConfigFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Command-specific flags, already split from the common ones.
#[derive(Debug, Clone, Default)]
pub struct ExtraArgs {
    pub quantity: Option<String>,
    pub levels: Option<usize>,
    pub table_from: Option<usize>,
    pub pair: Option<String>,
    pub reference_n: Option<usize>,
}

/// Merges defaults, the config file and flags (in increasing precedence).
pub fn resolve_config(args: &CommonArgs, extra: &ExtraArgs, file: Option<ConfigFile>) -> CliResult<RunConfig> {
    let file = file.unwrap_or_default();
    let mut cfg = RunConfig::default();

    let problem = args.problem.clone().or(file.problem).unwrap_or_else(|| "colloid".into());
    let u0 = args.u0.or(file.u0).unwrap_or(1.0);
    cfg.problem = match problem.trim().to_ascii_lowercase().as_str() {
        "colloid" => {
            ColloidProblem::new(u0)?;
            ProblemKind::Colloid { u0 }
        }
        "linear" => ProblemKind::Linear,
        other => return Err(config_err(format!("unknown problem '{other}'"))),
    };

    let kind = match args.map.as_deref().or(file.map.as_deref()) {
        Some(s) => parse_map_kind(s)?,
        None => cfg.map.kind(),
    };
    let c = args.c.or(file.c).unwrap_or(cfg.map.c());
    cfg.map = GridMap::new(kind, c)?;

    if let Some(list) = &args.n_list {
        cfg.n_list = parse_usize_list(list)?;
    } else if let Some(list) = file.n_list {
        cfg.n_list = list;
    }
    validate_doubling(&cfg.n_list)?;

    cfg.newton.tol = args.tol.or(file.tol).unwrap_or(cfg.newton.tol);
    cfg.newton.max_iter = args.max_iter.or(file.max_iter).unwrap_or(cfg.newton.max_iter);
    cfg.newton.validate()?;

    cfg.p0 = args.p0.or(file.p0).unwrap_or(cfg.p0);
    cfg.order_step = args.order_step.or(file.order_step).unwrap_or(cfg.order_step);
    if !(cfg.p0 > 0.0) || !(cfg.order_step >= 0.0) {
        return Err(config_err("p0 must be positive and order_step non-negative"));
    }

    if let Some(f) = args.format.as_deref().or(file.format.as_deref()) {
        cfg.format = parse_format(f)?;
    }
    cfg.output_path = args.out.clone().or(file.out);
    cfg.force = args.force;

    if let Some(q) = extra.quantity.as_deref().or(file.quantity.as_deref()) {
        cfg.quantity = parse_quantity(q)?;
    }
    cfg.levels = extra.levels.or(file.levels).unwrap_or(cfg.levels);
    cfg.table_from = extra.table_from.or(file.table_from);
    cfg.pair = match (&extra.pair, file.pair) {
        (Some(p), _) => Some(parse_pair(&parse_usize_list(p)?)?),
        (None, Some(p)) => Some(parse_pair(&p)?),
        (None, None) => None,
    };
    cfg.reference_n = extra.reference_n.or(file.reference_n);
    Ok(cfg)
}

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

/// Shortest round-trip representation; scientific outside `[1e-4, 1e16)`.
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let a = v.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    /// Reads a cell back, keeping the interpretation that renders to the same text.
    pub fn parse(text: &str) -> Cell {
        if text.is_empty() {
            return Cell::Empty;
        }
        if let Ok(i) = text.parse::<i64>() {
            if i.to_string() == text {
                return Cell::Int(i);
            }
        }
        if let Ok(v) = text.parse::<f64>() {
            if format_float(v) == text {
                return Cell::Float(v);
            }
        }
        Cell::Text(text.to_string())
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(i) => json!(i),
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Float(v) => json!(format_float(*v)),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| config_err(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> CliResult<Table> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(Cell::parse).collect());
        }
        Ok(Table { columns, rows })
    }

    pub fn to_json(&self, metadata: &Value) -> Value {
        json!({
            "metadata": metadata,
            "columns": self.columns,
            "rows": self
                .rows
                .iter()
                .map(|r| r.iter().map(Cell::to_json).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        })
    }
}

/// Everything a command produces before it is written out.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub table: Table,
    pub metadata: Value,
    pub summary: Vec<String>,
    pub success: bool,
}

fn start_json(start: &StartPath) -> Value {
    match start {
        StartPath::Direct => json!("direct"),
        StartPath::ParameterContinuation { parameters, reports } => json!({
            "parameter_continuation": parameters,
            "iterations": reports.iter().map(|r| r.iterations).collect::<Vec<_>>(),
        }),
    }
}

fn base_metadata(command: &str, cfg: &RunConfig, run: Option<&ContinuationRun>) -> Value {
    let mut meta = json!({
        "command": command,
        "problem": cfg.problem.to_string(),
        "map": cfg.map.kind().to_string(),
        "c": cfg.map.c(),
        "tol": cfg.newton.tol,
        "max_iter": cfg.newton.max_iter,
        "p0": cfg.p0,
        "order_step": cfg.order_step,
        "n_list": cfg.n_list,
    });
    if let ProblemKind::Colloid { u0 } = cfg.problem {
        meta["u0"] = json!(u0);
    }
    if let Some(run) = run {
        meta["start"] = start_json(&run.start);
        meta["grids"] = run
            .grid_sizes
            .iter()
            .zip(&run.reports)
            .map(|(n, r)| {
                json!({
                    "n": n,
                    "iterations": r.iterations,
                    "converged": r.converged,
                    "final_update_norm": r.final_update_norm,
                })
            })
            .collect::<Vec<_>>()
            .into();
        if let Some((n, err)) = &run.failure {
            meta["failure"] = json!({ "n": n, "error": err.to_string() });
        }
    }
    meta
}

fn run_summary(run: &ContinuationRun) -> Vec<String> {
    let mut lines = Vec::new();
    if let StartPath::ParameterContinuation { parameters, reports } = &run.start {
        lines.push(format!(
            "coarsest grid reached by continuation in u0 through {parameters:?} ({} Newton iterations)",
            reports.iter().map(|r| r.iterations).sum::<usize>()
        ));
    }
    for (n, r) in run.grid_sizes.iter().zip(&run.reports) {
        lines.push(format!(
            "N={n} iterations={} converged={} update_norm={:e}",
            r.iterations, r.converged, r.final_update_norm
        ));
    }
    if let Some((n, err)) = &run.failure {
        lines.push(format!("FAILED at N={n}: {err}"));
    }
    lines
}

/// Per-node rows `(n, xi, x, U.., e..)` of one solution.
pub fn solution_table(sol: &DiscreteSolution, exact: Option<&dyn Fn(f64) -> Vec<f64>>) -> Table {
    let d = sol.dim();
    let mut cols = vec!["n".to_string(), "xi".into(), "x".into()];
    cols.extend((1..=d).map(|l| format!("U{l}")));
    if exact.is_some() {
        cols.extend((1..=d).map(|l| format!("e{l}")));
    }
    let errors = exact.map(|f| global_error(sol, f));
    let grid = sol.grid();
    let mut table = Table {
        columns: cols,
        rows: Vec::new(),
    };
    for (n, row) in sol.rows().enumerate() {
        let mut cells: Vec<Cell> = vec![n.into(), grid.xi(n).into(), grid.node(n).into()];
        cells.extend(row.iter().map(|&v| Cell::from(v)));
        if let Some(e) = &errors {
            cells.extend(e[n * d..(n + 1) * d].iter().map(|&v| Cell::from(v)));
        }
        table.rows.push(cells);
    }
    table
}

pub fn order_table(est: &OrderEstimate, dim: usize) -> Table {
    let mut cols = vec!["level".to_string(), "n_coarse".into(), "n_fine".into()];
    for l in 1..=dim {
        cols.push(format!("err{l}_coarse"));
        cols.push(format!("err{l}_fine"));
        cols.push(format!("p{l}"));
    }
    let mut table = Table {
        columns: cols,
        rows: Vec::new(),
    };
    for r in &est.rows {
        let mut cells: Vec<Cell> = vec![r.level.into(), r.coarse_n.into(), r.fine_n.into()];
        for l in 0..r.order.len() {
            cells.push(r.err_coarse[l].into());
            cells.push(r.err_fine[l].into());
            cells.push(r.order[l].into());
        }
        table.rows.push(cells);
    }
    table
}

pub fn extrapolation_output(table: &ExtrapolationTable) -> Table {
    let mut cols = vec!["n".to_string()];
    cols.extend((0..=table.levels()).map(|k| format!("k{k}")));
    let mut out = Table {
        columns: cols,
        rows: Vec::new(),
    };
    for (g, row) in table.entries.iter().enumerate() {
        let mut cells: Vec<Cell> = vec![table.grid_sizes[g].into()];
        cells.extend((0..=table.levels()).map(|k| Cell::from(row.get(k).copied())));
        out.rows.push(cells);
    }
    out
}

/// Estimate rows `(n, x, E.., e..)` at the coarse nodes; `e` is the error of
/// the fine solution.
pub fn estimate_output(
    coarse: &DiscreteSolution,
    fine: &DiscreteSolution,
    p0: f64,
    exact: Option<&dyn Fn(f64) -> Vec<f64>>,
) -> CliResult<(Table, Vec<String>)> {
    let est = error_estimate(coarse, fine, p0)?;
    let d = coarse.dim();
    let fine_errors = match exact {
        Some(f) => Some(global_error(&restrict_to_coarse(fine)?, f)),
        None => None,
    };
    let mut cols = vec!["n".to_string(), "x".into()];
    cols.extend((1..=d).map(|l| format!("E{l}")));
    if fine_errors.is_some() {
        cols.extend((1..=d).map(|l| format!("e{l}")));
    }
    let mut table = Table {
        columns: cols,
        rows: Vec::new(),
    };
    for n in 0..=coarse.n_intervals() {
        let mut cells: Vec<Cell> = vec![n.into(), coarse.grid().node(n).into()];
        cells.extend(est.values[n * d..(n + 1) * d].iter().map(|&v| Cell::from(v)));
        if let Some(e) = &fine_errors {
            cells.extend(e[n * d..(n + 1) * d].iter().map(|&v| Cell::from(v)));
        }
        table.rows.push(cells);
    }
    let mut summary = vec![format!(
        "pair N={},{}: max|E| = {:?}",
        coarse.n_intervals(),
        fine.n_intervals(),
        est.max_abs()
    )];
    if let Some(e) = &fine_errors {
        let max_e = max_abs_by_component(e, d);
        let bounded: Vec<bool> = est.max_abs().iter().zip(&max_e).map(|(a, b)| a >= b).collect();
        summary.push(format!("max|e| = {max_e:?}, estimate bounds error per component: {bounded:?}"));
        let below: Vec<usize> = (0..d)
            .map(|l| (0..=coarse.n_intervals()).filter(|n| est.values[n * d + l].abs() < e[n * d + l].abs()).count())
            .collect();
        summary.push(format!("coarse nodes with |E| < |e| per component: {below:?}"));
    }
    Ok((table, summary))
}

/// Reference values on the common nodes: the exact solution when given,
/// otherwise the restriction of a reference solution.
pub fn reference_values(
    base: &DiscreteSolution,
    exact: Option<&dyn Fn(f64) -> Vec<f64>>,
    reference: Option<&DiscreteSolution>,
) -> CliResult<Vec<f64>> {
    if let Some(sol) = reference {
        let mut r = sol.clone();
        while r.n_intervals() > base.n_intervals() {
            r = restrict_to_coarse(&r)?;
        }
        if r.grid() != base.grid() {
            return Err(config_err("reference grid is not nested with the grid list"));
        }
        return Ok(r.into_values());
    }
    match exact {
        Some(f) => {
            let grid = base.grid();
            Ok((0..grid.n_nodes()).flat_map(|n| f(grid.node(n))).collect())
        }
        None => Err(config_err("no exact solution and no --reference-n given")),
    }
}

fn failed_run_output(command: &str, cfg: &RunConfig, run: &ContinuationRun) -> CommandOutput {
    CommandOutput {
        table: Table::default(),
        metadata: base_metadata(command, cfg, Some(run)),
        summary: run_summary(run),
        success: false,
    }
}

pub fn cmd_solve(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let run = cfg.problem.continuation(cfg.map, &cfg.n_list, &cfg.newton)?;
    if !run.is_complete() {
        return Ok(failed_run_output("solve", cfg, &run));
    }
    let problem = cfg.problem;
    let exact = move |x: f64| problem.exact(x);
    let finest = run.solutions.last().expect("complete run");
    Ok(CommandOutput {
        table: solution_table(finest, Some(&exact)),
        metadata: base_metadata("solve", cfg, Some(&run)),
        summary: run_summary(&run),
        success: true,
    })
}

pub fn cmd_converge(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let mut n_list = cfg.n_list.clone();
    if let Some(r) = cfg.reference_n {
        let last = *n_list.last().expect("validated list");
        if r <= last || r % last != 0 || !(r / last).is_power_of_two() {
            return Err(config_err(format!(
                "reference N = {r} must be the finest grid {last} times a power of two"
            )));
        }
        while *n_list.last().unwrap() < r {
            n_list.push(2 * n_list.last().unwrap());
        }
    }
    let run = cfg.problem.continuation(cfg.map, &n_list, &cfg.newton)?;
    if !run.is_complete() {
        return Ok(failed_run_output("converge", cfg, &run));
    }
    let studied = &run.solutions[..cfg.n_list.len()];
    let problem = cfg.problem;
    let exact = move |x: f64| problem.exact(x);
    let reference = if cfg.reference_n.is_some() {
        reference_values(&studied[0], None, run.solutions.last())?
    } else if problem.has_exact() {
        reference_values(&studied[0], Some(&exact), None)?
    } else {
        reference_values(&studied[0], None, None)?
    };
    let levels = cfg.levels.min(studied.len() - 1);
    let table = extrapolate_common_nodes(studied, cfg.p0, cfg.order_step, levels)?;
    let est = observed_orders(&table, &reference, NormKind::MaxOverCommonNodes)?;
    let mut summary = run_summary(&run);
    for k in 0..=levels {
        for l in 0..studied[0].dim() {
            if let Some((r, p)) = est.finest_resolved(k, l, ROUND_OFF_FLOOR) {
                summary.push(format!(
                    "level {k} component {}: order {p:.4} from pair {},{}",
                    l + 1,
                    r.coarse_n,
                    r.fine_n
                ));
            }
        }
    }
    let mut metadata = base_metadata("converge", cfg, Some(&run));
    metadata["norm"] = json!("max_over_common_nodes");
    metadata["reference"] = match cfg.reference_n {
        Some(n) => json!({ "reference_n": n }),
        None => json!("exact"),
    };
    Ok(CommandOutput {
        table: order_table(&est, studied[0].dim()),
        metadata,
        summary,
        success: true,
    })
}

pub fn cmd_extrapolate(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let run = cfg.problem.continuation(cfg.map, &cfg.n_list, &cfg.newton)?;
    if !run.is_complete() {
        return Ok(failed_run_output("extrapolate", cfg, &run));
    }
    let from = match cfg.table_from {
        Some(n) => run
            .grid_sizes
            .iter()
            .position(|&x| x == n)
            .ok_or_else(|| config_err(format!("table start N = {n} is not in the grid list")))?,
        None => 0,
    };
    let sols = &run.solutions[from..];
    if cfg.quantity.node > sols[0].n_intervals() || cfg.quantity.component >= sols[0].dim() {
        return Err(config_err(format!(
            "quantity {} is outside the coarsest tabulated grid",
            cfg.quantity.label()
        )));
    }
    let common = extrapolate_common_nodes(sols, cfg.p0, cfg.order_step, cfg.levels)?;
    let table = common.scalar_table(cfg.quantity.node, cfg.quantity.component, cfg.quantity.label());
    let mut metadata = base_metadata("extrapolate", cfg, Some(&run));
    metadata["quantity"] = json!(table.quantity_label);
    metadata["orders"] = json!(table.orders);
    Ok(CommandOutput {
        table: extrapolation_output(&table),
        metadata,
        summary: run_summary(&run),
        success: true,
    })
}

pub fn cmd_estimate(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let (coarse_n, fine_n) = match cfg.pair {
        Some(p) => p,
        None if cfg.n_list.len() >= 2 => {
            let k = cfg.n_list.len();
            (cfg.n_list[k - 2], cfg.n_list[k - 1])
        }
        None => return Err(config_err("estimate needs --pair or at least two grids")),
    };
    let upto = cfg
        .n_list
        .iter()
        .position(|&n| n == fine_n)
        .ok_or_else(|| config_err(format!("pair {coarse_n},{fine_n} is not in the grid list")))?;
    let run = cfg.problem.continuation(cfg.map, &cfg.n_list[..=upto], &cfg.newton)?;
    if !run.is_complete() {
        return Ok(failed_run_output("estimate", cfg, &run));
    }
    let coarse = run.solution_for(coarse_n).expect("pair in list");
    let fine = run.solution_for(fine_n).expect("pair in list");
    let problem = cfg.problem;
    let exact = move |x: f64| problem.exact(x);
    let (table, est_summary) = estimate_output(coarse, fine, cfg.p0, Some(&exact))?;
    let mut summary = run_summary(&run);
    summary.extend(est_summary);
    let mut metadata = base_metadata("estimate", cfg, Some(&run));
    metadata["pair"] = json!([coarse_n, fine_n]);
    Ok(CommandOutput {
        table,
        metadata,
        summary,
        success: true,
    })
}

pub fn render(output: &CommandOutput, format: OutputFormat) -> CliResult<String> {
    match format {
        OutputFormat::Csv => output.table.to_csv(),
        OutputFormat::Json => {
            let v = output.table.to_json(&output.metadata);
            Ok(serde_json::to_string_pretty(&v).expect("json values serialise") + "\n")
        }
    }
}

/// Writes `text` to `path`, refusing to replace an existing file unless `force`.
pub fn write_output(path: &Path, text: &str, force: bool) -> CliResult<()> {
    let io_err = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = if force {
        fs::File::create(path).map_err(io_err)?
    } else {
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(io_err)?
    };
    file.write_all(text.as_bytes()).map_err(io_err)
}

pub fn split_command(cmd: &Command) -> (&'static str, &CommonArgs, ExtraArgs) {
    match cmd {
        Command::Solve(common) => ("solve", common, ExtraArgs::default()),
        Command::Converge { common, reference_n } => (
            "converge",
            common,
            ExtraArgs {
                reference_n: *reference_n,
                ..Default::default()
            },
        ),
        Command::Extrapolate {
            common,
            quantity,
            levels,
            table_from,
        } => (
            "extrapolate",
            common,
            ExtraArgs {
                quantity: quantity.clone(),
                levels: *levels,
                table_from: *table_from,
                ..Default::default()
            },
        ),
        Command::Estimate { common, pair } => (
            "estimate",
            common,
            ExtraArgs {
                pair: pair.clone(),
                ..Default::default()
            },
        ),
    }
}

pub fn execute(name: &str, cfg: &RunConfig) -> CliResult<CommandOutput> {
    match name {
        "solve" => cmd_solve(cfg),
        "converge" => cmd_converge(cfg),
        "extrapolate" => cmd_extrapolate(cfg),
        "estimate" => cmd_estimate(cfg),
        other => Err(config_err(format!("unknown command {other}"))),
    }
}

/// Runs a parsed command line. Returns `Ok(true)` when every solve converged.
pub fn run(cli: &Cli) -> CliResult<bool> {
    let (name, common, extra) = split_command(&cli.command);
    let file = match &common.config {
        Some(p) => Some(load_config_file(p)?),
        None => None,
    };
    let cfg = resolve_config(common, &extra, file)?;
    let output = execute(name, &cfg)?;
    for line in &output.summary {
        eprintln!("{line}");
    }
    if !output.success {
        return Ok(false);
    }
    let text = render(&output, cfg.format)?;
    match &cfg.output_path {
        Some(path) => write_output(path, &text, cfg.force)?,
        None => print!("{text}"),
    }
    Ok(true)
}

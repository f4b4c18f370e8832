//! `tensorial` command-line tool.
//!
//! Exit codes: 0 success, 1 invalid index expression, 2 expression syntax
//! error, 3 binding or shape error, 4 domain error at every sample point,
//! 5 audit tolerance breach, 6 usage, input or output error.

mod grid;
mod output;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tensorial::curvilinear::{self, Chart, ChartSpec};
use tensorial::formula::{field_from_components, split_components, ComponentSpec};
use tensorial::index_lang::{self, ParseError};
use tensorial::{DenseTensor, DifferentiationScheme, Error, FdOrder, TensorField};

use output::{csv_row, float, Sink};

const EXIT_INVALID: u8 = 1;
const EXIT_SYNTAX: u8 = 2;
const EXIT_BINDING: u8 = 3;
const EXIT_DOMAIN: u8 = 4;
const EXIT_AUDIT: u8 = 5;
const EXIT_IO: u8 = 6;

const CHRISTOFFEL_THRESHOLD: f64 = 1e-12;

#[derive(Parser, Debug)]
#[command(name = "tensorial", version, about = "Tensor algebra and curvilinear calculus tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check an index expression against the free and summation index rules.
    Check {
        expr: String,
        /// Also print the expression with every sum written out.
        #[arg(long)]
        explicit: bool,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate an index expression over tensors from a JSON bindings file.
    Eval {
        expr: String,
        #[arg(long)]
        bindings: PathBuf,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate nonzero Christoffel symbols of a chart.
    Christoffel {
        #[command(flatten)]
        chart: ChartArg,
        #[command(flatten)]
        points: PointArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample grad, div, rot or the Laplacian of a field given in chart coordinates.
    FieldOp {
        op: Op,
        #[command(flatten)]
        chart: ChartArg,
        /// Components separated by `;` using variables y1.. (or x1..).
        #[arg(long, allow_hyphen_values = true, conflicts_with = "field_file", required_unless_present = "field_file")]
        field: Option<String>,
        /// JSON array of components (expressions or coefficient tables).
        #[arg(long)]
        field_file: Option<PathBuf>,
        #[command(flatten)]
        points: PointArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check round trip, Jacobian inverse, Christoffel symmetry and concordance at random points.
    Audit {
        #[command(flatten)]
        chart: ChartArg,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a coordinate line through a point in ambient Cartesian coordinates.
    Lines {
        #[command(flatten)]
        chart: ChartArg,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long)]
        axis: usize,
        /// Parameter range min:max:count along the axis.
        #[arg(long, allow_hyphen_values = true)]
        range: String,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ChartArg {
    /// Built-in chart name (cartesian, cylindrical, spherical) or a chart JSON file.
    #[arg(long, default_value = "cartesian")]
    chart: String,
}

#[derive(Args, Debug)]
struct PointArgs {
    /// Axis ranges such as "1=0.5:2:4,2=0,3=-1:1:3"; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    grid: Vec<String>,
    /// Comma-separated coordinates; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    point: Vec<String>,
}

#[derive(Args, Debug)]
struct SchemeArgs {
    #[arg(long, value_enum, default_value_t = SchemeName::Central2)]
    scheme: SchemeName,
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SchemeName {
    Central2,
    Central4,
}

#[derive(Copy, Clone, Debug, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Op {
    Grad,
    Div,
    Rot,
    Laplace,
}

struct Failure {
    code: u8,
    message: String,
}

type Outcome = Result<u8, Failure>;

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) => EXIT_SYNTAX,
        Error::Validation(_) => EXIT_INVALID,
        Error::Domain(_) => EXIT_DOMAIN,
        Error::Parameter(_) => EXIT_IO,
        _ => EXIT_BINDING,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        fail(exit_code(&e), e.to_string())
    }
}

impl From<grid::GridError> for Failure {
    fn from(e: grid::GridError) -> Self {
        fail(EXIT_IO, e.0)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        fail(EXIT_IO, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        fail(EXIT_IO, e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))
}

fn load_chart(arg: &ChartArg) -> Result<Chart<f64>, Failure> {
    if let Ok(chart) = Chart::builtin(&arg.chart) {
        return Ok(chart);
    }
    let path = Path::new(&arg.chart);
    if !path.is_file() {
        return Err(fail(EXIT_IO, format!("`{}` is neither a built-in chart nor a chart file", arg.chart)));
    }
    let spec: ChartSpec = serde_json::from_str(&read(path)?)
        .map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))?;
    spec.build().map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))
}

fn scheme(args: &SchemeArgs) -> Result<DifferentiationScheme<f64>, Failure> {
    let order = match args.scheme {
        SchemeName::Central2 => FdOrder::Central2,
        SchemeName::Central4 => FdOrder::Central4,
    };
    match args.step {
        Some(h) => Ok(DifferentiationScheme::with_step(order, h)?),
        None => Ok(DifferentiationScheme::new(order)),
    }
}

fn syntax_failure(e: &ParseError) -> Failure {
    fail(EXIT_SYNTAX, e.to_string())
}

fn cmd_check(expr: &str, explicit: bool, dim: usize, out: Option<PathBuf>) -> Outcome {
    let parsed = index_lang::parse(expr).map_err(|e| syntax_failure(&e))?;
    let report = index_lang::validate(&parsed);
    let mut value = serde_json::to_value(&report)?;
    if explicit && report.is_valid() {
        value["explicit"] = json!(index_lang::explicit_form(&parsed, dim));
    }
    let mut sink = Sink::new(out);
    sink.json(&value)?;
    sink.finish()?;
    Ok(if report.is_valid() { 0 } else { EXIT_INVALID })
}

fn cmd_eval(expr: &str, bindings: &Path, dim: usize, out: Option<PathBuf>) -> Outcome {
    let parsed = index_lang::parse(expr).map_err(|e| syntax_failure(&e))?;
    let text = read(bindings)?;
    let bound: HashMap<String, DenseTensor<f64>> =
        serde_json::from_str(&text).map_err(|e| fail(EXIT_IO, format!("{}: {e}", bindings.display())))?;
    let result = index_lang::evaluate(&parsed, &bound, dim)?;
    let mut sink = Sink::new(out);
    sink.json(&result)?;
    sink.finish()?;
    Ok(0)
}

fn warn_skip(point: &[f64], e: &Error) {
    let p: Vec<String> = point.iter().map(|v| float(*v)).collect();
    eprintln!("warning: skipping point ({}): {e}", p.join(", "));
}

fn coordinate_header(prefix: char, dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("{prefix}{i}")).collect()
}

fn cmd_christoffel(chart: &ChartArg, points: &PointArgs, format: Format, out: Option<PathBuf>) -> Outcome {
    let chart = load_chart(chart)?;
    let samples = grid::sample_points(&points.point, &points.grid, chart.dim())?;
    let mut sink = Sink::new(out);
    let mut header = coordinate_header('y', chart.dim());
    header.extend(["k", "i", "j", "gamma"].map(String::from));
    if format == Format::Csv {
        sink.push(&csv_row(&header));
    }
    let mut rows = Vec::new();
    let mut ok = 0;
    for y in &samples {
        let gamma = match chart.christoffel(y) {
            Ok(g) => g,
            Err(e @ Error::Domain(_)) => {
                warn_skip(y, &e);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        ok += 1;
        for (k, i, j, v) in gamma.nonzero(CHRISTOFFEL_THRESHOLD) {
            match format {
                Format::Csv => {
                    let mut fields: Vec<String> = y.iter().map(|c| float(*c)).collect();
                    fields.extend([k.to_string(), i.to_string(), j.to_string(), float(v)]);
                    sink.push(&csv_row(&fields));
                }
                Format::Json => rows.push(json!({ "point": y, "k": k, "i": i, "j": j, "gamma": v })),
            }
        }
    }
    if format == Format::Json {
        sink.json(&rows)?;
    }
    if ok == 0 {
        return Err(fail(EXIT_DOMAIN, "no sample point lies in the chart domain"));
    }
    sink.finish()?;
    Ok(0)
}

/// 1-based slot indices of a flat component offset, joined by `.`.
fn component_path(offset: usize, order: usize, dim: usize) -> String {
    let mut digits = vec![0; order];
    let mut rest = offset;
    for d in digits.iter_mut().rev() {
        *d = rest % dim + 1;
        rest /= dim;
    }
    digits.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(".")
}

fn load_field(inline: Option<&str>, file: Option<&Path>, dim: usize) -> Result<TensorField<f64>, Failure> {
    let specs: Vec<ComponentSpec> = match (inline, file) {
        (Some(text), _) => split_components(text),
        (None, Some(path)) => {
            serde_json::from_str(&read(path)?).map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(fail(EXIT_IO, "no field given")),
    };
    field_from_components(dim, &specs).map_err(|e| match e {
        Error::Shape(_) => fail(EXIT_BINDING, e.to_string()),
        _ => fail(EXIT_IO, e.to_string()),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_field_op(
    op: Op,
    chart: &ChartArg,
    field: Option<&str>,
    field_file: Option<&Path>,
    points: &PointArgs,
    scheme_args: &SchemeArgs,
    format: Format,
    out: Option<PathBuf>,
) -> Outcome {
    let chart = load_chart(chart)?;
    let dim = chart.dim();
    let scheme = scheme(scheme_args)?;
    let input = load_field(field, field_file, dim)?;
    let samples = grid::sample_points(&points.point, &points.grid, dim)?;
    let result = match op {
        Op::Grad => curvilinear::gradient_vector(&chart, &input, &scheme),
        Op::Div => curvilinear::divergence(&chart, &input, 1, &scheme),
        Op::Rot => curvilinear::rotor(&chart, &input, &scheme),
        Op::Laplace => curvilinear::laplacian(&chart, &input, &scheme),
    }?;
    let mut sink = Sink::new(out);
    if format == Format::Csv {
        let mut header = coordinate_header('x', dim);
        header.extend(["component", "value"].map(String::from));
        sink.push(&csv_row(&header));
    }
    let mut rows = Vec::new();
    let mut ok = 0;
    for y in &samples {
        let value = match result.evaluate(y) {
            Ok(v) => v,
            Err(e @ Error::Domain(_)) => {
                warn_skip(y, &e);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        ok += 1;
        match format {
            Format::Csv => {
                let order = value.valency().order();
                for (n, c) in value.components().iter().enumerate() {
                    let mut fields: Vec<String> = y.iter().map(|v| float(*v)).collect();
                    fields.extend([component_path(n, order, dim), float(*c)]);
                    sink.push(&csv_row(&fields));
                }
            }
            Format::Json => rows.push(json!({ "point": y, "value": value })),
        }
    }
    if ok == 0 {
        return Err(fail(EXIT_DOMAIN, "the operator failed at every sample point"));
    }
    if format == Format::Json {
        sink.json(&rows)?;
    }
    sink.finish()?;
    Ok(0)
}

fn cmd_audit(chart: &ChartArg, n: usize, seed: u64, out: Option<PathBuf>) -> Outcome {
    let chart = load_chart(chart)?;
    if n == 0 {
        return Err(fail(EXIT_IO, "--points must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| chart.sample_box().iter().map(|&(lo, hi)| if lo < hi { rng.gen_range(lo..hi) } else { lo }).collect())
        .collect();
    let report = chart.audit(&points)?;
    let mut value = serde_json::to_value(&report)?;
    value["seed"] = json!(seed);
    value["breaches"] = json!(report.breaches());
    value["passed"] = json!(report.passed());
    let mut sink = Sink::new(out);
    sink.json(&value)?;
    sink.finish()?;
    Ok(if report.passed() { 0 } else { EXIT_AUDIT })
}

fn cmd_lines(chart: &ChartArg, point: &str, axis: usize, range: &str, format: Format, out: Option<PathBuf>) -> Outcome {
    let chart = load_chart(chart)?;
    let dim = chart.dim();
    let y0 = grid::parse_point(point, dim)?;
    let params = grid::parse_grid(&[format!("1={range}")], 1)?.remove(0).values();
    let line = chart.coordinate_line(&y0, axis, &params)?;
    let mut sink = Sink::new(out);
    match format {
        Format::Csv => {
            let mut header = vec!["s".to_string()];
            header.extend(coordinate_header('x', dim));
            sink.push(&csv_row(&header));
            for (s, x) in params.iter().zip(&line) {
                let mut fields = vec![float(*s)];
                fields.extend(x.iter().map(|v| float(*v)));
                sink.push(&csv_row(&fields));
            }
        }
        Format::Json => {
            let rows: Vec<BTreeMap<&str, serde_json::Value>> = params
                .iter()
                .zip(&line)
                .map(|(s, x)| BTreeMap::from([("s", json!(s)), ("x", json!(x))]))
                .collect();
            sink.json(&rows)?;
        }
    }
    sink.finish()?;
    Ok(0)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Check { expr, explicit, dim, out } => cmd_check(&expr, explicit, dim, out),
        Command::Eval { expr, bindings, dim, out } => cmd_eval(&expr, &bindings, dim, out),
        Command::Christoffel { chart, points, format, out } => cmd_christoffel(&chart, &points, format, out),
        Command::FieldOp { op, chart, field, field_file, points, scheme, format, out } => cmd_field_op(
            op,
            &chart,
            field.as_deref(),
            field_file.as_deref(),
            &points,
            &scheme,
            format,
            out,
        ),
        Command::Audit { chart, points, seed, out } => cmd_audit(&chart, points, seed, out),
        Command::Lines { chart, point, axis, range, format, out } => {
            cmd_lines(&chart, &point, axis, &range, format, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_IO } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_paths() {
        assert_eq!(component_path(0, 0, 3), "");
        assert_eq!(component_path(2, 1, 3), "3");
        assert_eq!(component_path(5, 2, 3), "2.3");
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::Binding("F".into())), EXIT_BINDING);
        assert_eq!(exit_code(&Error::Shape("x".into())), EXIT_BINDING);
        assert_eq!(exit_code(&Error::Domain("pole".into())), EXIT_DOMAIN);
    }
}

mod pgm;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use stcf::apps::{self, Family, Neighborhood, RegressionProblem, RestorationProblem, ShapeKind, ShapeSpec};
use stcf::bench::{format_number as num, run_experiment, Experiment};
use stcf::convex1d::PoissonTerm;
use stcf::geometry2d::{ConvexRegion, Point, TruncatedFunction2d};
use stcf::oracle;
use stcf::quadform::TruncatedQuadratic;
use stcf::satred::{self, Formula3Sat};
use stcf::solver1d::{minimize_sum_1d, objective_1d, TruncatedFunction1d};
use stcf::solver2d::{enumerate_candidate_sets, minimize_sum_2d};
use stcf::solverhd::{minimize_ccd, CcdOptions, SparseTerm, SparseTruncatedSum};
use stcf::{Error, Solution};

use pgm::Pgm;

const FORMAT: &str = "stcf-v1";

#[derive(Parser)]
#[command(name = "stcf", version, about = "Minimize sums of truncated convex functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact minimization of a univariate sum.
    Solve1d {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Exact minimization of a planar sum.
    Solve2d {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also list every candidate active set.
        #[arg(long)]
        emit_candidates: bool,
    },
    /// Coordinate descent on a sparse sum in many variables.
    Solvehd {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = stcf::solverhd::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = stcf::solverhd::DEFAULT_MAX_ITER)]
        max_iter: usize,
    },
    /// Brute-force reference values.
    Oracle {
        #[arg(long)]
        input: PathBuf,
        /// `x0,x1,res` in 1-D or `x0,x1,y0,y1,res` in 2-D.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
    },
    /// Outlier detection in linear regression.
    Outliers {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long, value_enum, default_value_t = FamilyArg::Gaussian)]
        family: FamilyArg,
        /// Per-observation CSV of γ and flags.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Place a convex shape to cover the most point weight.
    Place {
        #[arg(long, value_enum)]
        shape: ShapeArg,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        side: Option<f64>,
        #[arg(long)]
        points: PathBuf,
    },
    /// Edge-preserving restoration of a 1-D signal.
    DenoiseSignal {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        w: f64,
        #[arg(long)]
        lambda: f64,
    },
    /// Edge-preserving restoration of a PGM image.
    DenoiseImage {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        w: f64,
        #[arg(long)]
        lambda: f64,
    },
    /// Check the 3-SAT reduction on a DIMACS formula.
    Satred {
        #[arg(long)]
        dimacs: PathBuf,
    },
    /// Run a seeded simulation study.
    Bench {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(Experiment::NAMES))]
        name: String,
        #[arg(long, default_value_t = 20)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Problem size: observations, functions or points.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        complexity: Option<f64>,
        #[arg(long)]
        outlier_frac: Option<f64>,
        #[arg(long)]
        leverage: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Poisson,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Circle,
    Square,
    Hexagon,
}

/// Bad user input; reported with exit code 2.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn invalid(field: &str, reason: impl std::fmt::Display) -> anyhow::Error {
    InputError(format!("invalid input `{field}`: {reason}")).into()
}

fn is_input_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<InputError>()
            || c.is::<serde_json::Error>()
            || c.is::<csv::Error>()
            || c.downcast_ref::<Error>().is_some_and(|e| {
                matches!(
                    e,
                    Error::InvalidInput { .. }
                        | Error::DimensionMismatch { .. }
                        | Error::Parse { .. }
                        | Error::Unsupported { .. }
                        | Error::Term { .. }
                )
            })
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_input_error(&e) { 2 } else { 1 })
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("STCF_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| invalid("STCF_THREADS", "expected a non-negative integer"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    let mut out = String::new();
    match cmd {
        Command::Solve1d { input, output } => {
            let fs = terms_1d(&read_problem(&input)?)?;
            let sol = minimize_sum_1d(&fs)?;
            print_solution(&mut out, &sol);
            if let Some(p) = output {
                write_json(&p, &sol)?;
            }
        }
        Command::Solve2d { input, output, emit_candidates } => {
            let fs = terms_2d(&read_problem(&input)?)?;
            let sol = minimize_sum_2d(&fs)?;
            print_solution(&mut out, &sol);
            let candidates = if emit_candidates { Some(enumerate_candidate_sets(&fs)?) } else { None };
            if let Some(sets) = &candidates {
                writeln!(out, "candidates {}", sets.len())?;
                for s in sets {
                    writeln!(out, "set{}", join(s.iter().map(|i| format!(" {i}"))))?;
                }
            }
            if let Some(p) = output {
                write_json(&p, &SolutionFile { solution: &sol, candidates })?;
            }
        }
        Command::Solvehd { input, output, tol, max_iter } => {
            let text = read_text(&input)?;
            let prob: HdProblem = serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
            check_format(&prob.format)?;
            let sum = SparseTruncatedSum::new(prob.dim, prob.terms)?;
            let x0 = prob.x0.unwrap_or_else(|| vec![0.0; prob.dim]);
            let res = minimize_ccd(&sum, &x0, CcdOptions { tol, max_iter, trace_updates: false })?;
            print_solution(&mut out, &res.solution);
            if let Some(p) = output {
                write_json(&p, &res.solution)?;
            }
        }
        Command::Oracle { input, grid } => oracle_cmd(&mut out, &read_problem(&input)?, grid.as_deref())?,
        Command::Outliers { csv, lambda, family, output } => {
            let table = read_csv(&csv)?;
            let yi = table.column("y")?;
            let rows: Vec<Vec<f64>> = table
                .rows
                .iter()
                .map(|r| std::iter::once(1.0).chain(r.iter().enumerate().filter(|&(k, _)| k != yi).map(|(_, &v)| v)).collect())
                .collect();
            let y: Vec<f64> = table.rows.iter().map(|r| r[yi]).collect();
            let family = match family {
                FamilyArg::Gaussian => Family::Gaussian,
                FamilyArg::Poisson => Family::Poisson,
            };
            let rp = RegressionProblem::new(rows, y, lambda, family)?;
            let fit = apps::detect_outliers(&rp)?;
            writeln!(out, "beta{}", join(fit.beta.iter().map(|v| format!(" {}", num(*v)))))?;
            writeln!(out, "objective {}", num(fit.objective))?;
            let flagged: Vec<usize> = (0..fit.flags.len()).filter(|&i| fit.flags[i]).collect();
            writeln!(out, "outliers {}{}", flagged.len(), join(flagged.iter().map(|i| format!(" {i}"))))?;
            if let Some(p) = output {
                let mut s = format!("# format: {FORMAT}\nindex,gamma,outlier\n");
                for (i, (g, f)) in fit.gamma.iter().zip(&fit.flags).enumerate() {
                    writeln!(s, "{i},{},{}", num(*g), u8::from(*f))?;
                }
                write_atomic(&p, s.as_bytes())?;
            }
        }
        Command::Place { shape, radius, side, points } => {
            let kind = match shape {
                ShapeArg::Circle => ShapeKind::Circle { radius: radius.ok_or_else(|| invalid("radius", "required for circle"))? },
                ShapeArg::Square => ShapeKind::Square { side: side.ok_or_else(|| invalid("side", "required for square"))? },
                ShapeArg::Hexagon => {
                    ShapeKind::RegularHexagon { circumradius: radius.ok_or_else(|| invalid("radius", "required for hexagon"))? }
                }
            };
            let table = read_csv(&points)?;
            let (xi, yi) = (table.column("x")?, table.column("y")?);
            let wi = table.header.iter().position(|h| h == "weight");
            let pts = table.rows.iter().map(|r| ([r[xi], r[yi]], wi.map_or(1.0, |k| r[k]))).collect();
            let pl = apps::place_shape(&ShapeSpec { kind, points: pts })?;
            writeln!(out, "location {} {}", num(pl.location[0]), num(pl.location[1]))?;
            writeln!(out, "covered_weight {}", num(pl.covered_weight))?;
            writeln!(out, "covered{}", join(pl.covered.iter().map(|i| format!(" {i}"))))?;
        }
        Command::DenoiseSignal { input, output, w, lambda } => {
            let table = read_csv(&input)?;
            let yi = table.column("y")?;
            let y: Vec<f64> = table.rows.iter().map(|r| r[yi]).collect();
            let rp = RestorationProblem { observations: y, w, lambda, neighborhood: Neighborhood::Chain };
            let res = apps::restore_signal(&rp)?;
            print_restoration(&mut out, &res);
            let mut s = format!("# format: {FORMAT}\nx\n");
            for v in &res.x {
                writeln!(s, "{}", num(*v))?;
            }
            match output {
                Some(p) => write_atomic(&p, s.as_bytes())?,
                None => out.push_str(&s),
            }
        }
        Command::DenoiseImage { input, output, w, lambda } => {
            let bytes = std::fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let img = Pgm::parse(&bytes).map_err(|e| invalid("input", e))?;
            let rp = RestorationProblem {
                observations: img.to_unit(),
                w,
                lambda,
                neighborhood: Neighborhood::Grid4 { width: img.width, height: img.height },
            };
            let res = apps::restore_image(&rp)?;
            print_restoration(&mut out, &res);
            let restored = Pgm::from_unit(img.width, img.height, img.maxval, &res.x)?;
            let path = output.unwrap_or_else(|| default_image_output(&input));
            write_atomic(&path, &restored.to_bytes())?;
            writeln!(out, "wrote {}", path.display())?;
        }
        Command::Satred { dimacs } => {
            let f = Formula3Sat::from_dimacs(&read_text(&dimacs)?)?;
            let min = satred::min_by_orthants(&satred::reduce(&f)?)?;
            let expected = 6 * f.clauses.len() as u32;
            writeln!(out, "min={min} expected-if-sat={expected} {}", if min == expected { "SAT" } else { "UNSAT" })?;
        }
        Command::Bench { name, replicates, seed, out: path, n, complexity, outlier_frac, leverage } => {
            let mut exp = Experiment::named(&name)?;
            match &mut exp {
                Experiment::Outliers { n: en, outlier_frac: f, leverage: l, .. } => {
                    set(en, n);
                    set(f, outlier_frac);
                    set(l, leverage);
                }
                Experiment::Quadratics2d { n: en, complexity: c } => {
                    set(en, n);
                    set(c, complexity);
                }
                Experiment::Placement { n_points, .. } => set(n_points, n),
                Experiment::Signal { .. } => {}
            }
            let report = run_experiment(&exp, replicates, seed)?;
            let csv = report.to_csv();
            match path {
                Some(p) => {
                    write_atomic(&p, csv.as_bytes())?;
                    writeln!(out, "{} replicates in {:.1}s, wrote {}", replicates, report.seconds, p.display())?;
                }
                None => out.push_str(&csv),
            }
        }
    }
    std::io::stdout().write_all(out.as_bytes())?;
    Ok(())
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn join(parts: impl Iterator<Item = String>) -> String {
    parts.collect()
}

fn print_solution(out: &mut String, s: &Solution) {
    let _ = writeln!(out, "value {}", num(s.value));
    let _ = writeln!(out, "x{}", join(s.x.iter().map(|v| format!(" {}", num(*v)))));
    let _ = writeln!(out, "active{}", join(s.active.iter().map(|i| format!(" {i}"))));
    if s.iterations > 0 {
        let _ = writeln!(out, "iterations {} converged {}", s.iterations, s.converged);
    }
}

fn print_restoration(out: &mut String, r: &apps::Restoration) {
    let _ = writeln!(out, "objective {}", num(r.objective));
    let _ = writeln!(out, "iterations {} converged {}", r.iterations, r.converged);
}

fn default_image_output(input: &Path) -> PathBuf {
    let stem = input.file_stem().map_or("image".into(), |s| s.to_string_lossy().into_owned());
    input.with_file_name(format!("{stem}.restored.pgm"))
}

#[derive(Deserialize)]
struct Problem {
    format: String,
    terms: Vec<TermSpec>,
}

#[derive(Deserialize)]
struct HdProblem {
    format: String,
    dim: usize,
    terms: Vec<SparseTerm>,
    #[serde(default)]
    x0: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TermSpec {
    Quadratic(TruncatedQuadratic),
    /// `min{e^θ − θy, λ}` with `θ = offset + scale·x`.
    Poisson { offset: f64, scale: f64, y: f64, lambda: f64 },
    Disk { center: Point, radius: f64, weight: f64 },
    Polygon { vertices: Vec<Point>, weight: f64 },
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    #[serde(flatten)]
    solution: &'a Solution,
    #[serde(skip_serializing_if = "Option::is_none")]
    candidates: Option<Vec<Vec<usize>>>,
}

fn check_format(f: &str) -> Result<()> {
    if f != FORMAT {
        return Err(invalid("format", format!("expected \"{FORMAT}\", got \"{f}\"")));
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| invalid("input", format!("{}: {e}", path.display())))
}

fn read_problem(path: &Path) -> Result<Problem> {
    let p: Problem = serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
    check_format(&p.format)?;
    if p.terms.is_empty() {
        return Err(invalid("terms", "at least one term is required"));
    }
    Ok(p)
}

fn terms_1d(p: &Problem) -> Result<Vec<TruncatedFunction1d>> {
    p.terms
        .iter()
        .enumerate()
        .map(|(i, t)| match t {
            TermSpec::Quadratic(q) => {
                TruncatedFunction1d::try_from(q).map_err(|e| invalid(&format!("terms[{i}]"), e))
            }
            &TermSpec::Poisson { offset, scale, y, lambda } => {
                if !(y >= 0.0) {
                    return Err(invalid(&format!("terms[{i}].y"), "must be non-negative"));
                }
                Ok(TruncatedFunction1d::convex(PoissonTerm { offset, scale, y }, lambda))
            }
            _ => Err(invalid(&format!("terms[{i}].kind"), "not a univariate term")),
        })
        .collect()
}

fn terms_2d(p: &Problem) -> Result<Vec<TruncatedFunction2d>> {
    p.terms
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let field = format!("terms[{i}]");
            Ok(match t {
                TermSpec::Quadratic(q) if q.dim() == 2 => TruncatedFunction2d::Quadratic(q.clone()),
                TermSpec::Quadratic(q) => return Err(invalid(&field, format!("expected dimension 2, got {}", q.dim()))),
                &TermSpec::Disk { center, radius, weight } => {
                    if !(radius > 0.0) {
                        return Err(invalid(&format!("{field}.radius"), "must be positive"));
                    }
                    TruncatedFunction2d::Indicator { region: ConvexRegion::Disk { center, radius }, weight }
                }
                TermSpec::Polygon { vertices, weight } => TruncatedFunction2d::Indicator {
                    region: ConvexRegion::polygon(vertices.clone()).map_err(|e| invalid(&format!("{field}.vertices"), e))?,
                    weight: *weight,
                },
                TermSpec::Poisson { .. } => return Err(invalid(&format!("{field}.kind"), "not a planar term")),
            })
        })
        .collect()
}

fn problem_dim(p: &Problem) -> usize {
    match &p.terms[0] {
        TermSpec::Quadratic(q) => q.dim(),
        TermSpec::Poisson { .. } => 1,
        _ => 2,
    }
}

fn oracle_cmd(out: &mut String, p: &Problem, grid: Option<&str>) -> Result<()> {
    let dim = problem_dim(p);
    let grid: Option<Vec<f64>> = grid
        .map(|g| g.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| invalid("grid", format!("bad number `{s}`")))).collect())
        .transpose()?;
    if let Some(g) = &grid {
        if g.len() != 2 * dim + 1 {
            return Err(invalid("grid", format!("expected {} comma-separated values", 2 * dim + 1)));
        }
    }
    let res_of = |g: &[f64]| -> Result<usize> {
        let r = g[2 * dim];
        if r.fract() != 0.0 || r < 2.0 {
            return Err(invalid("grid", "resolution must be an integer ≥ 2"));
        }
        Ok(r as usize)
    };
    if dim == 1 {
        let fs = terms_1d(p)?;
        let s = oracle::subset_oracle_1d(&fs)?;
        writeln!(out, "subset_value {}", num(s.value))?;
        writeln!(out, "subset_x {}", num(s.x[0]))?;
        if let Some(g) = &grid {
            let r = oracle::grid_oracle(|x| objective_1d(&fs, x[0]), &[(g[0], g[1])], res_of(g)?)?;
            writeln!(out, "grid_value {}", num(r.value))?;
            writeln!(out, "grid_x {}", num(r.x[0]))?;
        }
    } else {
        let fs = terms_2d(p)?;
        let quadratic = fs.iter().all(|f| matches!(f, TruncatedFunction2d::Quadratic(_)));
        if quadratic {
            let s = oracle::subset_oracle_2d(&fs)?;
            writeln!(out, "subset_value {}", num(s.value))?;
            writeln!(out, "subset_x {} {}", num(s.x[0]), num(s.x[1]))?;
        } else if grid.is_none() {
            return Err(invalid("grid", "indicator terms need a grid box"));
        }
        if let Some(g) = &grid {
            let obj = |x: &[f64]| stcf::geometry2d::objective_2d(&fs, [x[0], x[1]]);
            let r = oracle::grid_oracle(obj, &[(g[0], g[1]), (g[2], g[3])], res_of(g)?)?;
            writeln!(out, "grid_value {}", num(r.value))?;
            writeln!(out, "grid_x {} {}", num(r.x[0]), num(r.x[1]))?;
        }
    }
    Ok(())
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| invalid(name, "column is missing"))
    }
}

/// Headed numeric CSV; an optional leading `# format: stcf-v1` line pins the
/// schema version, other `#` lines are comments.
fn read_csv(path: &Path) -> Result<Table> {
    let text = read_text(path)?;
    if let Some(v) = text.lines().next().and_then(|l| l.strip_prefix('#')).and_then(|l| l.trim().strip_prefix("format:")) {
        check_format(v.trim())?;
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .zip(&header)
            .map(|(s, h)| s.parse::<f64>().map_err(|_| invalid(h, format!("row {}: `{s}` is not a number", k + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(invalid("rows", format!("row {} has a non-finite value", k + 1)));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(invalid("rows", "no data rows"));
    }
    Ok(Table { header, rows })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    if let serde_json::Value::Object(m) = &mut v {
        m.insert("format".into(), FORMAT.into());
    }
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// Writes to a temporary file beside `path`, then renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn format_key_is_checked() {
        assert!(check_format(FORMAT).is_ok());
        assert!(is_input_error(&check_format("stcf-v0").unwrap_err()));
    }
}

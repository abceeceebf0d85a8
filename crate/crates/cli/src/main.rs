use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rayon::prelude::*;

use rsl_core::analysis::{self, AnalysisConfig, SweepRow};
use rsl_core::oracle::{self, Coefficients};
use rsl_core::{
    catalog, differential_root, parse, BindOptions, Binder, Error, Grid, Params, ProblemDoc,
    RealExpr, RootOptions,
};

/// Boundedness and stability of `φ'' + pφ' + qφ = 0`.
#[derive(Debug, Parser)]
#[command(name = "rsl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the built-in problems.
    Catalog {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the criteria and direct integration on one problem.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Record wall time in the report.
        #[arg(long)]
        timing: bool,
    },
    /// Analyze one problem for each value of a parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Parameter to vary.
        #[arg(long = "sweep-param")]
        sweep_param: String,
        /// Comma-separated values, each `re` or `re:im`.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Differential root of a positive function, as CSV.
    Root {
        /// Expression in `t`.
        #[arg(long)]
        x: String,
        #[arg(long)]
        t0: f64,
        #[arg(long = "t-end")]
        t_end: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 4000)]
        grid: usize,
        #[arg(long = "t1-candidates", default_value_t = 32)]
        t1_candidates: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Direct integration only: empirical verdict, or a basis solution as CSV.
    Oracle {
        #[command(flatten)]
        run: RunArgs,
        /// With `--format csv`, which basis solution to print.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        basis: u8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Catalog id, or a problem as inline JSON.
    #[arg(long)]
    problem: Option<String>,
    /// `name=re` or `name=re,im`; repeatable.
    #[arg(long = "param", allow_hyphen_values = true)]
    params: Vec<String>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long = "oracle-t-end")]
    oracle_t_end: Option<f64>,
    /// Criteria grid intervals.
    #[arg(long)]
    grid: Option<usize>,
    /// Integrator tolerance for the root and the direct solves.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long = "Delta")]
    big_delta: Option<f64>,
    #[arg(long)]
    band: Option<f64>,
    #[arg(long = "t1-candidates")]
    t1_candidates: Option<usize>,
    /// Skip the identity and substitution checks.
    #[arg(long)]
    no_identities: bool,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: error_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn error_code(e: &Error) -> u8 {
    if e.is_theory_inapplicable() || matches!(e, Error::NonPositiveInput { .. }) {
        2
    } else if e.is_integrator_failure() {
        3
    } else {
        1
    }
}

fn fail(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
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

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Catalog { format, out } => cmd_catalog(format, out.as_deref()),
        Command::Analyze { run, timing } => cmd_analyze(&run, timing),
        Command::Sweep {
            run,
            sweep_param,
            values,
        } => cmd_sweep(&run, &sweep_param, &values),
        Command::Root {
            x,
            t0,
            t_end,
            tol,
            grid,
            t1_candidates,
            out,
        } => cmd_root(&x, t0, t_end, tol, grid, t1_candidates, out.as_deref()),
        Command::Oracle { run, basis } => cmd_oracle(&run, basis),
    }
}

fn output(out: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_catalog(format: Format, out: Option<&Path>) -> Result<u8, Failure> {
    let mut w = output(out)?;
    let problems = catalog();
    match format {
        Format::Json => {
            let docs: Vec<ProblemDoc> = problems.iter().map(|p| p.to_doc()).collect();
            serde_json::to_writer_pretty(&mut w, &docs).map_err(|e| fail(e.to_string()))?;
            writeln!(w)?;
        }
        Format::Csv => {
            writeln!(w, "id,t0,params,rule")?;
            for p in &problems {
                let rule = p.verdict_rule.as_ref().map(|r| r.text()).unwrap_or("");
                writeln!(
                    w,
                    "{},{},{},\"{}\"",
                    p.id,
                    p.t0,
                    p.param_slots().join(" "),
                    rule.replace('"', "'")
                )?;
            }
        }
        Format::Text => {
            for p in &problems {
                let doc = p.to_doc();
                writeln!(w, "{}", p.id)?;
                writeln!(w, "  p = {}", doc.p)?;
                writeln!(w, "  q = {}", doc.q)?;
                writeln!(w, "  t0 = {}, horizon {}", p.t0, p.t_end)?;
                let slots = p.param_slots();
                if !slots.is_empty() {
                    let vals: Vec<String> = slots
                        .iter()
                        .map(|s| match doc.params.get(s) {
                            Some([re, 0.0]) => format!("{s}={re}"),
                            Some([re, im]) => format!("{s}={re}{im:+}i"),
                            None => s.clone(),
                        })
                        .collect();
                    writeln!(w, "  parameters: {}", vals.join(", "))?;
                }
                if let Some(r) = &p.verdict_rule {
                    writeln!(w, "  expected: {}", r.text())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(0)
}

fn parse_value(s: &str) -> Result<Complex64, Failure> {
    let s = s.trim();
    let (re, im) = match s.split_once(':') {
        Some((a, b)) => (a, b),
        None => (s, "0"),
    };
    let re: f64 = re
        .trim()
        .parse()
        .map_err(|_| fail(format!("bad number `{s}`")))?;
    let im: f64 = im
        .trim()
        .parse()
        .map_err(|_| fail(format!("bad number `{s}`")))?;
    Ok(Complex64::new(re, im))
}

fn parse_param(s: &str) -> Result<(String, Complex64), Failure> {
    let (name, val) = s
        .split_once('=')
        .ok_or_else(|| fail(format!("expected name=re[,im], got `{s}`")))?;
    let mut parts = val.split(',');
    let re = parts.next().unwrap_or("");
    let im = parts.next().unwrap_or("0");
    if parts.next().is_some() {
        return Err(fail(format!("expected name=re[,im], got `{s}`")));
    }
    let z = parse_value(&format!("{re}:{im}"))?;
    Ok((name.trim().to_string(), z))
}

/// Defaults from `RSL_DEFAULTS`, then flags on top.
fn build_config(a: &RunArgs) -> Result<AnalysisConfig, Failure> {
    let mut cfg = match std::env::var_os("RSL_DEFAULTS") {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| fail(format!("RSL_DEFAULTS {}: {e}", Path::new(&path).display())))?;
            serde_json::from_str::<AnalysisConfig>(&text)
                .map_err(|e| fail(format!("RSL_DEFAULTS: {e}")))?
        }
        None => AnalysisConfig::default(),
    };
    if let Some(p) = &a.problem {
        if p.trim_start().starts_with('{') {
            let doc: ProblemDoc =
                serde_json::from_str(p).map_err(|e| fail(format!("inline problem: {e}")))?;
            cfg.inline = Some(doc);
            cfg.problem = None;
        } else {
            cfg.problem = Some(p.clone());
            cfg.inline = None;
        }
    }
    for s in &a.params {
        let (k, v) = parse_param(s)?;
        cfg = cfg.with_param(&k, v);
    }
    if let Some(v) = a.t_end {
        cfg.t_end = Some(v);
    }
    if let Some(v) = a.oracle_t_end {
        cfg.oracle_t_end = Some(v);
    }
    if let Some(v) = a.grid {
        cfg.criteria.grid_intervals = v;
    }
    if let Some(v) = a.tol {
        cfg.criteria.root.tol = v;
        cfg.oracle.tol = v;
    }
    if let Some(v) = a.delta {
        cfg.criteria.trend.delta = v;
    }
    if let Some(v) = a.big_delta {
        cfg.criteria.trend.big_delta = v;
    }
    if let Some(v) = a.band {
        cfg.criteria.trend.band = v;
    }
    if let Some(v) = a.t1_candidates {
        cfg.criteria.root.t1_candidates = v;
    }
    if a.no_identities {
        cfg.identities = false;
    }
    Ok(cfg)
}

fn cmd_analyze(a: &RunArgs, timing: bool) -> Result<u8, Failure> {
    let cfg = build_config(a)?;
    let report = analysis::analyze(&cfg, timing)?;
    let mut w = output(a.out.as_deref())?;
    match a.format {
        Format::Csv => {
            let row = SweepRow {
                param: String::new(),
                value: [f64::NAN, f64::NAN],
                boundedness: report.verdict.as_ref().map(|v| v.boundedness),
                stability: report.verdict.as_ref().map(|v| v.stability),
                oracle_boundedness: report.oracle.as_ref().map(|v| v.boundedness),
                oracle_stability: report.oracle.as_ref().map(|v| v.stability),
                claim_status: Some(report.recorded_claim.status),
                error: report.error.clone(),
            };
            writeln!(w, "{}", SweepRow::CSV_HEADER)?;
            writeln!(w, "{}", row.csv_line())?;
        }
        Format::Text => write!(w, "{}", report_text(&report))?,
        Format::Json => writeln!(w, "{}", report.to_json())?,
    }
    w.flush()?;
    if let Some(e) = &report.error {
        eprintln!("theory not applicable: {}", e.message);
        return Ok(2);
    }
    Ok(0)
}

fn cmd_sweep(a: &RunArgs, param: &str, values: &str) -> Result<u8, Failure> {
    let cfg = build_config(a)?;
    let values: Vec<Complex64> = values
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(parse_value)
        .collect::<Result<_, _>>()?;
    if !values.is_empty() {
        analysis::check_sweep_param(&cfg, param)?;
    }
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&v| analysis::sweep_row(&cfg, param, v))
        .collect();
    let mut w = output(a.out.as_deref())?;
    match a.format {
        Format::Csv => {
            writeln!(w, "{}", SweepRow::CSV_HEADER)?;
            for r in &rows {
                writeln!(w, "{}", r.csv_line())?;
            }
        }
        Format::Text => {
            for r in &rows {
                let value = Complex64::new(r.value[0], r.value[1]);
                match &r.error {
                    Some(e) => writeln!(w, "{param}={value}: {}", e.kind)?,
                    None => writeln!(
                        w,
                        "{param}={value}: {} / {} (oracle {} / {})",
                        opt(r.boundedness),
                        opt(r.stability),
                        opt(r.oracle_boundedness),
                        opt(r.oracle_stability)
                    )?,
                }
            }
        }
        Format::Json => {
            let doc =
                serde_json::json!({ "schema": analysis::SCHEMA, "config": cfg, "rows": rows });
            serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| fail(e.to_string()))?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(0)
}

fn cmd_root(
    x: &str,
    t0: f64,
    t_end: f64,
    tol: f64,
    intervals: usize,
    t1_candidates: usize,
    out: Option<&Path>,
) -> Result<u8, Failure> {
    if !(t_end > t0) {
        return Err(fail(format!("t-end {t_end} must exceed t0 {t0}")));
    }
    let e = parse(x, t0)?;
    let de = e.differentiate()?;
    let mut b = Binder::new(Params::new(), BindOptions::new(t_end))?;
    let f = RealExpr::new(b.bind(&e)?, b.bind(&de)?, 1e-10);
    let grid = Arc::new(Grid::log_stretched(t0, t_end, intervals)?);
    let opts = RootOptions {
        tol,
        t1_candidates,
        ..RootOptions::default()
    };
    let root = differential_root(&f, grid, &opts)?;
    let mut w = output(out)?;
    root.write_csv(&mut w)?;
    w.flush()?;
    Ok(0)
}

fn cmd_oracle(a: &RunArgs, basis: u8) -> Result<u8, Failure> {
    let cfg = build_config(a)?;
    let (problem, cfg) = cfg.resolve()?;
    let t_end = cfg.oracle_t_end.expect("resolved");
    let mut w = output(a.out.as_deref())?;
    match a.format {
        Format::Csv => {
            let c = Coefficients::new(&problem, t_end, cfg.oracle.t_osc, cfg.oracle.quad_tol)?;
            let (first, second) = oracle::fundamental_matrix(&c, t_end, &cfg.oracle)?;
            let trace = if basis == 1 { first } else { second };
            trace.write_csv(&mut w)?;
        }
        Format::Text => {
            let v = oracle::fundamental_growth(&problem, t_end, &cfg.oracle)?;
            writeln!(w, "{} on [{}, {t_end}]", problem.id, problem.t0)?;
            writeln!(w, "boundedness: {:?}", v.boundedness)?;
            writeln!(w, "stability: {:?}", v.stability)?;
            writeln!(w, "growth exponent: {:.6}", v.growth_exponent)?;
            if let Some(t) = v.escaped_at {
                writeln!(w, "escaped at t = {t}")?;
            }
        }
        Format::Json => {
            let v = oracle::fundamental_growth(&problem, t_end, &cfg.oracle)?;
            let doc = serde_json::json!({
                "schema": analysis::SCHEMA,
                "problem": problem.id,
                "horizon": t_end,
                "oracle": v,
            });
            serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| fail(e.to_string()))?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(0)
}

fn opt<T: std::fmt::Debug>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:?}"))
}

fn report_text(r: &analysis::AnalysisReport) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "problem: {}", r.problem.id);
    if let Some(e) = &r.error {
        let _ = writeln!(s, "error: {} ({})", e.kind, e.message);
    }
    if let Some(v) = &r.verdict {
        let oracle = r.oracle.as_ref();
        let _ = writeln!(
            s,
            "boundedness: {:?} (oracle {})",
            v.boundedness,
            opt(oracle.map(|o| o.boundedness))
        );
        let _ = writeln!(
            s,
            "stability: {:?} (oracle {})",
            v.stability,
            opt(oracle.map(|o| o.stability))
        );
        let _ = writeln!(s, "rules: {:?}", v.applied);
        let _ = writeln!(s, "r1: {:?}, r2: {:?}", v.r1_trend.verdict, v.r2_trend.verdict);
        for c in &v.caveats {
            let _ = writeln!(s, "caveat: {c}");
        }
    } else if let Some(o) = &r.oracle {
        let _ = writeln!(s, "oracle: {:?} / {:?}", o.boundedness, o.stability);
    }
    let _ = writeln!(s, "recorded claim: {:?}", r.recorded_claim.status);
    if let Some(id) = &r.identities {
        let _ = writeln!(
            s,
            "identity constant: {:.8} (cv {:.1e})",
            id.checks.ratio_constant, id.checks.ratio_cv
        );
    }
    s
}

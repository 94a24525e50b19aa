//! Run configuration, output files, and the command implementations behind
//! the `grassls` binary.
//!
//! Configs and summaries are flat `key = value` text with `#` comments.
//! Every CSV is written atomically (temp file in the target directory, then
//! rename), and every float is printed with 17 significant digits so that
//! outputs round-trip exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use tempfile::NamedTempFile;

use crate::error::Error;
use crate::geometry::{chordal_distance, project_vector, GrassmannPoint};
use crate::objective::{
    baseline_ls_solve, cost, penalized_grads, penalized_value, ObjectivePoint, PenaltyParams,
    ProblemInstance,
};
use crate::oracles::{
    check_gradients_with, inner_max_2d, local_minimax_probe, minimax_2d, FeasibleArc,
    GradCheckConfig, GridSpec, ProbeConfig, ProbeObjective,
};
use crate::solver::{solve, SolveResult, SolverConfig, TraceRecord};

/// Relative-error tolerance for the x-gradient check.
pub const GRAD_TOL_X: f64 = 1e-5;
/// Relative-error tolerance for y directional derivatives.
pub const GRAD_TOL_Y: f64 = 1e-4;
/// Allowed gap between solver and brute-force values.
pub const ORACLE_VALUE_TOL: f64 = 1e-2;
/// Allowed chordal distance between solver and brute-force subspaces.
pub const ORACLE_SUBSPACE_TOL: f64 = 5e-2;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigError = 1,
    NumericalFailure = 2,
    CheckFailure = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_list(vs: impl IntoIterator<Item = f64>) -> String {
    vs.into_iter().map(fmt_num).collect::<Vec<_>>().join(",")
}

fn fmt_columns(m: &DMatrix<f64>) -> String {
    m.column_iter()
        .map(|c| fmt_list(c.iter().copied()))
        .collect::<Vec<_>>()
        .join(";")
}

/// How the nominal subspace is given in a config.
#[derive(Debug, Clone, PartialEq)]
pub enum SubspaceSpec {
    /// `e1`: span of the first k coordinate vectors.
    Coordinate,
    /// Columns spanning the subspace (orthonormalized on use).
    Columns(Vec<Vec<f64>>),
}

impl fmt::Display for SubspaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubspaceSpec::Coordinate => f.write_str("e1"),
            SubspaceSpec::Columns(cols) => {
                let parts: Vec<String> = cols.iter().map(|c| fmt_list(c.iter().copied())).collect();
                f.write_str(&parts.join(";"))
            }
        }
    }
}

/// A problem-level configuration error.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Every problem found in one config, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for issue in &self.0 {
            writeln!(f, "  {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub k: usize,
    pub b: Vec<f64>,
    pub y_hat: SubspaceSpec,
    pub rho: f64,
    pub lambda: f64,
    pub u: f64,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    /// Half-length of the line segments written for 1-D subspaces.
    pub plot_range: f64,
}

const KEYS: &[&str] = &[
    "n",
    "k",
    "b",
    "y_hat",
    "rho",
    "lambda",
    "u",
    "eta_x",
    "eta_y",
    "max_iters",
    "grad_tol",
    "seed",
    "record_every",
    "output_dir",
    "plot_range",
];

impl Default for RunConfig {
    fn default() -> Self {
        Self::worked_example()
    }
}

impl RunConfig {
    /// The worked example: `n = 2, k = 1`, `ŷ = span(e₁)`,
    /// `b = (cos π/16, sin π/16)`, `ρ = sin(π/8)`, `u = 0.01`, `λ = 70`,
    /// `η_x = 0.01`, `η_y = 0.1`.
    pub fn worked_example() -> Self {
        let inst = ProblemInstance::worked_example();
        let params = PenaltyParams::worked_example();
        Self {
            n: 2,
            k: 1,
            b: inst.b().iter().copied().collect(),
            y_hat: SubspaceSpec::Coordinate,
            rho: inst.rho(),
            lambda: params.lambda(),
            u: params.u(),
            solver: SolverConfig::default(),
            output_dir: PathBuf::from("out"),
            plot_range: 1.5,
        }
    }

    /// Parses config text. Keys not present keep their
    /// [`RunConfig::worked_example`] values.
    pub fn parse(text: &str) -> Result<Self, ConfigErrors> {
        let mut cfg = Self::worked_example();
        let mut issues = Vec::new();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut lines: BTreeMap<&'static str, usize> = BTreeMap::new();
        let mut unparsed: Vec<&'static str> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                issues.push(ConfigIssue {
                    line: Some(line_no),
                    field: line.to_string(),
                    message: "expected `key = value`".into(),
                });
                continue;
            };
            let key = key.trim();
            let value = value.trim();
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                issues.push(ConfigIssue {
                    line: Some(line_no),
                    field: key.to_string(),
                    message: "unknown key".into(),
                });
                continue;
            };
            if let Some(prev) = seen.insert(key.to_string(), line_no) {
                issues.push(ConfigIssue {
                    line: Some(line_no),
                    field: key.to_string(),
                    message: format!("duplicate key (first set on line {prev})"),
                });
                continue;
            }
            lines.insert(known, line_no);
            if let Err(message) = cfg.set(known, value) {
                unparsed.push(known);
                issues.push(ConfigIssue {
                    line: Some(line_no),
                    field: key.to_string(),
                    message,
                });
            }
        }

        // Field-level invariants; only for fields that parsed.
        for (field, message) in cfg.invariant_problems() {
            if unparsed.contains(&field) {
                continue;
            }
            issues.push(ConfigIssue {
                line: lines.get(field).copied(),
                field: field.to_string(),
                message,
            });
        }
        if issues.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigErrors(issues))
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigErrors(vec![ConfigIssue {
                line: None,
                field: path.display().to_string(),
                message: format!("cannot read config: {e}"),
            }])
        })?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
            v.parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
        }
        fn list(v: &str) -> Result<Vec<f64>, String> {
            v.split(',').map(|s| num::<f64>(s.trim())).collect()
        }
        match key {
            "n" => self.n = num(value)?,
            "k" => self.k = num(value)?,
            "b" => self.b = list(value)?,
            "y_hat" => {
                self.y_hat = if value == "e1" {
                    SubspaceSpec::Coordinate
                } else {
                    SubspaceSpec::Columns(value.split(';').map(list).collect::<Result<_, _>>()?)
                }
            }
            "rho" => self.rho = num(value)?,
            "lambda" => self.lambda = num(value)?,
            "u" => self.u = num(value)?,
            "eta_x" => self.solver.eta_x = num(value)?,
            "eta_y" => self.solver.eta_y = num(value)?,
            "max_iters" => self.solver.max_iters = num(value)?,
            "grad_tol" => self.solver.grad_tol = num(value)?,
            "seed" => self.solver.seed = num(value)?,
            "record_every" => self.solver.record_every = num(value)?,
            "output_dir" => {
                if value.is_empty() {
                    return Err("empty path".into());
                }
                self.output_dir = PathBuf::from(value)
            }
            "plot_range" => self.plot_range = num(value)?,
            _ => unreachable!("key list and setter disagree on {key}"),
        }
        Ok(())
    }

    /// Violated invariants as `(field, message)` pairs.
    fn invariant_problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.n == 0 {
            out.push(("n", "need n >= 1".to_string()));
        }
        if self.k == 0 || self.k > self.n {
            out.push(("k", format!("need 1 <= k <= n, got k = {}, n = {}", self.k, self.n)));
        }
        if self.b.len() != self.n {
            out.push(("b", format!("expected {} entries, got {}", self.n, self.b.len())));
        } else if self.b.iter().any(|v| !v.is_finite()) {
            out.push(("b", "entries must be finite".to_string()));
        }
        if let SubspaceSpec::Columns(cols) = &self.y_hat {
            if cols.len() != self.k || cols.iter().any(|c| c.len() != self.n) {
                out.push(("y_hat", format!("expected {} columns of length {}", self.k, self.n)));
            } else if self.k >= 1 && self.k <= self.n {
                if let Err(e) = GrassmannPoint::span_of(&columns_matrix(cols, self.n)) {
                    out.push(("y_hat", e.to_string()));
                }
            }
        }
        let max_rho = (self.k as f64).sqrt();
        if !(self.rho > 0.0 && self.rho < max_rho) {
            out.push(("rho", format!("need 0 < rho < sqrt(k) = {max_rho}, got {}", self.rho)));
        }
        if let Err(Error::InvalidParameter { name, reason }) = PenaltyParams::new(self.lambda, self.u) {
            out.push((if name == "u" { "u" } else { "lambda" }, reason));
        }
        for e in self.solver.problems() {
            if let Error::InvalidParameter { name, reason } = e {
                out.push((name, reason));
            }
        }
        if !(self.plot_range > 0.0 && self.plot_range.is_finite()) {
            out.push(("plot_range", format!("need plot_range > 0, got {}", self.plot_range)));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let issues: Vec<ConfigIssue> = self
            .invariant_problems()
            .into_iter()
            .map(|(field, message)| ConfigIssue {
                line: None,
                field: field.to_string(),
                message,
            })
            .collect();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(issues))
        }
    }

    /// Serializes every key; [`RunConfig::parse`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let s = &self.solver;
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("n", self.n.to_string());
        put("k", self.k.to_string());
        put("b", fmt_list(self.b.iter().copied()));
        put("y_hat", self.y_hat.to_string());
        put("rho", fmt_num(self.rho));
        put("lambda", fmt_num(self.lambda));
        put("u", fmt_num(self.u));
        put("eta_x", fmt_num(s.eta_x));
        put("eta_y", fmt_num(s.eta_y));
        put("max_iters", s.max_iters.to_string());
        put("grad_tol", fmt_num(s.grad_tol));
        put("seed", s.seed.to_string());
        put("record_every", s.record_every.to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("plot_range", fmt_num(self.plot_range));
        out
    }

    pub fn instance(&self) -> crate::Result<ProblemInstance> {
        let y_hat = match &self.y_hat {
            SubspaceSpec::Coordinate => GrassmannPoint::coordinate(self.n, self.k)?,
            SubspaceSpec::Columns(cols) => GrassmannPoint::span_of(&columns_matrix(cols, self.n))?,
        };
        ProblemInstance::new(DVector::from_column_slice(&self.b), y_hat, self.rho)
    }

    pub fn penalty(&self) -> crate::Result<PenaltyParams> {
        PenaltyParams::new(self.lambda, self.u)
    }
}

fn columns_matrix(cols: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

/// Writes `contents` to `path` through a temp file in the same directory.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn points_csv<'a>(points: impl IntoIterator<Item = &'a [f64; 2]>) -> String {
    let mut s = String::from("x,y\n");
    for p in points {
        s.push_str(&format!("{},{}\n", fmt_num(p[0]), fmt_num(p[1])));
    }
    s
}

fn segment(angle: f64, half: f64) -> [[f64; 2]; 2] {
    let (s, c) = angle.sin_cos();
    [[-half * c, -half * s], [half * c, half * s]]
}

fn gradient_csv(trace: &[TraceRecord]) -> String {
    let mut s = String::from("iter,grad_norm\n");
    for r in trace {
        s.push_str(&format!("{},{}\n", r.iter, fmt_num(r.grad_norm)));
    }
    s
}

fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut s = String::from("iter,grad_norm,center_distance\n");
    for r in trace {
        s.push_str(&format!(
            "{},{},{}\n",
            r.iter,
            fmt_num(r.grad_norm),
            fmt_num(r.center_distance)
        ));
    }
    s
}

/// Flat `key = value` summary in insertion order.
#[derive(Debug, Default, Clone)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn put(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push((key.to_string(), value.into()));
    }

    pub fn num(&mut self, key: &str, value: f64) {
        self.put(key, fmt_num(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        Self { entries }
    }
}

/// What a solve run produced, before anything is written.
struct RunArtifacts<'a> {
    cfg: &'a RunConfig,
    inst: &'a ProblemInstance,
    params: &'a PenaltyParams,
    trace: &'a [TraceRecord],
    result: Option<&'a SolveResult>,
    diverged_at: Option<usize>,
}

fn io_err(path: &Path, e: std::io::Error) -> String {
    format!("cannot write {}: {e}", path.display())
}

fn write_run_outputs(out_dir: &Path, a: &RunArtifacts<'_>) -> Result<Summary, String> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let write = |name: &str, contents: String| {
        let path = out_dir.join(name);
        write_atomic(&path, &contents).map_err(|e| io_err(&path, e))
    };
    write("gradient_norm.csv", gradient_csv(a.trace))?;
    write("trace.csv", trace_csv(a.trace))?;

    let planar = a.inst.n() == 2 && a.inst.k() == 1;
    if planar {
        let arc = FeasibleArc::of(a.inst).map_err(|e| e.to_string())?;
        let r = a.cfg.plot_range;
        write("S.csv", points_csv(&segment(arc.center, r)))?;
        write("ball_boundary_upper.csv", points_csv(&segment(arc.hi(), r)))?;
        write("ball_boundary_lower.csv", points_csv(&segment(arc.lo(), r)))?;
        let b = a.inst.b();
        write("b.csv", points_csv(&[[b[0], b[1]]]))?;
        let iterates: Vec<[f64; 2]> = a.trace.iter().map(|t| [t.projected[0], t.projected[1]]).collect();
        write("x_iterates.csv", points_csv(&iterates))?;
        if let Some(res) = a.result {
            let angle = res.final_point.y.line_angle().map_err(|e| e.to_string())?;
            write("S_star.csv", points_csv(&segment(angle, r)))?;
            let px = project_vector(&res.final_point.y, &res.final_point.x);
            write("x_star.csv", points_csv(&[[px[0], px[1]]]))?;
        }
    }

    let summary = build_summary(a).map_err(|e| e.to_string())?;
    write("summary.txt", summary.to_text())?;
    Ok(summary)
}

fn build_summary(a: &RunArtifacts<'_>) -> crate::Result<Summary> {
    let mut s = Summary::default();
    let status = match (a.result, a.diverged_at) {
        (_, Some(_)) => "diverged",
        (Some(r), None) if r.converged => "converged",
        _ => "max_iters",
    };
    s.put("status", status);
    s.put("seed", a.cfg.solver.seed.to_string());
    s.put("n", a.inst.n().to_string());
    s.put("k", a.inst.k().to_string());
    s.num("rho", a.inst.rho());
    s.num("lambda", a.params.lambda());
    s.num("u", a.params.u());
    if let Some(iter) = a.diverged_at {
        s.put("diverged_at", iter.to_string());
    }
    s.put("trace_rows", a.trace.len().to_string());

    // Ordinary least squares against the nominal subspace, for comparison.
    let y_hat = a.inst.y_hat();
    let coeffs = baseline_ls_solve(y_hat.matrix(), a.inst.b())?;
    let x_ls = y_hat.matrix() * coeffs;
    let nominal = ObjectivePoint::new(x_ls.clone(), y_hat.clone());
    s.put("baseline_x", fmt_list(x_ls.iter().copied()));
    s.num("baseline_cost", cost(&nominal, a.inst)?);

    let Some(res) = a.result else {
        return Ok(s);
    };
    let p = &res.final_point;
    let d = chordal_distance(&p.y, y_hat)?;
    s.put("converged", res.converged.to_string());
    s.put("iters_run", res.iters_run.to_string());
    s.num("final_grad_norm", res.final_stationarity.combined);
    s.num("grad_x_norm", res.final_stationarity.grad_x_norm);
    s.num("grad_y_norm", res.final_stationarity.grad_y_norm);
    s.put("x_star", fmt_list(p.x.iter().copied()));
    s.put("y_star", fmt_columns(p.y.matrix()));
    s.put("projected_x_star", fmt_list(project_vector(&p.y, &p.x).iter().copied()));
    s.num("center_distance", d);
    s.num("constraint_violation", (d - a.inst.rho()).max(0.0));
    s.put("constraint_violated", (d > a.inst.rho()).to_string());
    s.num("cost", cost(p, a.inst)?);
    s.num("penalized_value", penalized_value(p, a.inst, a.params)?);
    if a.inst.n() == 2 && a.inst.k() == 1 {
        let grid = GridSpec::default();
        s.num("worst_case_cost_x_star", inner_max_2d(&p.x, a.inst, &grid)?.value);
        s.num("worst_case_cost_baseline", inner_max_2d(&x_ls, a.inst, &grid)?.value);
        s.num("y_star_angle", p.y.line_angle()?);
    }
    Ok(s)
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    log: &mut dyn Write,
) -> Result<RunConfig, ExitStatus> {
    match RunConfig::load(path) {
        Ok(mut cfg) => {
            if let Some(seed) = seed {
                cfg.solver.seed = seed;
            }
            Ok(cfg)
        }
        Err(errors) => {
            let _ = write!(log, "{errors}");
            Err(ExitStatus::ConfigError)
        }
    }
}

fn build_problem(
    cfg: &RunConfig,
    log: &mut dyn Write,
) -> Result<(ProblemInstance, PenaltyParams), ExitStatus> {
    if let Err(errors) = cfg.validate() {
        let _ = write!(log, "{errors}");
        return Err(ExitStatus::ConfigError);
    }
    match (cfg.instance(), cfg.penalty()) {
        (Ok(i), Ok(p)) => Ok((i, p)),
        (Err(e), _) | (_, Err(e)) => {
            let _ = writeln!(log, "invalid configuration: {e}");
            Err(ExitStatus::ConfigError)
        }
    }
}

/// Solves the configured problem and writes all outputs to `out_dir`.
pub fn run_solve(cfg: &RunConfig, out_dir: &Path, log: &mut dyn Write) -> ExitStatus {
    let (inst, params) = match build_problem(cfg, log) {
        Ok(v) => v,
        Err(status) => return status,
    };
    let outcome = solve(&inst, &params, &cfg.solver, None);
    let (trace, result, diverged_at) = match &outcome {
        Ok(res) => (res.trace.as_slice(), Some(res), None),
        Err(Error::Divergence { iter, trace }) => (trace.as_slice(), None, Some(*iter)),
        Err(e) => {
            let _ = writeln!(log, "solve failed: {e}");
            return ExitStatus::NumericalFailure;
        }
    };
    let artifacts = RunArtifacts {
        cfg,
        inst: &inst,
        params: &params,
        trace,
        result,
        diverged_at,
    };
    let summary = match write_run_outputs(out_dir, &artifacts) {
        Ok(s) => s,
        Err(msg) => {
            let _ = writeln!(log, "{msg}");
            return ExitStatus::ConfigError;
        }
    };
    if let Some(iter) = diverged_at {
        let _ = writeln!(
            log,
            "diverged at iteration {iter}; partial trace written to {}",
            out_dir.display()
        );
        return ExitStatus::NumericalFailure;
    }
    for key in [
        "status",
        "iters_run",
        "final_grad_norm",
        "center_distance",
        "rho",
        "constraint_violated",
        "cost",
    ] {
        if let Some(v) = summary.get(key) {
            let _ = writeln!(log, "{key} = {v}");
        }
    }
    ExitStatus::Success
}

/// `reproduce-example`: the worked example with its fixed parameters.
pub fn cmd_reproduce_example(out_dir: &Path, seed: Option<u64>, log: &mut dyn Write) -> ExitStatus {
    let mut cfg = RunConfig::worked_example();
    if let Some(seed) = seed {
        cfg.solver.seed = seed;
    }
    run_solve(&cfg, out_dir, log)
}

/// `solve <config>`; `out_dir` overrides the config's `output_dir`.
pub fn cmd_solve(
    config_path: &Path,
    out_dir: Option<&Path>,
    seed: Option<u64>,
    log: &mut dyn Write,
) -> ExitStatus {
    let cfg = match load_config(config_path, seed, log) {
        Ok(c) => c,
        Err(status) => return status,
    };
    let out = out_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    run_solve(&cfg, &out, log)
}

/// `check-grad <config>`. With `corrupt` set, the x-gradient is scaled by
/// 1.01 before comparison (negative control).
pub fn cmd_check_grad(
    config_path: &Path,
    seed: Option<u64>,
    corrupt: bool,
    log: &mut dyn Write,
) -> ExitStatus {
    let cfg = match load_config(config_path, seed, log) {
        Ok(c) => c,
        Err(status) => return status,
    };
    let (inst, params) = match build_problem(&cfg, log) {
        Ok(v) => v,
        Err(status) => return status,
    };
    let check = GradCheckConfig {
        points: 20,
        directions: 10,
        seed: cfg.solver.seed,
        ..GradCheckConfig::default()
    };
    let report = check_gradients_with(&inst, &params, &check, |p| {
        let mut g = penalized_grads(p, &inst, &params)?;
        if corrupt {
            g.x *= 1.01;
        }
        Ok(g)
    });
    let report = match report {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(log, "gradient check failed to run: {e}");
            return ExitStatus::NumericalFailure;
        }
    };
    let _ = writeln!(log, "points_checked = {}", report.points_checked);
    let _ = writeln!(log, "max_rel_err_x = {} (tol {GRAD_TOL_X:e})", fmt_num(report.max_rel_err_x));
    let _ = writeln!(log, "max_rel_err_y = {} (tol {GRAD_TOL_Y:e})", fmt_num(report.max_rel_err_y));
    if report.passes(GRAD_TOL_X, GRAD_TOL_Y) {
        let _ = writeln!(log, "gradient check passed");
        ExitStatus::Success
    } else {
        let _ = writeln!(
            log,
            "gradient check FAILED: worst x at point seed {}, worst y at point seed {} direction {} \
             (n = {}, k = {}, lambda = {}, u = {})",
            report.worst_x_seed,
            report.worst_y.0,
            report.worst_y.1,
            inst.n(),
            inst.k(),
            params.lambda(),
            params.u()
        );
        ExitStatus::CheckFailure
    }
}

/// Solver output measured against the brute-force minimax reference.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub oracle_x: DVector<f64>,
    pub oracle_phi: f64,
    pub oracle_value: f64,
    /// Raw cost at `(x*, y*)` with `y*` clamped onto the ball.
    pub solver_value: f64,
    /// `max_{y feasible} f(x*, y)`.
    pub solver_worst_case_value: f64,
    pub solver_phi: f64,
    pub gap: f64,
    /// Chordal distance between `y*` and `line(φ°)`.
    pub y_distance: f64,
}

impl OracleComparison {
    pub fn passes(&self) -> bool {
        self.gap.abs() <= ORACLE_VALUE_TOL && self.y_distance <= ORACLE_SUBSPACE_TOL
    }
}

pub fn compare_with_oracle(
    p: &ObjectivePoint,
    inst: &ProblemInstance,
    grid: &GridSpec,
) -> crate::Result<OracleComparison> {
    let arc = FeasibleArc::of(inst)?;
    let reference = minimax_2d(inst, grid)?;
    let solver_phi = p.y.line_angle()?;
    let clamped = ObjectivePoint::new(p.x.clone(), GrassmannPoint::line(arc.clamp(solver_phi)));
    let solver_value = cost(&clamped, inst)?;
    let y_distance = chordal_distance(&p.y, &GrassmannPoint::line(reference.phi))?;
    Ok(OracleComparison {
        gap: solver_value - reference.value,
        solver_worst_case_value: inner_max_2d(&p.x, inst, grid)?.value,
        oracle_x: reference.x,
        oracle_phi: reference.phi,
        oracle_value: reference.value,
        solver_value,
        solver_phi,
        y_distance,
    })
}

/// `oracle <config>`: brute-force reference, solver comparison, and the
/// local-minimax probe at the solver output (n = 2, k = 1 only).
pub fn cmd_oracle(
    config_path: &Path,
    out_dir: Option<&Path>,
    seed: Option<u64>,
    log: &mut dyn Write,
) -> ExitStatus {
    let cfg = match load_config(config_path, seed, log) {
        Ok(c) => c,
        Err(status) => return status,
    };
    run_oracle(&cfg, out_dir.unwrap_or(&cfg.output_dir), log)
}

pub fn run_oracle(cfg: &RunConfig, out_dir: &Path, log: &mut dyn Write) -> ExitStatus {
    let (inst, params) = match build_problem(cfg, log) {
        Ok(v) => v,
        Err(status) => return status,
    };
    if let Err(e) = FeasibleArc::of(&inst) {
        let _ = writeln!(log, "{e}");
        return ExitStatus::ConfigError;
    }
    let res = match solve(&inst, &params, &cfg.solver, None) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(log, "solve failed: {e}");
            return ExitStatus::NumericalFailure;
        }
    };
    let cmp = match compare_with_oracle(&res.final_point, &inst, &GridSpec::default()) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(log, "oracle failed: {e}");
            return ExitStatus::NumericalFailure;
        }
    };
    let probe_cfg = ProbeConfig {
        seed: cfg.solver.seed,
        ..ProbeConfig::default()
    };
    let probes = [
        ("constrained", ProbeObjective::Constrained),
        ("penalized", ProbeObjective::Penalized(params)),
    ]
    .map(|(name, obj)| (name, local_minimax_probe(&res.final_point, &inst, &probe_cfg, obj)));

    let mut s = Summary::default();
    s.num("oracle_value", cmp.oracle_value);
    s.put("oracle_x", fmt_list(cmp.oracle_x.iter().copied()));
    s.num("oracle_phi", cmp.oracle_phi);
    s.num("solver_value", cmp.solver_value);
    s.num("solver_worst_case_value", cmp.solver_worst_case_value);
    s.num("solver_phi", cmp.solver_phi);
    s.num("gap", cmp.gap);
    s.num("y_distance", cmp.y_distance);
    s.put("solver_converged", res.converged.to_string());
    s.put("solver_iters", res.iters_run.to_string());
    let mut csv = String::from("objective,y_tested,y_violations,worst_y_margin,x_tested,x_violations,worst_x_margin\n");
    for (name, probe) in &probes {
        match probe {
            Ok(r) => {
                s.put(&format!("probe_{name}_y_violations"), r.y_violations.to_string());
                s.put(&format!("probe_{name}_x_violations"), r.x_violations.to_string());
                csv.push_str(&format!(
                    "{name},{},{},{},{},{},{}\n",
                    r.y_tested,
                    r.y_violations,
                    fmt_num(r.worst_y_margin),
                    r.x_tested,
                    r.x_violations,
                    fmt_num(r.worst_x_margin)
                ));
            }
            Err(e) => s.put(&format!("probe_{name}_error"), e.to_string()),
        }
    }
    s.put("passed", cmp.passes().to_string());

    let mut table = String::from(
        "oracle_value,oracle_x0,oracle_x1,oracle_phi,solver_value,solver_worst_case_value,gap,y_distance\n",
    );
    table.push_str(
        &[
            cmp.oracle_value,
            cmp.oracle_x[0],
            cmp.oracle_x[1],
            cmp.oracle_phi,
            cmp.solver_value,
            cmp.solver_worst_case_value,
            cmp.gap,
            cmp.y_distance,
        ]
        .map(fmt_num)
        .join(","),
    );
    table.push('\n');

    let written = std::fs::create_dir_all(out_dir)
        .and_then(|_| write_atomic(&out_dir.join("oracle.csv"), &table))
        .and_then(|_| write_atomic(&out_dir.join("probe.csv"), &csv))
        .and_then(|_| write_atomic(&out_dir.join("oracle_summary.txt"), &s.to_text()));
    if let Err(e) = written {
        let _ = writeln!(log, "{}", io_err(out_dir, e));
        return ExitStatus::ConfigError;
    }
    let _ = write!(log, "{}", s.to_text());
    if cmp.passes() {
        ExitStatus::Success
    } else {
        let _ = writeln!(
            log,
            "oracle check FAILED: |gap| = {:e} (tol {ORACLE_VALUE_TOL:e}), y distance = {:e} (tol {ORACLE_SUBSPACE_TOL:e})",
            cmp.gap.abs(),
            cmp.y_distance
        );
        ExitStatus::CheckFailure
    }
}

//! Argument groups and loaders shared by the subcommands.

use std::path::{Path, PathBuf};

use clap::Args;
use nalgebra::{DMatrix, DVector};
use posi::constants::{ConstantKind, K2SearchConfig, McConfig, Variant, DEFAULT_GRID};
use posi::design::io::{read_matrix_csv, read_universe, read_vector_csv};
use posi::design::{ModelId, UniverseSpec};
use posi::numerics::DofParam;
use posi::PosiError;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    /// A library error attributed to one flag.
    pub fn flag(flag: &str, e: PosiError) -> Self {
        CliError { code: e.exit_code(), message: format!("{flag}: {e}") }
    }
}

impl From<PosiError> for CliError {
    fn from(e: PosiError) -> Self {
        CliError { code: e.exit_code(), message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Args, Debug, Clone)]
pub struct DesignArgs {
    /// Design matrix X as CSV, one row per observation.
    #[arg(long, value_name = "PATH")]
    pub design: PathBuf,
    /// Query point x0 as CSV, a single row or a single column.
    #[arg(long, value_name = "PATH")]
    pub x0: PathBuf,
    /// Every CSV input starts with a header line.
    #[arg(long)]
    pub header: bool,
    /// Intervals target coverage 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Admissible models: `all`, `max:<k>` for sizes up to k, or
    /// `file:<path>` with one model per line as 1-based indices.
    #[arg(long, default_value = "all", value_name = "SPEC")]
    pub universe: String,
}

impl DesignArgs {
    pub fn load(&self) -> CliResult<(DMatrix<f64>, DVector<f64>)> {
        let x = read_matrix_csv(&self.design, self.header).map_err(|e| CliError::flag("--design", e))?;
        let x0 = read_vector_csv(&self.x0, self.header).map_err(|e| CliError::flag("--x0", e))?;
        if x0.len() != x.ncols() {
            return Err(CliError::usage(format!(
                "--x0: length {} does not match the {} columns of --design",
                x0.len(),
                x.ncols()
            )));
        }
        Ok((x, x0))
    }

    pub fn universe(&self, p: usize) -> CliResult<UniverseSpec> {
        parse_universe_spec(&self.universe, p)
    }
}

pub fn parse_universe_spec(s: &str, p: usize) -> CliResult<UniverseSpec> {
    let bad = || CliError::usage(format!("--universe: expected all, max:<k> or file:<path>, got '{s}'"));
    if s.eq_ignore_ascii_case("all") {
        return Ok(UniverseSpec::All);
    }
    match s.split_once(':') {
        Some(("max", k)) => Ok(UniverseSpec::MaxSize(k.parse().map_err(|_| bad())?)),
        Some(("file", path)) => {
            Ok(UniverseSpec::Explicit(read_universe(Path::new(path), p).map_err(|e| CliError::flag("--universe", e))?))
        }
        _ => Err(bad()),
    }
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct DofArgs {
    /// Degrees of freedom r of an independent variance estimate.
    #[arg(long, value_name = "R")]
    pub dof: Option<u64>,
    /// The error variance is known (r = infinity).
    #[arg(long)]
    pub known_variance: bool,
}

impl DofArgs {
    pub fn dof(&self) -> CliResult<DofParam> {
        match (self.dof, self.known_variance) {
            (_, true) => Ok(DofParam::Infinite),
            (Some(r), false) => DofParam::finite(r).map_err(|e| CliError::flag("--dof", e)),
            (None, false) => Err(CliError::usage("one of --dof or --known-variance is required")),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct McArgs {
    /// Master seed; required whenever a result is random.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sphere sample size I for K1, K2 and K3. Defaults to 100000 when
    /// p <= 12 and 1000 otherwise.
    #[arg(long, value_name = "I")]
    pub mc: Option<usize>,
    /// Grid size J of the step-function integrals in K3 and K4.
    #[arg(long, value_name = "J", default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    /// Step-function approximation used by K3 and K4: lower, upper or both.
    /// With both, the upper value is the one applied to intervals.
    #[arg(long, default_value = "upper")]
    pub variant: Variant,
    /// Search budgets for K2: `desk` or `paper`.
    #[arg(long = "k2", default_value = "desk", value_name = "BUDGET")]
    pub k2_budget: String,
}

impl McArgs {
    pub fn require_seed(&self, why: &str) -> CliResult<u64> {
        self.seed.ok_or_else(|| CliError::usage(format!("--seed is required for {why}")))
    }

    pub fn config(&self, p: usize, seed: u64) -> CliResult<McConfig> {
        let samples = self.mc.unwrap_or_else(|| McConfig::default_samples(p));
        McConfig::new(samples, self.grid, seed, self.variant).map_err(|e| CliError::flag("--mc/--grid", e))
    }

    pub fn k2(&self, seed: u64) -> CliResult<K2SearchConfig> {
        match self.k2_budget.as_str() {
            "desk" => Ok(K2SearchConfig::desk(seed)),
            "paper" => Ok(K2SearchConfig::paper(seed)),
            other => Err(CliError::usage(format!("--k2: expected desk or paper, got '{other}'"))),
        }
    }
}

/// `naive`, `k1`..`k6`, with `k2:<model>` and `k3:<model>` naming a model
/// by 1-based indices (`0` is the empty model).
pub fn parse_constant(s: &str, p: usize) -> CliResult<(ConstantKind, Option<ModelId>)> {
    let (head, arg) = match s.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (s, None),
    };
    let kind: ConstantKind = head.parse().map_err(|e| CliError::flag("--constant", e))?;
    let model = match arg {
        Some(a) if kind.is_model_dependent() => {
            Some(ModelId::parse(a, p).map_err(|e| CliError::flag("--constant", e))?)
        }
        Some(_) => return Err(CliError::usage(format!("--constant: {kind} does not take a model"))),
        None => None,
    };
    Ok((kind, model))
}

pub fn parse_kinds(list: &[String]) -> CliResult<Vec<ConstantKind>> {
    let mut kinds = Vec::new();
    for s in list {
        let k: ConstantKind = s.parse().map_err(|e| CliError::flag("--constants", e))?;
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    if kinds.is_empty() {
        return Err(CliError::usage("--constants: at least one constant is required"));
    }
    Ok(kinds)
}

pub fn parse_protected(s: Option<&str>, p: usize) -> CliResult<ModelId> {
    match s {
        None => Ok(ModelId::empty()),
        Some(s) => ModelId::parse(s, p).map_err(|e| CliError::flag("--protected", e)),
    }
}

pub fn needs_seed(kinds: &[ConstantKind]) -> bool {
    kinds.iter().any(|k| matches!(k, ConstantKind::K1 | ConstantKind::K2 | ConstantKind::K3))
}

pub fn git_hash() -> Option<&'static str> {
    Some(env!("POSI_GIT_HASH")).filter(|h| !h.is_empty())
}

/// Writes to stdout, treating a closed pipe as success.
pub fn write_stdout(text: &str) -> CliResult<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::usage(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use posi::design::io::{matrix_to_csv, read_matrix_csv, vector_to_csv_row};
use posi::numerics::RngStream;
use posi::simharness::{gen_design, SigmaFamily, SigmaKind};

use crate::common::{write_stdout, CliError, CliResult};

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum Family {
    /// Covariance I + (2a + p~ a^2) E with E the all-ones matrix.
    Exchangeable,
    /// Last regressor correlated with all others at level c.
    Equicorrelated,
    /// Independent standard normal regressors.
    Iid,
    /// Covariance read from --sigma-file.
    User,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Covariance family of the non-intercept regressors.
    #[arg(long, value_enum, default_value = "exchangeable")]
    pub family: Family,
    /// Parameter a of the exchangeable family.
    #[arg(long, default_value_t = 10.0)]
    pub a: f64,
    /// Correlation c of the equicorrelated family; defaults to sqrt(0.8/(p~-1)).
    #[arg(long)]
    pub c: Option<f64>,
    /// Covariance matrix as CSV for the user family.
    #[arg(long, value_name = "PATH")]
    pub sigma_file: Option<PathBuf>,
    /// Number of columns of X, including the intercept.
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    /// Number of observations.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Leave out the intercept column.
    #[arg(long)]
    pub no_intercept: bool,
    /// Master seed.
    #[arg(long)]
    pub seed: u64,
    /// Directory for X.csv, x0.csv and sigma.csv.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

pub fn run(a: GenDataArgs) -> CliResult<()> {
    let intercept = !a.no_intercept;
    let p_tilde =
        a.p.checked_sub(usize::from(intercept))
            .filter(|&k| k > 0)
            .ok_or_else(|| CliError::usage("--p: need at least one regressor besides the intercept"))?;
    let kind = match a.family {
        Family::Exchangeable => SigmaKind::Exchangeable(a.a),
        Family::Equicorrelated => SigmaKind::Equicorrelated(a.c),
        Family::Iid => SigmaKind::IidIdentity,
        Family::User => {
            let path = a.sigma_file.as_ref().ok_or_else(|| CliError::usage("--family user needs --sigma-file"))?;
            let m = read_matrix_csv(path, false).map_err(|e| CliError::flag("--sigma-file", e))?;
            SigmaKind::User(m.row_iter().map(|r| r.iter().copied().collect()).collect())
        }
    };
    let family = SigmaFamily::new(kind, p_tilde).map_err(|e| CliError::flag("--family", e))?;
    let g = gen_design(&family, a.n, a.p, intercept, &RngStream::new(a.seed))?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::usage(format!("--out: {e}")))?;
    let files =
        [("X.csv", matrix_to_csv(&g.x)), ("x0.csv", vector_to_csv_row(&g.x0)), ("sigma.csv", matrix_to_csv(&g.sigma))];
    for (name, text) in &files {
        std::fs::write(a.out.join(name), text).map_err(|e| CliError::usage(format!("--out: {name}: {e}")))?;
    }
    let summary = serde_json::json!({
        "n": a.n,
        "p": a.p,
        "intercept": intercept,
        "regenerations": g.regenerations,
        "seed": a.seed,
        "files": files.iter().map(|(n, _)| a.out.join(n).display().to_string()).collect::<Vec<_>>(),
    });
    write_stdout(&format!("{summary}\n"))
}

use std::path::PathBuf;

use clap::Args;
use nalgebra::DVector;
use posi::constants::ConstantSolver;
use posi::design::io::read_vector_csv;
use posi::design::{canonicalize, check_alpha, restricted_ols, s_vector, UniverseGeometry};
use posi::inference::build_interval;
use posi::numerics::{DofParam, RngStream};
use posi::selectors::{sigma_hat_full, sigma_hat_pms, SelectorRule, SelectorSpec};
use posi::simharness::SigmaSource;

use crate::common::{
    needs_seed, parse_constant, parse_protected, write_stdout, CliError, CliResult, DesignArgs, McArgs,
};

#[derive(Args, Debug)]
pub struct IntervalArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub mc: McArgs,
    /// Response vector Y as CSV.
    #[arg(long, value_name = "PATH")]
    pub y: PathBuf,
    /// Model selector: aic, bic, ic:<penalty>, lasso-cv,
    /// lasso-fixed:<lambda|auto> or fixed:<1-based indices|full|0>.
    #[arg(long, default_value = "aic")]
    pub selector: String,
    /// Regressors every selected model must contain, as 1-based indices.
    #[arg(long, value_name = "INDICES")]
    pub protected: Option<String>,
    /// Cross-validation folds for lasso-cv.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Multiplier: naive, k1, k2, k3, k4, k5 or k6. k2 and k3 use the
    /// selected model.
    #[arg(long, default_value = "k1", value_name = "KIND")]
    pub constant: String,
    /// Variance estimate: full (residuals of the full model, r = n - d),
    /// pms (residuals of the selected model) or fixed:<sigma>.
    #[arg(long, default_value = "full", value_name = "SOURCE")]
    pub sigma: SigmaSource,
}

pub fn run(a: IntervalArgs) -> CliResult<()> {
    let (x, x0) = a.design.load()?;
    check_alpha(a.design.alpha)?;
    let p = x.ncols();
    let y = read_vector_csv(&a.y, a.design.header).map_err(|e| CliError::flag("--y", e))?;
    if y.len() != x.nrows() {
        return Err(CliError::usage(format!("--y: length {} but --design has {} rows", y.len(), x.nrows())));
    }
    let (kind, model) = parse_constant(&a.constant, p)?;
    if model.is_some() {
        return Err(CliError::usage("--constant: the model is the selected one; drop the ':<model>' suffix"));
    }
    let spec = SelectorSpec::parse(&a.selector, p)
        .map_err(|e| CliError::flag("--selector", e))?
        .with_protected(parse_protected(a.protected.as_deref(), p)?)
        .with_folds(a.folds);
    let random_selector = matches!(spec.rule, SelectorRule::LassoCv | SelectorRule::LassoFixed(None));
    let seed = if needs_seed(&[kind]) || random_selector {
        a.mc.require_seed("this constant or selector")?
    } else {
        a.mc.seed.unwrap_or(0)
    };
    let root = RngStream::new(seed);
    let prepared = spec.prepare(&x, &root.substream(12)).map_err(|e| CliError::flag("--selector", e))?;
    let m = prepared.select(&y, &mut root.substream(13))?;

    let (sigma_hat, r) = match a.sigma {
        SigmaSource::Full => {
            let (s2, r) = sigma_hat_full(&x, &y)?;
            (s2.sqrt(), r)
        }
        SigmaSource::Pms => (sigma_hat_pms(&x, &y, &m)?.sqrt(), DofParam::Infinite),
        SigmaSource::Fixed(v) => (v, DofParam::Infinite),
    };
    let universe = a.design.universe(p)?.build(&x)?;
    if !universe.contains(&m) {
        return Err(CliError::usage(format!("selected model {m} is not in --universe")));
    }
    let geom = UniverseGeometry::new(canonicalize(&x)?, universe)?;
    let solver = ConstantSolver::new(&geom, &x0, r, a.design.alpha, a.mc.config(p, seed)?)?;
    let k = solver.compute(kind, Some(&m), Some(&a.mc.k2(seed)?))?;
    let beta_m = if m.is_empty() { DVector::zeros(0) } else { restricted_ols(&x, &y, &m)? };
    let s_norm = s_vector(geom.canon(), &x0, &m)?.norm;
    let iv = build_interval(&x0, &m, &beta_m, &k, s_norm, sigma_hat)?;

    let out = serde_json::json!({
        "center": iv.center,
        "half_width": iv.half_width,
        "lower": iv.lower(),
        "upper": iv.upper(),
        "model": iv.model,
        "constant_kind": iv.constant_kind,
        "selector": spec.label(),
        "sigma_hat": sigma_hat,
        "dof": r,
        "s_norm": s_norm,
        "constant": k,
    });
    write_stdout(&format!("{out}\n"))
}

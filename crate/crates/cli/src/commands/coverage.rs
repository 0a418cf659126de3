use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::Args;
use posi::design::io::{read_matrix_csv, read_vector_csv};
use posi::inference::TargetKind;
use posi::selectors::SelectorSpec;
use posi::simharness::{
    beta_stream, coverage_point, minimal_coverage_search, sample_beta, CoverageSearchConfig, CoverageSetup, Provenance,
    SigmaSource, SimulationReport,
};

use crate::common::{git_hash, parse_kinds, parse_protected, write_stdout, CliError, CliResult, DesignArgs, McArgs};

#[derive(Args, Debug)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub mc: McArgs,
    /// Second-moment matrix of a design row as CSV; needed for the
    /// design-independent target.
    #[arg(long, value_name = "PATH")]
    pub sigma_star: Option<PathBuf>,
    /// Model selector, repeatable: aic, bic, ic:<penalty>, lasso-cv,
    /// lasso-fixed:<lambda|auto> or fixed:<1-based indices|full|0>.
    #[arg(long, default_value = "aic")]
    pub selector: Vec<String>,
    /// Regressors every selected model must contain, as 1-based indices.
    #[arg(long, value_name = "INDICES")]
    pub protected: Option<String>,
    /// Cross-validation folds for lasso-cv.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Comma-separated multipliers to evaluate.
    #[arg(long, alias = "constant", value_delimiter = ',', default_value = "naive,k1,k3,k4")]
    pub constants: Vec<String>,
    /// Target: dependent (x0'beta_M for the design at hand), independent
    /// (x0'beta_M under the population second moments) or both. Defaults to
    /// both when --sigma-star is given.
    #[arg(long)]
    pub target: Option<String>,
    /// Variance estimate: full, pms or fixed:<sigma>.
    #[arg(long, default_value = "full", value_name = "SOURCE")]
    pub sigma: SigmaSource,
    /// Evaluate a single beta with this many replications instead of searching.
    #[arg(long = "B", value_name = "B")]
    pub reps: Option<usize>,
    /// The beta for --B as CSV; defaults to the first sampled candidate.
    #[arg(long, value_name = "PATH", requires = "reps")]
    pub beta: Option<PathBuf>,
    /// Use the full-size search budgets (m1 = 1000, m2 = 100, I1 = 1000,
    /// I2 = 10000, I3 = 100000) instead of the desk-size ones.
    #[arg(long)]
    pub paper_scale: bool,
    /// Candidate betas scored in the first step.
    #[arg(long)]
    pub m1: Option<usize>,
    /// Candidates per cell rescored in the second step.
    #[arg(long)]
    pub m2: Option<usize>,
    /// Replications per candidate in the first step.
    #[arg(long = "I1")]
    pub i1: Option<usize>,
    /// Replications per candidate in the second step.
    #[arg(long = "I2")]
    pub i2: Option<usize>,
    /// Replications per minimizer in the final step.
    #[arg(long = "I3")]
    pub i3: Option<usize>,
    /// Directory for report.json, coverage.csv, lengths.csv and meta.json.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn targets(a: &CoverageArgs) -> CliResult<Vec<TargetKind>> {
    let spec = a.target.as_deref().unwrap_or(if a.sigma_star.is_some() { "both" } else { "dependent" });
    let t = match spec {
        "dependent" => vec![TargetKind::DesignDependent],
        "independent" => vec![TargetKind::DesignIndependent],
        "both" => vec![TargetKind::DesignDependent, TargetKind::DesignIndependent],
        other => {
            return Err(CliError::usage(format!("--target: expected dependent, independent or both, got '{other}'")))
        }
    };
    if t.contains(&TargetKind::DesignIndependent) && a.sigma_star.is_none() {
        return Err(CliError::usage("--target: the design-independent target needs --sigma-star"));
    }
    Ok(t)
}

pub fn run(a: CoverageArgs) -> CliResult<()> {
    let seed = a.mc.require_seed("coverage studies")?;
    let (x, x0) = a.design.load()?;
    let p = x.ncols();
    let kinds = parse_kinds(&a.constants)?;
    let targets = targets(&a)?;
    let sigma_star = match &a.sigma_star {
        Some(path) => Some(read_matrix_csv(path, a.design.header).map_err(|e| CliError::flag("--sigma-star", e))?),
        None => None,
    };
    let protected = parse_protected(a.protected.as_deref(), p)?;
    let selectors: Vec<SelectorSpec> = a
        .selector
        .iter()
        .map(|s| {
            SelectorSpec::parse(s, p)
                .map(|spec| spec.with_protected(protected.clone()).with_folds(a.folds))
                .map_err(|e| CliError::flag("--selector", e))
        })
        .collect::<CliResult<_>>()?;
    let uses_k2 = kinds.contains(&posi::constants::ConstantKind::K2);
    let setup = CoverageSetup {
        x,
        x0,
        sigma_star,
        universe: a.design.universe(p)?,
        alpha: a.design.alpha,
        sigma_source: a.sigma,
        mc: a.mc.config(p, seed)?,
        k2: if uses_k2 { Some(a.mc.k2(seed)?) } else { None },
    };

    let mut search = if a.paper_scale { CoverageSearchConfig::paper(seed) } else { CoverageSearchConfig::desk(seed) };
    search.kinds = kinds.clone();
    search.targets = targets.clone();
    search.m1 = a.m1.unwrap_or(search.m1);
    search.m2 = a.m2.unwrap_or(search.m2);
    search.i1 = a.i1.unwrap_or(search.i1);
    search.i2 = a.i2.unwrap_or(search.i2);
    search.i3 = a.i3.unwrap_or(search.i3);

    let cancel = Arc::new(AtomicBool::new(false));
    {
        let flag = cancel.clone();
        if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
            log::warn!("interrupts will not flush partial results: {e}");
        }
    }

    let mut outcomes = Vec::new();
    let config_echo;
    match a.reps {
        Some(reps) => {
            let beta = match &a.beta {
                Some(path) => {
                    let b = read_vector_csv(path, a.design.header).map_err(|e| CliError::flag("--beta", e))?;
                    if b.len() != p {
                        return Err(CliError::usage(format!("--beta: length {} but p = {p}", b.len())));
                    }
                    b
                }
                None => sample_beta(&setup.x, &beta_stream(seed).substream(0))?,
            };
            for sel in &selectors {
                outcomes.push(coverage_point(&setup, sel, &kinds, &targets, &beta, reps, seed)?);
            }
            config_echo = serde_json::json!({
                "mode": "point",
                "B": reps,
                "kinds": kinds,
                "targets": targets,
            });
        }
        None => {
            for sel in &selectors {
                let out = minimal_coverage_search(&search, &setup, sel, Some(&cancel))?;
                let stop = out.partial;
                outcomes.push(out);
                if stop {
                    break;
                }
            }
            config_echo = serde_json::json!({ "mode": "search", "search": search });
        }
    }

    let mut seeds = BTreeMap::new();
    seeds.insert("master".to_string(), seed);
    let provenance = Provenance::new(
        seeds,
        serde_json::json!({
            "coverage": config_echo,
            "alpha": setup.alpha,
            "sigma": setup.sigma_source,
            "universe": a.design.universe,
            "selectors": selectors.iter().map(|s| s.label()).collect::<Vec<_>>(),
            "mc": setup.mc,
            "k2": setup.k2,
        }),
    );
    let report = SimulationReport::from_search(outcomes, provenance);
    emit(&report, a.out.as_deref())?;
    if report.partial {
        eprintln!("interrupted; partial results were written");
    }
    Ok(())
}

pub fn emit(report: &SimulationReport, out: Option<&std::path::Path>) -> CliResult<()> {
    match out {
        Some(dir) => {
            report.write_dir(dir, git_hash()).map_err(|e| CliError::flag("--out", e))?;
            write_stdout(&summary(report))?;
        }
        None => write_stdout(&format!("{}\n", report.to_json()))?,
    }
    Ok(())
}

fn summary(report: &SimulationReport) -> String {
    let mut s = String::new();
    if !report.coverage.is_empty() {
        s += &format!("{:<16} {:<6} {:<20} {:>9} {:>9}\n", "selector", "K", "target", "coverage", "stderr");
        for c in &report.coverage {
            let target = match c.target {
                TargetKind::DesignDependent => "design-dependent",
                TargetKind::DesignIndependent => "design-independent",
            };
            s += &format!(
                "{:<16} {:<6} {:<20} {:>9.4} {:>9.4}\n",
                c.selector,
                c.constant.name(),
                target,
                c.coverage,
                c.stderr
            );
        }
    }
    if !report.lengths.is_empty() {
        s += &format!("{:<20} {:<6} {:>10} {:>10}\n", "model", "K", "K value", "length");
        for r in &report.lengths {
            let model = if r.model.is_empty() { "0".to_string() } else { r.model.to_line() };
            s += &format!("{:<20} {:<6} {:>10.4} {:>10.4}\n", model, r.constant.name(), r.k, r.length);
        }
    }
    s
}

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use posi::design::{DesignProblem, ModelId};
use posi::simharness::{length_study, prefix_chain, Provenance, SimulationReport};

use super::coverage::emit;
use crate::common::{needs_seed, parse_kinds, CliError, CliResult, DesignArgs, DofArgs, McArgs};

#[derive(Args, Debug)]
pub struct LengthsArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub dof: DofArgs,
    #[command(flatten)]
    pub mc: McArgs,
    /// Nested models separated by ';', each as 1-based indices (`0` is the
    /// empty model). Defaults to 0;1;1,2;...;1..p.
    #[arg(long, value_name = "CHAIN")]
    pub chain: Option<String>,
    /// Comma-separated multipliers.
    #[arg(long, alias = "constant", value_delimiter = ',', default_value = "naive,k1,k3,k4,k5,k6")]
    pub constants: Vec<String>,
    /// Directory for report.json, coverage.csv, lengths.csv and meta.json.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

pub fn run(a: LengthsArgs) -> CliResult<()> {
    let (x, x0) = a.design.load()?;
    let p = x.ncols();
    let kinds = parse_kinds(&a.constants)?;
    let seed = if needs_seed(&kinds) { a.mc.require_seed("K1, K2 and K3")? } else { a.mc.seed.unwrap_or(0) };
    let chain: Vec<ModelId> = match &a.chain {
        Some(s) => s
            .split(';')
            .map(|m| ModelId::parse(m, p).map_err(|e| CliError::flag("--chain", e)))
            .collect::<CliResult<_>>()?,
        None => std::iter::once(ModelId::empty()).chain(prefix_chain(p)).collect(),
    };
    let problem = DesignProblem::new(x, x0, a.design.alpha, a.dof.dof()?)?;
    let universe = a.design.universe(p)?;
    let mc = a.mc.config(p, seed)?;
    let k2 = a.mc.k2(seed)?;
    let study = length_study(&problem, &universe, &chain, &kinds, mc, Some(&k2))?;
    let mut seeds = BTreeMap::new();
    seeds.insert("master".to_string(), seed);
    let provenance = Provenance::new(
        seeds,
        serde_json::json!({
            "lengths": {
                "chain": chain,
                "kinds": kinds,
                "alpha": problem.alpha,
                "dof": problem.r,
                "universe": a.design.universe,
            },
            "mc": mc,
            "k2": k2,
        }),
    );
    emit(&SimulationReport::from_lengths(study, provenance), a.out.as_deref())
}

use clap::Args;
use posi::constants::ConstantSolver;
use posi::design::{canonicalize, DesignProblem, UniverseGeometry};

use crate::common::{needs_seed, parse_constant, write_stdout, CliResult, DesignArgs, DofArgs, McArgs};

#[derive(Args, Debug)]
pub struct ConstantArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub dof: DofArgs,
    #[command(flatten)]
    pub mc: McArgs,
    /// naive (t quantile), k1 (all models), k2:<model> and k3:<model>
    /// (model-specific, `0` for the empty model), k4 (worst case over
    /// models of the same size), k5 (Scheffe), k6 (0.866 k5).
    #[arg(long, value_name = "KIND")]
    pub constant: String,
}

pub fn run(a: ConstantArgs) -> CliResult<()> {
    let (x, x0) = a.design.load()?;
    let p = x.ncols();
    let (kind, model) = parse_constant(&a.constant, p)?;
    if kind.is_model_dependent() && model.is_none() {
        return Err(crate::common::CliError::usage(format!(
            "--constant: {kind} needs a model, e.g. {}:1,2",
            kind.name().to_lowercase()
        )));
    }
    let seed = if needs_seed(&[kind]) { a.mc.require_seed(&format!("{kind}"))? } else { a.mc.seed.unwrap_or(0) };
    let problem = DesignProblem::new(x, x0, a.design.alpha, a.dof.dof()?)?;
    let universe = a.design.universe(p)?.build(&problem.x)?;
    let geom = UniverseGeometry::new(canonicalize(&problem.x)?, universe)?;
    let solver = ConstantSolver::new(&geom, &problem.x0, problem.r, problem.alpha, a.mc.config(p, seed)?)?;
    let k2 = a.mc.k2(seed)?;
    let est = solver.compute(kind, model.as_ref(), Some(&k2))?;
    write_stdout(&format!("{}\n", est.to_json()))
}

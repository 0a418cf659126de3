//! Monte Carlo studies: random designs, interval lengths and minimal
//! coverage over the regression parameter.

mod coverage;
mod designs;
mod lengths;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use coverage::{
    beta_stream, binomial_stderr, coverage_at, coverage_point, minimal_coverage_search, rep_stream, sample_beta,
    setup_stream, CellCounts, CoverageCell, CoverageEngine, CoverageSearchConfig, CoverageSetup, SearchOutcome,
    SigmaSource,
};
pub use designs::{default_equicorrelation, gen_design, GeneratedDesign, SigmaFamily, SigmaKind, MAX_REGENERATIONS};
pub use lengths::{check_nested, length_study, prefix_chain, LengthRow, LengthStudy};

use crate::constants::ConstantEstimate;
use crate::error::{PosiError, Result};

pub const FLAG_STOCHASTIC_UPPER_BOUND: &str = "STOCHASTIC_UPPER_BOUND";
pub const FLAG_PER_CONSTANT_POOLS: &str = "PER_CONSTANT_POOLS";
pub const FLAG_PARTIAL: &str = "PARTIAL";

/// Seeds, configuration echo and version of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seeds: BTreeMap<String, u64>,
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new(seeds: BTreeMap<String, u64>, config: serde_json::Value) -> Self {
        Provenance { version: env!("CARGO_PKG_VERSION").to_string(), seeds, config }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub coverage: Vec<CoverageCell>,
    pub lengths: Vec<LengthRow>,
    pub constants: Vec<ConstantEstimate>,
    pub partial: bool,
    pub flags: Vec<String>,
    pub provenance: Provenance,
}

impl SimulationReport {
    pub fn from_lengths(study: LengthStudy, provenance: Provenance) -> Self {
        SimulationReport {
            coverage: Vec::new(),
            lengths: study.rows,
            constants: study.constants,
            partial: false,
            flags: Vec::new(),
            provenance,
        }
    }

    pub fn from_search(outcomes: Vec<SearchOutcome>, provenance: Provenance) -> Self {
        let partial = outcomes.iter().any(|o| o.partial);
        let mut constants: Vec<ConstantEstimate> = Vec::new();
        for c in outcomes.iter().flat_map(|o| &o.constants) {
            if !constants.contains(c) {
                constants.push(c.clone());
            }
        }
        let mut flags = vec![FLAG_STOCHASTIC_UPPER_BOUND.to_string(), FLAG_PER_CONSTANT_POOLS.to_string()];
        if partial {
            flags.push(FLAG_PARTIAL.to_string());
        }
        SimulationReport {
            coverage: outcomes.into_iter().flat_map(|o| o.cells).collect(),
            lengths: Vec::new(),
            constants,
            partial,
            flags,
            provenance,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn coverage_csv(&self) -> String {
        let mut out = String::from("selector,constant,target,coverage,stderr,replications,candidate,beta\n");
        for c in &self.coverage {
            let beta: Vec<String> = c.beta.iter().map(|b| b.to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.selector,
                c.constant.name(),
                target_name(c.target),
                c.coverage,
                c.stderr,
                c.replications,
                c.candidate,
                beta.join(";")
            );
        }
        out
    }

    pub fn lengths_csv(&self) -> String {
        let mut out = String::from("model,size,constant,k,s_norm,length\n");
        for r in &self.lengths {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                model_token(&r.model),
                r.size,
                r.constant.name(),
                r.k,
                r.s_norm,
                r.length
            );
        }
        out
    }

    /// Writes `report.json`, `coverage.csv`, `lengths.csv` and `meta.json`.
    pub fn write_dir(&self, dir: &Path, git_hash: Option<&str>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let meta = serde_json::json!({
            "version": self.provenance.version,
            "git": git_hash,
            "seeds": self.provenance.seeds,
            "config": self.provenance.config,
            "partial": self.partial,
            "flags": self.flags,
        });
        let files = [
            ("report.json", self.to_json()),
            ("coverage.csv", self.coverage_csv()),
            ("lengths.csv", self.lengths_csv()),
            ("meta.json", serde_json::to_string_pretty(&meta).expect("meta serializes")),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        }
        Ok(())
    }
}

fn model_token(m: &crate::design::ModelId) -> String {
    if m.is_empty() {
        return "0".into();
    }
    m.one_based().iter().map(|j| j.to_string()).collect::<Vec<_>>().join(";")
}

fn target_name(t: crate::inference::TargetKind) -> &'static str {
    match t {
        crate::inference::TargetKind::DesignDependent => "DESIGN_DEPENDENT",
        crate::inference::TargetKind::DesignIndependent => "DESIGN_INDEPENDENT",
    }
}

fn io_error(path: &Path, e: std::io::Error) -> PosiError {
    PosiError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

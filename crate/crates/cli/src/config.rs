//! Run configuration: a TOML file with [problem], [solver], [oracle] and
//! [output] sections. Expressions are strings in the t/x expression
//! language; everything else is plain numbers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use delaywave_core::assembly::SolverOptions;
use delaywave_core::dsl::{parse, Expr};
use delaywave_core::oracle_fd::FdConfig;
use delaywave_core::reduction::ProblemSpec;

use crate::AppError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub oracle: FdConfig,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub tau: f64,
    pub t_end: f64,
    pub length: f64,
    pub g: String,
    pub psi: String,
    pub theta1: String,
    pub theta2: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta1_dd: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta2_dd: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub n_modes: usize,
    pub quad_tol: f64,
    pub kernel_tol: f64,
    pub decay_margin: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SolverOptions::default();
        SolverSection {
            n_modes: o.n_modes,
            quad_tol: o.quad_tol,
            kernel_tol: o.kernel_tol,
            decay_margin: o.decay_margin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub t_points: usize,
    pub x_points: usize,
    pub directory: String,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            t_points: 121,
            x_points: 101,
            directory: "out".into(),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if self.output.t_points < 2 || self.output.x_points < 2 {
            return Err(AppError::Config("output grid needs at least 2 points per axis".into()));
        }
        if self.output.formats.is_empty() {
            return Err(AppError::Config("output.formats must not be empty".into()));
        }
        if self.solver.n_modes == 0 {
            return Err(AppError::Config("solver.n_modes must be positive".into()));
        }
        self.oracle.validate().map_err(|e| AppError::Config(e.to_string()))?;
        self.problem_spec()?.validate().map_err(|e| AppError::Config(e.to_string()))?;
        Ok(())
    }

    fn expr(&self, name: &str, src: &str) -> Result<Expr, AppError> {
        parse(src).map_err(|e| AppError::Config(format!("problem.{name}: {e}")))
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec, AppError> {
        let p = &self.problem;
        Ok(ProblemSpec {
            a1: p.a1,
            a2: p.a2,
            b1: p.b1,
            b2: p.b2,
            c1: p.c1,
            c2: p.c2,
            tau: p.tau,
            t_end: p.t_end,
            length: p.length,
            g: self.expr("g", &p.g)?,
            psi: self.expr("psi", &p.psi)?,
            theta1: self.expr("theta1", &p.theta1)?,
            theta2: self.expr("theta2", &p.theta2)?,
            theta1_dd: match &p.theta1_dd {
                Some(s) => Some(self.expr("theta1_dd", s)?),
                None => None,
            },
            theta2_dd: match &p.theta2_dd {
                Some(s) => Some(self.expr("theta2_dd", s)?),
                None => None,
            },
        })
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            n_modes: self.solver.n_modes,
            quad_tol: self.solver.quad_tol,
            kernel_tol: self.solver.kernel_tol,
            decay_margin: self.solver.decay_margin,
        }
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

//! Run configuration: a TOML file, `--set key=value` overrides, then dedicated flags.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cma_core::continuity::SolveConfig;
use cma_core::grid::DiffMode;
use cma_core::presets::{ChiSpec, MetricPreset, PsiSpec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Two-stage for `scaled_kahler_constant` right-hand sides, single homotopy otherwise.
    Auto,
    Homotopy,
    TwoStage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    pub m: usize,
    pub alpha: usize,
    pub diff_mode: DiffMode,
    pub metric_preset: MetricPreset,
    pub chi: ChiSpec,
    pub psi: PsiSpec,
    pub pipeline: Pipeline,
    /// Gap between `ψ_0` and `max{ψ, φ_v}` in the two-stage solve.
    pub delta: f64,
    /// Known solution for recovery checks when `ψ` is read from a file.
    pub u_star_path: Option<PathBuf>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            n: 2,
            m: 16,
            alpha: 1,
            diff_mode: DiffMode::Spectral,
            metric_preset: MetricPreset::Flat,
            chi: ChiSpec::Identity,
            psi: PsiSpec::default(),
            pipeline: Pipeline::Auto,
            delta: 0.02,
            u_star_path: None,
        }
    }
}

/// Output locations, relative to the output directory unless absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub trace_csv_path: PathBuf,
    pub report_json_path: PathBuf,
    pub field_dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            trace_csv_path: "trace.csv".into(),
            report_json_path: "report.json".into(),
            field_dir: "fields".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    /// Exponent `A`; fitted when absent.
    pub a: Option<f64>,
    /// Ball radii in units of the grid spacing.
    pub radii_cells: Vec<f64>,
    /// Ball centers in `[0, 1)^{2n}`; the grid origin and the torus midpoint when empty.
    pub centers: Vec<Vec<f64>>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            a: None,
            radii_cells: vec![1.0, 2.0, 3.0],
            centers: Vec::new(),
        }
    }
}

/// Tolerances attached to the report verdicts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub recovery_tol: f64,
    /// Slack on `|b_t − b_0| ≤ sup |ln φ − ln ψ|`.
    pub b_slack: f64,
    /// Allowed positive part of `b_t` when `φ ≤ ψ`.
    pub b_nonpositive_tol: f64,
    /// Relative gap allowed in `∫ χ_u^n = ∫ ψ e^b χ_u^{n−α} ∧ ω^α`.
    pub quadrature_tol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            recovery_tol: 1e-8,
            b_slack: 1e-8,
            b_nonpositive_tol: 1e-10,
            quadrature_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub problem: ProblemConfig,
    pub solver: SolveConfig,
    pub outputs: OutputConfig,
    pub estimates: EstimateConfig,
    pub checks: CheckConfig,
}

/// Dedicated command-line overrides; applied after `--set`.
#[derive(Clone, Debug, Default)]
pub struct FlagOverrides {
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub alpha: Option<usize>,
    pub diff: Option<DiffMode>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if !(2..=3).contains(&p.n) {
            bail!("problem.n must be 2 or 3, got {}", p.n);
        }
        if p.alpha == 0 || p.alpha > p.n {
            bail!("problem.alpha must lie in 1..={}, got {}", p.n, p.alpha);
        }
        if p.m < 8 {
            bail!("problem.m must be at least 8, got {}", p.m);
        }
        if !(p.delta >= 0.0) {
            bail!("problem.delta must be nonnegative");
        }
        if self.estimates.radii_cells.iter().any(|r| !(*r >= 1.0)) {
            bail!("estimates.radii_cells must all be at least 1");
        }
        self.solver.validate()?;
        Ok(())
    }

    /// Loads `path` (if any), applies `sets` in order, then `flags`.
    pub fn load(path: Option<&Path>, sets: &[String], flags: &FlagOverrides) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for s in sets {
            apply_set(&mut table, s)?;
        }
        default_kinds(&mut table);
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .context("invalid configuration")?;
        cfg.apply_flags(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_flags(&mut self, flags: &FlagOverrides) {
        if let Some(seed) = flags.seed {
            self.seed = seed;
            if let PsiSpec::Manufactured { seed: s, .. } = &mut self.problem.psi {
                *s = Some(seed);
            }
        }
        if let Some(m) = flags.grid {
            self.problem.m = m;
        }
        if let Some(a) = flags.alpha {
            self.problem.alpha = a;
        }
        if let Some(d) = flags.diff {
            self.problem.diff_mode = d;
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Tagged tables under `problem` that omit `kind` take the default variant.
fn default_kinds(table: &mut toml::Table) {
    let Some(problem) = table.get_mut("problem").and_then(toml::Value::as_table_mut) else {
        return;
    };
    for (key, kind) in [("psi", "manufactured"), ("chi", "identity")] {
        if let Some(t) = problem.get_mut(key).and_then(toml::Value::as_table_mut) {
            t.entry("kind").or_insert_with(|| toml::Value::String(kind.into()));
        }
    }
}

/// Applies `a.b.c=value`, parsing `value` as a TOML value and falling back to a string.
pub fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("--set expects key=value, got `{assignment}`"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("malformed key `{key}`");
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("`{part}` in `{key}` is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn sets_then_flags() {
        let sets = vec![
            "problem.m=12".to_string(),
            "problem.metric_preset=conformal".to_string(),
            "solver.dt_init=0.25".to_string(),
            "problem.psi.kind=lifted".to_string(),
            "problem.psi.factor=1.1".to_string(),
            "problem.psi.modulation=0.2".to_string(),
        ];
        let flags = FlagOverrides {
            grid: Some(8),
            ..Default::default()
        };
        let cfg = RunConfig::load(None, &sets, &flags).unwrap();
        assert_eq!(cfg.problem.m, 8);
        assert_eq!(cfg.problem.metric_preset, MetricPreset::Conformal);
        assert_eq!(cfg.solver.dt_init, 0.25);
        assert_eq!(
            cfg.problem.psi,
            PsiSpec::Lifted {
                factor: 1.1,
                modulation: 0.2
            }
        );
    }

    #[test]
    fn seed_flag_reaches_manufactured_psi() {
        let cfg = RunConfig::load(
            None,
            &[],
            &FlagOverrides {
                seed: Some(7),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert!(matches!(cfg.problem.psi, PsiSpec::Manufactured { seed: Some(7), .. }));
    }

    #[test]
    fn partial_psi_table_keeps_default_kind() {
        let cfg = RunConfig::load(None, &["problem.psi.amplitude=0.02".into()], &FlagOverrides::default()).unwrap();
        assert_eq!(
            cfg.problem.psi,
            PsiSpec::Manufactured {
                seed: None,
                amplitude: 0.02
            }
        );
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(RunConfig::load(None, &["problem.n=5".into()], &FlagOverrides::default()).is_err());
        assert!(RunConfig::load(None, &["nonsense".into()], &FlagOverrides::default()).is_err());
        assert!(RunConfig::load(None, &["problem.bogus=1".into()], &FlagOverrides::default()).is_err());
    }
}

//! Pipeline parameters from a TOML file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use flowseg::cfsfdp::CutoffChoice;
use flowseg::flow::CompoundMode;
use flowseg::pipeline::AnalysisMode;
use flowseg::{FgPolicy, PipelineParams};
use serde::Deserialize;

use crate::CliError;

/// Density cutoff: `auto` (2% quantile of pairwise distances), `auto:<fraction>`
/// or a fixed positive value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcArg(pub CutoffChoice);

impl FromStr for DcArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("expected auto, auto:<fraction> or a positive number, got {s:?}");
        let choice = if s == "auto" {
            CutoffChoice::default()
        } else if let Some(f) = s.strip_prefix("auto:") {
            let fraction: f64 = f.parse().map_err(|_| bad())?;
            CutoffChoice::Auto { fraction }
        } else {
            CutoffChoice::Fixed(s.parse().map_err(|_| bad())?)
        };
        Ok(DcArg(choice))
    }
}

/// Parameters shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
#[command(next_help_heading = "Pipeline parameters")]
pub struct ParamArgs {
    /// TOML file with any of the parameters below (snake_case keys); flags win
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Frames compounded into one flow field [default: 5]
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Sample interval in pixels [default: 3]
    #[arg(long, global = true)]
    pub s: Option<usize>,
    /// Balance between flow and coordinates in density features [default: 50]
    #[arg(long, global = true)]
    pub p: Option<f64>,
    /// Density threshold divisor: peaks need rho > rho_max / c1 [default: 15]
    #[arg(long, global = true)]
    pub c1: Option<f64>,
    /// Flow separation threshold per compounded frame, used as c2 * k [default: 0.5]
    #[arg(long, global = true)]
    pub c2: Option<f64>,
    /// Coordinate separation threshold in pixels [default: 50]
    #[arg(long, global = true)]
    pub td2: Option<f64>,
    /// Samples given to the density analysis [default: 200]
    #[arg(long = "n-c", global = true)]
    pub n_c: Option<usize>,
    /// Density cutoff: auto, auto:<fraction> or a fixed value [default: auto]
    #[arg(long = "d-c", global = true, value_name = "D_C")]
    pub d_c: Option<DcArg>,
    /// Flow compounding: pixelwise or trajectory [default: pixelwise]
    #[arg(long, global = true, value_name = "MODE")]
    pub compound_mode: Option<CompoundMode>,
    /// Seed of the per-frame subsampling [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Mask labels counted as foreground, comma separated [default: 255]
    #[arg(long, global = true, value_name = "LABELS")]
    pub fg_labels: Option<FgPolicy>,
    /// Segmentation alone with this fixed tau; every segment becomes an instance [default: off]
    #[arg(long, global = true, value_name = "TAU")]
    pub gbis_only_tau: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamFile {
    k: Option<usize>,
    s: Option<usize>,
    p: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    td2: Option<f64>,
    n_c: Option<usize>,
    d_c: Option<DcValue>,
    compound_mode: Option<CompoundMode>,
    seed: Option<u64>,
    fg_labels: Option<Vec<u8>>,
    gbis_only_tau: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum DcValue {
    Fixed(f64),
    Named(String),
}

fn read_param_file(path: &Path) -> Result<ParamFile, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let bad = |message: String| CliError::Config {
        path: path.to_path_buf(),
        message,
    };
    toml::from_str(&text).map_err(|e| bad(e.message().to_string()))
}

impl ParamArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<PipelineParams, CliError> {
        let mut p = PipelineParams::default();
        let mut tau = None;
        if let Some(path) = &self.config {
            let f = read_param_file(path)?;
            let bad = |message: String| CliError::Config {
                path: path.clone(),
                message,
            };
            apply(&mut p, f.k, f.s, f.p, f.c1, f.c2, f.td2, f.n_c, f.seed);
            if let Some(d) = f.d_c {
                p.d_c = match d {
                    DcValue::Fixed(v) => CutoffChoice::Fixed(v),
                    DcValue::Named(s) => s.parse::<DcArg>().map_err(bad)?.0,
                };
            }
            if let Some(m) = f.compound_mode {
                p.compound_mode = m;
            }
            if let Some(labels) = f.fg_labels {
                p.fg_policy = FgPolicy::new(labels).map_err(|e| bad(e.to_string()))?;
            }
            tau = f.gbis_only_tau;
        }
        apply(
            &mut p, self.k, self.s, self.p, self.c1, self.c2, self.td2, self.n_c, self.seed,
        );
        if let Some(d) = self.d_c {
            p.d_c = d.0;
        }
        if let Some(m) = self.compound_mode {
            p.compound_mode = m;
        }
        if let Some(f) = self.fg_labels {
            p.fg_policy = f;
        }
        if let Some(t) = self.gbis_only_tau.or(tau) {
            p.mode = AnalysisMode::GbisOnly { tau: t };
        }
        validate(&p)?;
        Ok(p)
    }
}

#[allow(clippy::too_many_arguments)]
fn apply(
    p: &mut PipelineParams,
    k: Option<usize>,
    s: Option<usize>,
    bal: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    td2: Option<f64>,
    n_c: Option<usize>,
    seed: Option<u64>,
) {
    p.k = k.unwrap_or(p.k);
    p.s = s.unwrap_or(p.s);
    p.p = bal.unwrap_or(p.p);
    p.c1 = c1.unwrap_or(p.c1);
    p.c2 = c2.unwrap_or(p.c2);
    p.td2 = td2.unwrap_or(p.td2);
    p.n_c = n_c.unwrap_or(p.n_c);
    p.seed = seed.unwrap_or(p.seed);
}

fn validate(p: &PipelineParams) -> Result<(), CliError> {
    let fail = |m: &str| Err(CliError::Usage(format!("invalid parameter: {m}")));
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if p.k == 0 {
        return fail("k must be at least 1");
    }
    if p.s == 0 {
        return fail("s must be at least 1");
    }
    if p.n_c == 0 {
        return fail("n_c must be at least 1");
    }
    if !positive(p.p) || !positive(p.c1) {
        return fail("p and c1 must be positive");
    }
    if !(p.c2.is_finite() && p.c2 >= 0.0) || !(p.td2.is_finite() && p.td2 >= 0.0) {
        return fail("c2 and td2 must be non-negative");
    }
    match p.d_c {
        CutoffChoice::Auto { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
            return fail("d_c quantile fraction must lie in (0, 1]");
        }
        CutoffChoice::Fixed(v) if !positive(v) => return fail("fixed d_c must be positive"),
        _ => {}
    }
    if let AnalysisMode::GbisOnly { tau } = p.mode {
        if !(tau >= 0.0) {
            return fail("gbis_only_tau must be non-negative");
        }
    }
    Ok(())
}

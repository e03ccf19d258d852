//! Run configuration: presets, JSON files and flag overrides.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use almg_core::{ModelParams, Precision, ProtocolSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// A list of values or an inclusive `start..=stop` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn values(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let v = match self {
            Grid::Values(v) => v.clone(),
            Grid::Range { start, stop, step } => {
                if !(*step > 0.0 && step.is_finite() && stop >= start) {
                    return Err(CliError::usage(format!("{name}: need step > 0 and stop >= start")));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=n).map(|i| start + i as f64 * step).collect()
            }
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::usage(format!("{name}: must be a nonempty list of finite numbers")));
        }
        Ok(v)
    }

    /// `a:b:step` or `a,b,c`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err("expected start:stop:step".into());
            }
            Ok(Grid::Range {
                start: num(parts[0])?,
                stop: num(parts[1])?,
                step: num(parts[2])?,
            })
        } else {
            Ok(Grid::Values(s.split(',').map(num).collect::<Result<_, _>>()?))
        }
    }
}

/// Flat run configuration; every field may be absent until resolution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j2: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_ini: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_ini: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_int: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_int: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_fin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_fin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_int: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_fin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_grid: Option<Grid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_grid: Option<Grid>,
    /// System sizes as values of `j`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Grid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gme_width_sigmas: Option<f64>,
    /// `double`, `auto` or a bit count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kink_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separation_threshold: Option<f64>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("--config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("--config {}: {e}", path.display())))
    }

    /// Fields set in `top` replace those of `self`.
    pub fn overlay(mut self, top: &RunConfig) -> Self {
        overlay!(self, top; j2, xi_ini, alpha_ini, xi_int, alpha_int, xi_fin, alpha_fin, p, phi,
            tau_int, tau_fin, dt, xi_grid, tau_grid, j_list, t_grid, out_dir, gme_width_sigmas,
            precision, kink_factor, separation_threshold);
        self
    }

    pub fn with_defaults(mut self) -> Self {
        self.tau_fin.get_or_insert(2000.0);
        self.dt.get_or_insert(0.1);
        self.gme_width_sigmas.get_or_insert(2.0);
        self.precision.get_or_insert_with(|| "auto".into());
        self.kink_factor.get_or_insert(10.0);
        self.separation_threshold.get_or_insert(0.01);
        self
    }

    /// Names of required protocol fields that are still unset.
    pub fn missing_protocol_fields(&self, size_from_list: bool) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.j2.is_none() && !(size_from_list && self.j_list.is_some()) {
            out.push("j2");
        }
        let fields = [
            ("xi_ini", self.xi_ini),
            ("alpha_ini", self.alpha_ini),
            ("xi_int", self.xi_int),
            ("alpha_int", self.alpha_int),
            ("xi_fin", self.xi_fin),
            ("alpha_fin", self.alpha_fin),
            ("p", self.p),
            ("phi", self.phi),
        ];
        out.extend(fields.iter().filter(|(_, v)| v.is_none()).map(|(n, _)| *n));
        out
    }

    /// Protocol at size `two_j`; all protocol fields must be present.
    pub fn protocol_spec(&self, two_j: u32) -> Result<ProtocolSpec, CliError> {
        let get = |v: Option<f64>| v.unwrap_or(f64::NAN);
        let spec = ProtocolSpec {
            theta_ini: ModelParams::new(get(self.xi_ini), get(self.alpha_ini), two_j)?,
            theta_int: ModelParams::new(get(self.xi_int), get(self.alpha_int), two_j)?,
            theta_fin: ModelParams::new(get(self.xi_fin), get(self.alpha_fin), two_j)?,
            p: get(self.p),
            phi: get(self.phi),
            tau_int: self.tau_int.unwrap_or(0.0),
            tau_fin: get(self.tau_fin),
            dt: get(self.dt),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `tau_grid` when present, otherwise the single `tau_int`.
    pub fn taus(&self) -> Result<Vec<f64>, CliError> {
        match (&self.tau_grid, self.tau_int) {
            (Some(g), _) => g.values("tau_grid"),
            (None, Some(t)) => Ok(vec![t]),
            (None, None) => Err(CliError::usage("missing required fields: tau_int or tau_grid")),
        }
    }

    /// Sizes as `2j`, from `j_list` or else `j2`.
    pub fn sizes(&self) -> Result<Vec<u32>, CliError> {
        match (&self.j_list, self.j2) {
            (Some(list), _) => {
                if list.is_empty() {
                    return Err(CliError::usage("j_list: must be nonempty"));
                }
                list.iter()
                    .map(|&j| {
                        let two_j = (2.0 * j).round();
                        if !(two_j >= 1.0 && (2.0 * j - two_j).abs() < 1e-9) {
                            Err(CliError::usage(format!("j_list: {j} is not a positive multiple of 1/2")))
                        } else {
                            Ok(two_j as u32)
                        }
                    })
                    .collect()
            }
            (None, Some(j2)) => Ok(vec![j2]),
            (None, None) => Err(CliError::usage("missing required fields: j2 or j_list")),
        }
    }

    pub fn precision(&self) -> Result<Precision, CliError> {
        self.precision
            .as_deref()
            .unwrap_or("auto")
            .parse()
            .map_err(|e: almg_core::Error| CliError::usage(format!("precision: {e}")))
    }

    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

fn standard(two_j: u32, p: f64, phi: f64) -> RunConfig {
    RunConfig {
        j2: Some(two_j),
        xi_ini: Some(0.6),
        alpha_ini: Some(-2.0),
        xi_int: Some(0.2),
        alpha_int: Some(-0.8),
        xi_fin: Some(0.5),
        alpha_fin: Some(-0.6),
        p: Some(p),
        phi: Some(phi),
        tau_fin: Some(2000.0),
        dt: Some(0.1),
        ..RunConfig::default()
    }
}

/// Parameter sets of the figure workflows.
pub fn preset(fig: u32) -> Result<RunConfig, CliError> {
    let s1 = || standard(6400, 0.5, 1.5 * PI);
    let cfg = match fig {
        4 => RunConfig {
            tau_grid: Some(Grid::Values(vec![0.5, 1.5, 2.5])),
            t_grid: Some(Grid::Range {
                start: 0.0,
                stop: 20.0,
                step: 0.05,
            }),
            ..s1()
        },
        5 => RunConfig {
            tau_grid: Some(Grid::Range {
                start: 0.0,
                stop: 10.0,
                step: 0.05,
            }),
            ..s1()
        },
        6 => RunConfig {
            tau_grid: Some(Grid::Range {
                start: 0.0,
                stop: 100.0,
                step: 0.5,
            }),
            tau_fin: Some(5000.0),
            ..standard(6400, 1.0 / 3.0, 0.6 * PI)
        },
        7 => RunConfig {
            tau_grid: Some(Grid::Values(vec![0.5, 1.5, 2.5])),
            j_list: Some(vec![1600.0]),
            t_grid: Some(Grid::Range {
                start: 0.0,
                stop: 50.0,
                step: 0.01,
            }),
            ..s1()
        },
        8 => RunConfig {
            tau_grid: Some(Grid::Values(vec![3.5, 6.5, 8.5])),
            j_list: Some(vec![100.0, 200.0, 400.0, 800.0]),
            t_grid: Some(Grid::Range {
                start: 0.0,
                stop: 50.0,
                step: 0.01,
            }),
            ..s1()
        },
        _ => return Err(CliError::usage(format!("--fig: unknown preset {fig} (expected 4, 5, 6, 7 or 8)"))),
    };
    Ok(cfg)
}

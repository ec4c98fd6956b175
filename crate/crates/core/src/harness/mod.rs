//! Robustness evaluation over grids of dynamics parameters.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defaults::eval as d;
use crate::envs::{EnvFamily, EnvSettings};
use crate::error::{Error, Result};
use crate::policy::{episode_returns, ActionMode, PolicyParams};
use crate::rng::{self, derive_seed, Purpose};

/// One grid axis: explicit values or an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// `[low, high, count]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64, usize)>,
}

/// Evaluation settings as they appear in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Cartesian-product axes; every parameter must appear once.
    pub axes: Vec<AxisSpec>,
    /// Instead of axes, draw this many points uniformly within bounds.
    pub uniform_samples: Option<usize>,
    pub episodes_per_point: usize,
    pub max_episode_len: usize,
    /// Evaluate the mean (or most likely) action instead of sampling.
    pub deterministic: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            axes: Vec::new(),
            uniform_samples: None,
            episodes_per_point: d::EPISODES_PER_POINT,
            max_episode_len: d::MAX_EPISODE_LEN,
            deterministic: false,
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Evaluation points in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    pub names: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub episodes_per_point: usize,
    pub max_episode_len: usize,
    pub mode: ActionMode,
}

impl EvalGrid {
    /// Cartesian product of the axes, first axis varying slowest.
    pub fn from_axes(axes: Vec<(String, Vec<f64>)>, episodes_per_point: usize, max_episode_len: usize) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|(_, v)| v.is_empty()) {
            return Err(Error::InvalidArgument("grid axes must be non-empty".into()));
        }
        let mut points = vec![Vec::new()];
        for (_, values) in &axes {
            points = points
                .into_iter()
                .flat_map(|p: Vec<f64>| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        let grid = Self {
            names: axes.into_iter().map(|(n, _)| n).collect(),
            points,
            episodes_per_point,
            max_episode_len,
            mode: ActionMode::Stochastic,
        };
        grid.check_counts()?;
        Ok(grid)
    }

    /// `n` points drawn uniformly inside the family's parameter bounds.
    pub fn uniform(settings: &EnvSettings, n: usize, episodes_per_point: usize, max_episode_len: usize, seed: u64) -> Result<Self> {
        let phi0 = settings.reference_params()?;
        let bounds = phi0
            .bounds()
            .ok_or_else(|| Error::InvalidArgument("uniform grids need parameter bounds".into()))?
            .to_vec();
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one sample".into()));
        }
        let mut rng = rng::stream(seed, Purpose::Evaluation, u64::MAX);
        let points = (0..n)
            .map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect())
            .collect();
        let grid = Self {
            names: phi0.names().to_vec(),
            points,
            episodes_per_point,
            max_episode_len,
            mode: ActionMode::Stochastic,
        };
        grid.check_counts()?;
        Ok(grid)
    }

    /// 28 pole lengths evenly over `[0.3, 3.0]`.
    pub fn cartpole_default() -> Self {
        let (lo, hi, n) = d::CARTPOLE_GRID;
        Self::from_axes(
            vec![("pole_length".into(), linspace(lo, hi, n))],
            d::EPISODES_PER_POINT,
            d::MAX_EPISODE_LEN,
        )
        .expect("default grid is valid")
    }

    pub fn from_spec(spec: &GridSpec, settings: &EnvSettings, seed: u64) -> Result<Self> {
        let mut grid = if let Some(n) = spec.uniform_samples {
            if !spec.axes.is_empty() {
                return Err(Error::Config("give either grid axes or uniform_samples, not both".into()));
            }
            Self::uniform(settings, n, spec.episodes_per_point, spec.max_episode_len, seed)?
        } else if spec.axes.is_empty() {
            if settings.family != EnvFamily::Cartpole {
                return Err(Error::Config("evaluation grid axes are required for this family".into()));
            }
            let mut g = Self::cartpole_default();
            g.episodes_per_point = spec.episodes_per_point;
            g.max_episode_len = spec.max_episode_len;
            g
        } else {
            let axes = spec
                .axes
                .iter()
                .map(|a| match (&a.values, a.range) {
                    (Some(v), None) => Ok((a.name.clone(), v.clone())),
                    (None, Some((lo, hi, n))) => Ok((a.name.clone(), linspace(lo, hi, n))),
                    _ => Err(Error::Config(format!(
                        "axis `{}` needs exactly one of `values` or `range`",
                        a.name
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            Self::from_axes(axes, spec.episodes_per_point, spec.max_episode_len)?
        };
        if spec.deterministic {
            grid.mode = ActionMode::Deterministic;
        }
        grid.check_counts()?;
        grid.check_names(settings)?;
        Ok(grid)
    }

    fn check_counts(&self) -> Result<()> {
        if self.episodes_per_point == 0 || self.max_episode_len == 0 {
            return Err(Error::InvalidArgument(
                "episodes_per_point and max_episode_len must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Axis names must match the family's parameters, in order.
    pub fn check_names(&self, settings: &EnvSettings) -> Result<()> {
        let phi0 = settings.reference_params()?;
        if self.names != phi0.names() {
            return Err(Error::Config(format!(
                "grid parameters {:?} do not match the environment's {:?}",
                self.names,
                phi0.names()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub params: Vec<f64>,
    pub return_mean: f64,
    pub return_std: f64,
    pub n_episodes: usize,
    /// Undiscounted return of every episode, in episode order.
    pub returns: Vec<f64>,
    /// Set when the point could not be evaluated.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalMeta {
    pub checkpoint: String,
    pub seed: u64,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub names: Vec<String>,
    pub rows: Vec<EvalRow>,
    pub meta: EvalMeta,
}

/// Seed of grid point `index`; the same for every policy evaluated with `seed`.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, Purpose::Evaluation, index as u64)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `episodes_per_point` episodes at every grid point.
///
/// Points are evaluated in parallel; rows come back in grid order. A point
/// whose environment cannot be built is reported as failed rather than
/// aborting the sweep.
pub fn evaluate_grid(policy: &PolicyParams, settings: &EnvSettings, grid: &EvalGrid, seed: u64) -> Result<EvalReport> {
    grid.check_names(settings)?;
    let eval_settings = settings.clone().with_max_steps(grid.max_episode_len);
    let rows = grid
        .points
        .par_iter()
        .enumerate()
        .map(|(i, point)| {
            let run = || -> Result<Vec<f64>> {
                let phi = eval_settings.params(point.clone())?;
                episode_returns(policy, &eval_settings, &phi, grid.episodes_per_point, point_seed(seed, i), grid.mode)
            };
            match run() {
                Ok(returns) => {
                    let (return_mean, return_std) = mean_std(&returns);
                    EvalRow {
                        params: point.clone(),
                        return_mean,
                        return_std,
                        n_episodes: returns.len(),
                        returns,
                        error: None,
                    }
                }
                Err(e) => EvalRow {
                    params: point.clone(),
                    return_mean: f64::NAN,
                    return_std: f64::NAN,
                    n_episodes: 0,
                    returns: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(EvalReport {
        names: grid.names.clone(),
        rows,
        meta: EvalMeta {
            seed,
            ..EvalMeta::default()
        },
    })
}

impl EvalReport {
    /// Header `param:<name>,...,return_mean,return_std,n_episodes`, one row
    /// per point. Failed points have empty return fields and zero episodes.
    pub fn to_csv(&self) -> String {
        let mut out: Vec<String> = self.names.iter().map(|n| format!("param:{n}")).collect();
        out.extend(["return_mean", "return_std", "n_episodes"].map(String::from));
        let mut s = out.join(",");
        s.push('\n');
        for r in &self.rows {
            let mut cols: Vec<String> = r.params.iter().map(|v| v.to_string()).collect();
            if r.error.is_some() {
                cols.extend([String::new(), String::new(), "0".into()]);
            } else {
                cols.extend([r.return_mean.to_string(), r.return_std.to_string(), r.n_episodes.to_string()]);
            }
            s.push_str(&cols.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Lowest mean return over successfully evaluated points.
    pub fn worst_case(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.error.is_none())
            .map(|r| r.return_mean)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn failed_points(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointWinner {
    Policy(usize),
    /// Every listed policy shares the best mean return.
    Tie(Vec<usize>),
    /// No policy evaluated successfully at this point.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub winners: Vec<PointWinner>,
    pub worst_case: Vec<f64>,
    /// Trapezoidal area under the return curve for single-axis grids, mean
    /// return over points otherwise.
    pub auc: Vec<f64>,
}

/// Compares reports evaluated on the same grid.
pub fn compare_policies(reports: &[EvalReport]) -> Result<Comparison> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("no reports to compare".into()))?;
    for r in &reports[1..] {
        let same = r.names == first.names
            && r.rows.len() == first.rows.len()
            && r.rows.iter().zip(&first.rows).all(|(a, b)| a.params == b.params);
        if !same {
            return Err(Error::InvalidArgument("reports were evaluated on different grids".into()));
        }
    }
    let winners = (0..first.rows.len())
        .map(|i| {
            let ok: Vec<(usize, f64)> = reports
                .iter()
                .enumerate()
                .filter(|(_, r)| r.rows[i].error.is_none())
                .map(|(p, r)| (p, r.rows[i].return_mean))
                .collect();
            let Some(best) = ok.iter().map(|x| x.1).reduce(f64::max) else {
                return PointWinner::None;
            };
            let top: Vec<usize> = ok.iter().filter(|x| x.1 == best).map(|x| x.0).collect();
            if top.len() == 1 {
                PointWinner::Policy(top[0])
            } else {
                PointWinner::Tie(top)
            }
        })
        .collect();
    let worst_case = reports.iter().map(EvalReport::worst_case).collect();
    let auc = reports.iter().map(area_under_curve).collect();
    Ok(Comparison {
        winners,
        worst_case,
        auc,
    })
}

fn area_under_curve(r: &EvalReport) -> f64 {
    let ok: Vec<&EvalRow> = r.rows.iter().filter(|x| x.error.is_none()).collect();
    if ok.is_empty() {
        return f64::NAN;
    }
    if r.names.len() == 1 && ok.len() > 1 {
        ok.windows(2)
            .map(|w| 0.5 * (w[0].return_mean + w[1].return_mean) * (w[1].params[0] - w[0].params[0]))
            .sum()
    } else {
        ok.iter().map(|x| x.return_mean).sum::<f64>() / ok.len() as f64
    }
}

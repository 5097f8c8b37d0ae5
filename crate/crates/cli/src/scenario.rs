//! Scenario files: layout, couplings, initial states, run control and the
//! analyses to perform. Unknown keys are rejected.

use crate::error::CliError;
use bh_core::lattice::{Couplings, Layout, Region, SiteGraph};
use bh_core::lyapunov::LyapunovOptions;
use bh_core::observables::EnergyComponent;
use bh_core::thermal::{RegionState, ThermalPoint};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub layout: Layout,
    pub physics: Physics,
    pub initial: Initial,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub analysis: Analysis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    #[serde(default = "one")]
    pub j: f64,
    #[serde(default)]
    pub g_ring: f64,
    /// Interaction on chain sites; defaults to `g_ring`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_chain: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub whole: Option<InitialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<InitialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<InitialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<InitialSpec>,
}

/// One of `(beta, mu)`, `(beta, n_bar)`, `(n_bar, e_bar)` or `empty = true`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub empty: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub shifted: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Zero means the ensemble is only sampled, not evolved.
    #[serde(default)]
    pub t_final: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_every: Option<f64>,
    /// Explicit sample times; overrides `sample_every`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default = "default_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_dt() -> f64 {
    bh_core::dynamics::DEFAULT_DT
}

fn default_traj() -> usize {
    bh_core::thermal::DEFAULT_TRAJECTORIES
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec { dt: default_dt(), t_final: 0.0, sample_every: None, times: None, n_traj: default_traj(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    /// Site and Bloch density matrices at the final time, Bloch diagonals
    /// of every ring at every sample.
    #[serde(default)]
    pub spdm: bool,
    /// Site populations at every sample.
    #[serde(default)]
    pub populations: bool,
    /// Ensemble-mean energies per site at every sample.
    #[serde(default)]
    pub energies: bool,
    /// Bose-Einstein refit of every ring at the final time.
    #[serde(default)]
    pub refit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<TransportSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_component")]
    pub component: EnergyComponent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

fn default_bins() -> usize {
    40
}

fn default_component() -> EnergyComponent {
    EnergyComponent::Total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSpec {
    #[serde(default = "default_t_total")]
    pub t_total: f64,
    #[serde(default = "one")]
    pub tau_r: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Number of initial trajectories used; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<usize>,
}

fn default_t_total() -> f64 {
    2000.0
}

impl LyapunovSpec {
    pub fn options(&self) -> LyapunovOptions {
        LyapunovOptions { t_total: self.t_total, tau_r: self.tau_r, dt: self.dt, ..LyapunovOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSpec {
    /// Fit window; the automatic plateau rule is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    /// Junction couplings to simulate; the layout's own when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilon_scan: Vec<f64>,
    /// Seeds averaged per coupling; `run.seed` when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxisName {
    Beta,
    G,
    M,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxisName,
    pub values: Vec<f64>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub shifted: bool,
    #[serde(default = "default_t_total")]
    pub t_total: f64,
    #[serde(default = "one")]
    pub tau_r: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_samples() -> usize {
    100
}

pub const BUILTINS: [(&str, &str); 5] = [
    ("relax", include_str!("../scenarios/relax.toml")),
    ("equilibrate", include_str!("../scenarios/equilibrate.toml")),
    ("transport", include_str!("../scenarios/transport.toml")),
    ("lyapunov_sweep", include_str!("../scenarios/lyapunov_sweep.toml")),
    ("appendix_b", include_str!("../scenarios/appendix_b.toml")),
];

pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, CliError> {
        toml::from_str(text).map_err(|e| CliError::Schema(e.to_string().trim_end().to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Scenario, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Scenario::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn couplings(&self) -> Couplings {
        Couplings {
            hop: self.physics.j,
            g_ring: self.physics.g_ring,
            g_chain: self.physics.g_chain.unwrap_or(self.physics.g_ring),
        }
    }

    /// Checks every field and resolves initial states.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let schema = |msg: String| CliError::Schema(msg);
        let run = &self.run;
        if !(run.dt > 0.0 && run.dt.is_finite()) {
            return Err(schema(format!("run.dt: must be positive, got {}", run.dt)));
        }
        if !(run.t_final >= 0.0 && run.t_final.is_finite()) {
            return Err(schema(format!("run.t_final: must be non-negative, got {}", run.t_final)));
        }
        if run.n_traj == 0 {
            return Err(schema("run.n_traj: must be at least 1".into()));
        }
        let graph = self.layout.build(&self.couplings()).map_err(|e| schema(format!("layout: {e}")))?;
        let times = self.sample_times()?;
        let inits = self.initial_states(&graph)?;
        if let Some(h) = &self.analysis.histogram {
            if h.bins == 0 {
                return Err(schema("analysis.histogram.bins: must be at least 1".into()));
            }
        }
        if let Some(l) = &self.analysis.lyapunov {
            for (k, v) in [("t_total", l.t_total), ("tau_r", l.tau_r), ("dt", l.dt)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(schema(format!("analysis.lyapunov.{k}: must be positive, got {v}")));
                }
            }
        }
        if let Some(t) = &self.analysis.transport {
            if graph.junction_path().is_empty() {
                return Err(schema("analysis.transport: needs a two-ring layout".into()));
            }
            if let Some([a, b]) = t.window {
                if !(a < b) {
                    return Err(schema(format!("analysis.transport.window: [{a}, {b}] is empty")));
                }
            }
            if let Some(e) = t.epsilon_scan.iter().find(|e| !(**e > 0.0 && **e <= self.physics.j)) {
                return Err(schema(format!("analysis.transport.epsilon_scan: {e} outside (0, J]")));
            }
            if times.len() < 2 {
                return Err(schema("analysis.transport: needs at least two sample times".into()));
            }
        }
        for (i, s) in self.analysis.sweep.iter().enumerate() {
            if !matches!(self.layout, Layout::Ring { .. }) {
                return Err(schema(format!("analysis.sweep[{i}]: sweeps run on a single ring")));
            }
            let Some(InitialSpec { beta: Some(_), n_bar: Some(_), .. }) = self.initial.whole else {
                return Err(schema(format!("analysis.sweep[{i}]: initial.whole must give beta and n_bar")));
            };
            if s.values.is_empty() || s.n_samples == 0 {
                return Err(schema(format!("analysis.sweep[{i}]: needs values and n_samples > 0")));
            }
            if s.axis == SweepAxisName::M {
                if let Some(v) = s.values.iter().find(|v| v.fract() != 0.0 || **v < 3.0) {
                    return Err(schema(format!("analysis.sweep[{i}].values: ring size {v} is not an integer ≥ 3")));
                }
            }
        }
        Ok(Resolved { graph, inits, times })
    }

    fn sample_times(&self) -> Result<Vec<f64>, CliError> {
        let run = &self.run;
        let mut times = match (&run.times, run.sample_every) {
            (Some(t), _) => t.clone(),
            (None, Some(every)) => {
                if !(every > 0.0) {
                    return Err(CliError::Schema(format!("run.sample_every: must be positive, got {every}")));
                }
                let n = (run.t_final / every + 1e-9).floor() as usize;
                (0..=n).map(|i| i as f64 * every).collect()
            }
            (None, None) => vec![0.0],
        };
        if times.first() != Some(&0.0) {
            times.insert(0, 0.0);
        }
        if times.last().is_some_and(|&t| t < run.t_final) {
            times.push(run.t_final);
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::Schema("run.times: must be strictly increasing".into()));
        }
        Ok(times)
    }

    fn initial_states(&self, graph: &SiteGraph) -> Result<Vec<(Region, RegionState)>, CliError> {
        let m = self.layout.ring_size();
        let hop = self.physics.j;
        let given = [
            (Region::Whole, self.initial.whole),
            (Region::LeftRing, self.initial.left),
            (Region::RightRing, self.initial.right),
            (Region::Chain, self.initial.chain),
        ];
        let mut out = Vec::new();
        for (region, spec) in given {
            let key = format!("initial.{}", region.label());
            let expected = graph.regions().any(|(r, _)| r == region);
            match (spec, expected) {
                (None, true) => return Err(CliError::Schema(format!("{key}: missing"))),
                (Some(_), false) => {
                    return Err(CliError::Schema(format!("{key}: region does not exist in this layout")))
                }
                (None, false) => {}
                (Some(s), true) => {
                    let state = s.resolve(m, hop).map_err(|msg| CliError::Schema(format!("{key}: {msg}")))?;
                    if region == Region::Chain && state != RegionState::Empty {
                        return Err(CliError::Schema(format!("{key}: the chain can only start empty")));
                    }
                    out.push((region, state));
                }
            }
        }
        Ok(out)
    }
}

impl InitialSpec {
    fn resolve(&self, m: usize, hop: f64) -> Result<RegionState, String> {
        let InitialSpec { beta, mu, n_bar, e_bar, empty, shifted } = *self;
        let point = match (beta, mu, n_bar, e_bar, empty) {
            (None, None, None, None, true) => return Ok(RegionState::Empty),
            (Some(b), Some(mu), None, None, false) => ThermalPoint::from_beta_mu(b, mu, m, hop),
            (Some(b), None, Some(n), None, false) => ThermalPoint::from_beta_density(b, n, m, hop),
            (None, None, Some(n), Some(e), false) => ThermalPoint::from_density_energy(n, e, m, hop),
            _ => {
                return Err("give exactly one of (beta, mu), (beta, n_bar), (n_bar, e_bar) or empty = true".into())
            }
        };
        if shifted && empty {
            return Err("an empty region cannot be shifted".into());
        }
        Ok(RegionState::Thermal { point: point.map_err(|e| e.to_string())?, shifted })
    }
}

/// Validated scenario.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub graph: SiteGraph,
    pub inits: Vec<(Region, RegionState)>,
    /// Sample times, starting at zero and ending at `t_final`.
    pub times: Vec<f64>,
}

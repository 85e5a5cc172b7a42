//! Configuration documents and their validation.
//!
//! A configuration is a TOML document. Every physical quantity must be
//! given explicitly; only the `[output]` table has defaults.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::Propagator;
use crate::lattice::{Axis, GridSpec};
use crate::scenarios::epr::{EprSetup, Magnet};
use crate::scenarios::oracle::OracleScenario;
use crate::scenarios::SCENARIOS;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: String,
    seed: u64,
    grid: GridConfig,
    physics: PhysicsConfig,
    time: TimeConfig,
    ensemble: EnsembleConfig,
    params: toml::Table,
    #[serde(default)]
    output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub axes: Vec<AxisConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub hbar: f64,
    /// One mass per configuration axis.
    pub masses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Steps between recorded snapshots.
    pub snapshot_stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Independent experiment runs (`epr`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_runs: Option<usize>,
    /// Trajectories (every other scenario).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub trajectories: bool,
    pub density_snapshots: bool,
    pub summary: bool,
    /// Histogram bins per axis for the equivariance distance.
    pub histogram_bins: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("output"),
            trajectories: true,
            density_snapshots: false,
            summary: true,
            histogram_bins: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnetConfig {
    pub lambda: f64,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EprParams {
    pub centers: [f64; 2],
    pub sigmas: [f64; 2],
    pub magnets: [MagnetConfig; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeGaussianParams {
    pub center: f64,
    pub sigma: f64,
    /// Momentum of each spin component.
    pub momenta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorParams {
    pub omega: f64,
    pub displacement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    pub weight: f64,
    pub center: f64,
    pub momentum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedParams {
    pub sigma: f64,
    pub packets: Vec<PacketConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomEntangledParams {
    pub k1: usize,
    pub k2: usize,
    pub rank: usize,
    pub envelope: f64,
    pub modes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ScenarioParams {
    Epr(EprParams),
    FreeGaussian(FreeGaussianParams),
    OscillatorCoherent(OscillatorParams),
    MixedWFundamental(MixedParams),
    RandomEntangled(RandomEntangledParams),
}

/// A schema-valid, checked configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub seed: u64,
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub time: TimeConfig,
    pub ensemble: EnsembleConfig,
    pub params: ScenarioParams,
    pub output: OutputConfig,
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        field: field.into(),
        message: message.into(),
    }
}

/// Deserializes `T`, reporting the dotted path of the offending field.
fn typed<'de, T, D>(de: D, prefix: &str) -> Result<T>
where
    T: DeserializeOwned,
    D: serde::Deserializer<'de, Error = toml::de::Error>,
{
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner().message().to_string();
        let mut path = prefix.to_string();
        let at = e.path().to_string();
        if at != "." {
            if !path.is_empty() {
                path.push('.');
            }
            path.push_str(&at);
        }
        // Missing fields are reported against their parent table.
        if let Some(name) = inner.strip_prefix("missing field `").and_then(|r| r.strip_suffix('`')) {
            if !path.is_empty() {
                path.push('.');
            }
            path.push_str(name);
        }
        if path.is_empty() {
            path.push_str("<document>");
        }
        schema(path, inner)
    })
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|_| schema("<document>", "configuration is not UTF-8"))?;
        Ok((Self::parse(text)?, bytes))
    }

    /// Schema and consistency checks; physical feasibility is left to
    /// [`ScenarioConfig::preflight`].
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = typed(toml::Deserializer::new(text), "")?;
        let params = match raw.scenario.as_str() {
            "epr" => ScenarioParams::Epr(typed(raw.params.clone(), "params")?),
            "free_gaussian" => ScenarioParams::FreeGaussian(typed(raw.params.clone(), "params")?),
            "oscillator_coherent" => ScenarioParams::OscillatorCoherent(typed(raw.params.clone(), "params")?),
            "mixed_w_fundamental" => ScenarioParams::MixedWFundamental(typed(raw.params.clone(), "params")?),
            "random_entangled" => ScenarioParams::RandomEntangled(typed(raw.params.clone(), "params")?),
            other => {
                let known: Vec<&str> = SCENARIOS.iter().map(|s| s.0).collect();
                return Err(schema("scenario", format!("unknown scenario `{other}`; expected one of {}", known.join(", "))));
            }
        };
        let config = Self {
            scenario: raw.scenario,
            seed: raw.seed,
            grid: raw.grid,
            physics: raw.physics,
            time: raw.time,
            ensemble: raw.ensemble,
            params,
            output: raw.output,
        };
        config.check()?;
        Ok(config)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.axes.iter().map(|a| Axis::new(a.min, a.max, a.points)).collect())
            .map_err(|e| schema("grid.axes", e.to_string()))
    }

    /// Trajectories or runs in the ensemble.
    pub fn ensemble_size(&self) -> usize {
        self.ensemble.n_runs.or(self.ensemble.n_traj).unwrap_or(0)
    }

    pub fn steps(&self) -> usize {
        (self.time.t_final / self.time.dt).round() as usize
    }

    fn check(&self) -> Result<()> {
        let expected_dims = match &self.params {
            ScenarioParams::Epr(_) | ScenarioParams::RandomEntangled(_) => 2,
            _ => 1,
        };
        if self.grid.axes.len() != expected_dims {
            return Err(schema(
                "grid.axes",
                format!("scenario `{}` needs {expected_dims} axes, got {}", self.scenario, self.grid.axes.len()),
            ));
        }
        self.grid_spec()?;
        positive("physics.hbar", self.physics.hbar)?;
        if self.physics.masses.len() != expected_dims {
            return Err(schema("physics.masses", format!("need one mass per axis ({expected_dims})")));
        }
        for m in &self.physics.masses {
            positive("physics.masses", *m)?;
        }
        positive("time.dt", self.time.dt)?;
        positive("time.t_final", self.time.t_final)?;
        let ratio = self.time.t_final / self.time.dt;
        if (ratio - ratio.round()).abs() > 1e-6 {
            return Err(schema("time.t_final", format!("not a whole number of steps of dt = {}", self.time.dt)));
        }
        if self.time.snapshot_stride == 0 {
            return Err(schema("time.snapshot_stride", "must be at least 1"));
        }
        let (wanted, other) = if matches!(self.params, ScenarioParams::Epr(_)) {
            (("ensemble.n_runs", self.ensemble.n_runs), ("ensemble.n_traj", self.ensemble.n_traj))
        } else {
            (("ensemble.n_traj", self.ensemble.n_traj), ("ensemble.n_runs", self.ensemble.n_runs))
        };
        match wanted.1 {
            None => return Err(schema(wanted.0, format!("missing field for scenario `{}`", self.scenario))),
            Some(0) => return Err(schema(wanted.0, "must be at least 1")),
            Some(_) => {}
        }
        if other.1.is_some() {
            return Err(schema(other.0, format!("not used by scenario `{}`", self.scenario)));
        }
        if self.output.histogram_bins == 0 {
            return Err(schema("output.histogram_bins", "must be at least 1"));
        }
        match &self.params {
            ScenarioParams::Epr(p) => {
                for j in 0..2 {
                    positive(&format!("params.sigmas[{j}]"), p.sigmas[j])?;
                    let m = &p.magnets[j];
                    for (name, t) in [("t_start", m.t_start), ("t_end", m.t_end)] {
                        let field = format!("params.magnets[{j}].{name}");
                        if !(t >= 0.0 && t <= self.time.t_final) {
                            return Err(schema(
                                field,
                                format!("pulse time {t} lies outside [0, t_final = {}]", self.time.t_final),
                            ));
                        }
                        let x = t / self.time.dt;
                        if (x - x.round()).abs() > 1e-6 {
                            return Err(schema(field, format!("pulse time {t} is not a multiple of dt")));
                        }
                    }
                    if !(m.t_end > m.t_start) {
                        return Err(schema(format!("params.magnets[{j}].t_end"), "window must have t_end > t_start"));
                    }
                }
                if !(p.magnets[0].t_end < p.magnets[1].t_start) {
                    return Err(schema("params.magnets[1].t_start", "particle 2's magnet must start after particle 1's ends"));
                }
            }
            ScenarioParams::FreeGaussian(p) => {
                positive("params.sigma", p.sigma)?;
                if p.momenta.is_empty() {
                    return Err(schema("params.momenta", "need one momentum per spin component"));
                }
            }
            ScenarioParams::OscillatorCoherent(p) => positive("params.omega", p.omega)?,
            ScenarioParams::MixedWFundamental(p) => {
                positive("params.sigma", p.sigma)?;
                if p.packets.is_empty() {
                    return Err(schema("params.packets", "need at least one packet"));
                }
                for (i, pk) in p.packets.iter().enumerate() {
                    positive(&format!("params.packets[{i}].weight"), pk.weight)?;
                }
                let total: f64 = p.packets.iter().map(|p| p.weight).sum();
                if (total - 1.0).abs() > 1e-8 {
                    return Err(schema("params.packets", format!("weights sum to {total}, not 1")));
                }
            }
            ScenarioParams::RandomEntangled(p) => {
                positive("params.envelope", p.envelope)?;
                for (name, v) in [("k1", p.k1), ("k2", p.k2), ("rank", p.rank)] {
                    if v == 0 {
                        return Err(schema(format!("params.{name}"), "must be at least 1"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Physical feasibility: packets fit the box, branches separate,
    /// spectra resolve. Runs no dynamics.
    pub fn preflight(&self) -> Result<()> {
        match &self.params {
            ScenarioParams::Epr(_) => self.epr_setup()?.preflight(),
            _ => {
                let spec = self.oracle_spec()?;
                let (_, h) = crate::scenarios::oracle::build_oracle_scenario(&spec, self.seed)?;
                Propagator::new(&h, self.time.dt).map(|_| ())
            }
        }
    }

    pub fn epr_setup(&self) -> Result<EprSetup> {
        let ScenarioParams::Epr(p) = &self.params else {
            return Err(Error::Config(format!("scenario `{}` is not an EPR experiment", self.scenario)));
        };
        let axis = |j: usize| {
            let a = &self.grid.axes[j];
            Axis::new(a.min, a.max, a.points)
        };
        let magnet = |m: &MagnetConfig| Magnet {
            lambda: m.lambda,
            t_start: m.t_start,
            t_end: m.t_end,
        };
        Ok(EprSetup {
            axes: [axis(0), axis(1)],
            hbar: self.physics.hbar,
            masses: [self.physics.masses[0], self.physics.masses[1]],
            centers: p.centers,
            sigmas: p.sigmas,
            magnets: [magnet(&p.magnets[0]), magnet(&p.magnets[1])],
            t_final: self.time.t_final,
            dt: self.time.dt,
            n_runs: self.ensemble_size(),
            seed: self.seed,
            snapshot_every: self.time.snapshot_stride,
        })
    }

    pub fn oracle_spec(&self) -> Result<OracleScenario> {
        let grid = self.grid_spec()?;
        let hbar = self.physics.hbar;
        let mass = self.physics.masses[0];
        Ok(match &self.params {
            ScenarioParams::Epr(_) => {
                return Err(Error::Config("the EPR experiment is not an analytic fixture".into()));
            }
            ScenarioParams::FreeGaussian(p) => OracleScenario::FreeGaussian {
                grid,
                hbar,
                mass,
                center: p.center,
                sigma: p.sigma,
                momenta: p.momenta.clone(),
            },
            ScenarioParams::OscillatorCoherent(p) => OracleScenario::OscillatorCoherent {
                grid,
                hbar,
                mass,
                omega: p.omega,
                displacement: p.displacement,
                dt: self.time.dt,
            },
            ScenarioParams::MixedWFundamental(p) => OracleScenario::MixedWFundamental {
                grid,
                hbar,
                mass,
                sigma: p.sigma,
                packets: p.packets.iter().map(|k| (k.weight, k.center, k.momentum)).collect(),
            },
            ScenarioParams::RandomEntangled(p) => OracleScenario::RandomEntangled {
                grid,
                hbar,
                masses: [self.physics.masses[0], self.physics.masses[1]],
                k1: p.k1,
                k2: p.k2,
                rank: p.rank,
                envelope: p.envelope,
                modes: p.modes,
            },
        })
    }

    /// Spin dimension of the scenario's state.
    pub fn spin_dim(&self) -> usize {
        match &self.params {
            ScenarioParams::Epr(_) => 4,
            ScenarioParams::FreeGaussian(p) => p.momenta.len(),
            ScenarioParams::RandomEntangled(p) => p.k1 * p.k2,
            _ => 1,
        }
    }

    /// Components carried through the evolution.
    pub fn components(&self) -> usize {
        match &self.params {
            ScenarioParams::MixedWFundamental(p) => p.packets.len(),
            _ => 1,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(schema(field, format!("must be positive and finite, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EPR: &str = r#"
scenario = "epr"
seed = 7

[grid]
axes = [{ min = -16.0, max = 16.0, points = 128 }, { min = -16.0, max = 16.0, points = 128 }]

[physics]
hbar = 1.0
masses = [2.0, 2.0]

[time]
dt = 0.005
t_final = 3.0
snapshot_stride = 20

[ensemble]
n_runs = 8

[params]
centers = [0.0, 0.0]
sigmas = [1.0, 1.0]
magnets = [
  { lambda = -30.0, t_start = 0.2, t_end = 0.4 },
  { lambda = -30.0, t_start = 1.6, t_end = 1.8 },
]
"#;

    fn field_of(e: Error) -> String {
        match e {
            Error::Schema { field, .. } => field,
            other => panic!("expected a schema error, got {other}"),
        }
    }

    #[test]
    fn epr_config_parses_and_preflights() {
        let c = ScenarioConfig::parse(EPR).unwrap();
        assert_eq!(c.epr_setup().unwrap(), {
            let mut s = EprSetup::compact();
            s.n_runs = 8;
            s
        });
        c.preflight().unwrap();
        assert_eq!(c.output, OutputConfig::default());
    }

    #[test]
    fn missing_seed_is_named() {
        let text = EPR.replace("seed = 7\n", "");
        assert_eq!(field_of(ScenarioConfig::parse(&text).unwrap_err()), "seed");
    }

    #[test]
    fn nested_missing_field_is_named() {
        let text = EPR.replace("dt = 0.005\n", "");
        assert_eq!(field_of(ScenarioConfig::parse(&text).unwrap_err()), "time.dt");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = EPR.replace("hbar = 1.0", "hbar = 1.0\nplanck = 6.6");
        let field = field_of(ScenarioConfig::parse(&text).unwrap_err());
        assert!(field.starts_with("physics"), "{field}");
    }

    #[test]
    fn grid_points_must_be_power_of_two() {
        let text = EPR.replacen("points = 128", "points = 100", 1);
        assert_eq!(field_of(ScenarioConfig::parse(&text).unwrap_err()), "grid.axes");
    }

    #[test]
    fn pulse_past_final_time() {
        let text = EPR.replace("t_start = 1.6, t_end = 1.8", "t_start = 2.8, t_end = 3.5");
        assert_eq!(field_of(ScenarioConfig::parse(&text).unwrap_err()), "params.magnets[1].t_end");
    }

    #[test]
    fn wrong_ensemble_key() {
        let text = EPR.replace("n_runs = 8", "n_traj = 8");
        assert_eq!(field_of(ScenarioConfig::parse(&text).unwrap_err()), "ensemble.n_runs");
    }

    #[test]
    fn echo_round_trips() {
        let c = ScenarioConfig::parse(EPR).unwrap();
        assert_eq!(ScenarioConfig::parse(&c.to_toml()).unwrap(), c);
    }
}

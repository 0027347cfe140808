use std::path::{Path, PathBuf};

use qhplasma::radial_measures::DEFAULT_BINS;
use qhplasma::{ModelParams, SamplerConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::Failure;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "QHPLASMA_OUT";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub meanfield: MeanfieldSection,
    #[serde(default)]
    pub ed: EdSection,
    #[serde(default)]
    pub energy: EnergySection,
    #[serde(default)]
    pub phase: PhaseSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub m: Option<u64>,
    pub omega: Option<f64>,
    pub k: Option<f64>,
    pub g: Option<f64>,
    #[serde(rename = "T")]
    pub temperature: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub step_size: Option<f64>,
    pub n_burnin: Option<usize>,
    pub n_samples: Option<usize>,
    pub thinning: Option<usize>,
    pub target_acceptance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_bins: Option<usize>,
    pub r_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanfieldSection {
    pub tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdSection {
    pub l_min: Option<usize>,
    pub l_max: Option<usize>,
    pub laughlin: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    pub m: Option<Vec<u64>>,
    pub mc: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSection {
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub points: Option<usize>,
    pub mc: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }
}

/// Command-line overrides; `None` defers to the file, then to defaults.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub n: Option<usize>,
    pub m: Option<u64>,
    pub omega: Option<f64>,
    pub k: Option<f64>,
    pub g: Option<f64>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
    pub step_size: Option<f64>,
    pub n_burnin: Option<usize>,
    pub n_samples: Option<usize>,
    pub thinning: Option<usize>,
    pub target_acceptance: Option<f64>,
    pub n_bins: Option<usize>,
    pub r_max: Option<f64>,
    pub tol: Option<f64>,
    pub l_min: Option<usize>,
    pub l_max: Option<usize>,
    pub laughlin: bool,
    pub m_values: Option<Vec<u64>>,
    pub mc: bool,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub points: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub params: ModelParams,
    pub sampler: SamplerConfig,
    pub n_bins: Option<usize>,
    pub r_max: Option<f64>,
    pub tol: f64,
    pub l_min: usize,
    pub l_max: usize,
    pub laughlin: bool,
    pub m_values: Option<Vec<u64>>,
    pub mc: bool,
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn resolve(command: &str, file: FileConfig, o: Overrides) -> Result<Self, Failure> {
        let p = &file.params;
        let n = o
            .n
            .or(p.n)
            .ok_or_else(|| Failure::Usage("N is required (--N or [params] N)".into()))?;
        if n == 0 {
            return Err(Failure::Usage("N must be >= 1".into()));
        }
        let mut params = ModelParams::new(n, o.m.or(p.m).unwrap_or(0))
            .with_trap(o.omega.or(p.omega).unwrap_or(0.0), o.k.or(p.k).unwrap_or(0.0));
        params.g = o.g.or(p.g).unwrap_or(1.0);
        if let Some(t) = o.temperature.or(p.temperature) {
            params = params.with_temperature(t);
        }
        params
            .validate()
            .map_err(|e| Failure::Usage(e.to_string()))?;

        let s = &file.sampler;
        let d = SamplerConfig::default();
        let sampler = SamplerConfig {
            step_size: o.step_size.or(s.step_size).unwrap_or(d.step_size),
            n_burnin: o.n_burnin.or(s.n_burnin).unwrap_or(d.n_burnin),
            n_samples: o.n_samples.or(s.n_samples).unwrap_or(d.n_samples),
            thinning: o.thinning.or(s.thinning).unwrap_or(d.thinning),
            seed: o.seed.or(file.seed).unwrap_or(d.seed),
            target_acceptance: o
                .target_acceptance
                .or(s.target_acceptance)
                .unwrap_or(d.target_acceptance),
        };
        sampler
            .validate()
            .map_err(|e| Failure::Usage(e.to_string()))?;

        let tol = o.tol.or(file.meanfield.tol).unwrap_or(1e-10);
        if !(tol > 0.0) {
            return Err(Failure::Usage("tol must be > 0".into()));
        }
        let laughlin_l = n * (n - 1);
        let l_min = o.l_min.or(file.ed.l_min).unwrap_or(0);
        let l_max = o.l_max.or(file.ed.l_max).unwrap_or(laughlin_l + n);
        if l_min > l_max {
            return Err(Failure::Usage(format!("l_min {l_min} > l_max {l_max}")));
        }
        let k = params.k;
        let nf = n as f64;
        let omega_min = o
            .omega_min
            .or(file.phase.omega_min)
            .unwrap_or(-4.0 * k * (nf * nf + nf));
        let omega_max = o.omega_max.or(file.phase.omega_max).unwrap_or(2.0 * k * nf);
        let points = o.points.or(file.phase.points).unwrap_or(201);
        if command == "phase-diagram" {
            if k <= 0.0 {
                return Err(Failure::Usage("phase-diagram needs k > 0".into()));
            }
            if !(omega_min < omega_max) || points < 2 {
                return Err(Failure::Usage("need omega_min < omega_max and points >= 2".into()));
            }
        }
        let n_bins = o.n_bins.or(file.grid.n_bins);
        if n_bins == Some(0) {
            return Err(Failure::Usage("n_bins must be >= 1".into()));
        }
        let out_dir = o
            .out_dir
            .or(file.out_dir)
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(RunConfig {
            command: command.to_string(),
            params,
            sampler,
            n_bins,
            r_max: o.r_max.or(file.grid.r_max),
            tol,
            l_min,
            l_max,
            laughlin: o.laughlin || file.ed.laughlin.unwrap_or(false),
            m_values: o.m_values.or(file.energy.m),
            mc: o.mc || file.energy.mc.unwrap_or(false) || (command == "phase-diagram" && file.phase.mc.unwrap_or(false)),
            omega_min,
            omega_max,
            points,
            out_dir,
        })
    }

    pub fn mf_bins(&self) -> usize {
        self.n_bins.unwrap_or(DEFAULT_BINS)
    }

    /// The settings that affect this command's output.
    pub fn semantic(&self) -> Value {
        let p = &self.params;
        match self.command.as_str() {
            "meanfield" => json!({
                "command": self.command, "params": p, "n_bins": self.mf_bins(),
                "r_max": self.r_max, "tol": self.tol,
            }),
            "sample" => json!({
                "command": self.command, "params": p, "sampler": self.sampler,
                "n_bins": self.n_bins, "r_max": self.r_max,
            }),
            "ed" => json!({
                "command": self.command, "N": p.n, "l_min": self.l_min,
                "l_max": self.l_max, "laughlin": self.laughlin,
            }),
            "energy" => json!({
                "command": self.command, "params": p, "m": self.m_values, "mc": self.mc,
                "sampler": if self.mc { json!(self.sampler) } else { Value::Null },
            }),
            _ => json!({
                "command": self.command, "N": p.n, "k": p.k, "omega_min": self.omega_min,
                "omega_max": self.omega_max, "points": self.points, "mc": self.mc,
                "sampler": if self.mc { json!(self.sampler) } else { Value::Null },
            }),
        }
    }

    /// SHA-256 of the canonical JSON of [`RunConfig::semantic`].
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.semantic()).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

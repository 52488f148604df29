//! Run configuration: flags merged over an optional JSON file, then defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hopflab::noise::Grid;
use hopflab::{Error, Numerics, Params, Result};

/// Flat mirror of the command-line flags. Every field is optional so the same
/// type serves as config file, flag set and resolved configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub renorm_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
}

pub const DEFAULT_OUT: &str = "hopflab-out";

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Values set in `top` win over those in `self`.
    pub fn overlay(mut self, top: &RunConfig) -> Self {
        overlay!(
            self, top, command, a, b, alpha, beta, sigma, dt, horizon, burn_in, renorm_every, seed, threads, out,
            n, bins, checkpoints, grid
        );
        self
    }

    /// Fill every field the command uses with its default.
    pub fn resolve(mut self, command: &str) -> Self {
        let numerics = Numerics::default();
        self.command = Some(command.to_string());
        self.a.get_or_insert(1.0);
        self.b.get_or_insert(1.0);
        self.alpha.get_or_insert(1.0);
        self.beta.get_or_insert(1.0);
        self.sigma.get_or_insert(1.0);
        self.seed.get_or_insert(0);
        self.threads.get_or_insert(0);
        self.out.get_or_insert_with(|| PathBuf::from(DEFAULT_OUT));
        let integrates = !matches!(command, "bounds" | "verify") && !(command == "density" && self.horizon.is_none());
        if integrates {
            self.dt.get_or_insert(numerics.dt);
            self.burn_in.get_or_insert(numerics.burn_in);
            self.renorm_every.get_or_insert(numerics.renorm_every);
        }
        match command {
            "density" => {
                self.bins.get_or_insert(100);
            }
            "simulate" => {
                self.horizon.get_or_insert(10.0);
            }
            "lyapunov" => {
                self.horizon.get_or_insert(1e4);
            }
            "ftle" => {
                self.horizon.get_or_insert(10.0);
                self.n.get_or_insert(1000);
            }
            "pullback" => {
                self.horizon.get_or_insert(50.0);
                self.n.get_or_insert(1000);
                self.checkpoints.get_or_insert_with(|| "1,2,5,10,20".into());
            }
            "sweep" => {
                self.horizon.get_or_insert(2e3);
                self.n.get_or_insert(4);
                self.grid.get_or_insert_with(|| "0:10:17,-2:2:17".into());
            }
            _ => {}
        }
        self
    }

    pub fn params(&self) -> Result<Params> {
        Params::new(
            self.alpha.unwrap_or(1.0),
            self.beta.unwrap_or(1.0),
            self.a.unwrap_or(1.0),
            self.b.unwrap_or(1.0),
            self.sigma.unwrap_or(1.0),
        )
    }

    pub fn numerics(&self) -> Result<Numerics> {
        let mut num = Numerics::default();
        if let Some(dt) = self.dt {
            num.dt = dt;
        }
        if let Some(b) = self.burn_in {
            num.burn_in = b;
        }
        if let Some(r) = self.renorm_every {
            num.renorm_every = r;
        }
        num.validate()?;
        Ok(num)
    }

    pub fn horizon(&self) -> Result<f64> {
        self.horizon.ok_or_else(|| Error::InvalidArgument("--T is required".into()))
    }

    /// Horizons and checkpoints must be whole multiples of `dt`.
    pub fn check_grid(&self) -> Result<()> {
        let Some(dt) = self.dt else { return Ok(()) };
        for t in self.horizon.into_iter().chain(self.checkpoint_list()?) {
            Grid::new(0.0, t, dt)?;
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn checkpoint_list(&self) -> Result<Vec<f64>> {
        match &self.checkpoints {
            None => Ok(Vec::new()),
            Some(s) if s.trim().is_empty() => Ok(Vec::new()),
            Some(s) => s.split(',').map(hopflab::io::parse_f64).collect(),
        }
    }

    /// SHA-256 of the resolved configuration without the fields that cannot
    /// change results (`out`, `threads`).
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serialises");
        if let Some(m) = v.as_object_mut() {
            m.remove("out");
            m.remove("threads");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

//! Run configuration shared by all subcommands. Values come from flags and
//! are then overridden by an optional TOML config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use doafuse_core::sim::{default_meeting_room, DropoutPolicy, Scenario, CHAIR_POINTS, TABLE_POINTS};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Affine,
    AffineMissing,
    Pca,
    PcaToRoom,
    Reference,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Affine => "affine",
            Method::AffineMissing => "affine-missing",
            Method::Pca => "pca",
            Method::PcaToRoom => "pca-to-room",
            Method::Reference => "reference",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Named calibration point sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subset {
    Table,
    Chair,
    All,
}

impl Subset {
    pub fn points(self) -> Vec<u32> {
        match self {
            Subset::Table => TABLE_POINTS.to_vec(),
            Subset::Chair => CHAIR_POINTS.to_vec(),
            Subset::All => TABLE_POINTS.iter().chain(&CHAIR_POINTS).copied().collect(),
        }
    }
}

/// `none`, `one-of:P` or `independent:P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutArg(pub DropoutPolicy);

impl FromStr for DropoutArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let prob = |p: &str| -> Result<f64, String> {
            let v: f64 = p.parse().map_err(|_| format!("bad probability `{p}`"))?;
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(format!("probability {v} outside [0, 1]"))
            }
        };
        match s.split_once(':') {
            None if s == "none" => Ok(DropoutArg(DropoutPolicy::None)),
            Some(("one-of", p)) => Ok(DropoutArg(DropoutPolicy::OneOf { probability: prob(p)? })),
            Some(("independent", p)) => Ok(DropoutArg(DropoutPolicy::Independent { probability: prob(p)? })),
            _ => Err(format!("dropout must be none, one-of:P or independent:P, got `{s}`")),
        }
    }
}

impl<'de> Deserialize<'de> for DropoutArg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Every setting a subcommand may read. Unset fields fall back to the
/// subcommand's defaults.
#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario TOML; the built-in five-array room when absent.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Named calibration point set.
    #[arg(long, value_enum)]
    pub subset: Option<Subset>,
    /// Explicit calibration point ids; replaces `subset`.
    #[arg(long, value_delimiter = ',')]
    pub points: Option<Vec<u32>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trajectory name from the scenario [default: rectangle-1234].
    #[arg(long)]
    pub trajectory: Option<String>,
    /// Angular DOA noise in degrees.
    #[arg(long)]
    pub noise_deg: Option<f64>,
    /// Snap simulated DOAs to the search grid.
    #[arg(long)]
    pub quantize: Option<bool>,
    /// none, one-of:P or independent:P.
    #[arg(long)]
    pub dropout: Option<DropoutArg>,
    /// Simulated observation period [default: 64].
    #[arg(long)]
    pub period_ms: Option<i64>,
    /// Seconds spent at each calibration point [default: 10].
    #[arg(long)]
    pub dwell_s: Option<f64>,
    /// Room coordinates used for locations, 2 or 3 [default: 2].
    #[arg(long)]
    pub room_dim: Option<usize>,
    /// PCA components kept [default: 2].
    #[arg(long)]
    pub components: Option<usize>,
    /// Calibration point used as the reference location.
    #[arg(long)]
    pub reference_point: Option<u32>,
    /// Time bin for joining arrays [default: 64].
    #[arg(long)]
    pub bin_ms: Option<i64>,
    /// Per-array clock offsets, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub offsets_ms: Option<Vec<i64>>,
    /// Ground-truth radius around a corner for corner estimates [default: 0.05].
    #[arg(long)]
    pub corner_radius: Option<f64>,
    /// Calibration observations CSV.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Wire-format capture.
    #[arg(long)]
    pub capture: Option<PathBuf>,
    /// Ground-truth CSV.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Mapped estimates CSV.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
    /// Affine model file.
    #[arg(long)]
    pub affine: Option<PathBuf>,
    /// PCA model file.
    #[arg(long)]
    pub pca: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML report; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// SVG scatter of the estimates.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Writes the effective scenario as TOML.
    #[arg(long)]
    pub scenario_out: Option<PathBuf>,
}

pub const DEFAULT_TRAJECTORY: &str = "rectangle-1234";

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl RunConfig {
    /// Fields set in `file` replace those in `self`.
    pub fn overridden_by(mut self, file: RunConfig) -> Self {
        overlay!(
            self, file, scenario, method, subset, points, seed, trajectory, noise_deg, quantize, dropout,
            period_ms, dwell_s, room_dim, components, reference_point, bin_ms, offsets_ms, corner_radius,
            calibration, capture, truth, estimates, affine, pca, out, report, svg, scenario_out
        );
        self
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// The scenario file (or the built-in layout) with overrides applied.
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let mut scn = match &self.scenario {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Scenario::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => default_meeting_room(),
        };
        if let Some(s) = self.seed {
            scn.seed = s;
        }
        if let Some(n) = self.noise_deg {
            scn.noise_deg = n;
        }
        if let Some(q) = self.quantize {
            scn.quantize = q;
        }
        if let Some(d) = self.dropout {
            scn.dropout = d.0;
        }
        scn.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(scn)
    }

    pub fn period_ms(&self) -> Result<i64, CliError> {
        match self.period_ms.unwrap_or(64) {
            p if p > 0 => Ok(p),
            p => Err(CliError::Config(format!("period_ms must be positive, got {p}"))),
        }
    }

    pub fn room_dim(&self) -> Result<usize, CliError> {
        match self.room_dim.unwrap_or(2) {
            n @ 2..=3 => Ok(n),
            n => Err(CliError::Config(format!("room_dim must be 2 or 3, got {n}"))),
        }
    }

    pub fn components(&self) -> Result<usize, CliError> {
        match self.components.unwrap_or(2) {
            0 => Err(CliError::Config("components must be positive".into())),
            j => Ok(j),
        }
    }

    pub fn trajectory(&self) -> &str {
        self.trajectory.as_deref().unwrap_or(DEFAULT_TRAJECTORY)
    }

    pub fn bin_ms(&self) -> Result<i64, CliError> {
        match self.bin_ms.unwrap_or(64) {
            b if b > 0 => Ok(b),
            b => Err(CliError::Config(format!("bin_ms must be positive, got {b}"))),
        }
    }

    pub fn dwell_s(&self) -> Result<f64, CliError> {
        match self.dwell_s.unwrap_or(10.0) {
            d if d > 0.0 && d.is_finite() => Ok(d),
            d => Err(CliError::Config(format!("dwell_s must be positive, got {d}"))),
        }
    }

    /// Calibration point ids: explicit `points`, else the named subset.
    pub fn point_ids(&self) -> Vec<u32> {
        match &self.points {
            Some(p) => p.clone(),
            None => self.subset.unwrap_or(Subset::All).points(),
        }
    }

    pub fn require<'a, T>(&self, value: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        value.as_ref().ok_or_else(|| CliError::Config(format!("missing required setting `{name}`")))
    }

    /// Inputs each mapping method needs, checked before any work is done.
    pub fn validate_map(&self) -> Result<Method, CliError> {
        let method = *self.require(&self.method, "method")?;
        self.require(&self.capture, "capture")?;
        self.require(&self.out, "out")?;
        let need_affine = matches!(method, Method::Affine | Method::PcaToRoom | Method::Reference);
        let need_pca = matches!(method, Method::Pca | Method::PcaToRoom);
        let need_reference = matches!(method, Method::PcaToRoom | Method::Reference);
        if need_affine {
            self.require(&self.affine, "affine")?;
        }
        if need_pca {
            self.require(&self.pca, "pca")?;
        }
        if method == Method::AffineMissing || need_reference {
            self.require(&self.calibration, "calibration")?;
        }
        if need_reference {
            self.require(&self.reference_point, "reference_point")?;
        }
        Ok(method)
    }
}

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rfpgs::channel::ArrayConfig;
use rfpgs::geomtrain::GeomTrainConfig;
use rfpgs::oracle::{BoxSceneConfig, Light, MeasurementModel, TraceOptions};
use rfpgs::rftrain::RfTrainConfig;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const SCHEMA_VERSION: u32 = 1;

/// Angle given as degrees (`6`, `"6deg"`) or radians (`"0.1rad"`); stored in
/// degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Angle(pub f64);

impl Angle {
    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        let deg = match Raw::deserialize(d)? {
            Raw::Num(v) => v,
            Raw::Int(v) => v as f64,
            Raw::Text(t) => parse_angle(&t).map_err(serde::de::Error::custom)?,
        };
        Ok(Angle(deg))
    }
}

fn parse_angle(t: &str) -> Result<f64> {
    let t = t.trim();
    let (num, to_deg) = if let Some(v) = t.strip_suffix("deg") {
        (v, 1.0)
    } else if let Some(v) = t.strip_suffix("rad") {
        (v, 180.0 / std::f64::consts::PI)
    } else {
        (t, 1.0)
    };
    let v: f64 = num.trim().parse().map_err(|_| anyhow!("bad angle {t:?}"))?;
    Ok(v * to_deg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeomInit {
    /// Points sampled on the scene surfaces, standing in for a structure-from-motion cloud.
    Facets,
    /// Uniform points inside the scene bounding box.
    Bbox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub scene: BoxSceneConfig,
    /// Training pose count; overrides `scene.n_train`.
    pub samples: Option<usize>,
    pub rx_size: [usize; 2],
    pub tx_size: [usize; 2],
    pub visual_size: [usize; 2],
    /// Also write spectra blurred by a scanning beam of this beamwidth.
    pub psf_beamwidth: Option<Angle>,
    pub psf_truncate_sigma: f64,
    pub trace: TraceOptions,
    pub light: Light,
    /// Perturb the traced MPCs like a channel sounder would before building spectra.
    pub measurement: Option<MeasurementModel>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            scene: BoxSceneConfig::default(),
            samples: None,
            rx_size: [180, 90],
            tx_size: [90, 45],
            visual_size: [96, 48],
            psf_beamwidth: None,
            psf_truncate_sigma: 3.0,
            trace: TraceOptions::default(),
            light: Light::Headlight,
            measurement: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainData {
    /// Use only the first `samples` training poses.
    pub samples: Option<usize>,
    /// Train on the PSF-blurred spectra.
    pub psf: bool,
    pub init: GeomInit,
    pub sh_degree: usize,
}

impl Default for TrainData {
    fn default() -> Self {
        TrainData {
            samples: None,
            psf: false,
            init: GeomInit::Facets,
            sh_degree: 3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneData {
    /// Dataset with the measured samples; defaults to `data`.
    pub data: Option<PathBuf>,
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub split: String,
    pub metric: Vec<String>,
    /// Compare against the blurred spectra instead of the clean ones.
    pub psf: bool,
    /// Write ground truth | prediction PNG panels.
    pub panels: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split: "test".into(),
            metric: vec!["psnr".into(), "ssim".into()],
            psf: false,
            panels: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub split: String,
    pub tx: bool,
    pub panels: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            split: "test".into(),
            tx: true,
            panels: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamformConfig {
    pub split: String,
    pub array: ArrayConfig,
}

impl Default for BeamformConfig {
    fn default() -> Self {
        BeamformConfig {
            split: "test".into(),
            array: ArrayConfig::default(),
        }
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_data() -> PathBuf {
    PathBuf::from("data")
}

fn default_floor() -> f64 {
    -160.0
}

/// Full parameter tree of one command invocation. Every stage seed is tied
/// to `seed` during resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    /// Command the config was resolved for; set in echoed configs.
    #[serde(default)]
    pub command: Option<String>,
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Dataset directory written by `gen`.
    #[serde(default = "default_data")]
    pub data: PathBuf,
    /// Input model checkpoint for stages after geometry training.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Trainer checkpoint to continue from.
    #[serde(default)]
    pub resume: Option<PathBuf>,
    #[serde(default = "default_floor")]
    pub floor_db: f64,
    #[serde(default)]
    pub gen: GenConfig,
    #[serde(default)]
    pub train: TrainData,
    #[serde(default)]
    pub geom: GeomTrainConfig,
    #[serde(default)]
    pub rf: RfTrainConfig,
    #[serde(default)]
    pub finetune: FinetuneData,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub beamform: BeamformConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Gen,
    TrainGeom,
    TrainRf,
    Finetune,
    Render,
    Eval,
    Beamform,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Gen => "gen",
            Command::TrainGeom => "train-geom",
            Command::TrainRf => "train-rf",
            Command::Finetune => "finetune",
            Command::Render => "render",
            Command::Eval => "eval",
            Command::Beamform => "beamform",
        })
    }
}

/// Maps a flag to its key path; short forms resolve per command.
fn key_path(cmd: Command, flag: &str) -> Vec<String> {
    let flag = flag.replace('-', "_");
    let short: Option<&str> = match (flag.as_str(), cmd) {
        ("samples", Command::Gen) => Some("gen.samples"),
        ("samples", Command::TrainRf | Command::TrainGeom) => Some("train.samples"),
        ("samples", Command::Finetune) => Some("finetune.samples"),
        ("psf_beamwidth", _) => Some("gen.psf_beamwidth"),
        ("iterations", Command::TrainGeom) => Some("geom.iterations"),
        ("iterations", Command::TrainRf) => Some("rf.iterations"),
        ("iterations", Command::Finetune) => Some("rf.finetune_cap"),
        ("metric", _) => Some("eval.metric"),
        ("split", Command::Render) => Some("render.split"),
        ("split", Command::Eval) => Some("eval.split"),
        ("split", Command::Beamform) => Some("beamform.split"),
        _ => None,
    };
    short.unwrap_or(&flag).split('.').map(str::to_string).collect()
}

fn parse_value(path: &[String], raw: &str) -> toml::Value {
    if path.last().is_some_and(|k| k == "metric") {
        return toml::Value::Array(raw.split(',').map(|s| toml::Value::String(s.trim().to_string())).collect());
    }
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_path(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().ok_or_else(|| anyhow!("empty override key"))?;
    let mut table = root;
    for p in parents {
        let entry = table.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override key {} crosses a non-table value", path.join(".")))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

fn has_path(root: &toml::Table, path: &[&str]) -> bool {
    let mut t = root;
    for (i, p) in path.iter().enumerate() {
        match t.get(*p) {
            Some(toml::Value::Table(next)) if i + 1 < path.len() => t = next,
            Some(_) if i + 1 == path.len() => return true,
            _ => return false,
        }
    }
    false
}

/// Loads the config file, applies `--key value` overrides and resolves
/// derived fields.
pub fn resolve(cmd: Command, file: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading config {}", file.display()))?;
    let mut table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", file.display()))?;
    for (k, v) in overrides {
        let path = key_path(cmd, k);
        set_path(&mut table, &path, parse_value(&path, v))?;
    }
    // a short geometry run still needs its refinement phase and densification window inside it
    if cmd == Command::TrainGeom && has_path(&table, &["geom", "iterations"]) {
        let n = table["geom"]["iterations"]
            .as_integer()
            .ok_or_else(|| anyhow!("geom.iterations must be an integer"))?
            .max(0) as usize;
        if !has_path(&table, &["geom", "refine_start"]) {
            set_path(&mut table, &["geom".into(), "refine_start".into()], toml::Value::Integer((n * 9 / 10) as i64))?;
        }
        if !has_path(&table, &["geom", "densify", "until"]) {
            set_path(
                &mut table,
                &["geom".into(), "densify".into(), "until".into()],
                toml::Value::Integer((n / 2) as i64),
            )?;
        }
    }
    let mut cfg: RunConfig = table.try_into().with_context(|| format!("invalid config {}", file.display()))?;
    if cfg.schema_version != SCHEMA_VERSION {
        bail!("config schema_version {} is not supported (expected {SCHEMA_VERSION})", cfg.schema_version);
    }
    if let Some(c) = &cfg.command {
        if c != &cmd.to_string() {
            bail!("config was resolved for `{c}`, not `{cmd}`");
        }
    }
    cfg.command = Some(cmd.to_string());
    cfg.gen.scene.seed = cfg.seed;
    cfg.geom.seed = cfg.seed;
    cfg.rf.seed = cfg.seed;
    if let Some(n) = cfg.gen.samples {
        cfg.gen.scene.n_train = n;
    }
    cfg.gen.samples = None;
    if !cfg.eval.metric.iter().all(|m| matches!(m.as_str(), "psnr" | "ssim" | "ratio")) {
        bail!("unknown metric in {:?} (expected psnr, ssim, ratio)", cfg.eval.metric);
    }
    Ok(cfg)
}

/// Writes the resolved config to `<out_dir>/config.toml`.
pub fn echo(cfg: &RunConfig) -> Result<()> {
    let text = toml::to_string_pretty(cfg).context("serializing resolved config")?;
    let path = cfg.out_dir.join("config.toml");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

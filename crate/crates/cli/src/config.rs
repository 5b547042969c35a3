//! Run configuration: a TOML file, an optional preset, then `--section.key
//! value` overrides, in that order.

use std::path::{Path, PathBuf};

use macroplace::bookshelf::ClassifyOptions;
use macroplace::env::{Backbone, EnvConfig};
use macroplace::render::RenderStyle;
use macroplace::stdplace::{ExternalPlacer, QuadraticConfig, QuadraticPlacer, StandardCellPlacer};
use macroplace_rl::{PolicyConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable naming a config file when `--config` is absent.
pub const CONFIG_ENV: &str = "MACROPLACE_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    GatRi,
    GatNoRi,
    GcnRi,
    GcnNoRi,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::GatRi, Preset::GatNoRi, Preset::GcnRi, Preset::GcnNoRi];

    pub fn name(self) -> &'static str {
        match self {
            Preset::GatRi => "gat_ri",
            Preset::GatNoRi => "gat_no_ri",
            Preset::GcnRi => "gcn_ri",
            Preset::GcnNoRi => "gcn_no_ri",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown preset `{s}` (expected gat_ri, gat_no_ri, gcn_ri or gcn_no_ri)")))
    }

    pub fn backbone(self) -> Backbone {
        match self {
            Preset::GatRi | Preset::GatNoRi => Backbone::Gat,
            Preset::GcnRi | Preset::GcnNoRi => Backbone::Gcn,
        }
    }

    pub fn immediate_reward(self) -> bool {
        matches!(self, Preset::GatRi | Preset::GcnRi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacerKind {
    #[default]
    Quadratic,
    External,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct StdplaceSettings {
    pub placer: PlacerKind,
    pub quadratic: QuadraticConfig,
    pub external: Option<ExternalPlacer>,
}

impl StdplaceSettings {
    pub fn build(&self) -> Result<Box<dyn StandardCellPlacer>, CliError> {
        match self.placer {
            PlacerKind::Quadratic => Ok(Box::new(QuadraticPlacer::new(self.quadratic))),
            PlacerKind::External => match &self.external {
                Some(e) => Ok(Box::new(e.clone())),
                None => Err(CliError::Config("stdplace.placer = \"external\" needs a [stdplace.external] table".into())),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub aux: Option<PathBuf>,
    pub pl: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { aux: None, pl: None, checkpoint: None, out_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; copied into `env.seed` and `train.seed`.
    pub seed: u64,
    pub preset: Option<Preset>,
    pub classify: ClassifyOptions,
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub train: TrainConfig,
    pub stdplace: StdplaceSettings,
    pub render: RenderStyle,
    pub paths: Paths,
}

impl RunConfig {
    /// Load `file` (if any), apply `preset` and `overrides`, then validate
    /// numeric ranges.
    pub fn load(file: Option<&Path>, preset: Option<&str>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        if let Some(p) = preset {
            table.insert("preset".into(), toml::Value::String(Preset::parse(p)?.name().into()));
        }
        for (key, value) in overrides {
            set_key(&mut table, key, value)?;
        }
        let mut config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        config.resolve();
        config.validate()?;
        Ok(config)
    }

    /// Fold the preset and root seed into the component configs.
    fn resolve(&mut self) {
        if let Some(p) = self.preset {
            self.env.backbone = p.backbone();
            self.env.use_immediate_reward = p.immediate_reward();
        }
        self.env.seed = self.seed;
        self.train.seed = self.seed;
        self.policy.backbone = self.env.backbone;
        self.policy.grid_size = self.env.grid_size;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.env.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.render.canvas_px < 64 {
            return Err(CliError::Config("render.canvas_px must be at least 64".into()));
        }
        let p = &self.policy;
        if p.layers == 0 || p.heads == 0 || p.head_dim == 0 || p.meta_dim == 0 || p.value_hidden == 0 {
            return Err(CliError::Config("policy dimensions must be positive".into()));
        }
        if !(self.classify.macro_area_threshold > 0.0) {
            return Err(CliError::Config("classify.macro_area_threshold must be positive".into()));
        }
        Ok(())
    }

    /// The benchmark path, which must exist.
    pub fn aux(&self) -> Result<&Path, CliError> {
        let aux = self
            .paths
            .aux
            .as_deref()
            .ok_or_else(|| CliError::Config("no benchmark given (pass AUX or set paths.aux)".into()))?;
        existing(aux)
    }
}

pub fn existing(path: &Path) -> Result<&Path, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Config(format!("{} does not exist", path.display())))
    }
}

/// Interpret `raw` as a TOML value; bare words become strings.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_key(table: &mut toml::Table, dotted: &str, raw: &str) -> Result<(), CliError> {
    let mut parts: Vec<&str> = dotted.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| CliError::Config(format!("bad key `{dotted}`")))?;
    let mut t = table;
    for p in parts {
        let entry = t.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{dotted}` is not a table")))?;
    }
    t.insert(last.to_string(), parse_value(raw));
    Ok(())
}

/// Pull `--section.key value` and `--section.key=value` pairs (any flag
/// whose name contains a dot) out of `args`.
pub fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), CliError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--").filter(|f| f.split('=').next().is_some_and(|k| k.contains('.'))) else {
            rest.push(arg);
            continue;
        };
        match flag.split_once('=') {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().ok_or_else(|| CliError::Config(format!("--{flag} needs a value")))?;
                overrides.push((flag.to_string(), v));
            }
        }
    }
    Ok((rest, overrides))
}

/// `--config`, else `$MACROPLACE_CONFIG`.
pub fn config_path(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
}

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::graph::UnifiedGraph;
use crate::pass::PassContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageType {
    Collect,
    Load,
    Evolve,
    Assimilate,
    Reuse,
}

impl StageType {
    pub fn name(self) -> &'static str {
        match self {
            StageType::Collect => "collect",
            StageType::Load => "load",
            StageType::Evolve => "evolve",
            StageType::Assimilate => "assimilate",
            StageType::Reuse => "reuse",
        }
    }

    /// Assimilate and reuse act on the cross-slice model, the others on
    /// one slice at a time.
    pub fn is_model_phase(self) -> bool {
        matches!(self, StageType::Assimilate | StageType::Reuse)
    }
}

impl fmt::Display for StageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateAction {
    Stats,
    DotExport,
    ReportCheck,
    TrialBalance,
}

/// One loadable table of a slice. Either `spec` (a table spec file) or
/// `delimiter` (free delimited text, columns named by position) is given.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub source: String,
    pub system: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delimiter: Option<String>,
    /// Table name for delimited text; defaults to the file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
}

impl TableEntry {
    pub fn table_name(&self) -> String {
        self.table.clone().unwrap_or_else(|| {
            Path::new(&self.source)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    pub name: String,
    pub sources: Vec<String>,
    #[serde(default)]
    pub tables: Vec<TableEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BUnitConfig {
    pub kind: String,
    #[serde(default)]
    pub params: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    #[serde(rename = "type")]
    pub stage_type: StageType,
    pub bunits: Vec<BUnitConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    pub after: usize,
    pub actions: Vec<GateAction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub name: String,
    pub slices: Vec<SliceConfig>,
    pub stages: Vec<StageConfig>,
    pub gates: Vec<GateConfig>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// The exact text the config was parsed from.
    #[serde(skip)]
    pub text: String,
}

impl PipelineConfig {
    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }

    /// Every file the config refers to besides the sources.
    pub fn parameter_files(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for s in &self.slices {
            out.extend(s.tables.iter().filter_map(|t| t.spec.clone()));
        }
        for st in &self.stages {
            for b in &st.bunits {
                out.extend(b.params.iter().cloned());
            }
        }
        out
    }

    pub fn gates_after(&self, stage: usize) -> impl Iterator<Item = (usize, &GateConfig)> {
        self.gates
            .iter()
            .enumerate()
            .filter(move |(_, g)| g.after == stage)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("{path}: {found} stage after a {previous} stage")]
    StageOrderViolation {
        path: String,
        found: StageType,
        previous: StageType,
    },
    #[error("{path}: unknown bUnit kind {kind:?}")]
    UnknownBUnit { path: String, kind: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&lines.join("; "))
    }
}

impl std::error::Error for ConfigErrors {}

/// A test or extension pass: maps a slice graph to its successor.
pub type CustomPass = fn(&UnifiedGraph, &mut PassContext<'_>) -> Result<UnifiedGraph, String>;

struct Builtin {
    kind: &'static str,
    stages: &'static [StageType],
    min_params: usize,
    max_params: usize,
}

const MANY: usize = usize::MAX;

const BUILTINS: [Builtin; 15] = {
    use StageType::*;
    const fn b(kind: &'static str, stages: &'static [StageType], min_params: usize, max_params: usize) -> Builtin {
        Builtin {
            kind,
            stages,
            min_params,
            max_params,
        }
    }
    [
        b("collect", &[Collect], 0, 0),
        b("load_table", &[Load], 0, 0),
        b("load_delimited_text", &[Load], 0, 0),
        b("register_report", &[Load, Evolve], 1, MANY),
        b("snapshot_report", &[Load, Evolve], 0, 0),
        b("clean_pass", &[Evolve], 0, 0),
        b("integrate_sources", &[Evolve], 1, 1),
        b("infer_foreign_keys", &[Evolve], 0, 1),
        b("unify_types", &[Evolve], 0, 0),
        b("apply_seed", &[Evolve], 0, 0),
        b("identity_merge", &[Evolve], 1, 1),
        b("dere_transform", &[Evolve], 0, 0),
        b("extract_definitions", &[Evolve], 0, 0),
        b("assimilate", &[Assimilate], 0, 0),
        b("reuse_export", &[Reuse], 0, 1),
    ]
};

/// Known bUnit kinds: the built-in passes plus any registered custom ones.
#[derive(Clone, Default)]
pub struct BUnitRegistry {
    custom: BTreeMap<String, (StageType, CustomPass)>,
}

impl fmt::Debug for BUnitRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.custom.keys()).finish()
    }
}

impl BUnitRegistry {
    pub fn standard() -> Self {
        Self::default()
    }

    /// Registers a custom pass for evolve or load stages.
    pub fn with_custom(mut self, kind: &str, stage: StageType, pass: CustomPass) -> Self {
        assert!(
            !stage.is_model_phase() && stage != StageType::Collect,
            "custom passes run on slice graphs"
        );
        self.custom.insert(kind.to_string(), (stage, pass));
        self
    }

    pub fn custom(&self, kind: &str) -> Option<CustomPass> {
        self.custom.get(kind).map(|(_, p)| *p)
    }

    fn check(&self, kind: &str, stage: StageType, params: usize, path: &str, errors: &mut Vec<ConfigError>) {
        if let Some((allowed, _)) = self.custom.get(kind) {
            if *allowed != stage {
                errors.push(ConfigError::SchemaViolation {
                    path: format!("{path}.kind"),
                    message: format!("{kind} runs in {allowed} stages, not {stage}"),
                });
            }
            return;
        }
        let Some(b) = BUILTINS.iter().find(|b| b.kind == kind) else {
            errors.push(ConfigError::UnknownBUnit {
                path: format!("{path}.kind"),
                kind: kind.to_string(),
            });
            return;
        };
        if !b.stages.contains(&stage) {
            let names: Vec<&str> = b.stages.iter().map(|s| s.name()).collect();
            errors.push(ConfigError::SchemaViolation {
                path: format!("{path}.kind"),
                message: format!("{kind} runs in {} stages, not {stage}", names.join("/")),
            });
        }
        if params < b.min_params || params > b.max_params {
            let expected = match (b.min_params, b.max_params) {
                (a, z) if a == z => format!("{a}"),
                (a, MANY) => format!("at least {a}"),
                (a, z) => format!("{a} to {z}"),
            };
            errors.push(ConfigError::SchemaViolation {
                path: format!("{path}.params"),
                message: format!("{kind} takes {expected} parameter files, found {params}"),
            });
        }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name != "model"
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Parses and checks a config. `base_dir` is left empty; see
/// [`super::load_config`].
pub fn validate_config(text: &str, registry: &BUnitRegistry) -> Result<PipelineConfig, ConfigErrors> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut config: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigErrors(vec![ConfigError::SchemaViolation {
            path: if path == "." { "$".into() } else { format!("$.{path}") },
            message: e.into_inner().to_string(),
        }])
    })?;
    config.text = text.to_string();

    let mut errors = Vec::new();
    let schema = |errors: &mut Vec<ConfigError>, path: String, message: &str| {
        errors.push(ConfigError::SchemaViolation {
            path,
            message: message.to_string(),
        })
    };
    if config.name.trim().is_empty() {
        schema(&mut errors, "$.name".into(), "must not be empty");
    }
    if config.slices.is_empty() {
        schema(&mut errors, "$.slices".into(), "at least one slice is required");
    }
    let mut names = BTreeSet::new();
    for (i, s) in config.slices.iter().enumerate() {
        let path = format!("$.slices[{i}]");
        if !valid_name(&s.name) {
            schema(
                &mut errors,
                format!("{path}.name"),
                "slice names use letters, digits, '-', '_' or '.' and may not be \"model\"",
            );
        }
        if !names.insert(s.name.as_str()) {
            schema(&mut errors, format!("{path}.name"), "duplicate slice name");
        }
        for (j, t) in s.tables.iter().enumerate() {
            let tpath = format!("{path}.tables[{j}]");
            match (&t.spec, &t.delimiter) {
                (Some(_), None) => {}
                (None, Some(d)) if d.len() == 1 => {}
                (None, Some(_)) => schema(&mut errors, format!("{tpath}.delimiter"), "must be a single byte"),
                _ => schema(&mut errors, tpath, "exactly one of spec or delimiter is required"),
            }
        }
    }
    if config.stages.is_empty() {
        schema(&mut errors, "$.stages".into(), "at least one stage is required");
    }
    let mut previous: Option<StageType> = None;
    for (i, st) in config.stages.iter().enumerate() {
        let path = format!("$.stages[{i}]");
        if let Some(p) = previous {
            if st.stage_type < p {
                errors.push(ConfigError::StageOrderViolation {
                    path: format!("{path}.type"),
                    found: st.stage_type,
                    previous: p,
                });
            }
        }
        previous = Some(previous.map_or(st.stage_type, |p| p.max(st.stage_type)));
        if st.bunits.is_empty() {
            schema(&mut errors, format!("{path}.bunits"), "at least one bUnit is required");
        }
        for (j, b) in st.bunits.iter().enumerate() {
            registry.check(&b.kind, st.stage_type, b.params.len(), &format!("{path}.bunits[{j}]"), &mut errors);
        }
    }
    for (i, g) in config.gates.iter().enumerate() {
        let path = format!("$.gates[{i}]");
        if g.after >= config.stages.len() {
            schema(&mut errors, format!("{path}.after"), "refers to a stage that does not exist");
        }
        if g.actions.is_empty() {
            schema(&mut errors, format!("{path}.actions"), "at least one action is required");
        }
        let distinct: BTreeSet<_> = g.actions.iter().collect();
        if distinct.len() != g.actions.len() {
            schema(&mut errors, format!("{path}.actions"), "actions repeat");
        }
    }
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(ConfigErrors(errors))
    }
}

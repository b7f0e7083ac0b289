//! Run configuration, loadable from TOML.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::HttpConfig;
use crate::plan::{SkillKind, DEFAULT_MAX_PLAN_LEN, DEFAULT_OBSERVATION_BUDGET};
use crate::sandbox::SandboxLimits;
use crate::skills::{SkillConfig, SkillRegistry, DEFAULT_WRITING_BUDGET};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("configuration error: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    #[serde(rename = "goalact")]
    GoalAct,
    PlanAndSolve,
    PlanAndExecute,
    #[serde(rename = "react")]
    ReAct,
    #[serde(rename = "codeact")]
    CodeAct,
}

impl MethodKind {
    pub const ALL: [MethodKind; 5] = [
        MethodKind::GoalAct,
        MethodKind::PlanAndSolve,
        MethodKind::PlanAndExecute,
        MethodKind::ReAct,
        MethodKind::CodeAct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::GoalAct => "goalact",
            MethodKind::PlanAndSolve => "plan_and_solve",
            MethodKind::PlanAndExecute => "plan_and_execute",
            MethodKind::ReAct => "react",
            MethodKind::CodeAct => "codeact",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                ConfigError(format!(
                    "unknown method {s:?} (expected one of goalact, plan_and_solve, plan_and_execute, react, codeact)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    NoGlobalPlan,
    NoSearching,
    NoCoding,
    NoWriting,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::NoGlobalPlan,
        Ablation::NoSearching,
        Ablation::NoCoding,
        Ablation::NoWriting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::NoGlobalPlan => "no_global_plan",
            Ablation::NoSearching => "no_searching",
            Ablation::NoCoding => "no_coding",
            Ablation::NoWriting => "no_writing",
        }
    }

    pub fn disabled_skill(self) -> Option<SkillKind> {
        match self {
            Ablation::NoGlobalPlan => None,
            Ablation::NoSearching => Some(SkillKind::Searching),
            Ablation::NoCoding => Some(SkillKind::Coding),
            Ablation::NoWriting => Some(SkillKind::Writing),
        }
    }
}

impl FromStr for Ablation {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ConfigError(format!("unknown ablation {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomSkill {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    pub temperature: f64,
    pub max_iterations: u32,
    pub exemplar_count: usize,
    pub observation_budget: usize,
    pub max_plan_len: usize,
    pub writing_budget: usize,
    pub planner_repair_retries: u32,
    pub sandbox: SandboxLimits,
    pub ablations: BTreeSet<Ablation>,
    pub skills: Vec<CustomSkill>,
    pub http: HttpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o-mini".into(),
            temperature: 0.0,
            max_iterations: 10,
            exemplar_count: 2,
            observation_budget: DEFAULT_OBSERVATION_BUDGET,
            max_plan_len: DEFAULT_MAX_PLAN_LEN,
            writing_budget: DEFAULT_WRITING_BUDGET,
            planner_repair_retries: 1,
            sandbox: SandboxLimits::default(),
            ablations: BTreeSet::new(),
            skills: Vec::new(),
            http: HttpConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_iterations == 0 {
            return Err(ConfigError("max_iterations must be at least 1".into()));
        }
        if self.max_plan_len < 2 {
            return Err(ConfigError("max_plan_len must be at least 2".into()));
        }
        if self.observation_budget < 32 {
            return Err(ConfigError("observation_budget must be at least 32 bytes".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ConfigError("temperature must be within 0..=2".into()));
        }
        self.sandbox.validate().map_err(ConfigError)?;
        self.registry().map(|_| ())
    }

    pub fn skill_config(&self) -> SkillConfig {
        SkillConfig {
            sandbox: self.sandbox,
            writing_budget: self.writing_budget,
        }
    }

    /// Built-in skills plus configured custom skills, minus ablated ones.
    pub fn registry(&self) -> Result<SkillRegistry, ConfigError> {
        let mut r = SkillRegistry::default();
        for s in &self.skills {
            let kind = SkillKind::from_name(&s.name).map_err(|e| ConfigError(e.to_string()))?;
            r.register_skill(kind, s.description.clone())
                .map_err(|e| ConfigError(e.to_string()))?;
        }
        for a in &self.ablations {
            if let Some(k) = a.disabled_skill() {
                r.set_enabled(&k, false).map_err(|e| ConfigError(e.to_string()))?;
            }
        }
        if !r.has_executable_skill() {
            return Err(ConfigError("every executable skill is disabled".into()));
        }
        Ok(r)
    }

    /// Report label: the method name, suffixed with any ablations.
    pub fn method_label(&self, method: MethodKind) -> String {
        let mut label = method.name().to_string();
        if method == MethodKind::GoalAct {
            for a in &self.ablations {
                label.push('-');
                label.push_str(a.name());
            }
        }
        label
    }

    /// Stable hash of the effective configuration (credentials excluded).
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

//! Declarative pipeline plans: a TOML description of stages, worker
//! counts, pinning, capacity and wait/copy modes. Lets tools reconfigure
//! the pipeline without recompiling.
//!
//! ```toml
//! entry = "source.generate"
//! capacity = 2
//! wait = "passive"
//! copy = "copyless"
//!
//! [[stage]]
//! first = ["source.generate"]
//! last = ["channel.add_noise"]
//! workers = 1
//! pin = [0]
//! ```

use serde::{Deserialize, Serialize};

use crate::error::PlanConfigError;
use crate::graph::{Graph, TaskId};
use crate::pipeline::{CopyMode, PipelinePlan, StageSpec, WaitMode};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageConfig {
    pub first: Vec<String>,
    pub last: Vec<String>,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pin: Option<Vec<usize>>,
}

fn one() -> usize {
    1
}

fn default_capacity() -> usize {
    1
}

/// Serializable pipeline plan; task references are `module.task` names.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanConfig {
    pub entry: String,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    #[serde(default)]
    pub wait: WaitMode,
    #[serde(default)]
    pub copy: CopyMode,
    pub stage: Vec<StageConfig>,
}

impl PlanConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, PlanConfigError> {
        toml::from_str(s).map_err(|e| PlanConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("plan serialization")
    }

    /// Resolve task names against a graph.
    pub fn resolve(&self, g: &Graph) -> Result<PipelinePlan, PlanConfigError> {
        if self.stage.is_empty() {
            return Err(PlanConfigError::NoStages);
        }
        let lookup = |name: &String| -> Result<TaskId, PlanConfigError> {
            g.find_task(name)
                .ok_or_else(|| PlanConfigError::UnknownTaskName(name.clone()))
        };
        let entry = lookup(&self.entry)?;
        let mut stages = Vec::with_capacity(self.stage.len());
        for sc in &self.stage {
            let first = sc.first.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
            let last = sc.last.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
            stages.push(StageSpec {
                first,
                last,
                workers: sc.workers,
                pinning: sc.pin.clone(),
            });
        }
        Ok(PipelinePlan {
            entry,
            stages,
            capacity: self.capacity,
            wait: self.wait,
            copy: self.copy,
        })
    }

    /// Render a programmatic plan back into its declarative form.
    pub fn from_plan(plan: &PipelinePlan, g: &Graph) -> Self {
        Self {
            entry: g.task_full_name(plan.entry),
            capacity: plan.capacity,
            wait: plan.wait,
            copy: plan.copy,
            stage: plan
                .stages
                .iter()
                .map(|s| StageConfig {
                    first: s.first.iter().map(|t| g.task_full_name(*t)).collect(),
                    last: s.last.iter().map(|t| g.task_full_name(*t)).collect(),
                    workers: s.workers,
                    pin: s.pinning.clone(),
                })
                .collect(),
        }
    }
}

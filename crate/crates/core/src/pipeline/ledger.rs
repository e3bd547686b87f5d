use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Metered work of one pipeline stage. `total` is the sum of `queries`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLedger {
    pub stage: String,
    /// Algorithm steps the stage covers.
    pub steps: Vec<u8>,
    pub queries: BTreeMap<String, u64>,
    pub total: u64,
}

impl StageLedger {
    pub fn new(stage: &str, steps: &[u8]) -> Self {
        Self {
            stage: stage.to_string(),
            steps: steps.to_vec(),
            ..Default::default()
        }
    }

    pub fn add(&mut self, key: &str, count: u64) {
        *self.queries.entry(key.to_string()).or_insert(0) += count;
        self.total += count;
    }

    pub fn get(&self, key: &str) -> u64 {
        self.queries.get(key).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &StageLedger) {
        for (k, &v) in &other.queries {
            self.add(k, v);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryLedger {
    pub stages: Vec<StageLedger>,
    pub total: u64,
}

impl QueryLedger {
    pub fn push(&mut self, stage: StageLedger) {
        self.total += stage.total;
        self.stages.push(stage);
    }

    pub fn stage(&self, name: &str) -> Option<&StageLedger> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// Total equals the sum of stage totals, and each stage total equals the
    /// sum of its entries.
    pub fn is_complete(&self) -> bool {
        self.stages
            .iter()
            .all(|s| s.queries.values().sum::<u64>() == s.total)
            && self.stages.iter().map(|s| s.total).sum::<u64>() == self.total
    }
}

/// A measured error next to the bound the construction promises.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub stage: String,
    pub quantity: String,
    pub measured: f64,
    pub bound: f64,
}

impl ErrorEntry {
    pub fn new(stage: &str, quantity: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            stage: stage.to_string(),
            quantity: quantity.into(),
            measured,
            bound,
        }
    }

    pub fn within(&self) -> bool {
        self.measured <= self.bound
    }
}

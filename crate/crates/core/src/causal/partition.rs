use serde::{Deserialize, Serialize};

use super::graph::CausalGraph;
use crate::error::{Error, Result};
use crate::temporal::TimeConstantTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    InDegree,
    OutDegree,
    TimeConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

/// Low/high split of feature dimensions. The lower `⌈d/2⌉` dimensions by
/// `(value, index)` are low, the rest high.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePartition {
    pub criterion: Criterion,
    pub labels: Vec<Level>,
    pub values: Vec<f64>,
}

impl FeaturePartition {
    pub fn split(criterion: Criterion, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::dim("cannot partition zero dimensions"));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let n_low = values.len().div_ceil(2);
        let mut labels = vec![Level::High; values.len()];
        for &i in &order[..n_low] {
            labels[i] = Level::Low;
        }
        Ok(FeaturePartition {
            criterion,
            labels,
            values,
        })
    }

    pub fn indices(&self, level: Level) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == level)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn low(&self) -> Vec<usize> {
        self.indices(Level::Low)
    }

    pub fn high(&self) -> Vec<usize> {
        self.indices(Level::High)
    }

    /// Fraction of dimensions whose label matches `truth`.
    pub fn agreement(&self, truth: &[Level]) -> f64 {
        let hits = self.labels.iter().zip(truth).filter(|(a, b)| a == b).count();
        hits as f64 / self.labels.len().max(1) as f64
    }
}

/// Splits target dimensions by in-degree or source dimensions by out-degree.
pub fn degree_partition(graph: &CausalGraph, direction: Direction) -> Result<FeaturePartition> {
    let (criterion, degrees) = match direction {
        Direction::In => (Criterion::InDegree, &graph.in_degree),
        Direction::Out => (Criterion::OutDegree, &graph.out_degree),
    };
    FeaturePartition::split(criterion, degrees.iter().map(|&d| d as f64).collect())
}

/// Fast half of the time constants is low, slow half high.
pub fn timeconstant_partition(table: &TimeConstantTable) -> Result<FeaturePartition> {
    FeaturePartition::split(
        Criterion::TimeConstant,
        table.entries.iter().map(|e| e.lambda).collect(),
    )
}

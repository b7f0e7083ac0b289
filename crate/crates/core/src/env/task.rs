use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::table::{Table, ToolSemantics};

/// Task family, ordered the way report columns are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Hop(u8),
    Writing,
    Aggregation,
}

impl Category {
    /// Column heading used in reports.
    pub fn label(self) -> String {
        match self {
            Category::Hop(k) => format!("{k}-hop"),
            Category::Writing => "Writing".to_string(),
            Category::Aggregation => "Aggregation".to_string(),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Hop(k) => write!(f, "{k}hop"),
            Category::Writing => f.write_str("writing"),
            Category::Aggregation => f.write_str("aggregation"),
        }
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "writing" => Ok(Category::Writing),
            "aggregation" => Ok(Category::Aggregation),
            _ => s
                .strip_suffix("hop")
                .and_then(|k| k.parse::<u8>().ok())
                .filter(|k| (1..=5).contains(k))
                .map(Category::Hop)
                .ok_or_else(|| format!("unknown task category {s:?}")),
        }
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One lookup on the reference solution path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldHop {
    pub table: String,
    pub field: String,
    pub value: String,
    pub semantics: ToolSemantics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateOp {
    Sum,
    Mean,
}

/// Generator metadata describing how the task is solved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TaskShape {
    KHop {
        /// Field of the final record holding the answer.
        answer_field: String,
        answer_label: String,
        /// Link field followed out of each hop but the last.
        link_fields: Vec<String>,
    },
    Writing {
        plaintiff_id: String,
        defendant_id: String,
        topic: String,
    },
    Aggregation {
        op: AggregateOp,
        filter_table: String,
        filter_field: String,
        filter_value: String,
        join_field: String,
        value_table: String,
        value_field: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub category: Category,
    pub seed: u64,
    pub query: String,
    pub key_answers: Vec<String>,
    pub key_middles: Vec<String>,
    pub gold_path: Vec<GoldHop>,
    /// Tables whose schemas and tools are shown to the agent.
    pub tables: Vec<String>,
    pub shape: TaskShape,
}

impl Task {
    /// Number of reference actions the oracle needs: `k` for k-hop tasks,
    /// one per lookup for writing tasks, one script for aggregation tasks.
    pub fn reference_actions(&self) -> usize {
        match self.category {
            Category::Hop(k) => k as usize,
            Category::Writing => self.gold_path.len(),
            Category::Aggregation => 1,
        }
    }
}

/// A task together with the table rows it introduced.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTask {
    pub task: Task,
    pub tables: Vec<Table>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_text_round_trip() {
        for c in [
            Category::Hop(1),
            Category::Hop(5),
            Category::Writing,
            Category::Aggregation,
        ] {
            assert_eq!(c.to_string().parse::<Category>().unwrap(), c);
        }
        assert!("6hop".parse::<Category>().is_err());
    }

    #[test]
    fn categories_sort_in_report_order() {
        let mut cs = vec![
            Category::Aggregation,
            Category::Writing,
            Category::Hop(3),
            Category::Hop(1),
        ];
        cs.sort();
        assert_eq!(
            cs,
            vec![
                Category::Hop(1),
                Category::Hop(3),
                Category::Writing,
                Category::Aggregation
            ]
        );
    }
}

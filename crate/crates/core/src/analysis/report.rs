//! Experiment reports and their JSON and CSV forms.
//!
//! The CSV is long-format with the fixed header
//! `section,condition,model,parameter,metric,value`, one row per number:
//!
//! | section    | parameter       | metrics                                              |
//! |------------|-----------------|------------------------------------------------------|
//! | likelihood | (empty)         | best_scale, mean_ce                                  |
//! | accuracy   | (empty)         | accuracy, n                                          |
//! | test       | test name       | statistic, p_value                                   |
//! | partition  | partition count | partition_size, runs, near_optimal, better_than_random |
//!
//! Reals are written in Rust's shortest round-trip form, so parsing the CSV
//! recovers the report exactly.

use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::partition::PartitionSummary;
use crate::error::AnalysisError;
use crate::preference::ModelKind;

pub const CSV_HEADER: [&str; 6] = ["section", "condition", "model", "parameter", "metric", "value"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodEntry {
    pub condition: String,
    pub model: ModelKind,
    pub best_scale: f64,
    pub mean_ce: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEntry {
    pub condition: String,
    pub model: ModelKind,
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestEntry {
    /// What was compared, e.g. `"regret vs control"`.
    pub condition: String,
    pub model: ModelKind,
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub condition: String,
    pub model: ModelKind,
    pub partition_count: usize,
    pub partition_size: usize,
    pub runs: usize,
    pub near_optimal: f64,
    pub better_than_random: f64,
}

impl PartitionEntry {
    pub fn from_summary(condition: &str, model: ModelKind, s: &PartitionSummary) -> Self {
        PartitionEntry {
            condition: condition.to_string(),
            model,
            partition_count: s.partition_count,
            partition_size: s.partition_size,
            runs: s.runs,
            near_optimal: s.near_optimal,
            better_than_random: s.better_than_random,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    #[serde(default)]
    pub likelihood: Vec<LikelihoodEntry>,
    #[serde(default)]
    pub accuracy: Vec<AccuracyEntry>,
    #[serde(default)]
    pub tests: Vec<TestEntry>,
    #[serde(default)]
    pub partitions: Vec<PartitionEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(AnalysisError::Report(format!("unknown report format {other:?}"))),
        }
    }
}

fn unit_interval(name: &str, v: f64) -> Result<(), AnalysisError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(AnalysisError::Report(format!("{name} = {v} is outside [0, 1]")))
    }
}

impl ExperimentReport {
    /// Checks that fractions and p-values lie in `[0, 1]`.
    pub fn validate(&self) -> Result<(), AnalysisError> {
        for a in &self.accuracy {
            unit_interval("accuracy", a.accuracy)?;
        }
        for t in &self.tests {
            unit_interval("p_value", t.p_value)?;
        }
        for p in &self.partitions {
            unit_interval("near_optimal", p.near_optimal)?;
            unit_interval("better_than_random", p.better_than_random)?;
        }
        Ok(())
    }

    pub fn emit(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => serde_json::to_string_pretty(self).expect("report serializes"),
            ReportFormat::Csv => self.to_csv(),
        }
    }

    pub fn parse(text: &str, format: ReportFormat) -> Result<Self, AnalysisError> {
        let report = match format {
            ReportFormat::Json => serde_json::from_str(text).map_err(|e| AnalysisError::Report(e.to_string()))?,
            ReportFormat::Csv => Self::from_csv(text)?,
        };
        report.validate()?;
        Ok(report)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut row =
            |section: &str, condition: &str, model: ModelKind, parameter: &str, metric: &str, value: String| {
                w.write_record([section, condition, &model.to_string(), parameter, metric, &value])
                    .expect("writing to memory");
            };
        for e in &self.likelihood {
            row("likelihood", &e.condition, e.model, "", "best_scale", e.best_scale.to_string());
            row("likelihood", &e.condition, e.model, "", "mean_ce", e.mean_ce.to_string());
        }
        for e in &self.accuracy {
            row("accuracy", &e.condition, e.model, "", "accuracy", e.accuracy.to_string());
            row("accuracy", &e.condition, e.model, "", "n", e.n.to_string());
        }
        for e in &self.tests {
            row("test", &e.condition, e.model, &e.test, "statistic", e.statistic.to_string());
            row("test", &e.condition, e.model, &e.test, "p_value", e.p_value.to_string());
        }
        for e in &self.partitions {
            let k = e.partition_count.to_string();
            row("partition", &e.condition, e.model, &k, "partition_size", e.partition_size.to_string());
            row("partition", &e.condition, e.model, &k, "runs", e.runs.to_string());
            row("partition", &e.condition, e.model, &k, "near_optimal", e.near_optimal.to_string());
            row("partition", &e.condition, e.model, &k, "better_than_random", e.better_than_random.to_string());
        }
        // The header goes first even when there are no rows.
        let body = String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8");
        format!("{}\n{}", CSV_HEADER.join(","), body)
    }

    pub fn from_csv(text: &str) -> Result<Self, AnalysisError> {
        let bad = |m: String| AnalysisError::Report(m);
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(bad(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
        }

        type Key = (String, String, String, String);
        let mut order: Vec<Key> = Vec::new();
        let mut metrics: HashMap<Key, HashMap<String, String>> = HashMap::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            if record.len() != CSV_HEADER.len() {
                return Err(bad(format!("row {} has {} fields", i + 2, record.len())));
            }
            let key = (record[0].to_string(), record[1].to_string(), record[2].to_string(), record[3].to_string());
            let entry = metrics.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                HashMap::new()
            });
            if entry.insert(record[4].to_string(), record[5].to_string()).is_some() {
                return Err(bad(format!("row {} repeats metric {}", i + 2, &record[4])));
            }
        }

        let mut report = ExperimentReport::default();
        for key in order {
            let m = &metrics[&key];
            let (section, condition, model, parameter) = key;
            let model: ModelKind = model.parse().map_err(|_| bad(format!("unknown model {model:?}")))?;
            let get = |name: &str| -> Result<&str, AnalysisError> {
                m.get(name).map(String::as_str).ok_or_else(|| bad(format!("{section} row is missing {name}")))
            };
            let real = |name: &str| -> Result<f64, AnalysisError> {
                get(name)?.parse().map_err(|_| bad(format!("{name} is not a number")))
            };
            let count = |name: &str| -> Result<usize, AnalysisError> {
                get(name)?.parse().map_err(|_| bad(format!("{name} is not a count")))
            };
            match section.as_str() {
                "likelihood" => report.likelihood.push(LikelihoodEntry {
                    condition,
                    model,
                    best_scale: real("best_scale")?,
                    mean_ce: real("mean_ce")?,
                }),
                "accuracy" => report.accuracy.push(AccuracyEntry {
                    condition,
                    model,
                    accuracy: real("accuracy")?,
                    n: count("n")?,
                }),
                "test" => report.tests.push(TestEntry {
                    condition,
                    model,
                    test: parameter,
                    statistic: real("statistic")?,
                    p_value: real("p_value")?,
                }),
                "partition" => report.partitions.push(PartitionEntry {
                    condition,
                    model,
                    partition_count: parameter
                        .parse()
                        .map_err(|_| bad(format!("bad partition count {parameter:?}")))?,
                    partition_size: count("partition_size")?,
                    runs: count("runs")?,
                    near_optimal: real("near_optimal")?,
                    better_than_random: real("better_than_random")?,
                }),
                other => return Err(bad(format!("unknown section {other:?}"))),
            }
        }
        Ok(report)
    }
}

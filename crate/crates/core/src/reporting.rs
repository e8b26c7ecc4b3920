//! Score tables aggregated over run traces, and their CSV / JSON forms.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{improvement_deltas, Criterion, RunTrace};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot aggregate: {0}")]
    Validation(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub generator: String,
    pub criterion: Criterion,
    pub iteration: usize,
    /// Mean over papers, averaged over runs.
    pub mean: f64,
    /// Sample standard deviation of the per-run means; absent for a single run.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

/// Per generator, one list of runs per paper.
type Grouped<'a> = BTreeMap<&'a str, Vec<Vec<&'a RunTrace>>>;

/// Traces per generator, grouped per paper and sorted canonically so the
/// grouping does not depend on input order.
fn group(traces: &[RunTrace]) -> Result<(usize, Grouped<'_>), ReportError> {
    let Some(first) = traces.first() else {
        return Err(ReportError::Validation("no traces".into()));
    };
    let k = first.config.iterations;
    for t in traces {
        if t.config.iterations != k || t.iterations.len() != k {
            return Err(ReportError::Validation(format!(
                "traces disagree on iteration count: {} has {} of {}, expected {k}",
                t.paper_id,
                t.iterations.len(),
                t.config.iterations
            )));
        }
        if t.config.scenario != first.config.scenario {
            return Err(ReportError::Validation("traces come from different scenarios".into()));
        }
    }
    let mut by_gen: BTreeMap<&str, BTreeMap<&str, Vec<&RunTrace>>> = BTreeMap::new();
    for t in traces {
        by_gen.entry(&t.generator).or_default().entry(&t.paper_id).or_default().push(t);
    }
    let mut out = BTreeMap::new();
    for (gen, papers) in by_gen {
        let runs = papers.values().next().map_or(0, Vec::len);
        if papers.values().any(|v| v.len() != runs) {
            return Err(ReportError::Validation(format!(
                "generator {gen} has an unequal number of runs per paper"
            )));
        }
        let mut per_paper: Vec<Vec<&RunTrace>> = papers.into_values().collect();
        for runs in &mut per_paper {
            runs.sort_by_cached_key(|t| (t.config.seed, t.to_json()));
        }
        out.insert(gen, per_paper);
    }
    Ok((k, out))
}

/// Per generator, criterion and iteration: the mean over papers within each
/// run, then mean and sample standard deviation across runs.
pub fn aggregate(traces: &[RunTrace]) -> Result<ScoreTable, ReportError> {
    let (k, groups) = group(traces)?;
    let mut rows = Vec::new();
    for (gen, per_paper) in groups {
        let runs = per_paper[0].len();
        let scores: Vec<Vec<Vec<BTreeMap<Criterion, f64>>>> = per_paper
            .iter()
            .map(|ts| ts.iter().map(|t| t.reports().map(|r| r.scores()).collect()).collect())
            .collect();
        for criterion in Criterion::ALL {
            for it in 0..k {
                let run_means: Vec<f64> = (0..runs)
                    .map(|r| mean(&scores.iter().map(|p| p[r][it][&criterion]).collect::<Vec<_>>()))
                    .collect();
                rows.push(ScoreRow {
                    generator: gen.to_string(),
                    criterion,
                    iteration: it + 1,
                    mean: mean(&run_means),
                    std: sample_std(&run_means),
                });
            }
        }
    }
    Ok(ScoreTable { rows })
}

impl ScoreTable {
    pub fn get(&self, generator: &str, criterion: Criterion, iteration: usize) -> Option<&ScoreRow> {
        self.rows
            .iter()
            .find(|r| r.generator == generator && r.criterion == criterion && r.iteration == iteration)
    }

    /// Only the eight standard criteria.
    pub fn standard_view(&self) -> ScoreTable {
        ScoreTable {
            rows: self
                .rows
                .iter()
                .filter(|r| Criterion::STANDARD.contains(&r.criterion))
                .cloned()
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["generator", "criterion", "iteration", "mean", "std"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.generator.clone(),
                r.criterion.to_string(),
                r.iteration.to_string(),
                r.mean.to_string(),
                r.std.map(|s| s.to_string()).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self, ReportError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| ReportError::Parse(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["generator", "criterion", "iteration", "mean", "std"] {
            return Err(ReportError::Parse(format!("unexpected header {headers:?}")));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| ReportError::Parse(e.to_string()))?;
            let bad = |what: &str| ReportError::Parse(format!("row {}: bad {what}", i + 1));
            rows.push(ScoreRow {
                generator: rec[0].to_string(),
                criterion: rec[1].parse().map_err(|_| bad("criterion"))?,
                iteration: rec[2].parse().map_err(|_| bad("iteration"))?,
                mean: rec[3].parse().map_err(|_| bad("mean"))?,
                std: match &rec[4] {
                    "" => None,
                    s => Some(s.parse().map_err(|_| bad("std"))?),
                },
            });
        }
        Ok(Self { rows })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        serde_json::from_str(text).map_err(|e| ReportError::Parse(e.to_string()))
    }
}

/// Mean change between consecutive iterations, per generator and criterion.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeltaTable {
    pub rows: Vec<DeltaRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub generator: String,
    pub criterion: Criterion,
    /// `deltas[i]` is iteration `i + 2` minus iteration `i + 1`.
    pub deltas: Vec<f64>,
}

pub fn delta_table(traces: &[RunTrace]) -> Result<DeltaTable, ReportError> {
    let (k, groups) = group(traces)?;
    if k < 2 {
        return Err(ReportError::Validation("deltas need at least two iterations".into()));
    }
    let mut rows = Vec::new();
    for (gen, per_paper) in groups {
        let all: Vec<BTreeMap<Criterion, Vec<f64>>> = per_paper
            .iter()
            .flatten()
            .map(|t| improvement_deltas(t).map_err(|e| ReportError::Validation(e.to_string())))
            .collect::<Result<_, _>>()?;
        for criterion in Criterion::DELTA {
            let deltas = (0..k - 1)
                .map(|i| mean(&all.iter().map(|d| d[&criterion][i]).collect::<Vec<_>>()))
                .collect();
            rows.push(DeltaRow {
                generator: gen.to_string(),
                criterion,
                deltas,
            });
        }
    }
    Ok(DeltaTable { rows })
}

impl DeltaTable {
    pub fn to_csv(&self) -> String {
        let k = self.rows.first().map_or(0, |r| r.deltas.len());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["generator".to_string(), "criterion".to_string()];
        header.extend((1..=k).map(|i| format!("delta_{}_{}", i, i + 1)));
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![r.generator.clone(), r.criterion.to_string()];
            rec.extend(r.deltas.iter().map(|d| d.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| ReportError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_is_sample_std() {
        assert_eq!(sample_std(&[1.0]), None);
        assert_eq!(sample_std(&[1.0, 3.0]), Some(2f64.sqrt()));
    }

    #[test]
    fn csv_round_trip_with_quoting() {
        let t = ScoreTable {
            rows: vec![
                ScoreRow {
                    generator: "gen, \"quoted\"".into(),
                    criterion: Criterion::Emphasis,
                    iteration: 1,
                    mean: 0.1 + 0.2,
                    std: None,
                },
                ScoreRow {
                    generator: "b".into(),
                    criterion: Criterion::CoherenceRatio,
                    iteration: 2,
                    mean: 1.0 / 3.0,
                    std: Some(0.123456789),
                },
            ],
        };
        assert_eq!(ScoreTable::from_csv(&t.to_csv()).unwrap(), t);
        assert_eq!(ScoreTable::from_json(&t.to_json()).unwrap(), t);
        assert!(t.to_csv().starts_with("generator,criterion,iteration,mean,std\n"));
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(aggregate(&[]).is_err());
    }
}

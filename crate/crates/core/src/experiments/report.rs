use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::run::{read_json, suffix, CellKey, RunManifest, SplitResult};
use crate::cohort::Diagnosis;
use crate::evaluation::{summarize, Frequency, Metric, MetricSummary};
use crate::{Error, Result};

/// Results aggregated over splits (or over pseudo sets for a single split).
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    /// What the standard errors are computed over.
    pub stderr_axis: String,
    pub cells: BTreeMap<CellKey, [Option<MetricSummary>; 6]>,
    /// AUROC minus the AUROC of the reference-visit-only scenario (start 0,
    /// annual) in the same group, year and modality case.
    pub deltas: BTreeMap<CellKey, Option<MetricSummary>>,
    /// Mean ratio of expanded to baseline-only training samples.
    pub expansion_ratio: Option<f64>,
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
}

fn baseline_of(key: &CellKey) -> CellKey {
    CellKey { history_start: 0, frequency: Frequency::Annual, ..key.clone() }
}

fn defined(s: MetricSummary) -> Option<MetricSummary> {
    (s.n > 0).then_some(s)
}

pub fn aggregate(results: &[SplitResult]) -> Report {
    let mut keys: Vec<CellKey> = results.iter().flat_map(|r| r.cells.iter().map(|c| c.key.clone())).collect();
    keys.sort();
    keys.dedup();
    let lookup: Vec<BTreeMap<&CellKey, &super::CellResult>> =
        results.iter().map(|r| r.cells.iter().map(|c| (&c.key, c)).collect()).collect();
    let auroc = Metric::Auroc.index();
    let mut cells = BTreeMap::new();
    let mut deltas = BTreeMap::new();
    let stderr_axis;
    if results.len() > 1 {
        stderr_axis = format!("train/test splits (n = {})", results.len());
        for key in &keys {
            let metrics = std::array::from_fn(|m| {
                let values: Vec<Option<f64>> =
                    lookup.iter().map(|l| l.get(key).and_then(|c| c.metrics[m]).map(|s| s.mean)).collect();
                defined(summarize(&values))
            });
            cells.insert(key.clone(), metrics);
            let base = baseline_of(key);
            if keys.binary_search(&base).is_ok() {
                let values: Vec<Option<f64>> = lookup
                    .iter()
                    .map(|l| {
                        let a = l.get(key).and_then(|c| c.metrics[auroc])?;
                        let b = l.get(&base).and_then(|c| c.metrics[auroc])?;
                        Some(a.mean - b.mean)
                    })
                    .collect();
                deltas.insert(key.clone(), defined(summarize(&values)));
            }
        }
    } else {
        let bias_reduction = results.first().is_none_or(|r| r.bias_reduction);
        stderr_axis = if bias_reduction {
            "pseudo test sets within the single split".to_string()
        } else {
            "none (single split scored on all eligible pairs)".to_string()
        };
        if let Some(l) = lookup.first() {
            for key in &keys {
                cells.insert(key.clone(), l[key].metrics);
                if let Some(base) = l.get(&baseline_of(key)) {
                    let values: Vec<Option<f64>> = l[key]
                        .auroc_per_set
                        .iter()
                        .zip(&base.auroc_per_set)
                        .map(|(a, b)| Some((*a)? - (*b)?))
                        .collect();
                    deltas.insert(key.clone(), defined(summarize(&values)));
                }
            }
        }
    }
    let ratios: Vec<Option<f64>> = results.iter().map(|r| r.expansion_ratio).collect();
    let expansion_ratio = defined(summarize(&ratios)).map(|s| s.mean);
    Report { stderr_axis, cells, deltas, expansion_ratio, files: Vec::new() }
}

impl Report {
    /// Mean over follow-up years of the per-cell means.
    pub fn mean_over_years(&self, group: Diagnosis, case: &str, start: i32, freq: Frequency, metric: Metric) -> Option<f64> {
        let v: Vec<f64> = self
            .cells
            .iter()
            .filter(|(k, _)| k.group == group && k.modality_case == case && k.history_start == start && k.frequency == freq)
            .filter_map(|(_, m)| m[metric.index()].map(|s| s.mean))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean over follow-up years of the AUROC differences.
    pub fn mean_delta(&self, group: Diagnosis, case: &str, start: i32, freq: Frequency) -> Option<f64> {
        let v: Vec<f64> = self
            .deltas
            .iter()
            .filter(|(k, _)| k.group == group && k.modality_case == case && k.history_start == start && k.frequency == freq)
            .filter_map(|(_, d)| d.map(|s| s.mean))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn key_columns(k: &CellKey) -> String {
    format!("{},{},{},{},{}", k.group, k.follow_up_year, k.modality_case, k.history_start, k.frequency.as_str())
}

fn summary_columns(s: &Option<MetricSummary>) -> String {
    match s {
        Some(s) => format!("{},{},{}", s.mean, s.stderr, s.n),
        None => ",,0".to_string(),
    }
}

pub fn metrics_csv(report: &Report) -> String {
    let mut out = format!("# stderr over {}\n", report.stderr_axis);
    out.push_str("group,follow_up_year,modality_case,history_start,frequency,metric,mean,stderr,n_replicates\n");
    for (key, metrics) in &report.cells {
        for m in Metric::ALL {
            writeln!(out, "{},{},{}", key_columns(key), m, summary_columns(&metrics[m.index()])).unwrap();
        }
    }
    out
}

pub fn delta_csv(report: &Report) -> String {
    let mut out = format!("# auroc minus auroc of history start 0; stderr over {}\n", report.stderr_axis);
    out.push_str("group,follow_up_year,modality_case,history_start,frequency,delta_mean,delta_stderr,n_replicates\n");
    for (key, d) in &report.deltas {
        writeln!(out, "{},{}", key_columns(key), summary_columns(d)).unwrap();
    }
    out
}

type RowKey = (Diagnosis, String, i32, Frequency);

fn rows(report: &Report) -> BTreeMap<RowKey, BTreeMap<u32, &[Option<MetricSummary>; 6]>> {
    let mut rows: BTreeMap<RowKey, BTreeMap<u32, &[Option<MetricSummary>; 6]>> = BTreeMap::new();
    for (k, m) in &report.cells {
        rows.entry((k.group, k.modality_case.clone(), -k.history_start, k.frequency))
            .or_default()
            .insert(k.follow_up_year, m);
    }
    rows
}

/// One row per (group, case, scenario), one column per follow-up year.
pub fn metric_table(report: &Report, metric: Metric) -> String {
    let rows = rows(report);
    let years: Vec<u32> = {
        let mut y: Vec<u32> = report.cells.keys().map(|k| k.follow_up_year).collect();
        y.sort_unstable();
        y.dedup();
        y
    };
    let mut out = String::from("group,modality_case,history_start,frequency");
    for y in &years {
        write!(out, ",year_{y}").unwrap();
    }
    out.push('\n');
    for ((group, case, neg_start, freq), by_year) in &rows {
        write!(out, "{group},{case},{},{}", -neg_start, freq.as_str()).unwrap();
        for y in &years {
            match by_year.get(y).and_then(|m| m[metric.index()]) {
                Some(s) => write!(out, ",{:.4} ± {:.4}", s.mean, s.stderr).unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

pub fn summary_text(report: &Report, results: &[SplitResult]) -> String {
    let mut out = String::new();
    writeln!(out, "splits evaluated: {}", results.len()).unwrap();
    writeln!(out, "standard errors over: {}", report.stderr_axis).unwrap();
    if let Some(r) = report.expansion_ratio {
        writeln!(out, "expanded / baseline-only training samples: {r:.2}").unwrap();
    }
    let rows = rows(report);
    let mut last: Option<(Diagnosis, String)> = None;
    for (group, case, neg_start, freq) in rows.keys() {
        if last.as_ref() != Some(&(*group, case.clone())) {
            writeln!(out, "\n{group} group, modality case {case} (mean over follow-up years)").unwrap();
            last = Some((*group, case.clone()));
        }
        let start = -neg_start;
        let fmt = |x: Option<f64>, scale: f64| x.map_or("n/a".to_string(), |v| format!("{:.4}", v * scale));
        writeln!(
            out,
            "  start {start:>2} {:<8}  auroc {}  delta {}  aupr {}  bacc {}  ece% {}",
            freq.as_str(),
            fmt(report.mean_over_years(*group, case, start, *freq, Metric::Auroc), 1.0),
            fmt(report.mean_delta(*group, case, start, *freq), 1.0),
            fmt(report.mean_over_years(*group, case, start, *freq, Metric::Aupr), 1.0),
            fmt(report.mean_over_years(*group, case, start, *freq, Metric::BalancedAccuracy), 1.0),
            fmt(report.mean_over_years(*group, case, start, *freq, Metric::Ece), 100.0),
        )
        .unwrap();
    }
    out
}

/// Aggregates the split results listed in `manifest` and writes the metric
/// tables, the AUROC-difference table and a text summary.
pub fn emit_report(out_dir: &Path, manifest: &RunManifest) -> Result<Report> {
    let results: Vec<SplitResult> = manifest
        .splits
        .iter()
        .filter_map(|s| s.result.as_ref())
        .map(|rel| read_json(&out_dir.join(rel)))
        .collect::<Result<_>>()?;
    if results.is_empty() {
        return Err(Error::Config("no completed split to report".into()));
    }
    let mut report = aggregate(&results);
    let dir_rel = format!("report{}", suffix(manifest.bias_reduction));
    let dir = out_dir.join(&dir_rel);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files: Vec<(String, String)> = vec![
        ("metrics.csv".into(), metrics_csv(&report)),
        ("delta_auroc.csv".into(), delta_csv(&report)),
    ];
    for m in Metric::ALL {
        files.push((format!("table_{m}.csv"), metric_table(&report, m)));
    }
    files.push(("summary.txt".into(), summary_text(&report, &results)));
    for (name, text) in files {
        let path = dir.join(&name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        report.files.push(format!("{dir_rel}/{name}"));
    }
    Ok(report)
}

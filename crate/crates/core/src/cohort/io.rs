//! JSON-Lines cohort files and label-count summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{carry_forward_labels, Cohort, Diagnosis, SubjectHistory, VisitRecord};
use crate::{Error, Result};

/// One visit record per line, subjects in the given order.
pub fn write_jsonl<W: Write>(subjects: &[SubjectHistory], mut out: W) -> Result<()> {
    for s in subjects {
        for v in &s.visits {
            let line = serde_json::to_string(v)?;
            writeln!(out, "{line}").map_err(|e| Error::io("<jsonl>", e))?;
        }
    }
    Ok(())
}

pub fn write_jsonl_file(subjects: &[SubjectHistory], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_jsonl(subjects, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads visit records and groups them by subject (sorted by id). Subjects
/// whose visits cannot form a history are returned as `(id, diagnostic)`.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<(Vec<SubjectHistory>, Vec<(String, String)>)> {
    let mut by_subject: BTreeMap<String, Vec<VisitRecord>> = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let visit: VisitRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        by_subject.entry(visit.subject_id.clone()).or_default().push(visit);
    }
    let mut subjects = Vec::new();
    let mut rejected = Vec::new();
    for (id, visits) in by_subject {
        match SubjectHistory::from_visits(id.clone(), visits) {
            Ok(s) => subjects.push(s),
            Err(e) => rejected.push((id, e.to_string())),
        }
    }
    Ok((subjects, rejected))
}

pub fn read_jsonl_file(path: &Path) -> Result<(Vec<SubjectHistory>, Vec<(String, String)>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(file))
}

/// Label counts per baseline group, follow-up diagnosis and year, using
/// carried-forward labels. Columns are years `1..=max_year`.
pub fn label_summary_csv(cohort: &Cohort) -> String {
    let max_year = cohort.max_year;
    let mut counts: BTreeMap<(Diagnosis, Diagnosis), Vec<usize>> = BTreeMap::new();
    let mut baseline: BTreeMap<Diagnosis, usize> = BTreeMap::new();
    for s in &cohort.subjects {
        *baseline.entry(s.baseline_diagnosis).or_default() += 1;
        let track = carry_forward_labels(s, max_year);
        for y in 1..=max_year {
            if let Some(d) = track.get(y) {
                counts
                    .entry((s.baseline_diagnosis, d))
                    .or_insert_with(|| vec![0; max_year as usize])[y as usize - 1] += 1;
            }
        }
    }
    let mut out = String::from("group,n_baseline,follow_up_dx");
    for y in 1..=max_year {
        write!(out, ",year_{y}").unwrap();
    }
    out.push('\n');
    for group in [Diagnosis::CN, Diagnosis::MCI] {
        for dx in [group, group.next().unwrap()] {
            let row = counts.get(&(group, dx));
            write!(out, "{group},{},{dx}", baseline.get(&group).copied().unwrap_or(0)).unwrap();
            for y in 0..max_year as usize {
                write!(out, ",{}", row.map_or(0, |r| r[y])).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

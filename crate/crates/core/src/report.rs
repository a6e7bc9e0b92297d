//! Batch runs over benchmark files, per-instance records and per-set
//! summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::engine::{self, EngineConfig, SolveReport};
use crate::instance::Instance;
use crate::model::CutKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub n_prime: usize,
    pub m: usize,
    #[serde(rename = "L")]
    pub length_limit: f64,
    #[serde(rename = "UB")]
    pub upper_bound: i64,
    #[serde(rename = "LB")]
    pub lower_bound: i64,
    pub gap: f64,
    pub cpu_s: f64,
    pub optimal: bool,
    pub cuts_gsec: usize,
    pub cuts_clique: usize,
    pub cuts_indep: usize,
    pub cuts_bound: usize,
    pub cuts_mandatory: usize,
    /// Set when the instance could not be loaded or solved.
    pub error: Option<String>,
}

/// Relative gap in percent; zero when the upper bound is not positive.
pub fn gap(upper_bound: i64, lower_bound: i64) -> f64 {
    if upper_bound > 0 {
        100.0 * (upper_bound - lower_bound) as f64 / upper_bound as f64
    } else {
        0.0
    }
}

impl RunRecord {
    pub fn from_report(name: &str, inst: &Instance, report: &SolveReport) -> Self {
        let count = |kinds: &[CutKind]| kinds.iter().map(|k| report.cuts.get(k).copied().unwrap_or(0)).sum();
        Self {
            name: name.to_string(),
            n_prime: inst.num_customers(),
            m: inst.fleet_size(),
            length_limit: inst.length_limit(),
            upper_bound: report.upper_bound,
            lower_bound: report.lower_bound,
            gap: gap(report.upper_bound, report.lower_bound),
            cpu_s: report.elapsed.as_secs_f64(),
            optimal: report.optimal,
            cuts_gsec: count(&[CutKind::Gsec, CutKind::GsecGamma]),
            cuts_clique: count(&[CutKind::Clique]),
            cuts_indep: count(&[CutKind::IndepSet]),
            cuts_bound: count(&[CutKind::ProfitUB, CutKind::ProfitLB, CutKind::CountUB, CutKind::CountLB]),
            cuts_mandatory: count(&[CutKind::Mandatory]),
            error: None,
        }
    }

    pub fn failed(name: &str, message: String) -> Self {
        Self {
            name: name.to_string(),
            n_prime: 0,
            m: 0,
            length_limit: 0.0,
            upper_bound: 0,
            lower_bound: 0,
            gap: 0.0,
            cpu_s: 0.0,
            optimal: false,
            cuts_gsec: 0,
            cuts_clique: 0,
            cuts_indep: 0,
            cuts_bound: 0,
            cuts_mandatory: 0,
            error: Some(message),
        }
    }

    /// Data set the record belongs to: `set N` for benchmark names, the
    /// name itself otherwise.
    pub fn data_set(&self) -> String {
        match crate::instance::BenchmarkName::parse(&self.name) {
            Some(b) => format!("set {}", b.set),
            None => self.name.clone(),
        }
    }
}

/// Files to run: plain files as given, directories expanded to their
/// `.txt` entries in name order.
pub fn expand_paths(paths: &[PathBuf]) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = match std::fs::read_dir(p) {
                Ok(rd) => rd
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|f| f.is_file() && f.extension().is_some_and(|x| x == "txt"))
                    .collect(),
                Err(_) => vec![p.clone()],
            };
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    out
}

fn display_name(path: &Path) -> String {
    let file = path.file_name().and_then(|s| s.to_str()).unwrap_or("?");
    file.strip_suffix(".txt").unwrap_or(file).to_string()
}

/// Solves one file; load and solve failures become error records.
pub fn run_one(path: &Path, config: &EngineConfig) -> RunRecord {
    let name = display_name(path);
    let inst = match Instance::load(path) {
        Ok(i) => i,
        Err(e) => {
            warn!("{}: {e}", path.display());
            return RunRecord::failed(&name, e.to_string());
        }
    };
    let start = Instant::now();
    match engine::solve(inst.clone(), config.clone()) {
        Ok(report) => {
            let rec = RunRecord::from_report(&name, &inst, &report);
            info!("{name}: ub {} lb {} in {:.2}s", rec.upper_bound, rec.lower_bound, rec.cpu_s);
            rec
        }
        Err(e) => {
            warn!("{name}: {e}");
            let mut rec = RunRecord::failed(&name, e.to_string());
            rec.n_prime = inst.num_customers();
            rec.m = inst.fleet_size();
            rec.length_limit = inst.length_limit();
            rec.cpu_s = start.elapsed().as_secs_f64();
            rec
        }
    }
}

/// Runs every file under `paths` in order.
pub fn run(paths: &[PathBuf], config: &EngineConfig) -> Vec<RunRecord> {
    expand_paths(paths).iter().map(|p| run_one(p, config)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetSummary {
    pub data_set: String,
    pub instances: usize,
    pub optimal: usize,
    /// Mean time over the instances solved to optimality.
    pub cpu_avg: Option<f64>,
    /// Mean gap over the instances that did not fail.
    pub gap_avg: f64,
    pub errors: usize,
}

pub fn summarize(records: &[RunRecord]) -> Vec<SetSummary> {
    let mut groups: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.data_set()).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(data_set, recs)| {
            let solved: Vec<f64> = recs.iter().filter(|r| r.optimal).map(|r| r.cpu_s).collect();
            let ok: Vec<f64> = recs.iter().filter(|r| r.error.is_none()).map(|r| r.gap).collect();
            SetSummary {
                data_set,
                instances: recs.len(),
                optimal: solved.len(),
                cpu_avg: (!solved.is_empty()).then(|| solved.iter().sum::<f64>() / solved.len() as f64),
                gap_avg: if ok.is_empty() { 0.0 } else { ok.iter().sum::<f64>() / ok.len() as f64 },
                errors: recs.iter().filter(|r| r.error.is_some()).count(),
            }
        })
        .collect()
}

pub fn write_csv<W: io::Write>(out: W, records: &[RunRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(input: R) -> csv::Result<Vec<RunRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn text_table(records: &[RunRecord]) -> String {
    let mut rows = vec![[
        "name", "n'", "m", "L", "UB", "LB", "gap%", "cpu_s", "opt", "gsec", "clique", "indep", "bound", "mand",
    ]
    .map(String::from)
    .to_vec()];
    for r in records {
        if let Some(e) = &r.error {
            rows.push(vec![r.name.clone(), format!("error: {e}")]);
            continue;
        }
        rows.push(vec![
            r.name.clone(),
            r.n_prime.to_string(),
            r.m.to_string(),
            format!("{}", r.length_limit),
            r.upper_bound.to_string(),
            r.lower_bound.to_string(),
            format!("{:.2}", r.gap),
            format!("{:.2}", r.cpu_s),
            if r.optimal { "yes" } else { "no" }.to_string(),
            r.cuts_gsec.to_string(),
            r.cuts_clique.to_string(),
            r.cuts_indep.to_string(),
            r.cuts_bound.to_string(),
            r.cuts_mandatory.to_string(),
        ]);
    }
    let ncols = rows[0].len();
    let widths: Vec<usize> = (0..ncols)
        .map(|c| rows.iter().filter(|r| r.len() == ncols).map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = if row.len() == ncols {
            row.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect()
        } else {
            vec![format!("{:>w$}", row[0], w = widths[0]), row[1].clone()]
        };
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

pub fn summary_table(summaries: &[SetSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:>5} {:>5} {:>10} {:>8} {:>6}", "set", "inst", "#Opt", "CPU_avg", "gap%", "errors");
    for s in summaries {
        let cpu = s.cpu_avg.map_or("-".to_string(), |c| format!("{c:.2}"));
        let _ = writeln!(
            out,
            "{:<12} {:>5} {:>5} {:>10} {:>8.2} {:>6}",
            s.data_set, s.instances, s.optimal, cpu, s.gap_avg, s.errors
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(name: &str, ub: i64, lb: i64, cpu: f64) -> RunRecord {
        RunRecord {
            name: name.into(),
            n_prime: 19,
            m: 2,
            length_limit: 7.5,
            upper_bound: ub,
            lower_bound: lb,
            gap: gap(ub, lb),
            cpu_s: cpu,
            optimal: ub == lb,
            cuts_gsec: 3,
            cuts_clique: 1,
            cuts_indep: 0,
            cuts_bound: 2,
            cuts_mandatory: 0,
            error: None,
        }
    }

    #[test]
    fn gap_values() {
        assert_eq!(gap(100, 90), 10.0);
        assert_eq!(gap(50, 50), 0.0);
        assert_eq!(gap(1, 0), 100.0);
        assert_eq!(gap(0, 0), 0.0);
    }

    #[test]
    fn csv_header_and_round_trip() {
        let recs = vec![rec("p2.2.a", 90, 90, 0.25), RunRecord::failed("bad", "parse error, line 2".into())];
        let mut buf = Vec::new();
        write_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "name,n_prime,m,L,UB,LB,gap,cpu_s,optimal,cuts_gsec,cuts_clique,cuts_indep,cuts_bound,cuts_mandatory,error\n"
        ));
        assert_eq!(read_csv(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn summary_groups_by_set() {
        let recs = vec![
            rec("p2.2.a", 90, 90, 1.0),
            rec("p2.3.b", 100, 90, 5.0),
            rec("p2.4.c", 80, 80, 3.0),
            rec("p3.2.a", 10, 10, 2.0),
            RunRecord::failed("p3.2.b", "missing".into()),
        ];
        let s = summarize(&recs);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].data_set, "set 2");
        assert_eq!(s[0].optimal, 2);
        assert_eq!(s[0].cpu_avg, Some(2.0));
        assert!((s[0].gap_avg - 10.0 / 3.0).abs() < 1e-12);
        assert_eq!(s[1].errors, 1);
        assert_eq!(s[1].optimal, 1);
    }

    #[test]
    fn unreadable_file_yields_error_record() {
        let recs = run(&[PathBuf::from("/nonexistent/p9.9.z.txt")], &EngineConfig::default());
        assert_eq!(recs.len(), 1);
        assert!(recs[0].error.is_some());
        assert!(text_table(&recs).contains("error"));
    }
}

//! Result tables, the grouped error metric, confusion matrices and
//! plot-data files.
//!
//! `results.csv` header: `front_end,scenario,noise,snr_db,error_pct,n_test,seed`
//! where `snr_db` is `quiet` or a number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::ClassMap;
use crate::error::{Error, Result};
use crate::signal::Snr;

use super::config::FrontEnd;

pub const RESULTS_HEADER: &str = "front_end,scenario,noise,snr_db,error_pct,n_test,seed";

/// Percentage of predictions that are wrong, where a prediction in the
/// truth's confusion group counts as correct.
pub fn compute_error(predictions: &[usize], truths: &[usize], class_map: &ClassMap) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            found: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    let correct = predictions
        .iter()
        .zip(truths)
        .filter(|&(&p, &t)| class_map.equivalent(p, t))
        .count();
    Ok(100.0 * (1.0 - correct as f64 / truths.len() as f64))
}

/// `counts[truth][prediction]`.
pub fn confusion_matrix(predictions: &[usize], truths: &[usize], classes: usize) -> Result<Vec<Vec<usize>>> {
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            found: predictions.len(),
        });
    }
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &t) in predictions.iter().zip(truths) {
        if p >= classes || t >= classes {
            return Err(Error::invalid(format!("class id out of range: {}", p.max(t))));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Rows are true classes, columns predictions.
pub fn confusion_csv(matrix: &[Vec<usize>], names: &[String]) -> String {
    let mut s = String::from("truth");
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for (name, row) in names.iter().zip(matrix) {
        s.push_str(name);
        for c in row {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub front_end: FrontEnd,
    pub scenario: String,
    pub noise: String,
    pub snr: Snr,
    pub error_pct: f64,
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn push(&mut self, row: ResultRow) -> Result<()> {
        if !(0.0..=100.0).contains(&row.error_pct) {
            return Err(Error::invalid(format!("error {} outside [0, 100]", row.error_pct)));
        }
        if row.n_test == 0 {
            return Err(Error::invalid("result row with no test instances"));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Front-end, scenario, noise, then quiet first and decreasing SNR.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (a.front_end, &a.scenario, &a.noise)
                .cmp(&(b.front_end, &b.scenario, &b.noise))
                .then(a.snr.order_key().total_cmp(&b.snr.order_key()))
        });
    }

    pub fn get(&self, front_end: FrontEnd, scenario: &str, noise: &str, snr: Snr) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.front_end == front_end && r.scenario == scenario && r.noise == noise && r.snr == snr)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{RESULTS_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.4},{},{}",
                r.front_end.name(),
                r.scenario,
                r.noise,
                r.snr,
                r.error_pct,
                r.n_test,
                r.seed
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(RESULTS_HEADER) {
            return Err(Error::Format(format!("results file must start with '{RESULTS_HEADER}'")));
        }
        let mut table = ResultTable::default();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || Error::Format(format!("results line {}: '{line}'", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad());
            }
            table.push(ResultRow {
                front_end: f[0].parse().map_err(|_| bad())?,
                scenario: f[1].to_string(),
                noise: f[2].to_string(),
                snr: f[3].parse().map_err(|_| bad())?,
                error_pct: f[4].parse().map_err(|_| bad())?,
                n_test: f[5].parse().map_err(|_| bad())?,
                seed: f[6].parse().map_err(|_| bad())?,
            })?;
        }
        Ok(table)
    }
}

/// One whitespace-delimited text per (scenario, noise), keyed by file
/// name `plot_<scenario>_<noise>.dat`: a header `snr_db <front-ends...>`
/// then one line per SNR, quiet first.
pub fn plot_data(table: &ResultTable) -> Result<BTreeMap<String, String>> {
    if table.rows.is_empty() {
        return Err(Error::invalid("empty result table"));
    }
    type Panel = (Vec<FrontEnd>, Vec<Snr>);
    let mut panels: BTreeMap<(String, String), Panel> = BTreeMap::new();
    for r in &table.rows {
        let (fes, snrs) = panels.entry((r.scenario.clone(), r.noise.clone())).or_default();
        if !fes.contains(&r.front_end) {
            fes.push(r.front_end);
        }
        if !snrs.contains(&r.snr) {
            snrs.push(r.snr);
        }
    }
    let mut out = BTreeMap::new();
    for ((scenario, noise), (mut fes, mut snrs)) in panels {
        fes.sort();
        snrs.sort_by(|a, b| a.order_key().total_cmp(&b.order_key()));
        let mut s = String::from("snr_db");
        for fe in &fes {
            s.push(' ');
            s.push_str(fe.name());
        }
        s.push('\n');
        for snr in &snrs {
            s.push_str(&snr.to_string());
            for &fe in &fes {
                match table.get(fe, &scenario, &noise, *snr) {
                    Some(r) => {
                        let _ = write!(s, " {:.4}", r.error_pct);
                    }
                    None => s.push_str(" nan"),
                }
            }
            s.push('\n');
        }
        out.insert(format!("plot_{scenario}_{noise}.dat"), s);
    }
    Ok(out)
}

/// Writes the plot-data files into `dir` and returns their paths.
pub fn emit_plot_data(table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    plot_data(table)?
        .into_iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

//! Model evaluation against labelled datasets: per-instance rows, grouped
//! metrics and a plain-text report.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetRecord, Split};
use crate::error::Result;
use crate::instance::{Instance, Money, SetupPlan};
use crate::pipeline::{solve_ml, RepairOptions, SetupPredictor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub repair: RepairOptions,
    /// Record wall-clock times. Off gives byte-reproducible CSVs.
    pub timing: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            repair: RepairOptions::default(),
            timing: true,
        }
    }
}

/// One evaluated instance. `c = f = 0` marks instances without generator
/// metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub index: usize,
    pub c: u32,
    pub f: u32,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    pub split: Split,
    pub predicted: String,
    pub direct_feasible: bool,
    pub feasible: bool,
    pub provenance: String,
    pub setup: String,
    pub objective_ml: Option<Money>,
    pub objective_opt: Money,
    pub optgap_pct: Option<f64>,
    pub time_ml: f64,
    pub time_exact: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMetrics {
    pub c: Option<u32>,
    pub f: Option<u32>,
    pub count: usize,
    pub inf_pct: f64,
    /// Infeasibility of the unrepaired prediction.
    pub pre_repair_inf_pct: f64,
    /// Mean over feasible ML outputs; `None` if there are none.
    pub optgap_pct: Option<f64>,
    pub time_ml: f64,
    pub time_exact: f64,
    /// `None` when exact times were not recorded.
    pub timegain_pct: Option<f64>,
    pub provenance: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub groups: Vec<GroupMetrics>,
    pub overall: GroupMetrics,
}

fn group(key: Option<(u32, u32)>, rows: &[&InstanceRow]) -> GroupMetrics {
    let n = rows.len();
    let pct = |k: usize| 100.0 * k as f64 / n.max(1) as f64;
    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.optgap_pct).collect();
    let mean = |v: f64| v / n.max(1) as f64;
    let time_ml = mean(rows.iter().map(|r| r.time_ml).sum());
    let time_exact = mean(rows.iter().map(|r| r.time_exact).sum());
    let mut provenance = BTreeMap::new();
    for r in rows {
        *provenance.entry(r.provenance.clone()).or_insert(0) += 1;
    }
    GroupMetrics {
        c: key.map(|k| k.0),
        f: key.map(|k| k.1),
        count: n,
        inf_pct: pct(rows.iter().filter(|r| !r.feasible).count()),
        pre_repair_inf_pct: pct(rows.iter().filter(|r| !r.direct_feasible).count()),
        optgap_pct: (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64),
        time_ml,
        time_exact,
        timegain_pct: (time_exact > 0.0).then(|| 100.0 * (time_exact - time_ml) / time_exact),
        provenance,
    }
}

/// Aggregates rows in index order, per `(c, f)` and overall.
pub fn aggregate(rows: &[InstanceRow]) -> Metrics {
    let mut ordered: Vec<&InstanceRow> = rows.iter().collect();
    ordered.sort_by_key(|r| r.index);
    let mut by_key: BTreeMap<(u32, u32), Vec<&InstanceRow>> = BTreeMap::new();
    for r in &ordered {
        by_key.entry((r.c, r.f)).or_default().push(r);
    }
    Metrics {
        groups: by_key.iter().map(|(k, v)| group(Some(*k), v)).collect(),
        overall: group(None, &ordered),
    }
}

fn bits(y: &SetupPlan) -> String {
    y.to_string()
}

fn evaluate_one(
    index: usize,
    record: &DatasetRecord,
    predictor: &dyn SetupPredictor,
    options: &EvalOptions,
) -> InstanceRow {
    let gen = record.instance.gen;
    let mut row = InstanceRow {
        index,
        c: gen.map_or(0, |g| g.c),
        f: gen.map_or(0, |g| g.f),
        horizon: record.instance.horizon(),
        seed: gen.map_or(0, |g| g.seed),
        split: record.split,
        predicted: String::new(),
        direct_feasible: false,
        feasible: false,
        provenance: "Error".into(),
        setup: String::new(),
        objective_ml: None,
        objective_opt: record.objective,
        optgap_pct: None,
        time_ml: 0.0,
        time_exact: if options.timing { record.solve_time } else { 0.0 },
        error: None,
    };
    match solve_ml(&record.instance, predictor, &options.repair) {
        Ok(out) => {
            let sol = out.solution;
            row.predicted = bits(&out.predicted);
            row.direct_feasible = out.direct_feasible;
            row.feasible = sol.is_feasible();
            row.provenance = if sol.is_feasible() {
                sol.provenance.to_string()
            } else {
                "Infeasible".into()
            };
            row.setup = bits(&sol.setup);
            row.objective_ml = sol.objective;
            row.optgap_pct = sol
                .objective
                .map(|obj| 100.0 * (obj - record.objective) as f64 / record.objective as f64);
            if options.timing {
                row.time_ml = sol.solve_time;
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs prediction and repair on every record. Failures become rows.
pub fn evaluate_model(
    predictor: &dyn SetupPredictor,
    records: &[DatasetRecord],
    options: &EvalOptions,
) -> (Metrics, Vec<InstanceRow>) {
    let rows: Vec<InstanceRow> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| evaluate_one(i, r, predictor, options))
        .collect();
    (aggregate(&rows), rows)
}

pub fn write_rows_csv<W: Write>(writer: W, rows: &[InstanceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(reader: R) -> Result<Vec<InstanceRow>> {
    let mut r = csv::Reader::from_reader(reader);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or("-".into(), |x| format!("{x:.prec$}"))
}

/// Fixed-width table with one line per `(c, f)` group plus the average.
pub fn render_table(metrics: &Metrics) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:>3} {:>6} {:>6} {:>12} {:>12} {:>11} {:>8} {:>9} {:>9}",
        "c", "f", "n", "TimeExact(s)", "TimeML(s)", "Timegain(%)", "Inf(%)", "PreInf(%)", "Optgap(%)"
    )
    .unwrap();
    let line = |s: &mut String, label: (String, String), g: &GroupMetrics| {
        writeln!(
            s,
            "{:>3} {:>6} {:>6} {:>12.6} {:>12.6} {:>11} {:>8.3} {:>9.3} {:>9}",
            label.0,
            label.1,
            g.count,
            g.time_exact,
            g.time_ml,
            opt(g.timegain_pct, 2),
            g.inf_pct,
            g.pre_repair_inf_pct,
            opt(g.optgap_pct, 3)
        )
        .unwrap();
    };
    for g in &metrics.groups {
        let label = (
            g.c.map_or("-".into(), |c| c.to_string()),
            g.f.map_or("-".into(), |f| f.to_string()),
        );
        line(&mut s, label, g);
    }
    line(&mut s, ("avg".into(), String::new()), &metrics.overall);
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubKind {
    /// The stored optimal setup.
    Oracle,
    /// The stored setup with its last period flipped.
    FlipLast,
    /// Every period closed.
    AllZeros,
}

/// Stand-in predictor answering from dataset labels.
pub struct LabelStub {
    kind: StubKind,
    labels: HashMap<Instance, SetupPlan>,
}

impl LabelStub {
    pub fn new(kind: StubKind, records: &[DatasetRecord]) -> Self {
        LabelStub {
            kind,
            labels: records
                .iter()
                .map(|r| (r.instance.clone(), r.y.clone()))
                .collect(),
        }
    }
}

impl SetupPredictor for LabelStub {
    fn predict(&self, instance: &Instance) -> Result<SetupPlan> {
        if self.kind == StubKind::AllZeros {
            return Ok(SetupPlan::all(instance.horizon(), false));
        }
        let y = self
            .labels
            .get(instance)
            .ok_or_else(|| crate::error::contract("instance has no stored label"))?;
        Ok(match self.kind {
            StubKind::FlipLast => y.with_last_flipped(),
            _ => y.clone(),
        })
    }
}

//! Labelled instance files: one JSON record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactSolver;
use crate::flow::solve_fixed_setup;
use crate::generator::{generate_instance, GeneratorConfig};
use crate::instance::{Instance, Money, Provenance, SetupPlan, Status};
use crate::nn::model::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// 80/10/10 split from a hash of the generator seed, so a given instance
/// keeps its split when a dataset is regenerated.
pub fn split_for_seed(seed: u64) -> Split {
    match mix_seed(seed, 0x5EED) % 10 {
        0..=7 => Split::Train,
        8 => Split::Valid,
        _ => Split::Test,
    }
}

/// Seed of the `index`-th candidate instance drawn from a base seed.
pub fn candidate_seed(base: u64, index: u64) -> u64 {
    mix_seed(base, index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub instance: Instance,
    pub y: SetupPlan,
    pub objective: Money,
    pub solver: Provenance,
    /// Seconds; zero when timing was disabled.
    pub solve_time: f64,
    pub split: Split,
}

impl DatasetRecord {
    /// Re-solves the stored setup and compares objectives exactly.
    pub fn verify(&self) -> std::result::Result<(), String> {
        match solve_fixed_setup(&self.instance, &self.y).map_err(|e| e.to_string())? {
            None => Err("stored setup is infeasible".into()),
            Some(sol) if sol.objective != self.objective => Err(format!(
                "stored objective {} but the setup costs {}",
                self.objective, sol.objective
            )),
            Some(_) => Ok(()),
        }
    }
}

/// Optimal label for one instance; `None` when it is infeasible.
pub fn label_instance(instance: Instance, solver: &ExactSolver, timing: bool) -> Result<Option<DatasetRecord>> {
    let sol = solver.solve(&instance)?;
    match sol.status {
        Status::Infeasible => return Ok(None),
        Status::Feasible => return Err(Error::LimitExhausted),
        Status::Optimal => {}
    }
    let objective = sol.objective.expect("optimal solutions carry an objective");
    assert!(objective > 0, "positive demand forces a positive optimum");
    let split = split_for_seed(instance.gen.map_or(0, |g| g.seed));
    Ok(Some(DatasetRecord {
        instance,
        y: sol.setup,
        objective,
        solver: sol.provenance,
        solve_time: if timing { sol.solve_time } else { 0.0 },
        split,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub count: usize,
    pub solver: ExactSolver,
    /// Record label solve times. Off gives byte-reproducible files.
    pub timing: bool,
}

/// Generates and labels `count` feasible instances. Candidate `i` uses seed
/// `candidate_seed(config.seed, i)`; infeasible candidates are skipped and
/// logged, so records keep candidate order.
pub fn build_dataset(config: &GeneratorConfig, options: &BuildOptions) -> Result<Vec<DatasetRecord>> {
    config.validate()?;
    if options.count == 0 {
        return Err(Error::Config("dataset count must be at least 1".into()));
    }
    let mut records = Vec::with_capacity(options.count);
    let mut next = 0u64;
    while records.len() < options.count {
        let want = options.count - records.len();
        let block: Vec<u64> = (next..next + want as u64).collect();
        next += want as u64;
        let labelled: Vec<(u64, Option<DatasetRecord>)> = block
            .into_par_iter()
            .map(|i| {
                let seed = candidate_seed(config.seed, i);
                let instance = generate_instance(&config.with_seed(seed))?;
                Ok((seed, label_instance(instance, &options.solver, options.timing)?))
            })
            .collect::<Result<_>>()?;
        for (seed, rec) in labelled {
            match rec {
                Some(r) => records.push(r),
                None => log::info!("seed {seed}: infeasible instance skipped"),
            }
        }
    }
    Ok(records)
}

pub fn write_dataset(path: impl AsRef<Path>, records: &[DatasetRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads and re-validates every record.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(&line).map_err(|e| Error::Dataset {
            index,
            reason: e.to_string(),
        })?;
        record.verify().map_err(|reason| Error::Dataset { index, reason })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::fixtures::{i1, y};

    fn options(count: usize) -> BuildOptions {
        BuildOptions {
            count,
            solver: ExactSolver::BruteForce,
            timing: false,
        }
    }

    #[test]
    fn builds_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let records = build_dataset(&GeneratorConfig::new(10, 3, 1000, 1), &options(100)).unwrap();
        assert_eq!(records.len(), 100);
        write_dataset(&path, &records).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, records);
        assert!(records.iter().all(|r| r.instance.gen.unwrap().c == 3));
    }

    #[test]
    fn identical_builds_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GeneratorConfig::new(8, 8, 10000, 5);
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        write_dataset(&a, &build_dataset(&cfg, &options(30)).unwrap()).unwrap();
        write_dataset(&b, &build_dataset(&cfg, &options(30)).unwrap()).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn injected_instance_label() {
        let rec = label_instance(i1(), &ExactSolver::BruteForce, false).unwrap().unwrap();
        assert_eq!(rec.y, y(&[1, 0]));
        assert_eq!(rec.objective, 30);
        assert_eq!(rec.solver, Provenance::BruteForce);
    }

    #[test]
    fn tampered_objective_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let mut rec = label_instance(i1(), &ExactSolver::BruteForce, false).unwrap().unwrap();
        rec.objective += 1;
        write_dataset(&path, &[rec]).unwrap();
        match read_dataset(&path) {
            Err(Error::Dataset { index: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_is_roughly_80_10_10() {
        let mut counts = [0usize; 3];
        for s in 0..100_000 {
            counts[split_for_seed(s) as usize] += 1;
        }
        assert!((79_000..81_000).contains(&counts[0]), "{counts:?}");
        assert!((9_500..10_500).contains(&counts[1]));
        assert!((9_500..10_500).contains(&counts[2]));
    }
}

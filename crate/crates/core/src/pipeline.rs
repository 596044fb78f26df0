//! Learned setup prediction followed by fix-and-solve with a last-period
//! flip repair and an optional exact fallback.

use std::time::Instant;

use crate::encoding::encode_source;
use crate::error::{Error, Result};
use crate::exact::ExactSolver;
use crate::flow::{solve_fixed_setup, FlowSolution};
use crate::instance::{Instance, Provenance, SetupPlan, Solution, Status};
use crate::nn::train::greedy_decode;
use crate::nn::ModelCheckpoint;

/// Anything that proposes a setup vector for an instance.
pub trait SetupPredictor: Sync {
    fn predict(&self, instance: &Instance) -> Result<SetupPlan>;
}

impl SetupPredictor for ModelCheckpoint {
    fn predict(&self, instance: &Instance) -> Result<SetupPlan> {
        predict_setup(instance, self)
    }
}

impl<F> SetupPredictor for F
where
    F: Fn(&Instance) -> Result<SetupPlan> + Sync,
{
    fn predict(&self, instance: &Instance) -> Result<SetupPlan> {
        self(instance)
    }
}

pub fn predict_setup(instance: &Instance, checkpoint: &ModelCheckpoint) -> Result<SetupPlan> {
    let model = &checkpoint.model;
    let source = encode_source(instance, &checkpoint.tokenizer);
    let n = instance.horizon();
    if n > model.max_target_len || source.0.len() > model.max_source_len {
        return Err(Error::TooLarge(format!(
            "horizon {n} exceeds model capacity of {} periods",
            model.max_target_len.min(model.max_source_len / crate::encoding::NUM_FEATURES)
        )));
    }
    greedy_decode(&checkpoint.params, model, &source.0, n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepairOptions {
    pub flip_last: bool,
    pub fallback_exact: bool,
    pub evaluate_candidates_concurrently: bool,
    pub fallback_solver: ExactSolver,
}

impl Default for RepairOptions {
    fn default() -> Self {
        RepairOptions {
            flip_last: true,
            fallback_exact: true,
            evaluate_candidates_concurrently: false,
            fallback_solver: ExactSolver::default(),
        }
    }
}

/// Result of repair together with what happened to each candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub solution: Solution,
    pub predicted: SetupPlan,
    /// Candidate A (the prediction as-is) was feasible.
    pub direct_feasible: bool,
    /// Candidate B (last period flipped) was feasible; `None` if not tried.
    pub flipped_feasible: Option<bool>,
}

fn feasible_solution(setup: SetupPlan, sol: FlowSolution, provenance: Provenance) -> Solution {
    Solution {
        status: Status::Feasible,
        setup,
        plan: Some(sol.plan),
        objective: Some(sol.objective),
        solve_time: 0.0,
        provenance,
    }
}

pub fn repair(instance: &Instance, predicted: &SetupPlan, options: &RepairOptions) -> Result<RepairOutcome> {
    let start = Instant::now();
    instance.require_len("predicted setup", predicted.len())?;
    let flipped = (options.flip_last && !predicted.is_empty()).then(|| predicted.with_last_flipped());

    let (a, b) = match &flipped {
        Some(f) if options.evaluate_candidates_concurrently => {
            rayon::join(|| solve_fixed_setup(instance, predicted), || solve_fixed_setup(instance, f))
        }
        Some(f) => (solve_fixed_setup(instance, predicted), solve_fixed_setup(instance, f)),
        None => (solve_fixed_setup(instance, predicted), Ok(None)),
    };
    let (a, b) = (a?, b?);
    let direct_feasible = a.is_some();
    let flipped_feasible = flipped.as_ref().map(|_| b.is_some());

    let mut solution = match (a, b, flipped) {
        (Some(a), Some(b), Some(f)) if b.objective < a.objective => {
            feasible_solution(f, b, Provenance::MLFlipped)
        }
        (Some(a), _, _) => feasible_solution(predicted.clone(), a, Provenance::MLDirect),
        (None, Some(b), Some(f)) => feasible_solution(f, b, Provenance::MLFlipped),
        _ if options.fallback_exact => {
            let mut sol = options.fallback_solver.solve(instance)?;
            sol.provenance = Provenance::ExactFallback;
            sol
        }
        _ => Solution::infeasible(instance.horizon(), Provenance::MLDirect, 0.0),
    };
    solution.solve_time = start.elapsed().as_secs_f64();
    Ok(RepairOutcome {
        solution,
        predicted: predicted.clone(),
        direct_feasible,
        flipped_feasible,
    })
}

/// Candidate A is the prediction, candidate B flips its last period; the
/// cheaper feasible one wins with ties going to A. If neither is feasible the
/// exact fallback runs when enabled.
pub fn repair_and_solve(instance: &Instance, predicted: &SetupPlan, options: &RepairOptions) -> Result<Solution> {
    Ok(repair(instance, predicted, options)?.solution)
}

/// Prediction plus repair; `solution.solve_time` covers both.
pub fn solve_ml(
    instance: &Instance,
    predictor: &dyn SetupPredictor,
    options: &RepairOptions,
) -> Result<RepairOutcome> {
    let start = Instant::now();
    let predicted = predictor.predict(instance)?;
    let mut outcome = repair(instance, &predicted, options)?;
    outcome.solution.solve_time = start.elapsed().as_secs_f64();
    Ok(outcome)
}

//! Choosing the number of communication rounds on a validation set.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{global_loss, run_round, LocalDataset, ModelVector, TrainerConfig};
use crate::error::{Error, Result};

/// Metrics closer than this count as equal.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMetrics {
    pub rounds: usize,
    pub train_loss: f64,
    pub validation_metric: f64,
    pub test_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSelection {
    pub chosen: usize,
    pub metric_name: String,
    pub test_metric_at_chosen: f64,
    pub table: Vec<CandidateMetrics>,
}

/// Trains once up to the largest candidate, checkpointing validation and test
/// metrics at every candidate, and returns the candidate with the best
/// validation metric. Ties go to the smaller round count.
///
/// One pass is enough because training to `R` and then continuing is the same
/// computation as training to `R' > R` with the same generator.
#[allow(clippy::too_many_arguments)]
pub fn select_rounds<R: RngCore + ?Sized>(
    candidates: &[usize],
    init: &ModelVector,
    train: &[LocalDataset],
    validation: &LocalDataset,
    test: &LocalDataset,
    cfg: &TrainerConfig,
    rng: &mut R,
) -> Result<RoundSelection> {
    if candidates.is_empty() {
        return Err(Error::Argument("round candidates must be non-empty".into()));
    }
    if candidates[0] == 0 || candidates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument(format!(
            "round candidates must be positive and strictly ascending, got {candidates:?}"
        )));
    }
    let task = cfg.task;
    let higher_is_better = task.higher_is_better();
    let mut global = init.clone();
    let mut table = Vec::with_capacity(candidates.len());
    let mut next = candidates.iter().peekable();
    let last = *candidates.last().expect("non-empty");
    for round in 1..=last {
        global = run_round(&global, train, cfg, rng)?.0;
        if next.peek() == Some(&&round) {
            next.next();
            table.push(CandidateMetrics {
                rounds: round,
                train_loss: global_loss(&global, train, task)?,
                validation_metric: task.metric(&global, validation)?,
                test_metric: task.metric(&global, test)?,
            });
        }
    }

    let mut best = &table[0];
    for row in &table[1..] {
        let improves = if higher_is_better {
            row.validation_metric > best.validation_metric + TIE_TOLERANCE
        } else {
            row.validation_metric < best.validation_metric - TIE_TOLERANCE
        };
        if improves {
            best = row;
        }
    }
    Ok(RoundSelection {
        chosen: best.rounds,
        metric_name: task.metric_name().to_string(),
        test_metric_at_chosen: best.test_metric,
        table: table.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fl::{BatchMode, Sample, Task};
    use crate::rng;

    fn regression_problem() -> (Vec<LocalDataset>, LocalDataset) {
        let rows = [
            ([1.0, 0.2], 1.0),
            ([0.3, 1.0], -1.0),
            ([0.5, 0.5], 0.2),
            ([-0.4, 0.8], -0.9),
        ];
        let data = LocalDataset::new(
            rows.iter()
                .map(|(q, v)| Sample {
                    features: q.to_vec(),
                    target: *v,
                })
                .collect(),
        )
        .unwrap();
        (vec![data.clone(), data.clone()], data)
    }

    fn cfg() -> TrainerConfig {
        TrainerConfig {
            learning_rate: 0.05,
            local_iters: 1,
            task: Task::LinearRegressionSqLoss,
            batch: BatchMode::FullBatch,
        }
    }

    #[test]
    fn single_candidate_is_returned() {
        let (train, val) = regression_problem();
        let w0 = ModelVector::zeros(2).unwrap();
        let s = select_rounds(&[5], &w0, &train, &val, &val, &cfg(), &mut rng::stream(1, &[])).unwrap();
        assert_eq!(s.chosen, 5);
        assert_eq!(s.table.len(), 1);
    }

    #[test]
    fn improving_problem_picks_largest() {
        let (train, val) = regression_problem();
        let w0 = ModelVector::zeros(2).unwrap();
        let s = select_rounds(&[1, 3, 10, 30], &w0, &train, &val, &val, &cfg(), &mut rng::stream(1, &[]))
            .unwrap();
        assert!(s.table.windows(2).all(|w| w[1].validation_metric < w[0].validation_metric));
        assert_eq!(s.chosen, 30);
    }

    #[test]
    fn invalid_candidates_rejected() {
        let (train, val) = regression_problem();
        let w0 = ModelVector::zeros(2).unwrap();
        let mut r = rng::stream(1, &[]);
        assert!(select_rounds(&[], &w0, &train, &val, &val, &cfg(), &mut r).is_err());
        assert!(select_rounds(&[5, 3], &w0, &train, &val, &val, &cfg(), &mut r).is_err());
        assert!(select_rounds(&[0, 3], &w0, &train, &val, &val, &cfg(), &mut r).is_err());
    }

    #[test]
    fn exact_convergence_ties_to_smaller_candidate() {
        // one step with lr = 1 on a unit feature lands on the minimizer
        let data = LocalDataset::new(vec![Sample {
            features: vec![1.0],
            target: 2.0,
        }])
        .unwrap();
        let c = TrainerConfig {
            learning_rate: 1.0,
            ..cfg()
        };
        let w0 = ModelVector::zeros(1).unwrap();
        let s = select_rounds(
            &[2, 4, 6],
            &w0,
            std::slice::from_ref(&data),
            &data,
            &data,
            &c,
            &mut rng::stream(1, &[]),
        )
        .unwrap();
        assert_eq!(s.chosen, 2);
        assert!(s.table.iter().all(|r| r.validation_metric == 0.0));
    }
}

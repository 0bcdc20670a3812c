//! Continual-learning metrics over the evaluation matrix `r[i][j]` (mean
//! return on task `i` after finishing task `j`) and seed aggregation.
//!
//! Retention for task `i`: `100 * r[i][T-1] / r[i][i]`, averaged over all but
//! the last task. Forward transfer for task `i`: `100 * r[i][i] / r*_i` with
//! the from-scratch reference `r*_i`, averaged over all but the first task.
//! Ratios with near-zero denominators are reported as undefined rather than
//! exploding; negative denominators are flagged because percentage ratios
//! lose their meaning there.

use crate::error::{Error, Result};
use crate::runner::RunRecord;
use serde::{Deserialize, Serialize};

/// Denominators smaller than this in magnitude make a ratio undefined.
pub const RATIO_GUARD: f64 = 1e-6;

/// A guarded percentage ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Ratio {
    Value {
        value: f64,
        /// The denominator was negative; the percentage is reported but its
        /// ordering intuition ("higher is better") does not hold.
        negative_denominator: bool,
    },
    Undefined,
}

impl Ratio {
    pub fn value(&self) -> Option<f64> {
        match self {
            Ratio::Value { value, .. } => Some(*value),
            Ratio::Undefined => None,
        }
    }

    pub fn is_flagged(&self) -> bool {
        matches!(self, Ratio::Value { negative_denominator: true, .. })
    }
}

/// `100 * num / den`, guarded.
pub fn percent_ratio(num: f64, den: f64) -> Ratio {
    if den.abs() < RATIO_GUARD {
        Ratio::Undefined
    } else {
        Ratio::Value { value: 100.0 * num / den, negative_denominator: den < 0.0 }
    }
}

/// Mean of ratios; undefined if any component is undefined, flagged if any
/// component is flagged.
pub fn mean_ratio(parts: &[Ratio]) -> Ratio {
    if parts.is_empty() {
        return Ratio::Undefined;
    }
    let mut sum = 0.0;
    let mut flagged = false;
    for p in parts {
        match p {
            Ratio::Value { value, negative_denominator } => {
                sum += value;
                flagged |= negative_denominator;
            }
            Ratio::Undefined => return Ratio::Undefined,
        }
    }
    Ratio::Value { value: sum / parts.len() as f64, negative_denominator: flagged }
}

fn cell(rec: &RunRecord, i: usize, j: usize) -> Result<f64> {
    rec.eval
        .get(i)
        .and_then(|row| row.get(j))
        .copied()
        .flatten()
        .ok_or_else(|| Error::State(format!("evaluation cell ({i},{j}) is missing")))
}

/// Per-task retention `100 * r[i][T-1] / r[i][i]` for `i = 0..T-1` (the last
/// task is excluded: its retention is 100 by construction).
pub fn retention_per_task(rec: &RunRecord) -> Result<Vec<Ratio>> {
    let t = rec.eval.len();
    if t < 2 {
        return Err(Error::State("retention needs at least two tasks".into()));
    }
    (0..t - 1)
        .map(|i| Ok(percent_ratio(cell(rec, i, t - 1)?, cell(rec, i, i)?)))
        .collect()
}

/// Average retention over all but the last task.
pub fn retention(rec: &RunRecord) -> Result<Ratio> {
    Ok(mean_ratio(&retention_per_task(rec)?))
}

/// Per-task forward transfer `100 * r[i][i] / r*_i` for `i = 1..T` (the first
/// task has no prior knowledge to transfer). `rstar[i]` is the from-scratch
/// single-task reference for task `i`.
pub fn forward_transfer_per_task(rec: &RunRecord, rstar: &[f64]) -> Result<Vec<Ratio>> {
    let t = rec.eval.len();
    if rstar.len() != t {
        return Err(Error::Config(format!(
            "reference length {} does not match task count {t}",
            rstar.len()
        )));
    }
    (1..t)
        .map(|i| Ok(percent_ratio(cell(rec, i, i)?, rstar[i])))
        .collect()
}

/// Average forward transfer over all but the first task.
pub fn forward_transfer(rec: &RunRecord, rstar: &[f64]) -> Result<Ratio> {
    Ok(mean_ratio(&forward_transfer_per_task(rec, rstar)?))
}

/// Mean and population standard deviation across seeds. With fewer than two
/// seeds the spread is not reportable (`std = None`, printed as "n/a").
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::State("aggregate over zero seeds".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n >= 2).then(|| {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt()
    });
    Ok(Aggregate { mean, std, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Method;
    use crate::envs::EnvKind;
    use approx::assert_relative_eq;

    fn rec_with_eval(eval: Vec<Vec<Option<f64>>>) -> RunRecord {
        RunRecord {
            method: Method::Hypercrl,
            env: EnvKind::Slide,
            seed: 0,
            episodes: Vec::new(),
            eval,
            hyper_drift: None,
            hygiene_violations: 0,
            train_env_steps: 0,
            eval_env_steps: 0,
        }
    }

    fn full_matrix(t: usize, f: impl Fn(usize, usize) -> f64) -> Vec<Vec<Option<f64>>> {
        (0..t)
            .map(|i| (0..t).map(|j| (i <= j).then(|| f(i, j))).collect())
            .collect()
    }

    #[test]
    fn retention_hand_case() {
        // 3 tasks: r[0][0]=10, r[0][2]=8 -> 80%; r[1][1]=20, r[1][2]=15 -> 75%
        let mut eval = full_matrix(3, |_, _| 1.0);
        eval[0][0] = Some(10.0);
        eval[0][2] = Some(8.0);
        eval[1][1] = Some(20.0);
        eval[1][2] = Some(15.0);
        let rec = rec_with_eval(eval);
        let per = retention_per_task(&rec).unwrap();
        assert_relative_eq!(per[0].value().unwrap(), 80.0);
        assert_relative_eq!(per[1].value().unwrap(), 75.0);
        assert_relative_eq!(retention(&rec).unwrap().value().unwrap(), 77.5);
    }

    #[test]
    fn forward_transfer_hand_case() {
        // r[1][1]=30 vs r*=20 -> 150%; r[2][2]=10 vs r*=40 -> 25%
        let mut eval = full_matrix(3, |_, _| 1.0);
        eval[1][1] = Some(30.0);
        eval[2][2] = Some(10.0);
        let rec = rec_with_eval(eval);
        let rstar = [5.0, 20.0, 40.0];
        let per = forward_transfer_per_task(&rec, &rstar).unwrap();
        assert_relative_eq!(per[0].value().unwrap(), 150.0);
        assert_relative_eq!(per[1].value().unwrap(), 25.0);
        assert_relative_eq!(forward_transfer(&rec, &rstar).unwrap().value().unwrap(), 87.5);
        // first task never contributes
        assert_eq!(per.len(), 2);
    }

    #[test]
    fn ratios_are_scale_invariant() {
        let base = full_matrix(4, |i, j| 3.0 + i as f64 + 0.5 * j as f64);
        for scale in [0.5, 2.0, 100.0] {
            let scaled: Vec<Vec<Option<f64>>> = base
                .iter()
                .map(|row| row.iter().map(|c| c.map(|v| v * scale)).collect())
                .collect();
            let a = retention(&rec_with_eval(base.clone())).unwrap().value().unwrap();
            let b = retention(&rec_with_eval(scaled)).unwrap().value().unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn near_zero_denominator_is_undefined() {
        assert_eq!(percent_ratio(5.0, 0.0), Ratio::Undefined);
        assert_eq!(percent_ratio(5.0, 1e-7), Ratio::Undefined);
        assert!(percent_ratio(5.0, 1e-5).value().is_some());
        let mut eval = full_matrix(2, |_, _| 1.0);
        eval[0][0] = Some(0.0);
        assert_eq!(retention(&rec_with_eval(eval)).unwrap(), Ratio::Undefined);
    }

    #[test]
    fn negative_denominator_is_flagged() {
        let r = percent_ratio(-50.0, -100.0);
        assert_relative_eq!(r.value().unwrap(), 50.0);
        assert!(r.is_flagged());
        let mut eval = full_matrix(2, |_, _| 1.0);
        eval[0][0] = Some(-10.0);
        eval[0][1] = Some(-8.0);
        let agg = retention(&rec_with_eval(eval)).unwrap();
        assert_relative_eq!(agg.value().unwrap(), 80.0);
        assert!(agg.is_flagged());
    }

    #[test]
    fn aggregate_population_std() {
        let a = aggregate(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_relative_eq!(a.mean, 5.0);
        assert_relative_eq!(a.std.unwrap(), 2.0); // classic population-std case
        let one = aggregate(&[3.5]).unwrap();
        assert_eq!(one.std, None);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn missing_cells_error() {
        let mut eval = full_matrix(3, |_, _| 1.0);
        eval[0][2] = None;
        assert!(retention(&rec_with_eval(eval)).is_err());
        let rec = rec_with_eval(full_matrix(3, |_, _| 1.0));
        assert!(forward_transfer(&rec, &[1.0, 2.0]).is_err());
    }
}

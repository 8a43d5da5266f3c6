//! Pareto dominance and frontier extraction. Every objective is oriented so
//! that larger is better.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::invalid;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectivePoint<P = ()> {
    pub values: Vec<f64>,
    pub payload: P,
}

impl ObjectivePoint<()> {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, payload: () }
    }
}

impl<P> ObjectivePoint<P> {
    pub fn with_payload(values: Vec<f64>, payload: P) -> Self {
        Self { values, payload }
    }
}

/// True iff `a` is at least as good as `b` everywhere and strictly better
/// somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(invalid(format!("cannot compare {}-objective and {}-objective points", a.len(), b.len())));
    }
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return Ok(false);
        }
        strict |= x > y;
    }
    Ok(strict)
}

/// True iff `a + tol >= b` in every objective: `a` weakly dominates `b`
/// once each objective of `a` is granted its slack.
pub fn weakly_dominates_within(a: &[f64], b: &[f64], tol: &[f64]) -> Result<bool> {
    if a.len() != b.len() || a.len() != tol.len() {
        return Err(invalid(format!(
            "cannot compare {}-objective and {}-objective points with {} tolerances",
            a.len(),
            b.len(),
            tol.len()
        )));
    }
    Ok(a.iter().zip(b).zip(tol).all(|((x, y), t)| x + t >= *y))
}

fn validate(values: &[&[f64]]) -> Result<()> {
    let Some(first) = values.first() else {
        return Ok(());
    };
    let k = first.len();
    if k < 2 {
        return Err(invalid(format!("points need at least two objectives, got {k}")));
    }
    for (i, v) in values.iter().enumerate() {
        if v.len() != k {
            return Err(invalid(format!("point {i} has {} objectives, expected {k}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(invalid(format!("point {i} has a non-finite objective")));
        }
    }
    Ok(())
}

/// Indices (ascending) of the points no other point dominates.
pub fn frontier_indices(values: &[&[f64]]) -> Result<Vec<usize>> {
    validate(values)?;
    let mut keep = Vec::new();
    'outer: for (i, v) in values.iter().enumerate() {
        for (j, w) in values.iter().enumerate() {
            if i != j && dominates(w, v)? {
                continue 'outer;
            }
        }
        keep.push(i);
    }
    Ok(keep)
}

/// The non-dominated subset of `points`, in input order. Exact duplicates
/// of a frontier point are all kept.
pub fn pareto_frontier<P: Clone>(points: &[ObjectivePoint<P>]) -> Result<Vec<ObjectivePoint<P>>> {
    let values: Vec<&[f64]> = points.iter().map(|p| p.values.as_slice()).collect();
    Ok(frontier_indices(&values)?
        .into_iter()
        .map(|i| points[i].clone())
        .collect())
}

/// Whether the label information in the encoder is pushed up or down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Add,
    Remove,
}

impl Mode {
    /// Sign applied to the probe loss gradient that reaches the encoder.
    pub fn sign(self) -> f64 {
        match self {
            Mode::Add => 1.0,
            Mode::Remove => -1.0,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Add => "Add",
            Mode::Remove => "Remove",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "add" => Ok(Mode::Add),
            "remove" => Ok(Mode::Remove),
            _ => Err(invalid(format!("unknown mode {s:?} (expected Add or Remove)"))),
        }
    }
}

/// The task-performance coordinate of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskScore {
    /// Held-out loss in nats per token; lower is better.
    Loss(f64),
    /// BLEU; higher is better.
    Bleu(f64),
}

/// Two-objective point for a run: task performance, then probe
/// cross-entropy negated for `Add` and kept as is for `Remove`.
pub fn orient(task: TaskScore, probe_ce: f64, mode: Mode) -> ObjectivePoint {
    let first = match task {
        TaskScore::Loss(l) => -l,
        TaskScore::Bleu(b) => b,
    };
    let second = match mode {
        Mode::Add => -probe_ce,
        Mode::Remove => probe_ce,
    };
    ObjectivePoint::new(alloc::vec![first, second])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn dominance_cases() {
        assert!(dominates(&[2.0, 3.0], &[1.0, 3.0]).unwrap());
        assert!(!dominates(&[2.0, 1.0], &[1.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[2.0, 1.0]).unwrap());
        assert!(!dominates(&[1.0, 1.0], &[1.0, 1.0]).unwrap());
        assert!(dominates(&[1.0, 1.0], &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn tolerant_weak_dominance() {
        assert!(weakly_dominates_within(&[1.0, 1.0], &[1.0, 1.0], &[0.0, 0.0]).unwrap());
        assert!(!weakly_dominates_within(&[1.0, 0.97], &[1.0, 1.0], &[0.0, 0.02]).unwrap());
        assert!(weakly_dominates_within(&[1.0, 0.99], &[1.0, 1.0], &[0.0, 0.02]).unwrap());
        assert!(weakly_dominates_within(&[1.0], &[1.0, 1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn frontier_examples() {
        let pts: Vec<ObjectivePoint> = [[1.0, 1.0], [2.0, 0.0], [0.0, 2.0], [1.0, 0.0], [0.0, 0.0]]
            .iter()
            .map(|v| ObjectivePoint::new(v.to_vec()))
            .collect();
        let f = pareto_frontier(&pts).unwrap();
        assert_eq!(f, pts[..3].to_vec());
        assert_eq!(pareto_frontier(&pts[4..]).unwrap(), pts[4..].to_vec());
        let same = vec![ObjectivePoint::new(vec![0.5, 0.5]); 4];
        assert_eq!(pareto_frontier(&same).unwrap().len(), 4);
        assert!(pareto_frontier::<()>(&[]).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_points() {
        assert!(frontier_indices(&[&[1.0]]).is_err());
        assert!(frontier_indices(&[&[1.0, 2.0], &[1.0, 2.0, 3.0]]).is_err());
        assert!(frontier_indices(&[&[1.0, f64::NAN]]).is_err());
    }

    #[test]
    fn orientation() {
        assert_eq!(orient(TaskScore::Loss(2.0), 0.5, Mode::Add).values, vec![-2.0, -0.5]);
        assert_eq!(orient(TaskScore::Loss(2.0), 0.5, Mode::Remove).values, vec![-2.0, 0.5]);
        assert_eq!(orient(TaskScore::Bleu(30.0), 0.5, Mode::Add).values, vec![30.0, -0.5]);
        let low = orient(TaskScore::Loss(2.0), 0.4, Mode::Add);
        let high = orient(TaskScore::Loss(2.0), 0.6, Mode::Add);
        assert!(dominates(&low.values, &high.values).unwrap());
    }

    #[test]
    fn mode_round_trip() {
        for m in [Mode::Add, Mode::Remove] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("sideways".parse::<Mode>().is_err());
    }
}

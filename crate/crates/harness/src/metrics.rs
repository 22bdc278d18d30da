//! Accuracy metrics and channel-condition labels.

use std::fmt;

use crate::error::{HarnessError, Result};

/// Root-mean-square error in dB.
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(HarnessError::LengthMismatch(predictions.len(), truths.len()));
    }
    if predictions.is_empty() {
        return Err(HarnessError::Empty("rmse"));
    }
    let sq: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sq / predictions.len() as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Condition {
    Los,
    Nlos,
    Transition,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Los, Condition::Nlos, Condition::Transition];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Los => "LoS",
            Condition::Nlos => "NLoS",
            Condition::Transition => "Transition",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Band thresholds around the unblocked and blocked power levels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub los_dbm: f64,
    pub depth_db: f64,
    pub delta_db: f64,
}

impl Thresholds {
    pub fn classify(&self, p_dbm: f64) -> Condition {
        if (p_dbm - self.los_dbm).abs() <= self.delta_db {
            Condition::Los
        } else if (p_dbm - (self.los_dbm - self.depth_db)).abs() <= self.delta_db {
            Condition::Nlos
        } else {
            Condition::Transition
        }
    }
}

pub fn condition_labels(power_dbm: &[f64], t: &Thresholds) -> Vec<Condition> {
    power_dbm.iter().map(|&p| t.classify(p)).collect()
}

/// RMSE restricted to one condition; NaN when no sample carries it.
pub fn condition_rmse(predictions: &[f64], truths: &[f64], labels: &[Condition], which: Condition) -> Result<f64> {
    if labels.len() != truths.len() {
        return Err(HarnessError::LengthMismatch(labels.len(), truths.len()));
    }
    let (p, t): (Vec<f64>, Vec<f64>) = predictions
        .iter()
        .zip(truths)
        .zip(labels)
        .filter(|(_, l)| **l == which)
        .map(|((p, t), _)| (*p, *t))
        .unzip();
    if p.is_empty() {
        return Ok(f64::NAN);
    }
    rmse(&p, &t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[1.5, -0.5, 4.5], &[0.0, -2.0, 3.0]).unwrap() - 1.5).abs() < 1e-12);
        assert!((rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap() - 3.5355).abs() < 1e-4);
        assert!(matches!(rmse(&[], &[]), Err(HarnessError::Empty(_))));
        assert!(matches!(rmse(&[1.0], &[]), Err(HarnessError::LengthMismatch(1, 0))));
    }

    #[test]
    fn labels_follow_bands() {
        let t = Thresholds { los_dbm: -29.0, depth_db: 15.0, delta_db: 3.0 };
        assert_eq!(t.classify(-29.0), Condition::Los);
        assert_eq!(t.classify(-44.0), Condition::Nlos);
        assert_eq!(t.classify(-37.0), Condition::Transition);
        assert_eq!(t.classify(-32.0), Condition::Los);
        assert_eq!(t.classify(-41.0), Condition::Nlos);
    }

    #[test]
    fn per_condition_subsets() {
        let labels = [Condition::Los, Condition::Nlos, Condition::Los];
        let r = condition_rmse(&[1.0, 5.0, 3.0], &[0.0, 0.0, 0.0], &labels, Condition::Los).unwrap();
        assert!((r - 5f64.sqrt()).abs() < 1e-12);
        assert!(condition_rmse(&[1.0], &[0.0], &[Condition::Los], Condition::Transition).unwrap().is_nan());
    }
}

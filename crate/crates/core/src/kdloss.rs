//! Distillation loss arithmetic.
//!
//! The distillation objective over a sequence of token positions combines
//! a hard cross-entropy against the pseudo-label token ids with a KL
//! divergence from the teacher's output distribution to the student's:
//!
//! ```text
//! loss = beta * ce + gamma * kl
//! ce   = -sum_i ln(student[i][target_i])
//! kl   = sum_i sum_j teacher[i][j] * ln(teacher[i][j] / student[i][j])
//! ```
//!
//! with student probabilities floored at 1e-12 inside logarithms. This
//! module is the reference for validating exported training fixtures; it
//! is generic over the float type via [`num_traits::Float`] (`f64` for
//! checking, `f32` to mirror on-disk tensors bit for bit), with `f64`
//! aliases exported at the crate root.

use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Student probabilities are floored at this value inside logarithms so a
/// zero never produces an infinite loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Default tolerance for the row-sum-to-one check, sized for `f64` rows.
/// Use [`DistributionSequence::with_tolerance`] for `f32` data.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Errors from loss computation.
#[derive(Debug, thiserror::Error)]
pub enum KdError {
    #[error("position {position}: {reason}")]
    InvalidDistribution { position: usize, reason: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("position {position}: target id {target} out of range for vocab {vocab}")]
    TargetOutOfRange {
        position: usize,
        target: usize,
        vocab: usize,
    },
}

/// A validated sequence of per-position probability distributions over a
/// fixed vocabulary: every row is non-negative, finite and sums to one
/// within tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSequence<F> {
    rows: Vec<Vec<F>>,
    vocab: usize,
}

impl<F: Float> DistributionSequence<F> {
    /// Validates with the default [`ROW_SUM_TOLERANCE`].
    pub fn new(rows: Vec<Vec<F>>) -> Result<Self, KdError> {
        let tol = F::from(ROW_SUM_TOLERANCE).expect("tolerance representable");
        Self::with_tolerance(rows, tol)
    }

    /// Validates with a caller-chosen row-sum tolerance (e.g. looser for
    /// `f32` rows, whose sums rarely land within 1e-9 of one).
    pub fn with_tolerance(rows: Vec<Vec<F>>, tolerance: F) -> Result<Self, KdError> {
        let vocab = rows.first().map_or(0, Vec::len);
        for (position, row) in rows.iter().enumerate() {
            if row.len() != vocab {
                return Err(KdError::DimensionMismatch(format!(
                    "row {position} has {} entries, expected {vocab}",
                    row.len()
                )));
            }
            if vocab == 0 {
                return Err(KdError::InvalidDistribution {
                    position,
                    reason: "empty distribution row".into(),
                });
            }
            let mut sum = F::zero();
            for &p in row {
                if !(p >= F::zero()) || !p.is_finite() {
                    return Err(KdError::InvalidDistribution {
                        position,
                        reason: format!(
                            "probability {} is negative or non-finite",
                            p.to_f64().unwrap_or(f64::NAN)
                        ),
                    });
                }
                sum = sum + p;
            }
            if (sum - F::one()).abs() > tolerance {
                return Err(KdError::InvalidDistribution {
                    position,
                    reason: format!(
                        "row sums to {}, not 1",
                        sum.to_f64().unwrap_or(f64::NAN)
                    ),
                });
            }
        }
        Ok(Self { rows, vocab })
    }

    /// Number of token positions.
    pub fn positions(&self) -> usize {
        self.rows.len()
    }

    /// Vocabulary size (0 only for an empty sequence).
    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn row(&self, position: usize) -> &[F] {
        &self.rows[position]
    }

    pub fn rows(&self) -> &[Vec<F>] {
        &self.rows
    }
}

/// Loss weights: `loss = beta * ce + gamma * kl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdLossConfig<F> {
    pub beta: F,
    pub gamma: F,
}

impl<F: Float> Default for KdLossConfig<F> {
    fn default() -> Self {
        Self {
            beta: F::from(0.8).expect("0.8 representable"),
            gamma: F::one(),
        }
    }
}

impl<F: Float> KdLossConfig<F> {
    pub fn validate(&self) -> Result<(), KdError> {
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma)] {
            if !v.is_finite() || v < F::zero() {
                return Err(KdError::DimensionMismatch(format!(
                    "{name} must be finite and non-negative, got {}",
                    v.to_f64().unwrap_or(f64::NAN)
                )));
            }
        }
        Ok(())
    }
}

fn floored<F: Float>(p: F) -> F {
    p.max(F::from(PROB_FLOOR).expect("floor representable"))
}

fn check_same_shape<F: Float>(
    a: &DistributionSequence<F>,
    b: &DistributionSequence<F>,
    a_name: &str,
    b_name: &str,
) -> Result<(), KdError> {
    if a.positions() != b.positions() {
        return Err(KdError::DimensionMismatch(format!(
            "{a_name} has {} positions, {b_name} has {}",
            a.positions(),
            b.positions()
        )));
    }
    if a.positions() > 0 && a.vocab_size() != b.vocab_size() {
        return Err(KdError::DimensionMismatch(format!(
            "{a_name} vocab {} differs from {b_name} vocab {}",
            a.vocab_size(),
            b.vocab_size()
        )));
    }
    Ok(())
}

/// Hard-label cross entropy: `-sum_i ln(student[i][target_i])`, student
/// probabilities floored. Zero exactly when the student puts probability
/// one on every target.
pub fn cross_entropy<F: Float>(
    student: &DistributionSequence<F>,
    targets: &[usize],
) -> Result<F, KdError> {
    if targets.len() != student.positions() {
        return Err(KdError::DimensionMismatch(format!(
            "{} targets for {} student positions",
            targets.len(),
            student.positions()
        )));
    }
    let mut total = F::zero();
    for (position, (&target, row)) in targets.iter().zip(student.rows()).enumerate() {
        if target >= student.vocab_size() {
            return Err(KdError::TargetOutOfRange {
                position,
                target,
                vocab: student.vocab_size(),
            });
        }
        total = total - floored(row[target]).ln();
    }
    Ok(total)
}

/// Forward KL from teacher to student:
/// `sum_i sum_j q * ln(q / p)` with `q = teacher[i][j]`,
/// `p = student[i][j]` floored. Zero-probability teacher entries
/// contribute nothing. Exactly zero when the rows are identical.
pub fn kl_divergence<F: Float>(
    teacher: &DistributionSequence<F>,
    student: &DistributionSequence<F>,
) -> Result<F, KdError> {
    check_same_shape(teacher, student, "teacher", "student")?;
    let mut total = F::zero();
    for (q_row, p_row) in teacher.rows().iter().zip(student.rows()) {
        for (&q, &p) in q_row.iter().zip(p_row) {
            if q > F::zero() {
                total = total + q * (q.ln() - floored(p).ln());
            }
        }
    }
    Ok(total)
}

/// Combined loss breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KdLoss<F> {
    pub ce: F,
    pub kl: F,
    /// `beta * ce + gamma * kl`.
    pub total: F,
    pub positions: usize,
}

impl<F: Float> KdLoss<F> {
    /// Mean cross entropy per position (0 for an empty sequence).
    pub fn ce_per_position(&self) -> F {
        if self.positions == 0 {
            F::zero()
        } else {
            self.ce / F::from(self.positions).expect("position count representable")
        }
    }

    /// Mean KL per position (0 for an empty sequence).
    pub fn kl_per_position(&self) -> F {
        if self.positions == 0 {
            F::zero()
        } else {
            self.kl / F::from(self.positions).expect("position count representable")
        }
    }
}

/// Full distillation loss over a sequence.
pub fn kd_loss<F: Float>(
    teacher: &DistributionSequence<F>,
    student: &DistributionSequence<F>,
    targets: &[usize],
    cfg: &KdLossConfig<F>,
) -> Result<KdLoss<F>, KdError> {
    cfg.validate()?;
    check_same_shape(teacher, student, "teacher", "student")?;
    let ce = cross_entropy(student, targets)?;
    let kl = kl_divergence(teacher, student)?;
    Ok(KdLoss {
        ce,
        kl,
        total: cfg.beta * ce + cfg.gamma * kl,
        positions: student.positions(),
    })
}

/// One exported training fixture record (JSONL): `k` positions over a
/// `v`-token vocabulary with teacher/student rows and pseudo-label ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdFixture {
    pub k: usize,
    pub v: usize,
    pub teacher: Vec<Vec<f64>>,
    pub student: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
}

/// Validates a fixture's declared shape against its payload and computes
/// its loss.
pub fn evaluate_fixture(fixture: &KdFixture, cfg: &KdLossConfig<f64>) -> Result<KdLoss<f64>, KdError> {
    if fixture.teacher.len() != fixture.k
        || fixture.student.len() != fixture.k
        || fixture.targets.len() != fixture.k
    {
        return Err(KdError::DimensionMismatch(format!(
            "declared k = {} but teacher/student/targets have {}/{}/{} entries",
            fixture.k,
            fixture.teacher.len(),
            fixture.student.len(),
            fixture.targets.len()
        )));
    }
    for (name, rows) in [("teacher", &fixture.teacher), ("student", &fixture.student)] {
        if let Some(row) = rows.iter().find(|r| r.len() != fixture.v) {
            return Err(KdError::DimensionMismatch(format!(
                "declared v = {} but a {name} row has {} entries",
                fixture.v,
                row.len()
            )));
        }
    }
    let teacher = DistributionSequence::new(fixture.teacher.clone())?;
    let student = DistributionSequence::new(fixture.student.clone())?;
    kd_loss(&teacher, &student, &fixture.targets, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: &[&[f64]]) -> DistributionSequence<f64> {
        DistributionSequence::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(DistributionSequence::new(vec![vec![0.5, 0.6]]).is_err()); // sums to 1.1
        assert!(DistributionSequence::new(vec![vec![-0.1, 1.1]]).is_err());
        assert!(DistributionSequence::new(vec![vec![0.5, 0.5], vec![1.0]]).is_err());
        assert!(DistributionSequence::new(vec![vec![f64::NAN, 1.0]]).is_err());
        assert!(DistributionSequence::new(vec![Vec::<f64>::new()]).is_err());
        assert!(DistributionSequence::new(vec![vec![0.5, 0.5]]).is_ok());
    }

    #[test]
    fn f32_rows_need_a_looser_tolerance() {
        // 10 entries of 0.1f32 sum to slightly off 1.0; the f64 default
        // tolerance must not be applied blindly to f32 data.
        let row: Vec<f32> = vec![0.1; 10];
        let sum: f32 = row.iter().copied().sum();
        assert!((f64::from(sum) - 1.0).abs() > 1e-9);
        assert!(DistributionSequence::with_tolerance(vec![row], 1e-6f32).is_ok());
    }

    #[test]
    fn cross_entropy_hand_value() {
        let student = seq(&[&[0.1, 0.7, 0.2]]);
        let ce = cross_entropy(&student, &[1]).unwrap();
        assert!((ce - (-(0.7f64).ln())).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_zero_on_one_hot() {
        let student = seq(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]]);
        let ce = cross_entropy(&student, &[1, 0]).unwrap();
        assert_eq!(ce, 0.0);
    }

    #[test]
    fn cross_entropy_floors_zero_probability() {
        let student = seq(&[&[0.0, 1.0]]);
        let ce = cross_entropy(&student, &[0]).unwrap();
        assert!((ce - (-PROB_FLOOR.ln())).abs() < 1e-9);
        assert!(ce.is_finite());
    }

    #[test]
    fn cross_entropy_rejects_bad_targets() {
        let student = seq(&[&[0.5, 0.5]]);
        assert!(matches!(
            cross_entropy(&student, &[2]),
            Err(KdError::TargetOutOfRange { target: 2, vocab: 2, .. })
        ));
        assert!(matches!(
            cross_entropy(&student, &[0, 1]),
            Err(KdError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn kl_hand_value() {
        // KL([0.5, 0.25, 0.25] || uniform) =
        //   0.5 ln 1.5 + 0.25 ln 0.75 + 0.25 ln 0.75 ≈ 0.058892.
        let teacher = seq(&[&[0.5, 0.25, 0.25]]);
        let uniform = seq(&[&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]);
        let kl = kl_divergence(&teacher, &uniform).unwrap();
        let expected = 0.5 * 1.5f64.ln() + 0.5 * 0.75f64.ln();
        assert!((kl - expected).abs() < 1e-12);
        assert!((kl - 0.058892).abs() < 1e-6);
    }

    #[test]
    fn kl_zero_iff_identical() {
        let p = seq(&[&[0.2, 0.3, 0.5], &[1.0, 0.0, 0.0]]);
        assert_eq!(kl_divergence(&p, &p.clone()).unwrap(), 0.0);
        let q = seq(&[&[0.2, 0.3, 0.5], &[0.9, 0.1, 0.0]]);
        assert!(kl_divergence(&p, &q).unwrap() > 0.0);
    }

    #[test]
    fn kl_ignores_zero_teacher_mass() {
        let teacher = seq(&[&[1.0, 0.0]]);
        let student = seq(&[&[1.0, 0.0]]);
        // The student's zero at an index the teacher also zeroes must not
        // produce a NaN/infinite term.
        assert_eq!(kl_divergence(&teacher, &student).unwrap(), 0.0);
    }

    #[test]
    fn kd_loss_combines_with_weights() {
        let teacher = seq(&[&[0.6, 0.4], &[0.5, 0.5]]);
        let student = seq(&[&[0.5, 0.5], &[0.25, 0.75]]);
        let cfg = KdLossConfig::default();
        let loss = kd_loss(&teacher, &student, &[0, 1], &cfg).unwrap();
        assert!((loss.total - (0.8 * loss.ce + 1.0 * loss.kl)).abs() < 1e-15);
        assert_eq!(loss.positions, 2);
        let heavier = KdLossConfig { beta: 2.0, gamma: 0.5 };
        let loss2 = kd_loss(&teacher, &student, &[0, 1], &heavier).unwrap();
        assert!((loss2.total - (2.0 * loss.ce + 0.5 * loss.kl)).abs() < 1e-12);
    }

    #[test]
    fn loss_is_additive_over_positions() {
        let t1 = seq(&[&[0.6, 0.4]]);
        let s1 = seq(&[&[0.5, 0.5]]);
        let t2 = seq(&[&[0.1, 0.9]]);
        let s2 = seq(&[&[0.3, 0.7]]);
        let joint_t = seq(&[&[0.6, 0.4], &[0.1, 0.9]]);
        let joint_s = seq(&[&[0.5, 0.5], &[0.3, 0.7]]);
        let cfg = KdLossConfig::default();
        let a = kd_loss(&t1, &s1, &[0], &cfg).unwrap();
        let b = kd_loss(&t2, &s2, &[1], &cfg).unwrap();
        let joint = kd_loss(&joint_t, &joint_s, &[0, 1], &cfg).unwrap();
        assert!((joint.total - (a.total + b.total)).abs() < 1e-12);
        assert!((joint.ce - (a.ce + b.ce)).abs() < 1e-12);
        assert!((joint.kl - (a.kl + b.kl)).abs() < 1e-12);
    }

    #[test]
    fn generic_over_f32() {
        let teacher = DistributionSequence::with_tolerance(
            vec![vec![0.5f32, 0.25, 0.25]],
            1e-5,
        )
        .unwrap();
        let student = DistributionSequence::with_tolerance(
            vec![vec![0.25f32, 0.5, 0.25]],
            1e-5,
        )
        .unwrap();
        let cfg = KdLossConfig::<f32>::default();
        let loss = kd_loss(&teacher, &student, &[0], &cfg).unwrap();
        assert!(loss.kl > 0.0);
        assert!(loss.total.is_finite());
    }

    #[test]
    fn fixture_shape_validation() {
        let good = KdFixture {
            k: 1,
            v: 2,
            teacher: vec![vec![0.5, 0.5]],
            student: vec![vec![0.4, 0.6]],
            targets: vec![1],
        };
        assert!(evaluate_fixture(&good, &KdLossConfig::default()).is_ok());
        let bad_k = KdFixture { k: 2, ..good.clone() };
        assert!(evaluate_fixture(&bad_k, &KdLossConfig::default()).is_err());
        let bad_v = KdFixture { v: 3, ..good };
        assert!(evaluate_fixture(&bad_v, &KdLossConfig::default()).is_err());
    }

    #[test]
    fn empty_sequence_has_zero_loss() {
        let empty = DistributionSequence::<f64>::new(vec![]).unwrap();
        let loss = kd_loss(&empty, &empty.clone(), &[], &KdLossConfig::default()).unwrap();
        assert_eq!(loss.total, 0.0);
        assert_eq!(loss.ce_per_position(), 0.0);
    }
}

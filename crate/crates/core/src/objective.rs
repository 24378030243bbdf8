//! Selection criterion: cosine similarity and the norm-penalized loss.

use thiserror::Error;

use crate::oracle::Embedding;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm embedding")]
    ZeroNorm,
    #[error("no losses to select from")]
    Empty,
    #[error("non-finite loss at index {0}")]
    NonFinite(usize),
}

/// Weight of the squared norm gap in [`loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossParams {
    pub lambda: f64,
}

impl LossParams {
    pub const DEFAULT_LAMBDA: f64 = 0.0025;

    /// `lambda = 0`: the loss reduces to negative cosine similarity.
    pub const fn cosine_only() -> Self {
        Self { lambda: 0.0 }
    }
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            lambda: Self::DEFAULT_LAMBDA,
        }
    }
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
///
/// Computed as `dot / sqrt(|a|^2 |b|^2)` so that `s(y, y)` is exactly 1.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, ObjectiveError> {
    if a.dim() != b.dim() {
        return Err(ObjectiveError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm_squared(), b.norm_squared());
    if na == 0.0 || nb == 0.0 {
        return Err(ObjectiveError::ZeroNorm);
    }
    Ok((a.dot(b) / libm::sqrt(na * nb)).clamp(-1.0, 1.0))
}

/// `lambda * (|target| - |candidate|)^2 - s(target, candidate)`; lower is
/// better.
pub fn loss(
    target: &Embedding,
    candidate: &Embedding,
    params: LossParams,
) -> Result<f64, ObjectiveError> {
    let s = cosine_similarity(target, candidate)?;
    let gap = target.norm() - candidate.norm();
    Ok(params.lambda * gap * gap - s)
}

/// Index of the smallest loss; ties go to the lowest index.
pub fn select_best(losses: &[f64]) -> Result<usize, ObjectiveError> {
    if losses.is_empty() {
        return Err(ObjectiveError::Empty);
    }
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate() {
        if !l.is_finite() {
            return Err(ObjectiveError::NonFinite(i));
        }
        if l < losses[best] {
            best = i;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let y = emb(&[0.3, -1.2, 7.0]);
        assert_eq!(cosine_similarity(&y, &y).unwrap(), 1.0);
        assert_eq!(
            cosine_similarity(&emb(&[1.0, 0.0]), &emb(&[0.0, 2.0])).unwrap(),
            0.0
        );
        let s = cosine_similarity(&emb(&[1.0, 1.0]), &emb(&[1.0, 0.0])).unwrap();
        assert!((s - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(
            cosine_similarity(&emb(&[0.0, 0.0]), &emb(&[1.0, 0.0])),
            Err(ObjectiveError::ZeroNorm)
        );
        assert_eq!(
            cosine_similarity(&emb(&[1.0]), &emb(&[1.0, 0.0])),
            Err(ObjectiveError::DimensionMismatch(1, 2))
        );
    }

    #[test]
    fn loss_examples() {
        let p = LossParams::default();
        let y = emb(&[3.0, 4.0]);
        assert_eq!(loss(&y, &y, p).unwrap(), -1.0);
        let l = loss(&y, &emb(&[0.0, 10.0]), p).unwrap();
        assert!((l - (-0.7375)).abs() < 1e-12);
        let equal_norm = emb(&[4.0, 3.0]);
        assert_eq!(
            loss(&y, &equal_norm, p).unwrap(),
            -cosine_similarity(&y, &equal_norm).unwrap()
        );
        assert_eq!(
            loss(&y, &emb(&[0.0, 10.0]), LossParams::cosine_only()).unwrap(),
            -0.8
        );
    }

    #[test]
    fn select_best_examples() {
        assert_eq!(select_best(&[0.3, -0.2, 0.1]), Ok(1));
        assert_eq!(select_best(&[0.1, 0.1]), Ok(0));
        assert_eq!(select_best(&[5.0]), Ok(0));
        assert_eq!(select_best(&[]), Err(ObjectiveError::Empty));
        assert_eq!(
            select_best(&[0.0, f64::NAN]),
            Err(ObjectiveError::NonFinite(1))
        );
    }

    fn arb_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, n)
            .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn cosine_is_scale_invariant(a in arb_vec(6), b in arb_vec(6), k in 0.01f64..100.0) {
            let ka: Vec<f64> = a.iter().map(|x| x * k).collect();
            let s1 = cosine_similarity(&emb(&a), &emb(&b)).unwrap();
            let s2 = cosine_similarity(&emb(&ka), &emb(&b)).unwrap();
            prop_assert!((s1 - s2).abs() <= 1e-12);
        }

        #[test]
        fn loss_bounded_and_symmetric(a in arb_vec(5), b in arb_vec(5), lambda in 0.0f64..1.0) {
            let p = LossParams { lambda };
            let l = loss(&emb(&a), &emb(&b), p).unwrap();
            prop_assert!(l >= -1.0);
            prop_assert_eq!(l, loss(&emb(&b), &emb(&a), p).unwrap());
        }

        #[test]
        fn select_best_shift_invariant(raw in proptest::collection::vec(-40i32..40, 1..40), c in -3i32..3) {
            // Eighths and integer shifts keep every sum exact.
            let v: Vec<f64> = raw.iter().map(|&x| f64::from(x) / 8.0).collect();
            let best = select_best(&v).unwrap();
            prop_assert!(v.iter().all(|&x| v[best] <= x));
            prop_assert!(v[..best].iter().all(|&x| x > v[best]));
            let shifted: Vec<f64> = v.iter().map(|x| x + f64::from(c)).collect();
            prop_assert_eq!(select_best(&shifted).unwrap(), best);
        }
    }
}

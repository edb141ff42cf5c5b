//! Elementwise activations, segment softmax, and dropout masks.

use crate::rng::Pcg32;
use crate::scalar::Scalar;

use super::Matrix;

/// Leaky ReLU: `x` if `x > 0`, else `slope * x`. `slope` must be
/// non-negative.
pub fn leaky_relu<S: Scalar>(x: &Matrix<S>, slope: S) -> Matrix<S> {
    assert!(slope >= S::zero(), "leaky_relu slope must be non-negative");
    x.map(|v| if v > S::zero() { v } else { slope * v })
}

/// ReLU.
pub fn relu<S: Scalar>(x: &Matrix<S>) -> Matrix<S> {
    x.map(|v| if v > S::zero() { v } else { S::zero() })
}

/// ELU with unit alpha: `x` if `x > 0`, else `exp(x) - 1`.
pub fn elu<S: Scalar>(x: &Matrix<S>) -> Matrix<S> {
    x.map(|v| if v > S::zero() { v } else { v.exp() - S::one() })
}

/// Multiplies `grad` in place by the ELU derivative at pre-activation `pre`.
pub fn elu_backward<S: Scalar>(grad: &mut Matrix<S>, pre: &Matrix<S>) {
    debug_assert_eq!(grad.shape(), pre.shape());
    for (g, &p) in grad.data_mut().iter_mut().zip(pre.data()) {
        if p <= S::zero() {
            *g *= p.exp();
        }
    }
}

/// Elementwise tanh.
pub fn tanh_elementwise<S: Scalar>(x: &Matrix<S>) -> Matrix<S> {
    x.map(|v| v.tanh())
}

/// Softmax computed independently over each segment.
///
/// `segments[i]` names the segment of `scores[i]`; the result sums to one
/// within every non-empty segment. Each segment's maximum is subtracted
/// before exponentiation, so magnitudes up to the exponent range are safe.
/// Segment ids need not be contiguous; the two slices must have equal
/// length.
pub fn segment_softmax<S: Scalar>(scores: &[S], segments: &[usize]) -> Vec<S> {
    assert_eq!(
        scores.len(),
        segments.len(),
        "segment_softmax: scores and segments must align"
    );
    if scores.is_empty() {
        return Vec::new();
    }
    let n_seg = segments.iter().copied().max().unwrap() + 1;
    let mut seg_max = vec![S::neg_infinity(); n_seg];
    for (&s, &g) in scores.iter().zip(segments) {
        if s > seg_max[g] {
            seg_max[g] = s;
        }
    }
    let mut out: Vec<S> = scores
        .iter()
        .zip(segments)
        .map(|(&s, &g)| (s - seg_max[g]).exp())
        .collect();
    let mut seg_sum = vec![S::zero(); n_seg];
    for (&e, &g) in out.iter().zip(segments) {
        seg_sum[g] += e;
    }
    for (e, &g) in out.iter_mut().zip(segments) {
        *e /= seg_sum[g];
    }
    out
}

/// Inverted-dropout mask: each element is `0` with probability `p` and
/// `1 / (1 - p)` otherwise, so the expected value of `x * mask` is `x`.
/// Requires `0 <= p < 1`. Draws `rows * cols` uniforms in row-major order.
pub fn dropout_mask<S: Scalar>(rows: usize, cols: usize, p: f64, rng: &mut Pcg32) -> Matrix<S> {
    assert!((0.0..1.0).contains(&p), "dropout probability must be in [0, 1)");
    let keep = S::of(1.0 / (1.0 - p));
    let mut out = Matrix::zeros(rows, cols);
    for v in out.data_mut() {
        *v = if rng.next_f64() < p { S::zero() } else { keep };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_relu_applies_slope_to_negatives() {
        let x = Matrix::from_rows(&[vec![-2.0, 0.0, 3.0]]).unwrap();
        let y = leaky_relu(&x, 0.2);
        assert_eq!(y.data(), &[-0.4, 0.0, 3.0]);
    }

    #[test]
    fn elu_is_smooth_at_zero_and_bounded_below() {
        let x = Matrix::from_rows(&[vec![-30.0, -1.0, 0.0, 2.0]]).unwrap();
        let y = elu(&x);
        assert!(y.get(0, 0) > -1.0 && y.get(0, 0) < -0.99);
        assert!((y.get(0, 1) - (f64::exp(-1.0) - 1.0)).abs() < 1e-15);
        assert_eq!(y.get(0, 2), 0.0);
        assert_eq!(y.get(0, 3), 2.0);
    }

    #[test]
    fn segment_softmax_matches_closed_form() {
        // Two segments; the second has probabilities 1/4 and 3/4 by
        // construction: softmax([ln 1, ln 3]) = [1/(1+3), 3/(1+3)].
        let scores = vec![0.5, 1.0_f64.ln(), 3.0_f64.ln()];
        let segments = vec![0, 1, 1];
        let w = segment_softmax(&scores, &segments);
        assert!((w[0] - 1.0).abs() < 1e-15);
        assert!((w[1] - 0.25).abs() < 1e-12);
        assert!((w[2] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn segment_softmax_sums_to_one_per_segment() {
        let scores: Vec<f64> = vec![3.0, -1.0, 0.0, 2.5, 900.0, 899.0, -5.0];
        let segments = vec![0, 0, 1, 1, 2, 2, 2];
        let w = segment_softmax(&scores, &segments);
        for seg in 0..3 {
            let sum: f64 = w
                .iter()
                .zip(&segments)
                .filter(|(_, &g)| g == seg)
                .map(|(&x, _)| x)
                .sum();
            assert!((sum - 1.0).abs() < 1e-12, "segment {seg} sums to {sum}");
        }
        assert!(w.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn segment_softmax_survives_extreme_scores() {
        let scores = vec![1000.0_f64, -1000.0];
        let segments = vec![0, 0];
        let w = segment_softmax(&scores, &segments);
        assert!((w[0] - 1.0).abs() < 1e-300);
        assert!(w[1] >= 0.0 && w[1] < 1e-300);
    }

    #[test]
    fn dropout_mask_values_are_zero_or_scaled() {
        let mut rng = Pcg32::new(11, 2);
        let p = 0.3;
        let mask: Matrix<f64> = dropout_mask(40, 25, p, &mut rng);
        let keep = 1.0 / (1.0 - p);
        let mut zeros = 0usize;
        for &v in mask.data() {
            assert!(v == 0.0 || (v - keep).abs() < 1e-15);
            if v == 0.0 {
                zeros += 1;
            }
        }
        let rate = zeros as f64 / mask.len() as f64;
        assert!((rate - p).abs() < 0.05, "empirical drop rate {rate}");
    }

    #[test]
    fn dropout_mask_zero_probability_is_identity() {
        let mut rng = Pcg32::new(1, 1);
        let mask: Matrix<f64> = dropout_mask(5, 5, 0.0, &mut rng);
        assert!(mask.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn elu_backward_matches_analytic_derivative() {
        let pre = Matrix::from_rows(&[vec![-1.5, 0.0, 2.0]]).unwrap();
        let mut grad = Matrix::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        elu_backward(&mut grad, &pre);
        assert!((grad.get(0, 0) - f64::exp(-1.5)).abs() < 1e-15);
        assert_eq!(grad.get(0, 1), 1.0); // exp(0) = 1 on the boundary branch
        assert_eq!(grad.get(0, 2), 1.0);
    }
}

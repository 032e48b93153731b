//! Squareplus-family scalar functions and RMS normalization.
//!
//! `squareplus(x, b) = (x + sqrt(x^2 + b)) / 2` is a smooth, strictly positive
//! relative of ReLU. Its derivative with `b = 4` is a heavy-tailed sigmoid,
//! which doubles as the bounded map for the slack variable and (rescaled to
//! `(-1, 1)`) as the action squash.

/// Shape constant used everywhere in the crate.
pub const SQUAREPLUS_B: f64 = 4.0;

/// Stabilizer added to the mean square in [`rms_norm`].
pub const RMS_NORM_EPS: f64 = 1e-8;

#[inline]
pub fn squareplus(x: f64, b: f64) -> f64 {
    // For very negative x the naive form cancels catastrophically; use the
    // algebraically equal b / (2 (sqrt(x^2 + b) - x)).
    let root = (x * x + b).sqrt();
    if x >= 0.0 {
        0.5 * (x + root)
    } else {
        0.5 * b / (root - x)
    }
}

/// `d/dx squareplus(x, 4) = (1 + x / sqrt(x^2 + 4)) / 2`, a sigmoid onto `(0, 1)`.
#[inline]
pub fn squareplus_sigmoid(x: f64) -> f64 {
    let root = (x * x + SQUAREPLUS_B).sqrt();
    if x >= 0.0 {
        0.5 * (1.0 + x / root)
    } else {
        // 1 + x/root = (root + x)/root = b / (root (root - x))
        0.5 * SQUAREPLUS_B / (root * (root - x))
    }
}

/// Derivative of [`squareplus_sigmoid`]: `2 / (x^2 + 4)^{3/2}`.
#[inline]
pub fn squareplus_sigmoid_grad(x: f64) -> f64 {
    let s = x * x + SQUAREPLUS_B;
    0.5 * SQUAREPLUS_B / (s * s.sqrt())
}

/// `y_i = gain_i * x_i / sqrt(mean(x^2) + eps_norm)`.
pub fn rms_norm(x: &[f64], gain: &[f64], eps_norm: f64) -> Vec<f64> {
    assert_eq!(x.len(), gain.len(), "rms_norm: gain length mismatch");
    assert!(!x.is_empty(), "rms_norm: empty input");
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64 + eps_norm).sqrt();
    x.iter().zip(gain).map(|(v, g)| g * v / rms).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squareplus_values() {
        assert_eq!(squareplus(0.0, 4.0), 1.0);
        assert!((squareplus(3.0, 4.0) - (3.0 + 13f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((squareplus(3.0, 4.0) - 3.302776).abs() < 1e-6);
    }

    #[test]
    fn squareplus_negative_tail() {
        // Series: squareplus(x, b) ~ b / (-4x) for x -> -inf.
        let v = squareplus(-50.0, 4.0);
        assert!(v > 0.0 && v < 0.05);
        let series = 4.0 / 200.0;
        assert!((v - series).abs() / series < 1e-3);
        let mut prev = v;
        for x in [-60.0, -100.0, -1e4, -1e8] {
            let cur = squareplus(x, 4.0);
            assert!(cur > 0.0 && cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(squareplus_sigmoid(0.0), 0.5);
        assert!((squareplus_sigmoid(2.0) - 0.853553).abs() < 1e-6);
        assert!((squareplus_sigmoid(-2.0) - 0.146447).abs() < 1e-6);
        assert!(squareplus_sigmoid(-1e9) > 0.0);
        assert!(squareplus_sigmoid(1e9) <= 1.0);
    }

    #[test]
    fn sigmoid_grad_matches_difference() {
        for x in [-7.0, -1.0, 0.0, 0.3, 5.0] {
            let h = 1e-6;
            let fd = (squareplus_sigmoid(x + h) - squareplus_sigmoid(x - h)) / (2.0 * h);
            assert!((fd - squareplus_sigmoid_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn rms_norm_values() {
        assert_eq!(rms_norm(&[1.0; 4], &[1.0; 4], 0.0), vec![1.0; 4]);
        let y = rms_norm(&[3.0, 4.0], &[1.0, 1.0], 0.0);
        assert!((y[0] - 0.848528).abs() < 1e-6);
        assert!((y[1] - 1.131371).abs() < 1e-6);
        let y2 = rms_norm(&[6.0, 8.0], &[1.0, 1.0], 0.0);
        assert_eq!(y, y2);
        assert_eq!(
            rms_norm(&[0.0, 0.0], &[1.0, 1.0], RMS_NORM_EPS),
            vec![0.0, 0.0]
        );
    }

    proptest::proptest! {
        #[test]
        fn sigmoid_symmetry(x in -1e6f64..1e6) {
            let s = squareplus_sigmoid(x) + squareplus_sigmoid(-x);
            proptest::prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rms_norm_scale_invariant(
            x in proptest::collection::vec(-10.0f64..10.0, 1..12),
            c in 1e-3f64..1e3,
        ) {
            proptest::prop_assume!(x.iter().any(|v| v.abs() > 1e-6));
            let gain = vec![1.0; x.len()];
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            let a = rms_norm(&x, &gain, 0.0);
            let b = rms_norm(&scaled, &gain, 0.0);
            for (u, v) in a.iter().zip(&b) {
                proptest::prop_assert!((u - v).abs() < 1e-10);
            }
        }

        #[test]
        fn squareplus_monotone_positive(x in -1e6f64..1e6, dx in 1e-3f64..10.0) {
            let a = squareplus(x, 4.0);
            proptest::prop_assert!(a > 0.0);
            proptest::prop_assert!(squareplus(x + dx, 4.0) > a);
        }
    }
}

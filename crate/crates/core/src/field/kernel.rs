//! Discrete convolution with `e^{-|s - q|}` on a (possibly non-uniform) node set,
//! using trapezoid weights.

fn trapezoid_weights(s: &[f64]) -> Vec<f64> {
    let n = s.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = s[i + 1] - s[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// `K(s_i) = sum_j w_j f_j e^{-|s_i - s_j|}` by direct `O(n^2)` summation.
pub fn exp_kernel_direct(s: &[f64], f: &[f64]) -> Vec<f64> {
    let w = trapezoid_weights(s);
    s.iter()
        .map(|&si| {
            s.iter()
                .zip(f)
                .zip(&w)
                .map(|((&sj, &fj), &wj)| wj * fj * (-(si - sj).abs()).exp())
                .sum()
        })
        .collect()
}

/// Same sum as [`exp_kernel_direct`] in `O(n)`: one forward and one backward
/// recursion, exact up to rounding because the kernel factorises.
pub fn exp_kernel_recursive(s: &[f64], f: &[f64]) -> Vec<f64> {
    let n = s.len();
    let w = trapezoid_weights(s);
    let mut left = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n {
        if i > 0 {
            acc *= (-(s[i] - s[i - 1])).exp();
        }
        acc += w[i] * f[i];
        left[i] = acc;
    }
    let mut out = left;
    let mut acc = 0.0;
    for i in (0..n.saturating_sub(1)).rev() {
        acc = (acc + w[i + 1] * f[i + 1]) * (-(s[i + 1] - s[i])).exp();
        out[i] += acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_density_on_long_line() {
        let s: Vec<f64> = (0..=4000).map(|i| -20.0 + i as f64 * 0.01).collect();
        let f = vec![1.0; s.len()];
        let k = exp_kernel_recursive(&s, &f);
        // int_R e^{-|x|} dx = 2
        assert!((k[2000] - 2.0).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn recursive_matches_direct(
            steps in prop::collection::vec(0.01f64..0.5, 1..60),
            vals in prop::collection::vec(-3.0f64..3.0, 61),
        ) {
            let mut s = vec![-1.0];
            for h in &steps {
                s.push(s.last().unwrap() + h);
            }
            let f = &vals[..s.len()];
            let a = exp_kernel_direct(&s, f);
            let b = exp_kernel_recursive(&s, f);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}

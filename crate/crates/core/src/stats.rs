//! Cross-seed aggregation and paired t-tests.

use crate::analytics::{compensated_sum, sample_variance};
use crate::error::{DegenerateReason, Error, Result};

/// Mean ± standard error over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedAggregate {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over √n.
    pub se: f64,
}

pub fn aggregate(values: &[f64]) -> Result<SeedAggregate> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two values to aggregate, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mut mean = compensated_sum(values.iter().copied()) / n;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    mean = mean.clamp(lo, hi);
    let se = (sample_variance(values)? / n).sqrt();
    Ok(SeedAggregate {
        values: values.to_vec(),
        mean,
        se,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedTestResult {
    pub n: usize,
    /// Mean of `x − y`.
    pub mean_diff: f64,
    pub se_diff: f64,
    pub t_stat: f64,
    pub dof: usize,
    /// Two-sided.
    pub p_value: f64,
}

/// Paired t-test on `xs[i] − ys[i]`.
pub fn paired_t(xs: &[f64], ys: &[f64]) -> Result<PairedTestResult> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two pairs".into()));
    }
    let diffs: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    if diffs.iter().all(|&d| d == 0.0) {
        return Err(Error::DegenerateTest(DegenerateReason::AllDifferencesZero));
    }
    let n = diffs.len() as f64;
    let mean = compensated_sum(diffs.iter().copied()) / n;
    let var = sample_variance(&diffs)?;
    let scale = diffs.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    // Differences equal up to rounding count as constant.
    if var.sqrt() <= 1e-12 * scale {
        return Err(Error::DegenerateTest(DegenerateReason::ZeroVarianceNonzeroOffset));
    }
    let se = (var / n).sqrt();
    let t = mean / se;
    let dof = diffs.len() - 1;
    Ok(PairedTestResult {
        n: diffs.len(),
        mean_diff: mean,
        se_diff: se,
        t_stat: t,
        dof,
        p_value: student_t_two_sided_p(t, dof as f64),
    })
}

/// Rate in `[0, 1]` to percentage points.
pub fn to_pp(rate: f64) -> f64 {
    rate * 100.0
}

/// `P(|T| ≥ |t|)` for Student's t with `dof` degrees of freedom, via
/// `I_{ν/(ν+t²)}(ν/2, 1/2)`.
pub fn student_t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = dof / (dof + t * t);
    regularized_incomplete_beta(x, dof / 2.0, 0.5).clamp(0.0, 1.0)
}

/// `I_x(a, b)` via Lentz's continued fraction, using the symmetry
/// `I_x(a, b) = 1 − I_{1−x}(b, a)` where the fraction converges faster.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_examples() {
        let a = aggregate(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!((a.mean, a.se), (0.5, 0.0));
        let b = aggregate(&[0.0, 1.0]).unwrap();
        assert_eq!(b.mean, 0.5);
        assert!((b.se - 0.5).abs() < 1e-15);
        assert!(aggregate(&[1.0]).is_err());
    }

    #[test]
    fn worked_paired_example() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let r = paired_t(&xs, &[0.0; 4]).unwrap();
        assert_eq!(r.mean_diff, 2.5);
        assert_eq!(r.dof, 3);
        // sd = sqrt(5/3) = 1.2910, t = 2.5 / (1.2910 / 2)
        let t = 2.5 / ((5.0_f64 / 3.0).sqrt() / 2.0);
        assert!((r.t_stat - t).abs() < 1e-12);
        assert!((r.t_stat - 3.873).abs() < 1e-3);
    }

    #[test]
    fn degenerate_tests_are_distinguished() {
        let xs = [0.1, 0.4, 0.35, 0.9];
        assert!(matches!(
            paired_t(&xs, &xs),
            Err(Error::DegenerateTest(DegenerateReason::AllDifferencesZero))
        ));
        let ys: Vec<f64> = xs.iter().map(|x| x + 0.1).collect();
        assert!(matches!(
            paired_t(&xs, &ys),
            Err(Error::DegenerateTest(DegenerateReason::ZeroVarianceNonzeroOffset))
        ));
    }

    #[test]
    fn mismatched_lengths() {
        assert!(paired_t(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn t_p_values_at_known_points() {
        assert!((student_t_two_sided_p(0.0, 5.0) - 1.0).abs() < 1e-14);
        // t = 2.228 is the 97.5% quantile at 10 dof
        assert!((student_t_two_sided_p(2.228138851986, 10.0) - 0.05).abs() < 1e-9);
        // dof = 1 is Cauchy: P(|T| > 1) = 1/2
        assert!((student_t_two_sided_p(1.0, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(student_t_two_sided_p(f64::INFINITY, 3.0), 0.0);
    }

    #[test]
    fn incomplete_beta_matches_closed_forms() {
        // I_x(1, 1) = x; I_x(a, 1) = x^a
        for &x in &[0.1, 0.5, 0.9] {
            assert!((regularized_incomplete_beta(x, 1.0, 1.0) - x).abs() < 1e-14);
            assert!((regularized_incomplete_beta(x, 3.0, 1.0) - x.powi(3)).abs() < 1e-14);
        }
    }
}

//! Small numeric helpers shared by the estimators.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

/// Inverse logit, stable for large |x|.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Upper tail P(X > x) of a chi-squared variable with `df` degrees of freedom.
pub fn chi2_upper_tail(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df).expect("positive degrees of freedom");
    (1.0 - dist.cdf(x)).clamp(0.0, 1.0)
}

pub fn chi2_quantile(p: f64, df: f64) -> f64 {
    ChiSquared::new(df)
        .expect("positive degrees of freedom")
        .inverse_cdf(p)
}

/// Upper tail P(T > t) of Student's t.
pub fn t_upper_tail(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df.max(1.0)).expect("valid t distribution");
    (1.0 - dist.cdf(t)).clamp(0.0, 1.0)
}

pub fn t_quantile(p: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df.max(1.0))
        .expect("valid t distribution")
        .inverse_cdf(p)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
pub fn sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Linear-interpolation quantile of an already sorted slice (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw from N(0, 1) restricted to (lower, +inf).
pub fn truncated_normal_above<R: Rng + ?Sized>(rng: &mut R, lower: f64) -> f64 {
    if lower < 0.5 {
        loop {
            let z = standard_normal(rng);
            if z > lower {
                return z;
            }
        }
    }
    // exponential proposal with optimal rate
    let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
    loop {
        let u: f64 = rng.random();
        let z = lower - (1.0 - u).ln() / rate;
        let accept = (-(z - rate) * (z - rate) / 2.0).exp();
        if rng.random::<f64>() <= accept {
            return z;
        }
    }
}

/// Draw from N(mean, 1) restricted to (0, inf) if `positive`, else (-inf, 0].
pub fn truncated_latent<R: Rng + ?Sized>(rng: &mut R, mean: f64, positive: bool) -> f64 {
    if positive {
        mean + truncated_normal_above(rng, -mean)
    } else {
        mean - truncated_normal_above(rng, mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn expit_reference_points() {
        assert_eq!(expit(0.0), 0.5);
        assert!((expit(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(expit(700.0) <= 1.0 && expit(700.0) > 0.999);
        assert!(expit(-700.0) > 0.0 && expit(-700.0).is_finite());
        for x in [-30.0, -2.5, -0.1, 0.7, 12.0] {
            assert!((expit(-x) - (1.0 - expit(x))).abs() < 1e-15);
        }
    }

    #[test]
    fn chi2_tail_matches_tables() {
        assert!((chi2_upper_tail(0.5, 1.0) - 0.4795).abs() < 1e-4);
        assert!((chi2_upper_tail(2.0, 1.0) - 0.1573).abs() < 1e-4);
        assert_eq!(chi2_upper_tail(0.0, 3.0), 1.0);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn truncated_latent_respects_sign() {
        let mut r = rng::stream(3);
        let mut sum = 0.0;
        for _ in 0..20_000 {
            let a = truncated_latent(&mut r, 2.5, false);
            assert!(a <= 0.0);
            let b = truncated_latent(&mut r, 0.0, true);
            assert!(b > 0.0);
            sum += b;
        }
        // E[Z | Z > 0] = sqrt(2 / pi)
        let m = sum / 20_000.0;
        assert!((m - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.02);
    }
}

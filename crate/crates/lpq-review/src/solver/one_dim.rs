//! One-dimensional minimizers of s ↦ Σ|yᵢ − s|^p: the left-median for p = 1
//! and bisection on the strictly increasing derivative for p > 1.

use super::SolveError;

/// Smallest minimizer of s ↦ Σ|values_i − s|: the lower median.
pub fn left_median(values: &[f64]) -> Result<f64, SolveError> {
    if values.is_empty() {
        return Err(SolveError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(sorted[(sorted.len() - 1) / 2])
}

/// Signed balance of (p−1)-power deviations at `s`:
/// Σ_{yᵢ≤s}(s−yᵢ)^{p−1} − Σ_{s≤yⱼ}(yⱼ−s)^{p−1}.
/// Zero exactly at the minimizer of Σ|yᵢ − s|^p for p > 1.
pub fn balance_residual(values: &[f64], p: f64, s: f64) -> f64 {
    let e = p - 1.0;
    let mut below = 0.0;
    let mut above = 0.0;
    for &y in values {
        if y <= s {
            below += (s - y).powf(e);
        }
        if s <= y {
            above += (y - s).powf(e);
        }
    }
    below - above
}

/// A list of values with the exponent of the deviation penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct OneDimProblem {
    values: Vec<f64>,
    p: f64,
}

impl OneDimProblem {
    pub fn new(values: Vec<f64>, p: f64) -> Result<Self, SolveError> {
        if values.is_empty() {
            return Err(SolveError::EmptyInput);
        }
        if !p.is_finite() || p < 1.0 {
            return Err(SolveError::BadExponent { value: p });
        }
        Ok(Self { values, p })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Minimizer of Σ|yᵢ − s|^p; for p = 1 the left-median, so ties always
    /// resolve to the smallest minimizer.
    pub fn solve(&self) -> f64 {
        if self.p == 1.0 {
            return left_median(&self.values).expect("nonempty by construction");
        }
        pmean_1d(self)
    }
}

/// Unique minimizer of Σ|yᵢ − s|^p for p > 1, located by bisection on the
/// strictly increasing derivative over [min values, max values].
pub fn pmean_1d(prob: &OneDimProblem) -> f64 {
    let values = &prob.values;
    let p = prob.p;
    debug_assert!(p > 1.0);
    let mut lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if balance_residual(values, p, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    // of the two bracket ends, keep the one closest to balance
    if balance_residual(values, p, lo).abs() <= balance_residual(values, p, hi).abs() {
        lo
    } else {
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pmean(values: &[f64], p: f64) -> f64 {
        OneDimProblem::new(values.to_vec(), p).unwrap().solve()
    }

    /// Independent check: dense grid scan of the objective.
    fn grid_argmin(values: &[f64], p: f64, step: f64) -> f64 {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let n = ((hi - lo) / step).ceil() as usize;
        let mut best = (f64::INFINITY, lo);
        for k in 0..=n {
            let s = (lo + k as f64 * step).min(hi);
            let obj: f64 = values.iter().map(|y| (y - s).abs().powf(p)).sum();
            if obj < best.0 {
                best = (obj, s);
            }
        }
        best.1
    }

    #[test]
    fn left_median_picks_lower_median() {
        assert_eq!(left_median(&[8.0, 8.0, 3.0, 8.0]).unwrap(), 8.0);
        assert_eq!(left_median(&[3.0, 1.0, 4.0]).unwrap(), 3.0);
        assert_eq!(left_median(&[1.0, 2.0]).unwrap(), 1.0);
        assert!(left_median(&[]).is_err());
    }

    #[test]
    fn symmetric_pair_gives_midpoint() {
        assert!((pmean(&[4.0, 6.0], 3.0) - 5.0).abs() < 1e-10);
    }

    #[test]
    fn squared_error_gives_mean() {
        assert!((pmean(&[3.0, 1.0, 4.0], 2.0) - 8.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn quartic_case_matches_balance_root_and_grid() {
        // balance equation for {0, 1, 1} at p = 4 reduces to s³ = 2(1−s)³
        let expected = 2f64.powf(1.0 / 3.0) / (1.0 + 2f64.powf(1.0 / 3.0));
        let got = pmean(&[0.0, 1.0, 1.0], 4.0);
        assert!((got - expected).abs() < 1e-9, "got {got}");
        assert!((got - 0.557506665975558).abs() < 1e-12);
        assert!((got - grid_argmin(&[0.0, 1.0, 1.0], 4.0, 1e-5)).abs() < 2e-5);
    }

    #[test]
    fn degenerate_single_value_returns_it() {
        for p in [1.0f64, 1.5, 2.0, 4.0] {
            assert_eq!(
                OneDimProblem::new(vec![7.25], p).unwrap().solve(),
                7.25
            );
        }
        assert_eq!(pmean(&[7.25], 1.000001), 7.25);
    }

    #[test]
    fn rejects_bad_exponents() {
        assert!(OneDimProblem::new(vec![1.0], 0.5).is_err());
        assert!(OneDimProblem::new(vec![1.0], f64::NAN).is_err());
        assert!(OneDimProblem::new(vec![], 2.0).is_err());
    }

    proptest! {
        #[test]
        fn balance_residual_vanishes_at_solution(
            values in proptest::collection::vec(0.0f64..10.0, 1..9),
            pi in 0usize..4,
        ) {
            let p = [1.5, 2.0, 3.0, 4.0][pi];
            let s = pmean(&values, p);
            prop_assert!(balance_residual(&values, p, s).abs() <= 1e-6);
        }

        #[test]
        fn solutions_stay_in_the_hull(
            values in proptest::collection::vec(0.0f64..10.0, 1..9),
            pi in 0usize..5,
        ) {
            let p = [1.0, 1.5, 2.0, 3.0, 4.0][pi];
            let s = pmean_or_median(&values, p);
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s >= lo && s <= hi);
        }

        #[test]
        fn monotone_response_in_each_input(
            values in proptest::collection::vec(0.0f64..10.0, 1..7),
            idx in 0usize..7,
            bump in 0.0f64..3.0,
            pi in 0usize..5,
        ) {
            let p = [1.0, 1.5, 2.0, 3.0, 4.0][pi];
            let idx = idx % values.len();
            let base = pmean_or_median(&values, p);
            let mut bumped = values.clone();
            bumped[idx] = (bumped[idx] + bump).min(10.0);
            let shifted = pmean_or_median(&bumped, p);
            prop_assert!(shifted >= base - 1e-9,
                "raising an input lowered the minimizer: {base} -> {shifted}");
        }
    }

    fn pmean_or_median(values: &[f64], p: f64) -> f64 {
        OneDimProblem::new(values.to_vec(), p).unwrap().solve()
    }
}

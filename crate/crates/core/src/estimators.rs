//! Streaming moment accumulation and the normalized correlation
//! coefficients c2 and c3.
//!
//! `c2` is the covariance of two intensity series normalized by the square
//! roots of their second central moments; `c3` is the third joint central
//! moment of three series normalized by the product of the signed cube roots
//! of their third central moments. Both use population (divide-by-n) moments
//! over the frame sequence, so constant gain factors on any series cancel
//! exactly.
//!
//! [`MomentSummary`] accumulates raw power sums and cross sums in one pass
//! with compensated (Neumaier) summation, and merges associatively:
//! summarizing two frame ranges and merging equals summarizing the
//! concatenation, up to rounding. The arity is a compile-time parameter, so
//! sample/summary mismatches are unrepresentable; the slice-level entry
//! points return a usage error on ragged input instead.
//!
//! [`oracle_c2`] and [`oracle_c3`] compute the same coefficients by the
//! literal two-pass definition (means first, then direct sums over
//! deviations). They share no code with the streaming path and exist to
//! guard it against cancellation regressions.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EstimatorError {
    #[error("series lengths differ: {lengths:?}")]
    LengthMismatch { lengths: Vec<usize> },
}

/// A correlation coefficient, or an undefined marker when a normalizing
/// moment vanishes (constant series carry no correlation information).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationValue {
    pub value: Option<f64>,
    /// Sample count the estimate used.
    pub n: u64,
}

impl CorrelationValue {
    pub fn undefined(n: u64) -> Self {
        CorrelationValue { value: None, n }
    }

    pub fn defined(value: f64, n: u64) -> Self {
        CorrelationValue {
            value: Some(value),
            n,
        }
    }

    pub fn is_defined(&self) -> bool {
        self.value.is_some()
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }

    fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }
}

/// Raw and cross power sums for up to three parallel series.
///
/// For `K = 2` the series are `(x, y)`; for `K = 3`, `(x, y, z)`. Cross slots
/// beyond the arity stay zero and are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary<const K: usize> {
    n: u64,
    sum: [CompensatedSum; K],
    sum_sq: [CompensatedSum; K],
    sum_cube: [CompensatedSum; K],
    /// xy, xz, yz in that order.
    cross: [CompensatedSum; 3],
    cross_triple: CompensatedSum,
}

impl<const K: usize> Default for MomentSummary<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<const K: usize> MomentSummary<K> {
    pub fn new() -> Self {
        assert!((1..=3).contains(&K), "summary arity must be 1..=3");
        MomentSummary {
            n: 0,
            sum: [CompensatedSum::default(); K],
            sum_sq: [CompensatedSum::default(); K],
            sum_cube: [CompensatedSum::default(); K],
            cross: [CompensatedSum::default(); 3],
            cross_triple: CompensatedSum::default(),
        }
    }

    /// Fold one sample (one value per series) into the sums.
    #[inline]
    pub fn accumulate(&mut self, sample: [f64; K]) {
        self.n += 1;
        for i in 0..K {
            let v = sample[i];
            self.sum[i].add(v);
            self.sum_sq[i].add(v * v);
            self.sum_cube[i].add(v * v * v);
        }
        if K >= 2 {
            self.cross[0].add(sample[0] * sample[1]);
        }
        if K == 3 {
            self.cross[1].add(sample[0] * sample[2]);
            self.cross[2].add(sample[1] * sample[2]);
            self.cross_triple.add(sample[0] * sample[1] * sample[2]);
        }
    }

    /// Combine with a summary of further samples of the same series.
    ///
    /// Commutative and associative up to floating-point rounding; equals
    /// summarizing the concatenated samples within about 1e-12 relative for
    /// well-scaled data.
    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        for i in 0..K {
            self.sum[i].merge(&other.sum[i]);
            self.sum_sq[i].merge(&other.sum_sq[i]);
            self.sum_cube[i].merge(&other.sum_cube[i]);
        }
        for i in 0..3 {
            self.cross[i].merge(&other.cross[i]);
        }
        self.cross_triple.merge(&other.cross_triple);
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn mean(&self, series: usize) -> f64 {
        self.sum[series].value() / self.n as f64
    }

    /// Raw moment ⟨v²⟩ of one series.
    pub fn raw2(&self, series: usize) -> f64 {
        self.sum_sq[series].value() / self.n as f64
    }

    /// Raw moment ⟨v³⟩ of one series.
    pub fn raw3(&self, series: usize) -> f64 {
        self.sum_cube[series].value() / self.n as f64
    }

    /// Second central moment (population). Clamped at zero: a tiny negative
    /// residue from cancellation means the series was constant.
    pub fn mu2(&self, series: usize) -> f64 {
        let m = self.mean(series);
        (self.raw2(series) - m * m).max(0.0)
    }

    /// Third central moment (population).
    pub fn mu3(&self, series: usize) -> f64 {
        let m = self.mean(series);
        self.raw3(series) - 3.0 * m * self.raw2(series) + 2.0 * m * m * m
    }

    /// ⟨v_i · v_j⟩ for a cross pair.
    fn cross_mean(&self, i: usize, j: usize) -> f64 {
        let slot = match (i, j) {
            (0, 1) | (1, 0) => 0,
            (0, 2) | (2, 0) => 1,
            (1, 2) | (2, 1) => 2,
            _ => unreachable!("cross_mean needs two distinct series"),
        };
        self.cross[slot].value() / self.n as f64
    }
}

impl MomentSummary<1> {
    /// Normalized zero-delay autocorrelation ⟨v²⟩ / ⟨v⟩².
    pub fn g2_zero(&self) -> Option<f64> {
        let m = self.mean(0);
        if self.n == 0 || m == 0.0 {
            None
        } else {
            Some(self.raw2(0) / (m * m))
        }
    }
}

impl MomentSummary<2> {
    /// Normalized second-order correlation coefficient of the two series.
    pub fn c2(&self) -> CorrelationValue {
        if self.n < 2 {
            return CorrelationValue::undefined(self.n);
        }
        let mu2x = self.mu2(0);
        let mu2y = self.mu2(1);
        if mu2x <= 0.0 || mu2y <= 0.0 {
            return CorrelationValue::undefined(self.n);
        }
        let cov = self.cross_mean(0, 1) - self.mean(0) * self.mean(1);
        CorrelationValue::defined(cov / (mu2x.sqrt() * mu2y.sqrt()), self.n)
    }
}

impl MomentSummary<3> {
    /// Normalized third-order correlation coefficient of the three series.
    ///
    /// The numerator is the third joint central moment expanded from raw
    /// sums; the denominator uses sign-preserving real cube roots so a
    /// negatively skewed series keeps the coefficient real.
    pub fn c3(&self) -> CorrelationValue {
        if self.n < 3 {
            return CorrelationValue::undefined(self.n);
        }
        let mu3 = [self.mu3(0), self.mu3(1), self.mu3(2)];
        if mu3.iter().any(|&m| m == 0.0) {
            return CorrelationValue::undefined(self.n);
        }
        let (mx, my, mz) = (self.mean(0), self.mean(1), self.mean(2));
        let numerator = self.cross_triple.value() / self.n as f64
            - mx * self.cross_mean(1, 2)
            - my * self.cross_mean(0, 2)
            - mz * self.cross_mean(0, 1)
            + 2.0 * mx * my * mz;
        let denom = mu3[0].cbrt() * mu3[1].cbrt() * mu3[2].cbrt();
        CorrelationValue::defined(numerator / denom, self.n)
    }
}

/// Summarize parallel slices in one pass. Ragged lengths are a usage error.
pub fn summarize2(x: &[f64], y: &[f64]) -> Result<MomentSummary<2>, EstimatorError> {
    if x.len() != y.len() {
        return Err(EstimatorError::LengthMismatch {
            lengths: vec![x.len(), y.len()],
        });
    }
    let mut s = MomentSummary::<2>::new();
    for (&a, &b) in x.iter().zip(y) {
        s.accumulate([a, b]);
    }
    Ok(s)
}

/// Three-series variant of [`summarize2`].
pub fn summarize3(x: &[f64], y: &[f64], z: &[f64]) -> Result<MomentSummary<3>, EstimatorError> {
    if x.len() != y.len() || x.len() != z.len() {
        return Err(EstimatorError::LengthMismatch {
            lengths: vec![x.len(), y.len(), z.len()],
        });
    }
    let mut s = MomentSummary::<3>::new();
    for ((&a, &b), &c) in x.iter().zip(y).zip(z) {
        s.accumulate([a, b, c]);
    }
    Ok(s)
}

/// Reference c2: literal two-pass evaluation over in-memory series.
///
/// Kept free of any code shared with the streaming estimator.
pub fn oracle_c2(x: &[f64], y: &[f64]) -> Result<CorrelationValue, EstimatorError> {
    if x.len() != y.len() {
        return Err(EstimatorError::LengthMismatch {
            lengths: vec![x.len(), y.len()],
        });
    }
    let n = x.len();
    if n < 2 {
        return Ok(CorrelationValue::undefined(n as u64));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut cov = 0.0;
    let mut mu2x = 0.0;
    let mut mu2y = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        cov += dx * dy;
        mu2x += dx * dx;
        mu2y += dy * dy;
    }
    cov /= nf;
    mu2x /= nf;
    mu2y /= nf;
    if mu2x <= 0.0 || mu2y <= 0.0 {
        return Ok(CorrelationValue::undefined(n as u64));
    }
    Ok(CorrelationValue::defined(
        cov / (mu2x.sqrt() * mu2y.sqrt()),
        n as u64,
    ))
}

/// Reference c3: literal two-pass evaluation over in-memory series.
pub fn oracle_c3(x: &[f64], y: &[f64], z: &[f64]) -> Result<CorrelationValue, EstimatorError> {
    if x.len() != y.len() || x.len() != z.len() {
        return Err(EstimatorError::LengthMismatch {
            lengths: vec![x.len(), y.len(), z.len()],
        });
    }
    let n = x.len();
    if n < 3 {
        return Ok(CorrelationValue::undefined(n as u64));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mz = z.iter().sum::<f64>() / nf;
    let mut num = 0.0;
    let mut mu3x = 0.0;
    let mut mu3y = 0.0;
    let mut mu3z = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        let dz = z[i] - mz;
        num += dx * dy * dz;
        mu3x += dx * dx * dx;
        mu3y += dy * dy * dy;
        mu3z += dz * dz * dz;
    }
    num /= nf;
    mu3x /= nf;
    mu3y /= nf;
    mu3z /= nf;
    if mu3x == 0.0 || mu3y == 0.0 || mu3z == 0.0 {
        return Ok(CorrelationValue::undefined(n as u64));
    }
    Ok(CorrelationValue::defined(
        num / (mu3x.cbrt() * mu3y.cbrt() * mu3z.cbrt()),
        n as u64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summarize1(x: &[f64]) -> MomentSummary<1> {
        let mut s = MomentSummary::<1>::new();
        for &v in x {
            s.accumulate([v]);
        }
        s
    }

    #[test]
    fn empty_summary_is_undefined() {
        let s = MomentSummary::<2>::new();
        assert_eq!(s.n(), 0);
        assert!(!s.c2().is_defined());
    }

    #[test]
    fn hand_moments_of_0_0_3() {
        let s = summarize1(&[0.0, 0.0, 3.0]);
        assert_eq!(s.mean(0), 1.0);
        assert_eq!(s.mu2(0), 2.0);
        assert_eq!(s.mu3(0), 2.0);
    }

    #[test]
    fn c2_self_correlation_is_one() {
        let x = [1.0, 5.0, 2.0, 8.0];
        let s = summarize2(&x, &x).unwrap();
        assert!((s.c2().value.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn c2_perfect_linear_dependence() {
        let s = summarize2(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((s.c2().value.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn c2_constant_series_is_undefined() {
        let s = summarize2(&[4.0, 4.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(!s.c2().is_defined());
    }

    #[test]
    fn c3_self_correlation_fixture() {
        let x = [0.0, 0.0, 3.0];
        let s = summarize3(&x, &x, &x).unwrap();
        assert!((s.c3().value.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn c3_mixed_fixture_is_minus_half() {
        let x = [0.0, 0.0, 3.0];
        let z = [3.0, 0.0, 0.0];
        let s = summarize3(&x, &x, &z).unwrap();
        assert!((s.c3().value.unwrap() - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn c3_short_series_is_undefined() {
        let s = summarize3(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(!s.c3().is_defined());
    }

    #[test]
    fn oracle_matches_fixtures() {
        let x = [0.0, 0.0, 3.0];
        let z = [3.0, 0.0, 0.0];
        assert!((oracle_c3(&x, &x, &x).unwrap().value.unwrap() - 1.0).abs() < 1e-12);
        assert!((oracle_c3(&x, &x, &z).unwrap().value.unwrap() + 0.5).abs() < 1e-12);
        assert!(!oracle_c2(&[1.0], &[1.0]).unwrap().is_defined());
    }

    #[test]
    fn ragged_series_is_usage_error() {
        assert!(matches!(
            summarize2(&[1.0], &[1.0, 2.0]),
            Err(EstimatorError::LengthMismatch { .. })
        ));
        assert!(matches!(
            oracle_c3(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &[1.0]),
            Err(EstimatorError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn merge_equals_concatenation() {
        let a = [1.5, 2.0, 0.25, 9.0];
        let b = [4.0, 0.5, 3.25];
        let whole: Vec<f64> = a.iter().chain(&b).copied().collect();
        let mut left = summarize2(&a, &a).unwrap();
        let right = summarize2(&b, &b).unwrap();
        left.merge(&right);
        let full = summarize2(&whole, &whole).unwrap();
        assert_eq!(left.n(), full.n());
        assert!((left.mean(0) - full.mean(0)).abs() < 1e-12);
        assert!((left.mu3(0) - full.mu3(0)).abs() < 1e-12 * full.mu3(0).abs().max(1.0));
    }

    #[test]
    fn g2_zero_of_constant_is_one() {
        let s = summarize1(&[5.0; 10]);
        assert_eq!(s.g2_zero(), Some(1.0));
        assert_eq!(s.mu2(0), 0.0);
        assert_eq!(s.mu3(0), 0.0);
    }
}

//! Plug-in estimators for functional entropy and functional Fisher
//! information over an empirical measure.
//!
//! For a non-negative `f` and probability measure `μ`:
//!
//! * `Ent_μ(f) = E[f log f] − E[f] log E[f]`
//! * `I_μ(f)  = E[‖∇f‖² / f]`
//!
//! Under a standard Gaussian `μ` the log-Sobolev inequality gives
//! `Ent_μ(f) ≤ I_μ(f) / 2`, with equality for `f = exp(a·x + b)`.

use thiserror::Error;

/// Values of `f` below this are raised to it before any logarithm or division.
pub const VALUE_FLOOR: f64 = 1e-12;

const MAX_AXES: usize = 4;
const MAX_POINTS_PER_AXIS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("f is negative at sample {index} ({value})")]
    NegativeValue { index: usize, value: f64 },
    #[error("{what}: expected {expected} entries, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid product space: {0}")]
    InvalidProductSpace(String),
}

/// Probability weights over a finite sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn new(weights: Vec<f64>) -> Result<Self, EntropyError> {
        if weights.is_empty() {
            return Err(EntropyError::InvalidMeasure("no sample points".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| w.is_nan() || **w < 0.0) {
            return Err(EntropyError::InvalidMeasure(format!("weight {i} is {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(EntropyError::InvalidMeasure(format!("weights sum to {total}")));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn check_len(&self, what: &'static str, got: usize) -> Result<(), EntropyError> {
        if got != self.weights.len() {
            return Err(EntropyError::LengthMismatch {
                what,
                expected: self.weights.len(),
                got,
            });
        }
        Ok(())
    }
}

fn floored(values: &[f64]) -> Result<Vec<f64>, EntropyError> {
    values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value < 0.0 || value.is_nan() {
                Err(EntropyError::NegativeValue { index, value })
            } else {
                Ok(value.max(VALUE_FLOOR))
            }
        })
        .collect()
}

/// Entropy of already-floored values, as `Σ w m φ(f/m)` with `m = E f` and
/// `φ(r) = r ln r − r + 1`. Every term is non-negative, so near-constant `f`
/// does not lose its small entropy to cancellation.
fn entropy_of(values: &[f64], weights: &[f64]) -> f64 {
    let mean: f64 = values.iter().zip(weights).map(|(f, w)| f * w).sum();
    values
        .iter()
        .zip(weights)
        .map(|(f, w)| w * mean * phi(f / mean - 1.0))
        .sum()
}

/// `(1 + d) ln(1 + d) − d`, via its power series near zero.
fn phi(d: f64) -> f64 {
    if d.abs() > 0.05 {
        return (1.0 + d) * d.ln_1p() - d;
    }
    // Σ_{k≥2} (−1)^k d^k / (k (k − 1))
    let mut term = d * d;
    let mut sum = 0.0;
    for k in 2..24 {
        let kf = k as f64;
        sum += term / (kf * (kf - 1.0));
        term *= -d;
    }
    sum
}

pub fn functional_entropy(f_values: &[f64], measure: &EmpiricalMeasure) -> Result<f64, EntropyError> {
    measure.check_len("f_values", f_values.len())?;
    let f = floored(f_values)?;
    Ok(entropy_of(&f, measure.weights()))
}

/// `Σ_k w_k ‖g_k‖² / f_k`.
pub fn fisher_information<G: AsRef<[f64]>>(
    f_values: &[f64],
    grad_values: &[G],
    measure: &EmpiricalMeasure,
) -> Result<f64, EntropyError> {
    measure.check_len("f_values", f_values.len())?;
    measure.check_len("grad_values", grad_values.len())?;
    if let Some(first) = grad_values.first() {
        let dim = first.as_ref().len();
        if let Some(bad) = grad_values.iter().find(|g| g.as_ref().len() != dim) {
            return Err(EntropyError::LengthMismatch {
                what: "gradient dimension",
                expected: dim,
                got: bad.as_ref().len(),
            });
        }
    }
    let f = floored(f_values)?;
    Ok(f.iter()
        .zip(grad_values)
        .zip(measure.weights())
        .map(|((fk, g), w)| w * g.as_ref().iter().map(|v| v * v).sum::<f64>() / fk)
        .sum())
}

/// `I/2 − Ent`; non-negative for Gaussian samples up to sampling noise.
pub fn log_sobolev_gap<G: AsRef<[f64]>>(
    f_values: &[f64],
    grad_values: &[G],
    measure: &EmpiricalMeasure,
) -> Result<f64, EntropyError> {
    let info = fisher_information(f_values, grad_values, measure)?;
    let ent = functional_entropy(f_values, measure)?;
    Ok(0.5 * info - ent)
}

/// Both sides of the tensorization inequality on a finite product space.
///
/// `f_table` is row-major over the axes described by `marginals`. Returns
/// `(Ent_μ(f), Σ_i E_μ[Ent_{μ_i}(f | other coordinates)])`; the first never
/// exceeds the second.
pub fn tensorization_check(f_table: &[f64], marginals: &[Vec<f64>]) -> Result<(f64, f64), EntropyError> {
    if marginals.is_empty() || marginals.len() > MAX_AXES {
        return Err(EntropyError::InvalidProductSpace(format!(
            "need 1..={MAX_AXES} axes, got {}",
            marginals.len()
        )));
    }
    for (axis, m) in marginals.iter().enumerate() {
        if m.is_empty() || m.len() > MAX_POINTS_PER_AXIS {
            return Err(EntropyError::InvalidProductSpace(format!(
                "axis {axis} has {} points (allowed 1..={MAX_POINTS_PER_AXIS})",
                m.len()
            )));
        }
        EmpiricalMeasure::new(m.clone())
            .map_err(|e| EntropyError::InvalidProductSpace(format!("axis {axis}: {e}")))?;
    }
    let sizes: Vec<usize> = marginals.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().product();
    if f_table.len() != total {
        return Err(EntropyError::LengthMismatch {
            what: "f_table",
            expected: total,
            got: f_table.len(),
        });
    }
    let f = floored(f_table)?;

    // Product weights, row-major like the table.
    let mut joint = vec![1.0; total];
    for (idx, w) in joint.iter_mut().enumerate() {
        let mut rest = idx;
        for axis in (0..sizes.len()).rev() {
            *w *= marginals[axis][rest % sizes[axis]];
            rest /= sizes[axis];
        }
    }
    let lhs = entropy_of(&f, &joint);

    let mut rhs = 0.0;
    for axis in 0..sizes.len() {
        let stride: usize = sizes[axis + 1..].iter().product();
        let n = sizes[axis];
        for base in 0..total {
            // Visit each fibre along `axis` once, from its first element.
            if !(base / stride).is_multiple_of(n) {
                continue;
            }
            let fibre: Vec<f64> = (0..n).map(|k| f[base + k * stride]).collect();
            let others = weight_excluding(base, axis, &sizes, marginals);
            if others == 0.0 {
                continue;
            }
            rhs += others * entropy_of(&fibre, &marginals[axis]);
        }
    }
    Ok((lhs, rhs))
}

/// Product of the marginal weights of every coordinate of `idx` except `skip`.
fn weight_excluding(idx: usize, skip: usize, sizes: &[usize], marginals: &[Vec<f64>]) -> f64 {
    let mut rest = idx;
    let mut w = 1.0;
    for axis in (0..sizes.len()).rev() {
        if axis != skip {
            w *= marginals[axis][rest % sizes[axis]];
        }
        rest /= sizes[axis];
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn one_e_entropy() -> f64 {
        let m = (1.0 + E) / 2.0;
        E / 2.0 - m * m.ln()
    }

    #[test]
    fn phi_series_matches_closed_form() {
        for d in [-0.05, -0.01, 1e-3, 0.02, 0.05] {
            let direct = (1.0 + d) * f64::ln_1p(d) - d;
            assert!((phi(d) - direct).abs() <= 1e-15 * (1.0 + direct.abs()) + 1e-17, "{d}");
        }
        assert_eq!(phi(0.0), 0.0);
    }

    #[test]
    fn constant_function_has_zero_entropy() {
        let u = EmpiricalMeasure::uniform(4);
        assert_eq!(functional_entropy(&[1.0; 4], &u).unwrap(), 0.0);
    }

    #[test]
    fn two_point_closed_form() {
        let u = EmpiricalMeasure::uniform(2);
        let ent = functional_entropy(&[1.0, E], &u).unwrap();
        assert!((ent - one_e_entropy()).abs() < 1e-15);
        assert!((ent - 0.20623).abs() < 1e-4);
        let doubled = functional_entropy(&[2.0, 2.0 * E], &u).unwrap();
        assert!((doubled - 2.0 * ent).abs() < 1e-14);
        assert!((doubled - 0.41247).abs() < 2e-4);
    }

    #[test]
    fn negative_value_reports_index() {
        let u = EmpiricalMeasure::uniform(3);
        let err = functional_entropy(&[1.0, -0.5, 2.0], &u).unwrap_err();
        assert_eq!(err, EntropyError::NegativeValue { index: 1, value: -0.5 });
    }

    #[test]
    fn zeros_are_floored() {
        let u = EmpiricalMeasure::uniform(2);
        let ent = functional_entropy(&[0.0, 1.0], &u).unwrap();
        assert!(ent.is_finite() && ent > 0.0);
    }

    #[test]
    fn fisher_forced_arithmetic() {
        let u = EmpiricalMeasure::uniform(2);
        let i = fisher_information(&[1.0, 1.0], &[vec![3.0, 4.0], vec![0.0, 0.0]], &u).unwrap();
        assert_eq!(i, 12.5);
        let zero = fisher_information(&[2.0, 2.0], &[vec![0.0], vec![0.0]], &u).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn fisher_length_mismatch() {
        let u = EmpiricalMeasure::uniform(2);
        assert!(matches!(
            fisher_information(&[1.0, 1.0], &[vec![1.0]], &u),
            Err(EntropyError::LengthMismatch { .. })
        ));
        assert!(matches!(
            fisher_information(&[1.0, 1.0], &[vec![1.0], vec![1.0, 2.0]], &u),
            Err(EntropyError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn constant_gap_is_zero() {
        let u = EmpiricalMeasure::uniform(3);
        let gap = log_sobolev_gap(&[3.0; 3], &[vec![0.0], vec![0.0], vec![0.0]], &u).unwrap();
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn measure_validation() {
        assert!(EmpiricalMeasure::new(vec![0.5, 0.5]).is_ok());
        assert!(EmpiricalMeasure::new(vec![0.5, 0.6]).is_err());
        assert!(EmpiricalMeasure::new(vec![1.5, -0.5]).is_err());
        assert!(EmpiricalMeasure::new(vec![]).is_err());
    }

    #[test]
    fn tensorization_constant_and_single_axis() {
        let half = vec![0.5, 0.5];
        let (l, r) = tensorization_check(&[2.0; 4], &[half.clone(), half.clone()]).unwrap();
        assert_eq!((l, r), (0.0, 0.0));

        // f(a, b) = (1, e)[a]
        let table = [1.0, 1.0, E, E];
        let (l, r) = tensorization_check(&table, &[half.clone(), half]).unwrap();
        assert!((l - one_e_entropy()).abs() < 1e-12);
        assert!((l - r).abs() < 1e-12);
    }

    #[test]
    fn tensorization_rejects_bad_specs() {
        assert!(tensorization_check(&[1.0; 4], &[vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
        assert!(tensorization_check(&[1.0; 3], &[vec![0.5, 0.5], vec![0.5, 0.5]]).is_err());
        assert!(tensorization_check(&[1.0; 32], &vec![vec![0.5, 0.5]; 5]).is_err());
        assert!(tensorization_check(&[1.0; 9], &[vec![1.0 / 9.0; 9]]).is_err());
    }
}

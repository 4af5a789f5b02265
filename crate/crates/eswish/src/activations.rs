//! Activation functions and their analytic derivatives.
//!
//! The star is E-swish, `f(x) = βx·σ(x)`, whose derivative is
//! `f'(x) = f(x) + σ(x)(β − f(x))`. At β = 1 it reverts to Swish. The rest
//! of the zoo (ReLU, ELU, Softplus, sigmoid, tanh, identity) exists for
//! comparison runs.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Numerically stable logistic function, valid across the full double range.
///
/// Uses the `exp(-x)` branch for x ≥ 0 and the `exp(x)/(1+exp(x))` branch
/// for x < 0, so neither branch ever exponentiates a positive argument.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sigmoid` with the domain check from the contract: NaN input is an error.
pub fn sigmoid_checked(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("sigmoid of NaN".into()));
    }
    Ok(sigmoid(x))
}

/// Overflow-free softplus: `max(x, 0) + log1p(exp(-|x|))`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// E-swish: `βx·σ(x)`.
#[inline]
pub fn eswish(beta: f64, x: f64) -> f64 {
    beta * x * sigmoid(x)
}

/// Analytic E-swish derivative: `f(x) + σ(x)(β − f(x))`.
#[inline]
pub fn eswish_grad(beta: f64, x: f64) -> f64 {
    let f = eswish(beta, x);
    f + sigmoid(x) * (beta - f)
}

/// Swish `x·σ(x)`, the β = 1 case. Shares the E-swish code path so the
/// β-identity holds bit-exactly.
#[inline]
pub fn swish(x: f64) -> f64 {
    eswish(1.0, x)
}

/// Global minimizer and minimum of E-swish, found by bisecting the
/// derivative's root on x < 0 to 1e-12.
///
/// The minimizer is β-independent (scaling the function by β does not move
/// its critical points); the minimum scales linearly in β.
pub fn eswish_min(beta: f64) -> Result<(f64, f64)> {
    validate_beta(beta)?;
    // f'(x) = βσ(x)(1 + x(1 - σ(x))); the root on x < 0 is where
    // g(x) = 1 + x(1 - σ(x)) crosses zero.
    let g = |x: f64| 1.0 + x * (1.0 - sigmoid(x));
    let (mut lo, mut hi) = (-2.0, -1.0);
    debug_assert!(g(lo) < 0.0 && g(hi) > 0.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x_min = 0.5 * (lo + hi);
    Ok((x_min, eswish(beta, x_min)))
}

fn validate_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::Domain(format!(
            "E-swish beta must be finite and > 0, got {beta}"
        )));
    }
    Ok(())
}

/// Activation kinds known to the framework.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    /// `βx·σ(x)` with a fixed, non-learnable β.
    EswishBeta,
    /// `x·σ(x)`; identical to E-swish at β = 1.
    Swish,
    Relu,
    Elu,
    Softplus,
    Sigmoid,
    Tanh,
    /// Pass-through, provided for testing (affine landscapes stay affine).
    Identity,
}

/// An activation kind plus its coefficients.
///
/// Canonical text form (used by the CLI and config files): `relu`, `swish`,
/// `eswish:1.5`, `elu`, `softplus`, `sigmoid`, `tanh`, `identity`. The β
/// after the colon needs a decimal point for non-integer values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    /// Only read by `EswishBeta`.
    pub beta: f64,
    /// Only read by `Elu`.
    pub elu_alpha: f64,
}

impl ActivationSpec {
    pub fn new(kind: ActivationKind) -> Self {
        ActivationSpec {
            kind,
            beta: 1.0,
            elu_alpha: 1.0,
        }
    }

    pub fn relu() -> Self {
        Self::new(ActivationKind::Relu)
    }

    pub fn swish() -> Self {
        Self::new(ActivationKind::Swish)
    }

    pub fn identity() -> Self {
        Self::new(ActivationKind::Identity)
    }

    /// E-swish with the given β. Errors if β is non-finite or ≤ 0; values
    /// outside the recommended [1, 2] range are accepted (the CLI warns).
    pub fn eswish(beta: f64) -> Result<Self> {
        validate_beta(beta)?;
        Ok(ActivationSpec {
            kind: ActivationKind::EswishBeta,
            beta,
            elu_alpha: 1.0,
        })
    }

    /// True when β lies outside the recommended [1, 2] interval.
    /// Out-of-range β is legal; callers decide whether to warn.
    pub fn beta_out_of_recommended_range(&self) -> bool {
        self.kind == ActivationKind::EswishBeta && !(1.0..=2.0).contains(&self.beta)
    }

    /// Scalar forward map.
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::EswishBeta => eswish(self.beta, x),
            ActivationKind::Swish => eswish(1.0, x),
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Elu => {
                if x > 0.0 {
                    x
                } else {
                    self.elu_alpha * x.exp_m1()
                }
            }
            ActivationKind::Softplus => softplus(x),
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Identity => x,
        }
    }

    /// Scalar derivative w.r.t. the pre-activation.
    ///
    /// The ReLU subgradient at exactly 0 is defined as 0 so training is
    /// bit-reproducible.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::EswishBeta => eswish_grad(self.beta, x),
            ActivationKind::Swish => eswish_grad(1.0, x),
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    self.elu_alpha * x.exp()
                }
            }
            ActivationKind::Softplus => sigmoid(x),
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Identity => 1.0,
        }
    }

    /// Elementwise forward over a matrix of pre-activations.
    pub fn forward(&self, z: &Matrix) -> Result<Matrix> {
        if !z.all_finite() {
            return Err(Error::Domain(format!(
                "non-finite pre-activation fed to {self}"
            )));
        }
        Ok(z.map(|x| self.apply(x)))
    }

    /// Elementwise derivative over a matrix of pre-activations.
    pub fn grad(&self, z: &Matrix) -> Result<Matrix> {
        if !z.all_finite() {
            return Err(Error::Domain(format!(
                "non-finite pre-activation fed to {self} grad"
            )));
        }
        Ok(z.map(|x| self.derivative(x)))
    }
}

impl fmt::Display for ActivationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActivationKind::EswishBeta => {
                if self.beta == self.beta.trunc() {
                    write!(f, "eswish:{:.1}", self.beta)
                } else {
                    write!(f, "eswish:{}", self.beta)
                }
            }
            ActivationKind::Swish => write!(f, "swish"),
            ActivationKind::Relu => write!(f, "relu"),
            ActivationKind::Elu => write!(f, "elu"),
            ActivationKind::Softplus => write!(f, "softplus"),
            ActivationKind::Sigmoid => write!(f, "sigmoid"),
            ActivationKind::Tanh => write!(f, "tanh"),
            ActivationKind::Identity => write!(f, "identity"),
        }
    }
}

impl FromStr for ActivationSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(beta) = s.strip_prefix("eswish:") {
            let beta: f64 = beta
                .parse()
                .map_err(|_| Error::Config(format!("bad E-swish beta: {beta:?}")))?;
            return ActivationSpec::eswish(beta);
        }
        match s {
            "eswish" => ActivationSpec::eswish(1.0),
            "swish" => Ok(ActivationSpec::swish()),
            "relu" => Ok(ActivationSpec::relu()),
            "elu" => Ok(ActivationSpec::new(ActivationKind::Elu)),
            "softplus" => Ok(ActivationSpec::new(ActivationKind::Softplus)),
            "sigmoid" => Ok(ActivationSpec::new(ActivationKind::Sigmoid)),
            "tanh" => Ok(ActivationSpec::new(ActivationKind::Tanh)),
            "identity" | "linear" => Ok(ActivationSpec::identity()),
            other => Err(Error::Config(format!("unknown activation: {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    // Central finite difference, the independent oracle for every analytic
    // derivative in this module.
    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn sigmoid_at_zero() {
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn sigmoid_at_one() {
        // 1/(1+e^-1) to 10 places.
        assert!((sigmoid(1.0) - 0.7310585786).abs() < 1e-10);
    }

    #[test]
    fn sigmoid_extreme_negative_is_tiny_not_nan() {
        let v = sigmoid(-710.0);
        assert!(v > 0.0 && v <= 1e-300 && v.is_finite());
        assert!(sigmoid(710.0) == 1.0);
    }

    #[test]
    fn sigmoid_nan_is_domain_error() {
        assert!(sigmoid_checked(f64::NAN).is_err());
        assert!(sigmoid_checked(1.0).is_ok());
    }

    #[test]
    fn eswish_zero_is_zero() {
        for beta in [0.5, 1.0, 1.5, 2.0] {
            assert_eq!(eswish(beta, 0.0), 0.0);
        }
    }

    #[test]
    fn eswish_known_values() {
        // 1.5 * σ(1) and 2 * (-1) * σ(-1), σ from the stable evaluation.
        assert!((eswish(1.5, 1.0) - 1.0965878679).abs() < 1e-9);
        assert!((eswish(2.0, -1.0) - (-0.5378828427)).abs() < 1e-9);
    }

    #[test]
    fn eswish_grad_at_zero_is_half_beta() {
        for beta in [1.0, 1.25, 1.5, 2.0] {
            assert_eq!(eswish_grad(beta, 0.0), beta / 2.0);
        }
    }

    #[test]
    fn eswish_grad_beta1_matches_swish_derivative_form() {
        let x = 3.0;
        let f = swish(x);
        let swish_deriv = f + sigmoid(x) * (1.0 - f);
        assert_eq!(eswish_grad(1.0, x), swish_deriv);
    }

    #[test]
    fn eswish_grad_matches_finite_difference_spot() {
        let (beta, x, h) = (1.75, 0.7, 1e-5);
        let fd = central_diff(|x| eswish(beta, x), x, h);
        let an = eswish_grad(beta, x);
        assert!((an - fd).abs() / an.abs() < 1e-7);
    }

    #[test]
    fn invalid_beta_is_domain_error() {
        assert!(ActivationSpec::eswish(0.0).is_err());
        assert!(ActivationSpec::eswish(-1.0).is_err());
        assert!(ActivationSpec::eswish(f64::NAN).is_err());
        assert!(eswish_min(f64::INFINITY).is_err());
    }

    #[test]
    fn beta_outside_recommended_range_warns_not_errors() {
        let spec = ActivationSpec::eswish(2.5).unwrap();
        assert!(spec.beta_out_of_recommended_range());
        assert!(!ActivationSpec::eswish(1.125)
            .unwrap()
            .beta_out_of_recommended_range());
    }

    #[test]
    fn relu_forward_and_grad() {
        let spec = ActivationSpec::relu();
        let z = Matrix::from_vec(1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(spec.forward(&z).unwrap().data(), &[0.0, 0.0, 2.0]);
        assert_eq!(spec.grad(&z).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn sigmoid_grad_at_zero() {
        assert_eq!(ActivationSpec::new(ActivationKind::Sigmoid).derivative(0.0), 0.25);
    }

    #[test]
    fn softplus_at_zero_is_ln2() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn softplus_no_overflow() {
        assert!(softplus(1e8).is_finite());
        assert_eq!(softplus(-1e8), 0.0);
    }

    #[test]
    fn non_finite_input_is_domain_error() {
        let z = Matrix::from_vec(1, 1, vec![f64::NAN]).unwrap();
        assert!(ActivationSpec::swish().forward(&z).is_err());
        assert!(ActivationSpec::swish().grad(&z).is_err());
    }

    #[test]
    fn eswish_beta1_equals_swish_on_matrix() {
        let mut rng = Rng::new(3);
        let z = Matrix::from_fn(4, 4, |_, _| rng.uniform(-8.0, 8.0));
        let a = ActivationSpec::eswish(1.0).unwrap().forward(&z).unwrap();
        let b = ActivationSpec::swish().forward(&z).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_oracle_over_grid_all_kinds() {
        let h = 1e-5;
        let mut specs = vec![
            ActivationSpec::relu(),
            ActivationSpec::swish(),
            ActivationSpec::new(ActivationKind::Elu),
            ActivationSpec::new(ActivationKind::Softplus),
            ActivationSpec::new(ActivationKind::Sigmoid),
            ActivationSpec::new(ActivationKind::Tanh),
            ActivationSpec::identity(),
        ];
        for beta in [1.0, 1.125, 1.25, 1.5, 1.75, 2.0] {
            specs.push(ActivationSpec::eswish(beta).unwrap());
        }
        for spec in specs {
            let mut worst = 0.0_f64;
            let mut k = 0;
            while -10.0 + 0.05 * k as f64 <= 10.0 {
                let x = -10.0 + 0.05 * k as f64;
                k += 1;
                // ReLU and ELU are not C3 at 0, so the central difference
                // loses its quadratic accuracy there; skip the kink.
                let kinked = matches!(spec.kind, ActivationKind::Relu | ActivationKind::Elu);
                if kinked && x.abs() <= 2.0 * h {
                    continue;
                }
                let an = spec.derivative(x);
                let fd = central_diff(|x| spec.apply(x), x, h);
                let err = if an.abs() < 1e-3 {
                    assert!((an - fd).abs() < 1e-8, "{spec} at {x}: {an} vs {fd}");
                    0.0
                } else {
                    (an - fd).abs() / an.abs().max(fd.abs())
                };
                worst = worst.max(err);
            }
            assert!(worst < 1e-6, "{spec}: worst relative error {worst}");
        }
    }

    #[test]
    fn eswish_min_beta1() {
        let (x_min, f_min) = eswish_min(1.0).unwrap();
        assert!((x_min - (-1.27846)).abs() < 1e-4, "x_min {x_min}");
        assert!((f_min - (-0.27846)).abs() < 1e-4, "f_min {f_min}");
        // Cross-check with a dense grid scan.
        let grid_min = (0..20_000)
            .map(|k| eswish(1.0, -10.0 + k as f64 * 1e-3))
            .fold(f64::INFINITY, f64::min);
        assert!((f_min - grid_min).abs() < 1e-6);
    }

    #[test]
    fn eswish_min_scales_linearly_in_beta() {
        let (x1, f1) = eswish_min(1.0).unwrap();
        let (x2, f2) = eswish_min(2.0).unwrap();
        assert_eq!(x1, x2);
        assert!((f2 - 2.0 * f1).abs() < 1e-12);
        assert!((f2 - (-0.55693)).abs() < 1e-4);
    }

    #[test]
    fn non_monotonic_and_bounded() {
        for beta in [1.0, 1.25, 1.5, 2.0] {
            let (x_min, f_min) = eswish_min(beta).unwrap();
            assert!(f_min < 0.0);
            // The function dips below its far-left limit of 0, then rises.
            assert!(eswish(beta, -30.0) > f_min);
            assert!(eswish(beta, x_min + 0.5) > f_min);
            // Unbounded above.
            assert!(eswish(beta, 1e3) > 1e2);
        }
    }

    #[test]
    fn derivative_max_exceeds_one_and_grows_with_beta() {
        let max_grad = |beta: f64| {
            (0..=400)
                .map(|k| eswish_grad(beta, -10.0 + 0.05 * k as f64))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let betas = [1.0, 1.125, 1.25, 1.5, 1.75, 2.0];
        let maxes: Vec<f64> = betas.iter().map(|&b| max_grad(b)).collect();
        for m in &maxes {
            assert!(*m > 1.0);
        }
        for w in maxes.windows(2) {
            assert!(w[1] > w[0], "max derivative not increasing: {maxes:?}");
        }
    }

    #[test]
    fn canonical_text_round_trip() {
        for s in ["relu", "swish", "eswish:1.5", "elu", "softplus", "sigmoid", "tanh"] {
            let spec: ActivationSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("eswish:abc".parse::<ActivationSpec>().is_err());
        assert!("gelu".parse::<ActivationSpec>().is_err());
    }

    proptest! {
        #[test]
        fn beta1_identity_bit_exact(x in -50.0..50.0f64) {
            prop_assert_eq!(eswish(1.0, x), swish(x));
        }

        #[test]
        fn linear_scaling_in_beta(x in -50.0..50.0f64, beta in 0.1..4.0f64) {
            let lhs = eswish(beta, x);
            let rhs = beta * swish(x);
            prop_assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * lhs.abs().max(1.0));
        }
    }
}

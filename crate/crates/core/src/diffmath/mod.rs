//! Differentiation engine: forward jets for spatial derivatives, a reverse
//! tape for parameter gradients, and finite-difference utilities.

pub mod expr;
pub mod jet;
pub mod scalar;
pub mod tape;

pub use expr::Expr;
pub use jet::{component_count, Jet, SpatialJet};
pub use scalar::{vec3, Ring, Scalar};
pub use tape::{AdjointContext, Gradient, Var};

use crate::error::{Error, Result};

/// A map from the 2D chart into ℝ³ built from the engine's primitives.
pub trait JetField {
    fn eval_jet<S: Scalar>(&self, xi: [Jet<S>; 2]) -> Result<[Jet<S>; 3]>;
}

/// Seeds the chart coordinates at `xi` and evaluates `field` with all
/// derivatives up to `order` (1, 2 or 3).
pub fn jet_eval<F: JetField + ?Sized>(field: &F, xi: [f64; 2], order: u8) -> Result<SpatialJet> {
    if !(1..=3).contains(&order) {
        return Err(Error::Invalid(format!("jet order {order} outside 1..=3")));
    }
    let seeds = [Jet::variable(xi[0], 0).truncate(order), Jet::variable(xi[1], 1).truncate(order)];
    let comps = field.eval_jet(seeds)?;
    Ok(SpatialJet::new(comps.map(|c| c.truncate(order))))
}

/// Three coordinate expressions in `u`, `v`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExprField {
    pub comps: [Expr; 3],
}

impl ExprField {
    pub fn parse(x: &str, y: &str, z: &str) -> Result<Self> {
        Ok(Self { comps: [Expr::parse(x)?, Expr::parse(y)?, Expr::parse(z)?] })
    }
}

impl JetField for ExprField {
    fn eval_jet<S: Scalar>(&self, xi: [Jet<S>; 2]) -> Result<[Jet<S>; 3]> {
        Ok([self.comps[0].eval(&xi)?, self.comps[1].eval(&xi)?, self.comps[2].eval(&xi)?])
    }
}

/// Max over components of `|analytic − central difference| / (|analytic| + 1e-12)`.
pub fn finite_difference_check<F>(f: F, analytic: &[f64], x: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Invalid(format!("finite-difference step must be positive, got {h}")));
    }
    if analytic.len() != x.len() {
        return Err(Error::Invalid("gradient and point dimensions differ".into()));
    }
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!(
                "f at probe {i} (x ± {h}) returned {fp} / {fm}"
            )));
        }
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((analytic[i] - fd).abs() / (analytic[i].abs() + 1e-12));
    }
    Ok(worst)
}

/// Directional central difference `(f(x + h v) − f(x − h v)) / 2h`.
pub fn directional_difference<F>(f: F, x: &[f64], dir: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let plus: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + h * d).collect();
    let minus: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a - h * d).collect();
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = CompensatedSum::new();
    for x in it {
        s.add(x);
    }
    s.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear;
    impl JetField for Linear {
        fn eval_jet<S: Scalar>(&self, xi: [Jet<S>; 2]) -> Result<[Jet<S>; 3]> {
            Ok([xi[0], xi[1], Jet::constant(S::zero())])
        }
    }

    struct Constant;
    impl JetField for Constant {
        fn eval_jet<S: Scalar>(&self, _xi: [Jet<S>; 2]) -> Result<[Jet<S>; 3]> {
            Ok([1.0, -2.0, 3.5].map(|c| Jet::constant(S::from_f64(c))))
        }
    }

    #[test]
    fn linear_map_first_order() {
        let j = jet_eval(&Linear, [0.3, -0.8], 1).unwrap();
        assert_eq!(j.d1(), [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]);
    }

    #[test]
    fn sine_second_order() {
        let f = ExprField::parse("sin(30*u)", "0", "0").unwrap();
        let j = jet_eval(&f, [0.0, 0.4], 2).unwrap();
        assert!((j.d1()[0][0] - 30.0).abs() < 1e-12);
        assert!(j.d2()[0][0][0].abs() < 1e-12);
    }

    #[test]
    fn constant_field_all_blocks_zero() {
        let j = jet_eval(&Constant, [0.1, 0.2], 3).unwrap();
        assert_eq!(j.d1(), [[0.0; 2]; 3]);
        assert_eq!(j.d2(), [[[0.0; 2]; 2]; 3]);
        assert_eq!(j.d3().unwrap(), [[[[0.0; 2]; 2]; 2]; 3]);
    }

    #[test]
    fn invalid_order_rejected() {
        assert!(jet_eval(&Linear, [0.0, 0.0], 4).is_err());
        assert!(jet_eval(&Linear, [0.0, 0.0], 0).is_err());
    }

    #[test]
    fn unsupported_primitive_surfaces() {
        let f = ExprField::parse("u", "v", "exp(u)").unwrap();
        assert!(matches!(jet_eval(&f, [0.0, 0.0], 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn fd_check_quadratic_and_exp() {
        let e = finite_difference_check(|x| x[0] * x[0], &[6.0], &[3.0], 1e-5).unwrap();
        assert!(e <= 1e-8, "{e}");
        let e = finite_difference_check(|x| x[0].exp(), &[1f64.exp()], &[1.0], 1e-5).unwrap();
        assert!(e <= 1e-8, "{e}");
    }

    #[test]
    fn fd_check_kink_reports_large_error() {
        let e = finite_difference_check(|x| x[0].abs(), &[1.0], &[0.0], 1e-5).unwrap();
        assert!(e > 0.5);
    }

    #[test]
    fn fd_check_errors() {
        assert!(finite_difference_check(|x| x[0], &[1.0], &[0.0], 0.0).is_err());
        let r = finite_difference_check(|x| 1.0 / x[0], &[1.0], &[1e-6], 1e-6);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }
}

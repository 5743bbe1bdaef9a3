//! Hamiltonian |xi|^p - f(x), its Legendre transform C_p |v|^q + f(x) and related pairings.

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, Point};
use crate::scalar::{lit, to_f64, Real};

/// Shape part of a running cost.
#[derive(Debug, Clone, PartialEq)]
pub enum CostShape<T> {
    Zero,
    /// slope . x
    Affine { slope: Point<T> },
    /// coefficient |x|^2
    Quadratic { coefficient: T },
    /// amplitude exp(-|x|^2 / width^2)
    Bump { amplitude: T, width: T },
    /// amplitude cos(wavenumber |x|)
    Cosine { amplitude: T, wavenumber: T },
}

/// Running cost f = shape + offset with closed-form gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningCost<T> {
    pub shape: CostShape<T>,
    pub offset: T,
}

impl<T: Real> RunningCost<T> {
    pub fn zero() -> Self {
        Self { shape: CostShape::Zero, offset: T::zero() }
    }

    pub fn constant(k: T) -> Self {
        Self { shape: CostShape::Zero, offset: k }
    }

    pub fn affine(offset: T, slope: Point<T>) -> Self {
        Self { shape: CostShape::Affine { slope }, offset }
    }

    pub fn quadratic(coefficient: T) -> Self {
        Self { shape: CostShape::Quadratic { coefficient }, offset: T::zero() }
    }

    pub fn bump(amplitude: T, width: T) -> Self {
        Self { shape: CostShape::Bump { amplitude, width }, offset: T::zero() }
    }

    pub fn cosine(amplitude: T, wavenumber: T) -> Self {
        Self { shape: CostShape::Cosine { amplitude, wavenumber }, offset: T::zero() }
    }

    /// f + k.
    pub fn shifted(&self, k: T) -> Self {
        Self { shape: self.shape.clone(), offset: self.offset + k }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.shape, CostShape::Zero)
    }

    pub fn value(&self, x: &Point<T>) -> T {
        let s = match &self.shape {
            CostShape::Zero => T::zero(),
            CostShape::Affine { slope } => dot(slope, x),
            CostShape::Quadratic { coefficient } => *coefficient * dot(x, x),
            CostShape::Bump { amplitude, width } => *amplitude * (-dot(x, x) / (*width * *width)).exp(),
            CostShape::Cosine { amplitude, wavenumber } => *amplitude * (*wavenumber * norm(x)).cos(),
        };
        s + self.offset
    }

    pub fn gradient(&self, x: &Point<T>) -> Point<T> {
        let z = T::zero();
        match &self.shape {
            CostShape::Zero => [z, z],
            CostShape::Affine { slope } => *slope,
            CostShape::Quadratic { coefficient } => {
                let c = *coefficient * lit(2.0);
                [c * x[0], c * x[1]]
            }
            CostShape::Bump { amplitude, width } => {
                let w2 = *width * *width;
                let g = -lit::<T>(2.0) * *amplitude * (-dot(x, x) / w2).exp() / w2;
                [g * x[0], g * x[1]]
            }
            CostShape::Cosine { amplitude, wavenumber } => {
                let r = norm(x);
                if r == z {
                    return [z, z];
                }
                let g = -*amplitude * *wavenumber * (*wavenumber * r).sin() / r;
                [g * x[0], g * x[1]]
            }
        }
    }
}

/// Legendre coefficient of |xi|^p: sup_xi (v xi - |xi|^p) = C_p |v|^q.
pub fn legendre_coefficient<T: Real>(p: T) -> T {
    let q = p / (p - T::one());
    (p - T::one()) * p.powf(-q)
}

/// Coefficient p^(-1/q) (p - 1), a frequently quoted alternative form that fails the brute-force check.
pub fn alternative_coefficient<T: Real>(p: T) -> T {
    let q = p / (p - T::one());
    p.powf(-T::one() / q) * (p - T::one())
}

/// Max over `xi_samples` of |max over `v_samples` of (xi v - coefficient |v|^q) - |xi|^p|, with a
/// grid-dependent tolerance derived from the spacing of `v_samples`.
pub fn legendre_check<T: Real>(p: T, coefficient: T, xi_samples: &[T], v_samples: &[T]) -> Result<T> {
    if xi_samples.is_empty() || v_samples.len() < 2 {
        return Err(Error::InvalidParameter("legendre_check needs samples".into()));
    }
    let q = p / (p - T::one());
    let dv = v_samples.windows(2).map(|w| (w[1] - w[0]).abs()).fold(T::zero(), T::max);
    let mut worst = T::zero();
    for &xi in xi_samples {
        let sup = v_samples
            .iter()
            .map(|&v| xi * v - coefficient * v.abs().powf(q))
            .fold(T::neg_infinity(), T::max);
        let target = xi.abs().powf(p);
        let residual = (sup - target).abs();
        let vstar = p * xi.abs().powf(p - T::one());
        let tol = lit::<T>(4.0)
            * coefficient.abs()
            * (dv * lit(0.5)).powf(q.min(lit(2.0)))
            * vstar.max(T::one()).powf((q - lit(2.0)).max(T::zero()))
            + lit::<T>(1e-12) * (T::one() + target);
        if residual > tol {
            return Err(Error::CoefficientMismatch {
                xi: to_f64(xi),
                residual: to_f64(residual),
                tolerance: to_f64(tol),
            });
        }
        worst = worst.max(residual);
    }
    Ok(worst)
}

/// Runs the brute-force check on the candidate coefficients and returns the first that passes.
pub fn select_legendre_coefficient<T: Real>(p: T) -> Result<T> {
    let xi: Vec<T> = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0].iter().map(|&v| lit(v)).collect();
    let vmax = p * lit::<T>(2.0).powf(p - T::one()) * lit(1.25);
    let dv = lit::<T>(1e-3);
    let n = (vmax / dv).ceil().to_i64().unwrap_or(1);
    let v: Vec<T> = (-n..=n).map(|k| T::from_i64(k).unwrap() * dv).collect();
    let mut last = None;
    for c in [legendre_coefficient(p), alternative_coefficient(p)] {
        match legendre_check(p, c, &xi, &v) {
            Ok(_) => return Ok(c),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap())
}

/// Exponent p, diffusion epsilon and running cost f, with the verified Legendre coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianSpec<T> {
    p: T,
    q: T,
    epsilon: T,
    cost: RunningCost<T>,
    c_p: T,
}

impl<T: Real> LagrangianSpec<T> {
    pub fn new(p: T, epsilon: T, cost: RunningCost<T>) -> Result<Self> {
        if !(p > T::one()) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!("exponent p = {p} must exceed 1")));
        }
        if !(epsilon > T::zero()) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
        }
        let q = p / (p - T::one());
        let c_p = select_legendre_coefficient(p)?;
        Ok(Self { p, q, epsilon, cost, c_p })
    }

    /// Fails unless p > 2, the regime of the state-constraint pipelines.
    pub fn require_superquadratic(&self) -> Result<()> {
        if self.p > lit(2.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("p = {} must exceed 2", self.p)))
        }
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn q(&self) -> T {
        self.q
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn cost(&self) -> &RunningCost<T> {
        &self.cost
    }

    pub fn c_p(&self) -> T {
        self.c_p
    }

    /// Hoelder exponent (p - 2)/(p - 1) of state-constraint solutions.
    pub fn alpha(&self) -> T {
        (self.p - lit(2.0)) / (self.p - T::one())
    }

    /// Same exponent and diffusion with a different running cost.
    pub fn with_cost(&self, cost: RunningCost<T>) -> Self {
        Self { cost, ..self.clone() }
    }

    pub fn f(&self, x: &Point<T>) -> T {
        self.cost.value(x)
    }

    pub fn hamiltonian(&self, x: &Point<T>, xi: &Point<T>) -> T {
        norm(xi).powf(self.p) - self.cost.value(x)
    }

    /// C_p |v|^q, the velocity part of L.
    pub fn kinetic(&self, v: &Point<T>) -> T {
        self.c_p * norm(v).powf(self.q)
    }

    pub fn lagrangian(&self, x: &Point<T>, v: &Point<T>) -> T {
        self.kinetic(v) + self.cost.value(x)
    }

    /// (-x, v) . grad L(x, v) = -x . Df(x) + q C_p |v|^q.
    pub fn radial_gradient_pairing(&self, x: &Point<T>, v: &Point<T>) -> T {
        -dot(x, &self.cost.gradient(x)) + self.q * self.kinetic(v)
    }

    /// L((1 + r) x, v / (1 + r)).
    pub fn scaled_lagrangian(&self, r: T, x: &Point<T>, v: &Point<T>) -> Result<T> {
        let s = T::one() + r;
        if !(s > T::zero()) {
            return Err(Error::InvalidScale(to_f64(s)));
        }
        Ok(self.lagrangian(&[x[0] * s, x[1] * s], &[v[0] / s, v[1] / s]))
    }
}

pub fn hamiltonian_value<T: Real>(spec: &LagrangianSpec<T>, x: &Point<T>, xi: &Point<T>) -> T {
    spec.hamiltonian(x, xi)
}

pub fn lagrangian_value<T: Real>(spec: &LagrangianSpec<T>, x: &Point<T>, v: &Point<T>) -> T {
    spec.lagrangian(x, v)
}

pub fn radial_gradient_pairing<T: Real>(spec: &LagrangianSpec<T>, x: &Point<T>, v: &Point<T>) -> T {
    spec.radial_gradient_pairing(x, v)
}

pub fn scaled_lagrangian<T: Real>(spec: &LagrangianSpec<T>, r: T, x: &Point<T>, v: &Point<T>) -> Result<T> {
    spec.scaled_lagrangian(r, x, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pt(x: f64) -> Point<f64> {
        [x, 0.0]
    }

    #[test]
    fn hamiltonian_examples() {
        let s = LagrangianSpec::new(3.0, 0.1, RunningCost::zero()).unwrap();
        assert_relative_eq!(s.hamiltonian(&pt(0.3), &pt(2.0)), 8.0, epsilon = 1e-12);
        let s = LagrangianSpec::new(3.0, 0.1, RunningCost::constant(5.0)).unwrap();
        assert_eq!(s.hamiltonian(&pt(0.3), &pt(0.0)), -5.0);
        let s = LagrangianSpec::new(4.0, 0.1, RunningCost::quadratic(1.0)).unwrap();
        assert_relative_eq!(s.hamiltonian(&pt(0.5), &pt(1.0)), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_lagrangian_by_brute_force() {
        let s = LagrangianSpec::new(2.0, 1.0, RunningCost::zero()).unwrap();
        let sup = (0..=200000)
            .map(|k| -10.0 + k as f64 * 1e-4)
            .map(|xi| 2.0 * xi - xi * xi)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(s.lagrangian(&pt(0.0), &pt(2.0)), sup, epsilon = 1e-8);
        assert_relative_eq!(s.c_p(), 0.25, epsilon = 1e-15);
        let s = LagrangianSpec::new(3.0, 0.1, RunningCost::constant(5.0)).unwrap();
        assert_eq!(s.lagrangian(&pt(0.2), &pt(0.0)), 5.0);
    }

    #[test]
    fn legendre_check_selects_direct_coefficient() {
        let v: Vec<f64> = (-8000..=8000).map(|k| k as f64 * 1e-3).collect();
        let xi = [-1.5, -0.5, 0.0, 0.7, 1.9];
        let res = legendre_check(2.0, 0.25, &xi, &v).unwrap();
        assert!(res <= 1e-4);
        for p in [2.5, 3.0, 4.0] {
            let c = select_legendre_coefficient(p).unwrap();
            assert_relative_eq!(c, legendre_coefficient(p), epsilon = 1e-15);
            let v: Vec<f64> = (-30000..=30000).map(|k| k as f64 * 1e-3).collect();
            let err = legendre_check(p, alternative_coefficient(p), &xi, &v).unwrap_err();
            assert!(matches!(err, Error::CoefficientMismatch { .. }));
        }
        assert_eq!(legendre_check(3.0, 123.0, &[0.0], &v).unwrap(), 0.0);
    }

    #[test]
    fn pairing_examples() {
        let s = LagrangianSpec::new(3.0, 0.1, RunningCost::constant(2.0)).unwrap();
        let v = pt(0.7);
        assert_relative_eq!(s.radial_gradient_pairing(&pt(0.4), &v), s.q() * s.c_p() * 0.7f64.powf(1.5));
        let s = LagrangianSpec::new(3.0, 0.1, RunningCost::quadratic(1.0)).unwrap();
        assert_relative_eq!(s.radial_gradient_pairing(&pt(0.5), &pt(0.0)), -0.5);

        // finite difference of L along s -> ((1 - s) x, (1 + s) v)
        let s = LagrangianSpec::new(2.0, 1.0, RunningCost::zero()).unwrap();
        let (x, v) = (pt(0.3), pt(2.0));
        let d = 1e-6;
        let l = |t: f64| s.lagrangian(&[(1.0 - t) * x[0], 0.0], &[(1.0 + t) * v[0], 0.0]);
        let fd = (l(d) - l(-d)) / (2.0 * d);
        assert_relative_eq!(s.radial_gradient_pairing(&x, &v), 2.0, epsilon = 1e-12);
        assert_relative_eq!(fd, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn scaled_lagrangian_examples() {
        let s = LagrangianSpec::new(3.0, 0.1, RunningCost::bump(1.0, 0.5)).unwrap();
        let (x, v) = (pt(0.3), pt(-1.1));
        assert_eq!(s.scaled_lagrangian(0.0, &x, &v).unwrap(), s.lagrangian(&x, &v));
        let z = LagrangianSpec::new(3.0, 0.1, RunningCost::zero()).unwrap();
        assert_relative_eq!(
            z.scaled_lagrangian(0.3, &x, &v).unwrap(),
            1.3f64.powf(-1.5) * z.kinetic(&v),
            epsilon = 1e-14
        );
        let r = 1e-4;
        let quotient = (s.lagrangian(&x, &v) - s.scaled_lagrangian(r, &x, &v).unwrap()) / r;
        let pairing = s.radial_gradient_pairing(&x, &v);
        assert!((quotient - pairing).abs() <= 1e-3 * pairing.abs());
        assert!(matches!(s.scaled_lagrangian(-1.5, &x, &v), Err(Error::InvalidScale(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let costs = [
            RunningCost::affine(0.3, [0.5, -0.2]),
            RunningCost::quadratic(1.5),
            RunningCost::bump(1.0, 0.5),
            RunningCost::cosine(1.0, std::f64::consts::PI),
        ];
        let x = [0.31, -0.17];
        for f in &costs {
            let g = f.gradient(&x);
            for axis in 0..2 {
                let mut a = x;
                let mut b = x;
                a[axis] += 1e-6;
                b[axis] -= 1e-6;
                let fd = (f.value(&a) - f.value(&b)) / 2e-6;
                assert!((fd - g[axis]).abs() < 1e-7, "{f:?} axis {axis}");
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(LagrangianSpec::new(1.0, 0.1, RunningCost::<f64>::zero()).is_err());
        assert!(LagrangianSpec::new(3.0, 0.0, RunningCost::<f64>::zero()).is_err());
        let s = LagrangianSpec::new(2.0, 1.0, RunningCost::<f64>::zero()).unwrap();
        assert!(s.require_superquadratic().is_err());
        let s = LagrangianSpec::new(3.0, 1.0, RunningCost::<f64>::zero()).unwrap();
        assert_relative_eq!(1.0 / s.p() + 1.0 / s.q(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.alpha(), 0.5);
    }
}

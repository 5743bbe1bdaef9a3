//! The eigenvalue as a function of the dilation parameter.

use rayon::prelude::*;

use crate::ergodic::{ergodic_solve, onesided_derivatives, EigenResult};
use crate::error::{Error, Result};
use crate::geometry::{build_grid, build_lattice_grid, Domain, Grid, ScalingSchedule};
use crate::lagrangian::LagrangianSpec;
use crate::mdp::{DiscreteMdp, MdpOptions, VelocitySet};
use crate::scalar::{lit, to_f64, Real};
use crate::table::Table;

/// How the lattice follows the domain when it is dilated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LatticeMode {
    /// Nodes and velocities are multiplied by 1 + r, so every scaled problem lives on the base lattice.
    #[default]
    Dilated,
    /// The spacing stays h; 1 + r must be lattice-compatible.
    FixedSpacing,
}

/// Base grid and base velocity set shared by all dilations of one problem.
#[derive(Debug, Clone)]
pub struct ScaledFamily<T> {
    pub spec: LagrangianSpec<T>,
    pub domain: Domain<T>,
    pub h: T,
    pub mode: LatticeMode,
    pub base_grid: Grid<T>,
    pub base_velocities: VelocitySet<T>,
    pub opts: MdpOptions<T>,
}

impl<T: Real> ScaledFamily<T> {
    pub fn new(spec: &LagrangianSpec<T>, domain: &Domain<T>, h: T, mode: LatticeMode, opts: &MdpOptions<T>) -> Result<Self> {
        spec.require_superquadratic()?;
        let base_grid = match mode {
            LatticeMode::Dilated => build_grid(domain, h)?,
            LatticeMode::FixedSpacing => build_lattice_grid(domain, h)?,
        };
        let base_velocities = opts.velocity_set(spec, &base_grid)?;
        Ok(Self {
            spec: spec.clone(),
            domain: domain.clone(),
            h,
            mode,
            base_grid,
            base_velocities,
            opts: opts.clone(),
        })
    }

    /// Grid and velocities on (1 + r) times the domain.
    pub fn scaled(&self, r: T) -> Result<(Grid<T>, VelocitySet<T>)> {
        let s = T::one() + r;
        if !(s > T::zero()) {
            return Err(Error::InvalidScale(to_f64(s)));
        }
        match self.mode {
            LatticeMode::Dilated => {
                Ok((self.base_grid.dilated(s), self.base_velocities.scaled(T::one() / s)))
            }
            LatticeMode::FixedSpacing => {
                let grid = build_lattice_grid(&self.domain.scaled(r)?, self.h)?;
                Ok((grid, self.base_velocities.clone()))
            }
        }
    }

    pub fn mdp(&self, r: T) -> Result<DiscreteMdp<T>> {
        let (g, vs) = self.scaled(r)?;
        DiscreteMdp::new(g, self.spec.clone(), vs)
    }

    /// Ergodic problem on the dilated domain, with truncation doubling.
    pub fn ergodic(&self, r: T) -> Result<(DiscreteMdp<T>, EigenResult<T>)> {
        let (g, vs) = self.scaled(r)?;
        ergodic_solve(&self.spec, &g, Some(vs), &self.opts)
    }
}

/// One point of the curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample<T> {
    pub lambda: T,
    pub r: T,
    pub c: Option<T>,
    /// one-sided derivatives of lambda -> c from the optimal face
    pub dc_minus: Option<T>,
    pub dc_plus: Option<T>,
    /// pairing of the computed Mather measure with (-x, v) . grad L
    pub pairing: Option<T>,
    pub duality_gap: Option<T>,
    pub failure: Option<String>,
}

/// Sampled lambda -> c(lambda) with derivative diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCurve<T> {
    pub gamma: T,
    pub mode: LatticeMode,
    pub p: T,
    pub samples: Vec<CurveSample<T>>,
}

/// Residuals of the two candidate laws for a constant running cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantCostFits<T> {
    /// max |b(lambda) - (1 + r)^(-q) b(0)| / |b(0)| with b = c + K
    pub scaling_law: T,
    /// max |c'(lambda) + gamma q b(lambda) / (1 + r)| / |b(0)|
    pub derivative_scaled: T,
    /// max |c'(lambda) + gamma q b(lambda)| / |b(0)|
    pub derivative_unscaled: T,
}

impl<T: Real> EigenCurve<T> {
    /// Successful samples as (lambda, c).
    pub fn points(&self) -> Vec<(T, T)> {
        self.samples.iter().filter_map(|s| s.c.map(|c| (s.lambda, c))).collect()
    }

    pub fn failures(&self) -> usize {
        self.samples.iter().filter(|s| s.c.is_none()).count()
    }

    pub fn value_at(&self, lambda: T) -> Option<T> {
        let tol = lit::<T>(1e-12);
        self.samples.iter().find(|s| (s.lambda - lambda).abs() <= tol).and_then(|s| s.c)
    }

    /// (lambda_i, (c_{i+1} - c_i) / (lambda_{i+1} - lambda_i)), aligned with the left end.
    pub fn forward_quotients(&self) -> Vec<(T, T)> {
        self.points().windows(2).map(|w| (w[0].0, (w[1].1 - w[0].1) / (w[1].0 - w[0].0))).collect()
    }

    /// Same quotients aligned with the right end.
    pub fn backward_quotients(&self) -> Vec<(T, T)> {
        self.points().windows(2).map(|w| (w[1].0, (w[1].1 - w[0].1) / (w[1].0 - w[0].0))).collect()
    }

    pub fn lipschitz_estimate(&self) -> T {
        self.forward_quotients().iter().fold(T::zero(), |m, q| m.max(q.1.abs()))
    }

    /// Largest decrease between consecutive samples (zero for a nondecreasing curve).
    pub fn monotonicity_defect(&self) -> T {
        self.points().windows(2).fold(T::zero(), |m, w| m.max(w[0].1 - w[1].1))
    }

    /// (lambda, second difference) on interior points of equispaced triples.
    pub fn second_differences(&self) -> Vec<(T, T)> {
        let pts = self.points();
        let tol = lit::<T>(1e-9);
        pts.windows(3)
            .filter_map(|w| {
                let (a, b) = (w[1].0 - w[0].0, w[2].0 - w[1].0);
                ((a - b).abs() <= tol * a.abs().max(b.abs())).then(|| (w[1].0, (w[0].1 - lit::<T>(2.0) * w[1].1 + w[2].1) / (a * b)))
            })
            .collect()
    }

    /// Fits for the running cost f = `k`, judged on b = c + k, which is the eigenvalue of f = 0.
    pub fn constant_cost_fits(&self, k: T) -> Option<ConstantCostFits<T>> {
        let b0 = self.value_at(T::zero())? + k;
        let q = self.p / (self.p - T::one());
        let scale = b0.abs().max(T::min_positive_value());
        let mut fits = ConstantCostFits { scaling_law: T::zero(), derivative_scaled: T::zero(), derivative_unscaled: T::zero() };
        for s in &self.samples {
            let (Some(c), Some(d)) = (s.c, s.dc_plus) else { continue };
            let b = c + k;
            let one_r = T::one() + s.r;
            fits.scaling_law = fits.scaling_law.max((b - one_r.powf(-q) * b0).abs() / scale);
            fits.derivative_scaled = fits.derivative_scaled.max((d + self.gamma * q * b / one_r).abs() / scale);
            fits.derivative_unscaled = fits.derivative_unscaled.max((d + self.gamma * q * b).abs() / scale);
        }
        Some(fits)
    }

    /// Columns lambda, c, dc_forward, dc_backward, c'_-, c'_+; missing values are NaN.
    pub fn to_table(&self, name: &str) -> Table {
        let mut t = Table::new(name, &["lambda", "c", "dc_forward", "dc_backward", "dc_minus", "dc_plus"]);
        let fwd = self.forward_quotients();
        let bwd = self.backward_quotients();
        let lookup = |v: &[(T, T)], l: T| {
            v.iter().find(|(x, _)| *x == l).map(|(_, q)| to_f64(*q)).unwrap_or(f64::NAN)
        };
        let opt = |v: Option<T>| v.map(to_f64).unwrap_or(f64::NAN);
        for s in &self.samples {
            t.push(vec![
                to_f64(s.lambda),
                opt(s.c),
                lookup(&fwd, s.lambda),
                lookup(&bwd, s.lambda),
                opt(s.dc_minus),
                opt(s.dc_plus),
            ]);
        }
        t
    }
}

fn solve_sample<T: Real>(family: &ScaledFamily<T>, gamma: T, lambda: T) -> CurveSample<T> {
    let r = gamma * lambda;
    let mut sample = CurveSample {
        lambda,
        r,
        c: None,
        dc_minus: None,
        dc_plus: None,
        pairing: None,
        duality_gap: None,
        failure: None,
    };
    let outcome = family.ergodic(r).and_then(|(mdp, res)| {
        let d = onesided_derivatives(&mdp, &res)?;
        let pairing = res.measure.pair_indexed(|n, k| mdp.pairing(n, k));
        Ok((res, d, pairing))
    });
    match outcome {
        Ok((res, d, pairing)) => {
            // d c / d lambda = gamma <mu, P> / (1 + r); a negative gamma swaps the face extremes
            let w = gamma / (T::one() + r);
            let (lo, hi) = if gamma >= T::zero() { (d.minus, d.plus) } else { (d.plus, d.minus) };
            sample.c = Some(res.c);
            sample.dc_minus = Some(w * lo);
            sample.dc_plus = Some(w * hi);
            sample.pairing = Some(pairing);
            sample.duality_gap = Some(res.duality_gap);
        }
        Err(e) => {
            log::warn!("sample lambda = {} failed: {e}", to_f64(lambda));
            sample.failure = Some(e.to_string());
        }
    }
    sample
}

/// Solves the ergodic problem on every dilation of the schedule. Failed samples are kept with their error.
pub fn eigencurve<T: Real>(
    spec: &LagrangianSpec<T>,
    domain: &Domain<T>,
    schedule: &ScalingSchedule<T>,
    h: T,
    mode: LatticeMode,
    opts: &MdpOptions<T>,
) -> Result<EigenCurve<T>> {
    let family = ScaledFamily::new(spec, domain, h, mode, opts)?;
    let mut lambdas = schedule.lambdas.clone();
    lambdas.sort_by(|a, b| a.partial_cmp(b).expect("finite lambda"));
    lambdas.dedup();
    let samples = lambdas.par_iter().map(|&l| solve_sample(&family, schedule.gamma, l)).collect();
    Ok(EigenCurve { gamma: schedule.gamma, mode, p: spec.p(), samples })
}

/// Smallest centered second difference over interior samples of an equispaced curve.
pub fn semiconvexity_probe<T: Real>(curve: &EigenCurve<T>) -> Result<T> {
    let pts = curve.points();
    if pts.len() < 3 {
        return Err(Error::NotEquispaced);
    }
    let step = pts[1].0 - pts[0].0;
    let tol = lit::<T>(1e-9) * step.abs();
    if pts.windows(2).any(|w| ((w[1].0 - w[0].0) - step).abs() > tol) {
        return Err(Error::NotEquispaced);
    }
    Ok(curve.second_differences().into_iter().map(|(_, d)| d).fold(T::infinity(), T::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodic::ergodic_lp_solve;
    use crate::geometry::{make_domain, DomainKind};
    use crate::lagrangian::RunningCost;

    fn family(cost: RunningCost<f64>, mode: LatticeMode) -> ScaledFamily<f64> {
        let d = make_domain(DomainKind::Interval { half_width: 1.0 }).unwrap();
        let s = LagrangianSpec::new(3.0, 0.1, cost).unwrap();
        ScaledFamily::new(&s, &d, 0.02, mode, &MdpOptions { dv: 0.02, ..Default::default() }).unwrap()
    }

    #[test]
    fn zero_dilation_is_the_base_problem() {
        for mode in [LatticeMode::Dilated, LatticeMode::FixedSpacing] {
            let f = family(RunningCost::bump(1.0, 0.5), mode);
            let (_, res) = f.ergodic(0.0).unwrap();
            let mdp = DiscreteMdp::new(f.base_grid.clone(), f.spec.clone(), f.base_velocities.clone()).unwrap();
            assert_eq!(res.c, ergodic_lp_solve(&mdp).unwrap().c);
        }
    }

    #[test]
    fn dilated_lattice_keeps_node_count() {
        let f = family(RunningCost::zero(), LatticeMode::Dilated);
        let (g, vs) = f.scaled(0.1).unwrap();
        assert_eq!(g.len(), f.base_grid.len());
        assert!((g.h() - 0.022).abs() < 1e-15);
        assert!((vs.v_max() * 1.1 - f.base_velocities.v_max()).abs() < 1e-12);
        let fixed = family(RunningCost::zero(), LatticeMode::FixedSpacing);
        assert!(matches!(fixed.scaled(0.013), Err(Error::LatticeMismatch { .. })));
    }

    #[test]
    fn probe_rejects_uneven_samples() {
        let mk = |l: f64, c: f64| CurveSample {
            lambda: l,
            r: l,
            c: Some(c),
            dc_minus: None,
            dc_plus: None,
            pairing: None,
            duality_gap: None,
            failure: None,
        };
        let mut curve = EigenCurve { gamma: 1.0, mode: LatticeMode::Dilated, p: 3.0, samples: vec![mk(0.0, 0.0), mk(0.1, 0.01), mk(0.2, 0.04)] };
        assert!((semiconvexity_probe(&curve).unwrap() - 2.0).abs() < 1e-9);
        curve.samples[2].lambda = 0.3;
        assert!(matches!(semiconvexity_probe(&curve), Err(Error::NotEquispaced)));
    }

    #[test]
    fn constant_cost_laws_hold_for_shifted_costs() {
        let d = make_domain(DomainKind::Interval { half_width: 1.0 }).unwrap();
        let sch = ScalingSchedule::new(-0.5, vec![-0.2, 0.0, 0.2]).unwrap();
        let opts = MdpOptions { dv: 0.02, ..Default::default() };
        for k in [0.0, 2.0] {
            let s = LagrangianSpec::new(3.0, 0.1, RunningCost::constant(k)).unwrap();
            let curve = eigencurve(&s, &d, &sch, 0.02, LatticeMode::Dilated, &opts).unwrap();
            let fits = curve.constant_cost_fits(k).unwrap();
            assert!(fits.scaling_law < 1e-10, "{fits:?}");
            assert!(fits.derivative_scaled < 1e-8, "{fits:?}");
        }
    }
}

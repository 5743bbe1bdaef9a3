//! Discounted state-constraint problems: policy iteration, vanishing-discount estimates, nested domains
//! and Hoelder probes.

use crate::error::{Error, Result};
use crate::geometry::{build_grid, build_lattice_grid, lattice_compatible, Domain, Grid};
use crate::lagrangian::LagrangianSpec;
use crate::mdp::{check_finite, improve, policy_truncated, DiscreteMdp, MdpOptions};
use crate::scalar::{lit, to_f64, Real};
use crate::table::Table;

/// Iteration cap for policy iteration.
pub const MAX_POLICIES: usize = 200;

/// Solution of a discounted problem on a grid.
#[derive(Debug, Clone)]
pub struct ValueField<T> {
    pub grid: Grid<T>,
    pub u: Vec<T>,
    pub delta: T,
    /// max over nodes of |delta u - min_v (L + A^v u)| / (delta + exit rate), the normalized defect
    pub residual: T,
    pub iterations: usize,
    pub policy: Vec<usize>,
    /// sum of u after each policy evaluation; nonincreasing under Howard improvement
    pub value_history: Vec<T>,
}

impl<T: Real> ValueField<T> {
    pub fn to_table(&self, name: &str) -> Table {
        let cols: &[&str] = if self.grid.dim() == 1 { &["x", "u", "residual"] } else { &["x", "y", "u", "residual"] };
        let mut t = Table::new(name, cols);
        for (n, &u) in self.u.iter().enumerate() {
            let x = self.grid.point(n);
            let mut row = vec![to_f64(x[0])];
            if self.grid.dim() == 2 {
                row.push(to_f64(x[1]));
            }
            row.push(to_f64(u));
            row.push(to_f64(self.residual));
            t.push(row);
        }
        t
    }

    pub fn at_origin(&self) -> T {
        self.u[self.grid.origin()]
    }
}

/// Howard policy iteration for delta u + max_v [v . D_h u - C|v|^q] - f - eps Delta_h u = 0.
pub fn solve_discounted<T: Real>(mdp: &DiscreteMdp<T>, delta: T, tol: T) -> Result<ValueField<T>> {
    solve_discounted_from(mdp, delta, tol, None)
}

/// As [`solve_discounted`], starting from `init` when it is admissible on this chain.
pub fn solve_discounted_from<T: Real>(
    mdp: &DiscreteMdp<T>,
    delta: T,
    tol: T,
    init: Option<&[usize]>,
) -> Result<ValueField<T>> {
    let cost = |n: usize, k: usize| mdp.stage_cost(n, k);
    discounted_policy_iteration(mdp, delta, tol, init, &cost)
}

pub(crate) fn discounted_policy_iteration<T, C>(
    mdp: &DiscreteMdp<T>,
    delta: T,
    tol: T,
    init: Option<&[usize]>,
    cost: &C,
) -> Result<ValueField<T>>
where
    T: Real,
    C: Fn(usize, usize) -> T + Sync,
{
    if !(delta > T::zero()) {
        return Err(Error::InvalidParameter(format!("discount {delta} must be positive")));
    }
    let mut policy = match init {
        Some(p) if mdp.policy_is_admissible(p) => p.to_vec(),
        _ => mdp.default_policy(),
    };
    let mut history = Vec::new();
    let mut residual = T::infinity();
    for it in 1..=MAX_POLICIES {
        let chain = mdp.chain(&policy);
        let c: Vec<T> = policy.iter().enumerate().map(|(n, &k)| cost(n, k)).collect();
        let u = chain.solve_discounted(delta, &c)?;
        check_finite(&u, "discounted policy evaluation")?;
        history.push(u.iter().copied().sum());
        let sweep = improve(mdp, &u, &mut policy, cost, None);
        residual = (0..u.len())
            .map(|n| (delta * u[n] - sweep.best_q[n]).abs() / (delta + sweep.best_rate[n]))
            .fold(T::zero(), T::max);
        if sweep.switched == 0 {
            if residual > tol {
                log::warn!("discounted solve stopped with residual {residual:e} above {tol:e}");
            }
            return Ok(ValueField {
                grid: mdp.grid().clone(),
                u,
                delta,
                residual,
                iterations: it,
                policy,
                value_history: history,
            });
        }
    }
    Err(Error::Divergence { iterations: MAX_POLICIES, residual: to_f64(residual) })
}

/// Builds the chain on `grid` and solves, doubling the velocity truncation while an interior optimizer
/// sits on it.
pub fn solve_discounted_adaptive<T: Real>(
    spec: &LagrangianSpec<T>,
    grid: &Grid<T>,
    delta: T,
    opts: &MdpOptions<T>,
) -> Result<(DiscreteMdp<T>, ValueField<T>)> {
    let mut vs = opts.velocity_set(spec, grid)?;
    let mut init: Option<Vec<usize>> = None;
    for attempt in 0..=opts.max_doublings {
        let mdp = DiscreteMdp::new(grid.clone(), spec.clone(), vs.clone())?;
        let field = solve_discounted_from(&mdp, delta, opts.tol, init.as_deref())?;
        if !policy_truncated(&mdp, &field.policy) || attempt == opts.max_doublings {
            return Ok((mdp, field));
        }
        log::info!("velocity truncation {} reached; doubling", to_f64(vs.v_max()));
        vs = opts.with_v_max(vs.v_max() * lit(2.0)).velocity_set(spec, grid)?;
        init = None;
    }
    unreachable!()
}

/// Vanishing-discount estimate of the ergodic constant.
#[derive(Debug, Clone)]
pub struct DiscountEstimate<T> {
    pub estimate: T,
    pub band: T,
    /// (delta, -delta u_delta(0))
    pub samples: Vec<(T, T)>,
    /// Richardson values from consecutive pairs
    pub extrapolants: Vec<T>,
    /// whether successive differences shrink
    pub monotone: bool,
}

/// Richardson extrapolation of -delta u_delta(0) as delta -> 0.
pub fn discount_eigen_estimate<T: Real>(
    spec: &LagrangianSpec<T>,
    domain: &Domain<T>,
    deltas: &[T],
    h: T,
    opts: &MdpOptions<T>,
) -> Result<DiscountEstimate<T>> {
    if deltas.len() < 3 || deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("need at least 3 decreasing discounts".into()));
    }
    let grid = build_grid(domain, h)?;
    let vs = opts.velocity_set(spec, &grid)?;
    let mdp = DiscreteMdp::new(grid, spec.clone(), vs)?;
    let mut samples = Vec::new();
    let mut policy: Option<Vec<usize>> = None;
    for &d in deltas {
        let f = solve_discounted_from(&mdp, d, opts.tol, policy.as_deref())?;
        samples.push((d, -d * f.at_origin()));
        policy = Some(f.policy);
    }
    Ok(richardson_estimate(samples))
}

pub(crate) fn richardson_estimate<T: Real>(samples: Vec<(T, T)>) -> DiscountEstimate<T> {
    let extrapolants: Vec<T> = samples
        .windows(2)
        .map(|w| {
            let r = w[0].0 / w[1].0;
            (r * w[1].1 - w[0].1) / (r - T::one())
        })
        .collect();
    let diffs: Vec<T> = samples.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
    let monotone = diffs.windows(2).all(|w| w[1] <= w[0]);
    let estimate = *extrapolants.last().unwrap();
    let band = if monotone {
        (estimate - extrapolants[extrapolants.len() - 2]).abs()
    } else {
        log::warn!("vanishing-discount differences are not monotone; reporting the widest band");
        extrapolants.iter().map(|&e| (e - estimate).abs()).chain(diffs.iter().copied()).fold(T::zero(), T::max)
    };
    DiscountEstimate { estimate, band, samples, extrapolants, monotone }
}

/// Gap between the discounted solutions on (1 + theta) Omega and Omega at shared lattice nodes.
#[derive(Debug, Clone)]
pub struct NestedDomainReport<T> {
    pub theta: T,
    pub delta: T,
    /// delta v - delta u on the nodes of the inner grid, v solving on Omega and u on (1 + theta) Omega
    pub gap: Vec<T>,
    pub max_gap: T,
    pub min_gap: T,
    pub min_node: usize,
}

/// Solves on both domains with the same spacing `h` and compares at shared nodes.
pub fn nested_domain_gap<T: Real>(
    spec: &LagrangianSpec<T>,
    domain: &Domain<T>,
    theta: T,
    delta: T,
    h: T,
    opts: &MdpOptions<T>,
) -> Result<NestedDomainReport<T>> {
    if !(theta >= T::zero()) || !(delta > T::zero() && delta < T::one()) {
        return Err(Error::InvalidParameter("need theta >= 0 and 0 < delta < 1".into()));
    }
    let outer_domain = domain.scaled(theta)?;
    for d in [domain, &outer_domain] {
        if !lattice_compatible(d, h) {
            return Err(Error::LatticeMismatch { h: to_f64(h), extent: to_f64(d.outer_radius()) });
        }
    }
    let inner = build_lattice_grid(domain, h)?;
    let outer = build_lattice_grid(&outer_domain, h)?;
    let v_max = opts.v_max.unwrap_or_else(|| crate::mdp::default_v_max(spec, &outer));
    let o = opts.with_v_max(v_max);
    let (_, small) = solve_discounted_adaptive(spec, &inner, delta, &o)?;
    let (_, big) = solve_discounted_adaptive(spec, &outer, delta, &o)?;
    let mut gap = Vec::with_capacity(inner.len());
    for n in 0..inner.len() {
        let m = outer
            .node_at(inner.lattice_index(n))
            .ok_or_else(|| Error::LatticeMismatch { h: to_f64(h), extent: to_f64(domain.outer_radius()) })?;
        gap.push(delta * small.u[n] - delta * big.u[m]);
    }
    let (min_node, min_gap) = gap
        .iter()
        .copied()
        .enumerate()
        .fold((0, T::infinity()), |a, (k, g)| if g < a.1 { (k, g) } else { a });
    let max_gap = gap.iter().copied().fold(T::neg_infinity(), T::max);
    let slack = lit::<T>(10.0) * opts.tol.max(T::epsilon() * lit(1e3) * (T::one() + max_gap.abs()));
    if min_gap < -slack {
        return Err(Error::ComparisonViolation { min_gap: to_f64(min_gap), node: min_node });
    }
    Ok(NestedDomainReport { theta, delta, gap, max_gap, min_gap, min_node })
}

/// Nested gaps over several theta with a log-log fit of the maximal gap.
#[derive(Debug, Clone)]
pub struct NestedSweep<T> {
    pub reports: Vec<NestedDomainReport<T>>,
    pub exponent: T,
}

pub fn nested_domain_sweep<T: Real>(
    spec: &LagrangianSpec<T>,
    domain: &Domain<T>,
    thetas: &[T],
    delta: T,
    h: T,
    opts: &MdpOptions<T>,
) -> Result<NestedSweep<T>> {
    let reports = thetas
        .iter()
        .map(|&t| nested_domain_gap(spec, domain, t, delta, h, opts))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(T, T)> = reports.iter().map(|r| (r.theta.ln(), r.max_gap.ln())).collect();
    let (exponent, _) = least_squares_slope(&pts);
    Ok(NestedSweep { reports, exponent })
}

/// Slope and rms residual of the least-squares line through `pts`.
pub fn least_squares_slope<T: Real>(pts: &[(T, T)]) -> (T, T) {
    let n = T::from_usize(pts.len()).unwrap();
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    let rms = (pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum::<T>() / n).sqrt();
    (slope, rms)
}

/// Least-squares Hoelder fit of dyadic oscillations.
#[derive(Debug, Clone, PartialEq)]
pub struct HolderFit<T> {
    /// `None` for a constant field
    pub exponent: Option<T>,
    pub residual: T,
    /// (distance, sup |u(x) - u(y)| over lattice pairs at that axis distance)
    pub scales: Vec<(T, T)>,
}

/// Fits log sup_{|x - y| = d} |u(x) - u(y)| against log d for d = h, 2h, 4h, ... up to a quarter of the
/// grid extent.
pub fn modulus_of_continuity<T: Real>(field: &ValueField<T>) -> HolderFit<T> {
    holder_fit(&field.grid, &field.u)
}

pub fn holder_fit<T: Real>(grid: &Grid<T>, u: &[T]) -> HolderFit<T> {
    let extent = (0..grid.len()).map(|n| grid.lattice_index(n)[0].abs()).max().unwrap_or(0) * 2;
    let mut scales = Vec::new();
    let mut s = 1i64;
    while 4 * s <= extent {
        let mut osc = T::zero();
        for n in 0..grid.len() {
            let l = grid.lattice_index(n);
            for axis in 0..grid.dim() {
                let mut m = l;
                m[axis] += s;
                if let Some(k) = grid.node_at(m) {
                    osc = osc.max((u[k] - u[n]).abs());
                }
            }
        }
        scales.push((grid.h() * T::from_i64(s).unwrap(), osc));
        s *= 2;
    }
    let scale = u.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    if scales.len() < 2 || scales.iter().any(|&(_, o)| o <= T::epsilon() * lit(64.0) * (T::one() + scale)) {
        return HolderFit { exponent: None, residual: T::zero(), scales };
    }
    let pts: Vec<(T, T)> = scales.iter().map(|&(d, o)| (d.ln(), o.ln())).collect();
    let (slope, residual) = least_squares_slope(&pts);
    HolderFit { exponent: Some(slope), residual, scales }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_domain, DomainKind};
    use crate::lagrangian::RunningCost;

    fn setup(cost: RunningCost<f64>, h: f64) -> DiscreteMdp<f64> {
        let d = make_domain(DomainKind::Interval { half_width: 1.0 }).unwrap();
        let g = build_grid(&d, h).unwrap();
        let s = LagrangianSpec::new(3.0, 0.1, cost).unwrap();
        let vs = MdpOptions { dv: 0.02, ..Default::default() }.velocity_set(&s, &g).unwrap();
        DiscreteMdp::new(g, s, vs).unwrap()
    }

    #[test]
    fn constant_cost_shifts_by_k_over_delta() {
        let z = solve_discounted(&setup(RunningCost::zero(), 0.02), 0.1, 1e-10).unwrap();
        let k = solve_discounted(&setup(RunningCost::constant(2.5), 0.02), 0.1, 1e-10).unwrap();
        for (a, b) in z.u.iter().zip(&k.u) {
            assert!((b - a - 25.0).abs() < 1e-9);
        }
    }

    #[test]
    fn larger_cost_gives_larger_value() {
        let z = solve_discounted(&setup(RunningCost::zero(), 0.02), 0.2, 1e-10).unwrap();
        let b = solve_discounted(&setup(RunningCost::bump(1.0, 0.5), 0.02), 0.2, 1e-10).unwrap();
        assert!(z.u.iter().zip(&b.u).all(|(a, b)| a <= b));
        assert!(z.residual <= 1e-10 && b.residual <= 1e-10);
    }

    #[test]
    fn howard_values_decrease() {
        let f = solve_discounted(&setup(RunningCost::cosine(1.0, std::f64::consts::PI), 0.02), 0.05, 1e-10).unwrap();
        assert!(f.iterations > 1);
        assert!(f.value_history.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs()));
    }

    #[test]
    fn lower_bound_holds() {
        let m = setup(RunningCost::bump(1.0, 0.5), 0.02);
        let f = solve_discounted(&m, 0.3, 1e-10).unwrap();
        let fmin = m.grid().points().iter().map(|x| m.spec().f(x)).fold(f64::INFINITY, f64::min);
        assert!(f.u.iter().all(|&u| 0.3 * u >= fmin - 1e-12));
    }

    #[test]
    fn constant_field_has_no_exponent() {
        let d = make_domain(DomainKind::Interval { half_width: 1.0 }).unwrap();
        let g = build_grid(&d, 0.05).unwrap();
        assert!(holder_fit(&g, &vec![3.0; g.len()]).exponent.is_none());
        let lin: Vec<f64> = g.points().iter().map(|x| 2.0 * x[0]).collect();
        let fit = holder_fit(&g, &lin);
        assert!((fit.exponent.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn richardson_recovers_linear_model() {
        let samples: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&d| (d, -0.3 + 2.0 * d)).collect();
        let e = richardson_estimate(samples);
        assert!((e.estimate + 0.3).abs() < 1e-14);
        assert!(e.monotone);
    }
}

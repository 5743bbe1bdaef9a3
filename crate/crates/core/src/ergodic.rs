//! Discrete additive eigenvalue, its dual Mather measures and one-sided derivatives.
//!
//! The primal LP is min c subject to (-A^v u)(x) - c <= L(x, v) for every admissible pair; the dual is
//! min <mu, L> over stationary probability measures on pairs. Deterministic policies are the dual
//! vertices, so policy iteration on the average-cost chain is a block-pivoting simplex on the dual, and
//! each iterate is certified by the explicit duality gap.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Grid, Point};
use crate::hjb::{discounted_policy_iteration, MAX_POLICIES};
use crate::lagrangian::LagrangianSpec;
use crate::mdp::{check_finite, improve, policy_truncated, DiscreteMdp, MdpOptions, VelocitySet};
use crate::scalar::{lit, to_f64, Real};
use crate::table::Table;

/// Discount used to produce the starting policy of the average-cost iteration.
const WARM_START_DISCOUNT: f64 = 1e-3;

/// A point mass of a measure on (position, velocity) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureAtom<T> {
    pub node: usize,
    /// index into the velocity set the measure was computed with
    pub velocity: usize,
    pub x: Point<T>,
    pub v: Point<T>,
    pub mass: T,
}

/// Probability measure on grid nodes and velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct MatherMeasure<T> {
    pub atoms: Vec<MeasureAtom<T>>,
    /// dilation factor of the domain the positions refer to
    pub scale: T,
}

impl<T: Real> MatherMeasure<T> {
    /// Stationary measure of a deterministic policy, one atom per node.
    pub fn from_policy(mdp: &DiscreteMdp<T>, policy: &[usize], mass: &[T], scale: T) -> Self {
        let atoms = policy
            .iter()
            .enumerate()
            .map(|(n, &k)| MeasureAtom { node: n, velocity: k, x: *mdp.point(n), v: *mdp.velocity(k), mass: mass[n] })
            .collect();
        Self { atoms, scale }
    }

    pub fn total_mass(&self) -> T {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn min_mass(&self) -> T {
        self.atoms.iter().map(|a| a.mass).fold(T::infinity(), T::min)
    }

    pub fn pair<G: Fn(&Point<T>, &Point<T>) -> T>(&self, g: G) -> T {
        self.atoms.iter().map(|a| a.mass * g(&a.x, &a.v)).sum()
    }

    /// Pairing with a function of (node, velocity index).
    pub fn pair_indexed<G: Fn(usize, usize) -> T>(&self, g: G) -> T {
        self.atoms.iter().map(|a| a.mass * g(a.node, a.velocity)).sum()
    }

    /// Convex combination sum_i w_i mu_i of measures sharing a scale.
    pub fn mixture(parts: &[(T, &MatherMeasure<T>)]) -> Self {
        let mut atoms = Vec::new();
        for (w, m) in parts {
            atoms.extend(m.atoms.iter().map(|a| MeasureAtom { mass: a.mass * *w, ..a.clone() }));
        }
        Self { atoms, scale: parts.first().map(|p| p.1.scale).unwrap_or_else(T::one) }
    }

    pub fn to_table(&self, name: &str, dim: usize) -> Table {
        let cols: &[&str] = if dim == 1 { &["x", "v", "mass"] } else { &["x", "y", "vx", "vy", "mass"] };
        let mut t = Table::new(name, cols);
        for a in &self.atoms {
            let row = if dim == 1 {
                vec![to_f64(a.x[0]), to_f64(a.v[0]), to_f64(a.mass)]
            } else {
                vec![to_f64(a.x[0]), to_f64(a.x[1]), to_f64(a.v[0]), to_f64(a.v[1]), to_f64(a.mass)]
            };
            t.push(row);
        }
        t
    }
}

/// <mu, g>.
pub fn mather_pairing<T: Real, G: Fn(&Point<T>, &Point<T>) -> T>(mu: &MatherMeasure<T>, g: G) -> T {
    mu.pair(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
}

/// Discrete eigenvalue with primal field, dual measure and optimality certificate.
#[derive(Debug, Clone)]
pub struct EigenResult<T> {
    pub c: T,
    /// ergodic field with u(origin) = 0
    pub u: Vec<T>,
    pub policy: Vec<usize>,
    /// stationary distribution of the optimal policy (time fractions per node)
    pub stationary: Vec<T>,
    pub measure: MatherMeasure<T>,
    pub status: LpStatus,
    /// max primal row violation + |c + <mu, L>|
    pub duality_gap: T,
    pub primal_violation: T,
    /// max_y |(A^T m)(y)| / max exit rate
    pub stationarity_residual: T,
    pub normalization_residual: T,
    pub iterations: usize,
}

impl<T: Real> EigenResult<T> {
    /// Ergodic field shifted so that <stationary, u> = 0.
    pub fn centered_field(&self) -> Vec<T> {
        let mean: T = self.u.iter().zip(&self.stationary).map(|(&u, &m)| u * m).sum();
        self.u.iter().map(|&u| u - mean).collect()
    }
}

pub(crate) struct AverageOutcome<T> {
    pub rho: T,
    pub u: Vec<T>,
    pub stationary: Vec<T>,
    pub policy: Vec<usize>,
    pub best_q: Vec<T>,
    pub iterations: usize,
}

/// Average-cost policy iteration minimizing the long-run average of `cost`.
pub(crate) fn average_policy_iteration<T, C>(
    mdp: &DiscreteMdp<T>,
    cost: &C,
    restricted: Option<&[Vec<usize>]>,
    init: Vec<usize>,
) -> Result<AverageOutcome<T>>
where
    T: Real,
    C: Fn(usize, usize) -> T + Sync,
{
    let mut policy = init;
    let origin = mdp.grid().origin();
    let mut seen = std::collections::HashSet::new();
    seen.insert(policy.clone());
    for it in 1..=MAX_POLICIES {
        let chain = mdp.chain(&policy);
        let c: Vec<T> = policy.iter().enumerate().map(|(n, &k)| cost(n, k)).collect();
        let (rho, u, stationary) = chain.solve_average(&c, origin)?;
        check_finite(&u, "average-cost evaluation")?;
        let prev = policy.clone();
        let sweep = improve(mdp, &u, &mut policy, cost, restricted);
        // a recurring policy means the switches are below the evaluation round-off
        if sweep.switched == 0 || !seen.insert(policy.clone()) {
            if sweep.switched > 0 {
                log::debug!("policy cycle after {it} iterations; keeping the current evaluation");
            }
            let policy = prev;
            return Ok(AverageOutcome { rho, u, stationary, policy, best_q: sweep.best_q, iterations: it });
        }
    }
    Err(Error::Divergence { iterations: MAX_POLICIES, residual: f64::NAN })
}

/// Solves the ergodic LP on a fixed chain.
pub fn ergodic_lp_solve<T: Real>(mdp: &DiscreteMdp<T>) -> Result<EigenResult<T>> {
    ergodic_lp_solve_from(mdp, None)
}

/// As [`ergodic_lp_solve`], starting from `init` when it is admissible.
pub fn ergodic_lp_solve_from<T: Real>(mdp: &DiscreteMdp<T>, init: Option<&[usize]>) -> Result<EigenResult<T>> {
    let cost = |n: usize, k: usize| mdp.stage_cost(n, k);
    let start = match init {
        Some(p) if mdp.policy_is_admissible(p) => p.to_vec(),
        _ => {
            let delta0 = lit::<T>(WARM_START_DISCOUNT);
            discounted_policy_iteration(mdp, delta0, T::infinity(), None, &cost)?.policy
        }
    };
    let out = average_policy_iteration(mdp, &cost, None, start)?;
    Ok(certify(mdp, out, T::one()))
}

fn certify<T: Real>(mdp: &DiscreteMdp<T>, out: AverageOutcome<T>, scale: T) -> EigenResult<T> {
    let c = -out.rho;
    let primal_violation = out.best_q.iter().map(|&q| (out.rho - q).max(T::zero())).fold(T::zero(), T::max);
    let measure = MatherMeasure::from_policy(mdp, &out.policy, &out.stationary, scale);
    let dual_value = measure.pair_indexed(|n, k| mdp.stage_cost(n, k));
    let chain = mdp.chain(&out.policy);
    let max_rate = (0..mdp.len()).map(|n| chain.exit_rate(n)).fold(T::zero(), T::max);
    let stationarity_residual =
        chain.apply_transpose(&out.stationary).iter().fold(T::zero(), |a, &b| a.max(b.abs())) / max_rate;
    EigenResult {
        c,
        u: out.u,
        policy: out.policy,
        normalization_residual: (measure.total_mass() - T::one()).abs(),
        stationary: out.stationary,
        measure,
        status: LpStatus::Optimal,
        duality_gap: primal_violation + (c + dual_value).abs(),
        primal_violation,
        stationarity_residual,
        iterations: out.iterations,
    }
}

/// Builds the chain on `grid` with `velocities` (or the default set) and solves, doubling the truncation
/// while an interior optimizer sits on it.
pub fn ergodic_solve<T: Real>(
    spec: &LagrangianSpec<T>,
    grid: &Grid<T>,
    velocities: Option<VelocitySet<T>>,
    opts: &MdpOptions<T>,
) -> Result<(DiscreteMdp<T>, EigenResult<T>)> {
    let mut vs = match velocities {
        Some(v) => v,
        None => opts.velocity_set(spec, grid)?,
    };
    for attempt in 0..=opts.max_doublings {
        let mdp = DiscreteMdp::new(grid.clone(), spec.clone(), vs.clone())?;
        let res = ergodic_lp_solve(&mdp)?;
        if !policy_truncated(&mdp, &res.policy) || attempt == opts.max_doublings {
            return Ok((mdp, res));
        }
        log::info!("velocity truncation {} reached; doubling", to_f64(vs.v_max()));
        vs = VelocitySet::uniform(grid.dim(), vs.v_max() * lit(2.0), vs.dv())?;
    }
    unreachable!()
}

/// Row view of the primal LP.
#[derive(Debug, Clone, Copy)]
pub struct LpConstraintSystem<'a, T> {
    mdp: &'a DiscreteMdp<T>,
}

/// (sum_y coefficient_y u_y) - c <= rhs.
#[derive(Debug, Clone, PartialEq)]
pub struct LpRow<T> {
    pub node: usize,
    pub velocity: usize,
    pub u_coefficients: Vec<(usize, T)>,
    pub rhs: T,
}

impl<'a, T: Real> LpConstraintSystem<'a, T> {
    pub fn new(mdp: &'a DiscreteMdp<T>) -> Self {
        Self { mdp }
    }

    /// Variables: one u per node plus c.
    pub fn num_variables(&self) -> usize {
        self.mdp.len() + 1
    }

    pub fn num_rows(&self) -> usize {
        (0..self.mdp.len()).map(|n| self.mdp.actions(n).len()).sum()
    }

    pub fn row(&self, node: usize, velocity: usize) -> Option<LpRow<T>> {
        let r = self.mdp.rates(node, velocity)?;
        let g = self.mdp.grid();
        let mut coeffs = vec![(node, T::zero())];
        for (axis, row) in r.iter().enumerate().take(g.dim()) {
            for (side, &w) in row.iter().enumerate() {
                if w > T::zero() {
                    coeffs[0].1 += w;
                    coeffs.push((g.neighbor(node, axis, side).unwrap(), -w));
                }
            }
        }
        Some(LpRow { node, velocity, u_coefficients: coeffs, rhs: self.mdp.stage_cost(node, velocity) })
    }

    pub fn rows(&self) -> impl Iterator<Item = LpRow<T>> + '_ {
        (0..self.mdp.len()).flat_map(move |n| self.mdp.actions(n).iter().map(move |&k| self.row(n, k).unwrap()))
    }

    /// max over rows of (row . u) - c - rhs.
    pub fn max_violation(&self, u: &[T], c: T) -> T {
        self.rows()
            .map(|r| r.u_coefficients.iter().map(|&(j, a)| a * u[j]).sum::<T>() - c - r.rhs)
            .fold(T::neg_infinity(), T::max)
    }
}

/// Extreme values of <mu, (-x, v) . grad L> over the optimal dual face.
#[derive(Debug, Clone, PartialEq)]
pub struct OneSided<T> {
    pub minus: T,
    pub plus: T,
    /// admissible pairs with reduced cost within the face tolerance
    pub tight_pairs: usize,
    pub face_tolerance: T,
}

/// Face of the dual optimum: at every node the actions whose reduced cost is within `tol`.
pub fn optimal_face<T: Real>(mdp: &DiscreteMdp<T>, res: &EigenResult<T>, tol: T) -> Vec<Vec<usize>> {
    let rho = -res.c;
    (0..mdp.len())
        .map(|n| {
            let mut acts: Vec<usize> = mdp
                .actions(n)
                .iter()
                .copied()
                .filter(|&k| {
                    let r = mdp.rates(n, k).unwrap();
                    mdp.q_value(n, &r, mdp.stage_cost(n, k), &res.u) - rho <= tol
                })
                .collect();
            if !acts.contains(&res.policy[n]) {
                acts.insert(0, res.policy[n]);
            }
            acts
        })
        .collect()
}

/// Default tolerance defining the optimal face.
pub fn face_tolerance<T: Real>(res: &EigenResult<T>) -> T {
    lit::<T>(1e-9) * (T::one() + res.c.abs())
}

/// c'_- and c'_+ with respect to the relative dilation of the domain: min and max of the radial pairing
/// over the optimal face.
pub fn onesided_derivatives<T: Real>(mdp: &DiscreteMdp<T>, res: &EigenResult<T>) -> Result<OneSided<T>> {
    onesided_with_observable(mdp, res, &|n, k| mdp.pairing(n, k))
}

/// Min and max of <mu, g> over the optimal face.
pub fn onesided_with_observable<T, G>(mdp: &DiscreteMdp<T>, res: &EigenResult<T>, g: &G) -> Result<OneSided<T>>
where
    T: Real,
    G: Fn(usize, usize) -> T + Sync,
{
    let mut tol = face_tolerance(res);
    let mut last_err = None;
    for _ in 0..2 {
        let face = optimal_face(mdp, res, tol);
        let tight_pairs = face.iter().map(|a| a.len()).sum();
        let neg = |n: usize, k: usize| -g(n, k);
        let lo = average_policy_iteration(mdp, g, Some(&face), res.policy.clone());
        let hi = average_policy_iteration(mdp, &neg, Some(&face), res.policy.clone());
        match (lo, hi) {
            (Ok(lo), Ok(hi)) => {
                return Ok(OneSided { minus: lo.rho, plus: -hi.rho, tight_pairs, face_tolerance: tol });
            }
            (Err(e), _) | (_, Err(e)) => last_err = Some(e),
        }
        tol *= lit(1e3);
    }
    Err(Error::Infeasible(format!("optimal-face problem failed: {:?}", last_err.unwrap())))
}

/// Random measures on the optimal face: convex combinations of stationary measures of random policies
/// drawn from the tight actions.
pub fn sample_face_measures<T: Real>(
    mdp: &DiscreteMdp<T>,
    res: &EigenResult<T>,
    count: usize,
    seed: u64,
) -> Result<Vec<MatherMeasure<T>>> {
    let face = optimal_face(mdp, res, face_tolerance(res));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut parts = Vec::new();
        for _ in 0..3 {
            let policy: Vec<usize> = face.iter().map(|a| *a.choose(&mut rng).unwrap()).collect();
            let m = mdp.chain(&policy).stationary()?;
            parts.push(MatherMeasure::from_policy(mdp, &policy, &m, res.measure.scale));
        }
        let w: Vec<T> = (0..3).map(|_| T::from_f64(rng.gen_range(0.05..1.0)).unwrap()).collect();
        let total: T = w.iter().copied().sum();
        let refs: Vec<(T, &MatherMeasure<T>)> = w.iter().zip(&parts).map(|(&wi, p)| (wi / total, p)).collect();
        out.push(MatherMeasure::mixture(&refs));
    }
    Ok(out)
}

/// Pushforward under x -> x / (1 + r), spreading off-lattice images over neighbouring nodes of `target`
/// with linear (bilinear in 2D) weights.
pub fn scale_measure<T: Real>(mu: &MatherMeasure<T>, r: T, target: &Grid<T>) -> Result<MatherMeasure<T>> {
    let s = T::one() + r;
    if !(s > T::zero()) {
        return Err(Error::InvalidScale(to_f64(s)));
    }
    let h = target.h();
    let snap = lit::<T>(1e-9);
    let mut atoms = Vec::with_capacity(mu.atoms.len());
    for a in &mu.atoms {
        let y = [a.x[0] / s, a.x[1] / s];
        let mut corners: Vec<([i64; 2], T)> = vec![([0, 0], T::one())];
        for axis in 0..target.dim() {
            let t = y[axis] / h;
            let mut lo = t.floor();
            let mut w = t - lo;
            if w > T::one() - snap {
                lo += T::one();
                w = T::zero();
            } else if w < snap {
                w = T::zero();
            }
            let lo = lo.to_i64().unwrap();
            let mut next = Vec::new();
            for (l, m) in corners {
                let mut a0 = l;
                a0[axis] = lo;
                next.push((a0, m * (T::one() - w)));
                if w > T::zero() {
                    let mut a1 = l;
                    a1[axis] = lo + 1;
                    next.push((a1, m * w));
                }
            }
            corners = next;
        }
        for (l, w) in corners {
            let node = target.node_at(l).ok_or_else(|| {
                Error::ScalingMismatch(format!("image {:?} of {:?} outside the target grid", to_f64(y[0]), to_f64(a.x[0])))
            })?;
            atoms.push(MeasureAtom { node, velocity: a.velocity, x: *target.point(node), v: a.v, mass: a.mass * w });
        }
    }
    Ok(MatherMeasure { atoms, scale: mu.scale / s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, make_domain, DomainKind};
    use crate::lagrangian::RunningCost;

    fn solve(cost: RunningCost<f64>, h: f64) -> (DiscreteMdp<f64>, EigenResult<f64>) {
        let d = make_domain(DomainKind::Interval { half_width: 1.0 }).unwrap();
        let g = build_grid(&d, h).unwrap();
        let s = LagrangianSpec::new(3.0, 0.1, cost).unwrap();
        ergodic_solve(&s, &g, None, &MdpOptions { dv: 0.02, ..Default::default() }).unwrap()
    }

    #[test]
    fn zero_cost_eigenvalue_is_negative_and_certified() {
        let (mdp, r) = solve(RunningCost::zero(), 0.02);
        assert!(r.c < 0.0);
        assert!(r.duality_gap <= 1e-8 * (1.0 + r.c.abs()));
        assert!(r.stationarity_residual <= 1e-8);
        assert!(r.measure.min_mass() >= 0.0);
        assert!(r.normalization_residual <= 1e-12);
        let lp = LpConstraintSystem::new(&mdp);
        assert!(lp.max_violation(&r.u, r.c) <= 1e-8);
        assert_eq!(r.u[mdp.grid().origin()], 0.0);
    }

    #[test]
    fn rows_annihilate_constants() {
        let (mdp, _) = solve(RunningCost::bump(1.0, 0.5), 0.05);
        let lp = LpConstraintSystem::new(&mdp);
        assert_eq!(lp.num_variables(), mdp.len() + 1);
        for row in lp.rows() {
            let s: f64 = row.u_coefficients.iter().map(|c| c.1).sum();
            assert!(s.abs() <= 1e-12 * row.u_coefficients[0].1);
        }
    }

    #[test]
    fn zero_cost_derivatives_collapse() {
        let (mdp, r) = solve(RunningCost::zero(), 0.02);
        let d = onesided_derivatives(&mdp, &r).unwrap();
        let q = mdp.spec().q();
        assert!((d.plus + q * r.c).abs() <= 1e-10);
        assert!((d.plus - d.minus).abs() <= 1e-10);
    }

    #[test]
    fn scaled_measure_preserves_mass() {
        let (mdp, r) = solve(RunningCost::bump(1.0, 0.5), 0.05);
        let same = scale_measure(&r.measure, 0.0, mdp.grid()).unwrap();
        assert_eq!(same.atoms.len(), r.measure.atoms.len());
        let target = build_grid(&make_domain(DomainKind::Interval { half_width: 1.0 }).unwrap(), 0.05).unwrap();
        let shrunk = scale_measure(&r.measure, 0.1, &target).unwrap();
        assert!((shrunk.total_mass() - r.measure.total_mass()).abs() <= 1e-15);
        let lhs = shrunk.pair(|x, _| x[0] * x[0]);
        let rhs = r.measure.pair(|x, _| (x[0] / 1.1).powi(2));
        assert!((lhs - rhs).abs() <= 0.05 * 0.05);
        assert!(matches!(scale_measure(&r.measure, -0.5, &target), Err(Error::ScalingMismatch(_))));
    }

    #[test]
    fn face_samples_are_optimal() {
        let (mdp, r) = solve(RunningCost::cosine(1.0, std::f64::consts::PI), 0.05);
        for m in sample_face_measures(&mdp, &r, 3, 7).unwrap() {
            let l = m.pair_indexed(|n, k| mdp.stage_cost(n, k));
            assert!((l + r.c).abs() <= 1e-7);
        }
    }
}

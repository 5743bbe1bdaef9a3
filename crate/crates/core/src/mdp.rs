//! Controlled Markov chain approximation of the state-constraint problem.
//!
//! A control v moves the chain with drift b = -v. Interior axes use upwind drift plus full diffusion
//! (rates eps/h^2 + b^+/h and eps/h^2 + b^-/h). On an axis where one neighbour is missing only inward drifts
//! with |b| >= 2 eps/h are admissible and the row is a pure inward jump of rate |b|/h; this is the central
//! stencil whose outward weight vanishes exactly. An axis with both neighbours missing admits no motion.

use crate::error::{Error, Result};
use crate::geometry::{norm, Grid, Point};
use crate::lagrangian::LagrangianSpec;
use crate::linalg::{solve_tridiagonal, DenseLu};
use crate::scalar::{lit, Real};

/// Rates toward the neighbours of a node, indexed by axis and side (0 = negative, 1 = positive).
pub type Rates<T> = [[T; 2]; 2];

/// Symmetric uniform velocity lattice {k dv : |k_i| <= K}, stored in tie-break order: increasing |v|,
/// then negative components first.
#[derive(Debug, Clone)]
pub struct VelocitySet<T> {
    dim: usize,
    values: Vec<Point<T>>,
    lattice: Vec<[i64; 2]>,
    k_max: i64,
    dv: T,
}

impl<T: Real> VelocitySet<T> {
    pub fn uniform(dim: usize, v_max: T, dv: T) -> Result<Self> {
        if !(dv > T::zero()) || !(v_max >= dv) {
            return Err(Error::InvalidParameter(format!("velocity grid needs 0 < dv <= v_max (dv {dv}, v_max {v_max})")));
        }
        let k_max = (v_max / dv - lit(1e-9)).ceil().to_i64().unwrap_or(1).max(1);
        let mut lattice: Vec<[i64; 2]> = Vec::new();
        match dim {
            1 => lattice.extend((-k_max..=k_max).map(|k| [k, 0])),
            2 => {
                for i in -k_max..=k_max {
                    for j in -k_max..=k_max {
                        lattice.push([i, j]);
                    }
                }
            }
            _ => return Err(Error::InvalidParameter(format!("dimension {dim} unsupported"))),
        }
        lattice.sort_by_key(|k| (k[0] * k[0] + k[1] * k[1], k[0], k[1]));
        let values = lattice
            .iter()
            .map(|k| [T::from_i64(k[0]).unwrap() * dv, T::from_i64(k[1]).unwrap() * dv])
            .collect();
        Ok(Self { dim, values, lattice, k_max, dv })
    }

    /// The same lattice with every velocity multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            values: self.values.iter().map(|v| [v[0] * factor, v[1] * factor]).collect(),
            dv: self.dv * factor,
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, k: usize) -> &Point<T> {
        &self.values[k]
    }

    pub fn values(&self) -> &[Point<T>] {
        &self.values
    }

    pub fn dv(&self) -> T {
        self.dv
    }

    pub fn v_max(&self) -> T {
        self.dv * T::from_i64(self.k_max).unwrap()
    }

    /// Whether some component of velocity `k` sits on the truncation boundary.
    pub fn on_truncation_boundary(&self, k: usize) -> bool {
        self.lattice[k].iter().any(|c| c.abs() == self.k_max)
    }
}

/// Default truncation: p G^(p-1) with an a-priori gradient scale G, and at least 1.25 times the boundary
/// threshold 2 eps / h so that every boundary node keeps admissible velocities.
pub fn default_v_max<T: Real>(spec: &LagrangianSpec<T>, grid: &Grid<T>) -> T {
    let fmax = grid.points().iter().map(|x| spec.f(x).abs()).fold(T::zero(), T::max);
    let g = (lit::<T>(2.0) * fmax + T::one()).powf(T::one() / spec.p());
    let apriori = spec.p() * g.powf(spec.p() - T::one());
    apriori.max(lit::<T>(2.5) * spec.epsilon() / grid.h())
}

/// Normalized transition: probabilities to neighbours and the holding time 1 / exit rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub exit_rate: T,
    pub probabilities: Vec<(usize, T)>,
}

/// Grid, velocities, stage costs and stencils of the discretized control problem.
#[derive(Debug, Clone)]
pub struct DiscreteMdp<T> {
    grid: Grid<T>,
    spec: LagrangianSpec<T>,
    velocities: VelocitySet<T>,
    kinetic: Vec<T>,
    f: Vec<T>,
    diffusion: T,
    inv_h: T,
    threshold: T,
    all: Vec<usize>,
    boundary_actions: Vec<Vec<usize>>,
}

/// Assembles the chain with `v_max`/`dv` velocities on `grid`.
pub fn assemble_mdp<T: Real>(grid: &Grid<T>, spec: &LagrangianSpec<T>, v_max: T, dv: T) -> Result<DiscreteMdp<T>> {
    let vs = VelocitySet::uniform(grid.dim(), v_max, dv)?;
    DiscreteMdp::new(grid.clone(), spec.clone(), vs)
}

impl<T: Real> DiscreteMdp<T> {
    pub fn new(grid: Grid<T>, spec: LagrangianSpec<T>, velocities: VelocitySet<T>) -> Result<Self> {
        if velocities.dim() != grid.dim() {
            return Err(Error::InvalidParameter("velocity and grid dimensions differ".into()));
        }
        let h = grid.h();
        let eps = spec.epsilon();
        let kinetic = velocities.values().iter().map(|v| spec.kinetic(v)).collect();
        let f = grid.points().iter().map(|x| spec.f(x)).collect();
        let mut mdp = Self {
            diffusion: eps / (h * h),
            inv_h: T::one() / h,
            threshold: lit::<T>(2.0) * eps / h * (T::one() - lit(1e-9)),
            all: (0..velocities.len()).collect(),
            boundary_actions: vec![Vec::new(); grid.len()],
            grid,
            spec,
            velocities,
            kinetic,
            f,
        };
        for node in 0..mdp.grid.len() {
            if mdp.grid.is_boundary(node) {
                let acts: Vec<usize> = (0..mdp.velocities.len()).filter(|&k| mdp.rates(node, k).is_some()).collect();
                if acts.is_empty() {
                    return Err(Error::NoAdmissibleVelocity(node));
                }
                mdp.boundary_actions[node] = acts;
            }
            for &k in mdp.actions(node) {
                let r = mdp.rates(node, k).expect("admissible");
                if r.iter().flatten().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
                    return Err(Error::Assembly { node, velocity: k });
                }
            }
        }
        Ok(mdp)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn spec(&self) -> &LagrangianSpec<T> {
        &self.spec
    }

    pub fn velocities(&self) -> &VelocitySet<T> {
        &self.velocities
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Admissible velocity indices of `node`, in tie-break order.
    pub fn actions(&self, node: usize) -> &[usize] {
        if self.grid.is_boundary(node) {
            &self.boundary_actions[node]
        } else {
            &self.all
        }
    }

    pub fn is_admissible(&self, node: usize, vel: usize) -> bool {
        vel < self.velocities.len() && self.rates(node, vel).is_some()
    }

    /// L(x, v) at a node.
    #[inline]
    pub fn stage_cost(&self, node: usize, vel: usize) -> T {
        self.kinetic[vel] + self.f[node]
    }

    pub fn point(&self, node: usize) -> &Point<T> {
        self.grid.point(node)
    }

    pub fn velocity(&self, vel: usize) -> &Point<T> {
        self.velocities.get(vel)
    }

    /// (-x, v) . grad L at a node.
    pub fn pairing(&self, node: usize, vel: usize) -> T {
        self.spec.radial_gradient_pairing(self.grid.point(node), self.velocities.get(vel))
    }

    /// Jump rates of (node, velocity), or `None` when the velocity is not admissible.
    #[inline]
    pub fn rates(&self, node: usize, vel: usize) -> Option<Rates<T>> {
        let v = self.velocities.get(vel);
        let z = T::zero();
        let mut out = [[z; 2]; 2];
        for (axis, slot) in out.iter_mut().enumerate().take(self.grid.dim()) {
            let b = -v[axis];
            let minus = self.grid.neighbor(node, axis, 0).is_some();
            let plus = self.grid.neighbor(node, axis, 1).is_some();
            *slot = match (minus, plus) {
                (true, true) => [self.diffusion + (-b).max(z) * self.inv_h, self.diffusion + b.max(z) * self.inv_h],
                (true, false) if -b >= self.threshold => [-b * self.inv_h, z],
                (false, true) if b >= self.threshold => [z, b * self.inv_h],
                (false, false) if b == z => [z, z],
                _ => return None,
            };
        }
        Some(out)
    }

    /// Kushner-Dupuis normalization of the rates of an admissible pair.
    pub fn transition(&self, node: usize, vel: usize) -> Option<Transition<T>> {
        let r = self.rates(node, vel)?;
        let exit_rate = r.iter().flatten().fold(T::zero(), |a, &b| a + b);
        let mut probabilities = Vec::new();
        for (axis, row) in r.iter().enumerate().take(self.grid.dim()) {
            for (side, &w) in row.iter().enumerate() {
                if w > T::zero() {
                    let nb = self.grid.neighbor(node, axis, side).expect("positive rate has a neighbour");
                    probabilities.push((nb, w / exit_rate));
                }
            }
        }
        Some(Transition { exit_rate, probabilities })
    }

    /// cost + (A^v u)(node).
    #[inline]
    pub fn q_value(&self, node: usize, rates: &Rates<T>, cost: T, u: &[T]) -> T {
        let ux = u[node];
        let mut q = cost;
        for (axis, row) in rates.iter().enumerate().take(self.grid.dim()) {
            for (side, &w) in row.iter().enumerate() {
                if w > T::zero() {
                    let nb = self.grid.neighbor(node, axis, side).unwrap();
                    q += w * (u[nb] - ux);
                }
            }
        }
        q
    }

    /// Rounding scale of a Q value, used to decide when an improvement is genuine.
    #[inline]
    pub(crate) fn q_scale(&self, node: usize, rates: &Rates<T>, cost: T, u: &[T]) -> T {
        let ux = u[node].abs();
        let mut s = T::one() + cost.abs();
        for (axis, row) in rates.iter().enumerate().take(self.grid.dim()) {
            for (side, &w) in row.iter().enumerate() {
                if w > T::zero() {
                    let nb = self.grid.neighbor(node, axis, side).unwrap();
                    s += w * (u[nb].abs() + ux);
                }
            }
        }
        s * T::epsilon() * lit(1024.0)
    }

    /// The policy that picks the first admissible velocity (smallest |v|) at every node.
    pub fn default_policy(&self) -> Vec<usize> {
        (0..self.len()).map(|n| self.actions(n)[0]).collect()
    }

    pub fn policy_is_admissible(&self, policy: &[usize]) -> bool {
        policy.len() == self.len() && policy.iter().enumerate().all(|(n, &k)| self.is_admissible(n, k))
    }

    pub fn chain(&self, policy: &[usize]) -> PolicyChain<'_, T> {
        let rates = policy
            .iter()
            .enumerate()
            .map(|(n, &k)| self.rates(n, k).expect("admissible policy"))
            .collect();
        PolicyChain { mdp: self, rates }
    }

    /// Max over probe covectors of |min_v (xi v + C|v|^q) + |xi|^p|: how well the velocity set resolves H.
    pub fn hamiltonian_resolution(&self, xi_samples: &[T]) -> T {
        let p = self.spec.p();
        xi_samples
            .iter()
            .map(|&xi| {
                let best = self
                    .velocities
                    .values()
                    .iter()
                    .zip(&self.kinetic)
                    .map(|(v, &k)| xi * v[0] + k)
                    .fold(T::infinity(), T::min);
                (best + xi.abs().powf(p)).abs()
            })
            .fold(T::zero(), T::max)
    }
}

/// Generator of the chain under a fixed deterministic policy.
#[derive(Debug, Clone)]
pub struct PolicyChain<'a, T> {
    mdp: &'a DiscreteMdp<T>,
    rates: Vec<Rates<T>>,
}

impl<'a, T: Real> PolicyChain<'a, T> {
    pub fn rates(&self, node: usize) -> &Rates<T> {
        &self.rates[node]
    }

    pub fn exit_rate(&self, node: usize) -> T {
        self.rates[node].iter().flatten().fold(T::zero(), |a, &b| a + b)
    }

    fn is_1d(&self) -> bool {
        self.mdp.grid.dim() == 1
    }

    /// (A u)(x) = sum_y a_xy (u_y - u_x).
    pub fn apply(&self, u: &[T]) -> Vec<T> {
        (0..u.len()).map(|n| self.mdp.q_value(n, &self.rates[n], T::zero(), u)).collect()
    }

    /// (A^T m)(y) = sum_x m_x a_xy - m_y q_y.
    pub fn apply_transpose(&self, m: &[T]) -> Vec<T> {
        let g = &self.mdp.grid;
        let mut out: Vec<T> = (0..m.len()).map(|n| -m[n] * self.exit_rate(n)).collect();
        for (n, r) in self.rates.iter().enumerate() {
            for (axis, row) in r.iter().enumerate().take(g.dim()) {
                for (side, &w) in row.iter().enumerate() {
                    if w > T::zero() {
                        out[g.neighbor(n, axis, side).unwrap()] += m[n] * w;
                    }
                }
            }
        }
        out
    }

    fn dense(&self, diag_shift: T) -> Vec<T> {
        let n = self.rates.len();
        let g = &self.mdp.grid;
        let mut a = vec![T::zero(); n * n];
        for (i, r) in self.rates.iter().enumerate() {
            a[i * n + i] = diag_shift + self.exit_rate(i);
            for (axis, row) in r.iter().enumerate().take(g.dim()) {
                for (side, &w) in row.iter().enumerate() {
                    if w > T::zero() {
                        a[i * n + g.neighbor(i, axis, side).unwrap()] -= w;
                    }
                }
            }
        }
        a
    }

    fn tridiagonal(&self, delta: T) -> (Vec<T>, Vec<T>, Vec<T>) {
        let n = self.rates.len();
        let lower = (0..n).map(|i| -self.rates[i][0][0]).collect();
        let upper = (0..n).map(|i| -self.rates[i][0][1]).collect();
        let diag = (0..n).map(|i| delta + self.exit_rate(i)).collect();
        (lower, diag, upper)
    }

    /// Solves (delta I - A) u = cost.
    pub fn solve_discounted(&self, delta: T, cost: &[T]) -> Result<Vec<T>> {
        if self.is_1d() {
            let (l, d, u) = self.tridiagonal(delta);
            solve_tridiagonal(&l, &d, &u, cost)
        } else {
            Ok(DenseLu::factor(self.dense(delta), cost.len())?.solve(cost))
        }
    }

    /// Solves (delta I - A)^T m = rhs.
    pub fn solve_discounted_transpose(&self, delta: T, rhs: &[T]) -> Result<Vec<T>> {
        if self.is_1d() {
            let (l, d, u) = self.tridiagonal(delta);
            let n = d.len();
            let lt: Vec<T> = (0..n).map(|i| if i > 0 { u[i - 1] } else { T::zero() }).collect();
            let ut: Vec<T> = (0..n).map(|i| if i + 1 < n { l[i + 1] } else { T::zero() }).collect();
            solve_tridiagonal(&lt, &d, &ut, rhs)
        } else {
            Ok(DenseLu::factor(self.dense(delta), rhs.len())?.solve_transpose(rhs))
        }
    }

    /// Discounted occupation measure started at `z`: delta e_z^T (delta I - A)^{-1}.
    pub fn occupation_measure(&self, delta: T, z: usize) -> Result<Vec<T>> {
        let mut e = vec![T::zero(); self.rates.len()];
        e[z] = delta;
        self.solve_discounted_transpose(delta, &e)
    }

    /// Stationary distribution (time fractions), normalized to total mass one.
    pub fn stationary(&self) -> Result<Vec<T>> {
        let n = self.rates.len();
        if self.is_1d() {
            let mut lm = vec![T::zero(); n];
            for i in 0..n - 1 {
                let up = self.rates[i][0][1];
                let down = self.rates[i + 1][0][0];
                if !(up > T::zero()) || !(down > T::zero()) {
                    return Err(Error::Singular(format!("chain is reducible between nodes {i} and {}", i + 1)));
                }
                lm[i + 1] = lm[i] + up.ln() - down.ln();
            }
            let top = lm.iter().copied().fold(T::neg_infinity(), T::max);
            let mut m: Vec<T> = lm.iter().map(|&l| (l - top).exp()).collect();
            let s: T = m.iter().copied().sum();
            m.iter_mut().for_each(|v| *v /= s);
            Ok(m)
        } else {
            let a = self.dense(T::zero());
            // rows of (-A)^T with the last equation replaced by normalization
            let mut b = vec![T::zero(); n * n];
            for i in 0..n {
                for j in 0..n {
                    b[j * n + i] = a[i * n + j];
                }
            }
            for j in 0..n {
                b[(n - 1) * n + j] = T::one();
            }
            let mut rhs = vec![T::zero(); n];
            rhs[n - 1] = T::one();
            let m = DenseLu::factor(b, n)?.solve(&rhs);
            Ok(m.into_iter().map(|v| v.max(T::zero())).collect())
        }
    }

    /// Average-cost evaluation: returns (rho, u, m) with A u = rho - cost, u(pin) = 0 and m stationary.
    pub fn solve_average(&self, cost: &[T], pin: usize) -> Result<(T, Vec<T>, Vec<T>)> {
        let n = self.rates.len();
        let m = self.stationary()?;
        if self.is_1d() {
            let rho: T = m.iter().zip(cost).map(|(&a, &b)| a * b).sum();
            let t: Vec<T> = cost.iter().map(|&c| rho - c).collect();
            let up = |i: usize| self.rates[i][0][1];
            let down = |i: usize| self.rates[i][0][0];
            // S_i = G_i / m_i with G_i = sum_{k<=i} m_k t_k; D_i = u_{i+1} - u_i = S_i / up(i)
            let mut left = vec![T::zero(); n];
            left[0] = t[0];
            for i in 1..n {
                left[i] = left[i - 1] * (down(i) / up(i - 1)) + t[i];
            }
            let mut right = vec![T::zero(); n];
            for i in (0..n - 1).rev() {
                right[i] = (up(i) / down(i + 1)) * (right[i + 1] - t[i + 1]);
            }
            let mut mass = T::zero();
            let mut d = vec![T::zero(); n - 1];
            for i in 0..n - 1 {
                mass += m[i];
                let s = if mass <= lit(0.5) { left[i] } else { right[i] };
                d[i] = s / up(i);
            }
            let mut u = vec![T::zero(); n];
            for i in pin..n - 1 {
                u[i + 1] = u[i] + d[i];
            }
            for i in (0..pin).rev() {
                u[i] = u[i + 1] - d[i];
            }
            Ok((rho, u, m))
        } else {
            let mut a = self.dense(T::zero());
            // unknowns: u_j for j != pin, rho in slot `pin`; rows: -(A u) + rho = cost
            for i in 0..n {
                a[i * n + pin] = T::one();
            }
            let z = DenseLu::factor(a, n)?.solve(cost);
            let rho = z[pin];
            let mut u = z;
            u[pin] = T::zero();
            Ok((rho, u, m))
        }
    }
}

pub(crate) fn check_finite<T: Real>(v: &[T], what: &str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(k) => Err(Error::Singular(format!("{what}: non-finite entry at node {k}"))),
        None => Ok(()),
    }
}

/// Largest |v| over a policy.
pub fn policy_speed<T: Real>(mdp: &DiscreteMdp<T>, policy: &[usize]) -> T {
    policy.iter().map(|&k| norm(mdp.velocity(k))).fold(T::zero(), T::max)
}

/// Whether an interior node uses a velocity on the truncation boundary.
pub fn policy_truncated<T: Real>(mdp: &DiscreteMdp<T>, policy: &[usize]) -> bool {
    policy
        .iter()
        .enumerate()
        .any(|(n, &k)| !mdp.grid().is_boundary(n) && mdp.velocities().on_truncation_boundary(k))
}

/// Velocity discretization and solver tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpOptions<T> {
    pub dv: T,
    /// `None` selects [`default_v_max`].
    pub v_max: Option<T>,
    pub tol: T,
    /// Number of times the truncation may double when an optimizer reaches it.
    pub max_doublings: usize,
}

impl<T: Real> Default for MdpOptions<T> {
    fn default() -> Self {
        Self { dv: lit(0.01), v_max: None, tol: T::default_tol(), max_doublings: 3 }
    }
}

impl<T: Real> MdpOptions<T> {
    pub fn velocity_set(&self, spec: &LagrangianSpec<T>, grid: &Grid<T>) -> Result<VelocitySet<T>> {
        let v_max = self.v_max.unwrap_or_else(|| default_v_max(spec, grid));
        VelocitySet::uniform(grid.dim(), v_max, self.dv)
    }

    pub fn with_v_max(&self, v_max: T) -> Self {
        Self { v_max: Some(v_max), ..self.clone() }
    }
}

/// Result of one improvement sweep.
pub(crate) struct Sweep<T> {
    pub switched: usize,
    /// min over actions of cost + A u at every node
    pub best_q: Vec<T>,
    /// exit rate of the minimizing action
    pub best_rate: Vec<T>,
}

/// Replaces the action at every node where another admissible action lowers cost + A u by more than
/// the rounding scale. Ties keep the earlier action in tie-break order.
pub(crate) fn improve<T, C>(
    mdp: &DiscreteMdp<T>,
    u: &[T],
    policy: &mut [usize],
    cost: &C,
    restricted: Option<&[Vec<usize>]>,
) -> Sweep<T>
where
    T: Real,
    C: Fn(usize, usize) -> T + Sync,
{
    use rayon::prelude::*;
    let out: Vec<(usize, bool, T, T)> = policy
        .par_iter()
        .enumerate()
        .map(|(n, &cur)| {
            let acts = restricted.map(|r| r[n].as_slice()).unwrap_or_else(|| mdp.actions(n));
            let rc = mdp.rates(n, cur).expect("admissible policy");
            let cc = cost(n, cur);
            let q_cur = mdp.q_value(n, &rc, cc, u);
            let tau = mdp.q_scale(n, &rc, cc, u);
            let mut best = (cur, q_cur, rc);
            for &k in acts {
                let r = mdp.rates(n, k).expect("admissible action");
                let q = mdp.q_value(n, &r, cost(n, k), u);
                if q < best.1 {
                    best = (k, q, r);
                }
            }
            let exit = |r: &Rates<T>| r.iter().flatten().fold(T::zero(), |a, &b| a + b);
            if best.0 != cur && best.1 < q_cur - tau {
                (best.0, true, best.1, exit(&best.2))
            } else {
                (cur, false, best.1.min(q_cur), exit(&rc))
            }
        })
        .collect();
    let mut switched = 0;
    let mut best_q = Vec::with_capacity(out.len());
    let mut best_rate = Vec::with_capacity(out.len());
    for (n, (k, sw, q, r)) in out.into_iter().enumerate() {
        policy[n] = k;
        switched += sw as usize;
        best_q.push(q);
        best_rate.push(r);
    }
    Sweep { switched, best_q, best_rate }
}

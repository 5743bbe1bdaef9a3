//! Quadratic case: the principal Dirichlet eigenpair of -eps^2 Delta + f, the logarithmic transform back to
//! the ergodic equation, and the boundary-integral formula for the derivative of the eigenvalue under
//! dilation.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, Domain, DomainKind, Grid, Point};
use crate::lagrangian::RunningCost;
use crate::linalg::BandCholesky;
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::table::Table;

/// First zero of the Bessel function J_0.
pub const BESSEL_J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

/// Five-point (three-point in 1D) Dirichlet operator -eps^2 Delta_h + f on the nodes strictly inside the domain.
#[derive(Debug, Clone)]
struct DirichletOperator<T> {
    unknowns: Vec<usize>,
    diag: Vec<T>,
    coupling: T,
    links: Vec<Vec<usize>>,
    bandwidth: usize,
}

impl<T: Real> DirichletOperator<T> {
    fn assemble(grid: &Grid<T>, dirichlet: &[bool], cost: &RunningCost<T>, epsilon: T) -> Result<Self> {
        let mut unknowns: Vec<usize> = (0..grid.len()).filter(|&k| !dirichlet[k]).collect();
        unknowns.sort_by_key(|&k| {
            let l = grid.lattice_index(k);
            (l[1], l[0])
        });
        if unknowns.is_empty() {
            return Err(Error::DegenerateGrid("no interior nodes".into()));
        }
        let mut slot = vec![None; grid.len()];
        for (i, &k) in unknowns.iter().enumerate() {
            slot[k] = Some(i);
        }
        let h = grid.h();
        let coupling = epsilon * epsilon / (h * h);
        let dim = grid.dim();
        let mut diag = Vec::with_capacity(unknowns.len());
        let mut links = Vec::with_capacity(unknowns.len());
        let mut bandwidth = 0;
        for (i, &k) in unknowns.iter().enumerate() {
            diag.push(coupling * from_usize::<T>(2 * dim) + cost.value(grid.point(k)));
            let mut row = Vec::with_capacity(2 * dim);
            for axis in 0..dim {
                for side in 0..2 {
                    if let Some(j) = grid.neighbor(k, axis, side).and_then(|nb| slot[nb]) {
                        bandwidth = bandwidth.max(i.abs_diff(j));
                        row.push(j);
                    }
                }
            }
            links.push(row);
        }
        Ok(Self { unknowns, diag, coupling, links, bandwidth })
    }

    fn len(&self) -> usize {
        self.unknowns.len()
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        (0..self.len())
            .map(|i| {
                let off: T = self.links[i].iter().map(|&j| x[j]).sum();
                self.diag[i] * x[i] - self.coupling * off
            })
            .collect()
    }

    fn entry(&self, i: usize, j: usize) -> T {
        if i == j {
            self.diag[i]
        } else if self.links[i].contains(&j) {
            -self.coupling
        } else {
            T::zero()
        }
    }
}

/// Principal eigenpair of the discrete Dirichlet problem -eps^2 Delta_h w + f w = c w.
#[derive(Debug, Clone)]
pub struct LinearEigenpair<T> {
    pub grid: Grid<T>,
    pub domain: Domain<T>,
    pub epsilon: T,
    pub cost: RunningCost<T>,
    pub eigenvalue: T,
    /// Nodal values, zero on Dirichlet nodes, with sum w^2 h^d = 1.
    pub w: Vec<T>,
    /// Nodes carrying the Dirichlet zero.
    pub dirichlet: Vec<bool>,
    pub positive: bool,
    /// max |(-eps^2 Delta_h + f - c) w| over interior nodes.
    pub residual: T,
    pub iterations: usize,
    pub boundary: Vec<BoundarySample<T>>,
}

/// Outward normal derivative of w at a boundary point with its quadrature weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySample<T> {
    pub point: Point<T>,
    pub normal: Point<T>,
    pub weight: T,
    pub dwdn: T,
}

impl<T: Real> LinearEigenpair<T> {
    pub fn boundary_table(&self) -> Table {
        let mut t = Table::new("boundary", &["x", "y", "dwdn", "x_dot_n"]);
        for b in &self.boundary {
            t.push(vec![to_f64(b.point[0]), to_f64(b.point[1]), to_f64(b.dwdn), to_f64(dot(&b.point, &b.normal))]);
        }
        t
    }

    pub fn interior_count(&self) -> usize {
        self.dirichlet.iter().filter(|d| !**d).count()
    }
}

fn require_supported(domain: &Domain<impl Real>) -> Result<()> {
    match domain.kind() {
        DomainKind::Interval { .. } | DomainKind::Disk { .. } => Ok(()),
        DomainKind::RadialStar { .. } => {
            Err(Error::InvalidDomain("the linear eigenproblem supports intervals and disks only".into()))
        }
    }
}

fn dirichlet_mask<T: Real>(grid: &Grid<T>, domain: &Domain<T>) -> Vec<bool> {
    let edge = T::one() - lit(1e-9);
    grid.points()
        .iter()
        .map(|x| {
            let (r, rho) = if grid.dim() == 1 {
                (x[0].abs(), domain.boundary_radius(T::zero()))
            } else {
                (norm(x), domain.boundary_radius(x[1].atan2(x[0])))
            };
            r >= rho * edge
        })
        .collect()
}

/// Smallest eigenvalue of -eps^2 Delta_h + f with Dirichlet zeros on the grid of spacing `h` over `domain`.
pub fn principal_eigenpair<T: Real>(
    domain: &Domain<T>,
    cost: &RunningCost<T>,
    epsilon: T,
    h: T,
) -> Result<LinearEigenpair<T>> {
    let grid = crate::geometry::build_grid(domain, h)?;
    eigenpair_on_grid(domain, grid, cost, epsilon)
}

/// Same as [`principal_eigenpair`] on a caller-supplied grid covering `domain`.
pub fn eigenpair_on_grid<T: Real>(
    domain: &Domain<T>,
    grid: Grid<T>,
    cost: &RunningCost<T>,
    epsilon: T,
) -> Result<LinearEigenpair<T>> {
    require_supported(domain)?;
    if !(epsilon > T::zero()) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
    }
    let dirichlet = dirichlet_mask(&grid, domain);
    let op = DirichletOperator::assemble(&grid, &dirichlet, cost, epsilon)?;
    let floor = op
        .unknowns
        .iter()
        .map(|&k| cost.value(grid.point(k)))
        .fold(T::infinity(), T::min);
    let scale = op.diag.iter().fold(T::zero(), |m, d| m.max(d.abs()));
    let tol = (T::default_tol() * (T::one() + floor.abs())).max(lit::<T>(64.0) * T::epsilon() * scale);

    let mut shift = floor - lit::<T>(1e-3) * (T::one() + floor.abs());
    let mut x = vec![T::one(); op.len()];
    let mut last_residual = T::infinity();
    let mut total = 0;
    for attempt in 0..2 {
        match inverse_iteration(&op, shift, &mut x, tol, 2000) {
            Ok((c, residual, its)) => {
                total += its;
                return Ok(finish(domain, grid, dirichlet, &op, cost, epsilon, c, x, residual, total));
            }
            Err((c, residual, its)) => {
                total += its;
                last_residual = residual;
                log::warn!("inverse iteration stalled (attempt {attempt}, residual {residual:e}); moving the shift");
                shift = c - (c - shift) * lit(0.5);
            }
        }
    }
    Err(Error::Stagnation(to_f64(last_residual)))
}

type IterationOutcome<T> = std::result::Result<(T, T, usize), (T, T, usize)>;

fn inverse_iteration<T: Real>(
    op: &DirichletOperator<T>,
    shift: T,
    x: &mut Vec<T>,
    tol: T,
    max_iter: usize,
) -> IterationOutcome<T> {
    let chol = match BandCholesky::factor(op.len(), op.bandwidth, |i, j| {
        op.entry(i, j) - if i == j { shift } else { T::zero() }
    }) {
        Ok(c) => c,
        Err(_) => return Err((shift, T::infinity(), 0)),
    };
    let mut c = shift;
    let mut residual = T::infinity();
    for it in 1..=max_iter {
        let y = chol.solve(x);
        let nrm = y.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if !(nrm > T::zero()) || !nrm.is_finite() {
            return Err((c, residual, it));
        }
        *x = y.into_iter().map(|v| v / nrm).collect();
        let ax = op.apply(x);
        c = ax.iter().zip(x.iter()).map(|(a, b)| *a * *b).sum();
        residual = ax.iter().zip(x.iter()).map(|(a, b)| (*a - c * *b).abs()).fold(T::zero(), T::max);
        let peak = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if residual <= tol * peak {
            return Ok((c, residual / peak, it));
        }
    }
    Err((c, residual, max_iter))
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Real>(
    domain: &Domain<T>,
    grid: Grid<T>,
    dirichlet: Vec<bool>,
    op: &DirichletOperator<T>,
    cost: &RunningCost<T>,
    epsilon: T,
    eigenvalue: T,
    x: Vec<T>,
    residual: T,
    iterations: usize,
) -> LinearEigenpair<T> {
    let sign = if x.iter().copied().sum::<T>() < T::zero() { -T::one() } else { T::one() };
    let mass: T = x.iter().map(|v| *v * *v).sum::<T>() * grid.cell_volume();
    let s = sign / mass.sqrt();
    let mut w = vec![T::zero(); grid.len()];
    for (i, &k) in op.unknowns.iter().enumerate() {
        w[k] = x[i] * s;
    }
    let positive = op.unknowns.iter().all(|&k| w[k] > T::zero());
    let mut pair = LinearEigenpair {
        boundary: Vec::new(),
        grid,
        domain: domain.clone(),
        epsilon,
        cost: cost.clone(),
        eigenvalue,
        w,
        dirichlet,
        positive,
        residual: residual * s.abs(),
        iterations,
    };
    pair.boundary = normal_derivatives(&pair);
    pair
}

/// Value of the nodal field at `x` by multilinear interpolation, with zero off the grid.
fn interpolate<T: Real>(grid: &Grid<T>, w: &[T], x: &Point<T>) -> T {
    let h = grid.h();
    let (fx, fy) = (x[0] / h, x[1] / h);
    let (i0, j0) = (fx.floor(), fy.floor());
    let (tx, ty) = (fx - i0, fy - j0);
    let (i0, j0) = (i0.to_i64().unwrap_or(0), j0.to_i64().unwrap_or(0));
    let at = |i: i64, j: i64| grid.node_at([i, j]).map(|k| w[k]).unwrap_or(T::zero());
    if grid.dim() == 1 {
        return at(i0, 0) * (T::one() - tx) + at(i0 + 1, 0) * tx;
    }
    let one = T::one();
    at(i0, j0) * (one - tx) * (one - ty)
        + at(i0 + 1, j0) * tx * (one - ty)
        + at(i0, j0 + 1) * (one - tx) * ty
        + at(i0 + 1, j0 + 1) * tx * ty
}

/// Outward normal derivatives. On an interval the boundary is a node and the one-sided stencil
/// (3 w(b) - 4 w(b - h n) + w(b - 2h n)) / (2h) applies. On a masked lattice the cells cut by the circle mix
/// interior values with exterior zeros, so interpolating there biases w upward by O(h) within O(h) of the
/// boundary and the gradient by O(1). There the quadratic through depths 2h, 3h, 4h (every bilinear corner
/// interior) is differentiated at the circle: (7 w(2h) - 12 w(3h) + 5 w(4h)) / (2h). The stencil is the dominant
/// error term of the boundary integral.
fn normal_derivatives<T: Real>(pair: &LinearEigenpair<T>) -> Vec<BoundarySample<T>> {
    let grid = &pair.grid;
    let h = grid.h();
    let (points, weight) = if grid.dim() == 1 {
        (pair.domain.boundary_samples(2), T::one())
    } else {
        let r = pair.domain.outer_radius();
        let n = ((lit::<T>(std::f64::consts::TAU) * r / h).ceil().to_usize().unwrap_or(64)).max(64);
        (pair.domain.boundary_samples(n), lit::<T>(std::f64::consts::TAU) * r / from_usize::<T>(n))
    };
    points
        .into_iter()
        .map(|b| {
            let r = norm(&b);
            let normal = [b[0] / r, b[1] / r];
            let inward = |k: T| [b[0] - k * h * normal[0], b[1] - k * h * normal[1]];
            let at = |k: f64| interpolate(grid, &pair.w, &inward(lit(k)));
            let dwdn = if grid.dim() == 1 {
                (lit::<T>(3.0) * at(0.0) - lit::<T>(4.0) * at(1.0) + at(2.0)) / (lit::<T>(2.0) * h)
            } else {
                (lit::<T>(7.0) * at(2.0) - lit::<T>(12.0) * at(3.0) + lit::<T>(5.0) * at(4.0)) / (lit::<T>(2.0) * h)
            };
            BoundarySample { point: b, normal, weight, dwdn }
        })
        .collect()
}

/// Discrete energy sum eps^2 |D_h w|^2 h^d + sum f w^2 h^d over forward differences, links to nodes outside the
/// grid counted against the zero extension.
pub fn rayleigh_quotient<T: Real>(
    w: &[T],
    cost: &RunningCost<T>,
    epsilon: T,
    grid: &Grid<T>,
    dirichlet: &[bool],
) -> Result<T> {
    let vol = grid.cell_volume();
    let mass: T = w.iter().map(|v| *v * *v).sum::<T>() * vol;
    if (mass - T::one()).abs() > lit(1e-8) {
        return Err(Error::Normalization(to_f64(mass.sqrt())));
    }
    if let Some(k) = (0..grid.len()).find(|&k| dirichlet[k] && w[k] != T::zero()) {
        return Err(Error::InvalidParameter(format!("trial function is nonzero at boundary node {k}")));
    }
    let h = grid.h();
    let mut grad = T::zero();
    let mut pot = T::zero();
    for k in 0..grid.len() {
        pot += cost.value(grid.point(k)) * w[k] * w[k];
        for axis in 0..grid.dim() {
            let fwd = grid.neighbor(k, axis, 1).map(|j| w[j]).unwrap_or(T::zero());
            let d = fwd - w[k];
            grad += d * d;
            if grid.neighbor(k, axis, 0).is_none() {
                grad += w[k] * w[k];
            }
        }
    }
    Ok((epsilon * epsilon * grad / (h * h) + pot) * vol)
}

/// v = -eps log w on interior nodes and +infinity on Dirichlet nodes.
pub fn hopf_cole_transform<T: Real>(w: &[T], epsilon: T, dirichlet: &[bool]) -> Result<Vec<T>> {
    w.iter()
        .zip(dirichlet)
        .enumerate()
        .map(|(k, (&wk, &d))| {
            if d {
                Ok(T::infinity())
            } else if wk > T::zero() {
                Ok(-epsilon * wk.ln())
            } else {
                Err(Error::TransformDomain(k))
            }
        })
        .collect()
}

/// max | |D_h v|^2 - f - eps Delta_h v + c | over interior nodes whose stencil is interior and whose radius is at
/// most `fraction` of the boundary radius. The transform turns the linear eigenvalue c into the ergodic
/// constant -c.
pub fn transform_defect<T: Real>(pair: &LinearEigenpair<T>, v: &[T], fraction: T) -> T {
    let grid = &pair.grid;
    let h = grid.h();
    let eps = pair.epsilon;
    let mut worst = T::zero();
    for k in 0..grid.len() {
        if pair.dirichlet[k] {
            continue;
        }
        let x = grid.point(k);
        let rho = pair.domain.boundary_radius(if grid.dim() == 1 { T::zero() } else { x[1].atan2(x[0]) });
        if norm(x) > fraction * rho {
            continue;
        }
        let mut grad2 = T::zero();
        let mut lap = T::zero();
        let mut ok = true;
        for axis in 0..grid.dim() {
            match (grid.neighbor(k, axis, 0), grid.neighbor(k, axis, 1)) {
                (Some(a), Some(b)) if !pair.dirichlet[a] && !pair.dirichlet[b] => {
                    let g = (v[b] - v[a]) / (lit::<T>(2.0) * h);
                    grad2 += g * g;
                    lap += (v[a] - lit::<T>(2.0) * v[k] + v[b]) / (h * h);
                }
                _ => ok = false,
            }
        }
        if ok {
            let d = grad2 - pair.cost.value(x) - eps * lap + pair.eigenvalue;
            worst = worst.max(d.abs());
        }
    }
    worst
}

/// Radial speed of a perturbation field as a function of the boundary point.
pub type RadialProfile<T> = Arc<dyn Fn(&Point<T>) -> T + Send + Sync>;

/// Normal velocity field on the boundary.
#[derive(Clone)]
pub enum Perturbation<T> {
    /// V(x) = x.
    Identity,
    Zero,
    /// V(x) = g(x) x.
    Radial(RadialProfile<T>),
}

impl<T> fmt::Debug for Perturbation<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::Identity => f.write_str("Identity"),
            Perturbation::Zero => f.write_str("Zero"),
            Perturbation::Radial(_) => f.write_str("Radial(..)"),
        }
    }
}

impl<T: Real> Perturbation<T> {
    pub fn normal_velocity(&self, x: &Point<T>, n: &Point<T>) -> T {
        match self {
            Perturbation::Identity => dot(x, n),
            Perturbation::Zero => T::zero(),
            Perturbation::Radial(g) => g(x) * dot(x, n),
        }
    }
}

/// -eps^2 * boundary integral of |dw/dn|^2 (V . n).
pub fn shape_derivative<T: Real>(pair: &LinearEigenpair<T>, field: &Perturbation<T>) -> T {
    let e2 = pair.epsilon * pair.epsilon;
    -e2 * pair
        .boundary
        .iter()
        .map(|b| b.dwdn * b.dwdn * field.normal_velocity(&b.point, &b.normal) * b.weight)
        .sum::<T>()
}

/// Eigenvalues on the dilations (1 + lambda) Omega with central-difference derivatives at lambda = 0.
#[derive(Debug, Clone)]
pub struct QuadraticCurve<T> {
    pub samples: Vec<(T, T)>,
    pub c0: T,
    pub step: T,
    pub fd_first: T,
    pub fd_second: T,
    pub shape: T,
    /// |fd_first - shape| / |shape|.
    pub mismatch: T,
    pub base: LinearEigenpair<T>,
}

impl<T: Real> QuadraticCurve<T> {
    /// Samples with a one-sided difference in the third column on interior points.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new("eigencurve_p2", &["lambda", "c", "fd_derivative"]);
        for (i, (l, c)) in self.samples.iter().enumerate() {
            let d = match (i.checked_sub(1).and_then(|j| self.samples.get(j)), self.samples.get(i + 1)) {
                (Some(a), Some(b)) => (b.1 - a.1) / (b.0 - a.0),
                _ => T::nan(),
            };
            t.push(vec![to_f64(*l), to_f64(*c), to_f64(d)]);
        }
        t
    }
}

/// Solves the eigenproblem on the dilated lattices (1 + lambda) G, keeping the node count fixed, for each
/// sample and differences at zero with the smallest step s for which both s and -s are sampled.
pub fn eigencurve_p2<T: Real>(
    domain: &Domain<T>,
    cost: &RunningCost<T>,
    epsilon: T,
    lambdas: &[T],
    h: T,
) -> Result<QuadraticCurve<T>> {
    require_supported(domain)?;
    let mut ls = lambdas.to_vec();
    ls.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ls.dedup();
    if !ls.iter().any(|l| *l == T::zero()) {
        return Err(Error::InvalidParameter("lambda samples must contain 0".into()));
    }
    let step = ls
        .iter()
        .copied()
        .filter(|l| *l > T::zero() && ls.iter().any(|m| (*m + *l).abs() <= T::epsilon() * lit(16.0)))
        .fold(T::infinity(), T::min);
    if !step.is_finite() {
        return Err(Error::InvalidParameter("lambda samples need a symmetric pair around 0".into()));
    }
    let base_grid = crate::geometry::build_grid(domain, h)?;
    let pairs: Vec<Result<LinearEigenpair<T>>> = ls
        .par_iter()
        .map(|&l| {
            let s = T::one() + l;
            let d = domain.scaled(l)?;
            eigenpair_on_grid(&d, base_grid.dilated(s), cost, epsilon)
        })
        .collect();
    let mut samples = Vec::with_capacity(ls.len());
    let mut base = None;
    for (l, p) in ls.iter().zip(pairs) {
        let p = p?;
        samples.push((*l, p.eigenvalue));
        if *l == T::zero() {
            base = Some(p);
        }
    }
    let base = base.expect("zero sample present");
    let value = |target: T| {
        samples
            .iter()
            .find(|(l, _)| (*l - target).abs() <= T::epsilon() * lit(16.0))
            .map(|(_, c)| *c)
            .expect("sample present")
    };
    let (cm, c0, cp) = (value(-step), base.eigenvalue, value(step));
    let fd_first = (cp - cm) / (lit::<T>(2.0) * step);
    let fd_second = (cp - lit::<T>(2.0) * c0 + cm) / (step * step);
    let shape = shape_derivative(&base, &Perturbation::Identity);
    let mismatch = (fd_first - shape).abs() / shape.abs().max(T::min_positive_value());
    Ok(QuadraticCurve { samples, c0, step, fd_first, fd_second, shape, mismatch, base })
}

/// Dirichlet eigenvalue of -eps^2 Delta on the disk of radius `radius`.
pub fn disk_eigenvalue(epsilon: f64, radius: f64) -> f64 {
    (epsilon * BESSEL_J0_FIRST_ZERO / radius).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_domain;
    use std::f64::consts::PI;

    fn interval(a: f64) -> Domain<f64> {
        make_domain(DomainKind::Interval { half_width: a }).unwrap()
    }

    #[test]
    fn constant_cost_shifts_the_eigenvalue() {
        let d = interval(1.0);
        let a = principal_eigenpair(&d, &RunningCost::zero(), 1.0, 1.0 / 64.0).unwrap();
        let b = principal_eigenpair(&d, &RunningCost::constant(2.5), 1.0, 1.0 / 64.0).unwrap();
        assert!((b.eigenvalue - a.eigenvalue - 2.5).abs() < 1e-10);
        let diff = a.w.iter().zip(&b.w).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }

    #[test]
    fn eigenfunction_is_normalized_and_positive() {
        let p = principal_eigenpair(&interval(1.0), &RunningCost::cosine(1.0, PI), 1.0, 1.0 / 50.0).unwrap();
        assert!(p.positive);
        let m: f64 = p.w.iter().map(|v| v * v).sum::<f64>() * p.grid.cell_volume();
        assert!((m - 1.0).abs() < 1e-10);
        assert!(p.residual < 1e-8);
        assert_eq!(p.w[0], 0.0);
        assert_eq!(*p.w.last().unwrap(), 0.0);
    }

    #[test]
    fn transform_rejects_nonpositive_values() {
        let w = [0.0, 0.5, -0.1, 0.0];
        let mask = [true, false, false, true];
        assert_eq!(hopf_cole_transform(&w, 1.0, &mask), Err(Error::TransformDomain(2)));
        let v = hopf_cole_transform(&[0.0f64, 1.0, 0.0], 1.0, &[true, false, true]).unwrap();
        assert!(v[0].is_infinite() && v[1] == 0.0);
    }

    #[test]
    fn star_domains_are_rejected() {
        let d = make_domain(DomainKind::RadialStar { profile: vec![1.0; 16] }).unwrap();
        assert!(matches!(principal_eigenpair(&d, &RunningCost::zero(), 1.0, 0.1), Err(Error::InvalidDomain(_))));
    }

    #[test]
    fn zero_field_has_zero_rate() {
        let p = principal_eigenpair(&interval(1.0), &RunningCost::zero(), 1.0, 1.0 / 32.0).unwrap();
        assert_eq!(shape_derivative(&p, &Perturbation::Zero), 0.0);
        let doubled = shape_derivative(&p, &Perturbation::Radial(Arc::new(|_| 2.0)));
        assert!((doubled - 2.0 * shape_derivative(&p, &Perturbation::Identity)).abs() < 1e-12);
    }
}

//! Star-shaped domains, their dilations, condition (A) and lattice grids.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// A point in the plane; one-dimensional problems use the first coordinate and keep the second at zero.
pub type Point<T> = [T; 2];

#[inline]
pub fn norm<T: Real>(x: &Point<T>) -> T {
    x[0].hypot(x[1])
}

#[inline]
pub fn dot<T: Real>(a: &Point<T>, b: &Point<T>) -> T {
    a[0] * b[0] + a[1] * b[1]
}

/// Shape of the base region, star-shaped with respect to the origin.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind<T> {
    /// The interval (-a, a).
    Interval { half_width: T },
    /// The disk of radius `radius` centred at the origin.
    Disk { radius: T },
    /// {r < rho(theta)} with rho sampled at theta_k = 2 pi k / n and interpolated linearly.
    RadialStar { profile: Vec<T> },
}

/// A base region together with a dilation factor s = 1 + r.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain<T> {
    kind: DomainKind<T>,
    scale: T,
}

/// Validates `kind` and returns the unscaled domain.
pub fn make_domain<T: Real>(kind: DomainKind<T>) -> Result<Domain<T>> {
    Domain::new(kind)
}

/// Returns (1 + r) d.
pub fn scale_domain<T: Real>(d: &Domain<T>, r: T) -> Result<Domain<T>> {
    d.scaled(r)
}

impl<T: Real> Domain<T> {
    pub fn new(kind: DomainKind<T>) -> Result<Self> {
        let ok = |v: T| v > T::zero() && v.is_finite();
        match &kind {
            DomainKind::Interval { half_width } if !ok(*half_width) => {
                return Err(Error::InvalidDomain(format!("half-width {half_width} must be positive")))
            }
            DomainKind::Disk { radius } if !ok(*radius) => {
                return Err(Error::InvalidDomain(format!("radius {radius} must be positive")))
            }
            DomainKind::RadialStar { profile } => {
                if profile.len() < 3 {
                    return Err(Error::InvalidDomain("radial profile needs at least 3 samples".into()));
                }
                if let Some(k) = profile.iter().position(|&v| !ok(v)) {
                    return Err(Error::InvalidDomain(format!("radial profile sample {k} is not positive")));
                }
            }
            _ => {}
        }
        Ok(Self { kind, scale: T::one() })
    }

    pub fn kind(&self) -> &DomainKind<T> {
        &self.kind
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            DomainKind::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn scaled(&self, r: T) -> Result<Self> {
        let s = T::one() + r;
        if !(s > T::zero()) || !s.is_finite() {
            return Err(Error::InvalidScale(to_f64(s)));
        }
        Ok(Self { kind: self.kind.clone(), scale: self.scale * s })
    }

    /// Same base region with scale reset to one.
    pub fn base(&self) -> Self {
        Self { kind: self.kind.clone(), scale: T::one() }
    }

    /// Base radial profile at angle `theta` (unscaled).
    fn base_radius(&self, theta: T) -> T {
        match &self.kind {
            DomainKind::Interval { half_width } => *half_width,
            DomainKind::Disk { radius } => *radius,
            DomainKind::RadialStar { profile } => {
                let n = profile.len();
                let two_pi = lit::<T>(std::f64::consts::TAU);
                let mut t = theta % two_pi;
                if t < T::zero() {
                    t += two_pi;
                }
                let pos = t / two_pi * from_usize::<T>(n);
                let k = pos.floor().to_usize().unwrap_or(0).min(n - 1);
                let w = pos - from_usize::<T>(k);
                profile[k] * (T::one() - w) + profile[(k + 1) % n] * w
            }
        }
    }

    /// Distance from the origin to the boundary along the ray of angle `theta`.
    pub fn boundary_radius(&self, theta: T) -> T {
        self.base_radius(theta) * self.scale
    }

    /// Largest radius of a ball centred at the origin contained in the closure.
    pub fn inradius(&self) -> T {
        match &self.kind {
            DomainKind::RadialStar { .. } => {
                let pts = self.boundary_polyline(4096);
                let origin = [T::zero(), T::zero()];
                (0..pts.len())
                    .map(|k| segment_distance(&origin, &pts[k], &pts[(k + 1) % pts.len()]))
                    .fold(T::infinity(), T::min)
            }
            _ => self.base_radius(T::zero()) * self.scale,
        }
    }

    /// Largest distance from the origin to a boundary point.
    pub fn outer_radius(&self) -> T {
        match &self.kind {
            DomainKind::RadialStar { profile } => {
                profile.iter().copied().fold(T::zero(), T::max) * self.scale
            }
            _ => self.base_radius(T::zero()) * self.scale,
        }
    }

    pub fn diameter(&self) -> T {
        self.outer_radius() * lit(2.0)
    }

    /// Whether `x` lies in the closure, up to a relative tolerance.
    pub fn contains_closed(&self, x: &Point<T>) -> bool {
        let slack = T::one() + lit(1e-12);
        match &self.kind {
            DomainKind::Interval { .. } => x[0].abs() <= self.boundary_radius(T::zero()) * slack,
            _ => {
                let r = norm(x);
                r <= self.boundary_radius(x[1].atan2(x[0])) * slack
            }
        }
    }

    /// Distance from `x` to the closure of the domain.
    pub fn distance_to_closure(&self, x: &Point<T>) -> T {
        match &self.kind {
            DomainKind::Interval { .. } => (x[0].abs() - self.boundary_radius(T::zero())).max(T::zero()),
            DomainKind::Disk { .. } => (norm(x) - self.boundary_radius(T::zero())).max(T::zero()),
            DomainKind::RadialStar { .. } => {
                if self.contains_closed(x) {
                    return T::zero();
                }
                let pts = self.boundary_polyline(4096);
                (0..pts.len())
                    .map(|k| segment_distance(x, &pts[k], &pts[(k + 1) % pts.len()]))
                    .fold(T::infinity(), T::min)
            }
        }
    }

    /// `n` boundary points at equally spaced angles (two points for an interval).
    pub fn boundary_samples(&self, n: usize) -> Vec<Point<T>> {
        match &self.kind {
            DomainKind::Interval { .. } => {
                let a = self.boundary_radius(T::zero());
                vec![[-a, T::zero()], [a, T::zero()]]
            }
            _ => self.boundary_polyline(n),
        }
    }

    fn boundary_polyline(&self, n: usize) -> Vec<Point<T>> {
        let two_pi = lit::<T>(std::f64::consts::TAU);
        (0..n)
            .map(|k| {
                let th = two_pi * from_usize::<T>(k) / from_usize::<T>(n);
                let r = self.boundary_radius(th);
                [r * th.cos(), r * th.sin()]
            })
            .collect()
    }
}

fn segment_distance<T: Real>(p: &Point<T>, a: &Point<T>, b: &Point<T>) -> T {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = dot(&ab, &ab);
    let t = if len2 > T::zero() { (dot(&ap, &ab) / len2).max(T::zero()).min(T::one()) } else { T::zero() };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    norm(&d)
}

/// Outcome of the sampled condition (A) check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionA<T> {
    /// Largest kappa with dist(x, closure) >= kappa r over all probes x in (1+r) boundary.
    pub kappa_distance: T,
    /// Radius of the largest ball around the origin inside the closure.
    pub kappa_ball: T,
    /// min of the two; the ball condition is strict, so any admissible kappa is below `kappa_ball`.
    pub kappa_max: T,
    /// True when `kappa_ball` is the binding constant and is only a supremum.
    pub strict_caveat: bool,
}

/// Default probe radii for [`check_condition_a`].
pub fn default_r_probe<T: Real>() -> Vec<T> {
    vec![lit(1e-3), lit(1e-2), lit(1e-1)]
}

/// Samples condition (A) on `n_samples` boundary points for each probe dilation.
pub fn check_condition_a<T: Real>(d: &Domain<T>, r_probe: &[T], n_samples: usize) -> Result<ConditionA<T>> {
    let kappa_ball = d.inradius();
    if !(kappa_ball > T::zero()) {
        return Err(Error::ConditionA("origin is not an interior point".into()));
    }
    if r_probe.is_empty() || r_probe.iter().any(|&r| !(r > T::zero())) {
        return Err(Error::InvalidParameter("probe radii must be positive".into()));
    }
    let mut kappa_distance = T::infinity();
    for &r in r_probe {
        let s = T::one() + r;
        for b in d.boundary_samples(n_samples.max(1)) {
            let x = [b[0] * s, b[1] * s];
            kappa_distance = kappa_distance.min(d.distance_to_closure(&x) / r);
        }
    }
    if !(kappa_distance > T::zero()) {
        return Err(Error::ConditionA(format!("distance condition fails (kappa = {kappa_distance})")));
    }
    Ok(ConditionA {
        kappa_distance,
        kappa_ball,
        kappa_max: kappa_distance.min(kappa_ball),
        strict_caveat: kappa_ball <= kappa_distance * (T::one() + lit(1e-9)),
    })
}

/// Linear scaling rule r(lambda) = gamma * lambda with its sample list.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSchedule<T> {
    pub gamma: T,
    pub lambdas: Vec<T>,
}

impl<T: Real> ScalingSchedule<T> {
    pub fn new(gamma: T, lambdas: Vec<T>) -> Result<Self> {
        for &l in &lambdas {
            if !(T::one() + gamma * l > T::zero()) {
                return Err(Error::InvalidScale(to_f64(T::one() + gamma * l)));
            }
        }
        Ok(Self { gamma, lambdas })
    }

    /// r(lambda) = gamma lambda, lambda in [-0.32, 0.32] on the default grid.
    pub fn default_grid(gamma: T) -> Self {
        let mut lambdas: Vec<T> = [-0.32, -0.16, -0.08, -0.04, -0.02, 0.0, 0.02, 0.04, 0.08, 0.16, 0.32]
            .iter()
            .map(|&v| lit(v))
            .collect();
        lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self { gamma, lambdas }
    }

    /// Uniform samples k * step for |k| <= n.
    pub fn uniform(gamma: T, step: T, n: usize) -> Result<Self> {
        let n = n as i64;
        Self::new(gamma, (-n..=n).map(|k| T::from_i64(k).unwrap() * step).collect())
    }

    pub fn r(&self, lambda: T) -> T {
        self.gamma * lambda
    }
}

/// Uniform axis-aligned lattice covering the closure of a domain.
#[derive(Debug, Clone)]
pub struct Grid<T> {
    dim: usize,
    h: T,
    points: Vec<Point<T>>,
    lattice: Vec<[i64; 2]>,
    neighbors: Vec<[[Option<usize>; 2]; 2]>,
    boundary: Vec<bool>,
    origin: usize,
    index: HashMap<[i64; 2], usize>,
}

/// Builds a grid on the closure of `d`. Interval grids adjust the spacing downwards so that both endpoints
/// and the origin are nodes; planar grids use the lattice hZ^2 restricted to the closure.
pub fn build_grid<T: Real>(d: &Domain<T>, h: T) -> Result<Grid<T>> {
    if !(h > T::zero()) {
        return Err(Error::DegenerateGrid(format!("spacing {h} must be positive")));
    }
    match d.kind() {
        DomainKind::Interval { .. } => {
            let half = d.boundary_radius(T::zero());
            if !(h < half) {
                return Err(Error::DegenerateGrid(format!("spacing {h} not below half-width {half}")));
            }
            let m = (half / h - lit(1e-9)).ceil().to_i64().unwrap_or(0).max(2);
            Ok(interval_grid(half, m))
        }
        _ => lattice_grid_2d(d, h),
    }
}

/// Builds a grid with spacing exactly `h`; intervals must have a half-width that is a multiple of `h`.
pub fn build_lattice_grid<T: Real>(d: &Domain<T>, h: T) -> Result<Grid<T>> {
    if !(h > T::zero()) {
        return Err(Error::DegenerateGrid(format!("spacing {h} must be positive")));
    }
    match d.kind() {
        DomainKind::Interval { .. } => {
            let half = d.boundary_radius(T::zero());
            if !lattice_compatible(d, h) {
                return Err(Error::LatticeMismatch { h: to_f64(h), extent: to_f64(half) });
            }
            let m = (half / h).round().to_i64().unwrap_or(0);
            if m < 2 {
                return Err(Error::DegenerateGrid(format!("spacing {h} not below half-width {half}")));
            }
            Ok(interval_grid(half, m))
        }
        _ => lattice_grid_2d(d, h),
    }
}

/// Whether an interval's half-width is an integer multiple of `h` (always true in 2D).
pub fn lattice_compatible<T: Real>(d: &Domain<T>, h: T) -> bool {
    match d.kind() {
        DomainKind::Interval { .. } => {
            let ratio = d.boundary_radius(T::zero()) / h;
            (ratio - ratio.round()).abs() <= lit::<T>(1e-9) * ratio.max(T::one())
        }
        _ => true,
    }
}

fn interval_grid<T: Real>(half: T, m: i64) -> Grid<T> {
    let hh = half / T::from_i64(m).unwrap();
    let n = (2 * m + 1) as usize;
    let mut points = Vec::with_capacity(n);
    let mut lattice = Vec::with_capacity(n);
    for i in -m..=m {
        let x = if i == -m {
            -half
        } else if i == m {
            half
        } else {
            T::from_i64(i).unwrap() * hh
        };
        points.push([x, T::zero()]);
        lattice.push([i, 0]);
    }
    Grid::from_lattice(1, hh, points, lattice)
}

fn lattice_grid_2d<T: Real>(d: &Domain<T>, h: T) -> Result<Grid<T>> {
    let rmax = d.outer_radius();
    if !(h < rmax * lit(0.5)) {
        return Err(Error::DegenerateGrid(format!("spacing {h} too coarse for radius {rmax}")));
    }
    let k = (rmax / h).ceil().to_i64().unwrap_or(0) + 1;
    let mut points = Vec::new();
    let mut lattice = Vec::new();
    for j in -k..=k {
        for i in -k..=k {
            let x = [T::from_i64(i).unwrap() * h, T::from_i64(j).unwrap() * h];
            if d.contains_closed(&x) {
                points.push(x);
                lattice.push([i, j]);
            }
        }
    }
    Ok(Grid::from_lattice(2, h, points, lattice))
}

impl<T: Real> Grid<T> {
    fn from_lattice(dim: usize, h: T, points: Vec<Point<T>>, lattice: Vec<[i64; 2]>) -> Self {
        let index: HashMap<[i64; 2], usize> = lattice.iter().enumerate().map(|(k, l)| (*l, k)).collect();
        let neighbors: Vec<[[Option<usize>; 2]; 2]> = lattice
            .iter()
            .map(|l| {
                let mut nb = [[None; 2]; 2];
                for (axis, row) in nb.iter_mut().enumerate().take(dim) {
                    for (side, slot) in row.iter_mut().enumerate() {
                        let mut m = *l;
                        m[axis] += if side == 0 { -1 } else { 1 };
                        *slot = index.get(&m).copied();
                    }
                }
                nb
            })
            .collect();
        let boundary = neighbors
            .iter()
            .map(|nb| nb.iter().take(dim).any(|row| row[0].is_none() || row[1].is_none()))
            .collect();
        let origin = index[&[0, 0]];
        Self { dim, h, points, lattice, neighbors, boundary, origin, index }
    }

    /// The same lattice with every coordinate and the spacing multiplied by `s`.
    pub fn dilated(&self, s: T) -> Self {
        Self {
            h: self.h * s,
            points: self.points.iter().map(|p| [p[0] * s, p[1] * s]).collect(),
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, node: usize) -> &Point<T> {
        &self.points[node]
    }

    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    pub fn lattice_index(&self, node: usize) -> [i64; 2] {
        self.lattice[node]
    }

    pub fn node_at(&self, lattice: [i64; 2]) -> Option<usize> {
        self.index.get(&lattice).copied()
    }

    /// Neighbour of `node` along `axis` on `side` (0 = negative, 1 = positive).
    pub fn neighbor(&self, node: usize, axis: usize, side: usize) -> Option<usize> {
        self.neighbors[node][axis][side]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior_count(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    /// Quadrature weight h^dim.
    pub fn cell_volume(&self) -> T {
        self.h.powi(self.dim as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interval_nodes_at_half_spacing() {
        let d = make_domain(DomainKind::Interval { half_width: 1.0f64 }).unwrap();
        let g = build_grid(&d, 0.5).unwrap();
        let xs: Vec<f64> = g.points().iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let b: Vec<usize> = (0..g.len()).filter(|&i| g.is_boundary(i)).collect();
        assert_eq!(b, vec![0, 4]);
        assert_eq!(g.point(g.origin())[0], 0.0);
    }

    #[test]
    fn scaled_interval_node_count() {
        let d = make_domain(DomainKind::Interval { half_width: 1.0f64 }).unwrap().scaled(0.2).unwrap();
        assert_relative_eq!(d.boundary_radius(0.0), 1.2);
        let g = build_grid(&d, 0.1).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g.point(24)[0], 1.2);
    }

    #[test]
    fn disk_lattice_matches_enumeration() {
        let d = make_domain(DomainKind::Disk { radius: 1.0 }).unwrap();
        let g = build_grid(&d, 0.25).unwrap();
        let mut expected = 0;
        let mut expected_boundary = 0;
        let inside = |i: i64, j: i64| i * i + j * j <= 16;
        for i in -4i64..=4 {
            for j in -4i64..=4 {
                if inside(i, j) {
                    expected += 1;
                    if !(inside(i + 1, j) && inside(i - 1, j) && inside(i, j + 1) && inside(i, j - 1)) {
                        expected_boundary += 1;
                    }
                }
            }
        }
        assert_eq!(g.len(), expected);
        assert_eq!(g.len() - g.interior_count(), expected_boundary);
        for n in 0..g.len() {
            if !g.is_boundary(n) {
                for axis in 0..2 {
                    assert!(g.neighbor(n, axis, 0).is_some() && g.neighbor(n, axis, 1).is_some());
                }
            }
        }
    }

    #[test]
    fn invalid_domains_are_rejected() {
        assert!(matches!(make_domain(DomainKind::Interval { half_width: 0.0 }), Err(Error::InvalidDomain(_))));
        assert!(matches!(make_domain(DomainKind::Disk { radius: -1.0 }), Err(Error::InvalidDomain(_))));
        assert!(matches!(
            make_domain(DomainKind::RadialStar { profile: vec![1.0, 0.0, 1.0, 1.0] }),
            Err(Error::InvalidDomain(_))
        ));
        let d = make_domain(DomainKind::Disk { radius: 2.0f64 }).unwrap();
        assert!(matches!(d.scaled(-1.0), Err(Error::InvalidScale(_))));
        assert!(matches!(build_grid(&d, 5.0), Err(Error::DegenerateGrid(_))));
    }

    #[test]
    fn scaling_composes() {
        let d = make_domain(DomainKind::Interval { half_width: 1.0f64 }).unwrap();
        assert_eq!(d.scaled(0.0).unwrap(), d);
        let twice = d.scaled(0.1).unwrap().scaled(0.1).unwrap();
        assert_relative_eq!(twice.scale(), 1.21, epsilon = 1e-15);
    }

    #[test]
    fn condition_a_interval_and_disk() {
        let d = make_domain(DomainKind::Interval { half_width: 1.0f64 }).unwrap();
        let c = check_condition_a(&d, &default_r_probe(), 256).unwrap();
        assert!((c.kappa_distance - 1.0).abs() < 1e-12);
        assert!(c.strict_caveat);
        assert!((c.kappa_max - 1.0).abs() < 1e-12);

        let disk = make_domain(DomainKind::Disk { radius: 2.0f64 }).unwrap();
        let c = check_condition_a(&disk, &default_r_probe(), 256).unwrap();
        assert!((c.kappa_distance - 2.0).abs() < 1e-10);
        assert!((c.kappa_ball - 2.0).abs() < 1e-12);
    }

    #[test]
    fn condition_a_radial_profile_matches_brute_force() {
        let n = 256;
        let profile: Vec<f64> = (0..n)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / n as f64;
                1.0 + 0.5 * th.cos().powi(2)
            })
            .collect();
        let min_rho = profile.iter().cloned().fold(f64::INFINITY, f64::min);
        let d = make_domain(DomainKind::RadialStar { profile }).unwrap();
        let c = check_condition_a(&d, &default_r_probe(), 256).unwrap();
        assert!(c.kappa_max > 0.0 && c.kappa_max <= min_rho + 1e-12);

        // independent brute force: dense sampling of the boundary curve as a point cloud
        let rho = |th: f64| 1.0 + 0.5 * th.cos().powi(2);
        let cloud: Vec<[f64; 2]> = (0..20000)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / 20000.0;
                [rho(th) * th.cos(), rho(th) * th.sin()]
            })
            .collect();
        let mut brute = f64::INFINITY;
        for &r in &[1e-2, 1e-1] {
            for k in 0..64 {
                let th = std::f64::consts::TAU * k as f64 / 64.0;
                let x = [(1.0 + r) * rho(th) * th.cos(), (1.0 + r) * rho(th) * th.sin()];
                let dist = cloud.iter().map(|b| ((x[0] - b[0]).powi(2) + (x[1] - b[1]).powi(2)).sqrt()).fold(f64::INFINITY, f64::min);
                brute = brute.min(dist / r);
            }
        }
        assert!((c.kappa_distance - brute).abs() < 0.05 * brute, "{} vs {}", c.kappa_distance, brute);
    }

    #[test]
    fn lattice_mode_rejects_incommensurate_spacing() {
        let d = make_domain(DomainKind::Interval { half_width: 1.0f64 }).unwrap().scaled(0.2).unwrap();
        assert!(build_lattice_grid(&d, 0.005).is_ok());
        assert!(matches!(build_lattice_grid(&d, 0.007), Err(Error::LatticeMismatch { .. })));
    }

    #[test]
    fn nested_lattices_share_nodes() {
        let base = make_domain(DomainKind::Interval { half_width: 1.0f64 }).unwrap();
        let inner = build_lattice_grid(&base, 0.01).unwrap();
        let outer = build_lattice_grid(&base.scaled(0.08).unwrap(), 0.01).unwrap();
        for n in 0..inner.len() {
            let m = outer.node_at(inner.lattice_index(n)).expect("node present");
            assert!((outer.point(m)[0] - inner.point(n)[0]).abs() < 1e-12);
        }
    }
}

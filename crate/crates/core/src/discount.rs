//! Vanishing discount on moving domains: u_lambda solves the discounted problem on (1 + gamma lambda)
//! times the base domain, and u_lambda + c(0) / lambda is pulled back and sent to lambda -> 0.

use rayon::prelude::*;

use crate::curve::{LatticeMode, ScaledFamily};
use crate::ergodic::{onesided_derivatives, sample_face_measures, scale_measure, EigenResult, MatherMeasure, OneSided};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::hjb::solve_discounted_from;
use crate::lagrangian::LagrangianSpec;
use crate::mdp::{policy_truncated, DiscreteMdp, MdpOptions};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::table::Table;

/// Default discount sequence.
pub fn default_lambdas<T: Real>() -> Vec<T> {
    [0.16, 0.08, 0.04, 0.02, 0.01, 0.005].iter().map(|&v| lit(v)).collect()
}

/// Discounted solve on a dilated domain, normalized and pulled back to the base lattice.
#[derive(Debug, Clone)]
pub struct NormalizedField<T> {
    pub lambda: T,
    pub r: T,
    /// (1 + r)^(-2) u_lambda((1 + r) y) + c(0) / lambda on base nodes y
    pub field: Vec<T>,
    pub policy: Vec<usize>,
    /// sup |lambda u_lambda + c(0)| / (lambda (1 + |gamma|))
    pub band_base: T,
    /// sup |lambda u_lambda + c(lambda)| / lambda, when c(lambda) was computed
    pub band_own: Option<T>,
    /// discounted occupation measures started at the tagged vertices, scaled back to the base domain
    pub occupation: Vec<(usize, MatherMeasure<T>)>,
    pub residual: T,
}

/// Limit u^gamma of the normalized fields.
#[derive(Debug, Clone)]
pub struct DiscountLimitResult<T> {
    pub gamma: T,
    /// decreasing
    pub lambdas: Vec<T>,
    pub c0: T,
    pub fields: Vec<NormalizedField<T>>,
    /// sup |F(lambda_i) - F(lambda_{i+1})|
    pub cauchy: Vec<T>,
    pub cauchy_monotone: bool,
    /// order-one Richardson extrapolation of the normalized fields
    pub extrapolated: Vec<T>,
    /// u^gamma = extrapolated - 2 gamma c(0)
    pub limit: Vec<T>,
    /// sup |extrapolated - F(lambda_min)|
    pub richardson_correction: T,
    /// max over nodes of |min_v Q(u^gamma) + c(0)| / exit rate on the base chain
    pub ergodic_residual: T,
}

impl<T: Real> DiscountLimitResult<T> {
    /// Columns lambda, cauchy residual to the next lambda, band constant.
    pub fn to_table(&self, name: &str) -> Table {
        let mut t = Table::new(name, &["lambda", "sup_residual", "band"]);
        for (i, f) in self.fields.iter().enumerate() {
            let c = self.cauchy.get(i).map(|&v| to_f64(v)).unwrap_or(f64::NAN);
            t.push(vec![to_f64(f.lambda), c, to_f64(f.band_base)]);
        }
        t
    }

    /// sup |F(lambda) - reference| along the sequence and for the extrapolated field.
    pub fn distance_to(&self, reference: &[T]) -> (Vec<T>, T) {
        let sup = |a: &[T]| a.iter().zip(reference).fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()));
        (self.fields.iter().map(|f| sup(&f.field)).collect(), sup(&self.extrapolated))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CGammaSample<T> {
    pub gamma: T,
    pub value: T,
    /// max |u^gamma - u^0 - C(gamma)|
    pub defect: T,
}

/// gamma -> C(gamma) = u^gamma - u^0 on sampled slopes.
#[derive(Debug, Clone)]
pub struct CGammaCurve<T> {
    pub samples: Vec<CGammaSample<T>>,
    pub limits: Vec<DiscountLimitResult<T>>,
}

impl<T: Real> CGammaCurve<T> {
    pub fn value(&self, gamma: T) -> Option<T> {
        self.samples.iter().find(|s| s.gamma == gamma).map(|s| s.value)
    }

    pub fn limit(&self, gamma: T) -> Option<&DiscountLimitResult<T>> {
        self.limits.iter().find(|l| l.gamma == gamma)
    }

    pub fn max_defect(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, s| m.max(s.defect))
    }

    /// Largest increase between consecutive samples (zero for a nonincreasing curve).
    pub fn monotonicity_defect(&self) -> T {
        self.samples.windows(2).fold(T::zero(), |m, w| m.max(w[1].value - w[0].value))
    }

    /// (gamma_mid, C(mid) - (C(left) + C(right)) / 2) for equispaced triples; concavity makes these >= 0.
    pub fn midpoint_concavity(&self) -> Vec<(T, T)> {
        let tol = lit::<T>(1e-12);
        self.samples
            .windows(3)
            .filter(|w| ((w[1].gamma - w[0].gamma) - (w[2].gamma - w[1].gamma)).abs() <= tol)
            .map(|w| (w[1].gamma, w[1].value - (w[0].value + w[2].value) / lit(2.0)))
            .collect()
    }

    /// One-sided quotients of C at 0, Richardson-refined when the two nearest samples on a side are
    /// gamma and 2 gamma. Returns (left, right).
    pub fn quotients_at_zero(&self) -> (Option<T>, Option<T>) {
        let side = |positive: bool| {
            let mut pts: Vec<&CGammaSample<T>> =
                self.samples.iter().filter(|s| if positive { s.gamma > T::zero() } else { s.gamma < T::zero() }).collect();
            pts.sort_by(|a, b| a.gamma.abs().partial_cmp(&b.gamma.abs()).unwrap());
            let q = |s: &CGammaSample<T>| s.value / s.gamma;
            match pts.as_slice() {
                [] => None,
                [a] => Some(q(a)),
                [a, b, ..] => {
                    let ratio = b.gamma / a.gamma;
                    if (ratio - lit(2.0)).abs() <= lit(1e-9) {
                        Some(lit::<T>(2.0) * q(a) - q(b))
                    } else {
                        Some(q(a))
                    }
                }
            }
        };
        (side(false), side(true))
    }

    /// Columns gamma, C, defect.
    pub fn to_table(&self, name: &str) -> Table {
        let mut t = Table::new(name, &["gamma", "C", "defect"]);
        for s in &self.samples {
            t.push(vec![to_f64(s.gamma), to_f64(s.value), to_f64(s.defect)]);
        }
        t
    }
}

/// Derivatives of c from the face against difference quotients of C.
#[derive(Debug, Clone, PartialEq)]
pub struct BackForthReport<T> {
    pub c_minus: T,
    pub c_plus: T,
    /// -C'_-(0) and -C'_+(0) quotients
    pub neg_left_quotient: Option<T>,
    pub neg_right_quotient: Option<T>,
    pub mismatch_minus: Option<T>,
    pub mismatch_plus: Option<T>,
    /// min of the gaps in c'_- <= -C'_- <= -C'_+ <= c'_+; negative means violated
    pub ordering_slack: Option<T>,
    /// max |C(gamma) + gamma c'(0)| / |c'(0)|, when the face derivatives agree
    pub linearity_defect: Option<T>,
}

/// Residuals of the measure identities.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureIdentityReport<T> {
    /// <sigma_z, u^0> extrapolated in lambda: origin vertex and max over tagged vertices
    pub a_origin: T,
    pub a_max: T,
    /// (gamma, origin vertex, max over vertices) of gamma <mu, P> + <mu, u^gamma>
    pub b: Vec<(T, T, T)>,
    /// (gamma, max over sampled face measures) of the same expression; should be <= 0
    pub c: Vec<(T, T)>,
}

impl<T: Real> MeasureIdentityReport<T> {
    /// Columns identity (0 = a, 1 = b, 2 = c), gamma, value at the origin vertex, worst value.
    pub fn to_table(&self, name: &str) -> Table {
        let mut t = Table::new(name, &["identity", "gamma", "origin", "worst"]);
        t.push(vec![0.0, 0.0, to_f64(self.a_origin), to_f64(self.a_max)]);
        for &(g, o, m) in &self.b {
            t.push(vec![1.0, to_f64(g), to_f64(o), to_f64(m)]);
        }
        for &(g, m) in &self.c {
            t.push(vec![2.0, to_f64(g), f64::NAN, to_f64(m)]);
        }
        t
    }
}

/// Base ergodic solution and the dilated family shared by the discount-limit pipelines.
#[derive(Debug, Clone)]
pub struct VanishingDiscount<T> {
    pub family: ScaledFamily<T>,
    pub base_mdp: DiscreteMdp<T>,
    pub base: EigenResult<T>,
    /// ergodic solution normalized by <m, u> = 0 with m the stationary measure
    pub u0: Vec<T>,
    pub onesided: OneSided<T>,
    vertices: Vec<usize>,
}

fn richardson<T: Real>(l_a: T, f_a: T, l_b: T, f_b: T) -> T {
    (l_a * f_b - l_b * f_a) / (l_a - l_b)
}

impl<T: Real> VanishingDiscount<T> {
    pub fn new(spec: &LagrangianSpec<T>, domain: &Domain<T>, h: T, opts: &MdpOptions<T>) -> Result<Self> {
        let family = ScaledFamily::new(spec, domain, h, LatticeMode::Dilated, opts)?;
        let (base_mdp, base) = family.ergodic(T::zero())?;
        let shift: T = base.stationary.iter().zip(&base.u).map(|(&m, &u)| m * u).sum();
        let u0 = base.u.iter().map(|&u| u - shift).collect();
        let onesided = onesided_derivatives(&base_mdp, &base)?;
        let g = &family.base_grid;
        let a = domain.boundary_radius(T::zero());
        let nearest = |x: T| {
            (0..g.len())
                .min_by(|&i, &j| {
                    let di = (g.point(i)[0] - x).abs() + g.point(i)[1].abs();
                    let dj = (g.point(j)[0] - x).abs() + g.point(j)[1].abs();
                    di.partial_cmp(&dj).unwrap()
                })
                .unwrap()
        };
        let half = lit::<T>(0.5);
        let mut vertices = vec![g.origin(), nearest(-a), nearest(a), nearest(-a * half), nearest(a * half)];
        vertices.dedup();
        Ok(Self { family, base_mdp, base, u0, onesided, vertices })
    }

    pub fn c0(&self) -> T {
        self.base.c
    }

    /// Vertices z at which discounted occupation measures are started; the origin comes first.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// Solves the discounted problem with discount `lambda` on (1 + gamma lambda) times the domain. With
    /// `own_band` the eigenvalue of the dilated domain is computed too.
    pub fn changing_domain_solve(&self, gamma: T, lambda: T, own_band: bool) -> Result<NormalizedField<T>> {
        self.normalized(gamma, lambda, own_band, None)
    }

    fn normalized(&self, gamma: T, lambda: T, own_band: bool, init: Option<&[usize]>) -> Result<NormalizedField<T>> {
        if !(lambda > T::zero()) {
            return Err(Error::InvalidParameter(format!("discount {lambda} must be positive")));
        }
        let r = gamma * lambda;
        let s = T::one() + r;
        let mdp = self.family.mdp(r)?;
        let v = solve_discounted_from(&mdp, lambda, self.family.opts.tol, init)?;
        if policy_truncated(&mdp, &v.policy) {
            log::warn!("discounted policy at lambda = {} reaches the velocity truncation", to_f64(lambda));
        }
        let c0 = self.c0();
        let field = v.u.iter().map(|&u| u / (s * s) + c0 / lambda).collect();
        let sup = |c: T| v.u.iter().fold(T::zero(), |m, &u| m.max((lambda * u + c).abs()));
        let band_base = sup(c0) / (lambda * (T::one() + gamma.abs()));
        let band_own = if own_band {
            let (_, res) = self.family.ergodic(r)?;
            Some(sup(res.c) / lambda)
        } else {
            None
        };
        if band_base > lit(1e3) {
            log::warn!("discount band constant {} is large; the scheme may be inconsistent", to_f64(band_base));
        }
        let chain = mdp.chain(&v.policy);
        let mut occupation = Vec::with_capacity(self.vertices.len());
        for &z in &self.vertices {
            let mass = chain.occupation_measure(lambda, z)?;
            let mu = MatherMeasure::from_policy(&mdp, &v.policy, &mass, s);
            occupation.push((z, scale_measure(&mu, r, &self.family.base_grid)?));
        }
        Ok(NormalizedField { lambda, r, field, policy: v.policy, band_base, band_own, occupation, residual: v.residual })
    }

    /// Runs the discount sequence for one slope and extrapolates the normalized fields.
    pub fn ugamma_limit(&self, gamma: T, lambdas: &[T]) -> Result<DiscountLimitResult<T>> {
        let mut lambdas = lambdas.to_vec();
        lambdas.sort_by(|a, b| b.partial_cmp(a).expect("finite discount"));
        lambdas.dedup();
        if lambdas.len() < 2 {
            return Err(Error::InvalidParameter("need at least two discounts".into()));
        }
        let mut fields: Vec<NormalizedField<T>> = Vec::with_capacity(lambdas.len());
        for &l in &lambdas {
            let init = fields.last().map(|f| f.policy.as_slice());
            fields.push(self.normalized(gamma, l, false, init)?);
        }
        let sup_diff = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()));
        let cauchy: Vec<T> = fields.windows(2).map(|w| sup_diff(&w[0].field, &w[1].field)).collect();
        let cauchy_monotone = cauchy.windows(2).all(|w| w[1] <= w[0]);
        if cauchy.last() > cauchy.first() {
            return Err(Error::NotCauchy(cauchy.iter().map(|&v| to_f64(v)).collect()));
        }
        let (fa, fb) = (&fields[fields.len() - 2], &fields[fields.len() - 1]);
        let extrapolated: Vec<T> = fa
            .field
            .iter()
            .zip(&fb.field)
            .map(|(&a, &b)| richardson(fa.lambda, a, fb.lambda, b))
            .collect();
        let c0 = self.c0();
        let limit: Vec<T> = extrapolated.iter().map(|&u| u - lit::<T>(2.0) * gamma * c0).collect();
        let richardson_correction = sup_diff(&extrapolated, &fb.field);
        let ergodic_residual = self.ergodic_residual(&limit);
        Ok(DiscountLimitResult {
            gamma,
            lambdas,
            c0,
            fields,
            cauchy,
            cauchy_monotone,
            extrapolated,
            limit,
            richardson_correction,
            ergodic_residual,
        })
    }

    /// max over nodes of |min_v (L + A^v u) + c(0)| / exit rate of the minimizer on the base chain.
    pub fn ergodic_residual(&self, u: &[T]) -> T {
        let mdp = &self.base_mdp;
        let rho = -self.c0();
        (0..mdp.len())
            .map(|n| {
                let mut best = (T::infinity(), T::one());
                for &k in mdp.actions(n) {
                    let r = mdp.rates(n, k).expect("admissible action");
                    let q = mdp.q_value(n, &r, mdp.stage_cost(n, k), u);
                    if q < best.0 {
                        best = (q, r.iter().flatten().fold(T::zero(), |a, &b| a + b));
                    }
                }
                (best.0 - rho).abs() / best.1.max(T::one())
            })
            .fold(T::zero(), T::max)
    }

    /// C(gamma) on `gammas`, which must contain 0; the gamma = 0 limit from the same runs is u^0.
    pub fn c_of_gamma(&self, gammas: &[T], lambdas: &[T]) -> Result<CGammaCurve<T>> {
        let mut gammas = gammas.to_vec();
        gammas.sort_by(|a, b| a.partial_cmp(b).expect("finite slope"));
        gammas.dedup();
        if !gammas.iter().any(|g| *g == T::zero()) {
            return Err(Error::InvalidParameter("slope samples must include 0".into()));
        }
        let limits: Vec<DiscountLimitResult<T>> =
            gammas.par_iter().map(|&g| self.ugamma_limit(g, lambdas)).collect::<Result<_>>()?;
        let u0 = &limits.iter().find(|l| l.gamma == T::zero()).expect("zero slope").limit;
        let n = from_usize::<T>(u0.len());
        let samples = limits
            .iter()
            .map(|l| {
                let diff: Vec<T> = l.limit.iter().zip(u0).map(|(&a, &b)| a - b).collect();
                let value = if l.gamma == T::zero() { T::zero() } else { diff.iter().copied().sum::<T>() / n };
                let defect = diff.iter().fold(T::zero(), |m, &d| m.max((d - value).abs()));
                if defect > lit(1e-3) {
                    log::warn!("constancy defect {} at gamma = {}", to_f64(defect), to_f64(l.gamma));
                }
                CGammaSample { gamma: l.gamma, value, defect }
            })
            .collect();
        Ok(CGammaCurve { samples, limits })
    }

    /// Compares -C'_pm(0) with the face derivatives c'_pm(0).
    pub fn back_forth_check(&self, curve: &CGammaCurve<T>) -> BackForthReport<T> {
        let (lo, hi) = (self.onesided.minus, self.onesided.plus);
        let (left, right) = curve.quotients_at_zero();
        let (nl, nr) = (left.map(|q| -q), right.map(|q| -q));
        let rel = |a: T, b: T| (a - b).abs() / b.abs().max(T::min_positive_value());
        let ordering_slack = match (nl, nr) {
            (Some(a), Some(b)) => Some((a - lo).min(b - a).min(hi - b)),
            _ => None,
        };
        let scale = lo.abs().max(hi.abs()).max(T::min_positive_value());
        let linearity_defect = (rel(lo, hi) <= lit(1e-6)).then(|| {
            let d = (lo + hi) / lit(2.0);
            curve.samples.iter().fold(T::zero(), |m, s| m.max((s.value + s.gamma * d).abs())) / scale
        });
        BackForthReport {
            c_minus: lo,
            c_plus: hi,
            neg_left_quotient: nl,
            neg_right_quotient: nr,
            mismatch_minus: nl.map(|q| rel(q, lo)),
            mismatch_plus: nr.map(|q| rel(q, hi)),
            ordering_slack,
            linearity_defect,
        }
    }

    /// Residuals of <sigma, u^0> = 0, gamma <mu, P> + <mu, u^gamma> = 0 for the discounted measures of
    /// each slope, and of the inequality for `face_samples` random optimal-face measures.
    pub fn measure_identity_check(&self, curve: &CGammaCurve<T>, face_samples: usize, seed: u64) -> Result<MeasureIdentityReport<T>> {
        let zero = curve.limit(T::zero()).ok_or_else(|| Error::InvalidParameter("missing zero slope".into()))?;
        let u0 = &zero.limit;
        let spec = &self.family.spec;
        // pairing of the tagged measures of the last two discounts, extrapolated in lambda
        let extrapolate = |l: &DiscountLimitResult<T>, g: &dyn Fn(&MatherMeasure<T>) -> T| -> Vec<T> {
            let (fa, fb) = (&l.fields[l.fields.len() - 2], &l.fields[l.fields.len() - 1]);
            fa.occupation
                .iter()
                .zip(&fb.occupation)
                .map(|((_, ma), (_, mb))| richardson(fa.lambda, g(ma), fb.lambda, g(mb)))
                .collect()
        };
        let a = extrapolate(zero, &|m| m.pair_indexed(|n, _| u0[n]));
        let worst = |v: &[T]| v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        let mut b = Vec::new();
        let mut c = Vec::new();
        let faces = sample_face_measures(&self.base_mdp, &self.base, face_samples, seed)?;
        for l in &curve.limits {
            let ug = &l.limit;
            let gamma = l.gamma;
            let expr = |m: &MatherMeasure<T>| {
                gamma * m.pair(|x, v| spec.radial_gradient_pairing(x, v)) + m.pair_indexed(|n, _| ug[n])
            };
            if gamma != T::zero() {
                let r = extrapolate(l, &expr);
                b.push((gamma, r[0].abs(), worst(&r)));
            }
            let face_max = faces.iter().map(expr).fold(T::neg_infinity(), T::max);
            c.push((gamma, face_max));
        }
        Ok(MeasureIdentityReport { a_origin: a[0].abs(), a_max: worst(&a), b, c })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_domain, DomainKind};
    use crate::lagrangian::RunningCost;

    fn setup(cost: RunningCost<f64>) -> VanishingDiscount<f64> {
        let d = make_domain(DomainKind::Interval { half_width: 1.0 }).unwrap();
        let s = LagrangianSpec::new(3.0, 0.1, cost).unwrap();
        VanishingDiscount::new(&s, &d, 0.05, &MdpOptions { dv: 0.02, ..Default::default() }).unwrap()
    }

    #[test]
    fn zero_slope_keeps_the_domain() {
        let vd = setup(RunningCost::bump(1.0, 0.5));
        let f = vd.changing_domain_solve(0.0, 0.04, true).unwrap();
        assert_eq!(f.r, 0.0);
        assert!(f.band_own.unwrap() < 10.0);
        for (_, m) in &f.occupation {
            assert!((m.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_shift_cancels() {
        let a = setup(RunningCost::bump(1.0, 0.5));
        let b = setup(RunningCost::bump(1.0, 0.5).shifted(2.0));
        let fa = a.changing_domain_solve(0.0, 0.02, false).unwrap();
        let fb = b.changing_domain_solve(0.0, 0.02, false).unwrap();
        for (x, y) in fa.field.iter().zip(&fb.field) {
            assert!((x - y).abs() < 1e-8);
        }
        // on a moving domain the shift leaves K ((1 + r)^-2 - 1) / lambda, removed by the -2 gamma c(0) term
        let (gamma, lambda) = (0.5, 0.02);
        let fa = a.changing_domain_solve(gamma, lambda, false).unwrap();
        let fb = b.changing_domain_solve(gamma, lambda, false).unwrap();
        let expected = 2.0 * ((1.0 + gamma * lambda).powi(-2) - 1.0) / lambda;
        for (x, y) in fa.field.iter().zip(&fb.field) {
            assert!((y - x - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_slope_limit_is_the_normalized_ergodic_solution() {
        let vd = setup(RunningCost::bump(1.0, 0.5));
        let l = vd.ugamma_limit(0.0, &default_lambdas()).unwrap();
        let (seq, ext) = l.distance_to(&vd.u0);
        assert!(seq.windows(2).all(|w| w[1] < w[0]));
        assert!(ext < 1e-3);
    }

    #[test]
    fn slope_grid_must_contain_zero() {
        let vd = setup(RunningCost::zero());
        assert!(matches!(vd.c_of_gamma(&[0.5], &[0.02, 0.01]), Err(Error::InvalidParameter(_))));
    }
}

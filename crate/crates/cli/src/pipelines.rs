//! Pipeline orchestration: each stage fills tables and ledger checks; a failing stage keeps what it had.

use std::f64::consts::PI;
use std::time::Instant;

use hjb_ergodic::curve::{eigencurve, semiconvexity_probe, LatticeMode, ScaledFamily};
use hjb_ergodic::discount::VanishingDiscount;
use hjb_ergodic::ergodic::{ergodic_solve, onesided_derivatives};
use hjb_ergodic::geometry::{build_grid, norm, DomainKind, ScalingSchedule};
use hjb_ergodic::hjb::{discount_eigen_estimate, solve_discounted_adaptive};
use hjb_ergodic::hopf_cole::{
    disk_eigenvalue, eigencurve_p2, principal_eigenpair, rayleigh_quotient, shape_derivative, Perturbation,
};
use hjb_ergodic::table::Table;
use hjb_ergodic::{Domain, LagrangianSpec, Result as CoreResult, RunningCost};
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, CostConfig, ExperimentConfig, Pipeline};
use crate::report::{Check, PipelineResult, Provenance, RunReport};

struct Stage {
    name: &'static str,
    tables: Vec<Table>,
    checks: Vec<Check>,
    grids: Vec<(String, usize)>,
}

impl Stage {
    fn new(name: &'static str) -> Self {
        Self { name, tables: Vec::new(), checks: Vec::new(), grids: Vec::new() }
    }

    /// Records `measured <= tolerance`.
    fn at_most(&mut self, property: &str, measured: f64, tolerance: f64) {
        self.push(property, measured, tolerance, measured <= tolerance, "");
    }

    /// Records `measured >= bound`.
    fn at_least(&mut self, property: &str, measured: f64, bound: f64) {
        self.push(property, measured, bound, measured >= bound, "lower bound");
    }

    fn push(&mut self, property: &str, measured: f64, tolerance: f64, pass: bool, note: &str) {
        self.checks.push(Check {
            pipeline: self.name.to_string(),
            property: property.to_string(),
            measured,
            tolerance,
            pass,
            note: note.to_string(),
        });
    }
}

struct Setup {
    domain: Domain,
    cost: RunningCost,
    constant: Option<f64>,
    cfg: ExperimentConfig,
}

impl Setup {
    fn spec(&self) -> CoreResult<LagrangianSpec> {
        LagrangianSpec::new(self.cfg.lagrangian.p, self.cfg.lagrangian.epsilon, self.cost.clone())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn discounted(s: &Setup, st: &mut Stage) -> CoreResult<()> {
    let spec = s.spec()?;
    let opts = s.cfg.mdp_options();
    let h = s.cfg.grid.h;
    let mut refinement = Table::new("refinement", &["h", "nodes", "c", "duality_gap"]);
    let mut base_c = None;
    for k in 0..=s.cfg.grid.refinements {
        let hk = h / f64::from(1u32 << k);
        let grid = build_grid(&s.domain, hk)?;
        st.grids.push((format!("h={hk}"), grid.len()));
        let (_, res) = ergodic_solve(&spec, &grid, None, &opts)?;
        refinement.push(vec![hk, grid.len() as f64, res.c, res.duality_gap]);
        if k == 0 {
            st.at_most("duality gap", res.duality_gap, 1e-8);
            base_c = Some(res.c);
        }
    }
    st.tables.push(refinement);
    let c = base_c.expect("base level solved");
    let est = discount_eigen_estimate(&spec, &s.domain, &s.cfg.schedule.deltas, h, &opts)?;
    let mut t = Table::new("discount_estimate", &["delta", "minus_delta_u0", "extrapolant"]);
    for (i, (d, v)) in est.samples.iter().enumerate() {
        let e = if i == 0 { f64::NAN } else { est.extrapolants[i - 1] };
        t.push(vec![*d, *v, e]);
    }
    st.tables.push(t);
    st.at_most("discounted constant approaches the eigenvalue", (est.estimate - c).abs(), 1e-3);
    let grid = build_grid(&s.domain, h)?;
    let smallest = *s.cfg.schedule.deltas.last().expect("validated");
    let (_, field) = solve_discounted_adaptive(&spec, &grid, smallest, &opts)?;
    st.at_most("discounted residual", field.residual, 1e-8);
    st.tables.push(field.to_table("value_field"));
    Ok(())
}

fn eigencurve_stage(s: &Setup, st: &mut Stage) -> CoreResult<()> {
    let spec = s.spec()?;
    let sch = &s.cfg.schedule;
    let schedule = ScalingSchedule::new(sch.gamma, sch.lambdas.clone())?;
    let curve = eigencurve(&spec, &s.domain, &schedule, s.cfg.grid.h, LatticeMode::Dilated, &s.cfg.mdp_options())?;
    st.grids.push(("eigencurve".into(), build_grid(&s.domain, s.cfg.grid.h)?.len()));
    st.tables.push(curve.to_table("curve"));
    st.at_most("failed samples", curve.failures() as f64, 0.0);
    let pts = curve.points();
    let defect = pts
        .windows(2)
        .map(|w| if sch.gamma >= 0.0 { w[0].1 - w[1].1 } else { w[1].1 - w[0].1 })
        .fold(0.0, f64::max);
    st.at_most("nondecreasing in the dilation", defect, 0.0);
    let gap = curve.samples.iter().filter_map(|x| x.duality_gap).fold(0.0, f64::max);
    st.at_most("duality gap", gap, 1e-8);
    for x in &curve.samples {
        if let (Some(lo), Some(hi)) = (x.dc_minus, x.dc_plus) {
            st.push(&format!("one-sided derivatives ordered at lambda={}", x.lambda), lo - hi, 0.0, lo <= hi, "");
        }
    }
    if let Some(k) = s.constant {
        let fits = curve.constant_cost_fits(k).expect("lambda = 0 sampled");
        st.at_most("scaling law for constant cost", fits.scaling_law, 1e-2);
        st.at_most("derivative law for constant cost", fits.derivative_scaled, 1e-8);
    }
    let mut d2 = Table::new("second_differences", &["lambda", "second_difference"]);
    for (l, v) in curve.second_differences() {
        d2.push(vec![l, v]);
    }
    st.tables.push(d2);
    if let Ok(m) = semiconvexity_probe(&curve) {
        st.push("semiconvexity probe", m, f64::NAN, m.is_finite(), "diagnostic");
    }
    Ok(())
}

fn derivatives(s: &Setup, st: &mut Stage) -> CoreResult<()> {
    let spec = s.spec()?;
    let fam = ScaledFamily::new(&spec, &s.domain, s.cfg.grid.h, LatticeMode::Dilated, &s.cfg.mdp_options())?;
    st.grids.push(("base".into(), fam.base_grid.len()));
    let (mdp, res) = fam.ergodic(0.0)?;
    let d = onesided_derivatives(&mdp, &res)?;
    let mu = &res.measure;
    let pairing = mu.pair_indexed(|n, k| mdp.pairing(n, k));
    let mut t = Table::new(
        "derivatives",
        &["c", "dc_minus", "dc_plus", "pairing", "duality_gap", "stationarity_residual", "tight_pairs"],
    );
    t.push(vec![res.c, d.minus, d.plus, pairing, res.duality_gap, res.stationarity_residual, d.tight_pairs as f64]);
    st.tables.push(t);
    st.tables.push(mu.to_table("mather_measure", mdp.grid().dim()));
    st.at_most("duality gap", res.duality_gap, 1e-8);
    st.at_most("stationarity residual", res.stationarity_residual, 1e-8);
    st.at_most("measure normalization", res.normalization_residual, 1e-8);
    st.at_least("measure nonnegative", mu.min_mass(), 0.0);
    let kinetic = mu.pair(|_, v| norm(v).powf(spec.q()));
    let fmax = mdp.grid().points().iter().map(|x| s.cost.value(x).abs()).fold(0.0, f64::max);
    // Equality when f vanishes, so allow for roundoff.
    let bound = (fmax + res.c.abs()) / spec.c_p();
    st.at_most("kinetic moment bound", kinetic, bound * (1.0 + 1e-10) + 1e-14);
    st.push("one-sided derivatives ordered", d.minus - d.plus, 0.0, d.minus <= d.plus, "");
    if let Some(k) = s.constant {
        st.at_least("radial pairing nonnegative", pairing, -1e-8);
        st.at_most("derivative identity", (d.plus + spec.q() * (res.c + k)).abs(), 1e-8);
        st.at_most("one-sided derivatives agree", (d.plus - d.minus).abs(), 1e-8);
    }
    Ok(())
}

fn discount_limit(s: &Setup, st: &mut Stage) -> CoreResult<()> {
    let spec = s.spec()?;
    let vd = VanishingDiscount::new(&spec, &s.domain, s.cfg.grid.h, &s.cfg.mdp_options())?;
    st.grids.push(("base".into(), vd.family.base_grid.len()));
    let curve = vd.c_of_gamma(&s.cfg.schedule.slopes, &s.cfg.schedule.deltas)?;
    st.tables.push(curve.to_table("c_gamma"));
    let zero = curve.limit(0.0).expect("zero slope present");
    st.tables.push(zero.to_table("discount_sequence"));
    let (seq, ext) = zero.distance_to(&vd.u0);
    let mut d = Table::new("distance_to_limit", &["lambda", "sup_distance"]);
    for (f, v) in zero.fields.iter().zip(&seq) {
        d.push(vec![f.lambda, *v]);
    }
    st.tables.push(d);
    let growth = seq.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    st.push("distance to the limit decreases", growth, 0.0, growth < 0.0, "largest step change");
    st.at_most("extrapolated distance to the limit", ext, 1e-3);
    let bf = vd.back_forth_check(&curve);
    let mut t = Table::new("back_forth", &["dc_minus", "dc_plus", "neg_left_quotient", "neg_right_quotient"]);
    let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
    t.push(vec![bf.c_minus, bf.c_plus, nan(bf.neg_left_quotient), nan(bf.neg_right_quotient)]);
    st.tables.push(t);
    if let Some(slack) = bf.ordering_slack {
        st.at_least("back-forth ordering", slack, -1e-3);
    }
    if rel(bf.c_minus, bf.c_plus) <= 1e-6 {
        for (name, m) in [("back-forth left quotient", bf.mismatch_minus), ("back-forth right quotient", bf.mismatch_plus)] {
            if let Some(m) = m {
                st.at_most(name, m, 2e-2);
            }
        }
    }
    let ids = vd.measure_identity_check(&curve, 5, 11)?;
    st.tables.push(ids.to_table("measure_identities"));
    st.at_most("occupation measure pairs to zero with the limit", ids.a_max, 1e-4);
    let b = ids.b.iter().map(|x| x.2).fold(0.0, f64::max);
    st.at_most("discounted measure identity", b, 1e-3);
    Ok(())
}

fn hopf_cole(s: &Setup, st: &mut Stage) -> CoreResult<()> {
    let eps = s.cfg.lagrangian.epsilon;
    let h = s.cfg.grid.h;
    let pair = principal_eigenpair(&s.domain, &s.cost, eps, h)?;
    st.grids.push(("linear".into(), pair.grid.len()));
    let curve = eigencurve_p2(&s.domain, &s.cost, eps, &s.cfg.schedule.linear_lambdas, h)?;
    st.tables.push(curve.to_table());
    st.tables.push(pair.boundary_table());
    let min_w = pair.w.iter().zip(&pair.dirichlet).filter(|(_, d)| !**d).map(|(w, _)| *w).fold(f64::INFINITY, f64::min);
    st.push("eigenfunction positive", min_w, 0.0, min_w > 0.0, "minimum interior value");
    st.at_most("eigen residual", pair.residual, 1e-8);
    let rq = rayleigh_quotient(&pair.w, &s.cost, eps, &pair.grid, &pair.dirichlet)?;
    st.at_most("energy equals eigenvalue", (rq - pair.eigenvalue).abs(), 1e-10 * (1.0 + pair.eigenvalue.abs()));
    let rate = shape_derivative(&pair, &Perturbation::Identity);
    let disk = matches!(s.domain.kind(), DomainKind::Disk { .. });
    let rate_tol = if disk { 5e-2 } else { 1e-2 };
    let rel_h = h / s.domain.outer_radius();
    st.at_most("boundary formula matches difference quotient", curve.mismatch, f64::max(1e-2, 10.0 * rel_h * rel_h));
    if let Some(k) = s.constant {
        let (closed, tol) = match s.domain.kind() {
            DomainKind::Interval { half_width } => (eps * eps * PI * PI / (4.0 * half_width * half_width), 1e-3),
            DomainKind::Disk { radius } => (disk_eigenvalue(eps, *radius), 3e-2),
            DomainKind::RadialStar { .. } => unreachable!("rejected by the solver"),
        };
        st.at_most("closed-form eigenvalue", rel(pair.eigenvalue, closed + k), tol);
        st.at_most("closed-form shape derivative", rel(rate, -2.0 * closed), rate_tol);
        st.at_most("closed-form second derivative", rel(curve.fd_second, 6.0 * closed), 3e-2);
    }
    Ok(())
}

/// Runs the selected pipelines. Validation errors abort before any solve.
pub fn run_experiment(cfg: &ExperimentConfig, timing: bool) -> Result<RunReport, ConfigError> {
    cfg.validate()?;
    let start = Instant::now();
    let setup = Setup {
        domain: cfg.domain.build()?,
        cost: cfg.lagrangian.f.build(),
        constant: match cfg.lagrangian.f {
            CostConfig::Constant { value } => Some(value),
            _ => None,
        },
        cfg: cfg.clone(),
    };
    let mut pipelines = Vec::new();
    let mut ledger = Vec::new();
    let mut grid_sizes = Vec::new();
    for p in cfg.pipeline.stages() {
        let mut st = Stage::new(p.name());
        log::info!("running {}", p.name());
        let out = match p {
            Pipeline::Discounted => discounted(&setup, &mut st),
            Pipeline::Eigencurve => eigencurve_stage(&setup, &mut st),
            Pipeline::Derivatives => derivatives(&setup, &mut st),
            Pipeline::DiscountLimit => discount_limit(&setup, &mut st),
            Pipeline::HopfCole => hopf_cole(&setup, &mut st),
            Pipeline::FullSuite => unreachable!("expanded by stages()"),
        };
        let failure = out.err().map(|e| {
            log::error!("{} failed: {e}", p.name());
            e.to_string()
        });
        ledger.extend(st.checks);
        grid_sizes.extend(st.grids.into_iter().map(|(g, n)| (format!("{}:{g}", p.name()), n)));
        pipelines.push(PipelineResult { name: p.name().to_string(), tables: st.tables, failure });
    }
    let config_hash = hex::encode(Sha256::digest(cfg.canonical_json().as_bytes()));
    let wall_time = timing.then(|| start.elapsed().as_secs_f64());
    Ok(RunReport { pipelines, ledger, provenance: Provenance { config_hash, grid_sizes, wall_time } })
}

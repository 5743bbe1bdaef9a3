//! Acceptance run: twelve quantitative checks, one PASS/FAIL line each. Exits nonzero if any check fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use hjb_ergodic::curve::{eigencurve, semiconvexity_probe, CurveSample, EigenCurve, LatticeMode, ScaledFamily};
use hjb_ergodic::discount::{default_lambdas, CGammaCurve, VanishingDiscount};
use hjb_ergodic::ergodic::{ergodic_solve, onesided_derivatives};
use hjb_ergodic::geometry::{make_domain, DomainKind, ScalingSchedule};
use hjb_ergodic::hjb::nested_domain_sweep;
use hjb_ergodic::hopf_cole::{eigencurve_p2, principal_eigenpair, shape_derivative, Perturbation};
use hjb_ergodic::mdp::MdpOptions;
use hjb_ergodic::{Domain, LagrangianSpec, Result, RunningCost};

const P: f64 = 3.0;
const EPS: f64 = 0.1;
const H: f64 = 1.0 / 200.0;

fn q() -> f64 {
    P / (P - 1.0)
}

fn unit_interval() -> Domain {
    make_domain(DomainKind::Interval { half_width: 1.0 }).unwrap()
}

fn catalog() -> Vec<(&'static str, RunningCost)> {
    vec![
        ("constant", RunningCost::constant(0.5)),
        ("affine", RunningCost::affine(0.0, [0.5, 0.0])),
        ("bump", RunningCost::bump(1.0, 0.5)),
        ("cosine", RunningCost::cosine(1.0, PI)),
    ]
}

fn spec(cost: &RunningCost) -> LagrangianSpec {
    LagrangianSpec::new(P, EPS, cost.clone()).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

/// Curves on a common lambda grid; sub-grids are read off by filtering.
struct Curves {
    curves: Vec<(&'static str, EigenCurve<f64>)>,
}

impl Curves {
    fn compute() -> Result<Self> {
        let mut curves = Vec::new();
        for (name, cost) in catalog() {
            let mut lambdas: Vec<f64> = (-8..=8).map(|k| k as f64 * 0.04).collect();
            lambdas.extend([-0.02, 0.02]);
            if name == "cosine" {
                lambdas.extend([-0.06, 0.06]);
            }
            let schedule = ScalingSchedule::new(1.0, lambdas)?;
            let c = eigencurve(&spec(&cost), &unit_interval(), &schedule, H, LatticeMode::Dilated, &MdpOptions::default())?;
            curves.push((name, c));
        }
        Ok(Self { curves })
    }

    fn get(&self, name: &str) -> &EigenCurve<f64> {
        &self.curves.iter().find(|(n, _)| *n == name).unwrap().1
    }
}

fn restrict(curve: &EigenCurve<f64>, keep: impl Fn(f64) -> bool) -> EigenCurve<f64> {
    let samples: Vec<CurveSample<f64>> = curve.samples.iter().filter(|s| keep(s.lambda)).cloned().collect();
    EigenCurve { samples, ..curve.clone() }
}

fn on_step(l: f64, step: f64, n: i64) -> bool {
    let k = (l / step).round();
    (l - k * step).abs() < 1e-12 && k.abs() <= n as f64
}

fn scaling_law() -> Result<Outcome> {
    let target = 1.2f64.powf(-1.5);
    let mut ratios = Vec::new();
    let t = Instant::now();
    for h in [1.0 / 200.0, 1.0 / 400.0] {
        let schedule = ScalingSchedule::new(1.0, vec![0.0, 0.2])?;
        let c = eigencurve(&spec(&RunningCost::zero()), &unit_interval(), &schedule, h, LatticeMode::FixedSpacing, &MdpOptions::default())?;
        ratios.push(c.value_at(0.2).unwrap() / c.value_at(0.0).unwrap());
    }
    let secs = t.elapsed().as_secs_f64();
    let e: Vec<f64> = ratios.iter().map(|r| (r / target - 1.0).abs()).collect();
    outcome(
        e[0] <= 0.01 && e[1] <= 0.003 && secs < 60.0,
        format!(
            "ratio {:.6} (h=1/200, rel err {:.2e} <= 1e-2), {:.6} (h=1/400, rel err {:.2e} <= 3e-3), target {target:.5}, {secs:.1}s",
            ratios[0], e[0], ratios[1], e[1]
        ),
    )
}

fn derivative_identity() -> Result<Outcome> {
    let mut worst_sum: f64 = 0.0;
    let mut worst_split: f64 = 0.0;
    let mut parts = Vec::new();
    for h in [1.0 / 50.0, H] {
        let fam = ScaledFamily::new(&spec(&RunningCost::zero()), &unit_interval(), h, LatticeMode::Dilated, &MdpOptions::default())?;
        let (mdp, res) = fam.ergodic(0.0)?;
        let d = onesided_derivatives(&mdp, &res)?;
        let sum = (d.plus + q() * res.c).abs();
        let split = (d.plus - d.minus).abs();
        worst_sum = worst_sum.max(sum);
        worst_split = worst_split.max(split);
        parts.push(format!("h={h}: c'+={:.10} qc={:.10}", d.plus, -q() * res.c));
    }
    outcome(
        worst_sum <= 1e-8 && worst_split <= 1e-8,
        format!("|c'+ + q c| = {worst_sum:.2e}, |c'+ - c'-| = {worst_split:.2e} (<= 1e-8); {}", parts.join("; ")),
    )
}

fn derivative_vs_curve(curves: &Curves) -> Result<Outcome> {
    let c = curves.get("bump");
    let s0 = c.samples.iter().find(|s| s.lambda == 0.0).unwrap();
    let (lo, hi) = (s0.dc_minus.unwrap(), s0.dc_plus.unwrap());
    let fd = (c.value_at(0.02).unwrap() - c.value_at(-0.02).unwrap()) / 0.04;
    let (a, b) = (lo - 0.05 * lo.abs(), hi + 0.05 * hi.abs());
    outcome(fd >= a && fd <= b, format!("centered difference {fd:.6} in [{a:.6}, {b:.6}] (c'- {lo:.6}, c'+ {hi:.6})"))
}

fn shift_exactness() -> Result<Outcome> {
    let opts = MdpOptions::default();
    let fam_grid = hjb_ergodic::geometry::build_grid(&unit_interval(), H)?;
    let mut worst: f64 = 0.0;
    for (_, cost) in catalog() {
        let s = spec(&cost);
        let vs = opts.velocity_set(&s, &fam_grid)?;
        let (_, base) = ergodic_solve(&s, &fam_grid, Some(vs.clone()), &opts)?;
        for k in [-3.0, 1.0, 7.0] {
            let (_, shifted) = ergodic_solve(&s.with_cost(cost.shifted(k)), &fam_grid, Some(vs.clone()), &opts)?;
            worst = worst.max((shifted.c - (base.c - k)).abs());
        }
    }
    outcome(worst <= 1e-10, format!("max |c(f+K) - c(f) + K| = {worst:.2e} over 4 costs x K in {{-3, 1, 7}} (<= 1e-10)"))
}

fn monotone_lipschitz(curves: &Curves) -> Result<Outcome> {
    let defaults = ScalingSchedule::<f64>::default_grid(1.0).lambdas;
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, c) in &curves.curves {
        let on_default = restrict(c, |l| defaults.iter().any(|d| (d - l).abs() < 1e-12));
        let coarse = restrict(c, |l| on_step(l, 0.08, 4)).lipschitz_estimate();
        let fine = restrict(c, |l| on_step(l, 0.04, 8)).lipschitz_estimate();
        let mono = on_default.monotonicity_defect();
        let drift = (coarse - fine).abs() / fine.abs().max(f64::MIN_POSITIVE);
        let ok = on_default.failures() == 0 && mono <= 0.0 && drift <= 0.2;
        pass &= ok;
        parts.push(format!("{name}: decrease {mono:.1e}, max quotient {coarse:.4}/{fine:.4} (drift {:.1}%)", drift * 100.0));
    }
    outcome(pass, parts.join("; "))
}

fn lp_invariants() -> Result<Outcome> {
    let opts = MdpOptions::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, cost) in catalog() {
        let s = spec(&cost);
        let fam = ScaledFamily::new(&s, &unit_interval(), H, LatticeMode::Dilated, &opts)?;
        let (mdp, res) = fam.ergodic(0.0)?;
        let mu = &res.measure;
        let kinetic = mu.pair(|_, v| hjb_ergodic::geometry::norm(v).powf(s.q()));
        let fmax = mdp.grid().points().iter().map(|x| cost.value(x).abs()).fold(0.0, f64::max);
        let bound = (fmax + res.c.abs()) / s.c_p();
        let pairing = mu.pair_indexed(|n, k| mdp.pairing(n, k));
        let mut ok = res.duality_gap <= 1e-8
            && mu.min_mass() >= 0.0
            && res.normalization_residual <= 1e-12
            && res.stationarity_residual <= 1e-8
            && kinetic <= bound;
        if cost.is_constant() {
            ok &= pairing >= -1e-8;
        }
        pass &= ok;
        parts.push(format!(
            "{name}: gap {:.1e}, stationarity {:.1e}, mass-1 {:.1e}, <mu,|v|^q> {kinetic:.4} <= {bound:.4}, <mu,P> {pairing:.4}",
            res.duality_gap, res.stationarity_residual, res.normalization_residual
        ));
    }
    outcome(pass, parts.join("; "))
}

fn nested_domains() -> Result<Outcome> {
    let alpha = (P - 2.0) / (P - 1.0);
    let sweep = nested_domain_sweep(
        &spec(&RunningCost::bump(1.0, 0.5)),
        &unit_interval(),
        &[0.04, 0.08, 0.16],
        0.1,
        H,
        &MdpOptions::default(),
    )?;
    let min_gap = sweep.reports.iter().map(|r| r.min_gap).fold(f64::INFINITY, f64::min);
    let gaps: Vec<String> = sweep.reports.iter().map(|r| format!("{:.3e}", r.max_gap)).collect();
    outcome(
        min_gap >= -1e-8 && sweep.exponent >= alpha - 0.15,
        format!("min gap {min_gap:.2e} (>= -1e-8), max gaps [{}], exponent {:.3} (>= {:.3})", gaps.join(", "), sweep.exponent, alpha - 0.15),
    )
}

struct DiscountRuns {
    zero: (VanishingDiscount<f64>, CGammaCurve<f64>),
    bump: (VanishingDiscount<f64>, CGammaCurve<f64>),
}

impl DiscountRuns {
    fn compute() -> Result<Self> {
        let run = |cost: RunningCost| -> Result<(VanishingDiscount<f64>, CGammaCurve<f64>)> {
            let vd = VanishingDiscount::new(&spec(&cost), &unit_interval(), H, &MdpOptions::default())?;
            let curve = vd.c_of_gamma(&[-0.5, -0.25, 0.0, 0.25, 0.5], &default_lambdas())?;
            Ok((vd, curve))
        };
        Ok(Self { zero: run(RunningCost::zero())?, bump: run(RunningCost::bump(1.0, 0.5))? })
    }
}

fn vanishing_discount(runs: &DiscountRuns) -> Result<Outcome> {
    let (vd, curve) = &runs.bump;
    let l0 = curve.limit(0.0).unwrap();
    let (seq, ext) = l0.distance_to(&vd.u0);
    let monotone = seq.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = seq.iter().map(|v| format!("{v:.2e}")).collect();
    outcome(monotone && ext <= 1e-3, format!("sup distances [{}], monotone {monotone}, extrapolated {ext:.2e} (<= 1e-3)", shown.join(", ")))
}

fn back_forth(runs: &DiscountRuns) -> Result<Outcome> {
    let (vd, curve) = &runs.zero;
    let r = vd.back_forth_check(curve);
    let target = q() * vd.c0();
    let right = curve.quotients_at_zero().1.unwrap();
    let rel = (right - target).abs() / target.abs();
    let zero_ok = rel <= 0.02 && r.mismatch_minus.unwrap() <= 0.02 && r.mismatch_plus.unwrap() <= 0.02;
    let (vdb, curveb) = &runs.bump;
    let rb = vdb.back_forth_check(curveb);
    let slack = rb.ordering_slack.unwrap();
    outcome(
        zero_ok && slack >= -1e-3,
        format!(
            "zero cost: C' quotient {right:.6} vs q c(0) = {target:.6} (rel {rel:.1e} <= 2e-2); bump: {:.6} <= {:.6} <= {:.6} <= {:.6}, slack {slack:.1e} (>= -1e-3)",
            rb.c_minus,
            rb.neg_left_quotient.unwrap(),
            rb.neg_right_quotient.unwrap(),
            rb.c_plus
        ),
    )
}

fn measure_identities(runs: &DiscountRuns) -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, (vd, curve)) in [("zero", &runs.zero), ("bump", &runs.bump)] {
        let rep = vd.measure_identity_check(curve, 5, 11)?;
        let b = rep
            .b
            .iter()
            .filter(|(g, _, _)| (g.abs() - 0.25).abs() < 1e-12)
            .map(|(_, _, w)| *w)
            .fold(0.0, f64::max);
        pass &= rep.a_max <= 1e-4 && b <= 1e-3;
        parts.push(format!("{name}: (a) {:.1e} (<= 1e-4), (b) {b:.1e} (<= 1e-3)", rep.a_max));
    }
    outcome(pass, parts.join("; "))
}

fn hopf_cole() -> Result<Outcome> {
    let d = unit_interval();
    let h = 1.0 / 129.0;
    let pair = principal_eigenpair(&d, &RunningCost::zero(), 1.0, h)?;
    let exact = PI * PI / 4.0;
    let e_rel = (pair.eigenvalue / exact - 1.0).abs();
    let rate = shape_derivative(&pair, &Perturbation::Identity);
    let r_rel = (rate / (-PI * PI / 2.0) - 1.0).abs();
    let curve = eigencurve_p2(&d, &RunningCost::zero(), 1.0, &[-0.01, 0.0, 0.01], h)?;
    let s_rel = (curve.fd_second / (1.5 * PI * PI) - 1.0).abs();
    outcome(
        pair.interior_count() >= 256 && e_rel <= 1e-3 && r_rel <= 1e-2 && s_rel <= 3e-2,
        format!(
            "{} interior nodes: eigenvalue {:.6} (rel {e_rel:.1e} <= 1e-3), shape derivative {rate:.5} (rel {r_rel:.1e} <= 1e-2), second difference {:.4} (rel {s_rel:.1e} <= 3e-2)",
            pair.interior_count(),
            pair.eigenvalue,
            curve.fd_second
        ),
    )
}

fn semiconvexity(curves: &Curves) -> Result<Outcome> {
    let c = curves.get("cosine");
    let coarse = semiconvexity_probe(&restrict(c, |l| on_step(l, 0.04, 4)))?;
    let fine = semiconvexity_probe(&restrict(c, |l| on_step(l, 0.02, 4)))?;
    let drift = (coarse - fine).abs() / fine.abs().max(f64::MIN_POSITIVE);
    outcome(drift <= 0.3 && coarse.is_finite(), format!("min second difference {coarse:.4} (step 0.04), {fine:.4} (step 0.02), drift {:.1}% (<= 30%)", drift * 100.0))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Result<Outcome>)> = Vec::new();
    let mut line = |id: usize, name: &'static str, r: Result<Outcome>| {
        let tag = match &r {
            Ok(o) if o.pass => "PASS",
            _ => "FAIL",
        };
        let detail = match &r {
            Ok(o) => o.detail.clone(),
            Err(e) => format!("error: {e}"),
        };
        println!("{tag} {id:>2} {name}: {detail}");
        results.push((id, name, r));
    };

    line(1, "scaling law", scaling_law());
    line(2, "derivative identity", derivative_identity());
    let curves = Curves::compute();
    match &curves {
        Ok(c) => {
            line(3, "derivative vs curve", derivative_vs_curve(c));
            line(4, "cost shift", shift_exactness());
            line(5, "monotone and Lipschitz", monotone_lipschitz(c));
        }
        Err(e) => {
            for (id, name) in [(3, "derivative vs curve"), (5, "monotone and Lipschitz")] {
                line(id, name, Err(e.clone()));
            }
            line(4, "cost shift", shift_exactness());
        }
    }
    line(6, "duality and measure invariants", lp_invariants());
    line(7, "nested domains", nested_domains());
    match DiscountRuns::compute() {
        Ok(runs) => {
            line(8, "vanishing discount", vanishing_discount(&runs));
            line(9, "back-forth relation", back_forth(&runs));
            line(10, "measure identities", measure_identities(&runs));
        }
        Err(e) => {
            for (id, name) in [(8, "vanishing discount"), (9, "back-forth relation"), (10, "measure identities")] {
                line(id, name, Err(e.clone()));
            }
        }
    }
    line(11, "linear eigenproblem", hopf_cole());
    match &curves {
        Ok(c) => line(12, "semiconvexity probe", semiconvexity(c)),
        Err(e) => line(12, "semiconvexity probe", Err(e.clone())),
    }

    let failed = results.iter().filter(|(_, _, r)| !matches!(r, Ok(o) if o.pass)).count();
    println!("{} of {} criteria passed in {:.1}s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Policy iteration against a from-scratch simplex on small chains.

use hjb_ergodic::ergodic::{ergodic_lp_solve, onesided_derivatives};
use hjb_ergodic::geometry::{build_grid, make_domain, DomainKind};
use hjb_ergodic::lagrangian::{LagrangianSpec, RunningCost};
use hjb_ergodic::lp::{ergodic_oracle, LpScalar};
use hjb_ergodic::mdp::{assemble_mdp, DiscreteMdp};
use num_rational::BigRational;

fn interval_mdp(cost: RunningCost<f64>) -> DiscreteMdp<f64> {
    let d = make_domain(DomainKind::Interval { half_width: 1.0 }).unwrap();
    let g = build_grid(&d, 0.2).unwrap();
    let s = LagrangianSpec::new(3.0, 0.1, cost).unwrap();
    assemble_mdp(&g, &s, 1.5, 0.25).unwrap()
}

fn disk_mdp() -> DiscreteMdp<f64> {
    let d = make_domain(DomainKind::Disk { radius: 1.0 }).unwrap();
    let g = build_grid(&d, 1.0 / 3.0).unwrap();
    let s = LagrangianSpec::new(3.0, 0.2, RunningCost::bump(1.0, 0.5)).unwrap();
    assemble_mdp(&g, &s, 1.5, 0.5).unwrap()
}

fn compare<S: LpScalar>(mdp: &DiscreteMdp<f64>, tol: f64) {
    let res = ergodic_lp_solve(mdp).unwrap();
    let d = onesided_derivatives(mdp, &res).unwrap();
    let oracle = ergodic_oracle::<S, _>(mdp, |n, k| mdp.pairing(n, k), 1e-12).unwrap();
    let c = oracle.c.as_f64();
    assert!((c - res.c).abs() <= tol, "c: simplex {c} vs policy iteration {}", res.c);
    let total: f64 = oracle.measure.iter().map(|(_, m)| m.as_f64()).sum();
    assert!((total - 1.0).abs() <= 1e-12);
    assert!((oracle.minus.as_f64() - d.minus).abs() <= 1e3 * tol, "{} vs {}", oracle.minus.as_f64(), d.minus);
    assert!((oracle.plus.as_f64() - d.plus).abs() <= 1e3 * tol, "{} vs {}", oracle.plus.as_f64(), d.plus);
}

#[test]
fn exact_simplex_matches_on_zero_cost() {
    compare::<BigRational>(&interval_mdp(RunningCost::zero()), 1e-10);
}

#[test]
fn exact_simplex_matches_on_bump() {
    compare::<BigRational>(&interval_mdp(RunningCost::bump(1.0, 0.5)), 1e-10);
}

#[test]
fn float_simplex_matches_on_cosine() {
    compare::<f64>(&interval_mdp(RunningCost::cosine(1.0, std::f64::consts::PI)), 1e-9);
}

#[test]
fn float_simplex_matches_on_disk() {
    compare::<f64>(&disk_mdp(), 1e-9);
}

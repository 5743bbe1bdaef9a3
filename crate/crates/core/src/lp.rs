//! Dense two-phase simplex with a lexicographic ratio test, generic over floating and exact rational arithmetic.
//!
//! Used as an independent check of the policy-iteration solver: the dual of the ergodic LP is assembled
//! column by column from the chain and solved from scratch.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive};

use crate::error::{Error, Result};
use crate::mdp::DiscreteMdp;

/// Scalar field the simplex runs over.
pub trait LpScalar: Num + Signed + Clone + PartialOrd + Debug {
    /// Entries with absolute value at most this are treated as zero.
    fn tolerance() -> Self;
    /// Exact image of a double.
    fn from_f64_exact(x: f64) -> Self;
    fn as_f64(&self) -> f64;
}

impl LpScalar for f64 {
    fn tolerance() -> Self {
        1e-10
    }
    fn from_f64_exact(x: f64) -> Self {
        x
    }
    fn as_f64(&self) -> f64 {
        *self
    }
}

impl LpScalar for BigRational {
    fn tolerance() -> Self {
        BigRational::from_integer(BigInt::from(0))
    }
    fn from_f64_exact(x: f64) -> Self {
        BigRational::from_float(x).expect("finite coefficient")
    }
    fn as_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// min c.x subject to A x = b, x >= 0.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardLp<S> {
    pub a: Vec<Vec<S>>,
    pub b: Vec<S>,
    pub c: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<S> {
    pub x: Vec<S>,
    pub objective: S,
    pub pivots: usize,
}

struct Tableau<S> {
    rows: Vec<Vec<S>>,
    /// reduced costs; the last entry is minus the objective
    obj: Vec<S>,
    basis: Vec<usize>,
    /// columns [art, art + m) hold the inverse of the current basis
    art: usize,
    pivots: usize,
}

impl<S: LpScalar> Tableau<S> {
    fn width(&self) -> usize {
        self.obj.len() - 1
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let tol = S::tolerance();
        let p = self.rows[r][col].clone();
        for v in self.rows[r].iter_mut() {
            *v = v.clone() / p.clone();
        }
        let prow = self.rows[r].clone();
        let eliminate = |row: &mut Vec<S>| {
            let f = row[col].clone();
            if !f.is_zero() {
                for (v, pv) in row.iter_mut().zip(&prow) {
                    if !pv.is_zero() {
                        *v = v.clone() - f.clone() * pv.clone();
                        if v.abs() <= tol {
                            *v = S::zero();
                        }
                    }
                }
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.obj);
        self.basis[r] = col;
        self.pivots += 1;
    }

    /// Lexicographic comparison of rows `i` and `k` of [b | B^-1] scaled by their pivot entries.
    fn lex_less(&self, i: usize, k: usize, col: usize) -> bool {
        let tol = S::tolerance();
        let last = self.width();
        let (pi, pk) = (&self.rows[i][col], &self.rows[k][col]);
        let keys = std::iter::once(last).chain(self.art..last);
        for j in keys {
            let d = self.rows[i][j].clone() / pi.clone() - self.rows[k][j].clone() / pk.clone();
            if d < -tol.clone() {
                return true;
            }
            if d > tol {
                return false;
            }
        }
        false
    }

    /// Most negative reduced cost enters among columns `< limit`; the lexicographic ratio test rules out
    /// cycling on degenerate vertices.
    fn optimize(&mut self, limit: usize) -> Result<()> {
        let tol = S::tolerance();
        loop {
            let mut col = None;
            let mut best = -tol.clone();
            for j in 0..limit {
                if self.obj[j] < best {
                    best = self.obj[j].clone();
                    col = Some(j);
                }
            }
            let Some(col) = col else {
                return Ok(());
            };
            let mut leave: Option<usize> = None;
            for i in 0..self.rows.len() {
                if self.rows[i][col] > tol {
                    leave = match leave {
                        Some(k) if !self.lex_less(i, k, col) => Some(k),
                        _ => Some(i),
                    };
                }
            }
            match leave {
                Some(r) => self.pivot(r, col),
                None => return Err(Error::Unbounded),
            }
        }
    }
}

impl<S: LpScalar> StandardLp<S> {
    pub fn new(a: Vec<Vec<S>>, b: Vec<S>, c: Vec<S>) -> Result<Self> {
        if a.len() != b.len() || a.iter().any(|r| r.len() != c.len()) {
            return Err(Error::InvalidParameter("inconsistent LP dimensions".into()));
        }
        Ok(Self { a, b, c })
    }

    pub fn solve(&self) -> Result<LpSolution<S>> {
        let m = self.b.len();
        let n = self.c.len();
        let tol = S::tolerance();
        // phase one on [A | I] with b made nonnegative
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            let flip = self.b[i] < S::zero();
            let mut row: Vec<S> =
                self.a[i].iter().map(|v| if flip { -v.clone() } else { v.clone() }).collect();
            row.extend((0..m).map(|k| if k == i { S::one() } else { S::zero() }));
            row.push(if flip { -self.b[i].clone() } else { self.b[i].clone() });
            rows.push(row);
        }
        let mut obj = vec![S::zero(); n + m + 1];
        for row in &rows {
            for j in 0..n {
                obj[j] = obj[j].clone() - row[j].clone();
            }
            obj[n + m] = obj[n + m].clone() - row[n + m].clone();
        }
        let mut t = Tableau { rows, obj, basis: (n..n + m).collect(), art: n, pivots: 0 };
        t.optimize(n)?;
        let infeasibility = -t.obj[n + m].clone();
        let scale = self.b.iter().fold(S::one(), |acc, v| if v.abs() > acc { v.abs() } else { acc });
        if infeasibility > tol.clone() * scale * S::from_f64_exact(1e3) {
            return Err(Error::Infeasible(format!("phase one stops at {:e}", infeasibility.as_f64())));
        }
        // drive artificials out of the basis; rows where that is impossible are redundant
        let mut r = 0;
        while r < t.rows.len() {
            if t.basis[r] >= n {
                match (0..n).find(|&j| t.rows[r][j].abs() > tol) {
                    Some(j) => t.pivot(r, j),
                    None => {
                        t.rows.remove(r);
                        t.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        let mut obj: Vec<S> = self.c.iter().cloned().chain((0..=m).map(|_| S::zero())).collect();
        for (row, &bj) in t.rows.iter().zip(&t.basis) {
            let cb = self.c[bj].clone();
            if !cb.is_zero() {
                for (o, v) in obj.iter_mut().zip(row) {
                    *o = o.clone() - cb.clone() * v.clone();
                }
            }
        }
        t.obj = obj;
        t.optimize(n)?;
        let mut x = vec![S::zero(); n];
        for (row, &bj) in t.rows.iter().zip(&t.basis) {
            x[bj] = row[n + m].clone();
        }
        Ok(LpSolution { x, objective: -t.obj[n + m].clone(), pivots: t.pivots })
    }
}

/// Dual of the ergodic LP: one column per admissible (node, velocity) pair.
#[derive(Debug, Clone)]
pub struct ErgodicDual<S> {
    pub lp: StandardLp<S>,
    pub pairs: Vec<(usize, usize)>,
}

/// min sum mu L over mu >= 0 with sum mu = 1 and mu^T A = 0 (one redundant balance row dropped).
pub fn ergodic_dual<S: LpScalar>(mdp: &DiscreteMdp<f64>) -> ErgodicDual<S> {
    let n = mdp.len();
    let g = mdp.grid();
    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|x| mdp.actions(x).iter().map(move |&k| (x, k))).collect();
    let mut a = vec![vec![S::zero(); pairs.len()]; n];
    for (col, &(x, k)) in pairs.iter().enumerate() {
        let rates = mdp.rates(x, k).expect("admissible pair");
        for (axis, row) in rates.iter().enumerate().take(g.dim()) {
            for (side, &w) in row.iter().enumerate() {
                if w > 0.0 {
                    let y = g.neighbor(x, axis, side).expect("rate towards a node");
                    let w = S::from_f64_exact(w);
                    a[y][col] = a[y][col].clone() + w.clone();
                    a[x][col] = a[x][col].clone() - w;
                }
            }
        }
    }
    a.pop();
    a.push(vec![S::one(); pairs.len()]);
    let mut b = vec![S::zero(); n];
    b[n - 1] = S::one();
    let c = pairs.iter().map(|&(x, k)| S::from_f64_exact(mdp.stage_cost(x, k))).collect();
    ErgodicDual { lp: StandardLp { a, b, c }, pairs }
}

/// Eigenvalue and one-sided derivatives obtained from the simplex alone.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution<S> {
    /// c = -min <mu, L>
    pub c: S,
    pub measure: Vec<((usize, usize), S)>,
    /// min and max of <mu, g> over optimal measures
    pub minus: S,
    pub plus: S,
}

/// Solves the dual and then optimizes <mu, g> on its optimal face, which is cut out by
/// <mu, L> <= optimum + slack.
pub fn ergodic_oracle<S, G>(mdp: &DiscreteMdp<f64>, g: G, slack: f64) -> Result<OracleSolution<S>>
where
    S: LpScalar,
    G: Fn(usize, usize) -> f64,
{
    let dual = ergodic_dual::<S>(mdp);
    let first = dual.lp.solve()?;
    let opt = first.objective.clone();
    let cap = opt.clone() + S::from_f64_exact(slack);
    let mut lp = dual.lp.clone();
    let cols = dual.pairs.len();
    for row in lp.a.iter_mut() {
        row.push(S::zero());
    }
    let mut cut = lp.c.clone();
    cut.push(S::one());
    lp.a.push(cut);
    lp.b.push(cap);
    let obs: Vec<S> = dual.pairs.iter().map(|&(x, k)| S::from_f64_exact(g(x, k))).collect();
    let extreme = |sign: S| -> Result<S> {
        let mut p = lp.clone();
        p.c = obs.iter().map(|v| sign.clone() * v.clone()).chain(std::iter::once(S::zero())).collect();
        let s = p.solve()?;
        Ok(sign * s.objective)
    };
    let minus = extreme(S::one())?;
    let plus = extreme(-S::one())?;
    let measure = dual
        .pairs
        .iter()
        .zip(first.x.into_iter().take(cols))
        .filter(|(_, m)| !m.is_zero())
        .map(|(&p, m)| (p, m))
        .collect();
    Ok(OracleSolution { c: -opt, measure, minus, plus })
}

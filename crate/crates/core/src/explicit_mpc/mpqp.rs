use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CondensedQp;
use crate::numerics::serde_rows::{matrix, vector};
use crate::numerics::{lp_feasible, lp_maximize, Fingerprint, LpOutcome, Matrix, Tolerances, Vector};
use crate::{Error, Result};

/// Enumeration is exponential in the constraint count; refuse larger QPs.
pub const MAX_CONSTRAINTS: usize = 30;

/// Polyhedron `{z : H_r z ≤ h_r}` on which the first move is `K z + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalRegion {
    /// Unit-norm rows.
    #[serde(with = "matrix")]
    pub hr: Matrix,
    #[serde(with = "vector")]
    pub hv: Vector,
    #[serde(with = "matrix")]
    pub gain: Matrix,
    #[serde(with = "vector")]
    pub offset: Vector,
    /// Constraint indices of the condensed QP that are active throughout.
    pub active_set: Vec<usize>,
    #[serde(with = "vector")]
    pub center: Vector,
    pub radius: f64,
}

impl CriticalRegion {
    pub fn contains(&self, z: &Vector, tol: f64) -> bool {
        (0..self.hr.nrows()).all(|i| self.hr.row(i).dot(&z.transpose()) <= self.hv[i] + tol)
    }

    /// Largest constraint violation at `z`, zero inside.
    pub fn violation(&self, z: &Vector) -> f64 {
        (0..self.hr.nrows())
            .map(|i| self.hr.row(i).dot(&z.transpose()) - self.hv[i])
            .fold(0.0, f64::max)
    }

    pub fn control(&self, z: &Vector) -> Vector {
        &self.gain * z + &self.offset
    }
}

/// Counts collected while enumerating active sets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MpqpDiagnostics {
    pub candidates: usize,
    /// Candidates skipped because their active rows are linearly dependent.
    pub dependent: usize,
    /// Candidates whose KKT system was singular.
    pub singular: usize,
    /// Candidates whose region has no interior.
    pub empty: usize,
}

/// Explicit MPC law: ordered critical regions over a polytopic domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwaControlLaw {
    pub n_states: usize,
    pub n_inputs: usize,
    pub horizon: usize,
    pub regions: Vec<CriticalRegion>,
    #[serde(with = "matrix")]
    pub domain_g: Matrix,
    #[serde(with = "vector")]
    pub domain_w: Vector,
    pub tolerances: Tolerances,
    /// Fingerprint of the condensed QP and domain the law was solved from.
    pub source_hash: String,
    pub diagnostics: MpqpDiagnostics,
}

impl PwaControlLaw {
    pub fn in_domain(&self, z: &Vector) -> bool {
        let tol = self.tolerances.region_membership;
        (0..self.domain_g.nrows()).all(|i| self.domain_g.row(i).dot(&z.transpose()) <= self.domain_w[i] + tol)
    }

    /// Index of the first region containing `z`.
    pub fn locate(&self, z: &Vector) -> Option<usize> {
        let tol = self.tolerances.region_membership;
        self.regions.iter().position(|r| r.contains(z, tol))
    }

    /// [`PwaControlLaw::locate`], falling back to the region with the
    /// smallest violation (lowest index on ties).
    pub fn nearest(&self, z: &Vector) -> usize {
        if let Some(i) = self.locate(z) {
            return i;
        }
        let mut best = (0, f64::INFINITY);
        for (i, r) in self.regions.iter().enumerate() {
            let v = r.violation(z);
            if v < best.1 {
                best = (i, v);
            }
        }
        best.0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// First move of the explicit law at `z`.
///
/// Points outside the domain give [`Error::OutsideDomain`]; points inside
/// it that no region covers give [`Error::LawIncomplete`].
/// Fingerprint of the condensed problem and parameter domain a law is
/// computed from.
pub fn problem_hash(cqp: &CondensedQp, domain_g: &Matrix, domain_w: &Vector) -> String {
    let mut fp = Fingerprint::default();
    fp.matrix(&cqp.h).matrix(&cqp.f).matrix(&cqp.g).f64s(cqp.w.iter()).matrix(&cqp.s).matrix(domain_g).f64s(domain_w.iter());
    fp.hex()
}

pub fn evaluate_pwa(law: &PwaControlLaw, z: &Vector) -> Result<Vector> {
    if !law.in_domain(z) {
        return Err(Error::OutsideDomain(z.iter().copied().collect()));
    }
    law.locate(z)
        .map(|i| law.regions[i].control(z))
        .ok_or_else(|| Error::LawIncomplete(z.iter().copied().collect()))
}

/// Total version of [`evaluate_pwa`]: uses the nearest region's affine law
/// wherever no region contains `z`.
/// Largest ∞-norm gap between the explicit law and the online QP over
/// `points`; fails on the first point the law cannot evaluate.
pub fn max_law_error(law: &PwaControlLaw, cqp: &CondensedQp, points: &[Vector]) -> Result<f64> {
    let mut worst = 0.0_f64;
    for z in points {
        let gap = (evaluate_pwa(law, z)? - super::online_mpc(cqp, z)?).amax();
        worst = worst.max(gap);
    }
    Ok(worst)
}

pub fn evaluate_nearest(law: &PwaControlLaw, z: &Vector) -> Vector {
    law.regions[law.nearest(z)].control(z)
}

pub fn solve_mpqp(cqp: &CondensedQp, domain_g: &Matrix, domain_w: &Vector) -> Result<PwaControlLaw> {
    solve_mpqp_with(cqp, domain_g, domain_w, &cqp.tolerances)
}

/// Multiparametric solution by depth-first enumeration of active sets in
/// lexicographic order.
pub fn solve_mpqp_with(cqp: &CondensedQp, domain_g: &Matrix, domain_w: &Vector, tol: &Tolerances) -> Result<PwaControlLaw> {
    let n_c = cqp.g.nrows();
    if n_c > MAX_CONSTRAINTS {
        return Err(Error::Config(format!("{n_c} constraints exceed the enumeration limit {MAX_CONSTRAINTS}")));
    }
    if domain_g.ncols() != cqp.n_states || domain_g.nrows() != domain_w.len() {
        return Err(Error::dim("domain polytope does not match the parameter dimension"));
    }
    let h_inv = cqp
        .h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("condensed Hessian is not positive definite".into()))?
        .inverse();
    let mut ctx = Enumeration {
        cqp,
        h_inv,
        domain: normalize_rows(domain_g, domain_w),
        tol,
        regions: Vec::new(),
        diagnostics: MpqpDiagnostics::default(),
    };
    let mut active = Vec::new();
    ctx.visit(&mut active, 0);
    if ctx.regions.is_empty() {
        if lp_feasible(domain_g, domain_w, tol.region_radius).is_some() {
            return Err(Error::Infeasible);
        }
        return Err(Error::Domain("domain polytope has no interior".into()));
    }
    Ok(PwaControlLaw {
        n_states: cqp.n_states,
        n_inputs: cqp.n_inputs,
        horizon: cqp.horizon,
        regions: ctx.regions,
        domain_g: domain_g.clone(),
        domain_w: domain_w.clone(),
        tolerances: *tol,
        source_hash: problem_hash(cqp, domain_g, domain_w),
        diagnostics: ctx.diagnostics,
    })
}

struct Enumeration<'a> {
    cqp: &'a CondensedQp,
    h_inv: Matrix,
    domain: (Matrix, Vector),
    tol: &'a Tolerances,
    regions: Vec<CriticalRegion>,
    diagnostics: MpqpDiagnostics,
}

impl Enumeration<'_> {
    fn visit(&mut self, active: &mut Vec<usize>, start: usize) {
        self.diagnostics.candidates += 1;
        if let Some(region) = self.region_for(active) {
            self.regions.push(region);
        }
        if active.len() == self.cqp.g.ncols() {
            return;
        }
        for i in start..self.cqp.g.nrows() {
            active.push(i);
            if rows_independent(&self.cqp.g, active) {
                self.visit(active, i + 1);
            } else {
                // Supersets of a dependent set are dependent too.
                self.diagnostics.dependent += 1;
            }
            active.pop();
        }
    }

    fn region_for(&mut self, active: &[usize]) -> Option<CriticalRegion> {
        let cqp = self.cqp;
        let (n, m, n_c) = (cqp.n_states, cqp.n_inputs, cqp.g.nrows());
        let ft = cqp.f.transpose();
        // λ(z) = Lz z + lc, U(z) = Tz z + tc.
        let (lz, lc, tz, tc) = if active.is_empty() {
            (Matrix::zeros(0, n), Vector::zeros(0), -&self.h_inv * &ft, Vector::zeros(cqp.h.nrows()))
        } else {
            let ga = cqp.g.select_rows(active);
            let wa = cqp.w.select_rows(active);
            let sa = cqp.s.select_rows(active);
            let gh = &ga * &self.h_inv;
            let lu = (&gh * ga.transpose()).lu();
            let lz = match lu.solve(&(&sa + &gh * &ft)) {
                Some(v) => -v,
                None => {
                    self.diagnostics.singular += 1;
                    return None;
                }
            };
            let lc = -lu.solve(&wa)?;
            let tz = -&self.h_inv * (&ft + ga.transpose() * &lz);
            let tc = -&self.h_inv * (ga.transpose() * &lc);
            (lz, lc, tz, tc)
        };

        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for i in 0..n_c {
            if active.contains(&i) {
                continue;
            }
            let gi = cqp.g.row(i);
            let row = gi * &tz - cqp.s.row(i);
            rows.push((row.iter().copied().collect(), cqp.w[i] - gi.dot(&tc.transpose())));
        }
        for k in 0..active.len() {
            rows.push(((-lz.row(k)).iter().copied().collect(), lc[k]));
        }
        let (dg, dw) = &self.domain;
        for i in 0..dg.nrows() {
            rows.push((dg.row(i).iter().copied().collect(), dw[i]));
        }
        let (hr, hv) = match clean_rows(&rows, n) {
            Some(p) => p,
            None => {
                self.diagnostics.empty += 1;
                return None;
            }
        };
        let Some(ball) = lp_feasible(&hr, &hv, self.tol.region_radius) else {
            self.diagnostics.empty += 1;
            return None;
        };
        let (hr, hv) = remove_redundant(hr, hv, self.tol.redundancy);
        Some(CriticalRegion {
            hr,
            hv,
            gain: tz.rows(0, m).into_owned(),
            offset: tc.rows(0, m).into_owned(),
            active_set: active.to_vec(),
            center: ball.center,
            radius: ball.radius,
        })
    }
}

fn rows_independent(g: &Matrix, active: &[usize]) -> bool {
    let ga = g.select_rows(active);
    let gram = &ga * ga.transpose();
    let scale = gram.diagonal().amax().max(1.0);
    gram.symmetric_eigenvalues().min() > 1e-12 * scale
}

/// Unit-normalize rows; drop trivial `0 ≤ c` rows. `None` if some zero row
/// is violated.
fn clean_rows(rows: &[(Vec<f64>, f64)], n: usize) -> Option<(Matrix, Vector)> {
    let mut kept: Vec<(Vec<f64>, f64)> = Vec::with_capacity(rows.len());
    for (g, w) in rows {
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            if *w < -1e-12 {
                return None;
            }
            continue;
        }
        kept.push((g.iter().map(|v| v / norm).collect(), w / norm));
    }
    let hr = Matrix::from_fn(kept.len(), n, |i, j| kept[i].0[j]);
    let hv = Vector::from_fn(kept.len(), |i, _| kept[i].1);
    Some((hr, hv))
}

fn normalize_rows(g: &Matrix, w: &Vector) -> (Matrix, Vector) {
    let rows: Vec<(Vec<f64>, f64)> = (0..g.nrows()).map(|i| (g.row(i).iter().copied().collect(), w[i])).collect();
    clean_rows(&rows, g.ncols()).unwrap_or_else(|| (g.clone(), w.clone()))
}

/// Drops, in order, each row that the remaining rows already imply.
fn remove_redundant(hr: Matrix, hv: Vector, tol: f64) -> (Matrix, Vector) {
    let mut keep = vec![true; hr.nrows()];
    for i in 0..hr.nrows() {
        keep[i] = false;
        let idx: Vec<usize> = (0..hr.nrows()).filter(|&k| keep[k]).collect();
        let redundant = match lp_maximize(&hr.row(i).transpose(), &hr.select_rows(&idx), &hv.select_rows(&idx)) {
            LpOutcome::Optimal { value, .. } => value <= hv[i] + tol,
            _ => false,
        };
        keep[i] = !redundant;
    }
    let idx: Vec<usize> = (0..hr.nrows()).filter(|&k| keep[k]).collect();
    (hr.select_rows(&idx), hv.select_rows(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explicit_mpc::tests::scalar_integrator;
    use crate::explicit_mpc::{condense, online_mpc};
    use nalgebra::dvector;

    fn scalar_law() -> (CondensedQp, PwaControlLaw) {
        let f = scalar_integrator(2, 1.0);
        let c = condense(&f).unwrap();
        let law = solve_mpqp(&c, &f.domain.0, &f.domain.1).unwrap();
        (c, law)
    }

    #[test]
    fn scalar_integrator_has_three_regions() {
        let (_, law) = scalar_law();
        assert_eq!(law.regions.len(), 3);
        let k = (1.0 + 5f64.sqrt()) / 2.0;
        let k = k / (1.0 + k);
        // Saturation begins where the LQR move reaches the bound.
        let knee = 1.0 / k;
        assert_eq!(evaluate_pwa(&law, &dvector![2.0]).unwrap()[0], -1.0);
        assert_eq!(evaluate_pwa(&law, &dvector![-2.0]).unwrap()[0], 1.0);
        let mid = evaluate_pwa(&law, &dvector![0.5]).unwrap()[0];
        assert!((mid + k * 0.5).abs() < 1e-12);
        for x in [knee - 1e-6, knee + 1e-6] {
            let u = evaluate_pwa(&law, &dvector![x]).unwrap()[0];
            assert!((u - (-k * x).max(-1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn breakpoints_match_online_oracle_on_a_grid() {
        let (c, law) = scalar_law();
        for i in 0..=4000 {
            let x = -2.0 + 4.0 * i as f64 / 4000.0;
            let z = dvector![x];
            let explicit = evaluate_pwa(&law, &z).unwrap();
            let online = online_mpc(&c, &z).unwrap();
            assert!((explicit - online).amax() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn law_is_continuous() {
        let (_, law) = scalar_law();
        let delta = 1e-7;
        for i in 0..2000 {
            let x = -1.99 + 3.98 * i as f64 / 2000.0;
            let a = evaluate_pwa(&law, &dvector![x]).unwrap()[0];
            let b = evaluate_pwa(&law, &dvector![x + delta]).unwrap()[0];
            assert!((a - b).abs() <= 1.0 * delta + 1e-15);
        }
    }

    #[test]
    fn outside_domain_is_reported_and_nearest_extends() {
        let (_, law) = scalar_law();
        assert!(matches!(evaluate_pwa(&law, &dvector![3.0]), Err(Error::OutsideDomain(_))));
        assert_eq!(evaluate_nearest(&law, &dvector![3.0])[0], -1.0);
    }

    #[test]
    fn unconstrained_law_is_the_lqr_gain() {
        let mut f = scalar_integrator(3, 0.9);
        f.input_box = crate::envs::BoxSet::new(dvector![-1e3], dvector![1e3]).unwrap();
        let c = condense(&f).unwrap();
        let law = solve_mpqp(&c, &f.domain.0, &f.domain.1).unwrap();
        assert_eq!(law.regions.len(), 1);
        assert!((&law.regions[0].gain - f.lqr_gain().unwrap()).amax() < 1e-10);
        assert_eq!(evaluate_pwa(&law, &dvector![0.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn serialization_round_trips_exactly() {
        let (_, law) = scalar_law();
        let text = law.to_json().unwrap();
        let back = PwaControlLaw::from_json(&text).unwrap();
        assert_eq!(back, law);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn region_centers_map_into_the_input_box() {
        let (_, law) = scalar_law();
        for r in &law.regions {
            let u = r.control(&r.center)[0];
            assert!((-1.0 - 1e-8..=1.0 + 1e-8).contains(&u));
        }
    }

    #[test]
    fn enumeration_guard() {
        let (c, _) = scalar_law();
        let mut big = c.clone();
        big.g = Matrix::from_fn(31, 2, |i, j| if i % 2 == j { 1.0 } else { 0.0 });
        big.w = Vector::from_element(31, 1.0);
        big.s = Matrix::zeros(31, 1);
        let err = solve_mpqp(&big, &Matrix::zeros(0, 1), &Vector::zeros(0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}

//! Common quadratic Lyapunov functions for the switched closed loop of one
//! control task, and the performance-preserving pruning of its period menu.
//!
//! For subsystems `Abb_j` with decay parameters `α_j` we look for `P ≻ 0`
//! such that `Abb_jᵀ P Abb_j - (1 + α_j) P ⪯ 0` for every `j`. The search
//! first tries Lyapunov solutions of the individual subsystems, then
//! maximises the common LMI margin with a log-det barrier method, in
//! coordinates where the averaged Lyapunov solution is the identity.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::control::{DiscretizedLoop, PlantModel};
use crate::linalg::{self, Matrix};
use crate::{Error, Result};

/// `α = e^{2γh} - 1`: the per-sample decrease of `V = xᵀPx` matching a
/// continuous decay rate `γ < 0`.
pub fn alpha_from_gamma(gamma: f64, h: f64) -> f64 {
    (2.0 * gamma * h).exp_m1()
}

#[derive(Debug, Clone)]
pub struct CqlfProblem {
    pub matrices: Vec<Matrix>,
    pub alphas: Vec<f64>,
    /// Decay rate the alphas were derived from, if any.
    pub gamma: Option<f64>,
}

impl CqlfProblem {
    pub fn new(matrices: Vec<Matrix>, alphas: Vec<f64>) -> Result<Self> {
        if matrices.is_empty() || matrices.len() != alphas.len() {
            return Err(Error::config("need one decay parameter per subsystem"));
        }
        let n = matrices[0].nrows();
        if matrices.iter().any(|m| m.shape() != (n, n)) {
            return Err(Error::config("subsystem matrices differ in dimension"));
        }
        if alphas.iter().any(|a| !(*a > -1.0 && *a < 0.0)) {
            return Err(Error::config("decay parameters must lie in (-1, 0)"));
        }
        Ok(CqlfProblem {
            matrices,
            alphas,
            gamma: None,
        })
    }

    /// Subsystems from designed loops, with `α_j` from the decay rate.
    pub fn from_loops(loops: &[DiscretizedLoop], gamma: f64) -> Result<Self> {
        if gamma >= 0.0 || gamma.is_nan() {
            return Err(Error::config("decay rate must be negative"));
        }
        let mut p = CqlfProblem::new(
            loops.iter().map(|l| l.augmented.clone()).collect(),
            loops.iter().map(|l| alpha_from_gamma(gamma, l.h)).collect(),
        )?;
        p.gamma = Some(gamma);
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CqlfCertificate {
    #[serde(serialize_with = "ser_matrix", deserialize_with = "de_matrix")]
    pub p: Matrix,
    pub min_eigenvalue: f64,
    /// Largest eigenvalue of `Abb_jᵀ P Abb_j - (1 + α_j) P` over `j`.
    pub max_residual: f64,
    pub iterations: usize,
}

fn ser_matrix<S: serde::Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(linalg::to_rows(m))
}

fn de_matrix<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Matrix, D::Error> {
    let rows = Vec::<Vec<f64>>::deserialize(d)?;
    linalg::from_rows(&rows).map_err(serde::de::Error::custom)
}

/// Why no common quadratic Lyapunov function can exist.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InfeasibilityWitness {
    /// A subsystem is not Schur stable.
    UnstableSubsystem { index: usize, spectral_radius: f64 },
    /// A subsystem is stable but cannot decay at the requested rate:
    /// `ρ(Abb_j)² > 1 + α_j`.
    DecayUnattainable { index: usize, spectral_radius: f64 },
    /// A product of two rate-scaled subsystems grows, so some switching
    /// sequence defeats every quadratic function.
    UnstableProduct { first: usize, second: usize, spectral_radius: f64 },
}

#[derive(Debug, Clone)]
pub enum CqlfOutcome {
    Feasible(CqlfCertificate),
    Infeasible(InfeasibilityWitness),
    /// Iteration budget spent without a certificate or a witness.
    Undecided { best_residual: f64, iterations: usize },
}

impl CqlfOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, CqlfOutcome::Feasible(_))
    }

    pub fn certificate(&self) -> Option<&CqlfCertificate> {
        match self {
            CqlfOutcome::Feasible(c) => Some(c),
            _ => None,
        }
    }

    /// Violation used to rank candidate menus; zero when feasible.
    pub fn violation(&self) -> f64 {
        match self {
            CqlfOutcome::Feasible(_) => 0.0,
            CqlfOutcome::Infeasible(_) => f64::INFINITY,
            CqlfOutcome::Undecided { best_residual, .. } => best_residual.max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CqlfOptions {
    pub max_iterations: usize,
    /// Certificate tolerance on both families of constraints.
    pub tolerance: f64,
    /// Margin in the decrease condition, relative to `trace P = n`, at
    /// which the search stops early.
    pub margin: f64,
}

impl Default for CqlfOptions {
    fn default() -> Self {
        CqlfOptions {
            max_iterations: 2_000,
            tolerance: 1e-8,
            margin: 1e-6,
        }
    }
}

/// Smallest eigenvalue of `P` and largest LMI residual, recomputed from
/// scratch.
pub fn verify_certificate(problem: &CqlfProblem, p: &Matrix) -> (f64, f64) {
    let min_eig = linalg::min_sym_eigenvalue(p);
    let residual = problem
        .matrices
        .iter()
        .zip(&problem.alphas)
        .map(|(m, a)| linalg::max_sym_eigenvalue(&(m.transpose() * p * m - p * (1.0 + a))))
        .fold(f64::NEG_INFINITY, f64::max);
    (min_eig, residual)
}

pub fn find_cqlf(problem: &CqlfProblem) -> CqlfOutcome {
    find_cqlf_with(problem, &CqlfOptions::default())
}

pub fn find_cqlf_with(problem: &CqlfProblem, opts: &CqlfOptions) -> CqlfOutcome {
    if let Some(w) = witness(problem) {
        return CqlfOutcome::Infeasible(w);
    }
    let n = problem.dim();
    let scaled: Vec<Matrix> = problem
        .matrices
        .iter()
        .zip(&problem.alphas)
        .map(|(m, a)| m / (1.0 + a).sqrt())
        .collect();

    let accept = |p: &Matrix, iterations: usize| -> Option<CqlfCertificate> {
        let p = normalize(p, n);
        let (min_eig, residual) = verify_certificate(problem, &p);
        (min_eig > opts.tolerance && residual <= opts.tolerance).then_some(CqlfCertificate {
            p,
            min_eigenvalue: min_eig,
            max_residual: residual,
            iterations,
        })
    };

    // Lyapunov solutions of each subsystem and their average.
    let eye = Matrix::identity(n, n);
    let mut lyap = Vec::new();
    for s in &scaled {
        match linalg::discrete_lyapunov(s, &eye) {
            Ok(x) => lyap.push(normalize(&x, n)),
            Err(_) => return CqlfOutcome::Undecided { best_residual: f64::INFINITY, iterations: 0 },
        }
    }
    let average = normalize(&lyap.iter().fold(Matrix::zeros(n, n), |acc, x| acc + x), n);
    for cand in lyap.iter().chain(std::iter::once(&average)) {
        if let Some(cert) = accept(cand, 0) {
            return CqlfOutcome::Feasible(cert);
        }
    }

    // Work in coordinates where the averaged solution is the identity.
    let (t, t_inv) = match sqrt_and_inverse(&average) {
        Some(v) => v,
        None => return CqlfOutcome::Undecided { best_residual: f64::INFINITY, iterations: 0 },
    };
    let transformed: Vec<Matrix> = scaled.iter().map(|s| &t * s * &t_inv).collect();
    barrier_search(&transformed, opts, |p, it| accept(&(&t * p * &t), it))
}

/// Symmetric basis of the trace-zero subspace.
fn trace_free_basis(n: usize) -> Vec<Matrix> {
    let mut basis = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let mut e = Matrix::zeros(n, n);
            e[(a, b)] = std::f64::consts::FRAC_1_SQRT_2;
            e[(b, a)] = std::f64::consts::FRAC_1_SQRT_2;
            basis.push(e);
        }
    }
    for a in 0..n.saturating_sub(1) {
        let mut e = Matrix::zeros(n, n);
        e[(a, a)] = 1.0;
        e[(n - 1, n - 1)] = -1.0;
        basis.push(e);
    }
    basis
}

/// Log-det barrier method for `max t` subject to `P ⪰ tI` and
/// `P - MᵀPM ⪰ tI` for every `M`, with `trace P = n`. Any iterate with
/// `t > 0` is offered to `accept`.
fn barrier_search(
    mats: &[Matrix],
    opts: &CqlfOptions,
    accept: impl Fn(&Matrix, usize) -> Option<CqlfCertificate>,
) -> CqlfOutcome {
    let n = mats[0].nrows();
    let eye = Matrix::identity(n, n);
    let basis = trace_free_basis(n);
    let d = basis.len() + 1;
    // Constraint j is G_j(z) = base_j + Σ z_k dirs_j[k]; constraint 0 is P itself.
    let lyap = |m: &Matrix, e: &Matrix| e - m.transpose() * e * m;
    let mut bases = vec![eye.clone()];
    let mut dirs = vec![basis.iter().cloned().chain(std::iter::once(-&eye)).collect::<Vec<_>>()];
    for m in mats {
        bases.push(lyap(m, &eye));
        dirs.push(basis.iter().map(|e| lyap(m, e)).chain(std::iter::once(-&eye)).collect());
    }
    let build = |z: &[f64], j: usize| -> Matrix {
        let mut g = bases[j].clone();
        for (k, dk) in dirs[j].iter().enumerate() {
            g += dk * z[k];
        }
        g
    };
    let pos_def = |z: &[f64]| -> Option<Vec<Matrix>> {
        (0..bases.len())
            .map(|j| {
                let g = linalg::symmetrize(&build(z, j));
                g.clone().cholesky().map(|c| c.inverse())
            })
            .collect()
    };
    let log_det_sum = |z: &[f64]| -> Option<f64> {
        (0..bases.len())
            .map(|j| {
                linalg::symmetrize(&build(z, j))
                    .cholesky()
                    .map(|c| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
            })
            .sum()
    };
    let p_of = |z: &[f64]| -> Matrix {
        let mut p = eye.clone();
        for (k, e) in basis.iter().enumerate() {
            p += e * z[k];
        }
        p
    };

    let mut z = vec![0.0; d];
    z[d - 1] = bases.iter().map(linalg::min_sym_eigenvalue).fold(f64::INFINITY, f64::min) - 1.0;
    let barrier_weight = (bases.len() * n) as f64;
    let mut s = 1.0;
    let mut iterations = 0;
    let mut best_t = z[d - 1];
    while iterations < opts.max_iterations {
        for _ in 0..100 {
            iterations += 1;
            let Some(inv) = pos_def(&z) else { break };
            let mut grad = vec![0.0; d];
            grad[d - 1] = -s;
            let mut hess = Matrix::zeros(d, d);
            for (j, gi) in inv.iter().enumerate() {
                let prods: Vec<Matrix> = dirs[j].iter().map(|a| gi * a).collect();
                for k in 0..d {
                    grad[k] -= prods[k].trace();
                    for l in k..d {
                        let h = prods[k].component_mul(&prods[l].transpose()).sum();
                        hess[(k, l)] += h;
                        if l != k {
                            hess[(l, k)] += h;
                        }
                    }
                }
            }
            let g = nalgebra::DVector::from_vec(grad);
            let Some(step) = hess.clone().cholesky().map(|c| c.solve(&(-&g))) else { break };
            let decrement = -g.dot(&step);
            let f = |z: &[f64]| log_det_sum(z).map(|ld| -s * z[d - 1] - ld);
            let f0 = f(&z).unwrap_or(f64::INFINITY);
            let mut alpha = 1.0;
            let mut next = None;
            while alpha > 1e-12 {
                let cand: Vec<f64> = z.iter().zip(step.iter()).map(|(a, b)| a + alpha * b).collect();
                if let Some(fc) = f(&cand) {
                    if fc <= f0 - 0.25 * alpha * decrement {
                        next = Some(cand);
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some(next) = next else { break };
            z = next;
            best_t = best_t.max(z[d - 1]);
            if z[d - 1] >= opts.margin {
                if let Some(cert) = accept(&p_of(&z), iterations) {
                    return CqlfOutcome::Feasible(cert);
                }
            }
            if decrement < 1e-10 || iterations >= opts.max_iterations {
                break;
            }
        }
        if z[d - 1] > 0.0 {
            if let Some(cert) = accept(&p_of(&z), iterations) {
                return CqlfOutcome::Feasible(cert);
            }
        }
        // The optimum lies within barrier_weight / s of the current t.
        if z[d - 1] + barrier_weight / s < 0.0 || s > 1e12 {
            break;
        }
        s *= 10.0;
    }
    CqlfOutcome::Undecided {
        best_residual: -best_t,
        iterations,
    }
}

/// Cheap certificates of infeasibility.
pub fn witness(problem: &CqlfProblem) -> Option<InfeasibilityWitness> {
    for (index, m) in problem.matrices.iter().enumerate() {
        let rho = linalg::spectral_radius(m);
        if rho >= 1.0 {
            return Some(InfeasibilityWitness::UnstableSubsystem { index, spectral_radius: rho });
        }
    }
    let scaled: Vec<Matrix> = problem
        .matrices
        .iter()
        .zip(&problem.alphas)
        .map(|(m, a)| m / (1.0 + a).sqrt())
        .collect();
    for (index, s) in scaled.iter().enumerate() {
        let rho = linalg::spectral_radius(s);
        if rho > 1.0 + 1e-12 {
            return Some(InfeasibilityWitness::DecayUnattainable {
                index,
                spectral_radius: linalg::spectral_radius(&problem.matrices[index]),
            });
        }
    }
    for i in 0..scaled.len() {
        for j in i + 1..scaled.len() {
            let rho = linalg::spectral_radius(&(&scaled[i] * &scaled[j]));
            if rho > 1.0 + 1e-9 {
                return Some(InfeasibilityWitness::UnstableProduct {
                    first: i,
                    second: j,
                    spectral_radius: rho,
                });
            }
        }
    }
    None
}

fn normalize(p: &Matrix, n: usize) -> Matrix {
    let p = linalg::symmetrize(p);
    let tr = p.trace();
    if tr > 0.0 {
        p * (n as f64 / tr)
    } else {
        p
    }
}

fn sqrt_and_inverse(p: &Matrix) -> Option<(Matrix, Matrix)> {
    let eig = SymmetricEigen::new(linalg::symmetrize(p));
    if eig.eigenvalues.iter().any(|l| *l <= 0.0) {
        return None;
    }
    let q = &eig.eigenvectors;
    let root = q * Matrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * q.transpose();
    let inv = q * Matrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * q.transpose();
    Some((root, inv))
}

/// Why a period left the menu.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedPeriod {
    pub period: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerformancePruning {
    pub retained: Vec<u64>,
    pub dropped: Vec<DroppedPeriod>,
    pub certificate: Option<CqlfCertificate>,
    pub gamma: f64,
}

/// Shrinks `candidates` to a set sharing a common Lyapunov function.
///
/// Periods whose loop cannot be designed or is unstable go first. After
/// that, while the set is not certified, the non-minimum period whose
/// removal leaves the smallest violation is dropped. An undecided search
/// counts as infeasible.
pub fn prune_performance(plant: &PlantModel, candidates: &[u64], delta: f64, gamma: f64) -> Result<PerformancePruning> {
    let mut periods: Vec<u64> = candidates.to_vec();
    periods.sort_unstable();
    periods.dedup();
    let Some(&min_period) = periods.first() else {
        return Err(Error::config("empty period menu"));
    };
    let mut dropped = Vec::new();
    let mut loops = Vec::new();
    for &p in &periods {
        match DiscretizedLoop::design(plant, p, delta) {
            Ok(l) => loops.push(l),
            Err(e) if p == min_period => {
                return Err(Error::NotStabilizable(format!("minimum period {p}: {e}")));
            }
            Err(e) => dropped.push(DroppedPeriod {
                period: p,
                reason: e.to_string(),
            }),
        }
    }
    loop {
        let problem = CqlfProblem::from_loops(&loops, gamma)?;
        let outcome = find_cqlf(&problem);
        if let CqlfOutcome::Feasible(cert) = outcome {
            return Ok(PerformancePruning {
                retained: loops.iter().map(|l| l.period_slots).collect(),
                dropped,
                certificate: Some(cert),
                gamma,
            });
        }
        if loops.len() == 1 {
            return Err(Error::NotStabilizable(format!(
                "no common Lyapunov function even for the minimum period {min_period} at decay rate {gamma}"
            )));
        }
        let mut best: Option<(usize, f64)> = None;
        for k in 1..loops.len() {
            let rest: Vec<DiscretizedLoop> = loops
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, l)| l.clone())
                .collect();
            let v = find_cqlf(&CqlfProblem::from_loops(&rest, gamma)?).violation();
            if best.is_none_or(|(_, bv)| v < bv) {
                best = Some((k, v));
            }
        }
        let (k, _) = best.expect("at least two loops");
        let removed = loops.remove(k);
        dropped.push(DroppedPeriod {
            period: removed.period_slots,
            reason: match &outcome {
                CqlfOutcome::Infeasible(w) => format!("no common Lyapunov function: {w:?}"),
                _ => "no common Lyapunov function found within the iteration budget".into(),
            },
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_examples() {
        let p = CqlfProblem::new(vec![scalar(0.5)], vec![-0.1]).unwrap();
        let cert = find_cqlf(&p).certificate().cloned().unwrap();
        assert!((cert.p[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((cert.max_residual - (0.25 - 0.9)).abs() < 1e-12);

        let p = CqlfProblem::new(vec![scalar(0.5), scalar(0.8)], vec![-0.1, -0.1]).unwrap();
        assert!(find_cqlf(&p).is_feasible());
    }

    #[test]
    fn unstable_subsystem_is_a_witness() {
        let p = CqlfProblem::new(vec![scalar(0.5), scalar(1.1)], vec![-0.1, -0.1]).unwrap();
        assert!(matches!(
            find_cqlf(&p),
            CqlfOutcome::Infeasible(InfeasibilityWitness::UnstableSubsystem { index: 1, .. })
        ));
    }

    #[test]
    fn alpha_validation() {
        assert!(CqlfProblem::new(vec![scalar(0.5)], vec![0.1]).is_err());
        assert!((alpha_from_gamma(-1.0, 0.01) - ((-0.02f64).exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn bundled_menus_are_kept() {
        let plants = bundled::plants();
        let ts = bundled::tab3_low();
        for t in &ts.trusted {
            let cfg = plants.get(t.plant.as_deref().unwrap()).unwrap();
            let out = prune_performance(&cfg.model().unwrap(), &t.period_menu, ts.delta, cfg.gues_rate).unwrap();
            assert_eq!(out.retained, t.period_menu, "{}", t.name);
            let cert = out.certificate.unwrap();
            assert!(cert.min_eigenvalue > 1e-8);
        }
    }

    #[test]
    fn identical_subsystems_keep_the_whole_menu() {
        let a = Matrix::from_row_slice(2, 2, &[0.6, 0.3, -0.2, 0.7]);
        let p = CqlfProblem::new(vec![a.clone(), a.clone(), a], vec![-0.05; 3]).unwrap();
        assert!(find_cqlf(&p).is_feasible());
    }
}

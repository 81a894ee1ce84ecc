//! Convex quadratic matrix programs with trace-quadratic constraints.
//!
//! ```text
//! minimize    Tr(Pᴴ A₀ P) + 2·Re Tr(B₀ᴴ P) + c₀
//! subject to  Tr(Pᴴ Aᵢ P) + 2·Re Tr(Bᵢᴴ P) + cᵢ ≤ 0,   i = 1..m
//! ```
//!
//! All `Aᵢ` are Hermitian PSD. The problem is solved through its dual: for
//! multipliers `μ ≥ 0` the Lagrangian has the closed-form minimizer
//! `P(μ) = −A(μ)⁻¹ B(μ)` with `A(μ) = A₀ + Σ μᵢAᵢ` and `B(μ) = B₀ + Σ μᵢBᵢ`,
//! and the gradient of the concave dual function is the vector of constraint
//! values at `P(μ)`. With a strictly feasible point strong duality holds, so
//! the duality gap at the returned point certifies global optimality.
//!
//! The semidefinite lift (`Ωᵢ` and the rank-one `X = [vec P; 1][vec P; 1]ᴴ`)
//! is provided for consistency checks: `Tr(Ωᵢ X) ` reproduces every
//! quadratic form above.

use crate::error::{Error, Result};
use crate::matkit::{
    hpd_solve, kron, real, trace_of_product, vec, CMatrix, HermitianMatrix, HERMITIAN_TOL,
};

/// Maximum number of projected-gradient iterations.
pub const MAX_DUAL_ITERS: usize = 10_000;

/// Relative ridge added when `A(μ)` is singular.
const RIDGE: f64 = 1e-10;

/// Sufficient-increase constant of the backtracking line search.
const ARMIJO: f64 = 1e-4;

/// `Tr(Pᴴ·quad·P) + 2·Re Tr(linᴴ·P) + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceQuadratic {
    pub quad: HermitianMatrix,
    pub lin: CMatrix,
    pub offset: f64,
}

impl TraceQuadratic {
    pub fn new(quad: HermitianMatrix, lin: CMatrix, offset: f64) -> Self {
        Self { quad, lin, offset }
    }

    /// Pure quadratic with zero linear term.
    pub fn homogeneous(quad: HermitianMatrix, cols: usize, offset: f64) -> Self {
        let n = quad.dim();
        Self {
            quad,
            lin: CMatrix::zeros(n, cols),
            offset,
        }
    }

    pub fn eval(&self, p: &CMatrix) -> f64 {
        let quad = trace_of_product(&p.adjoint(), &(self.quad.as_matrix() * p)).re;
        let lin = trace_of_product(&self.lin.adjoint(), p).re;
        quad + 2.0 * lin + self.offset
    }

    fn has_linear_term(&self) -> bool {
        self.lin.iter().any(|z| z.re != 0.0 || z.im != 0.0)
    }
}

/// Objective plus inequality constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct QmpProblem {
    pub objective: TraceQuadratic,
    pub constraints: Vec<TraceQuadratic>,
}

impl QmpProblem {
    /// Checks that all terms share the variable shape and every quadratic
    /// matrix is PSD.
    pub fn new(objective: TraceQuadratic, constraints: Vec<TraceQuadratic>) -> Result<Self> {
        let shape = objective.lin.shape();
        for term in std::iter::once(&objective).chain(&constraints) {
            crate::error::check_dims("qmp linear term", shape, term.lin.shape())?;
            crate::error::check_dims("qmp quadratic term", (shape.0, shape.0), term.quad.shape())?;
            let ev = term.quad.eigenvalues();
            let radius = ev.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if ev[0] < -HERMITIAN_TOL * radius.max(1.0) {
                return Err(Error::NotPositiveSemidefinite { eigenvalue: ev[0] });
            }
        }
        Ok(Self {
            objective,
            constraints,
        })
    }

    /// Shape of the decision variable `P`.
    pub fn var_shape(&self) -> (usize, usize) {
        self.objective.lin.shape()
    }

    /// `Σ μᵢ·termᵢ` added to the objective, as (quad, lin, offset).
    fn lagrangian(&self, mu: &[f64]) -> (CMatrix, CMatrix, f64) {
        let mut quad = self.objective.quad.as_matrix().clone();
        let mut lin = self.objective.lin.clone();
        let mut offset = self.objective.offset;
        for (c, &m) in self.constraints.iter().zip(mu) {
            if m != 0.0 {
                quad += c.quad.as_matrix() * real(m);
                lin += &c.lin * real(m);
                offset += m * c.offset;
            }
        }
        (quad, lin, offset)
    }
}

/// Optimal point with multipliers and a KKT certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct QmpSolution {
    pub point: CMatrix,
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    pub objective: f64,
    pub iterations: usize,
}

/// Components of the KKT residual at `(P, μ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktReport {
    /// `max_i max(hᵢ, 0) / |cᵢ|`.
    pub primal: f64,
    /// `max_i |μᵢ·hᵢ| / (1 + |objective|)`.
    pub complementarity: f64,
    /// `‖A(μ)P + B(μ)‖_F / (1 + ‖B(μ)‖_F)`.
    pub stationarity: f64,
    /// Most negative multiplier, as a positive number (0 when μ ≥ 0).
    pub dual: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.primal
            .max(self.complementarity)
            .max(self.stationarity)
            .max(self.dual)
    }
}

pub fn qmp_objective(prob: &QmpProblem, p: &CMatrix) -> f64 {
    prob.objective.eval(p)
}

pub fn constraint_values(prob: &QmpProblem, p: &CMatrix) -> Vec<f64> {
    prob.constraints.iter().map(|c| c.eval(p)).collect()
}

/// Minimizer of the Lagrangian at `mu`.
pub fn inner_minimizer(prob: &QmpProblem, mu: &[f64]) -> Result<CMatrix> {
    let (quad, lin, _) = prob.lagrangian(mu);
    let neg_lin = -lin;
    match hpd_solve(&quad, &neg_lin, "qmp lagrangian") {
        Ok(p) => Ok(p),
        Err(Error::Singular { .. }) => {
            let n = quad.nrows();
            let tr = prob.objective.quad.trace();
            let base = if tr > 0.0 { tr / n as f64 } else { 1.0 };
            let ridged = quad + CMatrix::identity(n, n) * real(RIDGE * base);
            hpd_solve(&ridged, &neg_lin, "qmp lagrangian (ridged)")
        }
        Err(e) => Err(e),
    }
}

/// Dual function `g(μ) = min_P L(P, μ)`.
pub fn dual_value(prob: &QmpProblem, mu: &[f64]) -> Result<f64> {
    let p = inner_minimizer(prob, mu)?;
    Ok(lagrangian_value(prob, &p, mu))
}

fn lagrangian_value(prob: &QmpProblem, p: &CMatrix, mu: &[f64]) -> f64 {
    // At the minimizer, L = c(μ) + Re Tr(B(μ)ᴴ P).
    let (_, lin, offset) = prob.lagrangian(mu);
    offset + trace_of_product(&lin.adjoint(), p).re
}

pub fn kkt_report(prob: &QmpProblem, p: &CMatrix, mu: &[f64]) -> KktReport {
    let h = constraint_values(prob, p);
    let obj = qmp_objective(prob, p);
    let primal = h
        .iter()
        .zip(&prob.constraints)
        .map(|(&v, c)| v.max(0.0) / c.offset.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let complementarity = h
        .iter()
        .zip(mu)
        .map(|(&v, &m)| (m * v).abs())
        .fold(0.0, f64::max)
        / (1.0 + obj.abs());
    let (quad, lin, _) = prob.lagrangian(mu);
    let stationarity = (&quad * p + &lin).norm() / (1.0 + lin.norm());
    let dual = mu.iter().map(|&m| (-m).max(0.0)).fold(0.0, f64::max);
    KktReport {
        primal,
        complementarity,
        stationarity,
        dual,
    }
}

struct DualPoint {
    p: CMatrix,
    grad: Vec<f64>,
    value: f64,
}

fn evaluate(prob: &QmpProblem, mu: &[f64]) -> Result<DualPoint> {
    let p = inner_minimizer(prob, mu)?;
    let grad = constraint_values(prob, &p);
    let value = lagrangian_value(prob, &p, mu);
    Ok(DualPoint { p, grad, value })
}

/// Solves the QMP by projected gradient ascent on the dual with
/// backtracking. Stops once primal violation (relative to `|cᵢ|`) and
/// complementary slackness (relative to `1 + |objective|`) are below `tol`.
pub fn solve_dual(prob: &QmpProblem, tol: f64) -> Result<QmpSolution> {
    for (index, c) in prob.constraints.iter().enumerate() {
        if !c.has_linear_term() {
            if c.offset > 0.0 {
                return Err(Error::Infeasible {
                    index: index + 1,
                    offset: c.offset,
                });
            }
            if c.offset == 0.0 {
                return Err(Error::NotStrictlyFeasible { index: index + 1 });
            }
        }
    }

    let m = prob.constraints.len();
    let mut mu = vec![0.0; m];
    let mut cur = evaluate(prob, &mu)?;
    let mut step = 1.0;
    let mut last_residual = f64::INFINITY;

    for iteration in 0..MAX_DUAL_ITERS {
        let report = kkt_report(prob, &cur.p, &mu);
        last_residual = report.primal.max(report.complementarity);
        if last_residual <= tol {
            return Ok(QmpSolution {
                objective: qmp_objective(prob, &cur.p),
                kkt_residual: report.max(),
                point: cur.p,
                multipliers: mu,
                iterations: iteration,
            });
        }

        let mut accepted = false;
        while step > 1e-300 {
            let trial: Vec<f64> = mu
                .iter()
                .zip(&cur.grad)
                .map(|(&m, &g)| (m + step * g).max(0.0))
                .collect();
            let ascent: f64 = trial
                .iter()
                .zip(&mu)
                .zip(&cur.grad)
                .map(|((t, m), g)| (t - m) * g)
                .sum();
            if ascent <= 0.0 {
                // the projected step vanished
                break;
            }
            let next = evaluate(prob, &trial)?;
            // a non-negative end slope also proves ascent, g being concave
            let end_slope: f64 = trial
                .iter()
                .zip(&mu)
                .zip(&next.grad)
                .map(|((t, m), g)| (t - m) * g)
                .sum();
            if next.value >= cur.value + ARMIJO * ascent || end_slope >= 0.0 {
                mu = trial;
                cur = next;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::DualNotConverged {
                iterations: iteration,
                residual: last_residual,
            });
        }
        step *= 2.0;
    }
    Err(Error::DualNotConverged {
        iterations: MAX_DUAL_ITERS,
        residual: last_residual,
    })
}

/// Duality gap `objective(P) − g(μ)` at a solution; a value at or below
/// the solve tolerance certifies global optimality, hence a tight
/// semidefinite relaxation at this instance.
pub fn certify_sdr_gap(prob: &QmpProblem, sol: &QmpSolution) -> Result<f64> {
    Ok(qmp_objective(prob, &sol.point) - dual_value(prob, &sol.multipliers)?)
}

fn omega(term: &TraceQuadratic) -> HermitianMatrix {
    let (n, k) = term.lin.shape();
    let dim = n * k;
    let mut out = CMatrix::zeros(dim + 1, dim + 1);
    out.view_mut((0, 0), (dim, dim))
        .copy_from(&kron(&CMatrix::identity(k, k), term.quad.as_matrix()));
    let b = vec(&term.lin);
    out.view_mut((0, dim), (dim, 1)).copy_from(&b);
    out.view_mut((dim, 0), (1, dim)).copy_from(&b.adjoint());
    out[(dim, dim)] = real(term.offset);
    HermitianMatrix::symmetrize(out)
}

/// Lifted matrices `Ωᵢ = [[I ⊗ Aᵢ, vec Bᵢ], [vec Bᵢᴴ, cᵢ]]`, objective first.
pub fn sdr_lift(prob: &QmpProblem) -> Vec<HermitianMatrix> {
    std::iter::once(&prob.objective)
        .chain(&prob.constraints)
        .map(omega)
        .collect()
}

/// Rank-one lift `[vec P; 1]·[vec P; 1]ᴴ`.
pub fn lift_point(p: &CMatrix) -> HermitianMatrix {
    let dim = p.len();
    let mut x = CMatrix::zeros(dim + 1, 1);
    x.view_mut((0, 0), (dim, 1)).copy_from(&vec(p));
    x[(dim, 0)] = real(1.0);
    let mut outer = &x * x.adjoint();
    outer[(dim, dim)] = real(1.0);
    HermitianMatrix::symmetrize(outer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkit::sample_cgaussian;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(x: f64) -> HermitianMatrix {
        HermitianMatrix::scaled_identity(1, x)
    }

    fn c1(x: f64) -> CMatrix {
        CMatrix::from_element(1, 1, real(x))
    }

    fn hand_problem() -> QmpProblem {
        QmpProblem::new(
            TraceQuadratic::new(scalar(1.0), c1(-1.0), 0.0),
            vec![
                TraceQuadratic::homogeneous(scalar(1.0), 1, -0.25),
                TraceQuadratic::homogeneous(scalar(1.0), 1, -100.0),
            ],
        )
        .unwrap()
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, k: usize, budget: f64) -> QmpProblem {
        let psd = |rng: &mut ChaCha8Rng| {
            let x = sample_cgaussian(n, n, rng);
            HermitianMatrix::symmetrize(&x * x.adjoint())
        };
        QmpProblem::new(
            TraceQuadratic::new(psd(rng), sample_cgaussian(n, k, rng) * real(3.0), 2.0),
            vec![
                TraceQuadratic::homogeneous(HermitianMatrix::identity(n), k, -budget),
                TraceQuadratic::homogeneous(psd(rng), k, -budget),
            ],
        )
        .unwrap()
    }

    #[test]
    fn objective_basics() {
        let prob = QmpProblem::new(
            TraceQuadratic::homogeneous(HermitianMatrix::identity(2), 2, 0.0),
            vec![],
        )
        .unwrap();
        assert_eq!(qmp_objective(&prob, &CMatrix::identity(2, 2)), 2.0);
        let prob = hand_problem();
        assert_eq!(qmp_objective(&prob, &c1(0.0)), 0.0);
    }

    #[test]
    fn hand_solved_instance() {
        let prob = hand_problem();
        let sol = solve_dual(&prob, 1e-12).unwrap();
        assert!((sol.point[(0, 0)].re - 0.5).abs() < 1e-10);
        assert!((sol.multipliers[0] - 1.0).abs() < 1e-8);
        assert_eq!(sol.multipliers[1], 0.0);
        assert!(certify_sdr_gap(&prob, &sol).unwrap().abs() <= 1e-8);
    }

    #[test]
    fn interior_optimum_has_zero_multipliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prob = random_problem(&mut rng, 3, 2, 1e6);
        let sol = solve_dual(&prob, 1e-12).unwrap();
        assert_eq!(sol.multipliers, vec![0.0, 0.0]);
        let (quad, lin, _) = prob.lagrangian(&[0.0, 0.0]);
        let unconstrained = -quad.try_inverse().unwrap() * lin;
        assert!((&sol.point - unconstrained).norm() < 1e-10);
        assert!(certify_sdr_gap(&prob, &sol).unwrap().abs() <= 1e-8);
    }

    #[test]
    fn zero_linear_term_gives_zero_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut prob = random_problem(&mut rng, 3, 2, 4.0);
        prob.objective.lin = CMatrix::zeros(3, 2);
        let sol = solve_dual(&prob, 1e-12).unwrap();
        assert_eq!(sol.point, CMatrix::zeros(3, 2));
    }

    #[test]
    fn infeasible_offsets_are_rejected() {
        let mut prob = hand_problem();
        prob.constraints[1].offset = 1.0;
        assert!(matches!(
            solve_dual(&prob, 1e-10),
            Err(Error::Infeasible { index: 2, .. })
        ));
        prob.constraints[1].offset = 0.0;
        assert!(matches!(
            solve_dual(&prob, 1e-10),
            Err(Error::NotStrictlyFeasible { index: 2 })
        ));
    }

    #[test]
    fn singular_objective_uses_ridge() {
        let prob = QmpProblem::new(
            TraceQuadratic::homogeneous(HermitianMatrix::zeros(2), 1, 0.0),
            vec![TraceQuadratic::homogeneous(
                HermitianMatrix::identity(2),
                1,
                -1.0,
            )],
        )
        .unwrap();
        let sol = solve_dual(&prob, 1e-10).unwrap();
        assert_eq!(sol.point, CMatrix::zeros(2, 1));
    }

    #[test]
    fn non_psd_problem_is_rejected() {
        let bad = QmpProblem::new(TraceQuadratic::homogeneous(scalar(-1.0), 1, 0.0), vec![]);
        assert!(matches!(bad, Err(Error::NotPositiveSemidefinite { .. })));
    }

    #[test]
    fn active_constraints_beat_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let prob = random_problem(&mut rng, 4, 4, 1.0);
            let sol = solve_dual(&prob, 1e-12).unwrap();
            let report = kkt_report(&prob, &sol.point, &sol.multipliers);
            assert!(report.max() <= 1e-8, "{report:?}");
            assert!(certify_sdr_gap(&prob, &sol).unwrap().abs() <= 1e-8);
            for _ in 0..200 {
                let mut p = sample_cgaussian(4, 4, &mut rng);
                // shrink onto the feasible set
                let h = constraint_values(&prob, &p);
                let worst = prob
                    .constraints
                    .iter()
                    .zip(&h)
                    .map(|(c, v)| (v - c.offset) / -c.offset)
                    .fold(0.0, f64::max);
                p *= real(rng.random::<f64>() / worst.sqrt());
                assert!(qmp_objective(&prob, &p) >= sol.objective - 1e-9);
            }
        }
    }

    #[test]
    fn lift_point_structure() {
        let x = lift_point(&CMatrix::zeros(2, 2));
        assert_eq!(x[(4, 4)], real(1.0));
        assert_eq!(x.iter().filter(|z| z.norm() != 0.0).count(), 1);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = lift_point(&sample_cgaussian(3, 2, &mut rng));
        assert_eq!(x[(6, 6)], real(1.0));
        let ev = x.eigenvalues();
        assert!(ev[ev.len() - 2].abs() <= 1e-10 * ev[ev.len() - 1]);
        assert!(ev[0] >= -1e-10 * ev[ev.len() - 1]);
    }

    #[test]
    fn lift_of_identity_blocks() {
        let prob = QmpProblem::new(
            TraceQuadratic::homogeneous(HermitianMatrix::identity(2), 3, 0.0),
            vec![],
        )
        .unwrap();
        let omegas = sdr_lift(&prob);
        let mut want = CMatrix::identity(7, 7);
        want[(6, 6)] = real(0.0);
        assert_eq!(omegas[0].as_matrix(), &want);
    }

    #[test]
    fn weak_duality_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let prob = random_problem(&mut rng, 3, 2, 2.0);
        for _ in 0..100 {
            let mu = [rng.random::<f64>() * 5.0, rng.random::<f64>() * 5.0];
            let g = dual_value(&prob, &mu).unwrap();
            let mut p = sample_cgaussian(3, 2, &mut rng);
            let h = constraint_values(&prob, &p);
            let worst = prob
                .constraints
                .iter()
                .zip(&h)
                .map(|(c, v)| (v - c.offset) / -c.offset)
                .fold(0.0, f64::max);
            p *= real(1.0 / worst.sqrt().max(1.0));
            assert!(g <= qmp_objective(&prob, &p) + 1e-10);
        }
    }

    use rand::Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn lift_reproduces_every_quadratic(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prob = random_problem(&mut rng, 3, 2, 2.0);
            let p = sample_cgaussian(3, 2, &mut rng);
            let x = lift_point(&p);
            let omegas = sdr_lift(&prob);
            let mut direct = vec![qmp_objective(&prob, &p)];
            direct.extend(constraint_values(&prob, &p));
            for (om, d) in omegas.iter().zip(direct) {
                let lifted = trace_of_product(om, &x);
                prop_assert!((lifted.re - d).abs() <= 1e-10 * (1.0 + d.abs()));
                prop_assert!(lifted.im.abs() <= 1e-10 * (1.0 + d.abs()));
                prop_assert!(crate::matkit::hermitian_asymmetry(om) == 0.0);
            }
        }
    }
}

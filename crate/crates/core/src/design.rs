//! Block-wise minimization of the averaged MSE.
//!
//! Each block has an exact solver:
//!
//! * equalizer: the Wiener solution for fixed relay matrix and precoder;
//! * relay matrix: a ridge-type closed form in the power multiplier `λ`,
//!   with `λ` found by bisection on the relay power equation;
//! * precoder: a convex quadratic matrix program solved through its dual.
//!
//! [`alternate`] cycles through the three until the MSE change drops below
//! a threshold. Every block step is an exact minimization, so the MSE can
//! only go down; an increase is reported as an error.

use std::fmt::Write as _;
use std::io;

use log::debug;

use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::matkit::{
    hpd_inverse, hpd_solve, identity_shaped, real, real_trace, CMatrix, HermitianMatrix,
};
use crate::objective::{
    averaged_congruence, mse, r_x, received_covariance, relay_tx_power, source_tx_power,
    PowerBudget, Transceiver,
};
use crate::qmp::{solve_dual, QmpProblem, QmpSolution, TraceQuadratic};

/// Maximum doublings of the multiplier bracket.
pub const MAX_BRACKET_DOUBLINGS: usize = 60;
/// Maximum bisection steps.
pub const MAX_BISECTION_STEPS: usize = 200;
/// Slack allowed for an MSE increase between iterations.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// Stopping rules for the alternating loop and its subproblems.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignConfig {
    /// Stop when `|MSE_i − MSE_{i−1}|` is at most this.
    pub tol_mse: f64,
    pub max_iters: usize,
    /// Relative tolerance on the relay power equation, `|f(λ) − P_r| ≤ tol·P_r`.
    pub tol_power: f64,
    /// Bisection also stops once the bracket is narrower than `tol·λ`.
    pub tol_lambda: f64,
    /// Primal/complementarity tolerance of the precoder program.
    pub tol_qmp: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            tol_mse: 1e-6,
            max_iters: 100,
            tol_power: 1e-12,
            tol_lambda: 1e-15,
            tol_qmp: 1e-12,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("tol_mse", self.tol_mse),
            ("tol_power", self.tol_power),
            ("tol_lambda", self.tol_lambda),
            ("tol_qmp", self.tol_qmp),
        ];
        for (name, v) in fields {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("{v} must be positive"),
                });
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iters",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// One row of the iteration trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    pub mse: f64,
    /// Relay power multiplier from the relay step.
    pub lambda: f64,
    /// Source and relay power multipliers from the precoder step.
    pub mu: [f64; 2],
    /// `P_s − Tr(PPᴴ)`.
    pub slack_source: f64,
    /// `P_r − Tr(F R_x Fᴴ)`.
    pub slack_relay: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterTrace {
    pub records: Vec<IterRecord>,
    pub converged: bool,
}

impl IterTrace {
    pub const CSV_HEADER: &'static str = "iteration,mse,lambda,mu1,mu2,slack_ps,slack_pr";

    pub fn mse_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mse).collect()
    }

    pub fn final_mse(&self) -> Option<f64> {
        self.records.last().map(|r| r.mse)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{:?},{:?},{:?}",
                r.iteration, r.mse, r.lambda, r.mu[0], r.mu[1], r.slack_source, r.slack_relay
            );
        }
        s
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }
}

/// Result of [`alternate`].
#[derive(Clone, Debug, PartialEq)]
pub struct DesignOutcome {
    pub transceiver: Transceiver,
    pub trace: IterTrace,
}

/// Wiener equalizer for fixed relay matrix and precoder.
pub fn g_step(relay: &CMatrix, precoder: &CMatrix, model: &ChannelModel) -> Result<CMatrix> {
    let cov = received_covariance(relay, precoder, model)?;
    let effective = model.est_rd() * relay * model.est_sr() * precoder;
    // G = Aᴴ C⁻¹  ⇔  Gᴴ = C⁻¹ A
    let gh = hpd_solve(&cov, &effective, "equalizer step")?;
    Ok(gh.adjoint())
}

/// Precomputed pieces of the relay step for fixed equalizer and precoder.
struct RelayProblem {
    /// `Ĥ_rdᴴ Gᴴ G Ĥ_rd + Ψ_rd·Tr(G Σ_rd Gᴴ)`
    curvature: CMatrix,
    /// `Ĥ_rdᴴ Gᴴ Pᴴ Ĥ_srᴴ R_x⁻¹`
    rhs: CMatrix,
    rx: HermitianMatrix,
}

impl RelayProblem {
    fn new(equalizer: &CMatrix, precoder: &CMatrix, model: &ChannelModel) -> Result<Self> {
        let rx = r_x(
            precoder,
            model.err_sr(),
            model.est_sr(),
            model.noise_relay(),
        )?;
        let curvature = equalizer_weight(equalizer, model)?;
        let rx_inv = hpd_inverse(&rx, "relay received covariance")?;
        let rhs = model.est_rd().adjoint()
            * equalizer.adjoint()
            * precoder.adjoint()
            * model.est_sr().adjoint()
            * rx_inv;
        Ok(Self { curvature, rhs, rx })
    }

    fn relay(&self, lambda: f64) -> Result<CMatrix> {
        let n = self.curvature.nrows();
        let a = &self.curvature + CMatrix::identity(n, n) * real(lambda);
        hpd_solve(&a, &self.rhs, "relay step")
    }

    fn power(&self, lambda: f64) -> Result<f64> {
        Ok(relay_tx_power(&self.relay(lambda)?, &self.rx))
    }

    fn is_trivial(&self) -> bool {
        self.rhs.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

/// `Ĥ_rdᴴ Gᴴ G Ĥ_rd + Ψ_rd·Tr(G Σ_rd Gᴴ)`, the second-hop weight seen by the
/// relay matrix.
fn equalizer_weight(equalizer: &CMatrix, model: &ChannelModel) -> Result<CMatrix> {
    let gh = equalizer * model.est_rd();
    let spread = real_trace(
        &(equalizer * model.err_rd().row_cov().as_matrix() * equalizer.adjoint()),
        "equalizer weight",
    )?;
    let m = gh.adjoint() * gh + model.err_rd().col_cov().as_matrix() * real(spread);
    Ok(HermitianMatrix::symmetrize(m).into_inner())
}

/// Relay matrix stationary for multiplier `lambda`.
pub fn f_of_lambda(
    lambda: f64,
    equalizer: &CMatrix,
    precoder: &CMatrix,
    model: &ChannelModel,
) -> Result<CMatrix> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("{lambda} must be non-negative"),
        });
    }
    RelayProblem::new(equalizer, precoder, model)?.relay(lambda)
}

/// Upper end of the multiplier bracket,
/// `sqrt(Tr(Ĥ_rdᴴGᴴPᴴĤ_srᴴ R_x⁻¹ Ĥ_sr P G Ĥ_rd) / P_r)`.
///
/// Since `(M + λI)⁻¹ ⪯ I/λ`, the relay power at this `λ` is at most `P_r`.
pub fn lambda_upper_bound(
    equalizer: &CMatrix,
    precoder: &CMatrix,
    model: &ChannelModel,
    relay_power: f64,
) -> Result<f64> {
    let rx = r_x(
        precoder,
        model.err_sr(),
        model.est_sr(),
        model.noise_relay(),
    )?;
    let rx_inv = hpd_inverse(&rx, "relay received covariance")?;
    let left = model.est_rd().adjoint()
        * equalizer.adjoint()
        * precoder.adjoint()
        * model.est_sr().adjoint();
    let numerator = real_trace(&(&left * rx_inv * left.adjoint()), "multiplier bound")?;
    Ok((numerator.max(0.0) / relay_power).sqrt())
}

/// Relay step output.
#[derive(Clone, Debug, PartialEq)]
pub struct RelayStep {
    pub relay: CMatrix,
    pub lambda: f64,
}

/// Optimal relay matrix for fixed equalizer and precoder under the relay
/// power budget.
///
/// Takes `λ = 0` when that is feasible; otherwise bisects the decreasing
/// relay power `f(λ)` for `f(λ) = P_r` and returns the feasible end of the
/// final bracket.
pub fn f_step(
    equalizer: &CMatrix,
    precoder: &CMatrix,
    model: &ChannelModel,
    relay_power: f64,
    cfg: &DesignConfig,
) -> Result<RelayStep> {
    let prob = RelayProblem::new(equalizer, precoder, model)?;
    if prob.is_trivial() {
        let shape = prob.rhs.shape();
        return Ok(RelayStep {
            relay: CMatrix::zeros(shape.0, shape.1),
            lambda: 0.0,
        });
    }
    let at_zero = match prob.relay(0.0) {
        Ok(f) => Some(f),
        Err(Error::Singular { .. }) => None,
        Err(e) => return Err(e),
    };
    let power_at_zero = match &at_zero {
        Some(f) => relay_tx_power(f, &prob.rx),
        None => f64::INFINITY,
    };
    if power_at_zero <= relay_power {
        return Ok(RelayStep {
            relay: at_zero.expect("finite power implies a solution"),
            lambda: 0.0,
        });
    }

    let mut hi = lambda_upper_bound(equalizer, precoder, model, relay_power)?;
    let mut power_hi = prob.power(hi)?;
    let mut doublings = 0;
    while power_hi > relay_power {
        if doublings == MAX_BRACKET_DOUBLINGS {
            return Err(Error::BracketFailure { doublings });
        }
        debug!("multiplier bound {hi:e} does not bracket the root, doubling");
        hi = if hi > 0.0 { 2.0 * hi } else { f64::EPSILON };
        power_hi = prob.power(hi)?;
        doublings += 1;
    }

    let mut lo = 0.0;
    let mut power_lo = power_at_zero;
    for _ in 0..MAX_BISECTION_STEPS {
        if (power_hi - relay_power).abs() <= cfg.tol_power * relay_power
            || hi - lo <= cfg.tol_lambda * hi
        {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let power_mid = prob.power(mid)?;
        // f must decrease across the bracket
        let slack = 1e-12 * relay_power;
        if power_mid > power_lo + slack || power_mid < power_hi - slack {
            return Err(Error::NonMonotonePower {
                detail: format!(
                    "f({lo:e})={power_lo:e}, f({mid:e})={power_mid:e}, f({hi:e})={power_hi:e}"
                ),
            });
        }
        if power_mid > relay_power {
            lo = mid;
            power_lo = power_mid;
        } else {
            hi = mid;
            power_hi = power_mid;
        }
    }
    Ok(RelayStep {
        relay: prob.relay(hi)?,
        lambda: hi,
    })
}

/// Precoder program for fixed relay matrix and equalizer. The objective
/// reproduces the averaged MSE, the first constraint is the source power
/// and the second the relay power.
pub fn qmp_params(
    relay: &CMatrix,
    equalizer: &CMatrix,
    model: &ChannelModel,
    budget: &PowerBudget,
) -> Result<QmpProblem> {
    let n = model.streams();
    let n_s = model.source_antennas();
    let weight = equalizer_weight(equalizer, model)?;

    // A₀ = Ψ_sr·Tr(F Σ_sr Fᴴ M) + Ĥ_srᴴ Fᴴ M F Ĥ_sr; the roles of the two
    // covariances swap because the congruence is by Ĥ_srᴴ.
    let fmf = relay.adjoint() * &weight * relay;
    let a0 = averaged_congruence(
        &model.est_sr().adjoint(),
        model.err_sr().col_cov(),
        model.err_sr().row_cov(),
        &fmf,
        "precoder quad",
    )?;
    let b0 = -(equalizer * model.est_rd() * relay * model.est_sr()).adjoint();

    // R₁ = Tr(F R_n1 Fᴴ Ψ_rd) Σ_rd + Ĥ_rd F R_n1 Fᴴ Ĥ_rdᴴ
    let f_n1_fh = relay * model.noise_relay().as_matrix() * relay.adjoint();
    let r1 = averaged_congruence(
        model.est_rd(),
        model.err_rd().row_cov(),
        model.err_rd().col_cov(),
        &f_n1_fh,
        "relay noise at destination",
    )?;
    let c0 = real_trace(
        &(equalizer * (r1.as_matrix() + model.noise_dest().as_matrix()) * equalizer.adjoint()),
        "precoder offset",
    )? + n as f64;

    // A₂ = Ψ_sr·Tr(F Σ_sr Fᴴ) + Ĥ_srᴴ Fᴴ F Ĥ_sr
    let ff = relay.adjoint() * relay;
    let a2 = averaged_congruence(
        &model.est_sr().adjoint(),
        model.err_sr().col_cov(),
        model.err_sr().row_cov(),
        &ff,
        "relay power quad",
    )?;
    let c2 = real_trace(&f_n1_fh, "relay noise power")? - budget.relay;

    QmpProblem::new(
        TraceQuadratic::new(a0, b0, c0),
        vec![
            TraceQuadratic::homogeneous(HermitianMatrix::identity(n_s), n, -budget.source),
            TraceQuadratic::homogeneous(a2, n, c2),
        ],
    )
}

/// Optimal precoder for fixed relay matrix and equalizer.
pub fn p_step(
    relay: &CMatrix,
    equalizer: &CMatrix,
    model: &ChannelModel,
    budget: &PowerBudget,
    tol: f64,
) -> Result<QmpSolution> {
    let prob = qmp_params(relay, equalizer, model, budget)?;
    solve_dual(&prob, tol)
}

/// Scaled identity-shaped precoder and relay matrix meeting both power
/// budgets with equality.
pub fn initial_point(model: &ChannelModel, budget: &PowerBudget) -> Result<(CMatrix, CMatrix)> {
    let n = model.streams();
    let precoder = identity_shaped(
        model.source_antennas(),
        n,
        (budget.source / n as f64).sqrt(),
    );
    let shape = identity_shaped(model.relay_tx_antennas(), model.relay_rx_antennas(), 1.0);
    let rx = r_x(
        &precoder,
        model.err_sr(),
        model.est_sr(),
        model.noise_relay(),
    )?;
    let unit_power = relay_tx_power(&shape, &rx);
    let relay = shape * real((budget.relay / unit_power).sqrt());
    Ok((precoder, relay))
}

fn record(
    iteration: usize,
    t: &Transceiver,
    model: &ChannelModel,
    budget: &PowerBudget,
    lambda: f64,
    mu: [f64; 2],
) -> Result<IterRecord> {
    let rx = r_x(
        &t.precoder,
        model.err_sr(),
        model.est_sr(),
        model.noise_relay(),
    )?;
    Ok(IterRecord {
        iteration,
        mse: mse(t, model)?,
        lambda,
        mu,
        slack_source: budget.source - source_tx_power(&t.precoder),
        slack_relay: budget.relay - relay_tx_power(&t.relay, &rx),
    })
}

/// Alternating minimization from the scaled-identity starting point.
///
/// Iteration 0 of the trace is the starting point with its Wiener
/// equalizer. Each further iteration runs the equalizer, relay and precoder
/// steps in turn and records the resulting MSE.
pub fn alternate(
    model: &ChannelModel,
    budget: &PowerBudget,
    cfg: &DesignConfig,
) -> Result<DesignOutcome> {
    cfg.validate()?;
    let (precoder, relay) = initial_point(model, budget)?;
    let equalizer = g_step(&relay, &precoder, model)?;
    let mut t = Transceiver {
        precoder,
        relay,
        equalizer,
    };
    let mut trace = IterTrace::default();
    trace
        .records
        .push(record(0, &t, model, budget, 0.0, [0.0, 0.0])?);

    for iteration in 1..=cfg.max_iters {
        let equalizer = g_step(&t.relay, &t.precoder, model)?;
        let step = f_step(&equalizer, &t.precoder, model, budget.relay, cfg)?;
        let sol = p_step(&step.relay, &equalizer, model, budget, cfg.tol_qmp)?;
        t = Transceiver {
            precoder: sol.point,
            relay: step.relay,
            equalizer,
        };
        let mu = [sol.multipliers[0], sol.multipliers[1]];
        let rec = record(iteration, &t, model, budget, step.lambda, mu)?;
        let previous = trace.records.last().expect("trace starts non-empty").mse;
        debug!(
            "iteration {iteration}: mse {:.12e} lambda {:.3e} mu {:?}",
            rec.mse, rec.lambda, mu
        );
        trace.records.push(rec);
        if rec.mse > previous + MONOTONE_SLACK {
            return Err(Error::NonMonotoneObjective {
                iteration,
                previous,
                current: rec.mse,
            });
        }
        if (previous - rec.mse).abs() <= cfg.tol_mse {
            trace.converged = true;
            break;
        }
    }
    Ok(DesignOutcome {
        transceiver: t,
        trace,
    })
}

//! Self-check suite run against independent oracles: Monte-Carlo averages,
//! finite differences, KKT residuals, duality gaps and random feasible
//! points.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{sample_error, ChannelModel, ChannelPreset, CorrelationParams, ErrorStats};
use crate::design::{
    alternate, f_of_lambda, f_step, g_step, lambda_upper_bound, p_step, qmp_params, DesignConfig,
    MONOTONE_SLACK,
};
use crate::error::Result;
use crate::matkit::{
    identity_shaped, real, sample_cgaussian, trace_of_product, CMatrix, HermitianMatrix, C64,
};
use crate::objective::{mse, mse_monte_carlo, r_x, relay_tx_power, PowerBudget, Transceiver};
use crate::qmp::{
    certify_sdr_gap, constraint_values, kkt_report, lift_point, qmp_objective, sdr_lift, QmpProblem,
};
use crate::simulate::{build_model, naive_design};

/// Signature of the averaged first-hop covariance.
pub type PiPFn = fn(&CMatrix, &ErrorStats, &CMatrix) -> Result<HermitianMatrix>;

/// Implementations under test, replaceable to confirm that the suite
/// catches a broken one.
#[derive(Clone, Copy, Debug)]
pub struct Hooks {
    pub pi_p: PiPFn,
}

impl Default for Hooks {
    fn default() -> Self {
        Self {
            pi_p: crate::objective::pi_p,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationConfig {
    pub preset: String,
    pub correlation: CorrelationParams,
    pub snr_sr_db: f64,
    pub snr_rd_db: f64,
    pub streams: usize,
    pub budget: PowerBudget,
    pub design: DesignConfig,
    pub seed: u64,
    /// Error draws for the covariance average.
    pub covariance_samples: usize,
    /// Trials per transceiver for the MSE average.
    pub mse_trials: usize,
    /// Random instances per subproblem check.
    pub instances: usize,
    /// Random feasible points per precoder instance.
    pub feasible_points: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            preset: "paper-4x4".into(),
            correlation: CorrelationParams {
                alpha: 0.5,
                beta: 0.4,
                sigma_e2: 0.01,
            },
            snr_sr_db: 30.0,
            snr_rd_db: 20.0,
            streams: 4,
            budget: PowerBudget {
                source: 4.0,
                relay: 4.0,
            },
            design: DesignConfig::default(),
            seed: 1,
            covariance_samples: 100_000,
            mse_trials: 20_000,
            instances: 5,
            feasible_points: 200,
        }
    }
}

/// Monte-Carlo agreement threshold in standard errors.
const MC_SIGMAS: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect()
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{:<24} {verdict}  {}", c.name, c.detail);
        }
        s
    }
}

type CheckFn = fn(&Ctx, &mut ChaCha8Rng) -> Result<(bool, String)>;

struct Ctx<'a> {
    cfg: &'a ValidationConfig,
    hooks: &'a Hooks,
    model: ChannelModel,
    preset: ChannelPreset,
}

const CHECKS: &[(&str, CheckFn)] = &[
    ("pi_p_expectation", check_pi_p),
    ("mse_monte_carlo", check_mse),
    ("g_step_gradient", check_g_step),
    ("f_step_kkt", check_f_step),
    ("f_power_decreasing", check_f_monotone),
    ("p_step_optimality", check_p_step),
    ("sdr_lift_consistency", check_lift),
    ("alternating_monotone", check_alternating),
    ("zero_error_coincidence", check_zero_error),
];

/// Names of every check, in run order.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

pub fn run(cfg: &ValidationConfig) -> Result<ValidationReport> {
    run_with(cfg, &Hooks::default())
}

/// Runs every check. A check that errors counts as failed; only a model
/// that cannot be built is an error.
pub fn run_with(cfg: &ValidationConfig, hooks: &Hooks) -> Result<ValidationReport> {
    let preset = ChannelPreset::resolve(&cfg.preset)?;
    let model = build_model(
        &preset,
        &cfg.correlation,
        &cfg.budget,
        cfg.snr_sr_db,
        cfg.snr_rd_db,
        cfg.streams,
    )?;
    cfg.design.validate()?;
    let ctx = Ctx {
        cfg,
        hooks,
        model,
        preset,
    };
    let mut report = ValidationReport::default();
    for (k, (name, check)) in CHECKS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(k as u64);
        let (passed, detail) = match check(&ctx, &mut rng) {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        log::info!("{name}: {}", if passed { "pass" } else { "FAIL" });
        report.checks.push(CheckOutcome {
            name,
            passed,
            detail,
        });
    }
    Ok(report)
}

fn random_transceiver(model: &ChannelModel, rng: &mut ChaCha8Rng) -> Transceiver {
    let n = model.streams();
    Transceiver {
        precoder: sample_cgaussian(model.source_antennas(), n, rng) * real(0.5),
        relay: sample_cgaussian(model.relay_tx_antennas(), model.relay_rx_antennas(), rng)
            * real(0.5),
        equalizer: sample_cgaussian(n, model.dest_antennas(), rng) * real(0.5),
    }
}

fn check_pi_p(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let m = &ctx.model;
    let n = m.streams();
    let p = identity_shaped(
        m.source_antennas(),
        n,
        (ctx.cfg.budget.source / n as f64).sqrt(),
    );
    let want = (ctx.hooks.pi_p)(&p, m.err_sr(), m.est_sr())?;

    let dim = m.relay_rx_antennas();
    let trials = ctx.cfg.covariance_samples.max(2);
    let mut sum = vec![0.0; 2 * dim * dim];
    let mut sum_sq = vec![0.0; 2 * dim * dim];
    for _ in 0..trials {
        let hp = (m.est_sr() + sample_error(m.err_sr(), rng)) * &p;
        let x = &hp * hp.adjoint();
        for (k, z) in x.iter().enumerate() {
            for (j, v) in [z.re, z.im].into_iter().enumerate() {
                sum[2 * k + j] += v;
                sum_sq[2 * k + j] += v * v;
            }
        }
    }
    let nf = trials as f64;
    let mut worst: f64 = 0.0;
    for (k, z) in want.iter().enumerate() {
        for (j, target) in [z.re, z.im].into_iter().enumerate() {
            let mean = sum[2 * k + j] / nf;
            let var = ((sum_sq[2 * k + j] - nf * mean * mean) / (nf - 1.0)).max(0.0);
            let se = (var / nf).sqrt();
            let score = if se > 1e-12 * (1.0 + mean.abs()) {
                (mean - target).abs() / se
            } else if (mean - target).abs() <= 1e-10 * (1.0 + target.abs()) {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(score);
        }
    }
    Ok((
        worst <= MC_SIGMAS,
        format!("worst deviation {worst:.2} SE over {trials} draws"),
    ))
}

fn check_mse(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.cfg.instances {
        let t = random_transceiver(&ctx.model, rng);
        let exact = mse(&t, &ctx.model)?;
        let est = mse_monte_carlo(&t, &ctx.model, ctx.cfg.mse_trials, rng)?;
        worst = worst.max((est.mean - exact).abs() / est.std_error);
    }
    Ok((worst <= MC_SIGMAS, format!("worst deviation {worst:.2} SE")))
}

/// Central-difference gradient of the MSE in the real and imaginary parts
/// of every equalizer entry.
fn equalizer_gradient(t: &Transceiver, model: &ChannelModel, h: f64) -> Result<Vec<f64>> {
    let mut grad = Vec::with_capacity(2 * t.equalizer.len());
    for k in 0..t.equalizer.len() {
        for dir in [C64::new(h, 0.0), C64::new(0.0, h)] {
            let mut plus = t.clone();
            plus.equalizer[k] += dir;
            let mut minus = t.clone();
            minus.equalizer[k] -= dir;
            grad.push((mse(&plus, model)? - mse(&minus, model)?) / (2.0 * h));
        }
    }
    Ok(grad)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_g_step(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.cfg.instances {
        let mut t = random_transceiver(&ctx.model, rng);
        t.equalizer = g_step(&t.relay, &t.precoder, &ctx.model)?;
        let at_opt = norm(&equalizer_gradient(&t, &ctx.model, 1e-6)?);
        let at_zero = norm(&equalizer_gradient(
            &Transceiver {
                equalizer: CMatrix::zeros(t.equalizer.nrows(), t.equalizer.ncols()),
                ..t.clone()
            },
            &ctx.model,
            1e-6,
        )?);
        worst = worst.max(at_opt / (1.0 + at_zero));
    }
    Ok((
        worst <= 1e-6,
        format!("worst relative gradient {worst:.2e}"),
    ))
}

fn check_f_step(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let pr = ctx.cfg.budget.relay;
    let mut worst_power: f64 = 0.0;
    let mut worst_slack: f64 = 0.0;
    let mut negative = false;
    for _ in 0..ctx.cfg.instances {
        let t = random_transceiver(&ctx.model, rng);
        let step = f_step(&t.equalizer, &t.precoder, &ctx.model, pr, &ctx.cfg.design)?;
        let rx = r_x(
            &t.precoder,
            ctx.model.err_sr(),
            ctx.model.est_sr(),
            ctx.model.noise_relay(),
        )?;
        let power = relay_tx_power(&step.relay, &rx);
        worst_power = worst_power.max(power / pr - 1.0);
        worst_slack = worst_slack.max((step.lambda * (power - pr)).abs());
        negative |= step.lambda < 0.0;
    }
    let ok = worst_power <= 1e-8 && worst_slack <= 1e-6 && !negative;
    Ok((
        ok,
        format!("power excess {worst_power:.2e}, complementarity {worst_slack:.2e}"),
    ))
}

fn check_f_monotone(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let pr = ctx.cfg.budget.relay;
    let mut violations = 0;
    for _ in 0..ctx.cfg.instances {
        let t = random_transceiver(&ctx.model, rng);
        let rx = r_x(
            &t.precoder,
            ctx.model.err_sr(),
            ctx.model.est_sr(),
            ctx.model.noise_relay(),
        )?;
        let hi = lambda_upper_bound(&t.equalizer, &t.precoder, &ctx.model, pr)?;
        let mut previous = f64::INFINITY;
        for k in 0..100 {
            let lambda = hi * k as f64 / 99.0;
            let power = relay_tx_power(
                &f_of_lambda(lambda, &t.equalizer, &t.precoder, &ctx.model)?,
                &rx,
            );
            if power >= previous {
                violations += 1;
            }
            previous = power;
        }
    }
    Ok((
        violations == 0,
        format!("{violations} non-decreasing grid steps"),
    ))
}

/// Scales `p` into the feasible set of homogeneous constraints.
fn shrink_to_feasible(prob: &QmpProblem, p: CMatrix, u: f64) -> CMatrix {
    let values = constraint_values(prob, &p);
    let limit = prob
        .constraints
        .iter()
        .zip(values)
        .map(|(c, v)| {
            let quad = v - c.offset;
            if quad > 0.0 {
                (-c.offset / quad).sqrt()
            } else {
                f64::INFINITY
            }
        })
        .fold(f64::INFINITY, f64::min);
    p * real(u * limit)
}

fn check_p_step(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst_kkt: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut beaten = 0;
    for _ in 0..ctx.cfg.instances {
        let t = random_transceiver(&ctx.model, rng);
        let prob = qmp_params(&t.relay, &t.equalizer, &ctx.model, &ctx.cfg.budget)?;
        let sol = p_step(
            &t.relay,
            &t.equalizer,
            &ctx.model,
            &ctx.cfg.budget,
            ctx.cfg.design.tol_qmp,
        )?;
        worst_kkt = worst_kkt.max(kkt_report(&prob, &sol.point, &sol.multipliers).max());
        worst_gap = worst_gap.max(certify_sdr_gap(&prob, &sol)?.abs());
        let (rows, cols) = prob.var_shape();
        for _ in 0..ctx.cfg.feasible_points {
            let u: f64 = rng.random();
            let p = shrink_to_feasible(&prob, sample_cgaussian(rows, cols, rng), u);
            if qmp_objective(&prob, &p) < sol.objective - 1e-9 * (1.0 + sol.objective.abs()) {
                beaten += 1;
            }
        }
    }
    let ok = worst_kkt <= 1e-6 && worst_gap <= 1e-6 && beaten == 0;
    Ok((
        ok,
        format!("kkt {worst_kkt:.2e}, gap {worst_gap:.2e}, {beaten} better feasible points"),
    ))
}

fn check_lift(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.cfg.instances {
        let t = random_transceiver(&ctx.model, rng);
        let prob = qmp_params(&t.relay, &t.equalizer, &ctx.model, &ctx.cfg.budget)?;
        let omegas = sdr_lift(&prob);
        let (rows, cols) = prob.var_shape();
        for _ in 0..20 {
            let p = sample_cgaussian(rows, cols, rng);
            let x = lift_point(&p);
            let mut direct = vec![qmp_objective(&prob, &p)];
            direct.extend(constraint_values(&prob, &p));
            for (om, d) in omegas.iter().zip(direct) {
                let lifted = trace_of_product(om, &x);
                let err = (lifted.re - d).abs().max(lifted.im.abs()) / (1.0 + d.abs());
                worst = worst.max(err);
            }
        }
    }
    Ok((
        worst <= 1e-10,
        format!("worst relative mismatch {worst:.2e}"),
    ))
}

fn check_alternating(ctx: &Ctx, _rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let out = alternate(&ctx.model, &ctx.cfg.budget, &ctx.cfg.design)?;
    let v = out.trace.mse_values();
    let rises = v
        .windows(2)
        .filter(|w| w[1] > w[0] + MONOTONE_SLACK)
        .count();
    let status = if out.trace.converged {
        "converged"
    } else {
        "hit max_iters"
    };
    Ok((
        rises == 0,
        format!(
            "{} iterations ({status}), final mse {:.6}",
            v.len() - 1,
            v[v.len() - 1]
        ),
    ))
}

fn check_zero_error(ctx: &Ctx, _rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let corr = CorrelationParams {
        sigma_e2: 0.0,
        ..ctx.cfg.correlation
    };
    let model = build_model(
        &ctx.preset,
        &corr,
        &ctx.cfg.budget,
        ctx.cfg.snr_sr_db,
        ctx.cfg.snr_rd_db,
        ctx.cfg.streams,
    )?;
    let robust = alternate(&model, &ctx.cfg.budget, &ctx.cfg.design)?.transceiver;
    let naive = naive_design(&model, &ctx.cfg.budget, &ctx.cfg.design)?;
    let diff = (mse(&robust, &model)? - mse(&naive, &model)?).abs();
    Ok((diff <= 1e-8, format!("mse difference {diff:.2e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn quick() -> ValidationConfig {
        ValidationConfig {
            covariance_samples: 20_000,
            mse_trials: 5_000,
            instances: 2,
            feasible_points: 50,
            design: DesignConfig {
                max_iters: 20,
                ..DesignConfig::default()
            },
            ..ValidationConfig::default()
        }
    }

    fn flipped_pi_p(p: &CMatrix, err: &ErrorStats, est: &CMatrix) -> Result<HermitianMatrix> {
        let good = crate::objective::pi_p(p, err, est)?;
        let signal = est * p * p.adjoint() * est.adjoint();
        // error term enters with the wrong sign
        Ok(HermitianMatrix::symmetrize(
            signal * real(2.0) - good.as_matrix(),
        ))
    }

    #[test]
    fn quick_suite_passes() {
        let report = run(&quick()).unwrap();
        assert!(report.all_passed(), "{}", report.table());
        assert_eq!(report.checks.len(), check_names().len());
    }

    #[test]
    fn sign_error_is_caught_by_name() {
        let hooks = Hooks { pi_p: flipped_pi_p };
        let report = run_with(&quick(), &hooks).unwrap();
        assert_eq!(report.failed(), vec!["pi_p_expectation"]);
        assert!(report.table().contains("pi_p_expectation         FAIL"));
    }

    #[test]
    fn bad_model_is_an_error() {
        let cfg = ValidationConfig {
            preset: "missing".into(),
            ..quick()
        };
        assert!(matches!(run(&cfg), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn feasible_shrink_respects_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = build_model(
            &ChannelPreset::resolve("paper-4x4").unwrap(),
            &CorrelationParams {
                alpha: 0.5,
                beta: 0.4,
                sigma_e2: 0.01,
            },
            &PowerBudget::new(4.0, 4.0).unwrap(),
            30.0,
            20.0,
            4,
        )
        .unwrap();
        let t = random_transceiver(&model, &mut rng);
        let prob = qmp_params(
            &t.relay,
            &t.equalizer,
            &model,
            &PowerBudget::new(4.0, 4.0).unwrap(),
        )
        .unwrap();
        for u in [0.1, 0.5, 1.0] {
            let p = shrink_to_feasible(&prob, sample_cgaussian(4, 4, &mut rng), u);
            assert!(constraint_values(&prob, &p).iter().all(|&h| h <= 1e-12));
        }
    }
}

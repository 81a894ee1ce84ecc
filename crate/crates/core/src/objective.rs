//! Error-averaged MSE objective.
//!
//! With `Π_P = Tr(PPᴴΨ_sr)Σ_sr + Ĥ_sr P Pᴴ Ĥ_srᴴ`, `R_x = Π_P + R_n1` and
//! `K = Tr(F R_x Fᴴ Ψ_rd)Σ_rd + R_n2`, the MSE averaged over data, noise and
//! both estimation errors is
//!
//! ```text
//! MSE = Tr(G (Ĥ_rd F R_x Fᴴ Ĥ_rdᴴ + K) Gᴴ) + N − 2·Re Tr(G Ĥ_rd F Ĥ_sr P)
//! ```

use rand::Rng;

use crate::channel::{sample_error, ChannelModel, ErrorStats};
use crate::error::{check_dims, Error, Result};
use crate::matkit::{
    cgaussian, hermitian_sqrt, real, real_trace, trace, trace_of_product, CMatrix, HermitianMatrix,
};

/// Precoder `P` (N_S×N), relay matrix `F` (N_R×M_R), equalizer `G` (N×M_D).
#[derive(Clone, Debug, PartialEq)]
pub struct Transceiver {
    pub precoder: CMatrix,
    pub relay: CMatrix,
    pub equalizer: CMatrix,
}

impl Transceiver {
    pub fn check(&self, model: &ChannelModel) -> Result<()> {
        let n = model.streams();
        check_dims(
            "precoder",
            (model.source_antennas(), n),
            self.precoder.shape(),
        )?;
        check_dims(
            "relay matrix",
            (model.relay_tx_antennas(), model.relay_rx_antennas()),
            self.relay.shape(),
        )?;
        check_dims(
            "equalizer",
            (n, model.dest_antennas()),
            self.equalizer.shape(),
        )
    }
}

/// Source and relay power budgets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerBudget {
    pub source: f64,
    pub relay: f64,
}

impl PowerBudget {
    pub fn new(source: f64, relay: f64) -> Result<Self> {
        for (name, v) in [("source power", source), ("relay power", relay)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("{v} must be positive"),
                });
            }
        }
        Ok(Self { source, relay })
    }
}

/// Average of `H·X·Hᴴ` over `H = Ĥ + ΔH`: `Tr(XΨ)Σ + Ĥ X Ĥᴴ`.
pub(crate) fn averaged_congruence(
    estimate: &CMatrix,
    row_cov: &HermitianMatrix,
    col_cov: &HermitianMatrix,
    x: &CMatrix,
    context: &'static str,
) -> Result<HermitianMatrix> {
    let scale = real_trace(&(x * col_cov.as_matrix()), context)?;
    let m = row_cov.as_matrix() * real(scale) + estimate * x * estimate.adjoint();
    Ok(HermitianMatrix::symmetrize(m))
}

/// Error-averaged covariance of the precoded signal after the first hop.
pub fn pi_p(precoder: &CMatrix, err_sr: &ErrorStats, est_sr: &CMatrix) -> Result<HermitianMatrix> {
    check_dims(
        "precoder rows",
        (est_sr.ncols(), precoder.ncols()),
        precoder.shape(),
    )?;
    check_dims("source-relay stats", est_sr.shape(), err_sr.channel_shape())?;
    averaged_congruence(
        est_sr,
        err_sr.row_cov(),
        err_sr.col_cov(),
        &(precoder * precoder.adjoint()),
        "pi_p",
    )
}

/// Autocorrelation of the relay's received signal, `Π_P + R_n1`.
pub fn r_x(
    precoder: &CMatrix,
    err_sr: &ErrorStats,
    est_sr: &CMatrix,
    noise_relay: &HermitianMatrix,
) -> Result<HermitianMatrix> {
    let pi = pi_p(precoder, err_sr, est_sr)?;
    check_dims("relay noise", pi.shape(), noise_relay.shape())?;
    Ok(pi.add(noise_relay))
}

/// `Tr(F R_x Fᴴ Ψ_rd)Σ_rd + R_n2`.
pub fn k_matrix(
    relay: &CMatrix,
    rx: &HermitianMatrix,
    err_rd: &ErrorStats,
    noise_dest: &HermitianMatrix,
) -> Result<HermitianMatrix> {
    check_dims(
        "relay matrix",
        (err_rd.channel_shape().1, rx.dim()),
        relay.shape(),
    )?;
    check_dims(
        "destination noise",
        (err_rd.channel_shape().0, err_rd.channel_shape().0),
        noise_dest.shape(),
    )?;
    let f_rx_fh = relay * rx.as_matrix() * relay.adjoint();
    let scale = real_trace(&(f_rx_fh * err_rd.col_cov().as_matrix()), "k_matrix")?;
    Ok(err_rd.row_cov().scale(scale).add(noise_dest))
}

/// Relay transmit power `Tr(F R_x Fᴴ)`.
pub fn relay_tx_power(relay: &CMatrix, rx: &HermitianMatrix) -> f64 {
    trace(&(relay * rx.as_matrix() * relay.adjoint())).re
}

/// Source transmit power `Tr(P Pᴴ)`.
pub fn source_tx_power(precoder: &CMatrix) -> f64 {
    precoder.norm_squared()
}

/// Error-averaged covariance of the signal at the destination,
/// `Ĥ_rd F R_x Fᴴ Ĥ_rdᴴ + K`.
pub fn received_covariance(
    relay: &CMatrix,
    precoder: &CMatrix,
    model: &ChannelModel,
) -> Result<HermitianMatrix> {
    let rx = r_x(
        precoder,
        model.err_sr(),
        model.est_sr(),
        model.noise_relay(),
    )?;
    let k = k_matrix(relay, &rx, model.err_rd(), model.noise_dest())?;
    let hf = model.est_rd() * relay;
    let signal = &hf * rx.as_matrix() * hf.adjoint();
    Ok(HermitianMatrix::symmetrize(signal).add(&k))
}

/// Closed-form averaged MSE.
pub fn mse(t: &Transceiver, model: &ChannelModel) -> Result<f64> {
    t.check(model)?;
    let cov = received_covariance(&t.relay, &t.precoder, model)?;
    let g = &t.equalizer;
    let quad = real_trace(&(g * cov.as_matrix() * g.adjoint()), "mse")?;
    let cross = trace_of_product(
        g,
        &(model.est_rd() * &t.relay * model.est_sr() * &t.precoder),
    );
    Ok(quad + model.streams() as f64 - 2.0 * cross.re)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Samples estimation errors, data and noise and averages the squared
/// error `‖(G H_rd F H_sr P − I)s + G H_rd F n₁ + G n₂‖²`.
///
/// Data symbols are i.i.d. CN(0, 1).
pub fn mse_monte_carlo<R: Rng + ?Sized>(
    t: &Transceiver,
    model: &ChannelModel,
    trials: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    t.check(model)?;
    if trials == 0 {
        return Err(Error::InvalidParameter {
            name: "trials",
            reason: "need at least one trial".into(),
        });
    }
    let n = model.streams();
    let sqrt_n1 = hermitian_sqrt(model.noise_relay())?;
    let sqrt_n2 = hermitian_sqrt(model.noise_dest())?;
    let (m_r, m_d) = (model.relay_rx_antennas(), model.dest_antennas());
    let identity = CMatrix::identity(n, n);

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        let h_sr = model.est_sr() + sample_error(model.err_sr(), rng);
        let h_rd = model.est_rd() + sample_error(model.err_rd(), rng);
        let s = column(n, rng);
        let n1 = &sqrt_n1 * column(m_r, rng);
        let n2 = &sqrt_n2 * column(m_d, rng);
        let g_h_f = &t.equalizer * h_rd * &t.relay;
        let e = (&g_h_f * h_sr * &t.precoder - &identity) * s + &g_h_f * n1 + &t.equalizer * n2;
        let v = e.norm_squared();
        sum += v;
        sum_sq += v * v;
    }
    let nf = trials as f64;
    let mean = sum / nf;
    let var = if trials > 1 {
        ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_error: (var / nf).sqrt(),
    })
}

fn column<R: Rng + ?Sized>(len: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(len, 1, |_, _| cgaussian(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{error_stats, exp_correlation, noise_from_snr, ChannelPreset};
    use crate::matkit::sample_cgaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_model() -> ChannelModel {
        let one = CMatrix::identity(1, 1);
        ChannelModel::new(
            one.clone(),
            one,
            ErrorStats::zero(1, 1),
            ErrorStats::zero(1, 1),
            HermitianMatrix::identity(1),
            HermitianMatrix::identity(1),
            1,
        )
        .unwrap()
    }

    fn paper_model(sigma_e2: f64) -> ChannelModel {
        let preset = ChannelPreset::resolve("paper-4x4").unwrap();
        let tx = exp_correlation(4, 0.5).unwrap();
        let rx = exp_correlation(4, 0.4).unwrap();
        ChannelModel::new(
            preset.est_sr,
            preset.est_rd,
            error_stats(sigma_e2, &tx, &rx).unwrap(),
            error_stats(sigma_e2, &tx, &rx).unwrap(),
            noise_from_snr(4.0, 30.0, 4).unwrap(),
            noise_from_snr(4.0, 20.0, 4).unwrap(),
            4,
        )
        .unwrap()
    }

    fn c(x: f64) -> CMatrix {
        CMatrix::from_element(1, 1, real(x))
    }

    #[test]
    fn pi_p_reductions() {
        let m = paper_model(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = sample_cgaussian(4, 4, &mut rng);
        let pi = pi_p(&p, m.err_sr(), m.est_sr()).unwrap();
        let want = m.est_sr() * &p * p.adjoint() * m.est_sr().adjoint();
        assert!((pi.as_matrix() - want).norm() < 1e-12);

        let pi = pi_p(&c(1.0), &ErrorStats::zero(1, 1), &c(1.0)).unwrap();
        assert_eq!(pi.as_matrix(), &c(1.0));
    }

    #[test]
    fn r_x_reductions() {
        let m = paper_model(0.01);
        let rx = r_x(
            &CMatrix::zeros(4, 4),
            m.err_sr(),
            m.est_sr(),
            m.noise_relay(),
        )
        .unwrap();
        assert_eq!(&rx, m.noise_relay());

        let rx = r_x(
            &c(1.0),
            &ErrorStats::zero(1, 1),
            &c(1.0),
            &HermitianMatrix::identity(1),
        )
        .unwrap();
        assert_eq!(rx.as_matrix(), &c(2.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = sample_cgaussian(4, 4, &mut rng);
        let rx = r_x(&p, m.err_sr(), m.est_sr(), m.noise_relay()).unwrap();
        assert!(rx.min_eigenvalue() >= m.noise_relay().min_eigenvalue() - 1e-12);
    }

    #[test]
    fn k_matrix_reductions_and_formula() {
        let m = paper_model(0.01);
        let rx = r_x(
            &CMatrix::identity(4, 4),
            m.err_sr(),
            m.est_sr(),
            m.noise_relay(),
        )
        .unwrap();
        let k = k_matrix(&CMatrix::zeros(4, 4), &rx, m.err_rd(), m.noise_dest()).unwrap();
        assert_eq!(&k, m.noise_dest());
        let k = k_matrix(
            &CMatrix::identity(4, 4),
            &rx,
            &ErrorStats::zero(4, 4),
            m.noise_dest(),
        )
        .unwrap();
        assert_eq!(&k, m.noise_dest());

        // element-wise re-evaluation of Tr(F Rx Fᴴ Ψ)Σ + Rn2 with F = I
        let f = CMatrix::identity(4, 4);
        let k = k_matrix(&f, &rx, m.err_rd(), m.noise_dest()).unwrap();
        let mut tr = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                tr += (rx[(i, j)] * m.err_rd().col_cov()[(j, i)]).re;
            }
        }
        let want = m.err_rd().row_cov().as_matrix() * real(tr) + m.noise_dest().as_matrix();
        assert!((k.as_matrix() - want).camax() < 1e-12);
    }

    #[test]
    fn relay_power_values() {
        let rx = HermitianMatrix::scaled_identity(1, 2.0);
        assert_eq!(relay_tx_power(&c(0.0), &rx), 0.0);
        assert!((relay_tx_power(&c(1.5), &rx) - 4.5).abs() < 1e-15);
        let m = paper_model(0.01);
        let rx = r_x(
            &CMatrix::identity(4, 4),
            m.err_sr(),
            m.est_sr(),
            m.noise_relay(),
        )
        .unwrap();
        assert!((relay_tx_power(&CMatrix::identity(4, 4), &rx) - rx.trace()).abs() < 1e-12);
    }

    #[test]
    fn mse_scalar_and_zero_equalizer() {
        let m = scalar_model();
        let t = Transceiver {
            precoder: c(1.0),
            relay: c(1.0),
            equalizer: c(1.0 / 3.0),
        };
        assert!((mse(&t, &m).unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let m = paper_model(0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = Transceiver {
            precoder: sample_cgaussian(4, 4, &mut rng),
            relay: sample_cgaussian(4, 4, &mut rng),
            equalizer: CMatrix::zeros(4, 4),
        };
        assert_eq!(mse(&t, &m).unwrap(), 4.0);
    }

    #[test]
    fn mse_rejects_bad_shapes() {
        let m = paper_model(0.01);
        let t = Transceiver {
            precoder: CMatrix::zeros(4, 3),
            relay: CMatrix::zeros(4, 4),
            equalizer: CMatrix::zeros(4, 4),
        };
        assert!(matches!(mse(&t, &m), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_errors_give_perfect_csi_mse() {
        let m = paper_model(0.02);
        let z = m.without_errors();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = Transceiver {
            precoder: sample_cgaussian(4, 4, &mut rng),
            relay: sample_cgaussian(4, 4, &mut rng) * real(0.3),
            equalizer: sample_cgaussian(4, 4, &mut rng) * real(0.3),
        };
        // perfect-CSI expression coded directly
        let (g, f, p) = (&t.equalizer, &t.relay, &t.precoder);
        let a = z.est_rd() * f * z.est_sr() * p;
        let e = &a * a.adjoint()
            + z.est_rd() * f * z.noise_relay().as_matrix() * f.adjoint() * z.est_rd().adjoint()
            + z.noise_dest().as_matrix();
        let want = (g * e * g.adjoint()).trace().re + 4.0 - 2.0 * (g * &a).trace().re;
        assert!((mse(&t, &z).unwrap() - want).abs() < 1e-10 * want.abs().max(1.0));
    }

    #[test]
    fn error_scale_is_monotone() {
        let m = paper_model(0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = sample_cgaussian(4, 4, &mut rng);
        let f = sample_cgaussian(4, 4, &mut rng);
        let base = pi_p(&p, m.err_sr(), m.est_sr()).unwrap();
        let rx = r_x(&p, m.err_sr(), m.est_sr(), m.noise_relay()).unwrap();
        let k_base = k_matrix(&f, &rx, m.err_rd(), m.noise_dest()).unwrap();
        for c in [1.0, 1.5, 4.0] {
            let up = pi_p(&p, &m.err_sr().scale_rows(c).unwrap(), m.est_sr()).unwrap();
            let k_up =
                k_matrix(&f, &rx, &m.err_rd().scale_rows(c).unwrap(), m.noise_dest()).unwrap();
            for (lo, hi) in base.eigenvalues().iter().zip(up.eigenvalues()) {
                assert!(hi >= lo - 1e-12);
            }
            for (lo, hi) in k_base.eigenvalues().iter().zip(k_up.eigenvalues()) {
                assert!(hi >= lo - 1e-12);
            }
        }
    }

    #[test]
    fn monte_carlo_zero_equalizer_and_scaling() {
        let m = paper_model(0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = Transceiver {
            precoder: CMatrix::identity(4, 4),
            relay: CMatrix::identity(4, 4) * real(0.4),
            equalizer: CMatrix::zeros(4, 4),
        };
        let est = mse_monte_carlo(&t, &m, 20_000, &mut rng).unwrap();
        // ‖s‖² has mean N = 4 and variance N = 4
        assert!((est.mean - 4.0).abs() < 4.0 * est.std_error);
        assert!((est.std_error - (4.0f64 / 20_000.0).sqrt()).abs() < 2e-3);

        let t = Transceiver {
            equalizer: CMatrix::identity(4, 4) * real(0.2),
            ..t
        };
        let small = mse_monte_carlo(&t, &m, 100, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let large = mse_monte_carlo(&t, &m, 10_000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let ratio = small.std_error / large.std_error;
        assert!((5.0..20.0).contains(&ratio), "ratio {ratio}");
        let one = mse_monte_carlo(&t, &m, 1, &mut rng).unwrap();
        assert_eq!(one.std_error, 0.0);
        assert!(mse_monte_carlo(&t, &m, 0, &mut rng).is_err());
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let m = paper_model(0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..3 {
            let t = Transceiver {
                precoder: sample_cgaussian(4, 4, &mut rng) * real(0.5),
                relay: sample_cgaussian(4, 4, &mut rng) * real(0.5),
                equalizer: sample_cgaussian(4, 4, &mut rng) * real(0.5),
            };
            let est = mse_monte_carlo(&t, &m, 20_000, &mut rng).unwrap();
            let exact = mse(&t, &m).unwrap();
            assert!(
                (est.mean - exact).abs() < 4.0 * est.std_error,
                "{} vs {exact}",
                est.mean
            );
        }
    }
}

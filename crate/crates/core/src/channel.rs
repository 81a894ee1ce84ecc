//! Two-hop channel model with Gaussian estimation errors.
//!
//! A true channel is `H = Ĥ + ΔH`, where `Ĥ` is the estimate and the error
//! is drawn as `ΔH = Σ^{1/2}·W·Ψ^{1/2}` with `W` i.i.d. CN(0, 1). `Σ` is the
//! row (receive-side) covariance and `Ψ` the column (transmit-side) factor,
//! so that `E[ΔH·A·ΔHᴴ] = Tr(A·Ψ)·Σ`.

use std::path::Path;

use rand::Rng;

use crate::error::{check_dims, Error, Result};
use crate::matfmt;
use crate::matkit::{
    hermitian_sqrt, hpd_inverse, real, sample_cgaussian, CMatrix, HermitianMatrix,
};

const PAPER_4X4: &str = include_str!("../presets/paper-4x4.txt");

/// Names of the built-in channel presets.
pub const PRESETS: &[&str] = &["paper-4x4", "scalar"];

/// Row/column covariance pair of one hop's estimation error.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorStats {
    row_cov: HermitianMatrix,
    col_cov: HermitianMatrix,
    row_sqrt: CMatrix,
    col_sqrt: CMatrix,
}

impl ErrorStats {
    /// `row_cov` is `m×m` for an `m×n` channel, `col_cov` is `n×n`.
    pub fn new(row_cov: HermitianMatrix, col_cov: HermitianMatrix) -> Result<Self> {
        let row_sqrt = hermitian_sqrt(&row_cov)?;
        let col_sqrt = hermitian_sqrt(&col_cov)?;
        Ok(Self {
            row_cov,
            col_cov,
            row_sqrt,
            col_sqrt,
        })
    }

    /// Error-free statistics for an `rows×cols` channel.
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            row_cov: HermitianMatrix::zeros(rows),
            col_cov: HermitianMatrix::zeros(cols),
            row_sqrt: CMatrix::zeros(rows, rows),
            col_sqrt: CMatrix::zeros(cols, cols),
        }
    }

    pub fn row_cov(&self) -> &HermitianMatrix {
        &self.row_cov
    }

    pub fn col_cov(&self) -> &HermitianMatrix {
        &self.col_cov
    }

    /// Shape `(rows, cols)` of the channel these statistics describe.
    pub fn channel_shape(&self) -> (usize, usize) {
        (self.row_cov.dim(), self.col_cov.dim())
    }

    /// True when every sampled error is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.row_cov.is_zero() || self.col_cov.is_zero()
    }

    /// Statistics with the row covariance scaled by `c`.
    pub fn scale_rows(&self, c: f64) -> Result<Self> {
        Self::new(self.row_cov.scale(c), self.col_cov.clone())
    }
}

/// Transmit/receive correlation coefficients and error variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationParams {
    pub alpha: f64,
    pub beta: f64,
    pub sigma_e2: f64,
}

impl CorrelationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("{v} is outside [0, 1)"),
                });
            }
        }
        if !(self.sigma_e2 >= 0.0) || !self.sigma_e2.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma_e2",
                reason: format!("{} must be finite and non-negative", self.sigma_e2),
            });
        }
        Ok(())
    }
}

/// Estimated channels, error statistics and noise covariances for both hops.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelModel {
    est_sr: CMatrix,
    est_rd: CMatrix,
    err_sr: ErrorStats,
    err_rd: ErrorStats,
    noise_relay: HermitianMatrix,
    noise_dest: HermitianMatrix,
    streams: usize,
}

impl ChannelModel {
    /// `est_sr` is `M_R×N_S`, `est_rd` is `M_D×N_R`.
    pub fn new(
        est_sr: CMatrix,
        est_rd: CMatrix,
        err_sr: ErrorStats,
        err_rd: ErrorStats,
        noise_relay: HermitianMatrix,
        noise_dest: HermitianMatrix,
        streams: usize,
    ) -> Result<Self> {
        check_dims(
            "source-relay error stats",
            est_sr.shape(),
            err_sr.channel_shape(),
        )?;
        check_dims(
            "relay-destination error stats",
            est_rd.shape(),
            err_rd.channel_shape(),
        )?;
        let m_r = est_sr.nrows();
        let m_d = est_rd.nrows();
        check_dims("relay noise", (m_r, m_r), noise_relay.shape())?;
        check_dims("destination noise", (m_d, m_d), noise_dest.shape())?;
        for (name, n) in [
            ("relay noise", &noise_relay),
            ("destination noise", &noise_dest),
        ] {
            if !(n.min_eigenvalue() > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "noise covariance",
                    reason: format!("{name} is not positive definite"),
                });
            }
        }
        let limit = est_sr
            .nrows()
            .min(est_sr.ncols())
            .min(est_rd.nrows())
            .min(est_rd.ncols());
        if streams == 0 || streams > limit {
            return Err(Error::InvalidParameter {
                name: "streams",
                reason: format!("{streams} must be in 1..={limit}"),
            });
        }
        Ok(Self {
            est_sr,
            est_rd,
            err_sr,
            err_rd,
            noise_relay,
            noise_dest,
            streams,
        })
    }

    pub fn est_sr(&self) -> &CMatrix {
        &self.est_sr
    }

    pub fn est_rd(&self) -> &CMatrix {
        &self.est_rd
    }

    pub fn err_sr(&self) -> &ErrorStats {
        &self.err_sr
    }

    pub fn err_rd(&self) -> &ErrorStats {
        &self.err_rd
    }

    pub fn noise_relay(&self) -> &HermitianMatrix {
        &self.noise_relay
    }

    pub fn noise_dest(&self) -> &HermitianMatrix {
        &self.noise_dest
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn source_antennas(&self) -> usize {
        self.est_sr.ncols()
    }

    pub fn relay_rx_antennas(&self) -> usize {
        self.est_sr.nrows()
    }

    pub fn relay_tx_antennas(&self) -> usize {
        self.est_rd.ncols()
    }

    pub fn dest_antennas(&self) -> usize {
        self.est_rd.nrows()
    }

    /// Copy of the model with both error statistics set to zero.
    pub fn without_errors(&self) -> Self {
        let mut m = self.clone();
        m.err_sr = ErrorStats::zero(self.est_sr.nrows(), self.est_sr.ncols());
        m.err_rd = ErrorStats::zero(self.est_rd.nrows(), self.est_rd.ncols());
        m
    }

    /// Copy of the model with the given error statistics.
    pub fn with_errors(&self, err_sr: ErrorStats, err_rd: ErrorStats) -> Result<Self> {
        Self::new(
            self.est_sr.clone(),
            self.est_rd.clone(),
            err_sr,
            err_rd,
            self.noise_relay.clone(),
            self.noise_dest.clone(),
            self.streams,
        )
    }
}

/// Estimated channel pair for both hops.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelPreset {
    pub est_sr: CMatrix,
    pub est_rd: CMatrix,
}

impl ChannelPreset {
    /// Parses two matrix blocks: source→relay first, relay→destination second.
    pub fn parse(text: &str) -> Result<Self> {
        let mut blocks = matfmt::parse_matrices(text)?;
        if blocks.len() != 2 {
            return Err(Error::Parse {
                line: 0,
                reason: format!("channel preset needs 2 matrices, found {}", blocks.len()),
            });
        }
        let est_rd = blocks.pop().unwrap();
        let est_sr = blocks.pop().unwrap();
        Ok(Self { est_sr, est_rd })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// A built-in preset by name, or a preset file when `name` is a path.
    pub fn resolve(name: &str) -> Result<Self> {
        match name {
            "paper-4x4" => Self::parse(PAPER_4X4),
            "scalar" => Ok(Self {
                est_sr: CMatrix::identity(1, 1),
                est_rd: CMatrix::identity(1, 1),
            }),
            other if Path::new(other).is_file() => Self::load(other),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

/// `n×n` matrix with entries `rho^|i-j|`.
pub fn exp_correlation(n: usize, rho: f64) -> Result<HermitianMatrix> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter {
            name: "rho",
            reason: format!("{rho} is outside [0, 1)"),
        });
    }
    Ok(HermitianMatrix::from_real_fn(n, |i, j| {
        rho.powi((j - i) as i32)
    }))
}

/// Error statistics for a hop with transmit correlation `tx_corr` and
/// receive correlation `rx_corr`: `Ψ = R_T`, `Σ = σ²(I + σ²·R_R⁻¹)⁻¹`.
pub fn error_stats(
    sigma_e2: f64,
    tx_corr: &HermitianMatrix,
    rx_corr: &HermitianMatrix,
) -> Result<ErrorStats> {
    if !(sigma_e2 >= 0.0) || !sigma_e2.is_finite() {
        return Err(Error::InvalidParameter {
            name: "sigma_e2",
            reason: format!("{sigma_e2} must be finite and non-negative"),
        });
    }
    let n = rx_corr.dim();
    let rx_inv = hpd_inverse(rx_corr, "receive correlation")?;
    let inner = CMatrix::identity(n, n) + rx_inv * real(sigma_e2);
    let row = hpd_inverse(&inner, "error covariance")? * real(sigma_e2);
    ErrorStats::new(HermitianMatrix::symmetrize(row), tx_corr.clone())
}

/// Draws `ΔH = Σ^{1/2}·W·Ψ^{1/2}`.
pub fn sample_error<R: Rng + ?Sized>(stats: &ErrorStats, rng: &mut R) -> CMatrix {
    let (m, n) = stats.channel_shape();
    let w = sample_cgaussian(m, n, rng);
    &stats.row_sqrt * w * &stats.col_sqrt
}

/// `Ĥ + ΔH` for one error draw.
pub fn true_channel<R: Rng + ?Sized>(
    estimate: &CMatrix,
    stats: &ErrorStats,
    rng: &mut R,
) -> Result<CMatrix> {
    check_dims("true channel", estimate.shape(), stats.channel_shape())?;
    Ok(estimate + sample_error(stats, rng))
}

/// White noise covariance `σ²·I` with `total_power / Tr(R_n)` equal to the
/// linear SNR.
pub fn noise_from_snr(total_power: f64, snr_db: f64, dim: usize) -> Result<HermitianMatrix> {
    if !(total_power > 0.0) || dim == 0 || !snr_db.is_finite() {
        return Err(Error::InvalidParameter {
            name: "noise_from_snr",
            reason: format!("power {total_power}, snr {snr_db} dB, dim {dim}"),
        });
    }
    let linear = 10f64.powf(snr_db / 10.0);
    Ok(HermitianMatrix::scaled_identity(
        dim,
        total_power / (linear * dim as f64),
    ))
}

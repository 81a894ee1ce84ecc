//! Link-level bit-error-rate experiments.
//!
//! Each sweep point builds a channel model from the estimated channels and
//! the error statistics, designs the robust transceiver and the baseline
//! that trusts the estimates, then pushes Gray-mapped QPSK through many
//! sampled true channels. Each realization draws its random stream from
//! `(seed, point, realization)`, so results do not depend on scheduling.
//! Both designs see the same channel draw, the same bits and the same noise.

use std::fmt;
use std::io;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{
    error_stats, exp_correlation, noise_from_snr, true_channel, ChannelModel, ChannelPreset,
    CorrelationParams,
};
use crate::design::{alternate, DesignConfig, DesignOutcome};
use crate::error::{check_dims, Error, Result};
use crate::matkit::{hermitian_sqrt, sample_cgaussian, CMatrix, HermitianMatrix, C64};
use crate::objective::{PowerBudget, Transceiver};

/// Gray-mapped unit-energy QPSK: `(b₀, b₁) → ((1−2b₀) + i(1−2b₁))/√2`.
pub fn qpsk_modulate(bits: &[u8]) -> Result<Vec<C64>> {
    if bits.len() % 2 != 0 {
        return Err(Error::InvalidParameter {
            name: "bits",
            reason: format!("odd bit count {}", bits.len()),
        });
    }
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    let level = |b: u8| if b == 0 { amp } else { -amp };
    Ok(bits
        .chunks_exact(2)
        .map(|p| C64::new(level(p[0]), level(p[1])))
        .collect())
}

/// Sign slicer, the inverse of [`qpsk_modulate`].
pub fn qpsk_demodulate(symbols: &[C64]) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|s| [u8::from(s.re < 0.0), u8::from(s.im < 0.0)])
        .collect()
}

/// Sends `bits` through one realization of both hops and counts bit
/// errors after equalization.
///
/// Every channel use carries `2N` bits, stream `k` taking bits `2k` and
/// `2k+1`. Noise is drawn from `rng` through the square roots of the
/// covariances.
pub fn run_link<R: Rng + ?Sized>(
    t: &Transceiver,
    h_sr: &CMatrix,
    h_rd: &CMatrix,
    noise_relay: &HermitianMatrix,
    noise_dest: &HermitianMatrix,
    bits: &[u8],
    rng: &mut R,
) -> Result<u64> {
    let n = t.precoder.ncols();
    check_dims(
        "source-relay channel",
        (h_sr.nrows(), t.precoder.nrows()),
        h_sr.shape(),
    )?;
    check_dims(
        "relay matrix",
        (t.relay.nrows(), h_sr.nrows()),
        t.relay.shape(),
    )?;
    check_dims(
        "relay-destination channel",
        (h_rd.nrows(), t.relay.nrows()),
        h_rd.shape(),
    )?;
    check_dims("equalizer", (n, h_rd.nrows()), t.equalizer.shape())?;
    check_dims(
        "relay noise",
        (h_sr.nrows(), h_sr.nrows()),
        noise_relay.shape(),
    )?;
    check_dims(
        "destination noise",
        (h_rd.nrows(), h_rd.nrows()),
        noise_dest.shape(),
    )?;
    if bits.len() % (2 * n) != 0 {
        return Err(Error::InvalidParameter {
            name: "bits",
            reason: format!(
                "{} bits do not fill whole channel uses of {} bits",
                bits.len(),
                2 * n
            ),
        });
    }
    let uses = bits.len() / (2 * n);

    let g_h_f = &t.equalizer * h_rd * &t.relay;
    let signal = &g_h_f * h_sr * &t.precoder;
    let relay_noise = &g_h_f * hermitian_sqrt(noise_relay)?;
    let dest_noise = &t.equalizer * hermitian_sqrt(noise_dest)?;

    let symbols = CMatrix::from_column_slice(n, uses, &qpsk_modulate(bits)?);
    let w1 = sample_cgaussian(h_sr.nrows(), uses, rng);
    let w2 = sample_cgaussian(h_rd.nrows(), uses, rng);
    let estimate = signal * symbols + relay_noise * w1 + dest_noise * w2;

    let decided = qpsk_demodulate(estimate.as_slice());
    Ok(decided.iter().zip(bits).filter(|(a, b)| a != b).count() as u64)
}

/// Channel model from a preset, exponential correlations, and the two
/// link SNRs (`P_s / Tr(R_n1)` and `P_r / Tr(R_n2)`, in dB).
pub fn build_model(
    preset: &ChannelPreset,
    corr: &CorrelationParams,
    budget: &PowerBudget,
    snr_sr_db: f64,
    snr_rd_db: f64,
    streams: usize,
) -> Result<ChannelModel> {
    corr.validate()?;
    let hop = |est: &CMatrix| {
        let tx = exp_correlation(est.ncols(), corr.alpha)?;
        let rx = exp_correlation(est.nrows(), corr.beta)?;
        error_stats(corr.sigma_e2, &tx, &rx)
    };
    ChannelModel::new(
        preset.est_sr.clone(),
        preset.est_rd.clone(),
        hop(&preset.est_sr)?,
        hop(&preset.est_rd)?,
        noise_from_snr(budget.source, snr_sr_db, preset.est_sr.nrows())?,
        noise_from_snr(budget.relay, snr_rd_db, preset.est_rd.nrows())?,
        streams,
    )
}

fn design_or_warn(
    model: &ChannelModel,
    budget: &PowerBudget,
    cfg: &DesignConfig,
    label: &str,
) -> Result<DesignOutcome> {
    let out = alternate(model, budget, cfg)?;
    if !out.trace.converged {
        warn!(
            "{label} design stopped after {} iterations without meeting tol_mse {:e}",
            cfg.max_iters, cfg.tol_mse
        );
    }
    Ok(out)
}

/// Design that treats the estimated channels as exact.
pub fn naive_design(
    model: &ChannelModel,
    budget: &PowerBudget,
    cfg: &DesignConfig,
) -> Result<Transceiver> {
    Ok(design_or_warn(&model.without_errors(), budget, cfg, "naive")?.transceiver)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algo {
    Robust,
    Naive,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Robust => "robust",
            Algo::Naive => "naive",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BerPoint {
    pub snr_rd_db: f64,
    pub sigma_e2: f64,
    pub algo: Algo,
    pub bit_errors: u64,
    pub bits_total: u64,
    pub ber: f64,
}

impl BerPoint {
    pub const CSV_HEADER: &'static str = "snr_rd_db,sigma_e2,algo,bit_errors,bits_total,ber";

    fn new(snr_rd_db: f64, sigma_e2: f64, algo: Algo, bit_errors: u64, bits_total: u64) -> Self {
        Self {
            snr_rd_db,
            sigma_e2,
            algo,
            bit_errors,
            bits_total,
            ber: bit_errors as f64 / bits_total as f64,
        }
    }

    /// Binomial standard error of the measured rate.
    pub fn std_error(&self) -> f64 {
        (self.ber * (1.0 - self.ber) / self.bits_total as f64).sqrt()
    }
}

pub fn to_csv(points: &[BerPoint]) -> String {
    let mut s = String::from(BerPoint::CSV_HEADER);
    s.push('\n');
    for p in points {
        s.push_str(&format!(
            "{},{},{},{},{},{:?}\n",
            p.snr_rd_db, p.sigma_e2, p.algo, p.bit_errors, p.bits_total, p.ber
        ));
    }
    s
}

pub fn write_csv<W: io::Write>(points: &[BerPoint], mut w: W) -> io::Result<()> {
    w.write_all(to_csv(points).as_bytes())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub preset: String,
    pub snr_rd_db: Vec<f64>,
    pub sigma_e2: Vec<f64>,
    pub snr_sr_db: f64,
    pub alpha: f64,
    pub beta: f64,
    pub streams: usize,
    /// QPSK symbols per stream and realization.
    pub n_symbols: usize,
    pub n_realizations: usize,
    pub seed: u64,
    pub budget: PowerBudget,
    pub design: DesignConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            preset: "paper-4x4".into(),
            snr_rd_db: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            sigma_e2: vec![0.0, 0.002, 0.01],
            snr_sr_db: 30.0,
            alpha: 0.5,
            beta: 0.4,
            streams: 4,
            n_symbols: 10_000,
            n_realizations: 100,
            seed: 1,
            budget: PowerBudget {
                source: 4.0,
                relay: 4.0,
            },
            design: DesignConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_rd_db.is_empty() || self.sigma_e2.is_empty() {
            return Err(Error::InvalidParameter {
                name: "sweep",
                reason: "snr_rd_db and sigma_e2 need at least one value".into(),
            });
        }
        for (name, v) in [
            ("n_symbols", self.n_symbols),
            ("n_realizations", self.n_realizations),
            ("streams", self.streams),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be at least 1".into(),
                });
            }
        }
        for &s in &self.sigma_e2 {
            CorrelationParams {
                alpha: self.alpha,
                beta: self.beta,
                sigma_e2: s,
            }
            .validate()?;
        }
        if let Some(bad) = self
            .snr_rd_db
            .iter()
            .chain([&self.snr_sr_db])
            .find(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter {
                name: "snr",
                reason: format!("{bad} is not finite"),
            });
        }
        PowerBudget::new(self.budget.source, self.budget.relay)?;
        self.design.validate()
    }
}

/// Random stream of one work unit.
fn unit_rng(seed: u64, point: u64, realization: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&point.to_le_bytes());
    key[16..24].copy_from_slice(&realization.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Robust and naive BER at one `(SNR_rd, σ²ₑ)` point; `point` selects the
/// random streams.
pub fn ber_point(
    cfg: &SweepConfig,
    preset: &ChannelPreset,
    snr_rd_db: f64,
    sigma_e2: f64,
    point: u64,
) -> Result<[BerPoint; 2]> {
    let corr = CorrelationParams {
        alpha: cfg.alpha,
        beta: cfg.beta,
        sigma_e2,
    };
    let model = build_model(
        preset,
        &corr,
        &cfg.budget,
        cfg.snr_sr_db,
        snr_rd_db,
        cfg.streams,
    )?;
    let robust = design_or_warn(&model, &cfg.budget, &cfg.design, "robust")?.transceiver;
    let naive = naive_design(&model, &cfg.budget, &cfg.design)?;

    let n_bits = 2 * cfg.streams * cfg.n_symbols;
    let counts = (0..cfg.n_realizations as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = unit_rng(cfg.seed, point, r);
            let h_sr = true_channel(model.est_sr(), model.err_sr(), &mut rng)?;
            let h_rd = true_channel(model.est_rd(), model.err_rd(), &mut rng)?;
            let bits: Vec<u8> = (0..n_bits).map(|_| rng.random_range(0..2u8)).collect();
            let link = |t: &Transceiver| {
                let mut noise = rng.clone();
                run_link(
                    t,
                    &h_sr,
                    &h_rd,
                    model.noise_relay(),
                    model.noise_dest(),
                    &bits,
                    &mut noise,
                )
            };
            Ok([link(&robust)?, link(&naive)?])
        })
        .collect::<Result<Vec<[u64; 2]>>>()?;

    let total = (n_bits * cfg.n_realizations) as u64;
    let sum = |k: usize| counts.iter().map(|c| c[k]).sum::<u64>();
    Ok([
        BerPoint::new(snr_rd_db, sigma_e2, Algo::Robust, sum(0), total),
        BerPoint::new(snr_rd_db, sigma_e2, Algo::Naive, sum(1), total),
    ])
}

/// Every `(SNR_rd, σ²ₑ)` pair in config order, SNR outermost, robust
/// before naive.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<BerPoint>> {
    cfg.validate()?;
    let preset = ChannelPreset::resolve(&cfg.preset)?;
    let grid: Vec<(f64, f64)> = cfg
        .snr_rd_db
        .iter()
        .flat_map(|&snr| cfg.sigma_e2.iter().map(move |&s| (snr, s)))
        .collect();
    let pairs = grid
        .par_iter()
        .enumerate()
        .map(|(k, &(snr, s))| ber_point(cfg, &preset, snr, s, k as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().flatten().collect())
}

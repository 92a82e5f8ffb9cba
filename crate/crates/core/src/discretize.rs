//! The sampled system model: banded Toeplitz symbol-coupling matrices,
//! synthesized received frames, and the (correlated) oversampled noise model.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{ChannelRealization, LinkConfig, PilotSet};
use crate::pulse::PulseSpec;
use crate::{Error, Result};

/// The nonzero diagonals of one symbol-coupling matrix: `values[i]` holds
/// `g(e T_s + T + (lo + i) T_s - tau)`.
#[derive(Debug, Clone)]
pub struct Band {
    pub lo: i64,
    pub values: Vec<f64>,
}

impl Band {
    /// Sampled coupling at one symbol lag for a single delay realization.
    pub fn new(pulse: &PulseSpec<f64>, e: f64, tau: f64) -> Self {
        let b = pulse.full_lag_bound();
        let dur = pulse.duration();
        let values = (-b..=b)
            .map(|i| pulse.conv_eval(e + dur + i as f64 - tau))
            .collect();
        Self { lo: -b, values }
    }

    pub fn get(&self, lag: i64) -> f64 {
        let idx = lag - self.lo;
        if (0..self.values.len() as i64).contains(&idx) {
            self.values[idx as usize]
        } else {
            0.0
        }
    }
}

/// `N x N` Toeplitz coupling matrix with entry `(p, q)` equal to
/// `g(e T_s + T + (p - q) T_s - tau)`.
pub fn build_g(pulse: &PulseSpec<f64>, e: f64, tau: f64, n: usize) -> DMatrix<f64> {
    let band = Band::new(pulse, e, tau);
    DMatrix::from_fn(n, n, |p, q| band.get(p as i64 - q as i64))
}

/// Per-antenna received data samples at the given sampling origin:
/// `y_m = sqrt(rho) sum_k c_km G_km b_k`, plus white unit-variance noise when
/// `noise_rng` is provided. `symbols` is `K x N` (user by symbol).
pub fn synthesize_rx_at<R: Rng + ?Sized>(
    cfg: &LinkConfig,
    real: &ChannelRealization,
    symbols: &DMatrix<Complex64>,
    origin: f64,
    rho: f64,
    mut noise_rng: Option<&mut R>,
) -> Result<Vec<DVector<Complex64>>> {
    if symbols.nrows() != cfg.users {
        return Err(Error::Config(format!(
            "{} symbol rows for {} users",
            symbols.nrows(),
            cfg.users
        )));
    }
    let n = symbols.ncols();
    let amp = rho.sqrt();
    let mut out = Vec::with_capacity(cfg.antennas);
    for m in 0..cfg.antennas {
        let mut y = DVector::from_element(n, Complex64::new(0.0, 0.0));
        for k in 0..cfg.users {
            let c = real.coeff(cfg, m, k) * amp;
            let band = Band::new(&cfg.pulse, origin, real.delays[(m, k)]);
            for p in 0..n as i64 {
                let mut acc = Complex64::new(0.0, 0.0);
                let lo = (p - (n as i64 - 1)).max(band.lo);
                let hi = p.min(band.lo + band.values.len() as i64 - 1);
                for lag in lo..=hi {
                    acc += symbols[(k, (p - lag) as usize)] * band.get(lag);
                }
                y[p as usize] += c * acc;
            }
        }
        if let Some(rng) = noise_rng.as_deref_mut() {
            for p in 0..n {
                y[p] += crate::rng::complex_normal(rng);
            }
        }
        out.push(y);
    }
    Ok(out)
}

/// Data-phase samples at the configured origin and data power.
pub fn synthesize_rx<R: Rng + ?Sized>(
    cfg: &LinkConfig,
    real: &ChannelRealization,
    symbols: &DMatrix<Complex64>,
    noise_rng: Option<&mut R>,
) -> Result<Vec<DVector<Complex64>>> {
    synthesize_rx_at(
        cfg,
        real,
        symbols,
        cfg.sampling_origin,
        cfg.rho_d,
        noise_rng,
    )
}

/// Pilot-phase samples at origin `e_s`: each user transmits its pilot row at
/// power `rho_p`. With a cyclic guard the pilot block wraps, so symbol
/// indices are taken modulo `N_p`.
pub fn synthesize_pilot_rx<R: Rng + ?Sized>(
    cfg: &LinkConfig,
    real: &ChannelRealization,
    pilots: &PilotSet,
    mut noise_rng: Option<&mut R>,
) -> Result<DMatrix<Complex64>> {
    if pilots.users() != cfg.users {
        return Err(Error::Config(format!(
            "{} pilot rows for {} users",
            pilots.users(),
            cfg.users
        )));
    }
    let np = pilots.len() as i64;
    let amp = cfg.rho_p.sqrt();
    let e_s = cfg.est_origin();
    let cyclic = pilots.cyclic();
    let mut out = DMatrix::from_element(cfg.antennas, np as usize, Complex64::new(0.0, 0.0));
    for m in 0..cfg.antennas {
        for k in 0..cfg.users {
            let c = real.coeff(cfg, m, k) * amp;
            let band = Band::new(&cfg.pulse, e_s, real.delays[(m, k)]);
            for p in 0..np {
                let mut acc = Complex64::new(0.0, 0.0);
                for (idx, &g) in band.values.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    let q = p - (band.lo + idx as i64);
                    let q = if cyclic {
                        q.rem_euclid(np)
                    } else if (0..np).contains(&q) {
                        q
                    } else {
                        continue;
                    };
                    acc += pilots.phi[(k, q as usize)] * g;
                }
                out[(m, p as usize)] += c * acc;
            }
        }
        if let Some(rng) = noise_rng.as_deref_mut() {
            for p in 0..np as usize {
                out[(m, p)] += crate::rng::complex_normal(rng);
            }
        }
    }
    Ok(out)
}

/// Covariance of the stacked noise across sampling origins (origin-major):
/// block `(t1, t2)` entry `(p, q)` is `g(T + (p - q) T_s + (e_t1 - e_t2) T_s)`.
/// A single origin is exactly white under Nyquist sampling.
pub fn noise_cov_oversampled(
    pulse: &PulseSpec<f64>,
    origins: &[f64],
    n: usize,
) -> Result<DMatrix<f64>> {
    let k = origins.len();
    if k == 0 {
        return Err(Error::Config("no sampling origins".into()));
    }
    if k == 1 {
        return Ok(DMatrix::identity(n, n));
    }
    let dur = pulse.duration();
    let mut cov = DMatrix::zeros(k * n, k * n);
    for t1 in 0..k {
        for t2 in 0..k {
            for p in 0..n {
                for q in 0..n {
                    let d = (p as f64 - q as f64) + (origins[t1] - origins[t2]);
                    cov[(t1 * n + p, t2 * n + q)] = pulse.conv_eval(dur + d);
                }
            }
        }
    }
    // Defensive PSD check; a clearly negative eigenvalue means the convolved
    // pulse grid is inconsistent.
    let min_eig = cov
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -1e-6 {
        return Err(Error::Numeric(format!(
            "oversampled noise covariance has eigenvalue {min_eig}"
        )));
    }
    Ok(cov)
}

/// Zero-mean circularly-symmetric draw with the given covariance, via
/// symmetric eigenfactorization (small negative eigenvalues clamped so
/// semidefinite covariances are accepted).
pub struct NoiseSampler {
    /// `factor * z` with `z ~ CN(0, I)` has the requested covariance.
    factor: DMatrix<f64>,
}

impl NoiseSampler {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let eig = cov.clone().symmetric_eigen();
        let dim = cov.nrows();
        let mut factor = eig.eigenvectors;
        for j in 0..dim {
            let lam = eig.eigenvalues[j];
            if lam < -1e-6 {
                return Err(Error::Numeric(format!(
                    "noise covariance has eigenvalue {lam}"
                )));
            }
            let s = lam.max(0.0).sqrt();
            for i in 0..dim {
                factor[(i, j)] *= s;
            }
        }
        Ok(Self { factor })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<Complex64> {
        let dim = self.factor.nrows();
        let z = DVector::from_fn(dim, |_, _| crate::rng::complex_normal(rng));
        let mut out = DVector::from_element(dim, Complex64::new(0.0, 0.0));
        for j in 0..dim {
            let zj = z[j];
            for i in 0..dim {
                out[i] += self.factor[(i, j)] * zj;
            }
        }
        out
    }
}

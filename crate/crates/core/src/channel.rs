//! Link configuration, path-loss and small-scale fading generation, and
//! pilot sequence families with their shift-correlation tensors.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::delay::DelayDist;
use crate::pulse::PulseSpec;
use crate::{Error, Result};

/// All deterministic parameters of one uplink scenario. Powers are linear
/// SNRs (noise variance is one), times are in symbol units.
#[derive(Debug, Clone)]
pub struct LinkConfig {
    /// Number of single-antenna users `K`.
    pub users: usize,
    /// Number of base-station antennas `M`.
    pub antennas: usize,
    /// Symbols per coherence block `N` (pilot plus data).
    pub block_len: usize,
    /// Pilot symbols per block `N_p`.
    pub pilot_len: usize,
    /// Data-symbol transmit SNR.
    pub rho_d: f64,
    /// Pilot-symbol transmit SNR.
    pub rho_p: f64,
    /// Sampling origin `e` in `[0, 1]`, in symbol units past the nominal
    /// matched-filter peak.
    pub sampling_origin: f64,
    /// Estimation-phase sampling origin `e_s`; `None` means the data origin.
    pub est_origin: Option<f64>,
    /// Detection oversampling origins `e_t` for the oversampled receiver;
    /// `None` means the `t / (K + 1)` default.
    pub detect_origins: Option<Vec<f64>>,
    /// Large-scale gain per user.
    pub pathloss: Vec<f64>,
    pub pilot_kind: PilotKind,
    pub seed: u64,
    pub pulse: PulseSpec<f64>,
    pub delays: DelayDist<f64>,
}

impl LinkConfig {
    /// Conventional defaults for `K` users and `M` antennas: `N = 64`,
    /// `N_p` the smallest power of two at least `K`, unit path loss,
    /// `rho_p = N_p * rho_d`, midpoint sampling, rectangular pulse, and the
    /// first-arrival delay mixture.
    pub fn new(users: usize, antennas: usize, rho_d: f64) -> Result<Self> {
        if users == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        let pilot_len = users.next_power_of_two();
        let cfg = Self {
            users,
            antennas,
            block_len: 64,
            pilot_len,
            rho_d,
            rho_p: pilot_len as f64 * rho_d,
            sampling_origin: 0.5,
            est_origin: None,
            detect_origins: None,
            pathloss: vec![1.0; users],
            pilot_kind: PilotKind::Hadamard,
            seed: 0,
            pulse: PulseSpec::rectangular(),
            delays: DelayDist::standard_mixture(users)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.antennas == 0 {
            return Err(Error::Config("K and M must be positive".into()));
        }
        if self.pilot_len == 0 || self.pilot_len >= self.block_len {
            return Err(Error::Config(format!(
                "need 0 < N_p < N, got N_p = {}, N = {}",
                self.pilot_len, self.block_len
            )));
        }
        if self.pilot_len < self.users {
            return Err(Error::Config(format!(
                "pilot length {} shorter than user count {}",
                self.pilot_len, self.users
            )));
        }
        if !(self.rho_d > 0.0) || !(self.rho_p > 0.0) {
            return Err(Error::Config("SNRs must be positive and finite".into()));
        }
        if !(0.0..=1.0).contains(&self.sampling_origin) {
            return Err(Error::Config(format!(
                "sampling origin must be in [0, 1], got {}",
                self.sampling_origin
            )));
        }
        if self.pathloss.len() != self.users {
            return Err(Error::Config(format!(
                "{} path-loss entries for {} users",
                self.pathloss.len(),
                self.users
            )));
        }
        if self.pathloss.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::Config("path-loss gains must be positive".into()));
        }
        if let Some(e) = self.est_origin {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!(
                    "estimation origin must be in [0, 1], got {e}"
                )));
            }
        }
        let origins = self.oversample_origins();
        if origins.len() != self.users {
            return Err(Error::Config(format!(
                "{} detection origins for {} users",
                origins.len(),
                self.users
            )));
        }
        for (t, &e) in origins.iter().enumerate() {
            if !(0.0..1.0).contains(&e) {
                return Err(Error::Config(format!(
                    "detection origin {e} outside [0, 1)"
                )));
            }
            if origins[..t].iter().any(|&o| o == e) {
                return Err(Error::Config(format!("duplicated detection origin {e}")));
            }
        }
        Ok(())
    }

    /// Estimation-phase sampling origin `e_s`.
    pub fn est_origin(&self) -> f64 {
        self.est_origin.unwrap_or(self.sampling_origin)
    }

    /// Pilot sequences for this configuration.
    pub fn pilots(&self) -> Result<PilotSet> {
        match self.pilot_kind {
            PilotKind::Hadamard => PilotSet::hadamard(self.users, self.pilot_len),
            PilotKind::ZadoffChu { cyclic_guard } => {
                PilotSet::zadoff_chu(self.users, self.pilot_len, cyclic_guard)
            }
        }
    }

    /// Data symbols per block.
    pub fn data_len(&self) -> usize {
        self.block_len - self.pilot_len
    }

    /// Rate prefactor for schemes that spend `N_p` symbols on pilots.
    pub fn pilot_overhead_factor(&self) -> f64 {
        self.data_len() as f64 / self.block_len as f64
    }

    /// The `K` staggered sampling origins used by the oversampled zero-forcing
    /// receiver; defaults to `e_t = t / (K + 1)`.
    pub fn oversample_origins(&self) -> Vec<f64> {
        if let Some(ref es) = self.detect_origins {
            return es.clone();
        }
        let k = self.users as f64;
        (1..=self.users).map(|t| t as f64 / (k + 1.0)).collect()
    }
}

/// Large-scale fading model: uniform cell-edge distance, log-normal
/// shadowing in dB, power-law decay past the reference distance.
#[derive(Debug, Clone, Copy)]
pub struct PathlossModel {
    pub exponent: f64,
    pub shadow_sigma_db: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for PathlossModel {
    fn default() -> Self {
        Self {
            exponent: 1.8,
            shadow_sigma_db: 8.0,
            r_min: 100.0,
            r_max: 1000.0,
        }
    }
}

impl PathlossModel {
    /// Draw `beta_k = z_k / (r_k / r_min)^exponent` for `users` users, with
    /// `r_k` uniform on `[r_min, r_max]` and `10 log10 z_k ~ N(0, sigma^2)`.
    pub fn sample<R: Rng + ?Sized>(&self, users: usize, rng: &mut R) -> Vec<f64> {
        (0..users)
            .map(|_| {
                let r = rng.gen_range(self.r_min..=self.r_max);
                let normal: f64 = StandardNormal.sample(rng);
                let shadow_db = self.shadow_sigma_db * normal;
                let z = 10f64.powf(shadow_db / 10.0);
                z / (r / self.r_min).powf(self.exponent)
            })
            .collect()
    }
}

/// One draw of the random link state: Rayleigh fading coefficients and the
/// per-link timing offsets. Both are `M x K` (antenna by user).
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Small-scale coefficients `h`, i.i.d. `CN(0, 1)`.
    pub fading: DMatrix<Complex64>,
    /// Timing offsets `tau` in symbol units.
    pub delays: DMatrix<f64>,
}

impl ChannelRealization {
    pub fn draw<R: Rng + ?Sized>(cfg: &LinkConfig, rng: &mut R) -> Self {
        let (m, k) = (cfg.antennas, cfg.users);
        let fading = DMatrix::from_fn(m, k, |_, _| crate::rng::complex_normal(rng));
        let delays = DMatrix::from_fn(m, k, |_, _| cfg.delays.sample(rng));
        Self { fading, delays }
    }

    /// Full channel coefficient `c_km = sqrt(beta_k) h_km` at antenna `m`.
    pub fn coeff(&self, cfg: &LinkConfig, m: usize, k: usize) -> Complex64 {
        self.fading[(m, k)] * cfg.pathloss[k].sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotKind {
    /// Orthonormal rows of a Sylvester-Hadamard matrix.
    Hadamard,
    /// Cyclic shifts of one Zadoff-Chu sequence. With `cyclic_guard` the
    /// pilot block is cyclically extended so shift correlations wrap around.
    ZadoffChu { cyclic_guard: bool },
}

/// `K` unit-norm pilot sequences of length `N_p`, rows of `phi`.
#[derive(Debug, Clone)]
pub struct PilotSet {
    pub kind: PilotKind,
    /// `K x N_p`, each row has unit norm.
    pub phi: DMatrix<Complex64>,
}

impl PilotSet {
    /// First `K` rows of the order-`N_p` Sylvester-Hadamard matrix, scaled to
    /// unit norm. Requires `N_p` a power of two with `N_p >= K`.
    pub fn hadamard(users: usize, pilot_len: usize) -> Result<Self> {
        if !pilot_len.is_power_of_two() {
            return Err(Error::Config(format!(
                "Hadamard pilot length must be a power of two, got {pilot_len}"
            )));
        }
        if users == 0 || users > pilot_len {
            return Err(Error::Config(format!(
                "need 1 <= K <= N_p for Hadamard pilots, got K = {users}, N_p = {pilot_len}"
            )));
        }
        let scale = (pilot_len as f64).sqrt().recip();
        let phi = DMatrix::from_fn(users, pilot_len, |k, n| {
            // Sylvester entry is (-1)^(popcount(k & n)).
            let sign = if (k & n).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            Complex64::new(sign * scale, 0.0)
        });
        Ok(Self {
            kind: PilotKind::Hadamard,
            phi,
        })
    }

    /// Cyclic shifts of the root-1 Zadoff-Chu sequence
    /// `x(n) = exp(-i pi n (n+1) / N_p) / sqrt(N_p)` (odd `N_p`), user `k`
    /// shifted by `k * floor(N_p / K)`. Spreading the shifts keeps the
    /// nonzero correlation lags of distinct users outside the pulse span
    /// whenever `floor(N_p / K)` exceeds it.
    pub fn zadoff_chu(users: usize, pilot_len: usize, cyclic_guard: bool) -> Result<Self> {
        if pilot_len % 2 == 0 {
            return Err(Error::Config(format!(
                "Zadoff-Chu pilot length must be odd, got {pilot_len}"
            )));
        }
        if users == 0 || users > pilot_len {
            return Err(Error::Config(format!(
                "need 1 <= K <= N_p for Zadoff-Chu pilots, got K = {users}, N_p = {pilot_len}"
            )));
        }
        let np = pilot_len as f64;
        let scale = np.sqrt().recip();
        let base: Vec<Complex64> = (0..pilot_len)
            .map(|n| {
                let n = n as f64;
                Complex64::from_polar(scale, -std::f64::consts::PI * n * (n + 1.0) / np)
            })
            .collect();
        let spacing = pilot_len / users;
        let phi = DMatrix::from_fn(users, pilot_len, |k, n| {
            base[(n + pilot_len - (k * spacing) % pilot_len) % pilot_len]
        });
        Ok(Self {
            kind: PilotKind::ZadoffChu { cyclic_guard },
            phi,
        })
    }

    pub fn users(&self) -> usize {
        self.phi.nrows()
    }

    pub fn len(&self) -> usize {
        self.phi.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.ncols() == 0
    }

    /// Whether shift correlations wrap cyclically.
    pub fn cyclic(&self) -> bool {
        matches!(self.kind, PilotKind::ZadoffChu { cyclic_guard: true })
    }

    /// Shift correlation `Upsilon^i(j, l) = sum_q phi_j(q) conj(phi_l(q+i))`,
    /// zero padded at the block edges unless a cyclic guard wraps the index.
    pub fn shift_corr(&self, lag: i64, j: usize, l: usize) -> Complex64 {
        let np = self.len() as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for q in 0..np {
            let n = q + lag;
            let n = if self.cyclic() {
                n.rem_euclid(np)
            } else if (0..np).contains(&n) {
                n
            } else {
                continue;
            };
            acc += self.phi[(j, q as usize)] * self.phi[(l, n as usize)].conj();
        }
        acc
    }

    /// The full `K x K` shift-correlation matrix at one lag.
    pub fn shift_corr_matrix(&self, lag: i64) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.users(), self.users(), |j, l| {
            self.shift_corr(lag, j, l)
        })
    }
}

//! Closed-form achievable-rate engine: delay-averaged moment tables,
//! second-order statistics of the effective channels for all four receivers,
//! the generic worst-case-noise rate formula, the printed closed-form
//! evaluators, asymptotic limits, and the approximation-error bound.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::LinkConfig;
use crate::delay::DelayDist;
use crate::discretize::{noise_cov_oversampled, Band};
use crate::pulse::PulseSpec;
use crate::receivers::{build_gamma_w, build_z, GammaW, LagTable, ReceiverKind, ZCorrector};
use crate::{Error, Result};

/// `E[f(tau)]` for a complex-valued integrand.
fn expect_c<F: Fn(f64) -> Complex64>(
    dist: &DelayDist<f64>,
    breakpoints: &[f64],
    f: F,
) -> Complex64 {
    let re = dist.expect_split(|t| f(t).re, breakpoints);
    let im = dist.expect_split(|t| f(t).im, breakpoints);
    Complex64::new(re, im)
}

/// Delay values where any coupling argument at the given sampling origins
/// crosses a symbol boundary (integrand kinks).
fn origin_breakpoints(pulse: &PulseSpec<f64>, origins: &[f64]) -> Vec<f64> {
    let dur = pulse.duration();
    let mut bps: Vec<f64> = origins
        .iter()
        .flat_map(|&e| pulse.nyquist_breakpoints(e + dur))
        .collect();
    bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bps.dedup();
    bps
}

/// Evaluates the contaminated-estimation leakage of one user pair as a
/// function of that user's delay.
struct LeakageFn {
    /// `ups[idx][(j, l)]` at lag `idx - bound`.
    ups: Vec<DMatrix<Complex64>>,
    bound: i64,
    e_s: f64,
}

impl LeakageFn {
    fn new(cfg: &LinkConfig) -> Result<Self> {
        let pilots = cfg.pilots()?;
        let bound = cfg.pulse.full_lag_bound();
        let ups = (-bound..=bound)
            .map(|i| pilots.shift_corr_matrix(i))
            .collect();
        Ok(Self {
            ups,
            bound,
            e_s: cfg.est_origin(),
        })
    }

    /// `lambda_{lj}(tau)`.
    fn eval(&self, pulse: &PulseSpec<f64>, l: usize, j: usize, tau: f64) -> Complex64 {
        let band = Band::new(pulse, self.e_s, tau);
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, ups) in self.ups.iter().enumerate() {
            let g = band.get(idx as i64 - self.bound);
            if g != 0.0 {
                acc += ups[(j, l)] * g;
            }
        }
        acc
    }
}

/// Moments of the pilot-estimation chain. Cross-user products separate into
/// marginal factors because distinct users' delays are independent; same-user
/// products are joint single-delay integrals.
pub struct PilotMoments {
    /// `E[lambda_lj]`, indexed `(l, j)`.
    pub lam1: DMatrix<Complex64>,
    /// `E[|lambda_lj|^2]`, indexed `(l, j)`.
    pub lam2: DMatrix<f64>,
    /// Joint `E[lambda_lk(tau) g_n(tau)]` per `[l][k]`.
    pub gamma1_same: Vec<Vec<LagTable<Complex64>>>,
    /// Joint `E[|lambda_lk(tau)|^2 g_n^2(tau)]` per `[l][k]`.
    pub gamma2_same: Vec<Vec<LagTable<f64>>>,
}

impl PilotMoments {
    /// `gamma'_{ljk}(n)`.
    pub fn gamma1(&self, eg: &LagTable<f64>, l: usize, j: usize, k: usize, n: i64) -> Complex64 {
        if j == k {
            self.gamma1_same[l][k].get(n)
        } else {
            self.lam1[(l, j)] * eg.get(n)
        }
    }

    /// `gamma''_{ljk}(n)` (with squared magnitudes).
    pub fn gamma2(&self, eg2: &LagTable<f64>, l: usize, j: usize, k: usize, n: i64) -> f64 {
        if j == k {
            self.gamma2_same[l][k].get(n)
        } else {
            self.lam2[(l, j)] * eg2.get(n)
        }
    }

    /// The decontaminated idealization: leakage is exactly the identity, so
    /// the estimation chain reduces to the perfect-pilot moments.
    pub fn idealized(eg: &LagTable<f64>, eg2: &LagTable<f64>, users: usize) -> Self {
        let zero_c = LagTable::new(0, vec![Complex64::new(0.0, 0.0)]);
        let zero_r = LagTable::new(0, vec![0.0]);
        let eg_c = LagTable::new(
            eg.lo,
            eg.values.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        );
        let gamma1_same = (0..users)
            .map(|l| {
                (0..users)
                    .map(|k| if l == k { eg_c.clone() } else { zero_c.clone() })
                    .collect()
            })
            .collect();
        let gamma2_same = (0..users)
            .map(|l| {
                (0..users)
                    .map(|k| if l == k { eg2.clone() } else { zero_r.clone() })
                    .collect()
            })
            .collect();
        Self {
            lam1: DMatrix::from_fn(users, users, |l, j| {
                Complex64::new(if l == j { 1.0 } else { 0.0 }, 0.0)
            }),
            lam2: DMatrix::from_fn(users, users, |l, j| if l == j { 1.0 } else { 0.0 }),
            gamma1_same,
            gamma2_same,
        }
    }
}

/// Moments of the perfect-CSI zero-forcing corrector, taken along the
/// interior reference row of `Z`.
pub struct ZfPerfectMoments {
    pub corrector: ZCorrector,
    pub center: usize,
    /// `E[(Z G)^2(a, q)]` per column `q`.
    pub xi2_row: Vec<f64>,
    pub xi2_sum: f64,
    /// `(Z Z^H)(a, a)`.
    pub eps0: f64,
}

/// Per-user moments of the oversampled zero-forcing chain.
pub struct ZfUserMoments {
    pub gw: GammaW,
    /// Row `a` of `W_ll` (length `K N`).
    pub w_row: Vec<Complex64>,
    /// `u_l0 = E[sum_q |(W_ll Ghat)(a, q)|^2]`; also the corrected-channel
    /// power sum for an interfering user's delay.
    pub qsum: f64,
    /// `E[|(W_ll Ghat)(a, a)|^2]`.
    pub q_at: f64,
    /// Joint `sum_q E[|lambda_lk|^2 |(W_ll Ghat)(a, q)|^2]` per `k`.
    pub joint_sum: Vec<f64>,
    /// Joint `E[|lambda_lk|^2 |(W_ll Ghat)(a, a)|^2]` per `k`.
    pub joint_at: Vec<f64>,
    /// `v_l0 = (W_ll Sigma_os W_ll^H)(a, a)`.
    pub v0: f64,
}

pub struct ZfOversampledMoments {
    pub origins: Vec<f64>,
    pub center: usize,
    pub per_user: Vec<ZfUserMoments>,
}

/// All delay-averaged moment tables one configuration needs. Heavier blocks
/// are only built for the receiver kinds requested.
pub struct MomentTable {
    pub lag_bound: i64,
    pub eg: LagTable<f64>,
    pub eg2: LagTable<f64>,
    pub eg2_sum: f64,
    pub pilot: Option<PilotMoments>,
    pub zf: Option<ZfPerfectMoments>,
    pub zfo: Option<ZfOversampledMoments>,
}

impl MomentTable {
    /// Build the tables needed by `kinds` for `cfg`. `block_len` sets the
    /// zero-forcing corrector dimension (the frame length `N`).
    pub fn build(cfg: &LinkConfig, kinds: &[ReceiverKind]) -> Result<Self> {
        cfg.validate()?;
        let b = cfg.pulse.full_lag_bound();
        let e = cfg.sampling_origin;
        let mut eg_vals = Vec::with_capacity((2 * b + 1) as usize);
        let mut eg2_vals = Vec::with_capacity((2 * b + 1) as usize);
        for n in -b..=b {
            eg_vals.push(cfg.pulse.moment(&cfg.delays, e, n, 1)?);
            eg2_vals.push(cfg.pulse.moment(&cfg.delays, e, n, 2)?);
        }
        let eg = LagTable::new(-b, eg_vals);
        let eg2 = LagTable::new(-b, eg2_vals);
        let eg2_sum = eg2.values.iter().sum();

        let needs_pilot = kinds.iter().any(|k| k.imperfect_csi());
        let needs_zf = kinds.contains(&ReceiverKind::MrczfPerfect);
        let needs_zfo = kinds.contains(&ReceiverKind::MrczfImperfect);

        let mut table = Self {
            lag_bound: b,
            eg,
            eg2,
            eg2_sum,
            pilot: None,
            zf: None,
            zfo: None,
        };
        if needs_pilot {
            table.pilot = Some(build_pilot_moments(cfg)?);
        }
        if needs_zf {
            table.zf = Some(build_zf_perfect(cfg, &table.eg)?);
        }
        if needs_zfo {
            table.zfo = Some(build_zf_oversampled(cfg)?);
        }
        Ok(table)
    }

    fn pilot(&self) -> Result<&PilotMoments> {
        self.pilot
            .as_ref()
            .ok_or_else(|| Error::Config("pilot moments not built for this table".into()))
    }

    fn zf(&self) -> Result<&ZfPerfectMoments> {
        self.zf
            .as_ref()
            .ok_or_else(|| Error::Config("zero-forcing moments not built for this table".into()))
    }

    fn zfo(&self) -> Result<&ZfOversampledMoments> {
        self.zfo.as_ref().ok_or_else(|| {
            Error::Config("oversampled zero-forcing moments not built for this table".into())
        })
    }

    /// Swap in alternative pilot-chain moments (used for the decontaminated
    /// idealization cross-checks).
    pub fn with_pilot(mut self, pilot: PilotMoments) -> Self {
        self.pilot = Some(pilot);
        self
    }
}

fn build_pilot_moments(cfg: &LinkConfig) -> Result<PilotMoments> {
    let k_users = cfg.users;
    let b = cfg.pulse.full_lag_bound();
    let leak = LeakageFn::new(cfg)?;
    let pulse = &cfg.pulse;
    let dist = &cfg.delays;
    let dur = pulse.duration();
    let e = cfg.sampling_origin;
    let bp_s = origin_breakpoints(pulse, &[cfg.est_origin()]);
    let bp_mixed = origin_breakpoints(pulse, &[cfg.est_origin(), e]);

    let lam1 = DMatrix::from_fn(k_users, k_users, |l, j| {
        expect_c(dist, &bp_s, |t| leak.eval(pulse, l, j, t))
    });
    let lam2 = DMatrix::from_fn(k_users, k_users, |l, j| {
        dist.expect_split(|t| leak.eval(pulse, l, j, t).norm_sqr(), &bp_s)
    });
    let mut gamma1_same = Vec::with_capacity(k_users);
    let mut gamma2_same = Vec::with_capacity(k_users);
    for l in 0..k_users {
        let mut row1 = Vec::with_capacity(k_users);
        let mut row2 = Vec::with_capacity(k_users);
        for k in 0..k_users {
            let mut v1 = Vec::with_capacity((2 * b + 1) as usize);
            let mut v2 = Vec::with_capacity((2 * b + 1) as usize);
            for n in -b..=b {
                let c = e + dur + n as f64;
                v1.push(expect_c(dist, &bp_mixed, |t| {
                    leak.eval(pulse, l, k, t) * pulse.conv_eval(c - t)
                }));
                v2.push(dist.expect_split(
                    |t| {
                        let g = pulse.conv_eval(c - t);
                        leak.eval(pulse, l, k, t).norm_sqr() * g * g
                    },
                    &bp_mixed,
                ));
            }
            row1.push(LagTable::new(-b, v1));
            row2.push(LagTable::new(-b, v2));
        }
        gamma1_same.push(row1);
        gamma2_same.push(row2);
    }
    Ok(PilotMoments {
        lam1,
        lam2,
        gamma1_same,
        gamma2_same,
    })
}

fn check_interior(n: usize, b: i64) -> Result<usize> {
    let center = n / 2;
    if (center as i64) < b || ((n - 1 - center) as i64) < b {
        return Err(Error::Config(format!(
            "frame length {n} too short for pulse lag span {b}"
        )));
    }
    Ok(center)
}

fn build_zf_perfect(cfg: &LinkConfig, eg: &LagTable<f64>) -> Result<ZfPerfectMoments> {
    let n = cfg.block_len;
    let b = cfg.pulse.full_lag_bound();
    let center = check_interior(n, b)?;
    let corrector = build_z(eg, n)?;
    let z_row: Vec<f64> = (0..n).map(|q| corrector.z[(center, q)]).collect();
    let bp = origin_breakpoints(&cfg.pulse, &[cfg.sampling_origin]);
    let dur = cfg.pulse.duration();
    let e = cfg.sampling_origin;
    let pulse = &cfg.pulse;
    let xi2_row: Vec<f64> = (0..n)
        .map(|q| {
            cfg.delays.expect_split(
                |tau| {
                    let mut acc = 0.0;
                    for d in -b..=b {
                        let r = q as i64 + d;
                        if (0..n as i64).contains(&r) {
                            acc += z_row[r as usize] * pulse.conv_eval(e + dur + d as f64 - tau);
                        }
                    }
                    acc * acc
                },
                &bp,
            )
        })
        .collect();
    let xi2_sum = xi2_row.iter().sum();
    let eps0 = z_row.iter().map(|x| x * x).sum();
    Ok(ZfPerfectMoments {
        corrector,
        center,
        xi2_row,
        xi2_sum,
        eps0,
    })
}

fn build_zf_oversampled(cfg: &LinkConfig) -> Result<ZfOversampledMoments> {
    let n = cfg.block_len;
    let k_users = cfg.users;
    let b = cfg.pulse.full_lag_bound();
    let lags = (2 * b + 1) as usize;
    let center = check_interior(n, b)?;
    let origins = cfg.oversample_origins();
    let n_orig = origins.len();
    let pulse = &cfg.pulse;
    let dist = &cfg.delays;
    let leak = LeakageFn::new(cfg)?;
    let mut all_origins = origins.clone();
    all_origins.push(cfg.est_origin());
    let bp_all = origin_breakpoints(pulse, &all_origins);
    // Splitting at the convolution-grid kinks as well makes every quadrature
    // cell polynomial, so the adaptive passes below terminate at depth zero.
    let mut bp_grid = bp_all.clone();
    let dur = pulse.duration();
    for &e in &all_origins {
        bp_grid.extend(pulse.interp_breakpoints(e + dur));
    }

    let sigma_os = noise_cov_oversampled(pulse, &origins, n)?;

    let build_user = |l: usize| -> Result<ZfUserMoments> {
        // Gamma_l block (t, k): Toeplitz in gamma'_{lkkt}(nn), the joint
        // moment of user k's leakage into l and user k's coupling at e_t.
        // All origins and lags of one user pair share a single vector
        // quadrature (the leakage factor dominates the integrand cost).
        let mut tables: Vec<Vec<LagTable<Complex64>>> = vec![Vec::with_capacity(k_users); n_orig];
        for k in 0..k_users {
            let vals = dist.expect_vec(2 * n_orig * lags, 1e-9, &bp_all, |tau, out| {
                let lam = leak.eval(pulse, l, k, tau);
                for (t, &et) in origins.iter().enumerate() {
                    let band = Band::new(pulse, et, tau);
                    for (i, &g) in band.values.iter().enumerate() {
                        let z = lam * g;
                        out[2 * (t * lags + i)] = z.re;
                        out[2 * (t * lags + i) + 1] = z.im;
                    }
                }
            });
            for (t, row) in tables.iter_mut().enumerate() {
                let v = (0..lags)
                    .map(|i| Complex64::new(vals[2 * (t * lags + i)], vals[2 * (t * lags + i) + 1]))
                    .collect();
                row.push(LagTable::new(-b, v));
            }
        }
        let gw = build_gamma_w(&tables, n)?;
        let w_row: Vec<Complex64> = (0..k_users * n)
            .map(|c| gw.w[(l * n + center, c)])
            .collect();
        // One quadrature pass per user: the corrected-channel row power and
        // center-entry power for a single delay draw, plus their joint
        // moments with each user's squared leakage. Tolerance matches the
        // relative fidelity of the interpolated pulse cache; tighter targets
        // only chase interpolation error.
        let vals = dist.expect_vec(2 + 2 * k_users, 1e-6, &bp_grid, |tau, out| {
            let bands: Vec<Band> = origins
                .iter()
                .map(|&et| Band::new(pulse, et, tau))
                .collect();
            let mut row = 0.0;
            let mut entry = 0.0;
            for q in 0..n as i64 {
                let mut acc = Complex64::new(0.0, 0.0);
                for (t, band) in bands.iter().enumerate() {
                    for d in -b..=b {
                        let r = q + d;
                        if (0..n as i64).contains(&r) {
                            let g = band.get(d);
                            if g != 0.0 {
                                acc += w_row[t * n + r as usize] * g;
                            }
                        }
                    }
                }
                let p = acc.norm_sqr();
                row += p;
                if q == center as i64 {
                    entry = p;
                }
            }
            out[0] = row;
            out[1] = entry;
            for k in 0..k_users {
                let lam2 = leak.eval(pulse, l, k, tau).norm_sqr();
                out[2 + k] = lam2 * row;
                out[2 + k_users + k] = lam2 * entry;
            }
        });
        let qsum = vals[0];
        let q_at = vals[1];
        let joint_sum = vals[2..2 + k_users].to_vec();
        let joint_at = vals[2 + k_users..].to_vec();
        let mut v0 = Complex64::new(0.0, 0.0);
        for p in 0..k_users * n {
            for q in 0..k_users * n {
                v0 += w_row[p] * sigma_os[(p, q)] * w_row[q].conj();
            }
        }
        Ok(ZfUserMoments {
            gw,
            w_row,
            qsum,
            q_at,
            joint_sum,
            joint_at,
            v0: v0.re,
        })
    };
    let per_user: Vec<ZfUserMoments> = (0..k_users)
        .into_par_iter()
        .map(build_user)
        .collect::<Result<_>>()?;
    Ok(ZfOversampledMoments {
        origins,
        center,
        per_user,
    })
}

/// Second-order statistics of one user's effective channel under one
/// receiver: the squared mean of the desired coefficient, second-moment sums
/// over same-user and cross-user coefficients, and the effective noise
/// variance per combined sample.
#[derive(Debug, Clone, Copy)]
pub struct SecondOrderStats {
    pub kind: ReceiverKind,
    pub user: usize,
    pub antennas: usize,
    pub rho_d: f64,
    pub kappa: f64,
    /// `|E[T_ll(a, a)]|^2`.
    pub signal_mean_sq: f64,
    /// `E[|T_ll(a, a)|^2]`.
    pub signal_second: f64,
    /// `sum_n E[|T_ll(a, n)|^2]`.
    pub same_user_second: f64,
    /// `sum_{k != l} sum_n E[|T_lk(a, n)|^2]`.
    pub cross_second: f64,
    /// Effective noise variance at the detection sample.
    pub noise_var: f64,
}

/// Achievable-rate report with its SINR decomposition.
#[derive(Debug, Clone, Copy)]
pub struct RateReport {
    pub kind: ReceiverKind,
    pub user: usize,
    /// Bits per symbol.
    pub rate: f64,
    pub kappa: f64,
    pub signal: f64,
    pub isi: f64,
    pub iui: f64,
    pub noise: f64,
}

impl RateReport {
    pub fn sinr(&self) -> f64 {
        self.signal / (self.isi + self.iui + self.noise)
    }
}

/// Closed-form second-order statistics for user `l`.
pub fn second_order_stats(
    kind: ReceiverKind,
    cfg: &LinkConfig,
    moments: &MomentTable,
    l: usize,
) -> Result<SecondOrderStats> {
    if l >= cfg.users {
        return Err(Error::Config(format!("user index {l} out of range")));
    }
    let m = cfg.antennas as f64;
    let b = moments.lag_bound;
    let betas = &cfg.pathloss;
    let bl = betas[l];
    let kappa = if kind.imperfect_csi() {
        cfg.pilot_overhead_factor()
    } else {
        1.0
    };
    let (signal_mean_sq, signal_second, same_user_second, cross_second, noise_var) = match kind {
        ReceiverKind::MrcPerfect => {
            let eg = &moments.eg;
            let eg2 = &moments.eg2;
            let mean_sq = bl * bl * eg.get(0) * eg.get(0);
            let second =
                |nn: i64| bl * bl / m * (2.0 * eg2.get(nn) + (m - 1.0) * eg.get(nn) * eg.get(nn));
            let same: f64 = (-b..=b).map(second).sum();
            let cross: f64 = betas
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != l)
                .map(|(_, &bk)| bl * bk / m * moments.eg2_sum)
                .sum();
            (mean_sq, second(0), same, cross, bl / m)
        }
        ReceiverKind::MrcImperfect => {
            let pm = moments.pilot()?;
            let eg = &moments.eg;
            let eg2 = &moments.eg2;
            let mean_sq = bl * bl * pm.gamma1(eg, l, l, l, 0).norm_sqr();
            let entry = |k: usize, nn: i64| {
                let bk = betas[k];
                let mut acc = bk
                    * bk
                    * (2.0 * pm.gamma2(eg2, l, k, k, nn)
                        + (m - 1.0) * pm.gamma1(eg, l, k, k, nn).norm_sqr());
                for (j, &bj) in betas.iter().enumerate() {
                    if j != k {
                        acc += bj * bk * pm.gamma2(eg2, l, j, k, nn);
                    }
                }
                acc / m
            };
            let same: f64 = (-b..=b).map(|nn| entry(l, nn)).sum();
            // Contaminated cross-user coefficients are not zero mean, so the
            // same second-moment form applies to them.
            let cross: f64 = (0..cfg.users)
                .filter(|&k| k != l)
                .map(|k| (-b..=b).map(|nn| entry(k, nn)).sum::<f64>())
                .sum();
            let beta_sum: f64 = betas.iter().sum();
            let lam_term: f64 = betas
                .iter()
                .enumerate()
                .map(|(j, &bj)| bj * pm.lam2[(l, j)])
                .sum();
            let noise = cfg.rho_d / (m * cfg.rho_p) * beta_sum * moments.eg2_sum
                + (lam_term + 1.0 / cfg.rho_p) / m;
            (mean_sq, entry(l, 0), same, cross, noise)
        }
        ReceiverKind::MrczfPerfect => {
            let zf = moments.zf()?;
            let a = zf.center;
            let mean_sq = bl * bl;
            let second_at = bl * bl / m * (2.0 * zf.xi2_row[a] + (m - 1.0));
            let same = bl * bl / m * (2.0 * zf.xi2_sum) + bl * bl * (m - 1.0) / m;
            let cross: f64 = betas
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != l)
                .map(|(_, &bk)| bl * bk / m * zf.xi2_sum)
                .sum();
            (mean_sq, second_at, same, cross, bl / m * zf.eps0)
        }
        ReceiverKind::MrczfImperfect => {
            let zfo = moments.zfo()?;
            let pm = moments.pilot()?;
            let um = &zfo.per_user[l];
            let mean_sq = bl * bl;
            let gammahat_sum = |j: usize, k: usize| {
                if j == k {
                    um.joint_sum[k]
                } else {
                    pm.lam2[(l, j)] * um.qsum
                }
            };
            let gammahat_at = |j: usize, k: usize| {
                if j == k {
                    um.joint_at[k]
                } else {
                    pm.lam2[(l, j)] * um.q_at
                }
            };
            let second_at = (bl * bl * (2.0 * m * gammahat_at(l, l) + m * (m - 1.0))
                + betas
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != l)
                    .map(|(j, &bj)| bj * bl * m * gammahat_at(j, l))
                    .sum::<f64>())
                / (m * m);
            let same = (bl * bl * (2.0 * m * gammahat_sum(l, l) + m * (m - 1.0))
                + betas
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != l)
                    .map(|(j, &bj)| bj * bl * m * gammahat_sum(j, l))
                    .sum::<f64>())
                / (m * m);
            let cross: f64 = (0..cfg.users)
                .filter(|&k| k != l)
                .map(|k| {
                    let bk = betas[k];
                    (bk * bk * 2.0 * m * gammahat_sum(k, k)
                        + betas
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != k)
                            .map(|(j, &bj)| bj * bk * m * gammahat_sum(j, k))
                            .sum::<f64>())
                        / (m * m)
                })
                .sum();
            let beta_sum: f64 = betas.iter().sum();
            let lam_term: f64 = betas
                .iter()
                .enumerate()
                .map(|(j, &bj)| bj * pm.lam2[(l, j)])
                .sum();
            let noise = cfg.rho_d / (m * cfg.rho_p) * beta_sum * um.qsum
                + (lam_term + 1.0 / cfg.rho_p) / m * um.v0;
            (mean_sq, second_at, same, cross, noise)
        }
    };
    Ok(SecondOrderStats {
        kind,
        user: l,
        antennas: cfg.antennas,
        rho_d: cfg.rho_d,
        kappa,
        signal_mean_sq,
        signal_second,
        same_user_second,
        cross_second,
        noise_var,
    })
}

/// The generic worst-case-uncorrelated-noise rate from second-order
/// statistics.
pub fn rate_from_stats(stats: &SecondOrderStats) -> Result<RateReport> {
    let rho = stats.rho_d;
    let signal = rho * stats.signal_mean_sq;
    let isi = rho * (stats.same_user_second - stats.signal_mean_sq);
    let iui = rho * stats.cross_second;
    let noise = stats.noise_var;
    if isi < -1e-9 * stats.same_user_second.abs() {
        return Err(Error::Numeric(format!(
            "negative residual self-interference {isi}"
        )));
    }
    let isi = isi.max(0.0);
    let denom = isi + iui + noise;
    if !(denom > 0.0) {
        return Err(Error::Numeric(format!(
            "nonpositive interference-plus-noise denominator {denom}"
        )));
    }
    Ok(RateReport {
        kind: stats.kind,
        user: stats.user,
        rate: stats.kappa * (1.0 + signal / denom).log2(),
        kappa: stats.kappa,
        signal,
        isi,
        iui,
        noise,
    })
}

/// Closed-form rate of the receiver that `theorem` analyzes, evaluated from
/// the printed expressions (with the desired-signal factor `M` that the
/// derivation implies).
pub fn theorem_rate(
    theorem: u8,
    cfg: &LinkConfig,
    moments: &MomentTable,
    l: usize,
) -> Result<RateReport> {
    let kind = match theorem {
        1 => ReceiverKind::MrcPerfect,
        2 => ReceiverKind::MrcImperfect,
        3 => ReceiverKind::MrczfPerfect,
        4 => ReceiverKind::MrczfImperfect,
        other => {
            return Err(Error::Config(format!(
                "no closed-form evaluator numbered {other}"
            )))
        }
    };
    let m = cfg.antennas as f64;
    let rho = cfg.rho_d;
    let betas = &cfg.pathloss;
    let bl = betas[l];
    let b = moments.lag_bound;
    let (kappa, signal, isi, iui, noise) = match kind {
        ReceiverKind::MrcPerfect => {
            let eg = &moments.eg;
            let eg2 = &moments.eg2;
            let signal = rho * bl * m * eg.get(0) * eg.get(0);
            let isi: f64 = (-b..=b)
                .map(|i| {
                    let dbar = if i == 0 { 0.0 } else { 1.0 };
                    rho * bl * (2.0 * eg2.get(i) + (m * dbar - 1.0) * eg.get(i) * eg.get(i))
                })
                .sum();
            let iui: f64 = betas
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != l)
                .map(|(_, &bk)| rho * bk * moments.eg2_sum)
                .sum();
            (1.0, signal, isi, iui, 1.0)
        }
        ReceiverKind::MrcImperfect => {
            let pm = moments.pilot()?;
            let eg = &moments.eg;
            let eg2 = &moments.eg2;
            let signal = rho * bl * bl * m * pm.gamma1(eg, l, l, l, 0).norm_sqr();
            let mut isi = 0.0;
            for nn in -b..=b {
                let dbar = if nn == 0 { 0.0 } else { 1.0 };
                isi += rho
                    * bl
                    * bl
                    * (2.0 * pm.gamma2(eg2, l, l, l, nn)
                        + (m * dbar - 1.0) * pm.gamma1(eg, l, l, l, nn).norm_sqr());
                for (j, &bj) in betas.iter().enumerate() {
                    if j != l {
                        isi += rho * bl * bj * pm.gamma2(eg2, l, j, l, nn);
                    }
                }
            }
            let mut iui = 0.0;
            for (k, &bk) in betas.iter().enumerate() {
                if k == l {
                    continue;
                }
                for nn in -b..=b {
                    iui += rho
                        * bk
                        * bk
                        * (2.0 * pm.gamma2(eg2, l, k, k, nn)
                            + (m - 1.0) * pm.gamma1(eg, l, k, k, nn).norm_sqr());
                    for (j, &bj) in betas.iter().enumerate() {
                        if j != k {
                            iui += rho * bk * bj * pm.gamma2(eg2, l, j, k, nn);
                        }
                    }
                }
            }
            let beta_sum: f64 = betas.iter().sum();
            let lam_term: f64 = betas
                .iter()
                .enumerate()
                .map(|(j, &bj)| bj * pm.lam2[(l, j)])
                .sum();
            let noise = rho / cfg.rho_p * beta_sum * moments.eg2_sum + lam_term + 1.0 / cfg.rho_p;
            (cfg.pilot_overhead_factor(), signal, isi, iui, noise)
        }
        ReceiverKind::MrczfPerfect => {
            let zf = moments.zf()?;
            let signal = rho * bl * m;
            let isi = rho * bl * (2.0 * zf.xi2_sum - 1.0);
            let iui: f64 = betas
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != l)
                .map(|(_, &bk)| rho * bk * zf.xi2_sum)
                .sum();
            (1.0, signal, isi, iui, zf.eps0)
        }
        ReceiverKind::MrczfImperfect => {
            let zfo = moments.zfo()?;
            let pm = moments.pilot()?;
            let um = &zfo.per_user[l];
            let gammahat_sum = |j: usize, k: usize| {
                if j == k {
                    um.joint_sum[k]
                } else {
                    pm.lam2[(l, j)] * um.qsum
                }
            };
            let signal = rho * bl * bl * m;
            let mut isi = rho * bl * bl * (2.0 * gammahat_sum(l, l) - 1.0);
            for (j, &bj) in betas.iter().enumerate() {
                if j != l {
                    isi += rho * bl * bj * gammahat_sum(j, l);
                }
            }
            let mut iui = 0.0;
            for (k, &bk) in betas.iter().enumerate() {
                if k == l {
                    continue;
                }
                iui += rho * bk * bk * 2.0 * gammahat_sum(k, k);
                for (j, &bj) in betas.iter().enumerate() {
                    if j != k {
                        iui += rho * bk * bj * gammahat_sum(j, k);
                    }
                }
            }
            let beta_sum: f64 = betas.iter().sum();
            let lam_term: f64 = betas
                .iter()
                .enumerate()
                .map(|(j, &bj)| bj * pm.lam2[(l, j)])
                .sum();
            let noise = rho / cfg.rho_p * beta_sum * um.qsum + (lam_term + 1.0 / cfg.rho_p) * um.v0;
            (cfg.pilot_overhead_factor(), signal, isi, iui, noise)
        }
    };
    let denom = isi + iui + noise;
    if !(denom > 0.0) {
        return Err(Error::Numeric(format!(
            "nonpositive interference-plus-noise denominator {denom}"
        )));
    }
    Ok(RateReport {
        kind,
        user: l,
        rate: kappa * (1.0 + signal / denom).log2(),
        kappa,
        signal,
        isi,
        iui,
        noise,
    })
}

/// The decontaminated-pilot closed form: estimated CSI with ideal leakage
/// (identity contamination), expressed purely in the marginal couplings.
pub fn rate_ideal_decontaminated(cfg: &LinkConfig, moments: &MomentTable, l: usize) -> Result<f64> {
    let m = cfg.antennas as f64;
    let rho = cfg.rho_d;
    let np = cfg.pilot_len as f64;
    let betas = &cfg.pathloss;
    let bl = betas[l];
    let eg = &moments.eg;
    let eg2 = &moments.eg2;
    let b = moments.lag_bound;
    let beta_others: f64 = betas
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != l)
        .map(|(_, &bk)| bk)
        .sum();
    let mut delta = rho * (np * rho * bl + 1.0) * moments.eg2_sum * beta_others;
    for i in -b..=b {
        let dbar = if i == 0 { 0.0 } else { 1.0 };
        delta += np
            * rho
            * rho
            * bl
            * bl
            * (2.0 * eg2.get(i) + (m * dbar - 1.0) * eg.get(i) * eg.get(i));
    }
    delta += rho * (np + moments.eg2_sum) * bl;
    let num = np * rho * rho * bl * bl * m * eg.get(0) * eg.get(0);
    Ok(cfg.pilot_overhead_factor() * (1.0 + num / (delta + 1.0)).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerScaling {
    /// Fixed `rho_d` while `M` grows without bound, then power to infinity
    /// (the saturation value).
    Saturation,
    /// `rho_d = E_d / M`.
    PowerOverM,
    /// `rho_d = E_d / sqrt(M)`.
    PowerOverSqrtM,
}

/// Large-`M` limits of the closed-form rates under the given power scaling.
/// `e_d` is the unscaled per-user power.
pub fn asymptotic_limit(
    kind: ReceiverKind,
    cfg: &LinkConfig,
    moments: &MomentTable,
    l: usize,
    scaling: PowerScaling,
    e_d: f64,
) -> Result<f64> {
    let bl = cfg.pathloss[l];
    let b = moments.lag_bound;
    match (kind, scaling) {
        (ReceiverKind::MrcPerfect, PowerScaling::PowerOverM) => {
            let eg = &moments.eg;
            let isi: f64 = (-b..=b)
                .filter(|&i| i != 0)
                .map(|i| eg.get(i) * eg.get(i))
                .sum();
            Ok((1.0 + e_d * bl * eg.get(0) * eg.get(0) / (e_d * bl * isi + 1.0)).log2())
        }
        (ReceiverKind::MrcPerfect, PowerScaling::Saturation) => {
            let eg = &moments.eg;
            let isi: f64 = (-b..=b)
                .filter(|&i| i != 0)
                .map(|i| eg.get(i) * eg.get(i))
                .sum();
            Ok((1.0 + eg.get(0) * eg.get(0) / isi).log2())
        }
        (ReceiverKind::MrcImperfect, PowerScaling::PowerOverSqrtM) => {
            let pm = moments.pilot()?;
            let eg = &moments.eg;
            let np = cfg.pilot_len as f64;
            let sig = np * e_d * e_d * bl * bl * pm.gamma1(eg, l, l, l, 0).norm_sqr();
            let mut denom = 1.0;
            for i in -b..=b {
                if i != 0 {
                    denom += np * e_d * e_d * bl * bl * pm.gamma1(eg, l, l, l, i).norm_sqr();
                }
            }
            for (k, &bk) in cfg.pathloss.iter().enumerate() {
                if k != l {
                    for i in -b..=b {
                        denom += np * e_d * e_d * bk * bk * pm.gamma1(eg, l, k, k, i).norm_sqr();
                    }
                }
            }
            Ok(cfg.pilot_overhead_factor() * (1.0 + sig / denom).log2())
        }
        (ReceiverKind::MrcImperfect, PowerScaling::Saturation) => {
            let pm = moments.pilot()?;
            let eg = &moments.eg;
            let sig = bl * bl * pm.gamma1(eg, l, l, l, 0).norm_sqr();
            let mut denom = 0.0;
            for i in -b..=b {
                if i != 0 {
                    denom += bl * bl * pm.gamma1(eg, l, l, l, i).norm_sqr();
                }
            }
            for (k, &bk) in cfg.pathloss.iter().enumerate() {
                if k != l {
                    for i in -b..=b {
                        denom += bk * bk * pm.gamma1(eg, l, k, k, i).norm_sqr();
                    }
                }
            }
            Ok(cfg.pilot_overhead_factor() * (1.0 + sig / denom).log2())
        }
        (ReceiverKind::MrczfPerfect, PowerScaling::PowerOverM) => {
            let zf = moments.zf()?;
            Ok((1.0 + e_d * bl / zf.eps0).log2())
        }
        (ReceiverKind::MrczfImperfect, PowerScaling::PowerOverSqrtM) => {
            // Dominant-term limit of the closed form: interference vanishes
            // and the estimation-noise term 1/rho_p grows as sqrt(M), leaving
            // N_p E_d^2 beta_l^2 / v_l0.
            let zfo = moments.zfo()?;
            let np = cfg.pilot_len as f64;
            let v0 = zfo.per_user[l].v0;
            Ok(cfg.pilot_overhead_factor() * (1.0 + np * e_d * e_d * bl * bl / v0).log2())
        }
        _ => Err(Error::Config(format!(
            "no asymptotic limit for {} under {:?}",
            kind.name(),
            scaling
        ))),
    }
}

/// Upper bound on the worst-case-noise approximation error in bits,
/// decreasing in `M`.
pub fn approx_error_bound(stats: &SecondOrderStats) -> Result<f64> {
    let mu_sq = stats.signal_mean_sq;
    if !(mu_sq > 0.0) {
        return Err(Error::Numeric(
            "approximation bound undefined for zero-mean desired coefficient".into(),
        ));
    }
    let m = stats.antennas as f64;
    // Per-antenna-summand variance of the desired coefficient.
    let sigma_sq = m * (stats.signal_second - mu_sq).max(0.0);
    Ok(2.0 * (1.0 + 4.0 * sigma_sq / m).log2())
}

/// Saturation signal-to-interference ratio of plain MRC with perfect CSI at
/// sampling origin `e` (the quantity the origin optimizer maximizes).
pub fn saturation_sir_perfect(
    pulse: &PulseSpec<f64>,
    dist: &DelayDist<f64>,
    e: f64,
) -> Result<f64> {
    let b = pulse.full_lag_bound();
    let g0 = pulse.moment(dist, e, 0, 1)?;
    let mut isi = 0.0;
    for i in -b..=b {
        if i != 0 {
            let gi = pulse.moment(dist, e, i, 1)?;
            isi += gi * gi;
        }
    }
    Ok(g0 * g0 / isi)
}

/// Saturation SIR of MRC with pilot-estimated CSI for user `l` at sampling
/// origin `e` (estimation phase sampled at the same origin).
pub fn saturation_sir_imperfect(cfg: &LinkConfig, l: usize) -> Result<f64> {
    let b = cfg.pulse.full_lag_bound();
    let leak = LeakageFn::new(cfg)?;
    let pulse = &cfg.pulse;
    let dist = &cfg.delays;
    let dur = pulse.duration();
    let e = cfg.sampling_origin;
    let bp = origin_breakpoints(pulse, &[cfg.est_origin(), e]);
    let gamma1 = |k: usize, n: i64| {
        let c = e + dur + n as f64;
        expect_c(dist, &bp, |t| {
            leak.eval(pulse, l, k, t) * pulse.conv_eval(c - t)
        })
    };
    let bl = cfg.pathloss[l];
    let sig = bl * bl * gamma1(l, 0).norm_sqr();
    let mut denom = 0.0;
    for i in -b..=b {
        if i != 0 {
            denom += bl * bl * gamma1(l, i).norm_sqr();
        }
    }
    for (k, &bk) in cfg.pathloss.iter().enumerate() {
        if k != l {
            for i in -b..=b {
                denom += bk * bk * gamma1(k, i).norm_sqr();
            }
        }
    }
    Ok(sig / denom)
}

//! Monte Carlo validation harness, sampling-origin optimization, and
//! power-scaling sweeps.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{ChannelRealization, LinkConfig};
use crate::delay::DelayDist;
use crate::discretize::Band;
use crate::pulse::PulseSpec;
use crate::rates::{
    saturation_sir_imperfect, saturation_sir_perfect, theorem_rate, MomentTable, PowerScaling,
};
use crate::receivers::{leakage_coeffs, ReceiverKind};
use crate::rng::{complex_normal, stream_rng};
use crate::{Error, Result};

/// One Monte Carlo experiment: a link configuration, the receivers to
/// evaluate, and the trial count.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub config: LinkConfig,
    pub kinds: Vec<ReceiverKind>,
    pub trials: usize,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trial count must be positive".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::Config("no receiver kinds selected".into()));
        }
        Ok(())
    }
}

/// Empirical per-user rate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy)]
pub struct EmpiricalRate {
    pub kind: ReceiverKind,
    pub user: usize,
    pub rate: f64,
    pub std_err: f64,
    pub trials: usize,
}

/// Realized second-order quantities of one user's effective channel in one
/// trial; the instantaneous SINR and the moment oracles both derive from
/// these.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrialStats {
    /// Realized desired coefficient `T_ll(a, a)`.
    pub sig: Complex64,
    /// `|T_ll(a, a)|^2`.
    pub sig_sq: f64,
    /// `sum_n |T_ll(a, n)|^2`.
    pub same_sq: f64,
    /// `sum_{k != l} sum_n |T_lk(a, n)|^2`.
    pub cross_sq: f64,
    /// Conditional effective-noise variance at the detection sample.
    pub noise_var: f64,
}

impl TrialStats {
    /// Instantaneous SINR treating the realized coefficients as known.
    pub fn sinr(&self, rho_d: f64) -> f64 {
        let interference = (self.same_sq + self.cross_sq - self.sig_sq).max(0.0);
        rho_d * self.sig_sq / (rho_d * interference + self.noise_var)
    }
}

/// Shared per-run context assembled once before the trial loop.
struct TrialContext {
    cfg: LinkConfig,
    kinds: Vec<ReceiverKind>,
    /// Band half-width of the convolved pulse.
    bound: i64,
    /// Interior detection symbol index.
    center: usize,
    /// Row `a` of `Z` for the perfect-CSI corrector.
    z_row: Option<Vec<f64>>,
    /// `(Z Z^H)(a, a)`.
    eps0: f64,
    /// Row `a` of `W_ll` per user, plus the detection origins and the noise
    /// quadratic form `v_l0`.
    w_rows: Option<Vec<Vec<Complex64>>>,
    v0: Vec<f64>,
    origins: Vec<f64>,
    pilots: Option<crate::channel::PilotSet>,
    /// When false, estimated weights use only the leakage part (the quantity
    /// whose moments the closed forms tabulate); when true they carry the
    /// estimation noise as physically received.
    weights_include_est_noise: bool,
}

impl TrialContext {
    fn new(
        cfg: &LinkConfig,
        kinds: &[ReceiverKind],
        weights_include_est_noise: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        let needs_pilot = kinds.iter().any(|k| k.imperfect_csi());
        let needs_zf = kinds.contains(&ReceiverKind::MrczfPerfect);
        let needs_zfo = kinds.contains(&ReceiverKind::MrczfImperfect);
        let moments = MomentTable::build(cfg, kinds)?;
        let center = cfg.block_len / 2;
        let bound = cfg.pulse.full_lag_bound();
        if (center as i64) < bound || ((cfg.block_len - 1 - center) as i64) < bound {
            return Err(Error::Config(format!(
                "frame length {} too short for pulse lag span {bound}",
                cfg.block_len
            )));
        }
        let (z_row, eps0) = if needs_zf {
            let zf = moments.zf.as_ref().unwrap();
            let row = (0..cfg.block_len)
                .map(|q| zf.corrector.z[(zf.center, q)])
                .collect();
            (Some(row), zf.eps0)
        } else {
            (None, 1.0)
        };
        let (w_rows, v0, origins) = if needs_zfo {
            let zfo = moments.zfo.as_ref().unwrap();
            let rows = zfo.per_user.iter().map(|u| u.w_row.clone()).collect();
            let v0 = zfo.per_user.iter().map(|u| u.v0).collect();
            (Some(rows), v0, zfo.origins.clone())
        } else {
            (None, Vec::new(), Vec::new())
        };
        let pilots = if needs_pilot {
            Some(cfg.pilots()?)
        } else {
            None
        };
        Ok(Self {
            cfg: cfg.clone(),
            kinds: kinds.to_vec(),
            bound,
            center,
            z_row,
            eps0,
            w_rows,
            v0,
            origins,
            pilots,
            weights_include_est_noise,
        })
    }

    /// Run one trial; returns stats indexed `[kind][user]` in the order of
    /// `self.kinds`.
    fn run_trial(&self, trial: u64) -> Vec<Vec<TrialStats>> {
        let cfg = &self.cfg;
        let (m_ant, k_users, n) = (cfg.antennas, cfg.users, cfg.block_len);
        let mut rng = stream_rng(cfg.seed, trial);
        let real = ChannelRealization::draw(cfg, &mut rng);

        // Estimated channel weights (drawn even when unused by the selected
        // kinds would waste cycles, so gate on need).
        let needs_est = self.kinds.iter().any(|k| k.imperfect_csi());
        let est_weights: Option<DMatrix<Complex64>> = if needs_est {
            let lam = leakage_coeffs(
                self.pilots.as_ref().unwrap(),
                &cfg.pulse,
                cfg.est_origin(),
                &real.delays,
            );
            let sigma = (1.0 / cfg.rho_p).sqrt();
            Some(DMatrix::from_fn(m_ant, k_users, |m, l| {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..k_users {
                    acc += lam[m][(l, j)] * real.coeff(cfg, m, j);
                }
                if self.weights_include_est_noise {
                    acc += sigma * complex_normal(&mut rng);
                }
                acc
            }))
        } else {
            None
        };

        let width = (2 * self.bound + 1) as usize;
        // Per-(antenna, user) weighted coupling bands at each needed origin:
        // v[origin][(m, k)][d] = c_km * g_km(d).
        let data_bands = self.coupling_bands(&real, cfg.sampling_origin);
        let os_bands: Vec<Vec<Vec<Complex64>>> = self
            .origins
            .iter()
            .map(|&et| self.coupling_bands(&real, et))
            .collect();

        let perfect_weights = DMatrix::from_fn(m_ant, k_users, |m, l| real.coeff(cfg, m, l));

        // Effective band per (l, k): t_lk(d) = (1/M) sum_m w*_lm v_km(d).
        let effective = |weights: &DMatrix<Complex64>, bands: &Vec<Vec<Complex64>>| {
            let mut t = vec![vec![Complex64::new(0.0, 0.0); width * k_users]; k_users];
            for l in 0..k_users {
                for m in 0..m_ant {
                    let w = weights[(m, l)].conj();
                    for k in 0..k_users {
                        let src = &bands[m * k_users + k];
                        let dst = &mut t[l][k * width..(k + 1) * width];
                        for d in 0..width {
                            dst[d] += w * src[d];
                        }
                    }
                }
                for x in t[l].iter_mut() {
                    *x /= m_ant as f64;
                }
            }
            t
        };

        let weight_power = |weights: &DMatrix<Complex64>, l: usize| {
            (0..m_ant).map(|m| weights[(m, l)].norm_sqr()).sum::<f64>()
                / (m_ant as f64 * m_ant as f64)
        };

        let mut out = Vec::with_capacity(self.kinds.len());
        for &kind in &self.kinds {
            let stats: Vec<TrialStats> = match kind {
                ReceiverKind::MrcPerfect | ReceiverKind::MrcImperfect => {
                    let weights = if kind.imperfect_csi() {
                        est_weights.as_ref().unwrap()
                    } else {
                        &perfect_weights
                    };
                    let t = effective(weights, &data_bands);
                    (0..k_users)
                        .map(|l| {
                            let mut s = TrialStats::default();
                            for k in 0..k_users {
                                let band = &t[l][k * width..(k + 1) * width];
                                let power: f64 = band.iter().map(|x| x.norm_sqr()).sum();
                                if k == l {
                                    s.same_sq = power;
                                    s.sig = band[self.bound as usize];
                                    s.sig_sq = s.sig.norm_sqr();
                                } else {
                                    s.cross_sq += power;
                                }
                            }
                            s.noise_var = weight_power(weights, l);
                            s
                        })
                        .collect()
                }
                ReceiverKind::MrczfPerfect => {
                    let z_row = self.z_row.as_ref().unwrap();
                    let t = effective(&perfect_weights, &data_bands);
                    (0..k_users)
                        .map(|l| {
                            let mut s = TrialStats::default();
                            for k in 0..k_users {
                                let band = &t[l][k * width..(k + 1) * width];
                                let mut power = 0.0;
                                let mut at = Complex64::new(0.0, 0.0);
                                for col in 0..n {
                                    let mut acc = Complex64::new(0.0, 0.0);
                                    for d in -self.bound..=self.bound {
                                        let r = col as i64 + d;
                                        if (0..n as i64).contains(&r) {
                                            acc +=
                                                z_row[r as usize] * band[(d + self.bound) as usize];
                                        }
                                    }
                                    power += acc.norm_sqr();
                                    if col == self.center {
                                        at = acc;
                                    }
                                }
                                if k == l {
                                    s.same_sq = power;
                                    s.sig = at;
                                    s.sig_sq = at.norm_sqr();
                                } else {
                                    s.cross_sq += power;
                                }
                            }
                            s.noise_var = weight_power(&perfect_weights, l) * self.eps0;
                            s
                        })
                        .collect()
                }
                ReceiverKind::MrczfImperfect => {
                    let weights = est_weights.as_ref().unwrap();
                    let w_rows = self.w_rows.as_ref().unwrap();
                    let per_origin: Vec<_> =
                        os_bands.iter().map(|b| effective(weights, b)).collect();
                    (0..k_users)
                        .map(|l| {
                            let w_row = &w_rows[l];
                            let mut s = TrialStats::default();
                            for k in 0..k_users {
                                let mut power = 0.0;
                                let mut at = Complex64::new(0.0, 0.0);
                                for col in 0..n {
                                    let mut acc = Complex64::new(0.0, 0.0);
                                    for (t_idx, t) in per_origin.iter().enumerate() {
                                        let band = &t[l][k * width..(k + 1) * width];
                                        for d in -self.bound..=self.bound {
                                            let r = col as i64 + d;
                                            if (0..n as i64).contains(&r) {
                                                acc += w_row[t_idx * n + r as usize]
                                                    * band[(d + self.bound) as usize];
                                            }
                                        }
                                    }
                                    power += acc.norm_sqr();
                                    if col == self.center {
                                        at = acc;
                                    }
                                }
                                if k == l {
                                    s.same_sq = power;
                                    s.sig = at;
                                    s.sig_sq = at.norm_sqr();
                                } else {
                                    s.cross_sq += power;
                                }
                            }
                            s.noise_var = weight_power(weights, l) * self.v0[l];
                            s
                        })
                        .collect()
                }
            };
            out.push(stats);
        }
        out
    }

    fn coupling_bands(&self, real: &ChannelRealization, origin: f64) -> Vec<Vec<Complex64>> {
        let cfg = &self.cfg;
        let width = (2 * self.bound + 1) as usize;
        let mut out = Vec::with_capacity(cfg.antennas * cfg.users);
        for m in 0..cfg.antennas {
            for k in 0..cfg.users {
                let band = Band::new(&cfg.pulse, origin, real.delays[(m, k)]);
                let c = real.coeff(cfg, m, k);
                out.push(
                    (-self.bound..=self.bound)
                        .map(|d| c * band.get(d))
                        .collect::<Vec<_>>(),
                );
            }
        }
        debug_assert_eq!(out[0].len(), width);
        out
    }
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Run the plan and report the empirical per-user rate for each receiver.
/// Trials map to fixed RNG streams, so parallel and serial runs agree.
pub fn run_monte_carlo(plan: &ExperimentPlan) -> Result<Vec<EmpiricalRate>> {
    plan.validate()?;
    let ctx = TrialContext::new(&plan.config, &plan.kinds, true)?;
    let per_trial: Vec<Vec<Vec<TrialStats>>> = (0..plan.trials as u64)
        .into_par_iter()
        .map(|trial| ctx.run_trial(trial))
        .collect();
    let cfg = &plan.config;
    let mut out = Vec::new();
    for (ki, &kind) in plan.kinds.iter().enumerate() {
        let kappa = if kind.imperfect_csi() {
            cfg.pilot_overhead_factor()
        } else {
            1.0
        };
        for l in 0..cfg.users {
            let rates: Vec<f64> = per_trial
                .iter()
                .map(|t| kappa * (1.0 + t[ki][l].sinr(cfg.rho_d)).log2())
                .collect();
            let mean = kahan_sum(rates.iter().copied()) / plan.trials as f64;
            let var = kahan_sum(rates.iter().map(|r| (r - mean) * (r - mean)))
                / (plan.trials.max(2) - 1) as f64;
            out.push(EmpiricalRate {
                kind,
                user: l,
                rate: mean,
                std_err: (var / plan.trials as f64).sqrt(),
                trials: plan.trials,
            });
        }
    }
    Ok(out)
}

/// Empirical mean and second-moment aggregates of the effective channel,
/// with standard errors, for the moment-oracle comparisons.
#[derive(Debug, Clone, Copy)]
pub struct EmpiricalMoments {
    pub kind: ReceiverKind,
    pub user: usize,
    pub sig_mean: Complex64,
    pub sig_mean_se: f64,
    pub sig_second: f64,
    pub sig_second_se: f64,
    pub same_second: f64,
    pub same_second_se: f64,
    pub cross_second: f64,
    pub cross_second_se: f64,
    pub noise_var: f64,
    pub noise_var_se: f64,
}

/// Estimate the effective-channel moments by brute force. Estimated weights
/// exclude the additive estimation noise, matching the closed-form moment
/// definitions (its contribution is accounted in the noise term instead).
pub fn empirical_moments(plan: &ExperimentPlan) -> Result<Vec<EmpiricalMoments>> {
    plan.validate()?;
    let ctx = TrialContext::new(&plan.config, &plan.kinds, false)?;
    let per_trial: Vec<Vec<Vec<TrialStats>>> = (0..plan.trials as u64)
        .into_par_iter()
        .map(|trial| ctx.run_trial(trial))
        .collect();
    let nt = plan.trials as f64;
    let mean_se = |f: &dyn Fn(&TrialStats) -> f64, ki: usize, l: usize| {
        let vals: Vec<f64> = per_trial.iter().map(|t| f(&t[ki][l])).collect();
        let mean = kahan_sum(vals.iter().copied()) / nt;
        let var = kahan_sum(vals.iter().map(|v| (v - mean) * (v - mean))) / (nt - 1.0).max(1.0);
        (mean, (var / nt).sqrt())
    };
    let mut out = Vec::new();
    for (ki, &kind) in plan.kinds.iter().enumerate() {
        for l in 0..plan.config.users {
            let (re, re_se) = mean_se(&|s: &TrialStats| s.sig.re, ki, l);
            let (im, im_se) = mean_se(&|s: &TrialStats| s.sig.im, ki, l);
            let (s2, s2_se) = mean_se(&|s: &TrialStats| s.sig_sq, ki, l);
            let (same, same_se) = mean_se(&|s: &TrialStats| s.same_sq, ki, l);
            let (cross, cross_se) = mean_se(&|s: &TrialStats| s.cross_sq, ki, l);
            let (nv, nv_se) = mean_se(&|s: &TrialStats| s.noise_var, ki, l);
            out.push(EmpiricalMoments {
                kind,
                user: l,
                sig_mean: Complex64::new(re, im),
                sig_mean_se: re_se.hypot(im_se),
                sig_second: s2,
                sig_second_se: s2_se,
                same_second: same,
                same_second_se: same_se,
                cross_second: cross,
                cross_second_se: cross_se,
                noise_var: nv,
                noise_var_se: nv_se,
            });
        }
    }
    Ok(out)
}

/// Result of a sampling-origin search: the maximizer, its objective value,
/// and the sampled objective curve.
#[derive(Debug, Clone)]
pub struct OriginSearch {
    pub e_star: f64,
    pub objective: f64,
    pub curve: Vec<(f64, f64)>,
}

/// Maximize the large-`M` saturation objective over the sampling origin:
/// the saturation SIR for perfect CSI, the user-averaged saturated rate for
/// pilot-estimated CSI. Grid search at `grid_step` then golden-section
/// refinement.
pub fn optimize_sampling_origin(
    kind: ReceiverKind,
    users: usize,
    pulse: &PulseSpec<f64>,
    dist: &DelayDist<f64>,
    grid_step: f64,
) -> Result<OriginSearch> {
    if !(grid_step > 0.0 && grid_step <= 0.01) {
        return Err(Error::Config(format!(
            "grid step must be in (0, 0.01], got {grid_step}"
        )));
    }
    let objective: Box<dyn Fn(f64) -> Result<f64>> = match kind {
        ReceiverKind::MrcPerfect => {
            let pulse = pulse.clone();
            let dist = dist.clone();
            Box::new(move |e| saturation_sir_perfect(&pulse, &dist, e))
        }
        ReceiverKind::MrcImperfect => {
            let mut cfg = LinkConfig::new(users, 1, 1.0)?;
            cfg.pulse = pulse.clone();
            cfg.delays = dist.clone();
            Box::new(move |e| {
                let mut c = cfg.clone();
                c.sampling_origin = e;
                let mut acc = 0.0;
                for l in 0..c.users {
                    acc += (1.0 + saturation_sir_imperfect(&c, l)?).log2();
                }
                Ok(acc / c.users as f64)
            })
        }
        other => {
            return Err(Error::Config(format!(
                "no saturation objective for {}",
                other.name()
            )))
        }
    };
    let steps = (1.0 / grid_step).round() as usize;
    let mut curve = Vec::with_capacity(steps + 1);
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..=steps {
        let e = (i as f64 * grid_step).min(1.0);
        let v = objective(e)?;
        curve.push((e, v));
        if v > best.1 {
            best = (e, v);
        }
    }
    // Golden-section refinement in the bracket around the best grid point.
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut lo = (best.0 - grid_step).max(0.0);
    let mut hi = (best.0 + grid_step).min(1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    while hi - lo > 1e-4 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = objective(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = objective(x1)?;
        }
    }
    let e_star = 0.5 * (lo + hi);
    let val = objective(e_star)?;
    let (e_star, objective_value) = if val >= best.1 { (e_star, val) } else { best };
    Ok(OriginSearch {
        e_star,
        objective: objective_value,
        curve,
    })
}

/// One point of a power-scaling sweep.
#[derive(Debug, Clone)]
pub struct ScalingPoint {
    pub antennas: usize,
    pub rho_d: f64,
    /// Closed-form per-user rates.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PowerScalingCurve {
    pub kind: ReceiverKind,
    pub scaling: PowerScaling,
    pub e_d: f64,
    pub points: Vec<ScalingPoint>,
    /// Large-`M` per-user limits for overlay.
    pub asymptotes: Vec<f64>,
}

fn theorem_index(kind: ReceiverKind) -> u8 {
    match kind {
        ReceiverKind::MrcPerfect => 1,
        ReceiverKind::MrcImperfect => 2,
        ReceiverKind::MrczfPerfect => 3,
        ReceiverKind::MrczfImperfect => 4,
    }
}

/// Evaluate the closed-form rate along an antenna grid with transmit power
/// scaled down as `E_d / M` or `E_d / sqrt(M)`, plus the matching asymptote.
pub fn power_scaling_sweep(
    cfg: &LinkConfig,
    kind: ReceiverKind,
    e_d: f64,
    m_list: &[usize],
    scaling: PowerScaling,
) -> Result<PowerScalingCurve> {
    if m_list.is_empty() {
        return Err(Error::Config("antenna grid is empty".into()));
    }
    if m_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "antenna grid must be strictly increasing".into(),
        ));
    }
    if e_d < 0.0 {
        return Err(Error::Config(format!(
            "unscaled power must be nonnegative, got {e_d}"
        )));
    }
    let moments = MomentTable::build(cfg, &[kind])?;
    let mut points = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let mut c = cfg.clone();
        c.antennas = m;
        c.rho_d = match scaling {
            PowerScaling::Saturation => cfg.rho_d,
            PowerScaling::PowerOverM => e_d / m as f64,
            PowerScaling::PowerOverSqrtM => e_d / (m as f64).sqrt(),
        };
        c.rho_p = c.pilot_len as f64 * c.rho_d;
        let rates = if c.rho_d == 0.0 {
            vec![0.0; c.users]
        } else {
            (0..c.users)
                .map(|l| theorem_rate(theorem_index(kind), &c, &moments, l).map(|r| r.rate))
                .collect::<Result<Vec<f64>>>()?
        };
        points.push(ScalingPoint {
            antennas: m,
            rho_d: c.rho_d,
            rates,
        });
    }
    let asymptotes = (0..cfg.users)
        .map(|l| {
            if e_d == 0.0 && scaling != PowerScaling::Saturation {
                Ok(0.0)
            } else {
                crate::rates::asymptotic_limit(kind, cfg, &moments, l, scaling, e_d)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PowerScalingCurve {
        kind,
        scaling,
        e_d,
        points,
        asymptotes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::second_order_stats;

    fn plan(
        users: usize,
        antennas: usize,
        rho_db: f64,
        kinds: &[ReceiverKind],
        trials: usize,
    ) -> ExperimentPlan {
        let cfg = LinkConfig::new(users, antennas, 10f64.powf(rho_db / 10.0)).unwrap();
        ExperimentPlan {
            config: cfg,
            kinds: kinds.to_vec(),
            trials,
        }
    }

    #[test]
    fn sync_single_user_matches_closed_form() {
        let mut p = plan(1, 64, 20.0, &[ReceiverKind::MrcPerfect], 400);
        p.config.sampling_origin = 0.0;
        p.config.delays = crate::delay::DelayDist::point_mass(0.0).unwrap();
        let emp = run_monte_carlo(&p).unwrap();
        // Classical known-CSI MRC: the combined SNR is rho * ||h||^2 with
        // ||h||^2 ~ Gamma(M, 1), so the exact rate is a one-dimensional
        // integral.
        let m = p.config.antennas as f64;
        let rho = p.config.rho_d;
        let ln_gamma_m: f64 = (1..p.config.antennas).map(|i| (i as f64).ln()).sum();
        let closed = crate::quad::adaptive(
            |x: f64| (1.0 + rho * x).log2() * ((m - 1.0) * x.ln() - x - ln_gamma_m).exp(),
            1e-12,
            m + 20.0 * m.sqrt(),
            1e-10,
        );
        let e = &emp[0];
        assert!(
            (e.rate - closed).abs() < 2.0 * e.std_err.max(0.005),
            "{} vs {closed} (se {})",
            e.rate,
            e.std_err
        );
    }

    #[test]
    fn async_two_user_matches_theorem() {
        let mut p = plan(2, 96, 15.0, &[ReceiverKind::MrcPerfect], 1500);
        p.config.sampling_origin = 0.3;
        let emp = run_monte_carlo(&p).unwrap();
        let t = MomentTable::build(&p.config, &p.kinds).unwrap();
        for e in &emp {
            let closed = theorem_rate(1, &p.config, &t, e.user).unwrap().rate;
            assert!(
                (e.rate - closed).abs() / closed < 0.05,
                "user {}: {} vs {closed}",
                e.user,
                e.rate
            );
        }
    }

    #[test]
    fn reruns_are_bit_identical() {
        let p = plan(
            2,
            16,
            10.0,
            &[ReceiverKind::MrcPerfect, ReceiverKind::MrcImperfect],
            50,
        );
        let a = run_monte_carlo(&p).unwrap();
        let b = run_monte_carlo(&p).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.rate.to_bits(), y.rate.to_bits());
            assert_eq!(x.std_err.to_bits(), y.std_err.to_bits());
        }
    }

    #[test]
    fn stderr_scales_with_trials() {
        let p1 = plan(2, 16, 10.0, &[ReceiverKind::MrcPerfect], 1000);
        let mut p4 = p1.clone();
        p4.trials = 4000;
        let e1 = run_monte_carlo(&p1).unwrap()[0].std_err;
        let e4 = run_monte_carlo(&p4).unwrap()[0].std_err;
        let ratio = e1 / e4;
        assert!((ratio - 2.0).abs() < 0.6, "ratio {ratio}");
    }

    #[test]
    fn empirical_moments_match_stats_mrc() {
        let mut p = plan(
            2,
            8,
            10.0,
            &[ReceiverKind::MrcPerfect, ReceiverKind::MrcImperfect],
            20000,
        );
        p.config.sampling_origin = 0.4;
        p.config.pathloss = vec![1.2, 0.6];
        let emp = empirical_moments(&p).unwrap();
        let t = MomentTable::build(&p.config, &p.kinds).unwrap();
        for e in &emp {
            let s = second_order_stats(e.kind, &p.config, &t, e.user).unwrap();
            let mean = s.signal_mean_sq.sqrt();
            assert!(
                (e.sig_mean.re - mean).abs() < 4.0 * e.sig_mean_se + 1e-9,
                "{:?} u{} mean {} vs {mean}",
                e.kind,
                e.user,
                e.sig_mean.re
            );
            assert!(
                (e.same_second - s.same_user_second).abs() < 4.0 * e.same_second_se + 1e-9,
                "{:?} u{} same {} vs {}",
                e.kind,
                e.user,
                e.same_second,
                s.same_user_second
            );
            assert!(
                (e.cross_second - s.cross_second).abs() < 4.0 * e.cross_second_se + 1e-9,
                "{:?} u{} cross {} vs {}",
                e.kind,
                e.user,
                e.cross_second,
                s.cross_second
            );
        }
    }

    #[test]
    fn origin_search_two_users() {
        let pulse = crate::PulseSpec::rectangular();
        let dist = crate::delay::DelayDist::standard_mixture(2).unwrap();
        let s =
            optimize_sampling_origin(ReceiverKind::MrcPerfect, 2, &pulse, &dist, 0.005).unwrap();
        assert!((s.e_star - 0.18).abs() <= 0.01, "e* {}", s.e_star);
        let first = s.curve.first().unwrap().1;
        let last = s.curve.last().unwrap().1;
        assert!(s.objective >= first && s.objective >= last);
    }

    #[test]
    fn origin_search_pure_uniform() {
        let pulse = crate::PulseSpec::rectangular();
        let dist = crate::delay::DelayDist::uniform(0.0, 1.0).unwrap();
        let s =
            optimize_sampling_origin(ReceiverKind::MrcPerfect, 4, &pulse, &dist, 0.005).unwrap();
        assert!((s.e_star - 0.5).abs() <= 0.01, "e* {}", s.e_star);
    }

    #[test]
    fn power_sweep_converges_to_limit() {
        let mut cfg = LinkConfig::new(2, 8, 1.0).unwrap();
        cfg.sampling_origin = 0.3;
        let curve = power_scaling_sweep(
            &cfg,
            ReceiverKind::MrcPerfect,
            50.0,
            &[64, 1024, 65536],
            PowerScaling::PowerOverM,
        )
        .unwrap();
        let last = curve.points.last().unwrap();
        for l in 0..2 {
            let rel = (last.rates[l] - curve.asymptotes[l]).abs() / curve.asymptotes[l];
            assert!(
                rel < 0.02,
                "user {l}: {} vs {}",
                last.rates[l],
                curve.asymptotes[l]
            );
        }
    }

    #[test]
    fn zero_power_sweep_is_zero() {
        let cfg = LinkConfig::new(2, 8, 1.0).unwrap();
        let curve = power_scaling_sweep(
            &cfg,
            ReceiverKind::MrcPerfect,
            0.0,
            &[16, 64],
            PowerScaling::PowerOverM,
        )
        .unwrap();
        assert!(curve
            .points
            .iter()
            .all(|p| p.rates.iter().all(|&r| r == 0.0)));
        assert!(curve.asymptotes.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn invalid_plans_are_rejected() {
        let p = plan(2, 8, 10.0, &[ReceiverKind::MrcPerfect], 0);
        assert!(matches!(run_monte_carlo(&p), Err(Error::Config(_))));
        let p = plan(2, 8, 10.0, &[], 10);
        assert!(matches!(run_monte_carlo(&p), Err(Error::Config(_))));
    }
}

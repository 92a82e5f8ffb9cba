//! Pulse shapes `p(t)`, the convolved (matched-filter) pulse
//! `g(t) = p(t) * p(t)`, and delay-averaged moments of `g`.
//!
//! Times are in symbol units (`T_s = 1`). The pulse is supported on `[0, T]`
//! with `T = T_s` for the rectangular shape and `T = 2(I+1) T_s` for the
//! truncated root-raised-cosine shape with `I` significant side lobes; `g` is
//! supported on `[0, 2T]`, normalized so `g(T) = 1`, and satisfies the
//! Nyquist condition `g(T + n T_s) = 0` (exactly for rect, within the
//! truncation residual for RRC).

use crate::delay::{ComponentKind, DelayDist};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Grid step of the cached RRC self-convolution, in symbol units.
const CONV_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseFamily {
    Rectangular,
    TruncatedRootRaisedCosine,
}

/// Immutable pulse-shape specification. For RRC the truncated pulse is
/// renormalized to unit energy and its self-convolution is tabulated once at
/// construction; all evaluations afterwards are read-only.
#[derive(Debug, Clone)]
pub struct PulseSpec<T> {
    family: PulseFamily,
    rolloff: T,
    sidelobes: u32,
    /// `1/sqrt(truncated energy)` renormalization of the RRC pulse.
    scale: T,
    /// `g` samples on `[0, 2T]` at step `CONV_STEP` (RRC only).
    conv: Vec<T>,
}

impl<T: Scalar> PulseSpec<T> {
    /// Unit-energy rectangle on `[0, T_s]`.
    pub fn rectangular() -> Self {
        Self {
            family: PulseFamily::Rectangular,
            rolloff: T::zero(),
            sidelobes: 0,
            scale: T::one(),
            conv: Vec::new(),
        }
    }

    /// Root-raised-cosine truncated to `I = sidelobes` adjacent side lobes
    /// (support `2(I+1) T_s`) and renormalized to unit energy.
    pub fn root_raised_cosine(rolloff: T, sidelobes: u32) -> Result<Self> {
        if rolloff < T::zero() || rolloff > T::one() {
            return Err(Error::Config(format!(
                "RRC roll-off must be in [0, 1], got {rolloff}"
            )));
        }
        if sidelobes == 0 {
            return Err(Error::Config("RRC side-lobe count must be positive".into()));
        }
        let mut spec = Self {
            family: PulseFamily::TruncatedRootRaisedCosine,
            rolloff,
            sidelobes,
            scale: T::one(),
            conv: Vec::new(),
        };
        spec.build_conv_cache();
        Ok(spec)
    }

    pub fn family(&self) -> PulseFamily {
        self.family
    }

    /// Pulse support length `T` in symbol units.
    pub fn duration(&self) -> T {
        match self.family {
            PulseFamily::Rectangular => T::one(),
            PulseFamily::TruncatedRootRaisedCosine => T::of(2.0 * (self.sidelobes as f64 + 1.0)),
        }
    }

    /// Largest lag `i` with non-negligible `E[g_i]`: 1 for rect (triangle
    /// spans two symbols), `I` for RRC (side lobes beyond that are below the
    /// truncation floor).
    pub fn lag_bound(&self) -> i64 {
        match self.family {
            PulseFamily::Rectangular => 1,
            PulseFamily::TruncatedRootRaisedCosine => self.sidelobes as i64,
        }
    }

    /// Largest lag with any support at all, from the support of `g`.
    pub fn full_lag_bound(&self) -> i64 {
        match self.family {
            PulseFamily::Rectangular => 1,
            PulseFamily::TruncatedRootRaisedCosine => 2 * (self.sidelobes as i64 + 1),
        }
    }

    /// Untruncated unit-energy RRC impulse response at offset `u` (symbol
    /// units) from the pulse center.
    fn rrc_base(&self, u: T) -> T {
        let beta = self.rolloff;
        let pi = T::of(std::f64::consts::PI);
        if beta == T::zero() {
            // sinc
            if u == T::zero() {
                return T::one();
            }
            return (pi * u).sin() / (pi * u);
        }
        let four_beta_u = T::of(4.0) * beta * u;
        if u == T::zero() {
            return T::one() - beta + T::of(4.0) * beta / pi;
        }
        if (four_beta_u.abs() - T::one()).abs() < T::of(1e-9) {
            let x = pi / (T::of(4.0) * beta);
            let two_over_pi = T::of(2.0) / pi;
            return beta / T::of(2.0).sqrt()
                * ((T::one() + two_over_pi) * x.sin() + (T::one() - two_over_pi) * x.cos());
        }
        ((pi * u * (T::one() - beta)).sin() + four_beta_u * (pi * u * (T::one() + beta)).cos())
            / (pi * u * (T::one() - four_beta_u * four_beta_u))
    }

    fn build_conv_cache(&mut self) {
        let dur = self.duration().to_f64_lossy();
        let n = (dur / CONV_STEP).round() as usize;
        let step = T::of(CONV_STEP);
        let mid = self.duration() * T::of(0.5);
        // Sample the un-renormalized truncated pulse.
        let p: Vec<T> = (0..=n)
            .map(|j| self.rrc_base(step * T::of(j as f64) - mid))
            .collect();
        // Truncated energy by the trapezoid rule on the same grid; the
        // renormalization scale makes g(T) = 1 exact on the grid.
        let mut energy = T::zero();
        for j in 0..=n {
            let w = if j == 0 || j == n {
                T::of(0.5)
            } else {
                T::one()
            };
            energy += w * p[j] * p[j];
        }
        energy *= step;
        self.scale = T::one() / energy.sqrt();

        // g(j*step) = step * sum_s p(s) p(j*step - s), trapezoid endpoints.
        let mut conv = vec![T::zero(); 2 * n + 1];
        for (j, gj) in conv.iter_mut().enumerate() {
            let lo = j.saturating_sub(n);
            let hi = j.min(n);
            if lo > hi {
                continue;
            }
            let mut acc = T::zero();
            for s in lo..=hi {
                let w = if s == lo || s == hi {
                    T::of(0.5)
                } else {
                    T::one()
                };
                acc += w * p[s] * p[j - s];
            }
            *gj = acc * step / energy;
        }
        self.conv = conv;
    }

    /// `p(t)`; zero outside `[0, T]`.
    pub fn eval(&self, t: T) -> T {
        let dur = self.duration();
        if t < T::zero() || t >= dur {
            return T::zero();
        }
        match self.family {
            PulseFamily::Rectangular => T::one(),
            PulseFamily::TruncatedRootRaisedCosine => {
                self.scale * self.rrc_base(t - dur * T::of(0.5))
            }
        }
    }

    /// `g(t) = (p * p)(t)`; zero outside `[0, 2T]`, `g(T) = 1`.
    pub fn conv_eval(&self, t: T) -> T {
        match self.family {
            PulseFamily::Rectangular => {
                if t <= T::zero() || t >= T::of(2.0) {
                    T::zero()
                } else if t <= T::one() {
                    t
                } else {
                    T::of(2.0) - t
                }
            }
            PulseFamily::TruncatedRootRaisedCosine => {
                let x = t.to_f64_lossy() / CONV_STEP;
                if x <= 0.0 {
                    return T::zero();
                }
                let j = x.floor() as usize;
                if j + 1 >= self.conv.len() {
                    return T::zero();
                }
                let frac = T::of(x - j as f64);
                self.conv[j] + (self.conv[j + 1] - self.conv[j]) * frac
            }
        }
    }

    /// `E[g_lag^power]` over the delay distribution at sampling origin `e`:
    /// the expectation of `g^power(e T_s + T + lag T_s - tau)`. Exact
    /// piecewise closed form for rect, adaptive quadrature for RRC.
    pub fn moment(&self, dist: &DelayDist<T>, e: T, lag: i64, power: u32) -> Result<T> {
        if !(1..=2).contains(&power) {
            return Err(Error::Config(format!(
                "moment power must be 1 or 2, got {power}"
            )));
        }
        if e < T::zero() || e > T::one() {
            return Err(Error::Config(format!(
                "sampling origin must be in [0, 1], got {e}"
            )));
        }
        let c = e + self.duration() + T::of(lag as f64);
        Ok(self.power_expect(dist, c, power))
    }

    /// `E[g^power(c - tau)]` over the delay distribution.
    pub(crate) fn power_expect(&self, dist: &DelayDist<T>, c: T, power: u32) -> T {
        match self.family {
            PulseFamily::Rectangular => {
                let mut total = T::zero();
                for comp in dist.components() {
                    total += match comp.kind {
                        ComponentKind::Point(t0) => {
                            let v = self.conv_eval(c - t0);
                            comp.weight * if power == 2 { v * v } else { v }
                        }
                        ComponentKind::Uniform(a, b) => {
                            comp.weight
                                * (rect_conv_antideriv(power, c - a)
                                    - rect_conv_antideriv(power, c - b))
                                / (b - a)
                        }
                    };
                }
                total
            }
            PulseFamily::TruncatedRootRaisedCosine => {
                // Split at the Nyquist zero crossings of the argument.
                let bps = self.nyquist_breakpoints(c);
                dist.expect_split(
                    |tau| {
                        let v = self.conv_eval(c - tau);
                        if power == 2 {
                            v * v
                        } else {
                            v
                        }
                    },
                    &bps,
                )
            }
        }
    }

    /// Delay values where `c - tau` crosses an integer multiple of `T_s`
    /// (kinks and zeros of `g` live there).
    pub(crate) fn nyquist_breakpoints(&self, c: T) -> Vec<T> {
        let two_dur = 2.0 * self.duration().to_f64_lossy();
        let cf = c.to_f64_lossy();
        let mut bps = Vec::new();
        let mut k = (cf - two_dur).ceil();
        while k <= cf {
            let tau = cf - k;
            if tau > 0.0 && tau < 1.0 {
                bps.push(T::of(tau));
            }
            k += 1.0;
        }
        bps
    }

    /// Delay values in `(0, 1)` where `c - tau` crosses a node of the cached
    /// convolution grid. Between consecutive nodes `g(c - tau)` is linear in
    /// `tau`, so integrands built from it are low-degree polynomials there
    /// and a fixed Gauss-Kronrod pass per cell is exact. Empty for the
    /// rectangular pulse, whose convolution is evaluated in closed form.
    pub(crate) fn interp_breakpoints(&self, c: T) -> Vec<T> {
        if self.family == PulseFamily::Rectangular {
            return Vec::new();
        }
        let cf = c.to_f64_lossy();
        let mut j = ((cf - 1.0) / CONV_STEP).ceil();
        let mut bps = Vec::new();
        loop {
            let tau = cf - j * CONV_STEP;
            if tau <= 0.0 {
                break;
            }
            if tau < 1.0 {
                bps.push(T::of(tau));
            }
            j += 1.0;
        }
        bps
    }
}

/// `F_p(x) = integral of g_rect^p over [0, x]`, clamped to the support.
fn rect_conv_antideriv<T: Scalar>(power: u32, x: T) -> T {
    let x = x.max(T::zero()).min(T::of(2.0));
    let one = T::one();
    match power {
        1 => {
            if x <= one {
                x * x * T::of(0.5)
            } else {
                T::of(0.5) + T::of(2.0) * (x - one) - (x * x - one) * T::of(0.5)
            }
        }
        2 => {
            let third = T::one() / T::of(3.0);
            if x <= one {
                x * x * x * third
            } else {
                let r = T::of(2.0) - x;
                third + (one - r * r * r) * third
            }
        }
        _ => unreachable!("power validated by caller"),
    }
}

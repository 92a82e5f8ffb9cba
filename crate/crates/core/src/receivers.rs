//! Receiver-side processing: pilot despreading, leakage coefficients under
//! timing mismatch, MRC combining, and the zero-forcing correctors (the
//! Toeplitz mean-matrix inverse `Z` for perfect CSI, the oversampled
//! `Gamma_l` / `W_l` pair for imperfect CSI).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::Zero;

use crate::channel::PilotSet;
use crate::discretize::Band;
use crate::pulse::PulseSpec;
use crate::{Error, Result};

/// Condition-number threshold above which correctors refuse to proceed.
const COND_LIMIT: f64 = 1e8;

/// Looser threshold for the oversampled mean matrix. Nyquist pulses make all
/// oversampled streams agree at frequency zero (the convolved pulse sums to
/// one over integer shifts), so `Gamma_l` carries an intrinsic near-rank-one
/// direction and its condition number grows with the frame length even in
/// well-posed configurations. Beyond this limit the matrix is treated as
/// structurally singular.
const GAMMA_COND_LIMIT: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReceiverKind {
    MrcPerfect,
    MrcImperfect,
    MrczfPerfect,
    MrczfImperfect,
}

impl ReceiverKind {
    pub const ALL: [ReceiverKind; 4] = [
        ReceiverKind::MrcPerfect,
        ReceiverKind::MrcImperfect,
        ReceiverKind::MrczfPerfect,
        ReceiverKind::MrczfImperfect,
    ];

    /// Whether the receiver works from pilot-estimated channels.
    pub fn imperfect_csi(self) -> bool {
        matches!(
            self,
            ReceiverKind::MrcImperfect | ReceiverKind::MrczfImperfect
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ReceiverKind::MrcPerfect => "mrc-perfect",
            ReceiverKind::MrcImperfect => "mrc-imperfect",
            ReceiverKind::MrczfPerfect => "mrczf-perfect",
            ReceiverKind::MrczfImperfect => "mrczf-imperfect",
        }
    }
}

impl std::str::FromStr for ReceiverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mrc-perfect" => Ok(ReceiverKind::MrcPerfect),
            "mrc-imperfect" => Ok(ReceiverKind::MrcImperfect),
            "mrczf-perfect" => Ok(ReceiverKind::MrczfPerfect),
            "mrczf-imperfect" => Ok(ReceiverKind::MrczfImperfect),
            other => Err(Error::Config(format!("unknown receiver kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Values indexed by symbol lag; zero outside the stored window.
#[derive(Debug, Clone)]
pub struct LagTable<T> {
    pub lo: i64,
    pub values: Vec<T>,
}

impl<T: Copy + Zero> LagTable<T> {
    pub fn new(lo: i64, values: Vec<T>) -> Self {
        Self { lo, values }
    }

    pub fn get(&self, lag: i64) -> T {
        let idx = lag - self.lo;
        if (0..self.values.len() as i64).contains(&idx) {
            self.values[idx as usize]
        } else {
            T::zero()
        }
    }

    /// `N x N` Toeplitz matrix with entry `(p, q)` equal to `get(p - q)`.
    pub fn toeplitz(&self, n: usize) -> DMatrix<T>
    where
        T: nalgebra::Scalar,
    {
        DMatrix::from_fn(n, n, |p, q| self.get(p as i64 - q as i64))
    }
}

/// Least-squares despreading: `C-tilde = Y_p Phi^H / sqrt(rho_p)`.
/// Rows are antennas, columns users.
pub fn estimate_channels(
    rx_pilot: &DMatrix<Complex64>,
    pilots: &PilotSet,
    rho_p: f64,
) -> Result<DMatrix<Complex64>> {
    if rx_pilot.ncols() != pilots.len() {
        return Err(Error::Config(format!(
            "pilot block spans {} samples, pilots have length {}",
            rx_pilot.ncols(),
            pilots.len()
        )));
    }
    if !(rho_p > 0.0) {
        return Err(Error::Config("pilot power must be positive".into()));
    }
    Ok(rx_pilot * pilots.phi.adjoint() / Complex64::new(rho_p.sqrt(), 0.0))
}

/// Leakage tensor of the contaminated estimates: element `(l, j)` of the
/// `m`th matrix is `lambda_{ljm} = sum_i g(e_s T_s + T + i T_s - tau_jm)
/// Upsilon^i(j, l)`.
pub fn leakage_coeffs(
    pilots: &PilotSet,
    pulse: &PulseSpec<f64>,
    e_s: f64,
    delays: &DMatrix<f64>,
) -> Vec<DMatrix<Complex64>> {
    let (m_ant, k_users) = delays.shape();
    let b = pulse.full_lag_bound();
    let upsilon: Vec<DMatrix<Complex64>> = (-b..=b).map(|i| pilots.shift_corr_matrix(i)).collect();
    (0..m_ant)
        .map(|m| {
            DMatrix::from_fn(k_users, k_users, |l, j| {
                let band = Band::new(pulse, e_s, delays[(m, j)]);
                let mut acc = Complex64::new(0.0, 0.0);
                for (idx, ups) in upsilon.iter().enumerate() {
                    let g = band.get(-b + idx as i64);
                    if g != 0.0 {
                        acc += ups[(j, l)] * g;
                    }
                }
                acc
            })
        })
        .collect()
}

/// `y_l = (1/M) sum_m conj(w_m) y_m`.
pub fn mrc_combine(ys: &[DVector<Complex64>], weights: &[Complex64]) -> DVector<Complex64> {
    assert_eq!(ys.len(), weights.len());
    let m = ys.len();
    let n = ys[0].len();
    let mut out = DVector::from_element(n, Complex64::new(0.0, 0.0));
    for (y, w) in ys.iter().zip(weights) {
        let wc = w.conj();
        for p in 0..n {
            out[p] += wc * y[p];
        }
    }
    out / Complex64::new(m as f64, 0.0)
}

/// Banded LU with partial pivoting, in compact diagonal storage.
/// `m1` sub- and `m2` superdiagonals.
pub struct BandedLu {
    n: usize,
    m1: usize,
    mm: usize,
    au: Vec<Vec<f64>>,
    al: Vec<Vec<f64>>,
    indx: Vec<usize>,
}

impl BandedLu {
    /// Factor a banded matrix given row-compact storage: `rows[i][j]` holds
    /// entry `(i, i - m1 + j)` where in range.
    pub fn new(mut au: Vec<Vec<f64>>, m1: usize, m2: usize) -> Result<Self> {
        let n = au.len();
        let mm = m1 + m2 + 1;
        let mut al = vec![vec![0.0; m1]; n];
        let mut indx = vec![0usize; n];
        let mut l = m1;
        for i in 0..m1.min(n) {
            for j in (m1 - i)..mm {
                au[i][j - l] = au[i][j];
            }
            l -= 1;
            for j in (mm - l - 1)..mm {
                au[i][j] = 0.0;
            }
        }
        l = m1;
        for k in 0..n {
            let mut dum = au[k][0];
            let mut i = k;
            if l < n {
                l += 1;
            }
            for j in (k + 1)..l {
                if au[j][0].abs() > dum.abs() {
                    dum = au[j][0];
                    i = j;
                }
            }
            indx[k] = i;
            if dum == 0.0 {
                return Err(Error::Numeric("singular banded matrix".into()));
            }
            if i != k {
                au.swap(k, i);
            }
            for i in (k + 1)..l {
                let dum = au[i][0] / au[k][0];
                al[k][i - k - 1] = dum;
                for j in 1..mm {
                    au[i][j - 1] = au[i][j] - dum * au[k][j];
                }
                au[i][mm - 1] = 0.0;
            }
        }
        Ok(Self {
            n,
            m1,
            mm,
            au,
            al,
            indx,
        })
    }

    pub fn solve(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut l = self.m1;
        for k in 0..self.n {
            let j = self.indx[k];
            if j != k {
                b.swap(k, j);
            }
            if l < self.n {
                l += 1;
            }
            for j in (k + 1)..l {
                b[j] -= self.al[k][j - k - 1] * b[k];
            }
        }
        let mut l = 1;
        for i in (0..self.n).rev() {
            let mut dum = b[i];
            for k in 1..l {
                dum -= self.au[i][k] * b[k + i];
            }
            b[i] = dum / self.au[i][0];
            if l < self.mm {
                l += 1;
            }
        }
    }
}

/// Perfect-CSI zero-forcing corrector: the inverse of the Toeplitz matrix of
/// delay-averaged couplings, with a 1-norm condition estimate.
pub struct ZCorrector {
    pub z: DMatrix<f64>,
    pub condition: f64,
}

/// Invert the banded Toeplitz mean matrix built from `eg` (the lag table of
/// mean couplings). Errors if singular or with condition estimate above 1e8.
pub fn build_z(eg: &LagTable<f64>, n: usize) -> Result<ZCorrector> {
    let b = ((eg.values.len() as i64 - 1) / 2).max(eg.lo.abs()) as usize;
    let m1 = b.min(n - 1);
    let m2 = m1;
    let rows: Vec<Vec<f64>> = (0..n as i64)
        .map(|i| {
            (0..(m1 + m2 + 1) as i64)
                .map(|j| {
                    let col = i - m1 as i64 + j;
                    if (0..n as i64).contains(&col) {
                        eg.get(i - col)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let lu = BandedLu::new(rows, m1, m2)?;
    let mut z = DMatrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|x| *x = 0.0);
        col[j] = 1.0;
        lu.solve(&mut col);
        for i in 0..n {
            z[(i, j)] = col[i];
        }
    }
    let norm_a = one_norm_toeplitz(eg, n);
    let norm_z = (0..n)
        .map(|j| z.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let condition = norm_a * norm_z;
    if !condition.is_finite() || condition > COND_LIMIT {
        return Err(Error::Numeric(format!(
            "mean coupling matrix ill conditioned (estimate {condition:.3e})"
        )));
    }
    Ok(ZCorrector { z, condition })
}

fn one_norm_toeplitz(eg: &LagTable<f64>, n: usize) -> f64 {
    (0..n as i64)
        .map(|j| (0..n as i64).map(|i| eg.get(i - j).abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
}

/// Oversampled zero-forcing pair: the stacked mean matrix `Gamma_l` of one
/// user's estimation/detection chain and its inverse `W_l`.
pub struct GammaW {
    pub gamma: DMatrix<Complex64>,
    pub w: DMatrix<Complex64>,
    pub condition: f64,
    pub users: usize,
    pub block: usize,
}

impl GammaW {
    /// Block row `k` of `W_l` (an `N x KN` map).
    pub fn w_block(&self, k: usize) -> DMatrix<Complex64> {
        self.w.rows(k * self.block, self.block).into_owned()
    }
}

/// Assemble `Gamma_l` from per-(origin, user) lag tables: block `(t, k)` is
/// the `N x N` Toeplitz matrix of `tables[t][k]`.
pub fn build_gamma(tables: &[Vec<LagTable<Complex64>>], n: usize) -> DMatrix<Complex64> {
    let k_users = tables.len();
    let mut gamma = DMatrix::from_element(k_users * n, k_users * n, Complex64::new(0.0, 0.0));
    for (t, row) in tables.iter().enumerate() {
        assert_eq!(row.len(), k_users);
        for (k, table) in row.iter().enumerate() {
            let block = table.toeplitz(n);
            gamma.view_mut((t * n, k * n), (n, n)).copy_from(&block);
        }
    }
    gamma
}

/// Assemble and invert `Gamma_l`. Errors on singular or ill-conditioned
/// input (for example duplicated detection origins).
pub fn build_gamma_w(tables: &[Vec<LagTable<Complex64>>], n: usize) -> Result<GammaW> {
    let gamma = build_gamma(tables, n);
    invert_gamma(gamma, tables.len(), n)
}

pub fn invert_gamma(gamma: DMatrix<Complex64>, users: usize, n: usize) -> Result<GammaW> {
    let lu = gamma.clone().lu();
    let w = lu
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular oversampled mean matrix".into()))?;
    let condition = one_norm_complex(&gamma) * one_norm_complex(&w);
    if !condition.is_finite() || condition > GAMMA_COND_LIMIT {
        return Err(Error::Numeric(format!(
            "oversampled mean matrix ill conditioned (estimate {condition:.3e})"
        )));
    }
    Ok(GammaW {
        gamma,
        w,
        condition,
        users,
        block: n,
    })
}

fn one_norm_complex(a: &DMatrix<Complex64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0f64, f64::max)
}

/// Perfect-CSI MRC-ZF detection: apply `Z` to the combined frame.
pub fn mrczf_detect_perfect(
    corr: &ZCorrector,
    combined: &DVector<Complex64>,
) -> Result<DVector<Complex64>> {
    if corr.z.ncols() != combined.len() {
        return Err(Error::Config(format!(
            "corrector built for {} symbols, frame has {}",
            corr.z.ncols(),
            combined.len()
        )));
    }
    Ok(corr.z.map(|x| Complex64::new(x, 0.0)) * combined)
}

/// Imperfect-CSI MRC-ZF detection: apply `W_ll` to the stacked oversampled
/// MRC output.
pub fn mrczf_detect_oversampled(
    gw: &GammaW,
    l: usize,
    stacked: &DVector<Complex64>,
) -> Result<DVector<Complex64>> {
    if l >= gw.users {
        return Err(Error::Config(format!("user index {l} out of range")));
    }
    if stacked.len() != gw.users * gw.block {
        return Err(Error::Config(format!(
            "stacked frame has {} samples, corrector expects {}",
            stacked.len(),
            gw.users * gw.block
        )));
    }
    Ok(gw.w.rows(l * gw.block, gw.block) * stacked)
}

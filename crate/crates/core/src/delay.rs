//! Symbol-level delay distributions: mixtures of point masses and uniform
//! components on `[0, T_s]`, with sampling and expectation functionals.
//!
//! Times are in symbol units (`T_s = 1`).

use crate::quad;
use crate::scalar::Scalar;
use crate::{Error, Result};
use rand::Rng;

/// One mixture component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentKind<T> {
    /// Point mass at the given delay.
    Point(T),
    /// Uniform on `[a, b]`.
    Uniform(T, T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component<T> {
    pub weight: T,
    pub kind: ComponentKind<T>,
}

/// Mixture distribution of symbol-level delays.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDist<T> {
    components: Vec<Component<T>>,
}

impl<T: Scalar> DelayDist<T> {
    pub fn new(components: Vec<Component<T>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("delay distribution has no components".into()));
        }
        let mut total = T::zero();
        for c in &components {
            if c.weight < T::zero() {
                return Err(Error::Config("negative component weight".into()));
            }
            total += c.weight;
            match c.kind {
                ComponentKind::Point(t) => {
                    if t < T::zero() || t > T::one() {
                        return Err(Error::Config("point mass outside [0, T_s]".into()));
                    }
                }
                ComponentKind::Uniform(a, b) => {
                    if !(a < b) || a < T::zero() || b > T::one() {
                        return Err(Error::Config(
                            "uniform component support not inside [0, T_s]".into(),
                        ));
                    }
                }
            }
        }
        let tol = T::of(1e-12).max(T::epsilon() * T::of(64.0));
        if (total - T::one()).abs() > tol {
            return Err(Error::Config(format!(
                "component weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { components })
    }

    /// Point mass at `t`.
    pub fn point_mass(t: T) -> Result<Self> {
        Self::new(vec![Component {
            weight: T::one(),
            kind: ComponentKind::Point(t),
        }])
    }

    /// Uniform on `[a, b]`.
    pub fn uniform(a: T, b: T) -> Result<Self> {
        Self::new(vec![Component {
            weight: T::one(),
            kind: ComponentKind::Uniform(a, b),
        }])
    }

    /// The first-arrival mixture for `K` users: a point mass at zero with
    /// probability `1/K` and `U(0, T_s)` with probability `(K-1)/K`.
    pub fn standard_mixture(k_users: usize) -> Result<Self> {
        if k_users == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        let k = T::of(k_users as f64);
        let point = Component {
            weight: T::one() / k,
            kind: ComponentKind::Point(T::zero()),
        };
        if k_users == 1 {
            return Self::new(vec![point]);
        }
        Self::new(vec![
            point,
            Component {
                weight: (k - T::one()) / k,
                kind: ComponentKind::Uniform(T::zero(), T::one()),
            },
        ])
    }

    pub fn components(&self) -> &[Component<T>] {
        &self.components
    }

    /// One i.i.d. draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let mut u = T::of(rng.gen::<f64>());
        for c in &self.components {
            if u < c.weight {
                return match c.kind {
                    ComponentKind::Point(t) => t,
                    ComponentKind::Uniform(a, b) => a + (b - a) * T::of(rng.gen::<f64>()),
                };
            }
            u -= c.weight;
        }
        // Rounding pushed u past the last component; fall back to it.
        match self.components.last().unwrap().kind {
            ComponentKind::Point(t) => t,
            ComponentKind::Uniform(a, b) => a + (b - a) * T::of(rng.gen::<f64>()),
        }
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<T> {
        (0..count).map(|_| self.sample(rng)).collect()
    }

    /// `E[f(tau)]`: point components evaluate directly, uniform components by
    /// adaptive quadrature to absolute tolerance `1e-9`.
    pub fn expect<F: Fn(T) -> T>(&self, f: F) -> T {
        self.expect_split(f, &[])
    }

    /// As [`expect`](Self::expect) but splitting uniform components at the
    /// given integrand breakpoints.
    pub fn expect_split<F: Fn(T) -> T>(&self, f: F, breakpoints: &[T]) -> T {
        let tol = T::of(1e-9);
        let mut total = T::zero();
        for c in &self.components {
            total += match c.kind {
                ComponentKind::Point(t) => c.weight * f(t),
                ComponentKind::Uniform(a, b) => {
                    c.weight * quad::adaptive_split(&f, a, b, tol, breakpoints) / (b - a)
                }
            };
        }
        total
    }
}

impl DelayDist<f64> {
    /// Vector-valued `E[f(tau)]`: `f` overwrites all `dim` components of its
    /// output slice for one delay, so components sharing an expensive common
    /// factor are evaluated together. Uniform components split at
    /// `breakpoints` and integrate each component to tolerance `rel_tol`
    /// relative to a coarse per-component magnitude estimate (with an
    /// absolute floor of `rel_tol` for small components).
    pub fn expect_vec<F: Fn(f64, &mut [f64])>(
        &self,
        dim: usize,
        rel_tol: f64,
        breakpoints: &[f64],
        f: F,
    ) -> Vec<f64> {
        let mut total = vec![0.0; dim];
        let mut buf = vec![0.0; dim];
        for c in &self.components {
            match c.kind {
                ComponentKind::Point(t) => {
                    f(t, &mut buf);
                    for (acc, v) in total.iter_mut().zip(&buf) {
                        *acc += c.weight * v;
                    }
                }
                ComponentKind::Uniform(a, b) => {
                    let mut edges: Vec<f64> = breakpoints
                        .iter()
                        .copied()
                        .filter(|&x| x > a && x < b)
                        .collect();
                    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
                    edges.dedup();
                    edges.insert(0, a);
                    edges.push(b);
                    let mut scale = vec![0.0f64; dim];
                    for w in edges.windows(2) {
                        f(0.5 * (w[0] + w[1]), &mut buf);
                        for (s, v) in scale.iter_mut().zip(&buf) {
                            *s = s.max(v.abs());
                        }
                    }
                    let nsub = (edges.len() - 1) as f64;
                    let tol: Vec<f64> = scale
                        .iter()
                        .map(|&s| rel_tol * (s * (b - a)).max(1.0) / nsub)
                        .collect();
                    let mut integral = vec![0.0; dim];
                    for w in edges.windows(2) {
                        quad::adaptive_vec(&f, w[0], w[1], &tol, &mut integral);
                    }
                    let wnorm = c.weight / (b - a);
                    for (acc, v) in total.iter_mut().zip(&integral) {
                        *acc += wnorm * v;
                    }
                }
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_mixture_weights() {
        let d = DelayDist::<f64>::standard_mixture(1).unwrap();
        assert_eq!(d.components().len(), 1);
        assert!(matches!(d.components()[0].kind, ComponentKind::Point(t) if t == 0.0));

        let d = DelayDist::<f64>::standard_mixture(2).unwrap();
        assert!((d.components()[0].weight - 0.5).abs() < 1e-15);
        assert!((d.components()[1].weight - 0.5).abs() < 1e-15);

        let d = DelayDist::<f64>::standard_mixture(1000).unwrap();
        assert!((d.components()[1].weight - 0.999).abs() < 1e-12);
    }

    #[test]
    fn zero_users_rejected() {
        assert!(DelayDist::<f64>::standard_mixture(0).is_err());
    }

    #[test]
    fn bad_weights_rejected() {
        let r = DelayDist::new(vec![Component {
            weight: 0.9f64,
            kind: ComponentKind::Point(0.0),
        }]);
        assert!(r.is_err());
    }

    #[test]
    fn point_mass_samples_constant() {
        let d = DelayDist::point_mass(0.25f64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(d.sample_many(100, &mut rng).iter().all(|&t| t == 0.25));
    }

    #[test]
    fn mixture_sampling_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = DelayDist::<f64>::standard_mixture(2).unwrap();
        let n = 1_000_000;
        let draws = d.sample_many(n, &mut rng);
        let zero_frac = draws.iter().filter(|&&t| t == 0.0).count() as f64 / n as f64;
        assert!((zero_frac - 0.5).abs() < 0.002, "zero fraction {zero_frac}");

        let d5 = DelayDist::<f64>::standard_mixture(5).unwrap();
        let mean = d5.sample_many(n, &mut rng).iter().sum::<f64>() / n as f64;
        assert!((mean - 0.4).abs() < 0.002, "mean {mean}");
    }

    #[test]
    fn expect_normalization_and_moments() {
        for k in [1usize, 2, 5, 16] {
            let d = DelayDist::<f64>::standard_mixture(k).unwrap();
            assert!((d.expect(|_| 1.0) - 1.0).abs() < 1e-12);
        }
        let d5 = DelayDist::<f64>::standard_mixture(5).unwrap();
        assert!((d5.expect(|t| t) - 0.4).abs() < 1e-9);
        let u = DelayDist::<f64>::uniform(0.0, 1.0).unwrap();
        assert!((u.expect(|t| t * t) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn vector_expectation_matches_scalar() {
        let d = DelayDist::<f64>::standard_mixture(3).unwrap();
        let f0 = |t: f64| (t - 0.4).abs();
        let f1 = |t: f64| 5e3 * (1.0 - t) * (1.0 - t);
        let vals = d.expect_vec(2, 1e-9, &[0.4], |t, out| {
            out[0] = f0(t);
            out[1] = f1(t);
        });
        assert!((vals[0] - d.expect_split(f0, &[0.4])).abs() < 1e-8);
        assert!((vals[1] - d.expect(f1)).abs() < 1e-4);
    }

    #[test]
    fn monte_carlo_matches_expect() {
        // Mean of a nontrivial functional vs quadrature, 3-sigma band.
        let d = DelayDist::<f64>::standard_mixture(4).unwrap();
        let f = |t: f64| (1.0 - t).max(0.0).powi(2);
        let exact = d.expect(f);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let draws = d.sample_many(n, &mut rng);
        let mean = draws.iter().map(|&t| f(t)).sum::<f64>() / n as f64;
        let var = draws.iter().map(|&t| (f(t) - mean).powi(2)).sum::<f64>() / n as f64;
        let sigma = (var / n as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * sigma + 1e-9);
    }
}

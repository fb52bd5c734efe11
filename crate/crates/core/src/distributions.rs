//! Parametric value distributions for sellers and buyers.
//!
//! Three families are supported, each with closed-form cdf, density,
//! quantile and moments:
//!
//! | spec string        | support      | cdf                          |
//! |--------------------|--------------|------------------------------|
//! | `uniform:<lo>,<hi>`| `[lo, hi]`   | `(x − lo)/(hi − lo)`         |
//! | `exp:<rate>`       | `[0, ∞)`     | `1 − e^{−rate·x}`            |
//! | `pareto-eps:<eps>` | `[1, ∞)`     | `1 − x^{−1/(1−eps)}`         |
//!
//! Sampling is inverse-transform: a uniform `U ∈ [0, 1)` maps to
//! `quantile(U)`, so a fixed uniform stream reproduces the same values on
//! every platform.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::quadrature;

/// Default number of interior grid points used by [`DistributionSpec::check_regularity`].
pub const DEFAULT_REGULARITY_GRID: usize = 1024;
/// Second-difference tolerance for the regularity grid checks.
pub const REGULARITY_TOLERANCE: f64 = 1e-9;
/// Relative error target of the numeric order-statistic integral.
pub const ORDER_STAT_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("cannot parse distribution spec: offending token `{token}` ({reason})")]
    Parse { token: String, reason: String },
    #[error("regularity check failed: {0}")]
    Irregular(String),
}

/// A value distribution over nonnegative reals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionSpec {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Exponential {
        rate: f64,
    },
    /// Pareto on `[1, ∞)` with tail index `1/(1 − eps)`; its mean is `1/eps`.
    ParetoEps {
        eps: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionStats {
    pub mean: f64,
    /// `+∞` when the variance does not exist.
    pub std: f64,
    pub median: f64,
}

/// Outcome of the numeric regularity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Regularity {
    /// `log(1 − F)` is concave (monotone hazard rate).
    pub mhr: bool,
    /// `log F` is concave.
    pub log_concave_cdf: bool,
    /// `x − (1 − F(x))/f(x)` is nondecreasing.
    pub virtual_value_increasing: bool,
    /// `x + F(x)/f(x)` is nondecreasing.
    pub virtual_cost_increasing: bool,
}

impl DistributionSpec {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self, DistributionError> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo >= hi {
            return Err(DistributionError::InvalidParameter(format!(
                "uniform needs 0 <= lo < hi, got lo={lo}, hi={hi}"
            )));
        }
        Ok(Self::Uniform { lo, hi })
    }

    pub fn exponential(rate: f64) -> Result<Self, DistributionError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(DistributionError::InvalidParameter(format!(
                "exponential needs rate > 0, got {rate}"
            )));
        }
        Ok(Self::Exponential { rate })
    }

    pub fn pareto_eps(eps: f64) -> Result<Self, DistributionError> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(DistributionError::InvalidParameter(format!(
                "pareto-eps needs 0 < eps < 1, got {eps}"
            )));
        }
        Ok(Self::ParetoEps { eps })
    }

    /// Support as `(min, max)`; `max` may be `+∞`.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Uniform { lo, hi } => (lo, hi),
            Self::Exponential { .. } => (0.0, f64::INFINITY),
            Self::ParetoEps { .. } => (1.0, f64::INFINITY),
        }
    }

    fn pareto_shape(eps: f64) -> f64 {
        1.0 / (1.0 - eps)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        match *self {
            Self::Uniform { lo, hi } => (x - lo) / (hi - lo),
            Self::Exponential { rate } => -(-rate * x).exp_m1(),
            Self::ParetoEps { eps } => 1.0 - x.powf(-Self::pareto_shape(eps)),
        }
    }

    /// `1 − F(x)`, computed without cancellation.
    pub fn survival(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= lo {
            return 1.0;
        }
        if x >= hi {
            return 0.0;
        }
        match *self {
            Self::Uniform { lo, hi } => (hi - x) / (hi - lo),
            Self::Exponential { rate } => (-rate * x).exp(),
            Self::ParetoEps { eps } => x.powf(-Self::pareto_shape(eps)),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(x >= lo && x <= hi) || x.is_infinite() {
            return 0.0;
        }
        match *self {
            Self::Uniform { lo, hi } => 1.0 / (hi - lo),
            Self::Exponential { rate } => rate * (-rate * x).exp(),
            Self::ParetoEps { eps } => {
                let a = Self::pareto_shape(eps);
                a * x.powf(-a - 1.0)
            }
        }
    }

    /// `(cdf, pdf)` at `x`. Outside the support the cdf clamps and the
    /// density is zero.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        (self.cdf(x), self.pdf(x))
    }

    /// Smallest `x` with `F(x) >= u`, for `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64, DistributionError> {
        if !(0.0..1.0).contains(&u) {
            return Err(DistributionError::Domain(format!(
                "quantile level must lie in [0, 1), got {u}"
            )));
        }
        Ok(self.quantile_unchecked(u))
    }

    #[inline]
    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => lo + u * (hi - lo),
            Self::Exponential { rate } => -(-u).ln_1p() / rate,
            Self::ParetoEps { eps } => (1.0 - u).powf(-(1.0 - eps)),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Exponential { rate } => 1.0 / rate,
            Self::ParetoEps { eps } => 1.0 / eps,
        }
    }

    pub fn stats(&self) -> DistributionStats {
        match *self {
            Self::Uniform { lo, hi } => DistributionStats {
                mean: 0.5 * (lo + hi),
                std: (hi - lo) / 12f64.sqrt(),
                median: 0.5 * (lo + hi),
            },
            Self::Exponential { rate } => DistributionStats {
                mean: 1.0 / rate,
                std: 1.0 / rate,
                median: std::f64::consts::LN_2 / rate,
            },
            Self::ParetoEps { eps } => {
                let a = Self::pareto_shape(eps);
                let std = if a > 2.0 {
                    (a / ((a - 1.0) * (a - 1.0) * (a - 2.0))).sqrt()
                } else {
                    f64::INFINITY
                };
                DistributionStats {
                    mean: 1.0 / eps,
                    std,
                    median: 2f64.powf(1.0 - eps),
                }
            }
        }
    }

    /// Inverse-transform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile_unchecked(u)
    }

    /// Expected maximum of `m` i.i.d. draws.
    ///
    /// Uniform and Pareto use closed forms; other kinds integrate
    /// `∫₀¹ F⁻¹(u)·m·u^{m−1} du` adaptively.
    pub fn max_order_stat_mean(&self, m: u64) -> Result<f64, DistributionError> {
        if m == 0 {
            return Err(DistributionError::Domain(
                "order statistic needs at least one draw".into(),
            ));
        }
        let mf = m as f64;
        match *self {
            Self::Uniform { lo, hi } => Ok(lo + (hi - lo) * mf / (mf + 1.0)),
            Self::ParetoEps { eps } => {
                // m Γ(m) Γ(eps) / Γ(m + eps)
                Ok((mf.ln() + ln_gamma(mf) + ln_gamma(eps) - ln_gamma(mf + eps)).exp())
            }
            Self::Exponential { .. } => self.max_order_stat_mean_numeric(m),
        }
    }

    /// Quadrature route for the expected maximum, valid for every kind.
    pub fn max_order_stat_mean_numeric(&self, m: u64) -> Result<f64, DistributionError> {
        if m == 0 {
            return Err(DistributionError::Domain(
                "order statistic needs at least one draw".into(),
            ));
        }
        // With v = u^m the integral becomes ∫₀¹ F⁻¹(v^{1/m}) dv, which stays
        // smooth for large m. The upper tail 1 − v^{1/m} is formed directly.
        let mf = m as f64;
        let integrand = |v: f64| self.upper_quantile(-(v.ln() / mf).exp_m1());
        let r = quadrature::integrate(integrand, 0.0, 1.0, 1e-14, ORDER_STAT_REL_TOL * 1e-2);
        Ok(r.value)
    }

    /// `F⁻¹(1 − s)` without forming `1 − s`.
    fn upper_quantile(&self, s: f64) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => hi - (hi - lo) * s,
            Self::Exponential { rate } => -s.ln() / rate,
            Self::ParetoEps { eps } => s.powf(-1.0 / Self::pareto_shape(eps)),
        }
    }

    /// `λ(y) = ∫_y^∞ x f(x) dx = (1 − F(y))·E[X | X ≥ y]`.
    pub fn upper_partial_mean(&self, y: f64) -> f64 {
        let (lo, hi) = self.support();
        if y <= lo {
            return self.mean();
        }
        if y >= hi {
            return 0.0;
        }
        match *self {
            Self::Uniform { lo, hi } => (hi * hi - y * y) / (2.0 * (hi - lo)),
            Self::Exponential { rate } => (-rate * y).exp() * (y + 1.0 / rate),
            Self::ParetoEps { eps } => {
                let a = Self::pareto_shape(eps);
                a / (a - 1.0) * y.powf(1.0 - a)
            }
        }
    }

    /// Numeric grid test of the regularity conditions on strictly interior,
    /// quantile-spaced points `x_i = F⁻¹(i/(N+1))`.
    pub fn check_regularity(&self, grid_points: usize) -> Result<Regularity, DistributionError> {
        if grid_points < 3 {
            return Err(DistributionError::Domain(format!(
                "regularity grid needs at least 3 points, got {grid_points}"
            )));
        }
        let denom = (grid_points + 1) as f64;
        let xs: Vec<f64> = (1..=grid_points)
            .map(|i| self.quantile_unchecked(i as f64 / denom))
            .collect();
        let log_sf: Vec<f64> = xs.iter().map(|&x| self.survival(x).ln()).collect();
        let log_cdf: Vec<f64> = xs.iter().map(|&x| self.cdf(x).ln()).collect();
        let vv: Vec<f64> = xs
            .iter()
            .map(|&x| x - self.survival(x) / self.pdf(x))
            .collect();
        let vc: Vec<f64> = xs.iter().map(|&x| x + self.cdf(x) / self.pdf(x)).collect();
        Ok(Regularity {
            mhr: is_concave_on_grid(&xs, &log_sf),
            log_concave_cdf: is_concave_on_grid(&xs, &log_cdf),
            virtual_value_increasing: is_nondecreasing(&vv),
            virtual_cost_increasing: is_nondecreasing(&vc),
        })
    }
}

/// Requires the buyer distribution to be MHR and the seller distribution to
/// have a log-concave cdf, naming the first failed check.
pub fn require_regular_pair(
    seller: &DistributionSpec,
    buyer: &DistributionSpec,
) -> Result<(), DistributionError> {
    let rs = seller.check_regularity(DEFAULT_REGULARITY_GRID)?;
    let rb = buyer.check_regularity(DEFAULT_REGULARITY_GRID)?;
    if !rb.mhr {
        return Err(DistributionError::Irregular(format!(
            "buyer distribution {buyer} does not have a monotone hazard rate"
        )));
    }
    if !rs.log_concave_cdf {
        return Err(DistributionError::Irregular(format!(
            "seller distribution {seller} does not have a log-concave cdf"
        )));
    }
    Ok(())
}

fn is_concave_on_grid(xs: &[f64], ys: &[f64]) -> bool {
    let slopes: Vec<f64> = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
        .collect();
    slopes
        .windows(2)
        .all(|s| s[1] <= s[0] + REGULARITY_TOLERANCE * s[0].abs().max(1.0))
}

fn is_nondecreasing(ys: &[f64]) -> bool {
    ys.windows(2)
        .all(|w| w[1] >= w[0] - REGULARITY_TOLERANCE * w[0].abs().max(1.0))
}

/// `H_n = 1 + 1/2 + … + 1/n`.
pub fn harmonic(n: u64) -> f64 {
    (1..=n).rev().map(|k| 1.0 / k as f64).sum()
}

/// Upper bound `k·mean + 2·√(k·m)·std` on the expected sum of the `k`
/// largest of `m` i.i.d. draws.
pub fn top_k_sum_bound(mean: f64, std: f64, m: u64, k: u64) -> Result<f64, DistributionError> {
    if k == 0 || k > m {
        return Err(DistributionError::Domain(format!(
            "top-k bound needs 1 <= k <= m, got k={k}, m={m}"
        )));
    }
    if !std.is_finite() || std < 0.0 || !mean.is_finite() {
        return Err(DistributionError::Domain(format!(
            "top-k bound needs finite mean and std, got mean={mean}, std={std}"
        )));
    }
    let (k, m) = (k as f64, m as f64);
    Ok(k * mean + 2.0 * (k * m).sqrt() * std)
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            Self::Exponential { rate } => write!(f, "exp:{rate}"),
            Self::ParetoEps { eps } => write!(f, "pareto-eps:{eps}"),
        }
    }
}

fn parse_number(token: &str) -> Result<f64, DistributionError> {
    let t = token.trim();
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DistributionError::Parse {
            token: t.to_string(),
            reason: "expected a finite number".into(),
        })
}

impl FromStr for DistributionSpec {
    type Err = DistributionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (kind, args) = s.split_once(':').ok_or_else(|| DistributionError::Parse {
            token: s.to_string(),
            reason: "expected `<kind>:<params>`".into(),
        })?;
        let params: Vec<&str> = args.split(',').collect();
        let arity = |n: usize| -> Result<(), DistributionError> {
            if params.len() != n {
                return Err(DistributionError::Parse {
                    token: args.to_string(),
                    reason: format!("`{kind}` takes {n} parameter(s)"),
                });
            }
            Ok(())
        };
        let invalid = |token: &str, e: DistributionError| DistributionError::Parse {
            token: token.to_string(),
            reason: e.to_string(),
        };
        match kind.trim() {
            "uniform" => {
                arity(2)?;
                let lo = parse_number(params[0])?;
                let hi = parse_number(params[1])?;
                Self::uniform(lo, hi).map_err(|e| invalid(args, e))
            }
            "exp" => {
                arity(1)?;
                Self::exponential(parse_number(params[0])?).map_err(|e| invalid(params[0], e))
            }
            "pareto-eps" => {
                arity(1)?;
                Self::pareto_eps(parse_number(params[0])?).map_err(|e| invalid(params[0], e))
            }
            other => Err(DistributionError::Parse {
                token: other.to_string(),
                reason: "unknown distribution kind (uniform, exp, pareto-eps)".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, LN_2};

    fn u01() -> DistributionSpec {
        DistributionSpec::uniform(0.0, 1.0).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eval_examples() {
        assert_eq!(u01().eval(0.5), (0.5, 1.0));
        let (c, p) = DistributionSpec::exponential(1.0).unwrap().eval(LN_2);
        assert!(close(c, 0.5, 1e-15) && close(p, 0.5, 1e-15));
        let (c, p) = DistributionSpec::pareto_eps(0.5).unwrap().eval(4.0);
        assert!(close(c, 0.9375, 1e-15), "{c}");
        assert!(close(p, 0.03125, 1e-15), "{p}");
    }

    #[test]
    fn eval_clamps_outside_support() {
        let d = DistributionSpec::uniform(1.0, 3.0).unwrap();
        assert_eq!(d.eval(0.5), (0.0, 0.0));
        assert_eq!(d.eval(7.0), (1.0, 0.0));
        assert_eq!(d.eval(f64::INFINITY), (1.0, 0.0));
        assert_eq!(d.eval(f64::NEG_INFINITY), (0.0, 0.0));
        let p = DistributionSpec::pareto_eps(0.3).unwrap();
        assert_eq!(p.eval(0.9), (0.0, 0.0));
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(u01().quantile(0.5).unwrap(), 0.5);
        let q = DistributionSpec::exponential(1.0)
            .unwrap()
            .quantile(1.0 - 1.0 / E)
            .unwrap();
        assert!(close(q, 1.0, 1e-14));
        assert_eq!(
            DistributionSpec::uniform(1.0, 3.0)
                .unwrap()
                .quantile(0.0)
                .unwrap(),
            1.0
        );
    }

    #[test]
    fn quantile_rejects_levels_outside_unit_interval() {
        for u in [1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                u01().quantile(u),
                Err(DistributionError::Domain(_))
            ));
        }
    }

    #[test]
    fn stats_examples() {
        let s = u01().stats();
        assert_eq!(s.mean, 0.5);
        assert!(close(s.std, 0.288_675_134_594_812_9, 1e-15));
        assert_eq!(s.median, 0.5);
        let s = DistributionSpec::exponential(2.0).unwrap().stats();
        assert_eq!((s.mean, s.std), (0.5, 0.5));
        assert!(close(s.median, LN_2 / 2.0, 1e-16));
        let s = DistributionSpec::pareto_eps(0.5).unwrap().stats();
        assert_eq!(s.mean, 2.0);
        assert!(s.std.is_infinite());
        assert!(DistributionSpec::pareto_eps(0.75)
            .unwrap()
            .stats()
            .std
            .is_finite());
    }

    #[test]
    fn median_is_half_quantile() {
        for d in [
            u01(),
            DistributionSpec::exponential(0.7).unwrap(),
            DistributionSpec::pareto_eps(0.4).unwrap(),
        ] {
            assert!(close(d.stats().median, d.quantile(0.5).unwrap(), 1e-14));
        }
    }

    struct FixedUniform(f64);

    impl rand::RngCore for FixedUniform {
        fn next_u32(&mut self) -> u32 {
            (self.next_u64() >> 32) as u32
        }
        fn next_u64(&mut self) -> u64 {
            // rand maps the top 53 bits onto [0, 1).
            ((self.0 * (1u64 << 53) as f64) as u64) << 11
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            rand_core_fill(self, dst)
        }
    }

    fn rand_core_fill(r: &mut FixedUniform, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = rand::RngCore::next_u64(r).to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }

    #[test]
    fn sample_is_inverse_transform() {
        assert_eq!(u01().sample(&mut FixedUniform(0.25)), 0.25);
        let x = DistributionSpec::exponential(1.0)
            .unwrap()
            .sample(&mut FixedUniform(1.0 - 1.0 / E));
        assert!(close(x, 1.0, 1e-14), "{x}");
        assert_eq!(
            DistributionSpec::pareto_eps(0.5)
                .unwrap()
                .sample(&mut FixedUniform(0.0)),
            1.0
        );
    }

    #[test]
    fn max_order_stat_examples() {
        assert!(close(u01().max_order_stat_mean(3).unwrap(), 0.75, 1e-15));
        let e = DistributionSpec::exponential(1.0).unwrap();
        assert!(close(e.max_order_stat_mean(2).unwrap(), 1.5, 1e-9));
        assert!(u01().max_order_stat_mean(0).is_err());
    }

    #[test]
    fn exponential_order_stat_is_harmonic_for_large_m() {
        let e = DistributionSpec::exponential(2.0).unwrap();
        for k in 0..=20 {
            let m = 1u64 << k;
            let v = e.max_order_stat_mean(m).unwrap();
            assert!(
                close(v, harmonic(m) / 2.0, 1e-8 * harmonic(m)),
                "m={m}: {v}"
            );
        }
    }

    #[test]
    fn pareto_order_stat_matches_asymptotic_growth() {
        let eps = 0.5;
        let d = DistributionSpec::pareto_eps(eps).unwrap();
        let n = 10_000u64;
        let ratio = d.max_order_stat_mean(n).unwrap() / d.mean();
        let asymptotic = eps * ln_gamma(eps).exp() * (n as f64).powf(1.0 - eps);
        assert!(
            (ratio / asymptotic - 1.0).abs() < 0.05,
            "{ratio} vs {asymptotic}"
        );
    }

    #[test]
    fn closed_form_and_quadrature_agree() {
        for d in [
            u01(),
            DistributionSpec::uniform(2.0, 5.0).unwrap(),
            DistributionSpec::pareto_eps(0.8).unwrap(),
        ] {
            for m in [1, 2, 7, 40] {
                let a = d.max_order_stat_mean(m).unwrap();
                let b = d.max_order_stat_mean_numeric(m).unwrap();
                assert!((a - b).abs() <= 1e-8 * a, "{d} m={m}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn upper_partial_mean_matches_quadrature() {
        let cases = [
            (u01(), 0.3),
            (DistributionSpec::exponential(2.0).unwrap(), 0.4),
            (DistributionSpec::pareto_eps(0.7).unwrap(), 3.0),
        ];
        for (d, y) in cases {
            // ∫_y^∞ x f(x) dx = ∫_{F(y)}^1 F⁻¹(u) du
            let numeric =
                quadrature::integrate(|u| d.quantile_unchecked(u), d.cdf(y), 1.0, 1e-13, 1e-11)
                    .value;
            assert!(close(d.upper_partial_mean(y), numeric, 1e-8), "{d}");
        }
        assert_eq!(u01().upper_partial_mean(0.0), 0.5);
        assert_eq!(u01().upper_partial_mean(1.0), 0.0);
    }

    #[test]
    fn regularity_examples() {
        let r = DistributionSpec::exponential(1.0)
            .unwrap()
            .check_regularity(DEFAULT_REGULARITY_GRID)
            .unwrap();
        assert!(r.mhr && r.log_concave_cdf);
        assert!(r.virtual_value_increasing && r.virtual_cost_increasing);
        let r = u01().check_regularity(DEFAULT_REGULARITY_GRID).unwrap();
        assert!(r.mhr && r.log_concave_cdf);
        let r = DistributionSpec::pareto_eps(0.5)
            .unwrap()
            .check_regularity(DEFAULT_REGULARITY_GRID)
            .unwrap();
        assert!(!r.mhr);
        assert!(u01().check_regularity(2).is_err());
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k_sum_bound(0.5, 0.0, 10, 3).unwrap(), 1.5);
        assert_eq!(top_k_sum_bound(1.0, 1.0, 4, 1).unwrap(), 5.0);
        let v = top_k_sum_bound(0.5, 0.288675, 100, 10).unwrap();
        assert!(close(v, 5.0 + 2.0 * 1000f64.sqrt() * 0.288675, 1e-12));
        assert!(close(v, 23.258, 1e-3));
        assert!(top_k_sum_bound(1.0, 1.0, 3, 4).is_err());
        assert!(top_k_sum_bound(1.0, f64::INFINITY, 3, 2).is_err());
    }

    #[test]
    fn harmonic_numbers() {
        assert_eq!(harmonic(0), 0.0);
        assert_eq!(harmonic(1), 1.0);
        assert!(close(harmonic(4), 25.0 / 12.0, 1e-15));
    }

    #[test]
    fn parse_specs() {
        assert_eq!("uniform:0,1".parse::<DistributionSpec>().unwrap(), u01());
        assert_eq!(
            "exp:2".parse::<DistributionSpec>().unwrap(),
            DistributionSpec::Exponential { rate: 2.0 }
        );
        assert_eq!(
            " pareto-eps:0.5 ".parse::<DistributionSpec>().unwrap(),
            DistributionSpec::ParetoEps { eps: 0.5 }
        );
        for d in [u01(), DistributionSpec::exponential(0.25).unwrap()] {
            assert_eq!(d.to_string().parse::<DistributionSpec>().unwrap(), d);
        }
    }

    #[test]
    fn parse_errors_name_the_token() {
        let cases = [
            ("gauss:0,1", "gauss"),
            ("uniform:0,abc", "abc"),
            ("exp:-1", "-1"),
            ("uniform", "uniform"),
            ("pareto-eps:1.5", "1.5"),
        ];
        for (text, token) in cases {
            match text.parse::<DistributionSpec>() {
                Err(DistributionError::Parse { token: t, .. }) => assert_eq!(t, token, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(DistributionSpec::uniform(1.0, 1.0).is_err());
        assert!(DistributionSpec::uniform(-1.0, 1.0).is_err());
        assert!(DistributionSpec::exponential(0.0).is_err());
        assert!(DistributionSpec::pareto_eps(0.0).is_err());
        assert!(DistributionSpec::pareto_eps(1.0).is_err());
    }

    #[test]
    fn sample_mean_within_four_standard_errors() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for d in [
            u01(),
            DistributionSpec::exponential(2.0).unwrap(),
            DistributionSpec::uniform(1.0, 5.0).unwrap(),
        ] {
            let n = 1_000_000;
            let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - d.mean()).abs() <= 4.0 * se,
                "{d}: {mean} vs {}",
                d.mean()
            );
        }
    }

    #[test]
    fn top_k_bound_holds_in_simulation() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for d in [u01(), DistributionSpec::exponential(1.0).unwrap()] {
            let st = d.stats();
            for (m, k) in [(10usize, 3usize), (100, 10), (1000, 50)] {
                let reps = 2_000;
                let sums: Vec<f64> = (0..reps)
                    .map(|_| {
                        let mut xs: Vec<f64> = (0..m).map(|_| d.sample(&mut rng)).collect();
                        xs.sort_by(|a, b| b.total_cmp(a));
                        xs[..k].iter().sum()
                    })
                    .collect();
                let mean = sums.iter().sum::<f64>() / reps as f64;
                let var =
                    sums.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (reps - 1) as f64;
                let se = (var / reps as f64).sqrt();
                let bound = top_k_sum_bound(st.mean, st.std, m as u64, k as u64).unwrap();
                assert!(
                    mean - 3.0 * se <= bound,
                    "{d} m={m} k={k}: {mean} > {bound}"
                );
            }
        }
    }

    fn arb_dist() -> impl proptest::strategy::Strategy<Value = DistributionSpec> {
        use proptest::prelude::*;
        prop_oneof![
            (0.0f64..5.0, 0.01f64..10.0)
                .prop_map(|(lo, w)| DistributionSpec::uniform(lo, lo + w).unwrap()),
            (0.05f64..20.0).prop_map(|r| DistributionSpec::exponential(r).unwrap()),
            (0.05f64..0.95).prop_map(|e| DistributionSpec::pareto_eps(e).unwrap()),
        ]
    }

    proptest::proptest! {
        #[test]
        fn quantile_and_cdf_round_trip(d in arb_dist(), u in 0.001f64..0.999) {
            let x = d.quantile(u).unwrap();
            proptest::prop_assert!((d.cdf(x) - u).abs() <= 1e-10, "{} u={}", d, u);
            let back = d.quantile(d.cdf(x)).unwrap();
            proptest::prop_assert!((back - x).abs() <= 1e-10 * x.abs().max(1.0), "{} x={}", d, x);
        }

        #[test]
        fn order_stat_mean_is_monotone_in_m(d in arb_dist(), m in 1u64..200) {
            let a = d.max_order_stat_mean(m).unwrap();
            let b = d.max_order_stat_mean(m + 1).unwrap();
            proptest::prop_assert!(b >= a * (1.0 - 1e-12));
        }
    }
}

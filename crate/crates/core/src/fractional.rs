//! Optimal fractional mechanism for `S^{αm} B^m`.
//!
//! A fractional mechanism buys exactly `F_S(q)` units from a seller offered
//! `q` and sells `1 − F_B(p)` units to a buyer offered `p`. On
//! `S^{αm} B^m` the optimum posts one price per side and solves
//!
//! ```text
//! max  p(1 − F_B(p)) − α·q·F_S(q)   s.t.  1 − F_B(p) = α·F_S(q)
//! ```
//!
//! per buyer. The constraint is eliminated by working in the seller
//! quantile `u = F_S(q)`: `q = F_S⁻¹(u)`, `p = F_B⁻¹(1 − αu)` and the
//! objective becomes `h(u) = αu·(p − q)` on `0 < u < min(1, 1/α)`.
//! Its derivative is `α·(φ_B(p) − c_S(q))` with `φ_B` the virtual value and
//! `c_S` the virtual cost, so interior optima equate the two (the common
//! value is the Lagrange multiplier).

use std::f64::consts::E;

use thiserror::Error;

use crate::distributions::{require_regular_pair, DistributionError, DistributionSpec};

/// Coarse grid size used before golden-section refinement.
pub const COARSE_GRID: usize = 1024;
/// Golden-section stops once the seller-price bracket is this narrow.
pub const PRICE_TOLERANCE: f64 = 1e-10;
/// Allowed violation of `1 − F_B(p) = α F_S(q)`.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-8;
/// Allowed `|φ_B(p) − c_S(q)|` at interior optima.
pub const STATIONARITY_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FractionalError {
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("alpha must be at least 1")]
    InvalidAlpha,
}

/// `x − (1 − F_B(x))/f_B(x)`.
pub fn virtual_value(buyer: &DistributionSpec, x: f64) -> Result<f64, DistributionError> {
    let density = buyer.pdf(x);
    if density.is_nan() || density <= 0.0 {
        return Err(DistributionError::Domain(format!(
            "virtual value needs positive density, f_B({x}) = {density}"
        )));
    }
    Ok(x - buyer.survival(x) / density)
}

/// `x + F_S(x)/f_S(x)`.
pub fn virtual_cost(seller: &DistributionSpec, x: f64) -> Result<f64, DistributionError> {
    let density = seller.pdf(x);
    if density.is_nan() || density <= 0.0 {
        return Err(DistributionError::Domain(format!(
            "virtual cost needs positive density, f_S({x}) = {density}"
        )));
    }
    Ok(x + seller.cdf(x) / density)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalSolution {
    pub alpha: usize,
    /// Buyer price.
    pub p: f64,
    /// Seller price.
    pub q: f64,
    /// `p(1 − F_B(p)) − α q F_S(q)`.
    pub per_buyer_value: f64,
    /// `(1 − F_B(p)) − α F_S(q)`.
    pub constraint_residual: f64,
    /// `φ_B(p) − c_S(q)`; zero when the optimum sits on the no-trade boundary.
    pub stationarity_residual: f64,
    /// Common value of `φ_B(p)` and `c_S(q)` (mean of the two).
    pub lambda: f64,
    /// `false` when no price pair yields positive profit.
    pub trades: bool,
}

impl FractionalSolution {
    /// Optimal fractional profit on `S^{αm} B^m`.
    pub fn total_value(&self, m: usize) -> f64 {
        m as f64 * self.per_buyer_value
    }
}

fn objective(seller: &DistributionSpec, buyer: &DistributionSpec, alpha: f64, u: f64) -> f64 {
    let q = seller.quantile_unchecked(u);
    let p = buyer.quantile_unchecked((1.0 - alpha * u).max(0.0));
    alpha * u * (p - q)
}

/// Solves the single-price fractional programme for the given regular pair.
pub fn solve_fractional(
    seller: &DistributionSpec,
    buyer: &DistributionSpec,
    alpha: usize,
) -> Result<FractionalSolution, FractionalError> {
    if alpha == 0 {
        return Err(FractionalError::InvalidAlpha);
    }
    require_regular_pair(seller, buyer)?;
    let a = alpha as f64;
    let u_max = (1.0 / a).min(1.0);
    let h = |u: f64| objective(seller, buyer, a, u);

    let step = u_max / (COARSE_GRID + 1) as f64;
    let (best_i, best_h) = (1..=COARSE_GRID).map(|i| (i, h(i as f64 * step))).fold(
        (0, f64::NEG_INFINITY),
        |acc, x| if x.1 > acc.1 { x } else { acc },
    );

    if best_h.is_nan() || best_h <= 0.0 {
        return Ok(no_trade(seller, buyer, alpha));
    }

    let mut lo = (best_i - 1) as f64 * step;
    let mut hi = (best_i + 1) as f64 * step;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut h1, mut h2) = (h(x1), h(x2));
    for _ in 0..200 {
        let q_width = seller.quantile_unchecked(hi) - seller.quantile_unchecked(lo);
        if q_width.abs() <= PRICE_TOLERANCE || hi - lo <= f64::EPSILON * hi {
            break;
        }
        if h1 >= h2 {
            hi = x2;
            x2 = x1;
            h2 = h1;
            x1 = hi - inv_phi * (hi - lo);
            h1 = h(x1);
        } else {
            lo = x1;
            x1 = x2;
            h1 = h2;
            x2 = lo + inv_phi * (hi - lo);
            h2 = h(x2);
        }
    }
    let u = if h1 >= h2 { x1 } else { x2 };
    let u = if h(u) >= best_h {
        u
    } else {
        best_i as f64 * step
    };

    let q = seller.quantile_unchecked(u);
    let p = buyer.quantile_unchecked((1.0 - a * u).max(0.0));
    let per_buyer_value = p * buyer.survival(p) - a * q * seller.cdf(q);
    let constraint_residual = buyer.survival(p) - a * seller.cdf(q);
    let vv = virtual_value(buyer, p)?;
    let vc = virtual_cost(seller, q)?;
    Ok(FractionalSolution {
        alpha,
        p,
        q,
        per_buyer_value,
        constraint_residual,
        stationarity_residual: vv - vc,
        lambda: 0.5 * (vv + vc),
        trades: true,
    })
}

/// Buys nothing: the seller price sits at the seller support minimum and the
/// buyer price at the buyer support maximum.
fn no_trade(
    seller: &DistributionSpec,
    buyer: &DistributionSpec,
    alpha: usize,
) -> FractionalSolution {
    let q = seller.support().0;
    let p = buyer.support().1;
    FractionalSolution {
        alpha,
        p,
        q,
        per_buyer_value: 0.0,
        constraint_residual: buyer.survival(p) - alpha as f64 * seller.cdf(q),
        stationarity_residual: 0.0,
        lambda: f64::NAN,
        trades: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateCheck {
    pub name: &'static str,
    pub passed: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// Positive when the check holds with room to spare.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub r: f64,
    pub checks: Vec<CertificateCheck>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// `r = max{2, μ_S/μ_B}` as used by the fractional value bounds.
pub fn fractional_r(seller: &DistributionSpec, buyer: &DistributionSpec) -> f64 {
    (seller.mean() / buyer.mean()).max(2.0)
}

/// Checks the solution against the value floor `m·μ_B/(2e·r)` and the buyer
/// price ceiling `4·ln(4e·r)·μ_B`.
pub fn certify_bounds(
    sol: &FractionalSolution,
    seller: &DistributionSpec,
    buyer: &DistributionSpec,
    m: usize,
) -> CertificateReport {
    let r = fractional_r(seller, buyer);
    let mu_b = buyer.mean();
    let mf = m as f64;
    let value = mf * sol.per_buyer_value;
    let floor = mf * mu_b / (2.0 * E * r);
    let ceiling = 4.0 * (4.0 * E * r).ln() * mu_b;
    let checks = vec![
        CertificateCheck {
            name: "value_floor",
            passed: value >= floor && (m == 0 || sol.trades),
            lhs: value,
            rhs: floor,
            slack: value - floor,
        },
        CertificateCheck {
            name: "buyer_price_ceiling",
            passed: sol.p <= ceiling,
            lhs: sol.p,
            rhs: ceiling,
            slack: ceiling - sol.p,
        },
    ];
    CertificateReport { r, checks }
}

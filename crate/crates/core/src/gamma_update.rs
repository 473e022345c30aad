//! Posterior amplitude moments under a generalised Gamma speech prior and a
//! complex Gaussian observation noise.
//!
//! The prior density is `p(a) = 2 a^{2γ−1} e^{−a²/β²} / (β^{2γ} Γ(γ))`.

use crate::error::{Error, Result};
use crate::specfun::{
    digamma, gamma_half_ratio, half_ratio_deficit, kummer_m, ln_gamma, ln_gamma_half_ratio,
    ln_half_ratio_excess,
};

/// Smallest shape returned by the fit.
pub const GAMMA_MIN: f64 = 1e-3;
/// Largest shape returned by the fit. Shapes beyond this describe an
/// essentially deterministic amplitude and only slow down the hypergeometric
/// evaluations.
pub const GAMMA_MAX: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPrior {
    pub gamma: f64,
    pub beta: f64,
}

impl GammaPrior {
    pub fn new(gamma: f64, beta: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::domain("GammaPrior", gamma, "gamma > 0"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::domain("GammaPrior", beta, "beta > 0"));
        }
        Ok(GammaPrior { gamma, beta })
    }

    pub fn mean(&self) -> f64 {
        self.beta * gamma_half_ratio(self.gamma).expect("validated shape")
    }

    pub fn variance(&self) -> f64 {
        self.beta * self.beta * self.gamma * half_ratio_deficit(self.gamma).expect("validated shape")
    }

    /// Second moment `E(A²) = γβ²`.
    pub fn power(&self) -> f64 {
        self.gamma * self.beta * self.beta
    }

    pub fn density(&self, a: f64) -> f64 {
        if a < 0.0 {
            return 0.0;
        }
        let g = self.gamma;
        let ln = std::f64::consts::LN_2 + (2.0 * g - 1.0) * a.ln()
            - (a / self.beta).powi(2)
            - 2.0 * g * self.beta.ln()
            - ln_gamma(g).expect("validated shape");
        ln.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFit {
    pub prior: GammaPrior,
    /// The shape hit `GAMMA_MIN` or `GAMMA_MAX`.
    pub clamped: bool,
}

// −2·ln(Γ(g+½)/(√g Γ(g))) and its derivative in ln g; decreasing from +∞
// at g → 0 to 0 at g → ∞.
fn log_ratio_gap(g: f64) -> Result<(f64, f64)> {
    let value = -2.0 * ln_half_ratio_excess(g)?;
    let slope = if g >= 10.0 {
        // derivative of the large-g series, free of cancellation
        let inv = 1.0 / g;
        let inv2 = inv * inv;
        -2.0 * g
            * (inv2 * (1.0 / 8.0 - inv2 * (3.0 / 192.0 - inv2 * (5.0 / 640.0 - inv2 * (7.0 * 17.0 / 14336.0)))))
    } else {
        -2.0 * g * (digamma(g + 0.5)? - digamma(g)? - 0.5 / g)
    };
    Ok((value, slope))
}

/// Fits `(γ, β)` so that the prior amplitude has mean `mu` and variance
/// `var`, solving `Γ²(γ+½)/(γΓ²(γ)) = μ²/(μ²+σ²)` for `γ`.
pub fn fit_gamma_prior(mu: f64, var: f64) -> Result<GammaFit> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::domain("fit_gamma_prior", mu, "mean >= 0"));
    }
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::domain("fit_gamma_prior", var, "variance > 0"));
    }
    let power = mu * mu + var;
    let target = if mu > 0.0 {
        (var / (mu * mu)).ln_1p()
    } else {
        f64::INFINITY
    };
    let (lo_val, _) = log_ratio_gap(GAMMA_MIN)?;
    let (hi_val, _) = log_ratio_gap(GAMMA_MAX)?;
    let (gamma, clamped) = if target >= lo_val {
        log::trace!("gamma fit clamped low (target {target})");
        (GAMMA_MIN, true)
    } else if target <= hi_val {
        log::trace!("gamma fit clamped high (target {target})");
        (GAMMA_MAX, true)
    } else {
        (solve_shape(target)?, false)
    };
    let beta = (power / gamma).sqrt();
    Ok(GammaFit {
        prior: GammaPrior::new(gamma, beta)?,
        clamped,
    })
}

// Safeguarded Newton iteration in u = ln g on the bracket [GAMMA_MIN, GAMMA_MAX].
fn solve_shape(target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (GAMMA_MIN.ln(), GAMMA_MAX.ln());
    // large-g start 1/(4g) ≈ target, small-g start π g ≈ e^{−target}
    let guess = if target < 0.5 {
        (0.25 / target).ln()
    } else {
        ((-target).exp() / std::f64::consts::PI).ln()
    };
    let mut u = guess.clamp(lo, hi);
    for _ in 0..200 {
        let (val, slope) = log_ratio_gap(u.exp())?;
        let resid = val - target;
        if resid > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        if resid.abs() <= 1e-14 * target.max(1e-300) || hi - lo < 1e-15 {
            return Ok(u.exp());
        }
        let step = resid / slope;
        let mut next = u - step;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() < 1e-15 * u.abs().max(1.0) {
            return Ok(next.exp());
        }
        u = next;
    }
    Ok(u.exp())
}

/// A-priori and a-posteriori SNRs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrPair {
    pub zeta: f64,
    pub xi: f64,
}

impl SnrPair {
    pub fn new(prior: &GammaPrior, nu2: f64, y: f64) -> Result<Self> {
        if !(nu2 > 0.0) {
            return Err(Error::domain("SnrPair", nu2, "noise power > 0"));
        }
        Ok(SnrPair {
            zeta: y * y / nu2,
            xi: prior.power() / nu2,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudePosterior {
    pub mean: f64,
    pub var: f64,
    /// The variance came out below the floor and was raised to it.
    pub var_clamped: bool,
}

/// Posterior mean and variance of the speech amplitude given the observed
/// noisy amplitude `y` and noise power `nu2`.
///
/// With `s² = β²ν²/(β²+ν²)` and `v = y²β²/(ν²(β²+ν²)) = ζξ/(γ+ξ)`,
/// `E(A|y) = Γ(γ+½)/Γ(γ) · s · M(γ+½;1;v)/M(γ;1;v)` and
/// `E(A²|y) = γ s² M(γ+1;1;v)/M(γ;1;v)`.
pub fn mdkm_posterior(prior: &GammaPrior, nu2: f64, y: f64) -> Result<AmplitudePosterior> {
    if !(nu2 > 0.0) || !nu2.is_finite() {
        return Err(Error::domain("mdkm_posterior", nu2, "noise power > 0"));
    }
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::domain("mdkm_posterior", y, "observed amplitude >= 0"));
    }
    let g = prior.gamma;
    let b2 = prior.beta * prior.beta;
    // s² and v written to stay finite when β² and ν² differ by many decades
    let s2 = if b2 > nu2 {
        nu2 / (1.0 + nu2 / b2)
    } else {
        b2 / (1.0 + b2 / nu2)
    };
    let v = (y * y / nu2) * (b2 / (b2 + nu2));
    let m0 = kummer_m(g, 1.0, v)?;
    let m_half = kummer_m(g + 0.5, 1.0, v)?;
    let m_one = kummer_m(g + 1.0, 1.0, v)?;
    let mean = (ln_gamma_half_ratio(g)? + 0.5 * s2.ln() + m_half.ln_magnitude - m0.ln_magnitude).exp();
    let second = g * s2 * (m_one.ln_magnitude - m0.ln_magnitude).exp();
    let raw = second - mean * mean;
    let floor = (1e-12 * y * y).max(1e-300);
    let var_clamped = !(raw >= floor);
    if var_clamped {
        log::trace!("posterior variance {raw:e} raised to {floor:e}");
    }
    Ok(AmplitudePosterior {
        mean,
        var: if var_clamped { floor } else { raw },
        var_clamped,
    })
}

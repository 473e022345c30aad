//! Special functions used by the amplitude estimators.
//!
//! Everything that can overflow for realistic SNRs (the confluent
//! hypergeometric function in particular) is returned in log-scaled form so
//! that callers form ratios by subtracting logarithms.

use crate::error::{Error, Result};

/// A real number stored as `sign * exp(ln_magnitude)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledValue {
    pub ln_magnitude: f64,
    pub sign: f64,
}

impl ScaledValue {
    pub fn from_value(v: f64) -> Self {
        ScaledValue {
            ln_magnitude: v.abs().ln(),
            sign: if v < 0.0 { -1.0 } else { 1.0 },
        }
    }

    /// The represented value; may overflow to infinity.
    pub fn value(&self) -> f64 {
        self.sign * self.ln_magnitude.exp()
    }

    /// `self / other`, formed in the log domain.
    pub fn ratio(&self, other: &ScaledValue) -> f64 {
        self.sign * other.sign * (self.ln_magnitude - other.ln_magnitude).exp()
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("ln_gamma", x, "x > 0"));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// Digamma function `ψ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("digamma", x, "x > 0"));
    }
    Ok(statrs::function::gamma::digamma(x))
}

// Coefficients of the large-g expansion of ln(Γ(g+½)/Γ(g)) − ½ ln g in odd
// powers of 1/g.
const HALF_RATIO_SERIES: [f64; 6] = [
    -1.0 / 8.0,
    1.0 / 192.0,
    -1.0 / 640.0,
    17.0 / 14336.0,
    -31.0 / 18432.0,
    691.0 / 180224.0,
];
const HALF_RATIO_SERIES_MIN: f64 = 10.0;

/// `ln(Γ(g+½)/Γ(g)) − ½ ln g`, accurate for all `g > 0` including very large
/// arguments where the two log-gammas would cancel catastrophically.
pub fn ln_half_ratio_excess(g: f64) -> Result<f64> {
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::domain("ln_half_ratio_excess", g, "g > 0"));
    }
    if g >= HALF_RATIO_SERIES_MIN {
        let inv = 1.0 / g;
        let inv2 = inv * inv;
        let mut pow = inv;
        let mut acc = 0.0;
        for c in HALF_RATIO_SERIES {
            acc += c * pow;
            pow *= inv2;
        }
        Ok(acc)
    } else {
        Ok(ln_gamma(g + 0.5)? - ln_gamma(g)? - 0.5 * g.ln())
    }
}

/// `ln(Γ(g+½)/Γ(g))`.
pub fn ln_gamma_half_ratio(g: f64) -> Result<f64> {
    Ok(ln_half_ratio_excess(g)? + 0.5 * g.ln())
}

/// `Γ(g+½)/Γ(g)`.
pub fn gamma_half_ratio(g: f64) -> Result<f64> {
    Ok(ln_gamma_half_ratio(g)?.exp())
}

/// `1 − Γ²(g+½)/(g Γ²(g))`, the normalised variance of a Nakagami (or
/// generalised Gamma) amplitude with shape `g`. Computed without
/// cancellation for large `g`.
pub fn half_ratio_deficit(g: f64) -> Result<f64> {
    Ok(-(2.0 * ln_half_ratio_excess(g)?).exp_m1())
}

const BESSEL_SERIES_MAX: f64 = 30.0;

/// Modified Bessel function of the first kind, `I_0` or `I_1`.
///
/// With `scaled` set the result is `e^{-|x|} I_order(x)`, which stays finite
/// for every finite `x`. The unscaled value overflows to infinity beyond
/// roughly `|x| = 713`.
pub fn bessel_i(order: u32, x: f64, scaled: bool) -> Result<f64> {
    if order > 1 {
        return Err(Error::domain("bessel_i", order as f64, "order 0 or 1"));
    }
    if !x.is_finite() {
        return Err(Error::domain("bessel_i", x, "finite x"));
    }
    let ax = x.abs();
    let nu = order as f64;
    let mut value = if ax <= BESSEL_SERIES_MAX {
        let half = 0.5 * ax;
        let q = half * half;
        let mut term = if order == 0 { 1.0 } else { half };
        let mut sum = term;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= q / (k * (k + nu));
            sum += term;
            if term <= sum * 1e-17 {
                break;
            }
        }
        if scaled {
            sum * (-ax).exp()
        } else {
            sum
        }
    } else {
        // Hankel expansion; terms shrink monotonically well past the
        // precision we need for |x| > 30.
        let mu = 4.0 * nu * nu;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..40 {
            let kf = k as f64;
            let odd = 2.0 * kf - 1.0;
            term *= -(mu - odd * odd) / (kf * 8.0 * ax);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        let s = sum / (2.0 * std::f64::consts::PI * ax).sqrt();
        if scaled {
            s
        } else {
            s * ax.exp()
        }
    };
    if order == 1 && x < 0.0 {
        value = -value;
    }
    Ok(value)
}

const KUMMER_ASYMPTOTIC_MIN: f64 = 50.0;
const KUMMER_MAX_A: f64 = 1.0e5;
const KUMMER_MAX_B: f64 = 1.0e3;
const KUMMER_MAX_TERMS: usize = 20_000_000;
const RESCALE_AT: f64 = 1.0e280;

/// Kummer's confluent hypergeometric function `M(a; b; x)` for `a ≥ 0`,
/// `b > 0`, `x ≥ 0`, returned in log-scaled form.
///
/// Large arguments use the exponential asymptotic expansion whenever it
/// converges to full precision; otherwise the Taylor series is summed with
/// running rescaling (all of its terms are positive on this domain, so there
/// is no cancellation).
pub fn kummer_m(a: f64, b: f64, x: f64) -> Result<ScaledValue> {
    if !(a >= 0.0) || !a.is_finite() || a > KUMMER_MAX_A {
        return Err(Error::domain("kummer_m", a, "0 <= a <= 1e5"));
    }
    if !(b > 0.0) || !b.is_finite() || b > KUMMER_MAX_B {
        return Err(Error::domain("kummer_m", b, "0 < b <= 1e3"));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain("kummer_m", x, "finite x >= 0"));
    }
    if x == 0.0 || a == 0.0 {
        return Ok(ScaledValue {
            ln_magnitude: 0.0,
            sign: 1.0,
        });
    }
    if x > KUMMER_ASYMPTOTIC_MIN {
        if let Some(v) = kummer_asymptotic(a, b, x)? {
            return Ok(v);
        }
    }
    kummer_series(a, b, x)
}

fn kummer_asymptotic(a: f64, b: f64, x: f64) -> Result<Option<ScaledValue>> {
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut prev = f64::INFINITY;
    for s in 0..200 {
        let sf = s as f64;
        term *= (b - a + sf) * (1.0 - a + sf) / ((sf + 1.0) * x);
        if term == 0.0 {
            break;
        }
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            if sum <= 0.0 {
                return Ok(None);
            }
            let ln = ln_gamma(b)? - ln_gamma(a)? + x + (a - b) * x.ln() + sum.ln();
            return Ok(Some(ScaledValue {
                ln_magnitude: ln,
                sign: 1.0,
            }));
        }
        // past the smallest term without converging: expansion is useless here
        if term.abs() > prev && s > 2 {
            return Ok(None);
        }
        prev = term.abs();
    }
    Ok(None)
}

fn kummer_series(a: f64, b: f64, x: f64) -> Result<ScaledValue> {
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut ln_scale = 0.0_f64;
    for k in 0..KUMMER_MAX_TERMS {
        let kf = k as f64;
        let r = (a + kf) * x / ((b + kf) * (kf + 1.0));
        term *= r;
        sum += term;
        if sum > RESCALE_AT {
            sum /= RESCALE_AT;
            term /= RESCALE_AT;
            ln_scale += RESCALE_AT.ln();
        }
        if r < 1.0 && term < 1e-17 * sum {
            return Ok(ScaledValue {
                ln_magnitude: sum.ln() + ln_scale,
                sign: 1.0,
            });
        }
    }
    Err(Error::domain(
        "kummer_m",
        x,
        "series converged within the term budget",
    ))
}

/// Exponential integral `E₁(x) = ∫_x^∞ e^{-t}/t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return Err(Error::domain("exp_integral_e1", x, "x > 0"));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x <= 1.0 {
        const EULER: f64 = 0.577_215_664_901_532_9;
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            let kf = k as f64;
            term *= -x / kf;
            let add = term / kf;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        Ok(-EULER - x.ln() - sum)
    } else {
        // modified Lentz evaluation of the continued fraction
        let tiny = 1e-300;
        let mut bb = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / bb;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            bb += 2.0;
            d = 1.0 / (an * d + bb);
            c = bb + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        Ok(h * (-x).exp())
    }
}

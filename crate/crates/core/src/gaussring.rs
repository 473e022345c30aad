//! Gaussring priors: mixtures of equal-variance circular complex Gaussians
//! with means spaced evenly on a circle, used to give speech and noise
//! amplitudes a uniform-phase prior that stays conjugate to a Gaussian
//! observation model.
//!
//! Complex Gaussians here are parameterised by their mean `o` and total
//! variance `Δ = E|x − o|²`, so each real dimension has variance `Δ/2`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kalman::{project_psd, MomentPair};
use crate::specfun::{bessel_i, half_ratio_deficit, ln_gamma, ln_half_ratio_excess};

/// Default largest number of components per ring.
pub const DEFAULT_RING_CAP: usize = 64;

/// Smallest `μ/σ` for which a ring is built; below it the prior falls back
/// to a single zero-mean complex Gaussian (Rayleigh amplitude).
pub fn rician_gate() -> f64 {
    (PI / (4.0 - PI)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NakagamiParams {
    pub m: f64,
    pub omega: f64,
}

impl NakagamiParams {
    pub fn mean(&self) -> f64 {
        (ln_half_ratio_excess(self.m).expect("m > 0").exp()) * self.omega.sqrt()
    }

    pub fn variance(&self) -> f64 {
        self.omega * half_ratio_deficit(self.m).expect("m > 0")
    }

    pub fn density(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        let m = self.m;
        let ln = std::f64::consts::LN_2 + m * (m / self.omega).ln() - ln_gamma(m).expect("m > 0")
            + (2.0 * m - 1.0) * a.ln()
            - m * a * a / self.omega;
        ln.exp()
    }
}

/// Nakagami parameters from an amplitude mean and variance, using
/// `Ω = μ² + σ²` and the lower-bound shape `m = Ω/(4σ²)`.
pub fn nakagami_from_moments(mu: f64, var: f64) -> Result<NakagamiParams> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::domain("nakagami_from_moments", mu, "mean >= 0"));
    }
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::domain("nakagami_from_moments", var, "variance > 0"));
    }
    let omega = mu * mu + var;
    Ok(NakagamiParams {
        m: omega / (4.0 * var),
        omega,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicianParams {
    /// Ring radius.
    pub alpha: f64,
    /// Per-dimension variance.
    pub delta2: f64,
}

impl RicianParams {
    pub fn density(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        let d2 = self.delta2;
        // e^{−(a²+α²)/2δ²} I0(aα/δ²) = e^{−(a−α)²/2δ²} · e^{−x} I0(x)
        let x = a * self.alpha / d2;
        a / d2 * (-(a - self.alpha).powi(2) / (2.0 * d2)).exp() * bessel_i(0, x, true).expect("finite")
    }
}

/// Rician with the same second and fourth moments as the Nakagami
/// distribution: `α² = Ω√(1 − 1/m)`, `δ² = (Ω − α²)/2`.
pub fn rician_from_nakagami(p: &NakagamiParams) -> Result<RicianParams> {
    if !(p.m > 1.0) {
        return Err(Error::RayleighRequired(p.m));
    }
    let alpha2 = p.omega * (1.0 - 1.0 / p.m).sqrt();
    Ok(RicianParams {
        alpha: alpha2.sqrt(),
        delta2: 0.5 * (p.omega - alpha2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingOptions {
    pub cap: usize,
    /// Angle of the first component, radians.
    pub orientation: f64,
}

impl Default for RingOptions {
    fn default() -> Self {
        RingOptions {
            cap: DEFAULT_RING_CAP,
            orientation: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussringModel {
    pub means: Vec<Complex64>,
    /// Shared component variance `Δ`.
    pub var: f64,
    pub center: Complex64,
    pub fallback: bool,
    /// The component count was limited by the cap.
    pub capped: bool,
}

impl GaussringModel {
    pub fn count(&self) -> usize {
        self.means.len()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.means.len() as f64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let g = rng.random_range(0..self.means.len());
        let sd = (0.5 * self.var).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        self.means[g] + Complex64::new(re, im) * sd
    }
}

/// Ring prior for an amplitude with mean `mu` and variance `var` around
/// `center`, with the default cap and orientation.
pub fn build_ring(mu: f64, var: f64, center: Complex64) -> Result<GaussringModel> {
    build_ring_with(mu, var, center, &RingOptions::default())
}

/// Builds the ring prior.
///
/// Above the gate the ring has `G = ⌈πμ/σ⌉` components on a circle of the
/// matched Rician radius, each with `Δ = 2δ²`. When `G` exceeds the cap the
/// component variance is inflated so that neighbouring centres stay about
/// two standard deviations apart, and the radius shrinks to keep `E(A²)`.
pub fn build_ring_with(
    mu: f64,
    var: f64,
    center: Complex64,
    opts: &RingOptions,
) -> Result<GaussringModel> {
    let naka = nakagami_from_moments(mu, var)?;
    if opts.cap == 0 {
        return Err(Error::Config("ring component cap must be at least 1".into()));
    }
    let ratio = mu / var.sqrt();
    if ratio < rician_gate() {
        return Ok(GaussringModel {
            means: vec![center],
            var: naka.omega,
            center,
            fallback: true,
            capped: false,
        });
    }
    let ric = rician_from_nakagami(&naka)?;
    let wanted = (PI * ratio).ceil();
    let (g, mut alpha, mut delta2, capped) = if wanted > opts.cap as f64 {
        (opts.cap, ric.alpha, ric.delta2, true)
    } else {
        (wanted as usize, ric.alpha, ric.delta2, false)
    };
    if capped {
        let gf = g as f64;
        let alpha2 = naka.omega / (1.0 + 2.0 * PI * PI / (gf * gf));
        let spaced = PI * PI * alpha2 / (gf * gf);
        if spaced > delta2 {
            alpha = alpha2.sqrt();
            delta2 = spaced;
        }
    }
    let means = (0..g)
        .map(|k| center + Complex64::from_polar(alpha, 2.0 * PI * k as f64 / g as f64 + opts.orientation))
        .collect();
    Ok(GaussringModel {
        means,
        var: 2.0 * delta2,
        center,
        fallback: false,
        capped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductComponent {
    pub weight: f64,
    pub mean: Complex64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductMixture {
    pub components: Vec<ProductComponent>,
    /// Every weight underflowed or was not finite; uniform weights used.
    pub degenerate: bool,
}

/// Pairwise products of the speech and noise ring components with
/// normalised weights `∝ 𝒩(õ; ŏ, Δ̃+Δ̆)`.
pub fn product_components(speech: &GaussringModel, noise: &GaussringModel) -> ProductMixture {
    let sum_var = speech.var + noise.var;
    let var = speech.var * noise.var / sum_var;
    let norm = -(PI * sum_var).ln() - ((speech.count() * noise.count()) as f64).ln();
    let mut logw = Vec::with_capacity(speech.count() * noise.count());
    let mut comps = Vec::with_capacity(speech.count() * noise.count());
    for os in &speech.means {
        for on in &noise.means {
            logw.push(norm - (os - on).norm_sqr() / sum_var);
            let mean = (os * noise.var + on * speech.var) / sum_var;
            comps.push(ProductComponent {
                weight: 0.0,
                mean,
                var,
            });
        }
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut degenerate = !max.is_finite();
    if !degenerate {
        let total: f64 = logw.iter().map(|l| (l - max).exp()).sum();
        let ln_total = max + total.ln();
        for (c, l) in comps.iter_mut().zip(&logw) {
            c.weight = (l - ln_total).exp();
        }
        degenerate = !comps.iter().all(|c| c.weight.is_finite());
    }
    if degenerate {
        log::warn!("product weights degenerate; using uniform weights");
        let u = 1.0 / comps.len() as f64;
        comps.iter_mut().for_each(|c| c.weight = u);
    }
    ProductMixture {
        components: comps,
        degenerate,
    }
}

/// Moments of the squared amplitudes `|υ₁|², |υ₂|²` where
/// `υ = [x, x − z]` and `x ~ 𝒞𝒩(o, Δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredMoments {
    pub mu_sq: [f64; 2],
    pub var_sq: [f64; 2],
    pub cov_sq: f64,
}

impl SquaredMoments {
    pub fn rho(&self) -> f64 {
        let d = (self.var_sq[0] * self.var_sq[1]).sqrt();
        if d > 0.0 {
            (self.cov_sq / d).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    }
}

pub fn squared_moments(o: Complex64, delta: f64, z: Complex64) -> Result<SquaredMoments> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::domain("squared_moments", delta, "variance >= 0"));
    }
    let mu = [o, o - z];
    let p = [mu[0].norm_sqr(), mu[1].norm_sqr()];
    let cross = (mu[0] * mu[1].conj()).re;
    Ok(SquaredMoments {
        mu_sq: [delta + p[0], delta + p[1]],
        var_sq: [
            delta * (delta + 2.0 * p[0]),
            delta * (delta + 2.0 * p[1]),
        ],
        cov_sq: delta * (delta + 2.0 * cross),
    })
}

/// Amplitude means, variances and covariance of one product component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentMoments {
    pub mean: [f64; 2],
    pub var: [f64; 2],
    pub cov: f64,
}

/// Nakagami fit per amplitude (`Ω = E|υ|²`, `m = Ω²/Var|υ|²`) using the
/// exact Nakagami mean and variance, with the amplitude covariance taken
/// from the correlation of the squared amplitudes.
pub fn component_amplitude_moments(sq: &SquaredMoments) -> Result<ComponentMoments> {
    let mut mean = [0.0; 2];
    let mut var = [0.0; 2];
    for i in 0..2 {
        let omega = sq.mu_sq[i];
        let vs = sq.var_sq[i];
        if !(vs > 0.0) {
            mean[i] = omega.max(0.0).sqrt();
            continue;
        }
        let m = omega * omega / vs;
        let excess = ln_half_ratio_excess(m)?;
        mean[i] = excess.exp() * omega.sqrt();
        var[i] = omega * (-(2.0 * excess).exp_m1());
    }
    Ok(ComponentMoments {
        mean,
        var,
        cov: sq.rho() * (var[0] * var[1]).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdkrPosterior {
    pub moments: MomentPair,
    pub speech_components: usize,
    pub noise_components: usize,
    pub degenerate_weights: bool,
    pub projected: bool,
}

// Neumaier summation
#[derive(Default, Clone, Copy)]
struct Acc {
    sum: f64,
    comp: f64,
}

impl Acc {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Components whose normalised weight falls below this are skipped.
const NEGLIGIBLE_WEIGHT: f64 = 1e-18;

/// Joint posterior moments of the speech and noise amplitudes given the
/// complex observation `z`.
///
/// The speech ring is centred at the origin and the ring of the negated
/// noise at `z`; both are built from the marginal prior moments (the prior
/// cross term is not used) and oriented along `arg z`.
pub fn mdkr_posterior(prior: &MomentPair, z: Complex64, cap: usize) -> Result<MdkrPosterior> {
    if prior.dim() != 2 {
        return Err(Error::Shape("joint speech and noise prior required".into()));
    }
    let opts = RingOptions {
        cap,
        orientation: z.arg(),
    };
    let speech = build_ring_with(prior.mu[0], prior.sigma[(0, 0)], Complex64::new(0.0, 0.0), &opts)?;
    let noise = build_ring_with(prior.mu[1], prior.sigma[(1, 1)], z, &opts)?;
    let mixture = product_components(&speech, &noise);

    let mut comps = Vec::with_capacity(mixture.components.len());
    for c in mixture.components.iter().filter(|c| c.weight > NEGLIGIBLE_WEIGHT) {
        let sq = squared_moments(c.mean, c.var, z)?;
        comps.push((c.weight, component_amplitude_moments(&sq)?));
    }
    let total: f64 = comps.iter().map(|(w, _)| w).sum();

    let mut mean_acc = [Acc::default(); 2];
    for (w, cm) in &comps {
        for i in 0..2 {
            mean_acc[i].add(w * cm.mean[i]);
        }
    }
    let mean = [mean_acc[0].value() / total, mean_acc[1].value() / total];
    let mut cov_acc = [Acc::default(); 3];
    for (w, cm) in &comps {
        let d = [cm.mean[0] - mean[0], cm.mean[1] - mean[1]];
        cov_acc[0].add(w * (cm.var[0] + d[0] * d[0]));
        cov_acc[1].add(w * (cm.cov + d[0] * d[1]));
        cov_acc[2].add(w * (cm.var[1] + d[1] * d[1]));
    }
    let (v0, c01, v1) = (
        cov_acc[0].value() / total,
        cov_acc[1].value() / total,
        cov_acc[2].value() / total,
    );
    let mut sigma = DMatrix::from_row_slice(2, 2, &[v0, c01, c01, v1]);
    let projected = project_psd(&mut sigma);
    Ok(MdkrPosterior {
        moments: MomentPair {
            mu: nalgebra::DVector::from_vec(vec![mean[0].max(0.0), mean[1].max(0.0)]),
            sigma,
        },
        speech_components: speech.count(),
        noise_components: noise.count(),
        degenerate_weights: mixture.degenerate,
        projected,
    })
}

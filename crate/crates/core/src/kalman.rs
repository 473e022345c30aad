//! Kalman filter over the concatenated speech and noise amplitude state of a
//! single frequency bin.
//!
//! The state holds the `p` most recent speech amplitudes followed by the `q`
//! most recent noise amplitudes. The update step accepts posterior moments
//! of the current amplitudes from any Bayesian rule and propagates them to
//! the lagged entries through a decorrelating transform.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::lpc::ModulationLpcModel;

/// Condition number of the prior covariance above which it is regularised.
pub const MAX_CONDITION: f64 = 1e12;
/// Relative loading used when regularising.
pub const REGULARIZATION: f64 = 1e-8;
/// Most negative eigenvalue tolerated before re-projecting onto the PSD cone.
pub const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub a: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub p: usize,
    pub q: usize,
}

impl KalmanState {
    pub fn new(a: DVector<f64>, cov: DMatrix<f64>, p: usize, q: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::Config("speech order must be at least 1".into()));
        }
        let n = p + q;
        if a.len() != n || cov.shape() != (n, n) {
            return Err(Error::Shape(format!(
                "state of length {} and covariance {:?} for orders ({p}, {q})",
                a.len(),
                cov.shape()
            )));
        }
        Ok(KalmanState { a, cov, p, q })
    }

    /// Every speech lag set to `speech`, every noise lag to `noise`, with a
    /// diagonal covariance of the squared amplitudes.
    pub fn initial(speech: f64, noise: f64, p: usize, q: usize) -> Result<Self> {
        let a = DVector::from_fn(p + q, |i, _| if i < p { speech } else { noise });
        let cov = DMatrix::from_diagonal(&a.map(|v| v * v));
        KalmanState::new(a, cov, p, q)
    }

    pub fn dim(&self) -> usize {
        self.p + self.q
    }

    /// Number of current amplitudes tracked: 2 with a noise state, else 1.
    pub fn n_current(&self) -> usize {
        if self.q > 0 {
            2
        } else {
            1
        }
    }

    pub fn speech(&self) -> f64 {
        self.a[0]
    }

    pub fn noise(&self) -> Option<f64> {
        (self.q > 0).then(|| self.a[self.p])
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.cov.clone()).eigenvalues.min()
    }
}

/// Mean and covariance of the current speech (and optionally noise)
/// amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl MomentPair {
    pub fn joint(mu_speech: f64, mu_noise: f64, var_speech: f64, cov: f64, var_noise: f64) -> Self {
        MomentPair {
            mu: DVector::from_vec(vec![mu_speech, mu_noise]),
            sigma: DMatrix::from_row_slice(2, 2, &[var_speech, cov, cov, var_noise]),
        }
    }

    pub fn speech_only(mu: f64, var: f64) -> Self {
        MomentPair {
            mu: DVector::from_element(1, mu),
            sigma: DMatrix::from_element(1, 1, var),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn speech_mean(&self) -> f64 {
        self.mu[0]
    }

    pub fn speech_var(&self) -> f64 {
        self.sigma[(0, 0)]
    }

    pub fn noise_mean(&self) -> Option<f64> {
        (self.dim() > 1).then(|| self.mu[1])
    }

    pub fn noise_var(&self) -> Option<f64> {
        (self.dim() > 1).then(|| self.sigma[(1, 1)])
    }

    pub fn cross(&self) -> Option<f64> {
        (self.dim() > 1).then(|| self.sigma[(0, 1)])
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.dim();
        if m == 0 || m > 2 || self.sigma.shape() != (m, m) {
            return Err(Error::Shape(format!(
                "moment pair of dimension {m} with covariance {:?}",
                self.sigma.shape()
            )));
        }
        if let Some(bad) = self.mu.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::domain("MomentPair", *bad, "finite nonnegative mean"));
        }
        if self.sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("MomentPair", f64::NAN, "finite covariance"));
        }
        let min = SymmetricEigen::new(self.sigma.clone()).eigenvalues.min();
        let scale = self.sigma.trace().abs().max(f64::MIN_POSITIVE);
        if min < -PSD_TOLERANCE * scale.max(1.0) {
            return Err(Error::domain("MomentPair", min, "positive semidefinite covariance"));
        }
        Ok(())
    }
}

/// Transition matrix, residual covariance and current-amplitude selector.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

fn companion(model: &ModulationLpcModel) -> DMatrix<f64> {
    let n = model.order();
    let mut f = DMatrix::zeros(n, n);
    for (j, b) in model.coeffs.iter().enumerate() {
        f[(0, j)] = -b;
    }
    for i in 1..n {
        f[(i, i - 1)] = 1.0;
    }
    f
}

/// Selection matrix picking the current speech amplitude (and the current
/// noise amplitude when `q > 0`) out of the state.
pub fn selection_matrix(p: usize, q: usize) -> DMatrix<f64> {
    let m = if q > 0 { 2 } else { 1 };
    let mut d = DMatrix::zeros(p + q, m);
    d[(0, 0)] = 1.0;
    if q > 0 {
        d[(p, 1)] = 1.0;
    }
    d
}

/// Permutation that swaps state entries 1 and `p` (zero-based), bringing
/// the current noise amplitude next to the current speech amplitude.
pub fn permutation(p: usize, q: usize) -> DMatrix<f64> {
    let n = p + q;
    let mut v = DMatrix::identity(n, n);
    if q > 0 && p > 1 {
        v.swap_rows(1, p);
    }
    v
}

/// Block-diagonal companion transition from the speech model and, if
/// present, the noise model.
pub fn build_transition(
    speech: &ModulationLpcModel,
    noise: Option<&ModulationLpcModel>,
) -> Result<Transition> {
    let p = speech.order();
    if p == 0 {
        return Err(Error::Config("speech LPC order must be at least 1".into()));
    }
    let q = noise.map_or(0, |m| m.order());
    let n = p + q;
    let mut f = DMatrix::zeros(n, n);
    f.view_mut((0, 0), (p, p)).copy_from(&companion(speech));
    let mut resid = vec![speech.residual_var];
    if let Some(noise) = noise.filter(|m| m.order() > 0) {
        f.view_mut((p, p), (q, q)).copy_from(&companion(noise));
        resid.push(noise.residual_var);
    }
    Ok(Transition {
        f,
        q: DMatrix::from_diagonal(&DVector::from_vec(resid)),
        d: selection_matrix(p, q),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub state: KalmanState,
    pub prior: MomentPair,
    /// Number of prior means raised to zero.
    pub clamped: usize,
}

/// Time update: `a' = F a`, `P' = F P Fᵀ + D Q Dᵀ`, and the prior moments of
/// the current amplitudes `μ = Dᵀ a'`, `Σ = Dᵀ P' D`.
pub fn predict(state: &KalmanState, tr: &Transition) -> Result<Prediction> {
    let n = state.dim();
    if tr.f.shape() != (n, n) || tr.d.nrows() != n || tr.d.ncols() != state.n_current() {
        return Err(Error::Shape(format!(
            "transition {:?} / selector {:?} for state of length {n}",
            tr.f.shape(),
            tr.d.shape()
        )));
    }
    if tr.q.shape() != (tr.d.ncols(), tr.d.ncols()) {
        return Err(Error::Shape("residual covariance does not match selector".into()));
    }
    let a = &tr.f * &state.a;
    let mut cov = &tr.f * &state.cov * tr.f.transpose() + &tr.d * &tr.q * tr.d.transpose();
    symmetrize(&mut cov);
    let mut mu = tr.d.transpose() * &a;
    let mut clamped = 0;
    for v in mu.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
            clamped += 1;
        }
    }
    let sigma = tr.d.transpose() * &cov * &tr.d;
    Ok(Prediction {
        state: KalmanState {
            a,
            cov,
            p: state.p,
            q: state.q,
        },
        prior: MomentPair { mu, sigma },
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub state: KalmanState,
    /// The prior covariance was loaded to make it invertible.
    pub regularized: bool,
    /// The posterior covariance was projected back onto the PSD cone.
    pub projected: bool,
}

/// Measurement update.
///
/// In the permuted coordinates `V a` the current amplitudes come first.
/// With `V P Vᵀ = [Σ Mᵀ; M T]` the transform `H = [I 0; −MΣ⁻¹ I] V` makes
/// the lagged entries of `x = H a` uncorrelated with the current ones, so
/// the posterior replaces only the leading block:
/// `a⁺ = H⁻¹(x + E(μ⁺ − Eᵀx))` and `P⁺ = P + H⁻¹E(Σ⁺ − Σ)EᵀH⁻ᵀ`.
pub fn update(
    prior_state: &KalmanState,
    prior: &MomentPair,
    posterior: &MomentPair,
) -> Result<UpdateOutcome> {
    let m = prior_state.n_current();
    if prior.dim() != m || posterior.dim() != m {
        return Err(Error::Shape(format!(
            "moments of dimension {}/{} for a state with {m} current amplitudes",
            prior.dim(),
            posterior.dim()
        )));
    }
    let n = prior_state.dim();
    let v = permutation(prior_state.p, prior_state.q);
    let pv = &v * &prior_state.cov * v.transpose();
    let mut sigma = pv.view((0, 0), (m, m)).into_owned();
    let cross = pv.view((m, 0), (n - m, m)).into_owned();

    let trace = sigma.trace();
    if !(trace > 0.0) {
        // the current amplitudes are known exactly; nothing to inject
        return Ok(UpdateOutcome {
            state: prior_state.clone(),
            regularized: false,
            projected: false,
        });
    }
    let mut regularized = false;
    let eig = SymmetricEigen::new(sigma.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        let load = REGULARIZATION * trace / m as f64;
        for i in 0..m {
            sigma[(i, i)] += load;
        }
        regularized = true;
        log::debug!("prior covariance regularised (eigenvalues {lo:e}..{hi:e})");
    }
    let sigma_inv = sigma
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::domain("kalman::update", lo, "invertible prior covariance"))?;

    // H and its inverse in closed form
    let gain = &cross * &sigma_inv; // M Σ⁻¹
    let mut lower = DMatrix::identity(n, n);
    lower.view_mut((m, 0), (n - m, m)).copy_from(&(-&gain));
    let h = &lower * &v;
    let mut lower_inv = DMatrix::identity(n, n);
    lower_inv.view_mut((m, 0), (n - m, m)).copy_from(&gain);
    let h_inv = v.transpose() * lower_inv;

    let mut x = &h * &prior_state.a;
    for i in 0..m {
        x[i] = posterior.mu[i];
    }
    let a = &h_inv * x;

    let e_cols = h_inv.columns(0, m).into_owned(); // H⁻¹E
    let delta = &posterior.sigma - &prior.sigma;
    let mut cov = &prior_state.cov + &e_cols * delta * e_cols.transpose();
    symmetrize(&mut cov);
    let projected = project_psd(&mut cov);
    Ok(UpdateOutcome {
        state: KalmanState {
            a,
            cov,
            p: prior_state.p,
            q: prior_state.q,
        },
        regularized,
        projected,
    })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Clamps negative eigenvalues to zero when the most negative one is below
/// `−PSD_TOLERANCE`. Returns whether a projection happened.
pub fn project_psd(m: &mut DMatrix<f64>) -> bool {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.min() >= -PSD_TOLERANCE {
        return false;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let mut rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrize(&mut rebuilt);
    *m = rebuilt;
    true
}

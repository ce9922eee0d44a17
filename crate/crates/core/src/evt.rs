//! Generalized Pareto threshold-exceedance modelling: distribution functions,
//! constrained maximum likelihood with covariate-dependent scale, the hybrid
//! body/tail distribution estimator, and standard errors from the observed
//! information.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{minimize, NelderMeadOptions};
use crate::stats;

/// Numerical switch to the exponential branch of the GPD.
const XI_SWITCH: f64 = 1e-6;
/// Minimum number of exceedances accepted for maximum-likelihood fitting.
pub const MIN_EXCEEDANCES: usize = 50;

/// Unconditional GPD parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub sigma: f64,
    pub xi: f64,
}

/// GPD distribution function of an excess x >= 0:
/// G(x; σ, ξ) = 1 − (1 + ξx/σ)₊^{−1/ξ}, with the exponential limit near ξ = 0.
pub fn gpd_cdf(x: f64, p: &GpdParams) -> Result<f64> {
    if !(p.sigma > 0.0) {
        return Err(Error::Input("GPD scale must be positive".into()));
    }
    if x < 0.0 {
        return Err(Error::Input("GPD excess must be nonnegative".into()));
    }
    if p.xi.abs() <= XI_SWITCH {
        return Ok(-(-x / p.sigma).exp_m1());
    }
    let z = p.xi * x / p.sigma;
    if z <= -1.0 {
        // Beyond the upper endpoint for xi < 0.
        return Ok(1.0);
    }
    Ok(-(-z.ln_1p() / p.xi).exp_m1())
}

/// Inverse link for the covariate scale model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Linear,
    Exponential,
}

/// How scale positivity is handled, as requested before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CorrectionSpec {
    None,
    /// Floor fitted scales at ε during evaluation; ε defaults to
    /// 1e−6 × median absolute excess when not supplied.
    PostFit { epsilon: Option<f64> },
    /// Positivity enforced at the componentwise covariate extremes during
    /// maximization.
    LinearConstraint,
    /// Fixed open interval for each raw-scale slope.
    BoxConstraint { lo: f64, hi: f64 },
}

/// Resolved correction carried by a fitted scale model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Correction {
    None,
    PostFit { epsilon: f64 },
    LinearConstraint,
    BoxConstraint { lo: f64, hi: f64 },
}

/// Per-column centering and scaling applied to confounders inside the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    fn from_rows(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let n = rows.len() as f64;
        let mut means = vec![0.0; d];
        for r in rows {
            for (m, &v) in means.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut sds = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                sds[j] += (r[j] - means[j]).powi(2) / (n - 1.0).max(1.0);
            }
        }
        for s in &mut sds {
            *s = s.sqrt();
        }
        Standardization { means, sds }
    }

    fn apply(&self, raw: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for j in 0..self.means.len() {
            let sd = if self.sds[j] > 0.0 { self.sds[j] } else { 1.0 };
            out.push((raw[j] - self.means[j]) / sd);
        }
    }
}

/// Fitted (or template) covariate scale model. Slopes are on the standardized
/// covariate scale; zero-variance covariate columns are dropped from the model
/// and their slopes pinned at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleModel {
    pub link: Link,
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub correction: Correction,
    pub standardization: Standardization,
}

impl ScaleModel {
    /// Constant scale with no covariates.
    pub fn constant(sigma: f64) -> Self {
        ScaleModel {
            link: Link::Linear,
            intercept: sigma,
            slopes: Vec::new(),
            correction: Correction::None,
            standardization: Standardization { means: Vec::new(), sds: Vec::new() },
        }
    }

    pub fn has_covariates(&self) -> bool {
        !self.slopes.is_empty()
    }

    /// Scale through the link, without any positivity correction. May be
    /// nonpositive for the linear link.
    pub fn sigma_linear(&self, raw_row: Option<&[f64]>) -> Result<f64> {
        let mut acc = self.intercept;
        if self.has_covariates() {
            let row = raw_row.ok_or_else(|| {
                Error::Input("covariate row required by a scale model with slopes".into())
            })?;
            if row.len() != self.slopes.len() {
                return Err(Error::Input(format!(
                    "covariate row has {} entries, scale model expects {}",
                    row.len(),
                    self.slopes.len()
                )));
            }
            let mut z = Vec::with_capacity(row.len());
            self.standardization.apply(row, &mut z);
            for (s, v) in self.slopes.iter().zip(&z) {
                acc += s * v;
            }
        }
        Ok(match self.link {
            Link::Linear => acc,
            Link::Exponential => acc.exp(),
        })
    }

    /// Scale used at evaluation time: post-fit flooring applied when
    /// configured, and a tiny floor otherwise so constrained fits stay
    /// evaluable at covariate combinations off the constraint corners.
    pub fn sigma_eval(&self, raw_row: Option<&[f64]>) -> Result<f64> {
        let s = self.sigma_linear(raw_row)?;
        Ok(match self.correction {
            Correction::PostFit { epsilon } => s.max(epsilon),
            _ => s.max(1e-12),
        })
    }

    /// Raw-scale intercept (linear link only meaningfully).
    pub fn raw_intercept(&self) -> f64 {
        let mut b0 = self.intercept;
        for j in 0..self.slopes.len() {
            let sd = if self.standardization.sds[j] > 0.0 { self.standardization.sds[j] } else { 1.0 };
            b0 -= self.slopes[j] * self.standardization.means[j] / sd;
        }
        b0
    }

    /// Raw-scale slopes.
    pub fn raw_slopes(&self) -> Vec<f64> {
        self.slopes
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let sd = if self.standardization.sds[j] > 0.0 { self.standardization.sds[j] } else { 1.0 };
                s / sd
            })
            .collect()
    }
}

/// GPD log-likelihood of positive excesses under a scale model and shape.
///
/// Returns a −∞ sentinel (not an error) when the parameters fall outside the
/// support: nonpositive scale under the uncorrected linear link, or an excess
/// beyond the upper endpoint for ξ < 0.
pub fn gpd_loglik(
    excesses: &[f64],
    covariates: Option<&[Vec<f64>]>,
    m: &ScaleModel,
    xi: f64,
) -> Result<f64> {
    if let Some(rows) = covariates {
        if rows.len() != excesses.len() {
            return Err(Error::Input("covariate rows must align with excesses".into()));
        }
    } else if m.has_covariates() {
        return Err(Error::Input("scale model has slopes but no covariates given".into()));
    }
    let mut ll = 0.0;
    for (i, &y) in excesses.iter().enumerate() {
        if !(y > 0.0) {
            return Err(Error::Input("excesses must be strictly positive".into()));
        }
        let row = covariates.map(|r| r[i].as_slice());
        let sigma_lin = m.sigma_linear(row)?;
        let sigma = match m.correction {
            Correction::PostFit { epsilon } => sigma_lin.max(epsilon),
            _ => sigma_lin,
        };
        if !(sigma > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        if xi.abs() <= XI_SWITCH {
            ll += -sigma.ln() - y / sigma;
        } else {
            let z = xi * y / sigma;
            if z <= -1.0 {
                return Ok(f64::NEG_INFINITY);
            }
            ll += -sigma.ln() - (1.0 + 1.0 / xi) * z.ln_1p();
        }
    }
    Ok(ll)
}

/// Box bounds on the scale slope σ¹ for exactly-Student data:
/// −u/(ν·max H) < σ¹ < −u/(ν·min H), one-sided when H does not change sign.
pub fn student_box_bounds(u: f64, nu: f64, h: &[f64]) -> Result<(f64, f64)> {
    if !(u > 0.0) {
        return Err(Error::Input("threshold must be positive".into()));
    }
    if !(nu > 0.0) {
        return Err(Error::Input("degrees of freedom must be positive".into()));
    }
    if h.is_empty() {
        return Err(Error::Input("empty covariate vector".into()));
    }
    let hmax = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let hmin = h.iter().cloned().fold(f64::INFINITY, f64::min);
    let lo = if hmax > 0.0 { -u / (nu * hmax) } else { f64::NEG_INFINITY };
    let hi = if hmin < 0.0 { -u / (nu * hmin) } else { f64::INFINITY };
    Ok((lo, hi))
}

/// Fit request: threshold quantile, link and correction mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub q: f64,
    pub link: Link,
    pub correction: CorrectionSpec,
}

impl FitConfig {
    pub fn unconditional(q: f64) -> Self {
        FitConfig { q, link: Link::Linear, correction: CorrectionSpec::None }
    }
}

/// Fitted threshold model.
#[derive(Debug, Clone, Serialize)]
pub struct GpdFit {
    #[serde(rename = "u")]
    pub threshold: f64,
    pub q: f64,
    #[serde(flatten)]
    pub scale: ScaleModel,
    pub xi: f64,
    pub n_exceed: usize,
    pub loglik: f64,
    /// Covariance over (σ⁰, σ¹…, ξ) on the standardized covariate scale;
    /// absent when the optimum sits on a constraint boundary.
    pub cov: Option<Vec<Vec<f64>>>,
    pub se: Option<Vec<f64>>,
    pub converged: bool,
}

impl GpdFit {
    pub fn params_at(&self, raw_row: Option<&[f64]>) -> Result<GpdParams> {
        Ok(GpdParams { sigma: self.scale.sigma_eval(raw_row)?, xi: self.xi })
    }

    /// Standard errors of the raw-scale slopes (σ¹ back-transformed).
    pub fn raw_slope_se(&self) -> Option<Vec<f64>> {
        let se = self.se.as_ref()?;
        Some(
            (0..self.scale.slopes.len())
                .map(|j| {
                    let sd = if self.scale.standardization.sds[j] > 0.0 {
                        self.scale.standardization.sds[j]
                    } else {
                        1.0
                    };
                    se[1 + j] / sd
                })
                .collect(),
        )
    }

    /// Fit summary in the documented JSON shape.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "u": self.threshold,
            "q": self.q,
            "link": self.scale.link,
            "correction": self.scale.correction,
            "sigma0": self.scale.intercept,
            "sigma1": self.scale.slopes,
            "raw_sigma0": self.scale.raw_intercept(),
            "raw_sigma1": self.scale.raw_slopes(),
            "xi": self.xi,
            "se": self.se,
            "raw_sigma1_se": self.raw_slope_se(),
            "loglik": self.loglik,
            "n_exceed": self.n_exceed,
            "converged": self.converged,
        })
    }
}

/// Empirical q-quantile threshold with the higher straddling order statistic,
/// so that exactly ⌈(1−q)n⌉ tie-free observations exceed it.
pub fn threshold_at(sample: &[f64], q: f64) -> Result<(f64, usize)> {
    let n = sample.len();
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Input("threshold quantile must lie in (0, 1)".into()));
    }
    let m = ((1.0 - q) * n as f64).ceil() as usize;
    if m == 0 || m >= n {
        return Err(Error::Input("threshold quantile leaves no body or no tail".into()));
    }
    Ok((stats::order_statistic(sample, n - m), m))
}

struct Objective<'a> {
    excesses: &'a [f64],
    std_rows: Vec<Vec<f64>>, // standardized covariate rows for exceedances
    link: Link,
    d: usize,
    // Eq.(9)-style corners (standardized) for the constrained fit.
    corner_min: Vec<f64>,
    corner_max: Vec<f64>,
    correction: CorrectionSpec,
    sds: Vec<f64>, // for box bounds on raw slopes
}

impl Objective<'_> {
    fn sigma(&self, theta: &[f64], row: &[f64]) -> f64 {
        let mut acc = theta[0];
        for j in 0..self.d {
            acc += theta[1 + j] * row[j];
        }
        match self.link {
            Link::Linear => acc,
            Link::Exponential => acc.exp(),
        }
    }

    /// Penalized negative log-likelihood.
    fn value(&self, theta: &[f64]) -> f64 {
        let xi = theta[1 + self.d];
        let mut penalty = 0.0;
        if xi <= -0.99 {
            penalty += 1.0 + (-0.99 - xi);
        }
        if xi >= 10.0 {
            penalty += 1.0 + (xi - 10.0);
        }
        match self.correction {
            CorrectionSpec::LinearConstraint => {
                for corner in [&self.corner_min, &self.corner_max] {
                    let s = self.sigma(theta, corner);
                    if s <= 0.0 {
                        penalty += 1.0 - s;
                    }
                }
            }
            CorrectionSpec::BoxConstraint { lo, hi } => {
                for j in 0..self.d {
                    let sd = if self.sds[j] > 0.0 { self.sds[j] } else { 1.0 };
                    let raw = theta[1 + j] / sd;
                    if raw <= lo {
                        penalty += 1.0 + (lo - raw);
                    }
                    if raw >= hi {
                        penalty += 1.0 + (raw - hi);
                    }
                }
            }
            _ => {}
        }
        if penalty > 0.0 {
            return 1e10 * penalty;
        }
        let mut nll = 0.0;
        for (i, &y) in self.excesses.iter().enumerate() {
            let row = self.std_rows.get(i).map_or(&[][..], |r| r.as_slice());
            let s = self.sigma(theta, row);
            if !(s > 0.0) {
                return 1e10 * (1.0 - s.min(0.0));
            }
            if xi.abs() <= XI_SWITCH {
                nll += s.ln() + y / s;
            } else {
                let z = xi * y / s;
                if z <= -1.0 {
                    return 1e10 * (1.0 + (-1.0 - z));
                }
                nll += s.ln() + (1.0 + 1.0 / xi) * z.ln_1p();
            }
        }
        nll
    }

    /// Unpenalized negative log-likelihood, +inf outside the feasible region.
    fn pure(&self, theta: &[f64]) -> f64 {
        let v = self.value(theta);
        if v >= 1e9 {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Fit a GPD to the excesses of the empirical q-quantile of `sample`, with an
/// optional covariate-dependent scale. `covariates`, when given, is row-aligned
/// with `sample`.
pub fn fit_gpd(sample: &[f64], covariates: Option<&[Vec<f64>]>, cfg: &FitConfig) -> Result<GpdFit> {
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("sample contains non-finite values".into()));
    }
    if let Some(rows) = covariates {
        if rows.len() != sample.len() {
            return Err(Error::Input("covariates must be row-aligned with the sample".into()));
        }
        if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Input("covariates contain non-finite values".into()));
        }
    }
    let (u, _) = threshold_at(sample, cfg.q)?;

    let mut excesses = Vec::new();
    let mut exceed_rows: Vec<Vec<f64>> = Vec::new();
    for (i, &x) in sample.iter().enumerate() {
        if x > u {
            excesses.push(x - u);
            if let Some(rows) = covariates {
                exceed_rows.push(rows[i].clone());
            }
        }
    }
    fit_excesses_impl(u, cfg.q, excesses, exceed_rows, covariates.unwrap_or(&[]), cfg)
}

/// Fit a GPD directly to already-thresholded excesses (threshold treated as
/// zero). `covariates`, when given, is row-aligned with the excesses and also
/// supplies the constraint corners.
pub fn fit_gpd_to_excesses(
    excesses: &[f64],
    covariates: Option<&[Vec<f64>]>,
    link: Link,
    correction: CorrectionSpec,
) -> Result<GpdFit> {
    if excesses.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Input("excesses must be finite and strictly positive".into()));
    }
    if let Some(rows) = covariates {
        if rows.len() != excesses.len() {
            return Err(Error::Input("covariates must be row-aligned with the excesses".into()));
        }
    }
    let cfg = FitConfig { q: 0.0, link, correction };
    fit_excesses_impl(
        0.0,
        0.0,
        excesses.to_vec(),
        covariates.map(|r| r.to_vec()).unwrap_or_default(),
        covariates.unwrap_or(&[]),
        &cfg,
    )
}

fn fit_excesses_impl(
    u: f64,
    q: f64,
    excesses: Vec<f64>,
    exceed_rows: Vec<Vec<f64>>,
    all_rows: &[Vec<f64>],
    cfg: &FitConfig,
) -> Result<GpdFit> {
    let n_exceed = excesses.len();
    if n_exceed < MIN_EXCEEDANCES {
        return Err(Error::Input(format!(
            "only {n_exceed} exceedances above u = {u}; at least {MIN_EXCEEDANCES} required"
        )));
    }

    // Standardize over all rows; drop zero-variance columns from the model.
    let std_full = if all_rows.is_empty() {
        Standardization { means: Vec::new(), sds: Vec::new() }
    } else {
        Standardization::from_rows(all_rows)
    };
    let kept: Vec<usize> = (0..std_full.means.len()).filter(|&j| std_full.sds[j] > 0.0).collect();
    let d = kept.len();
    let project = |row: &[f64]| -> Vec<f64> {
        kept.iter().map(|&j| (row[j] - std_full.means[j]) / std_full.sds[j]).collect()
    };
    let std_rows: Vec<Vec<f64>> = exceed_rows.iter().map(|r| project(r)).collect();
    let (corner_min, corner_max) = if d > 0 {
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for r in all_rows {
            let z = project(r);
            for j in 0..d {
                lo[j] = lo[j].min(z[j]);
                hi[j] = hi[j].max(z[j]);
            }
        }
        (lo, hi)
    } else {
        (Vec::new(), Vec::new())
    };

    // Moment-based initialization on the excesses.
    let mean_y = stats::mean(&excesses);
    let var_y = stats::variance(&excesses);
    let xi0 = if var_y > 0.0 {
        (0.5 * (1.0 - mean_y * mean_y / var_y)).clamp(-0.3, 0.7)
    } else {
        return Err(Error::Fit("degenerate excesses: zero variance".into()));
    };
    let sigma0 = (mean_y * (1.0 - xi0)).max(1e-8 * mean_y);
    let kept_sds: Vec<f64> = kept.iter().map(|&j| std_full.sds[j]).collect();

    let obj = Objective {
        excesses: &excesses,
        std_rows,
        link: cfg.link,
        d,
        corner_min,
        corner_max,
        correction: cfg.correction,
        sds: kept_sds.clone(),
    };

    let mut theta0 = Vec::with_capacity(d + 2);
    let mut steps = Vec::with_capacity(d + 2);
    match cfg.link {
        Link::Linear => {
            theta0.push(sigma0);
            steps.push(0.5 * sigma0);
            for _ in 0..d {
                theta0.push(0.0);
                steps.push(0.1 * sigma0);
            }
        }
        Link::Exponential => {
            theta0.push(sigma0.ln());
            steps.push(0.5);
            for _ in 0..d {
                theta0.push(0.0);
                steps.push(0.1);
            }
        }
    }
    theta0.push(xi0);
    steps.push(0.15);

    let mut opts = NelderMeadOptions::with_steps(steps);
    opts.max_iter = 4000;
    opts.f_tol = 1e-9;
    opts.x_tol = 1e-8;
    opts.restarts = 2;
    let result = minimize(|t| obj.value(t), &theta0, &opts);

    let theta = result.x;
    let feasible = obj.value(&theta) < 1e9;
    if !feasible {
        return Err(Error::Fit("optimizer could not reach the feasible region".into()));
    }
    let converged = result.converged;
    let xi = theta[1 + d];
    let loglik = -obj.pure(&theta);

    // Boundary check for the explicitly constrained modes.
    let on_boundary = match cfg.correction {
        CorrectionSpec::LinearConstraint => {
            let smin = obj.sigma(&theta, &obj.corner_min);
            let smax = obj.sigma(&theta, &obj.corner_max);
            smin.min(smax) < 1e-3 * theta[0].abs().max(1e-6)
        }
        CorrectionSpec::BoxConstraint { lo, hi } => (0..d).any(|j| {
            let sd = if kept_sds[j] > 0.0 { kept_sds[j] } else { 1.0 };
            let raw = theta[1 + j] / sd;
            let width = if (hi - lo).is_finite() { hi - lo } else { 1.0 };
            (raw - lo).abs() < 1e-6 * width || (hi - raw).abs() < 1e-6 * width
        }),
        _ => false,
    };

    let (cov, se) = if on_boundary {
        (None, None)
    } else {
        match observed_information_inverse(|t| obj.pure(t), &theta) {
            Some(c) => {
                let se: Vec<f64> = (0..c.len()).map(|i| c[i][i].sqrt()).collect();
                (Some(c), Some(se))
            }
            None => (None, None),
        }
    };

    let epsilon = match cfg.correction {
        CorrectionSpec::PostFit { epsilon } => {
            Some(epsilon.unwrap_or(1e-6 * stats::median(&excesses)))
        }
        _ => None,
    };
    let correction = match cfg.correction {
        CorrectionSpec::None => Correction::None,
        CorrectionSpec::PostFit { .. } => Correction::PostFit { epsilon: epsilon.unwrap() },
        CorrectionSpec::LinearConstraint => Correction::LinearConstraint,
        CorrectionSpec::BoxConstraint { lo, hi } => Correction::BoxConstraint { lo, hi },
    };

    // Re-embed slopes for dropped (zero-variance) columns as zeros.
    let full_d = std_full.means.len();
    let mut slopes = vec![0.0; full_d];
    for (pos, &j) in kept.iter().enumerate() {
        slopes[j] = theta[1 + pos];
    }

    Ok(GpdFit {
        threshold: u,
        q,
        scale: ScaleModel {
            link: cfg.link,
            intercept: theta[0],
            slopes,
            correction,
            standardization: std_full,
        },
        xi,
        n_exceed,
        loglik,
        cov,
        se,
        converged,
    })
}

/// Inverse of the finite-difference observed information (Hessian of the
/// negative log-likelihood) at `theta`. None when the Hessian is not usable.
fn observed_information_inverse<F: Fn(&[f64]) -> f64>(nll: F, theta: &[f64]) -> Option<Vec<Vec<f64>>> {
    let p = theta.len();
    let h: Vec<f64> = theta.iter().map(|t| 1e-3 * (1.0 + t.abs())).collect();
    let f0 = nll(theta);
    if !f0.is_finite() {
        return None;
    }
    let mut hess = vec![vec![0.0; p]; p];
    let eval = |x: &[f64]| nll(x);
    for i in 0..p {
        let mut xp = theta.to_vec();
        let mut xm = theta.to_vec();
        xp[i] += h[i];
        xm[i] -= h[i];
        let (fp, fm) = (eval(&xp), eval(&xm));
        if !fp.is_finite() || !fm.is_finite() {
            return None;
        }
        hess[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in (i + 1)..p {
            let mut xpp = theta.to_vec();
            let mut xpm = theta.to_vec();
            let mut xmp = theta.to_vec();
            let mut xmm = theta.to_vec();
            xpp[i] += h[i];
            xpp[j] += h[j];
            xpm[i] += h[i];
            xpm[j] -= h[j];
            xmp[i] -= h[i];
            xmp[j] += h[j];
            xmm[i] -= h[i];
            xmm[j] -= h[j];
            let (a, b, c, d) = (eval(&xpp), eval(&xpm), eval(&xmp), eval(&xmm));
            if ![a, b, c, d].iter().all(|v| v.is_finite()) {
                return None;
            }
            let v = (a - b - c + d) / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    let inv = invert(&hess)?;
    if (0..p).any(|i| !(inv[i][i] > 0.0) || !inv[i][i].is_finite()) {
        return None;
    }
    Some(inv)
}

/// Gauss-Jordan inverse with partial pivoting; fine for the tiny matrices here.
fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[pivot][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col];
        for j in 0..n {
            m[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..n {
            if i != col {
                let f = m[i][col];
                for j in 0..n {
                    m[i][j] -= f * m[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    Some(inv)
}

/// Empirical distribution below the threshold spliced with a (possibly
/// covariate-conditional) GPD tail above it.
#[derive(Debug, Clone)]
pub struct HybridCdf {
    sorted: Vec<f64>,
    fit: GpdFit,
}

impl HybridCdf {
    pub fn new(sample: &[f64], fit: GpdFit) -> Self {
        let mut sorted = sample.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        HybridCdf { sorted, fit }
    }

    pub fn fit(&self) -> &GpdFit {
        &self.fit
    }

    /// F̂(x): empirical at or below the threshold, q + (1−q)·G(x−u) above.
    pub fn value(&self, x: f64, covariate_row: Option<&[f64]>) -> Result<f64> {
        if self.fit.scale.has_covariates() && covariate_row.is_none() {
            return Err(Error::Input("hybrid CDF with covariate slopes needs a covariate row".into()));
        }
        let u = self.fit.threshold;
        if x <= u {
            let le = self.sorted.partition_point(|&v| v <= x);
            return Ok(le as f64 / self.sorted.len() as f64);
        }
        let params = self.fit.params_at(covariate_row)?;
        let g = gpd_cdf(x - u, &params)?;
        Ok(self.fit.q + (1.0 - self.fit.q) * g)
    }
}

/// Threshold, fit and splice in one step.
pub fn fit_hybrid(sample: &[f64], covariates: Option<&[Vec<f64>]>, cfg: &FitConfig) -> Result<HybridCdf> {
    let fit = fit_gpd(sample, covariates, cfg)?;
    Ok(HybridCdf::new(sample, fit))
}

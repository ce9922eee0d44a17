//! Causal tail coefficient estimators: the rank-based non-parametric form,
//! the GPD form built on unconditional hybrid margins, and the H-conditional
//! LGPD form with covariate-dependent scales, plus the symmetric variant and
//! the difference statistic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evt::{fit_hybrid, CorrectionSpec, FitConfig, HybridCdf, Link};
use crate::stats;

/// Aligned observations of (X1, X2) and an optional confounder matrix H
/// (n rows, d columns).
#[derive(Debug, Clone)]
pub struct PairedSample {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub h: Option<Vec<Vec<f64>>>,
}

impl PairedSample {
    pub fn new(x1: Vec<f64>, x2: Vec<f64>, h: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if x1.len() != x2.len() || x1.len() < 2 {
            return Err(Error::Input("paired sample needs equal-length columns of size >= 2".into()));
        }
        if x1.iter().chain(&x2).any(|v| !v.is_finite()) {
            return Err(Error::Input("paired sample contains non-finite values".into()));
        }
        if let Some(rows) = &h {
            if rows.len() != x1.len() {
                return Err(Error::Input("confounder matrix must be row-aligned with the pair".into()));
            }
            let d = rows.first().map_or(0, |r| r.len());
            if rows.iter().any(|r| r.len() != d) {
                return Err(Error::Input("confounder rows have inconsistent widths".into()));
            }
            if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
                return Err(Error::Input("confounder matrix contains non-finite values".into()));
            }
        }
        Ok(PairedSample { x1, x2, h })
    }

    pub fn n(&self) -> usize {
        self.x1.len()
    }

    /// Same sample with the roles of x1 and x2 exchanged.
    pub fn swapped(&self) -> PairedSample {
        PairedSample { x1: self.x2.clone(), x2: self.x1.clone(), h: self.h.clone() }
    }
}

/// Rule for the number of tail observations k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum KRule {
    Fixed { k: usize },
    /// k = ⌊c · ⌊n^exponent⌋⌋.
    Power { c: f64, exponent: f64 },
}

impl KRule {
    /// The common choice c·⌊n^0.4⌋.
    pub fn power(c: f64) -> Self {
        KRule::Power { c, exponent: 0.4 }
    }

    pub fn resolve(&self, n: usize) -> Result<usize> {
        let k = match *self {
            KRule::Fixed { k } => k,
            KRule::Power { c, exponent } => (c * (n as f64).powf(exponent).floor()) as usize,
        };
        if k == 0 || k > n - 1 {
            return Err(Error::Input(format!("k = {k} out of range for n = {n}")));
        }
        Ok(k)
    }
}

/// Estimator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    NonParametric,
    Gpd,
    LgpdConditional,
}

/// Full estimator description: tail fraction rule, threshold quantile,
/// variant, and (for the parametric variants) link and correction mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub k: KRule,
    pub q: f64,
    pub variant: Variant,
    pub link: Link,
    pub correction: CorrectionSpec,
}

impl EstimatorConfig {
    pub fn nonparametric(k: KRule) -> Self {
        EstimatorConfig {
            k,
            q: 0.9,
            variant: Variant::NonParametric,
            link: Link::Linear,
            correction: CorrectionSpec::None,
        }
    }

    pub fn gpd(k: KRule, q: f64) -> Self {
        EstimatorConfig { k, q, variant: Variant::Gpd, link: Link::Linear, correction: CorrectionSpec::None }
    }

    pub fn lgpd(k: KRule, q: f64, correction: CorrectionSpec) -> Self {
        EstimatorConfig { k, q, variant: Variant::LgpdConditional, link: Link::Linear, correction }
    }

    pub fn lgpd_exponential(k: KRule, q: f64) -> Self {
        EstimatorConfig {
            k,
            q,
            variant: Variant::LgpdConditional,
            link: Link::Exponential,
            correction: CorrectionSpec::None,
        }
    }

    fn fit_config(&self) -> FitConfig {
        FitConfig { q: self.q, link: self.link, correction: self.correction }
    }
}

/// Non-parametric estimator: the mean empirical-CDF value of x2 over the k
/// rows where x1 exceeds its (n−k)-th order statistic. Ties at the boundary
/// are all included (the indicator is strict), so the realized row count may
/// exceed k; the sum is divided by k regardless.
pub fn gamma_np(x1: &[f64], x2: &[f64], k: usize) -> Result<f64> {
    Ok(gamma_np_with_count(x1, x2, k)?.0)
}

/// As [`gamma_np`], also reporting the realized number of contributing rows.
pub fn gamma_np_with_count(x1: &[f64], x2: &[f64], k: usize) -> Result<(f64, usize)> {
    let n = x1.len();
    if x2.len() != n {
        return Err(Error::Input("columns must have equal length".into()));
    }
    if k == 0 || k > n - 1 {
        return Err(Error::Input(format!("k = {k} out of range for n = {n}")));
    }
    let threshold = stats::order_statistic(x1, n - k);
    let f2 = stats::ecdf_values(x2);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &v) in x1.iter().enumerate() {
        if v > threshold {
            sum += f2[i];
            count += 1;
        }
    }
    Ok((sum / k as f64, count))
}

/// Symmetric coefficient Ψ̂: averages of ρ(F̂₂)/2 with ρ(x) = |2x−1| over the
/// top-k and bottom-k rows of x1.
pub fn psi_np(x1: &[f64], x2: &[f64], k: usize) -> Result<f64> {
    let n = x1.len();
    if x2.len() != n {
        return Err(Error::Input("columns must have equal length".into()));
    }
    if k == 0 || k > n - 1 {
        return Err(Error::Input(format!("k = {k} out of range for n = {n}")));
    }
    let upper = stats::order_statistic(x1, n - k);
    let lower = stats::order_statistic(x1, k + 1);
    let f2 = stats::ecdf_values(x2);
    let rho = |p: f64| (2.0 * p - 1.0).abs();
    let mut plus = 0.0;
    let mut minus = 0.0;
    for (i, &v) in x1.iter().enumerate() {
        if v > upper {
            plus += rho(f2[i]) / 2.0;
        }
        if v < lower {
            minus += rho(f2[i]) / 2.0;
        }
    }
    Ok(plus / k as f64 + minus / k as f64)
}

/// Δ = Γ₁₂ − Γ₂₁.
pub fn delta(gamma12: f64, gamma21: f64) -> f64 {
    gamma12 - gamma21
}

/// Fit the hybrid margin used by the parametric estimators. Covariates are
/// passed only for the conditional variant.
pub fn fit_margin(x: &[f64], h: Option<&[Vec<f64>]>, cfg: &EstimatorConfig) -> Result<HybridCdf> {
    fit_hybrid(x, h, &cfg.fit_config())
}

/// Γ̂ in the direction x1 → x2 evaluated on already-fitted margins: the mean
/// of F̂₂ over the rows where F̂₁ exceeds 1 − k/n, divided by the realized
/// count.
pub fn gamma_with_fits(
    s: &PairedSample,
    f1: &HybridCdf,
    f2: &HybridCdf,
    k: usize,
    conditional: bool,
) -> Result<(f64, usize)> {
    let n = s.n();
    if k == 0 || k > n - 1 {
        return Err(Error::Input(format!("k = {k} out of range for n = {n}")));
    }
    let cutoff = 1.0 - k as f64 / n as f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        let row = if conditional { s.h.as_ref().map(|rows| rows[i].as_slice()) } else { None };
        let u1 = f1.value(s.x1[i], row)?;
        if u1 > cutoff {
            sum += f2.value(s.x2[i], row)?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Fit("no observations selected by the fitted margin".into()));
    }
    Ok((sum / count as f64, count))
}

/// GPD causal tail coefficient (x1 → x2) with unconditional hybrid margins.
/// Returns the estimate and the realized tail count k_g.
pub fn gamma_gpd(s: &PairedSample, cfg: &EstimatorConfig) -> Result<(f64, usize)> {
    let k = cfg.k.resolve(s.n())?;
    let f1 = fit_margin(&s.x1, None, cfg)?;
    let f2 = fit_margin(&s.x2, None, cfg)?;
    gamma_with_fits(s, &f1, &f2, k, false)
}

/// H-conditional LGPD causal tail coefficient (x1 → x2): margins with
/// covariate-dependent scales, each observation evaluated under its own
/// covariate row. Returns the estimate and the realized tail count k_l.
pub fn gamma_lgpd(s: &PairedSample, cfg: &EstimatorConfig) -> Result<(f64, usize)> {
    let h = s
        .h
        .as_deref()
        .ok_or_else(|| Error::Input("LGPD estimator requires a confounder matrix".into()))?;
    let k = cfg.k.resolve(s.n())?;
    let f1 = fit_margin(&s.x1, Some(h), cfg)?;
    let f2 = fit_margin(&s.x2, Some(h), cfg)?;
    gamma_with_fits(s, &f1, &f2, k, true)
}

/// Both directions of the chosen estimator plus the difference statistic.
#[derive(Debug, Clone, Serialize)]
pub struct GammaEstimate {
    pub gamma12: f64,
    pub gamma21: f64,
    pub delta: f64,
    pub k12: usize,
    pub k21: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit1: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit2: Option<serde_json::Value>,
}

/// Estimate Γ̂₁₂, Γ̂₂₁ and Δ̂ under the configured variant, fitting each
/// margin once.
pub fn estimate(s: &PairedSample, cfg: &EstimatorConfig) -> Result<GammaEstimate> {
    let k = cfg.k.resolve(s.n())?;
    match cfg.variant {
        Variant::NonParametric => {
            let (g12, k12) = gamma_np_with_count(&s.x1, &s.x2, k)?;
            let (g21, k21) = gamma_np_with_count(&s.x2, &s.x1, k)?;
            Ok(GammaEstimate { gamma12: g12, gamma21: g21, delta: delta(g12, g21), k12, k21, fit1: None, fit2: None })
        }
        Variant::Gpd | Variant::LgpdConditional => {
            let conditional = cfg.variant == Variant::LgpdConditional;
            let h = if conditional {
                Some(
                    s.h.as_deref()
                        .ok_or_else(|| Error::Input("LGPD estimator requires a confounder matrix".into()))?,
                )
            } else {
                None
            };
            let f1 = fit_margin(&s.x1, h, cfg)?;
            let f2 = fit_margin(&s.x2, h, cfg)?;
            let (g12, k12) = gamma_with_fits(s, &f1, &f2, k, conditional)?;
            let swapped = s.swapped();
            let (g21, k21) = gamma_with_fits(&swapped, &f2, &f1, k, conditional)?;
            Ok(GammaEstimate {
                gamma12: g12,
                gamma21: g21,
                delta: delta(g12, g21),
                k12,
                k21,
                fit1: Some(f1.fit().summary_json()),
                fit2: Some(f2.fit().summary_json()),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SubstreamRng;

    fn comonotone(n: usize) -> (Vec<f64>, Vec<f64>) {
        let x1: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        (x1.clone(), x1)
    }

    #[test]
    fn gamma_np_rank_arithmetic() {
        let (x1, x2) = comonotone(100);
        let g = gamma_np(&x1, &x2, 10).unwrap();
        assert!((g - 0.955).abs() < 1e-12);
        let x2r: Vec<f64> = x1.iter().map(|v| -v).collect();
        let g = gamma_np(&x1, &x2r, 10).unwrap();
        assert!((g - 0.055).abs() < 1e-12);
    }

    #[test]
    fn gamma_np_independent_columns_near_half() {
        let base = SubstreamRng::new(17);
        let mut means = Vec::new();
        for rep in 0..50u64 {
            let mut r = base.substream(rep);
            let n = 10_000;
            let x1: Vec<f64> = (0..n).map(|_| r.next_uniform().powf(-0.5)).collect();
            let x2: Vec<f64> = (0..n).map(|_| r.next_uniform().powf(-0.5)).collect();
            let k = KRule::power(2.0).resolve(n).unwrap();
            means.push(gamma_np(&x1, &x2, k).unwrap());
        }
        let m = stats::mean(&means);
        assert!((m - 0.5).abs() < 0.05, "mean {m}");
    }

    #[test]
    fn gamma_np_invariant_under_monotone_transforms() {
        let base = SubstreamRng::new(23);
        let mut r = base.substream(0);
        let n = 500;
        let x1: Vec<f64> = (0..n).map(|_| r.next_uniform()).collect();
        let x2: Vec<f64> = (0..n).map(|_| r.next_uniform()).collect();
        let g = gamma_np(&x1, &x2, 25).unwrap();
        let e1: Vec<f64> = x1.iter().map(|v| v.exp()).collect();
        let c2: Vec<f64> = x2.iter().map(|v| v.powi(3)).collect();
        assert_eq!(g, gamma_np(&e1, &x2, 25).unwrap());
        assert_eq!(g, gamma_np(&x1, &c2, 25).unwrap());
        assert_eq!(g, gamma_np(&e1, &c2, 25).unwrap());
    }

    #[test]
    fn gamma_np_bounds_and_exact_count() {
        let (x1, x2) = comonotone(200);
        for k in [1, 5, 50, 199] {
            let (g, count) = gamma_np_with_count(&x1, &x2, k).unwrap();
            assert_eq!(count, k);
            let lower = (k as f64 + 1.0) / (2.0 * 200.0);
            assert!(g >= lower - 1e-12 && g <= 1.0 + 1e-12);
        }
        let x2r: Vec<f64> = x1.iter().map(|v| -v).collect();
        let (g, _) = gamma_np_with_count(&x1, &x2r, 10).unwrap();
        assert!((g - 11.0 / 400.0).abs() < 1e-12); // (k+1)/(2n) attained
    }

    #[test]
    fn gamma_np_k_out_of_range() {
        let (x1, x2) = comonotone(10);
        assert!(gamma_np(&x1, &x2, 0).is_err());
        assert!(gamma_np(&x1, &x2, 10).is_err());
    }

    #[test]
    fn delta_properties() {
        assert_eq!(delta(1.0, 0.75), 0.25);
        assert_eq!(delta(0.6, 0.6), 0.0);
        let base = SubstreamRng::new(31);
        let mut r = base.substream(0);
        let n = 300;
        let x1: Vec<f64> = (0..n).map(|_| r.next_uniform()).collect();
        let x2: Vec<f64> = (0..n).map(|_| r.next_uniform()).collect();
        let d = delta(gamma_np(&x1, &x2, 20).unwrap(), gamma_np(&x2, &x1, 20).unwrap());
        let d_swapped = delta(gamma_np(&x2, &x1, 20).unwrap(), gamma_np(&x1, &x2, 20).unwrap());
        assert_eq!(d, -d_swapped);
    }

    #[test]
    fn psi_np_rank_arithmetic_and_reversal_symmetry() {
        let (x1, x2) = comonotone(100);
        let expected: f64 = {
            let top: f64 = (91..=100).map(|r| (2.0 * r as f64 / 100.0 - 1.0_f64).abs()).sum();
            let bottom: f64 = (1..=10).map(|r| (2.0 * r as f64 / 100.0 - 1.0_f64).abs()).sum();
            top / 20.0 + bottom / 20.0
        };
        let psi = psi_np(&x1, &x2, 10).unwrap();
        assert!((psi - expected).abs() < 1e-12);
        // Antitone x2 gives the same value.
        let x2r: Vec<f64> = x1.iter().map(|v| -v).collect();
        let psi_r = psi_np(&x1, &x2r, 10).unwrap();
        assert!((psi - psi_r).abs() < 1e-12);
    }

    #[test]
    fn psi_np_independent_near_half() {
        let base = SubstreamRng::new(37);
        let mut vals = Vec::new();
        for rep in 0..30u64 {
            let mut r = base.substream(rep);
            let n = 10_000;
            // Student-like symmetric heavy tails via reciprocal uniforms with
            // random signs.
            let draw = |r: &mut SubstreamRng| {
                let mag = r.next_uniform().powf(-0.5);
                if r.next_bool() {
                    mag
                } else {
                    -mag
                }
            };
            let x1: Vec<f64> = (0..n).map(|_| draw(&mut r)).collect();
            let x2: Vec<f64> = (0..n).map(|_| draw(&mut r)).collect();
            let k = KRule::power(2.0).resolve(n).unwrap();
            vals.push(psi_np(&x1, &x2, k).unwrap());
        }
        let m = stats::mean(&vals);
        assert!((m - 0.5).abs() < 0.05, "mean {m}");
    }

    fn pareto_pair_config_a(n: usize, seed: u64) -> PairedSample {
        use crate::scm::{CausalConfiguration, ConfigLabel, NoiseSpec};
        let m = CausalConfiguration::standard(ConfigLabel::A)
            .to_lscm(
                NoiseSpec::Pareto { scale: 1.0, alpha: 2.0 },
                NoiseSpec::Pareto { scale: 1.0, alpha: 2.0 },
            )
            .unwrap();
        let sim = m.simulate(n, seed).unwrap();
        PairedSample::new(
            sim.column("x1").unwrap().to_vec(),
            sim.column("x2").unwrap().to_vec(),
            Some(sim.column("h").unwrap().iter().map(|&v| vec![v]).collect()),
        )
        .unwrap()
    }

    #[test]
    fn gamma_gpd_configuration_a_reference_values() {
        let cfg = EstimatorConfig::gpd(KRule::power(2.0), 0.9);
        let mut g12s = Vec::new();
        let mut g21s = Vec::new();
        for rep in 0..25 {
            let s = pareto_pair_config_a(10_000, 1000 + rep);
            let (g12, _) = gamma_gpd(&s, &cfg).unwrap();
            let (g21, _) = gamma_gpd(&s.swapped(), &cfg).unwrap();
            g12s.push(g12);
            g21s.push(g21);
        }
        let m12 = stats::mean(&g12s);
        let m21 = stats::mean(&g21s);
        assert!(m12 >= 0.95, "mean gamma12 {m12}");
        assert!((m21 - 0.75).abs() < 0.05, "mean gamma21 {m21}");
    }

    #[test]
    fn gamma_gpd_independent_near_half() {
        use crate::scm::{CausalConfiguration, ConfigLabel, NoiseSpec};
        let model = CausalConfiguration::standard(ConfigLabel::C)
            .to_lscm(
                NoiseSpec::Pareto { scale: 1.0, alpha: 2.0 },
                NoiseSpec::Pareto { scale: 1.0, alpha: 2.0 },
            )
            .unwrap();
        let cfg = EstimatorConfig::gpd(KRule::power(2.0), 0.9);
        let mut vals = Vec::new();
        for rep in 0..25 {
            let sim = model.simulate(10_000, 2000 + rep).unwrap();
            let s = PairedSample::new(
                sim.column("x1").unwrap().to_vec(),
                sim.column("x2").unwrap().to_vec(),
                None,
            )
            .unwrap();
            vals.push(gamma_gpd(&s, &cfg).unwrap().0);
        }
        let m = stats::mean(&vals);
        assert!((m - 0.5).abs() < 0.05, "mean {m}");
    }

    #[test]
    fn gamma_lgpd_zero_covariates_reduces_to_gpd() {
        let s = pareto_pair_config_a(5_000, 77);
        let zero_h: Vec<Vec<f64>> = vec![vec![0.0]; s.n()];
        let s_zero = PairedSample::new(s.x1.clone(), s.x2.clone(), Some(zero_h)).unwrap();
        let cfg_gpd = EstimatorConfig::gpd(KRule::power(2.0), 0.9);
        let cfg_lgpd = EstimatorConfig::lgpd(KRule::power(2.0), 0.9, CorrectionSpec::None);
        let (g_gpd, kg) = gamma_gpd(&s, &cfg_gpd).unwrap();
        let (g_lgpd, kl) = gamma_lgpd(&s_zero, &cfg_lgpd).unwrap();
        assert_eq!(g_gpd, g_lgpd);
        assert_eq!(kg, kl);
    }

    #[test]
    fn gamma_lgpd_unaffected_by_independent_covariate() {
        // Configuration A with an independent H column: conditional and
        // unconditional estimates agree closely on average.
        let cfg_gpd = EstimatorConfig::gpd(KRule::power(2.0), 0.9);
        let cfg_lgpd = EstimatorConfig::lgpd(KRule::power(2.0), 0.9, CorrectionSpec::PostFit { epsilon: None });
        let mut diffs = Vec::new();
        for rep in 0..20 {
            let s = pareto_pair_config_a(10_000, 3000 + rep);
            let (g, _) = gamma_gpd(&s, &cfg_gpd).unwrap();
            let (gl, _) = gamma_lgpd(&s, &cfg_lgpd).unwrap();
            diffs.push(gl - g);
        }
        let m = stats::mean(&diffs);
        assert!(m.abs() <= 0.02, "mean difference {m}");
    }

    #[test]
    fn gamma_lgpd_requires_covariates() {
        let s = PairedSample::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], None).unwrap();
        let cfg = EstimatorConfig::lgpd(KRule::Fixed { k: 1 }, 0.9, CorrectionSpec::None);
        assert!(matches!(gamma_lgpd(&s, &cfg), Err(Error::Input(_))));
    }
}

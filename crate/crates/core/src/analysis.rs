//! Fringe statistics: visibility, its propagated error, normalization and
//! per-condition summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coincidence::{FringeDataset, Pairing};
use crate::rng;

/// Minimum number of angle points for extremum extraction.
pub const MIN_POINTS: usize = 8;
/// Fringe period in the analyzer angle `2θ_B`, degrees.
pub const FRINGE_PERIOD_DEG: f64 = 180.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("visibility is undefined for c_max = c_min = 0")]
    Undefined,
    #[error("c_min ({c_min}) exceeds c_max ({c_max})")]
    ArgumentOrder { c_max: f64, c_min: f64 },
    #[error("invalid count or sigma: {0}")]
    InvalidInput(String),
    #[error("fringe coverage is insufficient: {0}")]
    Coverage(String),
    #[error("cosine fit is singular for the given angles")]
    SingularFit,
    #[error("fringe is identically zero; cannot normalize")]
    ZeroFringe,
    #[error("no dataset for Alice setting 2θ_A = {two_theta_a_deg}°")]
    MissingSetting { two_theta_a_deg: f64 },
    #[error("unexpected Alice setting 2θ_A = {two_theta_a_deg}°")]
    UnexpectedSetting { two_theta_a_deg: f64 },
    #[error("sigma source `repeats` needs at least two datasets per setting")]
    TooFewRepeats,
    #[error("no datasets given")]
    Empty,
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

/// `V = (c_max − c_min)/(c_max + c_min)`.
pub fn visibility(c_max: f64, c_min: f64) -> Result<f64> {
    check_extrema(c_max, c_min)?;
    Ok((c_max - c_min) / (c_max + c_min))
}

fn check_extrema(c_max: f64, c_min: f64) -> Result<()> {
    if !(c_max.is_finite() && c_min.is_finite()) || c_min < 0.0 {
        return Err(AnalysisError::InvalidInput(format!(
            "c_max={c_max}, c_min={c_min}"
        )));
    }
    if c_min > c_max {
        return Err(AnalysisError::ArgumentOrder { c_max, c_min });
    }
    if c_max == 0.0 {
        return Err(AnalysisError::Undefined);
    }
    Ok(())
}

/// First-order error of `V` from the errors of independent extrema.
pub fn visibility_error(c_max: f64, c_min: f64, sigma_max: f64, sigma_min: f64) -> Result<f64> {
    visibility_error_correlated(c_max, c_min, sigma_max, sigma_min, 0.0)
}

/// [`visibility_error`] for extrema with covariance `cov_max_min`, as the two
/// ends of one fitted cosine are.
pub fn visibility_error_correlated(
    c_max: f64,
    c_min: f64,
    sigma_max: f64,
    sigma_min: f64,
    cov_max_min: f64,
) -> Result<f64> {
    check_extrema(c_max, c_min)?;
    if !(sigma_max >= 0.0 && sigma_min >= 0.0 && sigma_max.is_finite() && sigma_min.is_finite()) {
        return Err(AnalysisError::InvalidInput(format!(
            "sigma_max={sigma_max}, sigma_min={sigma_min}"
        )));
    }
    let s = c_max + c_min;
    let d_max = 2.0 * c_min / (s * s);
    let d_min = -2.0 * c_max / (s * s);
    if !cov_max_min.is_finite() {
        return Err(AnalysisError::InvalidInput(format!(
            "cov_max_min={cov_max_min}"
        )));
    }
    let var = (d_max * sigma_max).powi(2)
        + (d_min * sigma_min).powi(2)
        + 2.0 * d_max * d_min * cov_max_min;
    Ok(var.max(0.0).sqrt())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremaMethod {
    /// Largest and smallest sample, Poisson errors.
    #[default]
    Pointwise,
    /// Fixed-period cosine fit, errors from the fit covariance.
    CosineFit,
}

impl ExtremaMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtremaMethod::Pointwise => "pointwise",
            ExtremaMethod::CosineFit => "cosine_fit",
        }
    }
}

impl fmt::Display for ExtremaMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExtremaMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pointwise" => Ok(ExtremaMethod::Pointwise),
            "cosine_fit" => Ok(ExtremaMethod::CosineFit),
            other => Err(format!(
                "unknown method `{other}` (expected pointwise or cosine_fit)"
            )),
        }
    }
}

/// Definition of the average fringe amplitude.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeDef {
    /// Mean of `c_max − c_min`.
    #[default]
    PeakToPeak,
    /// Mean of `c_max`.
    MeanMax,
}

/// Where `σ_max`, `σ_min` come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSource {
    /// Whatever the extraction method provides: `√c` for pointwise, covariance for the fit.
    #[default]
    Method,
    /// Shot noise `√c` of the extracted extrema.
    Poisson,
    /// Sample standard deviation of the extrema over repeated datasets.
    Repeats,
    /// Poisson covariance of the cosine fit.
    Fit,
}

/// Fixed-period fit `offset + amplitude·cos(2·(2θ_B) − phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub amplitude: f64,
    pub offset: f64,
    pub phase: f64,
    pub residual_rms: f64,
    pub sigma_amplitude: f64,
    pub sigma_offset: f64,
    /// Covariance of offset and amplitude.
    pub cov_offset_amplitude: f64,
}

impl FitResult {
    pub fn evaluate(&self, two_theta_b_deg: f64) -> f64 {
        self.offset + self.amplitude * (2.0 * two_theta_b_deg.to_radians() - self.phase).cos()
    }
}

/// Linear least squares on `[1, cos 2x, sin 2x]` with `x = 2θ_B`.
pub fn cosine_fit(two_theta_b_deg: &[f64], counts: &[f64]) -> Result<FitResult> {
    if two_theta_b_deg.len() != counts.len() || counts.len() < 3 {
        return Err(AnalysisError::Coverage(format!("{} points", counts.len())));
    }
    let rows: Vec<Vector3<f64>> = two_theta_b_deg
        .iter()
        .map(|d| {
            let x = 2.0 * d.to_radians();
            Vector3::new(1.0, x.cos(), x.sin())
        })
        .collect();
    let mut xtx = Matrix3::zeros();
    let mut xty = Vector3::zeros();
    for (r, y) in rows.iter().zip(counts) {
        xtx += r * r.transpose();
        xty += r * *y;
    }
    let inv = xtx.try_inverse().ok_or(AnalysisError::SingularFit)?;
    let beta = inv * xty;
    let rss: f64 = rows
        .iter()
        .zip(counts)
        .map(|(r, y)| (y - r.dot(&beta)).powi(2))
        .sum();
    let n = counts.len() as f64;
    // Counts are Poisson, so each point's variance is its own count; the
    // sandwich form keeps that heteroscedasticity instead of pooling residuals.
    let mut meat = Matrix3::zeros();
    for (r, y) in rows.iter().zip(counts) {
        meat += r * r.transpose() * y.max(0.0);
    }
    let cov = inv * meat * inv;
    let amplitude = beta[1].hypot(beta[2]);
    let (var_a, cov_oa) = if amplitude > 0.0 {
        let g = Vector3::new(0.0, beta[1] / amplitude, beta[2] / amplitude);
        (g.dot(&(cov * g)), (cov * g)[0])
    } else {
        (0.5 * (cov[(1, 1)] + cov[(2, 2)]), 0.0)
    };
    Ok(FitResult {
        amplitude,
        offset: beta[0],
        phase: beta[2].atan2(beta[1]),
        residual_rms: (rss / n).sqrt(),
        sigma_amplitude: var_a.max(0.0).sqrt(),
        sigma_offset: cov[(0, 0)].max(0.0).sqrt(),
        cov_offset_amplitude: cov_oa,
    })
}

/// Extracted extrema of one fringe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrema {
    pub c_max: f64,
    pub c_min: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// Zero for sample extrema; `var(offset) − var(amplitude)` for a fit.
    pub cov_max_min: f64,
    /// Sample positions of the pointwise extrema.
    pub argmax: usize,
    pub argmin: usize,
    pub fit: Option<FitResult>,
}

impl Extrema {
    pub fn visibility(&self) -> Result<f64> {
        visibility(self.c_max, self.c_min)
    }

    pub fn sigma_v(&self) -> Result<f64> {
        visibility_error_correlated(
            self.c_max,
            self.c_min,
            self.sigma_max,
            self.sigma_min,
            self.cov_max_min,
        )
    }
}

fn check_coverage(two_theta_b_deg: &[f64], counts: &[f64]) -> Result<()> {
    if two_theta_b_deg.len() != counts.len() {
        return Err(AnalysisError::Coverage(
            "angle and count lengths differ".into(),
        ));
    }
    if counts.len() < MIN_POINTS {
        return Err(AnalysisError::Coverage(format!(
            "{} points, need at least {MIN_POINTS}",
            counts.len()
        )));
    }
    let lo = two_theta_b_deg
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = two_theta_b_deg
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if (hi - lo).is_nan() || hi - lo < FRINGE_PERIOD_DEG - 1e-9 {
        return Err(AnalysisError::Coverage(format!(
            "2θ_B spans {}°, need {FRINGE_PERIOD_DEG}°",
            hi - lo
        )));
    }
    if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(AnalysisError::InvalidInput(
            "negative or non-finite count".into(),
        ));
    }
    Ok(())
}

/// Extrema of a fringe given as raw arrays.
pub fn extrema_of(
    two_theta_b_deg: &[f64],
    counts: &[f64],
    method: ExtremaMethod,
) -> Result<Extrema> {
    check_coverage(two_theta_b_deg, counts)?;
    let argmax =
        (0..counts.len()).fold(0, |best, i| if counts[i] > counts[best] { i } else { best });
    let argmin =
        (0..counts.len()).fold(0, |best, i| if counts[i] < counts[best] { i } else { best });
    match method {
        ExtremaMethod::Pointwise => Ok(Extrema {
            c_max: counts[argmax],
            c_min: counts[argmin],
            sigma_max: counts[argmax].sqrt(),
            sigma_min: counts[argmin].sqrt(),
            cov_max_min: if argmax == argmin {
                counts[argmax]
            } else {
                0.0
            },
            argmax,
            argmin,
            fit: None,
        }),
        ExtremaMethod::CosineFit => {
            let fit = cosine_fit(two_theta_b_deg, counts)?;
            let var_max = fit.sigma_offset.powi(2)
                + fit.sigma_amplitude.powi(2)
                + 2.0 * fit.cov_offset_amplitude;
            let var_min = fit.sigma_offset.powi(2) + fit.sigma_amplitude.powi(2)
                - 2.0 * fit.cov_offset_amplitude;
            Ok(Extrema {
                c_max: (fit.offset + fit.amplitude).max(0.0),
                c_min: (fit.offset - fit.amplitude).max(0.0),
                sigma_max: var_max.max(0.0).sqrt(),
                sigma_min: var_min.max(0.0).sqrt(),
                cov_max_min: fit.sigma_offset.powi(2) - fit.sigma_amplitude.powi(2),
                argmax,
                argmin,
                fit: Some(fit),
            })
        }
    }
}

pub fn extract_extrema(
    dataset: &FringeDataset,
    pairing: Pairing,
    method: ExtremaMethod,
) -> Result<Extrema> {
    extrema_of(&dataset.two_theta_b_deg(), &dataset.fringe(pairing), method)
}

/// Statistics of one fringe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityReport {
    pub condition: String,
    pub two_theta_a_deg: f64,
    pub theta_a_rad: f64,
    pub pairing: Pairing,
    pub method: ExtremaMethod,
    pub c_max: f64,
    pub c_min: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub cov_max_min: f64,
    pub visibility: f64,
    pub sigma_v: f64,
    /// Largest raw count of the fringe.
    pub normalization_factor: f64,
    /// `c_max − c_min`.
    pub average_amplitude: f64,
    /// Number of datasets merged into this report.
    pub repeats: usize,
}

impl VisibilityReport {
    fn from_extrema(
        condition: &str,
        two_theta_a_deg: f64,
        pairing: Pairing,
        method: ExtremaMethod,
        e: &Extrema,
        normalization_factor: f64,
    ) -> Result<Self> {
        Ok(Self {
            condition: condition.to_string(),
            two_theta_a_deg,
            theta_a_rad: (two_theta_a_deg / 2.0).to_radians(),
            pairing,
            method,
            c_max: e.c_max,
            c_min: e.c_min,
            sigma_max: e.sigma_max,
            sigma_min: e.sigma_min,
            cov_max_min: e.cov_max_min,
            visibility: e.visibility()?,
            sigma_v: e.sigma_v()?,
            normalization_factor,
            average_amplitude: e.c_max - e.c_min,
            repeats: 1,
        })
    }
}

/// Report of one fringe of one dataset.
pub fn analyze_fringe(
    dataset: &FringeDataset,
    pairing: Pairing,
    method: ExtremaMethod,
) -> Result<VisibilityReport> {
    let e = extract_extrema(dataset, pairing, method)?;
    let counts = dataset.fringe(pairing);
    let factor = counts.iter().copied().fold(0.0, f64::max);
    VisibilityReport::from_extrema(
        &dataset.metadata.condition,
        dataset.metadata.two_theta_a_deg,
        pairing,
        method,
        &e,
        factor,
    )
}

/// A fringe divided by its own maximum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedFringe {
    pub two_theta_a_deg: f64,
    pub pairing: Pairing,
    pub two_theta_b_deg: Vec<f64>,
    pub values: Vec<f64>,
    pub normalization_factor: f64,
}

pub fn normalize_counts(counts: &[f64]) -> Result<(Vec<f64>, f64)> {
    let max = counts.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return Err(AnalysisError::ZeroFringe);
    }
    Ok((counts.iter().map(|c| c / max).collect(), max))
}

/// Normalize the reported fringes of every dataset, one factor per (Alice setting, pairing).
pub fn normalize(datasets: &[FringeDataset]) -> Result<Vec<NormalizedFringe>> {
    if datasets.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut out = Vec::with_capacity(2 * datasets.len());
    for ds in datasets {
        for pairing in Pairing::REPORTED {
            let (values, factor) = normalize_counts(&ds.fringe(pairing))?;
            out.push(NormalizedFringe {
                two_theta_a_deg: ds.metadata.two_theta_a_deg,
                pairing,
                two_theta_b_deg: ds.two_theta_b_deg(),
                values,
                normalization_factor: factor,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub method: ExtremaMethod,
    pub amplitude: AmplitudeDef,
    pub sigma_source: SigmaSource,
    /// Alice settings `2θ_A` that must all be present, degrees.
    pub required_two_theta_a_deg: Vec<f64>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            method: ExtremaMethod::Pointwise,
            amplitude: AmplitudeDef::PeakToPeak,
            sigma_source: SigmaSource::Method,
            required_two_theta_a_deg: vec![0.0, 45.0],
        }
    }
}

/// Averages over the four fringes of one condition, in table order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub condition_label: String,
    pub normalization_factor: f64,
    pub avg_amplitude: f64,
    pub avg_visibility: f64,
    pub avg_sigma_v: f64,
    pub method: ExtremaMethod,
}

impl Summary {
    pub const COLUMNS: [&'static str; 6] = [
        "condition_label",
        "normalization_factor",
        "avg_amplitude",
        "avg_visibility",
        "avg_sigma_v",
        "method",
    ];
}

/// Per-fringe reports plus the condition summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionAnalysis {
    pub reports: Vec<VisibilityReport>,
    pub summary: Summary,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs.iter().copied());
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

fn sample_cov(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs.iter().copied()), mean(ys.iter().copied()));
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (xs.len() as f64 - 1.0)
}

/// Order-independent key of an Alice angle.
fn angle_key(deg: f64) -> i64 {
    (deg * 1e6).round() as i64
}

/// Analyze one condition. Datasets sharing an Alice setting are treated as repeats.
pub fn summarize(datasets: &[FringeDataset], opts: &AnalysisOptions) -> Result<ConditionAnalysis> {
    if datasets.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut groups: BTreeMap<i64, Vec<&FringeDataset>> = BTreeMap::new();
    for ds in datasets {
        let angle = ds.metadata.two_theta_a_deg;
        if !opts
            .required_two_theta_a_deg
            .iter()
            .any(|r| angle_key(*r) == angle_key(angle))
        {
            return Err(AnalysisError::UnexpectedSetting {
                two_theta_a_deg: angle,
            });
        }
        groups.entry(angle_key(angle)).or_default().push(ds);
    }
    for r in &opts.required_two_theta_a_deg {
        if !groups.contains_key(&angle_key(*r)) {
            return Err(AnalysisError::MissingSetting {
                two_theta_a_deg: *r,
            });
        }
    }
    // Inputs that differ only in order must give identical output.
    for group in groups.values_mut() {
        group.sort_by(|a, b| {
            a.metadata
                .first_index
                .cmp(&b.metadata.first_index)
                .then_with(|| {
                    let key = |d: &FringeDataset| {
                        d.points
                            .iter()
                            .flat_map(|p| p.coincidences)
                            .map(f64::to_bits)
                            .collect::<Vec<_>>()
                    };
                    key(a).cmp(&key(b))
                })
        });
    }

    let condition = {
        let mut labels: Vec<&str> = datasets
            .iter()
            .map(|d| d.metadata.condition.as_str())
            .collect();
        labels.sort_unstable();
        labels.dedup();
        labels.join("+")
    };

    let mut reports = Vec::new();
    for group in groups.values() {
        if opts.sigma_source == SigmaSource::Repeats && group.len() < 2 {
            return Err(AnalysisError::TooFewRepeats);
        }
        for pairing in Pairing::REPORTED {
            let mut per_repeat = Vec::with_capacity(group.len());
            for ds in group {
                let mut e = extract_extrema(ds, pairing, opts.method)?;
                match opts.sigma_source {
                    SigmaSource::Poisson => {
                        e.sigma_max = e.c_max.sqrt();
                        e.sigma_min = e.c_min.sqrt();
                        e.cov_max_min = 0.0;
                    }
                    SigmaSource::Fit if opts.method == ExtremaMethod::Pointwise => {
                        let fitted = extract_extrema(ds, pairing, ExtremaMethod::CosineFit)?;
                        e.sigma_max = fitted.sigma_max;
                        e.sigma_min = fitted.sigma_min;
                        e.cov_max_min = fitted.cov_max_min;
                    }
                    _ => {}
                }
                let factor = ds.fringe(pairing).iter().copied().fold(0.0, f64::max);
                per_repeat.push((e, factor));
            }
            let n = per_repeat.len();
            let maxes: Vec<f64> = per_repeat.iter().map(|(e, _)| e.c_max).collect();
            let mins: Vec<f64> = per_repeat.iter().map(|(e, _)| e.c_min).collect();
            let (sigma_max, sigma_min, cov_max_min) = if opts.sigma_source == SigmaSource::Repeats {
                (
                    sample_std(&maxes),
                    sample_std(&mins),
                    sample_cov(&maxes, &mins),
                )
            } else {
                (
                    mean(per_repeat.iter().map(|(e, _)| e.sigma_max)),
                    mean(per_repeat.iter().map(|(e, _)| e.sigma_min)),
                    mean(per_repeat.iter().map(|(e, _)| e.cov_max_min)),
                )
            };
            let merged = Extrema {
                c_max: mean(maxes.iter().copied()),
                c_min: mean(mins.iter().copied()),
                sigma_max,
                sigma_min,
                cov_max_min,
                argmax: per_repeat[0].0.argmax,
                argmin: per_repeat[0].0.argmin,
                fit: None,
            };
            let factor = mean(per_repeat.iter().map(|(_, f)| *f));
            let mut report = VisibilityReport::from_extrema(
                &condition,
                group[0].metadata.two_theta_a_deg,
                pairing,
                opts.method,
                &merged,
                factor,
            )?;
            report.repeats = n;
            reports.push(report);
        }
    }

    let amplitude = match opts.amplitude {
        AmplitudeDef::PeakToPeak => mean(reports.iter().map(|r| r.c_max - r.c_min)),
        AmplitudeDef::MeanMax => mean(reports.iter().map(|r| r.c_max)),
    };
    let summary = Summary {
        condition_label: condition,
        normalization_factor: mean(reports.iter().map(|r| r.normalization_factor)),
        avg_amplitude: amplitude,
        avg_visibility: mean(reports.iter().map(|r| r.visibility)),
        avg_sigma_v: mean(reports.iter().map(|r| r.sigma_v)),
        method: opts.method,
    };
    Ok(ConditionAnalysis { reports, summary })
}

/// Spread of `V` over Poisson resamples of a fringe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapResult {
    pub mean: f64,
    pub std: f64,
    pub resamples: usize,
}

/// Parametric Poisson bootstrap of the visibility of one fringe.
///
/// Every point is redrawn with its observed count as the mean. For the
/// pointwise method the extrema are read at the originally selected angles, so
/// the spread reflects count noise rather than changes of which sample wins.
pub fn bootstrap_visibility(
    two_theta_b_deg: &[f64],
    counts: &[f64],
    method: ExtremaMethod,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    let base = extrema_of(two_theta_b_deg, counts, method)?;
    if resamples < 2 {
        return Err(AnalysisError::InvalidInput(format!(
            "{resamples} resamples"
        )));
    }
    let mut vs = Vec::with_capacity(resamples);
    let mut draw = vec![0.0; counts.len()];
    for r in 0..resamples {
        let mut rng = rng::stream(seed, rng::DOMAIN_COUNTS, r as u64);
        for (d, c) in draw.iter_mut().zip(counts) {
            *d = if *c > 0.0 {
                Poisson::new(*c).expect("positive mean").sample(&mut rng)
            } else {
                0.0
            };
        }
        let v = match method {
            ExtremaMethod::Pointwise => {
                let (hi, lo) = (draw[base.argmax], draw[base.argmin]);
                visibility(hi.max(lo), lo.min(hi))?
            }
            ExtremaMethod::CosineFit => {
                let e = extrema_of(two_theta_b_deg, &draw, method)?;
                visibility(e.c_max, e.c_min)?
            }
        };
        vs.push(v);
    }
    Ok(BootstrapResult {
        mean: mean(vs.iter().copied()),
        std: sample_std(&vs),
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coincidence::{
        simulate_fringe, FringeMetadata, FringePoint, FringeSource, SimulationOptions, SourceParams,
    };
    use crate::entanglement::{bell_state, BellStateId};
    use crate::polarization::BipartiteState;
    use proptest::prelude::*;

    fn axis() -> Vec<f64> {
        (0..37).map(|i| 5.0 * f64::from(i)).collect()
    }

    fn dataset_from(
        two_theta_a_deg: f64,
        a1b1: &[f64],
        a2b1: &[f64],
        condition: &str,
    ) -> FringeDataset {
        let points = axis()
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                let c = [a1b1[i], a2b1[i], 0.0, 0.0];
                FringePoint {
                    two_theta_b_deg: d,
                    coincidences: c,
                    singles: [c[0], c[1], c[0] + c[1], 0.0],
                    integration_s: 1.0,
                }
            })
            .collect();
        FringeDataset {
            metadata: FringeMetadata {
                two_theta_a_deg,
                source: SourceParams::default(),
                channel: "state".into(),
                condition: condition.into(),
                expectation: true,
                accidental_rate_hz: 0.0,
                first_index: 0,
            },
            points,
        }
    }

    fn singlet_fringe(two_theta_a_deg: f64, scale: f64) -> (Vec<f64>, Vec<f64>) {
        let a: Vec<f64> = axis()
            .iter()
            .map(|d| scale * 0.5 * (two_theta_a_deg - d).to_radians().sin().powi(2))
            .collect();
        let b = a.iter().map(|x| 0.5 * scale - x).collect();
        (a, b)
    }

    #[test]
    fn visibility_examples() {
        assert_eq!(visibility(3.0, 1.0).unwrap(), 0.5);
        assert_eq!(visibility(7.0, 0.0).unwrap(), 1.0);
        assert!((visibility(1420.1, 10.73).unwrap() - 0.985).abs() < 5e-4);
        assert_eq!(visibility(0.0, 0.0), Err(AnalysisError::Undefined));
        assert!(matches!(
            visibility(1.0, 2.0),
            Err(AnalysisError::ArgumentOrder { .. })
        ));
    }

    #[test]
    fn visibility_error_examples() {
        assert_eq!(visibility_error(10.0, 3.0, 0.0, 0.0).unwrap(), 0.0);
        for n in [1.0, 16.0, 1e4, 12345.0] {
            let s = visibility_error(n, n, n.sqrt(), n.sqrt()).unwrap();
            assert!((s - 1.0 / (2.0 * n).sqrt()).abs() < 1e-12);
        }
        // Poisson simplification 2√(ab)/(a+b)^{3/2}.
        let (a, b) = (900.0f64, 25.0f64);
        let s = visibility_error(a, b, a.sqrt(), b.sqrt()).unwrap();
        assert!((s - 2.0 * (a * b).sqrt() / (a + b).powf(1.5)).abs() < 1e-15);
        assert!(visibility_error(1.0, 0.5, -1.0, 0.0).is_err());
    }

    #[test]
    fn correlated_error_reduces_to_independent_and_cancels() {
        let s = visibility_error(900.0, 100.0, 30.0, 10.0).unwrap();
        assert_eq!(
            visibility_error_correlated(900.0, 100.0, 30.0, 10.0, 0.0).unwrap(),
            s
        );
        // A common scale error on both extrema leaves V unchanged.
        let k = 0.01;
        let common =
            visibility_error_correlated(900.0, 100.0, 900.0 * k, 100.0 * k, 900.0 * 100.0 * k * k)
                .unwrap();
        assert!(common < 1e-9, "{common}");
    }

    #[test]
    fn noiseless_singlet_both_methods() {
        let (a, _) = singlet_fringe(0.0, 1000.0);
        for m in [ExtremaMethod::Pointwise, ExtremaMethod::CosineFit] {
            let e = extrema_of(&axis(), &a, m).unwrap();
            assert!((e.c_max - 500.0).abs() < 1e-9, "{m}");
            assert!(e.c_min.abs() < 1e-9, "{m}");
            assert!((visibility(e.c_max, e.c_min).unwrap() - 1.0).abs() < 1e-12);
        }
        let fit = cosine_fit(&axis(), &a).unwrap();
        assert!(fit.residual_rms < 1e-9);
        for d in [5.0, 33.0, 170.0] {
            assert!((fit.evaluate(d) - 500.0 * d.to_radians().sin().powi(2)).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_fringe_has_zero_visibility() {
        let c = vec![250.0; 37];
        for m in [ExtremaMethod::Pointwise, ExtremaMethod::CosineFit] {
            let e = extrema_of(&axis(), &c, m).unwrap();
            assert!(visibility(e.c_max, e.c_min).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn coverage_is_enforced() {
        let short: Vec<f64> = (0..7).map(|i| 30.0 * f64::from(i)).collect();
        assert!(matches!(
            extrema_of(&short, &[1.0; 7], ExtremaMethod::Pointwise),
            Err(AnalysisError::Coverage(_))
        ));
        let narrow: Vec<f64> = (0..10).map(|i| 10.0 * f64::from(i)).collect();
        assert!(matches!(
            extrema_of(&narrow, &[1.0; 10], ExtremaMethod::CosineFit),
            Err(AnalysisError::Coverage(_))
        ));
    }

    #[test]
    fn normalization_examples() {
        let mut counts = vec![100.0; 19];
        counts[4] = 1463.1;
        let (n, f) = normalize_counts(&counts).unwrap();
        assert_eq!(f, 1463.1);
        assert_eq!(n.iter().copied().fold(0.0, f64::max), 1.0);
        assert_eq!(normalize_counts(&[0.0; 5]), Err(AnalysisError::ZeroFringe));
    }

    #[test]
    fn summary_of_identical_unit_fringes() {
        let (a, b) = singlet_fringe(0.0, 1000.0);
        let (c, d) = singlet_fringe(45.0, 1000.0);
        let data = vec![
            dataset_from(0.0, &a, &b, "ideal"),
            dataset_from(45.0, &c, &d, "ideal"),
        ];
        let out = summarize(&data, &AnalysisOptions::default()).unwrap();
        assert_eq!(out.reports.len(), 4);
        assert!((out.summary.avg_visibility - 1.0).abs() < 1e-12);
        assert!(out.summary.avg_sigma_v.abs() < 1e-12);
        assert!((out.summary.normalization_factor - 500.0).abs() < 1e-9);
        assert_eq!(
            Summary::COLUMNS,
            [
                "condition_label",
                "normalization_factor",
                "avg_amplitude",
                "avg_visibility",
                "avg_sigma_v",
                "method"
            ]
        );
    }

    #[test]
    fn summary_coverage_errors() {
        let (a, b) = singlet_fringe(0.0, 1000.0);
        let only = vec![dataset_from(0.0, &a, &b, "x")];
        assert_eq!(
            summarize(&only, &AnalysisOptions::default()).unwrap_err(),
            AnalysisError::MissingSetting {
                two_theta_a_deg: 45.0
            }
        );
        let stray = vec![dataset_from(10.0, &a, &b, "x")];
        assert!(matches!(
            summarize(&stray, &AnalysisOptions::default()),
            Err(AnalysisError::UnexpectedSetting { .. })
        ));
    }

    fn simulated(
        state: &BipartiteState,
        seed: u64,
        two_theta_a_deg: f64,
        first: u64,
    ) -> FringeDataset {
        let params = SourceParams {
            seed,
            ..SourceParams::default()
        };
        simulate_fringe(
            &FringeSource::State(*state),
            &params,
            two_theta_a_deg,
            &axis(),
            "sim",
            SimulationOptions {
                expectation: false,
                first_index: first,
            },
        )
        .unwrap()
    }

    #[test]
    fn summary_is_order_invariant() {
        let s = bell_state(BellStateId::PsiMinus);
        let data = vec![
            simulated(&s, 1, 0.0, 0),
            simulated(&s, 1, 45.0, 19),
            simulated(&s, 1, 0.0, 38),
            simulated(&s, 1, 45.0, 57),
        ];
        let mut rev = data.clone();
        rev.reverse();
        for source in [
            SigmaSource::Method,
            SigmaSource::Repeats,
            SigmaSource::Poisson,
            SigmaSource::Fit,
        ] {
            let opts = AnalysisOptions {
                sigma_source: source,
                ..AnalysisOptions::default()
            };
            assert_eq!(
                summarize(&data, &opts).unwrap(),
                summarize(&rev, &opts).unwrap()
            );
        }
        let out = summarize(&data, &AnalysisOptions::default()).unwrap();
        assert!(out.reports.iter().all(|r| r.repeats == 2));
    }

    #[test]
    fn methods_agree_on_simulated_fringe() {
        // Two estimates of the same V; with Gaussian errors about 95% land within 2σ.
        let s = bell_state(BellStateId::PsiMinus);
        let trials = 60u64;
        let agree = (0..trials)
            .filter(|&seed| {
                let ds = simulated(&s, seed, if seed % 2 == 0 { 0.0 } else { 45.0 }, 0);
                let p = analyze_fringe(&ds, Pairing::A1B1, ExtremaMethod::Pointwise).unwrap();
                let f = analyze_fringe(&ds, Pairing::A1B1, ExtremaMethod::CosineFit).unwrap();
                (p.visibility - f.visibility).abs() < 2.0 * p.sigma_v.hypot(f.sigma_v)
            })
            .count();
        assert!(agree as f64 >= 0.85 * trials as f64, "{agree}/{trials}");
    }

    #[test]
    fn bootstrap_matches_propagated_error() {
        let s = bell_state(BellStateId::PsiMinus);
        let ds = simulated(&s, 9, 45.0, 0);
        let r = analyze_fringe(&ds, Pairing::A1B1, ExtremaMethod::Pointwise).unwrap();
        let b = bootstrap_visibility(
            &ds.two_theta_b_deg(),
            &ds.fringe(Pairing::A1B1),
            ExtremaMethod::Pointwise,
            1000,
            2,
        )
        .unwrap();
        assert!(
            (b.std / r.sigma_v - 1.0).abs() < 0.15,
            "boot {} eq {}",
            b.std,
            r.sigma_v
        );
    }

    proptest! {
        #[test]
        fn scale_invariance(hi in 1.0..1e5f64, frac in 0.0..1.0f64, sh in 0.0..100.0f64, sl in 0.0..100.0f64, k in 1e-3..1e3f64) {
            let lo = hi * frac;
            let v = visibility(hi, lo).unwrap();
            let s = visibility_error(hi, lo, sh, sl).unwrap();
            prop_assert!((visibility(k * hi, k * lo).unwrap() - v).abs() < 1e-12);
            prop_assert!((visibility_error(k * hi, k * lo, k * sh, k * sl).unwrap() - s).abs() < 1e-12);
        }

        #[test]
        fn sigma_monotone(hi in 1.0..1e4f64, frac in 0.0..1.0f64, sh in 0.0..50.0f64, sl in 0.0..50.0f64, d in 0.0..10.0f64) {
            let lo = hi * frac;
            let s = visibility_error(hi, lo, sh, sl).unwrap();
            prop_assert!(visibility_error(hi, lo, sh + d, sl).unwrap() >= s);
            prop_assert!(visibility_error(hi, lo, sh, sl + d).unwrap() >= s);
        }

        #[test]
        fn normalization_preserves_visibility(counts in proptest::collection::vec(0.0..1e4f64, 37)) {
            prop_assume!(counts.iter().any(|c| *c > 0.0));
            let (norm, f) = normalize_counts(&counts).unwrap();
            let raw = extrema_of(&axis(), &counts, ExtremaMethod::Pointwise).unwrap();
            let scaled = extrema_of(&axis(), &norm, ExtremaMethod::Pointwise).unwrap();
            let v_raw = visibility(raw.c_max, raw.c_min).unwrap();
            let v_norm = visibility(scaled.c_max, scaled.c_min).unwrap();
            prop_assert!((v_raw - v_norm).abs() < 1e-15);
            let s_raw = visibility_error(raw.c_max, raw.c_min, raw.sigma_max, raw.sigma_min).unwrap();
            let s_norm = visibility_error(scaled.c_max, scaled.c_min, raw.sigma_max / f, raw.sigma_min / f).unwrap();
            prop_assert!((s_raw - s_norm).abs() < 1e-12);
        }
    }
}

//! Catalyst descriptors from digitized X-ray diffraction curves.
//!
//! Each user-selected window of a curve is fit with a Gaussian on a constant
//! baseline,
//!
//! ```text
//! y = y0 + A / (w·√(π/2)) · exp(−2 (x − xc)² / w²)
//! ```
//!
//! from which the full width at half maximum `w·√(2 ln 2)` feeds the Scherrer
//! relation `D = K·λ / (β·cos θ)` for crystalline peaks, and peak areas give the
//! crystallinity index `100 · Σ A_crystalline / Σ A_all`.

use crate::data::{FeatureSchema, Sample};
use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

pub const DEFAULT_SHAPE_FACTOR: f64 = 0.9;
/// Cu Kα.
pub const DEFAULT_WAVELENGTH_NM: f64 = 0.15406;
/// Crystallite sizes at or above this are outside the Scherrer relation's range.
pub const SCHERRER_LIMIT_NM: f64 = 200.0;
pub const MIN_WINDOW_POINTS: usize = 8;

const MAX_ITERATIONS: usize = 500;
const REL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum XrdError {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("window [{lo}, {hi}] holds {points} points, need at least {MIN_WINDOW_POINTS}")]
    WindowTooNarrow { lo: f64, hi: f64, points: usize },
    #[error("window [{lo}, {hi}] has no interior local maximum")]
    NoLocalMaximum { lo: f64, hi: f64 },
    #[error("gaussian fit in [{lo}, {hi}] diverged")]
    FitDiverged { lo: f64, hi: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no peaks given")]
    NoPeaks,
    #[error("total peak area is zero")]
    ZeroArea,
    #[error("no crystalline peak labeled; average crystal size is undefined")]
    NoCrystallinePeak,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, XrdError>;

/// Digitized intensity trace: (2θ in degrees, intensity) with strictly increasing 2θ.
#[derive(Debug, Clone, PartialEq)]
pub struct XrdCurve {
    points: Vec<(f64, f64)>,
}

impl XrdCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(XrdError::InvalidCurve("no points".into()));
        }
        if let Some(i) = points.iter().position(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(XrdError::InvalidCurve(format!("point {i} is not finite")));
        }
        if let Some(i) = points.windows(2).position(|w| w[1].0 <= w[0].0) {
            return Err(XrdError::InvalidCurve(format!(
                "2θ not strictly increasing at point {}",
                i + 1
            )));
        }
        Ok(Self { points })
    }

    /// Samples `f` on `[lo, hi]` with the given step.
    pub fn sample(lo: f64, hi: f64, step: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = ((hi - lo) / step).round() as usize;
        Self::new((0..=n).map(|i| lo + i as f64 * step).map(|x| (x, f(x))).collect())
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    /// Reflects the curve about `axis` (x → 2·axis − x), keeping x increasing.
    pub fn mirrored(&self, axis: f64) -> Self {
        let points = self.points.iter().rev().map(|&(x, y)| (2.0 * axis - x, y)).collect();
        Self { points }
    }

    fn window(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        self.points.iter().copied().filter(|&(x, _)| x >= lo && x <= hi).collect()
    }
}

/// Two columns (2θ, intensity) separated by a comma, semicolon or whitespace.
/// A non-numeric first line is treated as a header; `#` starts a comment.
pub fn parse_curve(text: &str) -> Result<XrdCurve> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 2 => points.push((v[0], v[1])),
            None if points.is_empty() && i == 0 => continue,
            _ => {
                return Err(XrdError::Parse {
                    line: i + 1,
                    message: format!("expected two numbers, got {line:?}"),
                })
            }
        }
    }
    XrdCurve::new(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakLabel {
    Crystalline,
    Amorphous,
}

impl FromStr for PeakLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "crystalline" => Ok(PeakLabel::Crystalline),
            "amorphous" => Ok(PeakLabel::Amorphous),
            other => Err(format!("unknown peak label {other:?}")),
        }
    }
}

impl PeakLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PeakLabel::Crystalline => "crystalline",
            PeakLabel::Amorphous => "amorphous",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakWindow {
    pub lo: f64,
    pub hi: f64,
    pub label: PeakLabel,
}

impl PeakWindow {
    pub fn new(lo: f64, hi: f64, label: PeakLabel) -> Self {
        Self { lo, hi, label }
    }
}

/// Lines of `<x_lo> <x_hi> <crystalline|amorphous>`; blank lines and `#` comments skipped.
pub fn parse_windows(text: &str) -> Result<Vec<PeakWindow>> {
    let mut windows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| XrdError::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err(format!("expected \"<x_lo> <x_hi> <label>\", got {line:?}")));
        }
        let lo: f64 = fields[0].parse().map_err(|_| err(format!("bad number {:?}", fields[0])))?;
        let hi: f64 = fields[1].parse().map_err(|_| err(format!("bad number {:?}", fields[1])))?;
        if !(hi > lo) {
            return Err(err(format!("empty window [{lo}, {hi}]")));
        }
        let label = fields[2].parse().map_err(err)?;
        windows.push(PeakWindow { lo, hi, label });
    }
    Ok(windows)
}

/// Fitted peak: baseline `y0`, center `xc` (degrees 2θ), width `w` (degrees) and area `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPeak {
    pub baseline: f64,
    pub center: f64,
    pub width: f64,
    pub area: f64,
    pub label: PeakLabel,
}

impl GaussianPeak {
    pub fn eval(&self, x: f64) -> f64 {
        profile(&self.params(), x)
    }

    /// Peak height above the baseline.
    pub fn height(&self) -> f64 {
        self.area / (self.width * FRAC_PI_2.sqrt())
    }

    pub fn fwhm(&self) -> Result<f64> {
        fwhm(self.width)
    }

    fn params(&self) -> [f64; 4] {
        [self.baseline, self.center, self.width, self.area]
    }
}

fn profile(p: &[f64; 4], x: f64) -> f64 {
    let [y0, xc, w, a] = *p;
    let u = (x - xc) / w;
    y0 + a / (w * FRAC_PI_2.sqrt()) * (-2.0 * u * u).exp()
}

/// Residuals `y − model` and the Jacobian of the model with respect to (y0, xc, w, A).
fn linearize(points: &[(f64, f64)], p: &[f64; 4]) -> (Matrix4<f64>, Vector4<f64>, f64) {
    let [_, xc, w, a] = *p;
    let s = FRAC_PI_2.sqrt();
    let mut jtj = Matrix4::zeros();
    let mut jtr = Vector4::zeros();
    let mut ssr = 0.0;
    for &(x, y) in points {
        let d = x - xc;
        let g = (-2.0 * d * d / (w * w)).exp();
        let h = a / (w * s);
        let r = y - profile(p, x);
        let grad = Vector4::new(
            1.0,
            h * g * 4.0 * d / (w * w),
            -h * g / w + h * g * 4.0 * d * d / (w * w * w),
            g / (w * s),
        );
        jtj += grad * grad.transpose();
        jtr += grad * r;
        ssr += r * r;
    }
    (jtj, jtr, ssr)
}

fn sum_squares(points: &[(f64, f64)], p: &[f64; 4]) -> f64 {
    points.iter().map(|&(x, y)| (y - profile(p, x)).powi(2)).sum()
}

/// Least-squares Gaussian fit over the curve points inside `window`.
///
/// Damped Gauss–Newton (Levenberg–Marquardt) from the guess y0 = window minimum,
/// xc = position of the maximum, w = span / 4, A = (max − y0)·w·√(π/2). Only steps
/// that lower the residual are taken. Stops when an accepted step changes the
/// residual by less than 1e-10 relative, or after 500 iterations.
pub fn fit_gaussian(curve: &XrdCurve, window: &PeakWindow) -> Result<GaussianPeak> {
    let (lo, hi) = (window.lo, window.hi);
    let pts = curve.window(lo, hi);
    if pts.len() < MIN_WINDOW_POINTS {
        return Err(XrdError::WindowTooNarrow {
            lo,
            hi,
            points: pts.len(),
        });
    }
    let (imax, &(x_at_max, ymax)) = pts
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, &(f64, f64))>, (i, p)| match best {
            Some((_, b)) if b.1 >= p.1 => best,
            _ => Some((i, p)),
        })
        .expect("non-empty window");
    let ymin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    if imax == 0 || imax == pts.len() - 1 || !(ymax > ymin) {
        return Err(XrdError::NoLocalMaximum { lo, hi });
    }

    let span = pts[pts.len() - 1].0 - pts[0].0;
    let w0 = span / 4.0;
    let mut p = [ymin, x_at_max, w0, (ymax - ymin) * w0 * FRAC_PI_2.sqrt()];
    let scale: f64 = pts.iter().map(|q| q.1 * q.1).sum();
    let mut lambda = 1e-3;
    let (mut jtj, mut jtr, mut ssr) = linearize(&pts, &p);

    for _ in 0..MAX_ITERATIONS {
        if ssr <= 1e-30 * scale {
            break;
        }
        let mut damped = jtj;
        for i in 0..4 {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
        }
        let step = damped.cholesky().map(|c| c.solve(&jtr));
        let candidate = step.map(|d| [p[0] + d[0], p[1] + d[1], p[2] + d[2], p[3] + d[3]]);
        let accepted = candidate.and_then(|q| {
            if q.iter().all(|v| v.is_finite()) && q[2] > 0.0 {
                let s = sum_squares(&pts, &q);
                (s < ssr).then_some((q, s))
            } else {
                None
            }
        });
        match accepted {
            Some((q, s)) => {
                let rel = (ssr - s) / ssr;
                p = q;
                (jtj, jtr, ssr) = linearize(&pts, &p);
                debug_assert!((ssr - s).abs() <= 1e-9 * s.max(1e-300));
                lambda = (lambda / 10.0).max(1e-12);
                if rel < REL_TOLERANCE {
                    break;
                }
            }
            None => {
                lambda *= 10.0;
                if lambda > 1e16 {
                    break;
                }
            }
        }
    }

    let (xmin, xmax) = curve.x_range();
    if !p.iter().all(|v| v.is_finite()) || p[2] <= 0.0 || p[3] <= 0.0 || p[1] < xmin || p[1] > xmax {
        return Err(XrdError::FitDiverged { lo, hi });
    }
    Ok(GaussianPeak {
        baseline: p[0],
        center: p[1],
        width: p[2],
        area: p[3],
        label: window.label,
    })
}

/// Full width at half maximum of the profile with width parameter `w`: `w·√(2 ln 2)`.
pub fn fwhm(width: f64) -> Result<f64> {
    if !(width > 0.0) {
        return Err(XrdError::InvalidParameter(format!("width must be positive, got {width}")));
    }
    Ok(width * (2.0 * std::f64::consts::LN_2).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XrdConstants {
    /// Scherrer shape factor K.
    pub shape_factor: f64,
    /// X-ray wavelength λ in nm.
    pub wavelength_nm: f64,
}

impl Default for XrdConstants {
    fn default() -> Self {
        Self {
            shape_factor: DEFAULT_SHAPE_FACTOR,
            wavelength_nm: DEFAULT_WAVELENGTH_NM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrystalSize {
    pub nm: f64,
    /// False when the size is at or beyond [`SCHERRER_LIMIT_NM`].
    pub valid: bool,
}

/// Scherrer crystallite size `D = K·λ / (β·cos θ)` with β (FWHM) and θ in radians.
pub fn scherrer_size(beta: f64, theta: f64, shape_factor: f64, wavelength_nm: f64) -> Result<CrystalSize> {
    if !(beta > 0.0) {
        return Err(XrdError::InvalidParameter(format!("β must be positive, got {beta}")));
    }
    if !(theta > 0.0 && theta < FRAC_PI_2) {
        return Err(XrdError::InvalidParameter(format!("θ = {theta} rad outside (0, π/2)")));
    }
    if !(shape_factor > 0.0 && wavelength_nm > 0.0) {
        return Err(XrdError::InvalidParameter("K and λ must be positive".into()));
    }
    let nm = shape_factor * wavelength_nm / (beta * theta.cos());
    Ok(CrystalSize {
        nm,
        valid: nm < SCHERRER_LIMIT_NM,
    })
}

/// Percentage of total peak area carried by crystalline peaks.
pub fn crystallinity_index(peaks: &[GaussianPeak]) -> Result<f64> {
    if peaks.is_empty() {
        return Err(XrdError::NoPeaks);
    }
    if let Some(p) = peaks.iter().find(|p| !(p.area >= 0.0)) {
        return Err(XrdError::InvalidParameter(format!("negative peak area {}", p.area)));
    }
    let total: f64 = peaks.iter().map(|p| p.area).sum();
    if total == 0.0 {
        return Err(XrdError::ZeroArea);
    }
    let crystalline: f64 = peaks
        .iter()
        .filter(|p| p.label == PeakLabel::Crystalline)
        .map(|p| p.area)
        .sum();
    Ok(100.0 * crystalline / total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub peak: GaussianPeak,
    pub fwhm_deg: f64,
    pub fwhm_rad: f64,
    pub bragg_angle_rad: f64,
    /// Present for crystalline peaks only.
    pub crystal_size: Option<CrystalSize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XrdReport {
    pub peaks: Vec<PeakReport>,
    /// Arithmetic mean of the crystalline peaks' sizes.
    pub mean_crystal_size_nm: f64,
    pub mean_crystal_size_valid: bool,
    pub crystallinity_index: f64,
    pub constants: XrdConstants,
}

/// Fits every window and derives per-peak sizes, their mean and the crystallinity index.
pub fn analyze_curve(curve: &XrdCurve, windows: &[PeakWindow], constants: XrdConstants) -> Result<XrdReport> {
    if !windows.iter().any(|w| w.label == PeakLabel::Crystalline) {
        return Err(XrdError::NoCrystallinePeak);
    }
    let mut peaks = Vec::with_capacity(windows.len());
    for window in windows {
        let peak = fit_gaussian(curve, window)?;
        let fwhm_deg = peak.fwhm()?;
        let fwhm_rad = fwhm_deg * PI / 180.0;
        let bragg_angle_rad = (peak.center / 2.0) * PI / 180.0;
        let crystal_size = match peak.label {
            PeakLabel::Crystalline => Some(scherrer_size(
                fwhm_rad,
                bragg_angle_rad,
                constants.shape_factor,
                constants.wavelength_nm,
            )?),
            PeakLabel::Amorphous => None,
        };
        peaks.push(PeakReport {
            peak,
            fwhm_deg,
            fwhm_rad,
            bragg_angle_rad,
            crystal_size,
        });
    }
    let sizes: Vec<f64> = peaks.iter().filter_map(|p| p.crystal_size.map(|c| c.nm)).collect();
    let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
    let fitted: Vec<GaussianPeak> = peaks.iter().map(|p| p.peak).collect();
    Ok(XrdReport {
        mean_crystal_size_valid: mean < SCHERRER_LIMIT_NM,
        mean_crystal_size_nm: mean,
        crystallinity_index: crystallinity_index(&fitted)?,
        peaks,
        constants,
    })
}

impl XrdReport {
    /// `key = value` lines; keys documented in the project README.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format = xrd-report-v1");
        let _ = writeln!(out, "shape_factor = {}", self.constants.shape_factor);
        let _ = writeln!(out, "wavelength_nm = {}", self.constants.wavelength_nm);
        let _ = writeln!(out, "peak_count = {}", self.peaks.len());
        for (i, p) in self.peaks.iter().enumerate() {
            let _ = writeln!(out, "peak.{i}.label = {}", p.peak.label.as_str());
            let _ = writeln!(out, "peak.{i}.baseline = {}", p.peak.baseline);
            let _ = writeln!(out, "peak.{i}.center_deg = {}", p.peak.center);
            let _ = writeln!(out, "peak.{i}.width_deg = {}", p.peak.width);
            let _ = writeln!(out, "peak.{i}.area = {}", p.peak.area);
            let _ = writeln!(out, "peak.{i}.fwhm_deg = {}", p.fwhm_deg);
            let _ = writeln!(out, "peak.{i}.fwhm_rad = {}", p.fwhm_rad);
            let _ = writeln!(out, "peak.{i}.bragg_angle_rad = {}", p.bragg_angle_rad);
            if let Some(c) = p.crystal_size {
                let _ = writeln!(out, "peak.{i}.crystal_size_nm = {}", c.nm);
                let _ = writeln!(out, "peak.{i}.crystal_size_valid = {}", c.valid);
            }
        }
        let _ = writeln!(out, "mean_crystal_size_nm = {}", self.mean_crystal_size_nm);
        let _ = writeln!(out, "mean_crystal_size_valid = {}", self.mean_crystal_size_valid);
        let _ = writeln!(out, "crystallinity_index_pct = {}", self.crystallinity_index);
        out
    }

    /// Two-column CSV fragment with the dataset's crystal size and crystallinity headers.
    pub fn row_fragment(&self, schema: &FeatureSchema) -> String {
        let name = |key: &str| {
            schema
                .feature_index(key)
                .map(|j| schema.features[j].name.clone())
                .unwrap_or_else(|| key.to_string())
        };
        format!(
            "{},{}\n{},{}\n",
            name("crystal_size"),
            name("crystallinity_index"),
            self.mean_crystal_size_nm,
            self.crystallinity_index
        )
    }

    /// Writes crystal size and crystallinity index into a canonical-schema sample.
    pub fn fill_sample(&self, schema: &FeatureSchema, sample: &mut Sample) {
        if let Some(j) = schema.feature_index("crystal_size") {
            sample.features[j] = self.mean_crystal_size_nm;
        }
        if let Some(j) = schema.feature_index("crystallinity_index") {
            sample.features[j] = self.crystallinity_index;
        }
    }
}

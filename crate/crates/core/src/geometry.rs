//! Global geometry of the radial metrics: radial distance, volume growth,
//! the asymptotic cone and the zero section.
//!
//! Radial length uses the element ½√φ_r dr, which makes the flat metric's
//! radial distance equal |z₁| − |z₀|. Volumes are those of the sublevel sets
//! {w ≤ eʳ}, divided by k for the quotient by ℤ_k.

use std::f64::consts::PI;

use serde::Serialize;

use crate::curvature::{curvature_sup, CurvatureSup};
use crate::error::{Error, Result};
use crate::numerics::quadrature::integrate;
use crate::oracle::AuditFinding;
use crate::radial::{build_profile, BundleIndex, GridSpec, MetricFamily, Provenance, RadialProfile, RadialSource};

const ABS_TOL: f64 = 1e-15;
const REL_TOL: f64 = 1e-13;

/// Where the left tails of the length and volume integrands drop below e^{−40}.
fn left_cutoff(family: &MetricFamily) -> f64 {
    let rate = if family.c() > 0.0 {
        family.a()
    } else {
        family.a() / (family.power() + 1) as f64
    };
    -80.0 / rate
}

/// Profiles with a closed form may be evaluated beyond their grid; others
/// must stay inside it.
fn check_range(profile: &RadialProfile, r0: f64, r1: f64) -> Result<()> {
    if matches!(profile.provenance(), Provenance::Analytic(_)) {
        return Ok(());
    }
    let g = profile.grid();
    let (lo, hi) = (g[0], g[g.len() - 1]);
    for r in [r0, r1] {
        if !(lo..=hi).contains(&r) {
            return Err(Error::OutOfGrid { r, r_min: lo, r_max: hi });
        }
    }
    Ok(())
}

fn phi_r_of<'a>(src: &'a (impl RadialSource + ?Sized)) -> impl Fn(f64) -> f64 + 'a {
    move |r| src.jet_at(r).map(|j| j.phi_r).unwrap_or(f64::NAN)
}

/// Radial distance ½∫_{r0}^{r1} √φ_r dr.
pub fn arclength(profile: &RadialProfile, r0: f64, r1: f64) -> Result<f64> {
    if !(r0 < r1) {
        return Err(Error::Precondition(format!("need r0 < r1, got {r0} and {r1}")));
    }
    check_range(profile, r0, r1)?;
    let phi_r = phi_r_of(profile);
    integrate(|r| 0.5 * phi_r(r).max(0.0).sqrt(), r0, r1, ABS_TOL, REL_TOL)
}

/// Distance from the zero section (r → −∞) to radius r.
pub fn arclength_from_left(family: &MetricFamily, r: f64) -> Result<f64> {
    let phi_r = phi_r_of(family);
    integrate(|s| 0.5 * phi_r(s).sqrt(), left_cutoff(family).min(r - 1.0), r, ABS_TOL, REL_TOL)
}

/// Volume of {w ≤ eʳ} modulo ℤ_k: (πⁿ/(n−1)!)(1/k)∫_{−∞}^{r} φ^{n−1}φ_r.
///
/// For profiles without a closed form the integral starts at the first grid
/// node.
pub fn volume_to(profile: &RadialProfile, r: f64, n: usize, k: BundleIndex) -> Result<f64> {
    let start = match profile.family() {
        Some(f) if matches!(profile.provenance(), Provenance::Analytic(_)) => left_cutoff(f).min(r - 1.0),
        _ => profile.grid()[0],
    };
    check_range(profile, start, r)?;
    volume_between(profile, start, r, n, k)
}

fn volume_between<S: RadialSource + ?Sized>(src: &S, r0: f64, r1: f64, n: usize, k: BundleIndex) -> Result<f64> {
    if n < 2 {
        return Err(Error::UnsupportedDimension { what: "volumes", n });
    }
    let density = |r: f64| {
        src.jet_at(r)
            .map(|j| j.phi.powi(n as i32 - 1) * j.phi_r)
            .unwrap_or(f64::NAN)
    };
    let integral = integrate(density, r0, r1, 0.0, REL_TOL)?;
    if !integral.is_finite() {
        return Err(Error::Quadrature(format!("volume integrand diverges on [{r0}, {r1}]")));
    }
    Ok(volume_prefactor(n) * integral / k.get() as f64)
}

/// πⁿ/(n−1)!.
fn volume_prefactor(n: usize) -> f64 {
    PI.powi(n as i32) / (1..n).map(|i| i as f64).product::<f64>()
}

/// Volume of the Euclidean ball of radius s in ℂⁿ.
fn euclidean_ball(n: usize, s: f64) -> f64 {
    PI.powi(n as i32) * s.powi(2 * n as i32) / (1..=n).map(|i| i as f64).product::<f64>()
}

/// Ball-volume ratio V / (πⁿs²ⁿ/n!) at three radii and its extrapolated limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRatio {
    pub n: usize,
    pub k: u32,
    pub probes: [f64; 3],
    pub raw: [f64; 3],
    pub estimate: f64,
    /// k^{1−n}/2ⁿ, the value claimed for the asymptotic cone.
    pub claimed: f64,
    pub finding: AuditFinding,
}

/// Relative tolerance on the density ratio (±0.01 at the value 1/4).
pub const DENSITY_TOLERANCE: f64 = 0.04;

/// Aitken's Δ² on three equally spaced samples; falls back to the last
/// sample when the differences do not contract.
fn aitken(x: [f64; 3]) -> f64 {
    let d1 = x[1] - x[0];
    let d2 = x[2] - x[1];
    let denom = d2 - d1;
    if denom.abs() <= 1e-15 * x[2].abs() || (d2 / d1).abs() >= 1.0 {
        return x[2];
    }
    x[2] - d2 * d2 / denom
}

/// Asymptotic volume density of the metric's balls around the zero section,
/// probed at r_probe − 10, r_probe − 5, r_probe and extrapolated.
pub fn density_ratio(family: &MetricFamily, k: BundleIndex, r_probe: f64) -> Result<DensityRatio> {
    if !(r_probe >= 20.0) {
        return Err(Error::Precondition(format!("r_probe must be at least 20, got {r_probe}")));
    }
    family.eval(r_probe)?;
    let n = family.n();
    let probes = [r_probe - 10.0, r_probe - 5.0, r_probe];
    let mut raw = [0.0; 3];
    for (slot, &r) in raw.iter_mut().zip(&probes) {
        let start = left_cutoff(family).min(r - 1.0);
        let v = volume_between(family, start, r, n, k)?;
        let s = arclength_from_left(family, r)?;
        *slot = v / euclidean_ball(n, s);
    }
    let estimate = aitken(raw);
    let kk = k.get() as f64;
    let claimed = kk.powi(1 - n as i32) / 2f64.powi(n as i32);
    let finding = AuditFinding::new(
        format!("asymptotic cone density ratio, n = {n}, k = {}", k.get()),
        "density_ratio",
        claimed,
        estimate,
        (estimate - claimed).abs() / claimed,
        DENSITY_TOLERANCE,
    )
    .tagged(family.variant(), None);
    Ok(DensityRatio {
        n,
        k: k.get(),
        probes,
        raw,
        estimate,
        claimed,
        finding,
    })
}

/// Area of the zero section ℂP¹ in complex dimension 2: 2π·lim_{r→−∞} φ.
pub fn zero_section_area(family: &MetricFamily) -> Result<f64> {
    if family.n() != 2 {
        return Err(Error::UnsupportedDimension {
            what: "the zero-section area",
            n: family.n(),
        });
    }
    family.bundle_index()?;
    if !(family.c() > 0.0) {
        return Err(Error::Precondition("c = 0 leaves no zero section".into()));
    }
    Ok(2.0 * PI * family.left_limit())
}

/// Least-squares slopes of log φ_r over the outer fifth of each end of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticRates {
    pub left_slope: f64,
    pub right_slope: f64,
    /// a when c > 0, else a/(m+1); absent for profiles without a family.
    pub expected_left: Option<f64>,
    /// a/(m+1), where φ^m φ_r = e^{ar}.
    pub expected_right: Option<f64>,
    pub left_ok: Option<bool>,
    pub right_ok: Option<bool>,
}

pub const SLOPE_TOLERANCE: f64 = 0.02;

fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn asymptotic_rates(profile: &RadialProfile) -> Result<AsymptoticRates> {
    let g = profile.grid();
    let (lo, hi) = (g[0], g[g.len() - 1]);
    if lo > -10.0 || hi < 10.0 {
        return Err(Error::Precondition(format!("grid [{lo}, {hi}] must span [−10, 10]")));
    }
    if profile.phi_r().iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Precondition("φ_r must be positive to take logarithms".into()));
    }
    let width = 0.2 * (hi - lo);
    let slope_on = |keep: &dyn Fn(f64) -> bool| {
        let (x, y): (Vec<f64>, Vec<f64>) = g
            .iter()
            .zip(profile.phi_r())
            .filter(|(r, _)| keep(**r))
            .map(|(r, p)| (*r, p.ln()))
            .unzip();
        fitted_slope(&x, &y)
    };
    let left_slope = slope_on(&|r| r <= lo + width);
    let right_slope = slope_on(&|r| r >= hi - width);
    let (expected_left, expected_right) = match profile.family() {
        Some(f) => {
            let cone = f.a() / (f.power() + 1) as f64;
            (Some(if f.c() > 0.0 { f.a() } else { cone }), Some(cone))
        }
        None => (None, None),
    };
    let close = |got: f64, want: Option<f64>| want.map(|w| ((got - w) / w).abs() <= SLOPE_TOLERANCE);
    Ok(AsymptoticRates {
        left_slope,
        right_slope,
        expected_left,
        expected_right,
        left_ok: close(left_slope, expected_left),
        right_ok: close(right_slope, expected_right),
    })
}

/// Growth of the radial distance towards r → +∞: s(0, R+4)/s(0, R), which
/// tends to e^{a/(m+1)} when √φ_r grows like e^{ar/(2(m+1))}.
pub fn right_growth_ratio(profile: &RadialProfile, r: f64) -> Result<f64> {
    Ok(arclength(profile, 0.0, r + 4.0)? / arclength(profile, 0.0, r)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryReport {
    /// Distance from r = 0 to the zero section.
    pub arclength_left: f64,
    pub arclength_right_divergent: bool,
    /// s(0, 24)/s(0, 20).
    pub right_growth_ratio: f64,
    pub zero_section_area: Option<f64>,
    pub volume_profile: Vec<(f64, f64)>,
    pub density: Option<DensityRatio>,
    pub curvature_sup: CurvatureSup,
    pub rates: AsymptoticRates,
}

pub const DENSITY_PROBE: f64 = 30.0;

/// The global quantities of an analytic family on a grid. Quantities tied to
/// the bundle structure are omitted when a is not an admissible index.
pub fn geometry_report(family: &MetricFamily, spec: GridSpec) -> Result<GeometryReport> {
    let profile = build_profile(family, spec)?;
    let arclength_left = arclength_from_left(family, 0.0)?;
    let growth = right_growth_ratio(&profile, 20.0)?;
    // Distance grows without bound iff the ratio stays above 1.
    let arclength_right_divergent = growth > 1.0 + 1e-6;
    let k = BundleIndex::try_from(family.a()).ok();
    let zero_section_area = zero_section_area(family).ok();
    let volume_k = k.unwrap_or(BundleIndex::new(1)?);
    let volume_profile = profile
        .grid()
        .iter()
        .step_by(((profile.len() - 1) / 24).max(1))
        .map(|&r| volume_to(&profile, r, family.n(), volume_k).map(|v| (r, v)))
        .collect::<Result<Vec<_>>>()?;
    let density = match k {
        Some(k) => Some(density_ratio(family, k, DENSITY_PROBE)?),
        None => None,
    };
    Ok(GeometryReport {
        arclength_left,
        arclength_right_divergent,
        right_growth_ratio: growth,
        zero_section_area,
        volume_profile,
        density,
        curvature_sup: curvature_sup(&profile)?,
        rates: asymptotic_rates(&profile)?,
    })
}

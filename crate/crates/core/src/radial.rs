//! Rotationally symmetric Kähler potentials described by φ = P_r, r = log|z|².
//!
//! Two closed-form families are provided. Both solve φ^m φ_r = e^{ar}:
//! `PaperN2` has m = 1, so φ = √((2/a)e^{ar} + c); `CorrectedGeneral` has
//! m = n − 1, so φ = ((n/a)e^{ar} + c)^{1/n}. They coincide when n = 2.
//!
//! Curvature formulas are far better conditioned in terms of the logarithmic
//! derivatives q = φ_r/φ and s = φ_rr/φ_r than in terms of raw derivatives,
//! so every evaluation produces a [`Jet`] carrying both.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{lagrange_interpolate, stencil};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Variant {
    PaperN2,
    CorrectedGeneral,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "papern2" | "paper" => Ok(Variant::PaperN2),
            "correctedgeneral" | "corrected" | "general" => Ok(Variant::CorrectedGeneral),
            other => Err(Error::InvalidFamily(format!("unknown variant '{other}'"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::PaperN2 => "paper-n2",
            Variant::CorrectedGeneral => "corrected-general",
        })
    }
}

/// Parameters (n, a, c, variant) of a closed-form radial potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricFamily {
    n: usize,
    a: f64,
    c: f64,
    variant: Variant,
}

/// Index k of the line bundle L₋ₖⁿ; always a positive integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BundleIndex(u32);

impl BundleIndex {
    pub fn new(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::NotIntegerIndex(0.0));
        }
        Ok(Self(k))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl TryFrom<f64> for BundleIndex {
    type Error = Error;

    fn try_from(k: f64) -> Result<Self> {
        if k.is_finite() && k >= 1.0 && k.fract() == 0.0 && k <= u32::MAX as f64 {
            Ok(Self(k as u32))
        } else {
            Err(Error::NotIntegerIndex(k))
        }
    }
}

impl MetricFamily {
    pub fn new(n: usize, a: f64, c: f64, variant: Variant) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidFamily(format!("complex dimension must be ≥ 2, got {n}")));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidFamily(format!("exponent a must be positive, got {a}")));
        }
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidFamily(format!("cone parameter c must be ≥ 0, got {c}")));
        }
        Ok(Self { n, a, c, variant })
    }

    /// The complex-surface family φ = √((2/a)e^{ar} + c).
    pub fn paper(a: f64, c: f64) -> Result<Self> {
        Self::new(2, a, c, Variant::PaperN2)
    }

    /// The family with φ^{n−1}φ_r = e^{ar} in dimension n.
    pub fn general(n: usize, a: f64, c: f64) -> Result<Self> {
        Self::new(n, a, c, Variant::CorrectedGeneral)
    }

    /// Euclidean ℂⁿ: φ = eʳ.
    pub fn flat(n: usize) -> Self {
        Self::new(n, n as f64, 0.0, Variant::CorrectedGeneral).expect("n ≥ 2")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Exponent m in φ^m φ_r = e^{ar}.
    pub fn power(&self) -> usize {
        match self.variant {
            Variant::PaperN2 => 1,
            Variant::CorrectedGeneral => self.n - 1,
        }
    }

    /// Same parameters in another dimension.
    pub fn with_dimension(&self, n: usize) -> Result<Self> {
        Self::new(n, self.a, self.c, self.variant)
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self { variant, ..*self }
    }

    /// True when φ = eʳ identically, i.e. the metric is Euclidean.
    pub fn is_flat(&self) -> bool {
        self.c == 0.0 && self.a == (self.power() + 1) as f64
    }

    /// c > 0 and 0 < a < n: the regime where the initial metric has positive
    /// Ricci potential and the sign change is predicted.
    pub fn is_theorem_family(&self) -> bool {
        self.c > 0.0 && self.a < self.n as f64
    }

    /// a as an admissible bundle index, i.e. an integer in [1, n − 1].
    pub fn bundle_index(&self) -> Result<BundleIndex> {
        let k = BundleIndex::try_from(self.a)?;
        if k.get() as usize > self.n - 1 {
            return Err(Error::Precondition(format!(
                "bundle index {} exceeds n − 1 = {}",
                k.get(),
                self.n - 1
            )));
        }
        Ok(k)
    }

    /// lim φ as r → −∞.
    pub fn left_limit(&self) -> f64 {
        self.c.powf(1.0 / (self.power() + 1) as f64)
    }

    /// r* = (1/a) log(ac), left of which ψ_r immediately turns negative.
    pub fn predicted_boundary(&self) -> Option<f64> {
        (self.c > 0.0).then(|| (self.a * self.c).ln() / self.a)
    }

    /// q = φ_r/φ and its first three r-derivatives in closed form.
    pub fn q_derivatives(&self, r: f64) -> Result<[f64; 4]> {
        let a = self.a;
        let m1 = (self.power() + 1) as f64;
        let decay = (-a * r).exp();
        if !r.is_finite() || decay == 0.0 && self.c > 0.0 && (a * r).exp().is_infinite() {
            return Err(Error::DomainOverflow { r });
        }
        let ac_decay = a * self.c * decay;
        let q = a / (m1 + ac_decay);
        // a − (m+1)q = q·ac·e^{−ar}, written without the subtraction.
        let q1 = q * q * ac_decay;
        let k = q * (ac_decay - m1);
        let q2 = q1 * k;
        let q3 = q2 * k - 2.0 * m1 * q1 * q1;
        Ok([q, q1, q2, q3])
    }

    /// (φ, φ_r, φ_rr, φ_rrr) at r, from the closed form and its differentiated
    /// identity.
    pub fn eval(&self, r: f64) -> Result<[f64; 4]> {
        let j = self.jet(r)?;
        Ok([j.phi, j.phi_r, j.phi_rr, j.phi_rrr])
    }

    pub fn jet(&self, r: f64) -> Result<Jet> {
        if !r.is_finite() {
            return Err(Error::DomainOverflow { r });
        }
        let a = self.a;
        let m = self.power() as f64;
        let m1 = m + 1.0;
        let growth = (a * r).exp();
        let phi = ((m1 / a) * growth + self.c).powf(1.0 / m1);
        if !growth.is_finite() || !phi.is_finite() {
            return Err(Error::DomainOverflow { r });
        }
        let [q, q_r, _, _] = self.q_derivatives(r)?;
        let s = a - m * q;
        let s_r = -m * q_r;
        let phi_r = q * phi;
        let phi_rr = s * phi_r;
        let phi_rrr = phi_r * (s_r + s * s);
        Ok(Jet {
            r,
            phi,
            phi_r,
            phi_rr,
            phi_rrr,
            base: LogJet { q, s, q_r, s_r },
            dev: LogJet::default(),
        })
    }
}

/// Closed-form evaluation of (φ, φ_r, φ_rr, φ_rrr).
pub fn eval_family(family: &MetricFamily, r: f64) -> Result<[f64; 4]> {
    family.eval(r)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct LogJet {
    pub q: f64,
    pub s: f64,
    pub q_r: f64,
    pub s_r: f64,
}

/// Pointwise data of a radial potential at one r.
///
/// Logarithmic derivatives are stored as a base part plus a deviation part.
/// Evolved profiles carry an analytic base and a small numerical deviation,
/// and keeping the two apart preserves the precision of the deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub r: f64,
    pub phi: f64,
    pub phi_r: f64,
    pub phi_rr: f64,
    pub phi_rrr: f64,
    pub(crate) base: LogJet,
    pub(crate) dev: LogJet,
}

impl Jet {
    /// Jet of a potential known only through its derivative values.
    pub fn from_derivatives(r: f64, phi: f64, phi_r: f64, phi_rr: f64, phi_rrr: f64) -> Self {
        let q = phi_r / phi;
        let s = phi_rr / phi_r;
        Self {
            r,
            phi,
            phi_r,
            phi_rr,
            phi_rrr,
            base: LogJet {
                q,
                s,
                q_r: phi_rr / phi - q * q,
                s_r: phi_rrr / phi_r - s * s,
            },
            dev: LogJet::default(),
        }
    }

    /// Jet of φ_base + d, given d and its first three derivatives.
    pub fn perturbed(base: &Jet, d: [f64; 4]) -> Self {
        let phi = base.phi + d[0];
        let phi_r = base.phi_r + d[1];
        let phi_rr = base.phi_rr + d[2];
        let phi_rrr = base.phi_rrr + d[3];
        let (q0, s0) = (base.q(), base.s());
        let dq = (d[1] - q0 * d[0]) / phi;
        let ds = (d[2] - s0 * d[1]) / phi_r;
        let dq_r = (d[2] - base.q_r() * d[0] - q0 * d[1] - dq * phi_r) / phi;
        let ds_r = (d[3] - base.s_r() * d[1] - s0 * d[2] - ds * phi_rr) / phi_r;
        Self {
            r: base.r,
            phi,
            phi_r,
            phi_rr,
            phi_rrr,
            base: base.base,
            dev: LogJet {
                q: base.dev.q + dq,
                s: base.dev.s + ds,
                q_r: base.dev.q_r + dq_r,
                s_r: base.dev.s_r + ds_r,
            },
        }
    }

    /// φ_r/φ
    pub fn q(&self) -> f64 {
        self.base.q + self.dev.q
    }

    /// φ_rr/φ_r
    pub fn s(&self) -> f64 {
        self.base.s + self.dev.s
    }

    pub fn q_r(&self) -> f64 {
        self.base.q_r + self.dev.q_r
    }

    pub fn s_r(&self) -> f64 {
        self.base.s_r + self.dev.s_r
    }

    pub fn w(&self) -> f64 {
        self.r.exp()
    }
}

/// Uniform grid request (r_min, r_max, node count).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub nodes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            r_min: -12.0,
            r_max: 12.0,
            nodes: 2401,
        }
    }
}

impl GridSpec {
    pub const MIN_NODES: usize = 5;

    pub fn new(r_min: f64, r_max: f64, nodes: usize) -> Result<Self> {
        let spec = Self { r_min, r_max, nodes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < Self::MIN_NODES {
            return Err(Error::GridTooSmall {
                min: Self::MIN_NODES,
                got: self.nodes,
            });
        }
        if !(self.r_min < self.r_max) || !self.r_min.is_finite() || !self.r_max.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "need finite r_min < r_max, got [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.r_max - self.r_min) / (self.nodes - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let span = self.r_max - self.r_min;
        let last = (self.nodes - 1) as f64;
        (0..self.nodes)
            .map(|i| self.r_min + span * (i as f64 / last))
            .collect()
    }
}

/// Deviation d = φ − φ_base of an evolved profile with its r-derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub value: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
}

impl Deviation {
    fn at(&self, i: usize) -> [f64; 4] {
        [self.value[i], self.d1[i], self.d2[i], self.d3[i]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Analytic(MetricFamily),
    Numeric,
    /// φ = φ_family + deviation, with the deviation differentiated numerically.
    Evolved {
        base: MetricFamily,
        deviation: Deviation,
    },
}

/// φ and its derivatives sampled on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    grid: Vec<f64>,
    phi: Vec<f64>,
    phi_r: Vec<f64>,
    phi_rr: Vec<f64>,
    phi_rrr: Vec<f64>,
    provenance: Provenance,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < GridSpec::MIN_NODES {
        return Err(Error::GridTooSmall {
            min: GridSpec::MIN_NODES,
            got: grid.len(),
        });
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Samples a closed-form family on a uniform grid.
pub fn build_profile(family: &MetricFamily, spec: GridSpec) -> Result<RadialProfile> {
    spec.validate()?;
    let grid = spec.points();
    let n = grid.len();
    let (mut phi, mut phi_r, mut phi_rr, mut phi_rrr) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for &r in &grid {
        let [p, p1, p2, p3] = family.eval(r)?;
        phi.push(p);
        phi_r.push(p1);
        phi_rr.push(p2);
        phi_rrr.push(p3);
    }
    Ok(RadialProfile {
        grid,
        phi,
        phi_r,
        phi_rr,
        phi_rrr,
        provenance: Provenance::Analytic(*family),
    })
}

/// First derivative on a uniform grid (fourth order, one-sided at the ends).
pub fn differentiate_profile(values: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    stencil::differentiate(values, grid)
}

impl RadialProfile {
    /// A numeric profile from explicit derivative arrays.
    pub fn numeric(
        grid: Vec<f64>,
        phi: Vec<f64>,
        phi_r: Vec<f64>,
        phi_rr: Vec<f64>,
        phi_rrr: Vec<f64>,
    ) -> Result<Self> {
        check_grid(&grid)?;
        for arr in [&phi, &phi_r, &phi_rr, &phi_rrr] {
            if arr.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    expected: grid.len(),
                    got: arr.len(),
                });
            }
        }
        Ok(Self {
            grid,
            phi,
            phi_r,
            phi_rr,
            phi_rrr,
            provenance: Provenance::Numeric,
        })
    }

    /// A numeric profile from φ samples on a uniform grid; derivatives are
    /// taken by finite differences.
    pub fn from_samples(grid: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        let phi_r = stencil::derivative(&phi, &grid, 1)?;
        let phi_rr = stencil::derivative(&phi, &grid, 2)?;
        let phi_rrr = stencil::derivative(&phi, &grid, 3)?;
        Self::numeric(grid, phi, phi_r, phi_rr, phi_rrr)
    }

    pub(crate) fn evolved(grid: Vec<f64>, base: MetricFamily, deviation: Deviation) -> Result<Self> {
        check_grid(&grid)?;
        let n = grid.len();
        let (mut phi, mut phi_r, mut phi_rr, mut phi_rrr) =
            (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for (i, &r) in grid.iter().enumerate() {
            let b = base.jet(r)?;
            let d = deviation.at(i);
            phi.push(b.phi + d[0]);
            phi_r.push(b.phi_r + d[1]);
            phi_rr.push(b.phi_rr + d[2]);
            phi_rrr.push(b.phi_rrr + d[3]);
        }
        Ok(Self {
            grid,
            phi,
            phi_r,
            phi_rr,
            phi_rrr,
            provenance: Provenance::Evolved { base, deviation },
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn phi_r(&self) -> &[f64] {
        &self.phi_r
    }

    pub fn phi_rr(&self) -> &[f64] {
        &self.phi_rr
    }

    pub fn phi_rrr(&self) -> &[f64] {
        &self.phi_rrr
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// The closed-form family behind this profile, if any.
    pub fn family(&self) -> Option<&MetricFamily> {
        match &self.provenance {
            Provenance::Analytic(f) => Some(f),
            Provenance::Evolved { base, .. } => Some(base),
            Provenance::Numeric => None,
        }
    }

    pub fn spacing(&self) -> Option<f64> {
        stencil::uniform_spacing(&self.grid).ok()
    }

    /// Overwrites φ_r at one node; for constructing test violations.
    pub fn with_phi_r_at(mut self, index: usize, value: f64) -> Self {
        self.phi_r[index] = value;
        if !matches!(self.provenance, Provenance::Numeric) {
            self.provenance = Provenance::Numeric;
        }
        self
    }

    pub fn jet(&self, i: usize) -> Result<Jet> {
        let r = self.grid[i];
        match &self.provenance {
            Provenance::Analytic(f) => f.jet(r),
            Provenance::Numeric => Ok(Jet::from_derivatives(
                r,
                self.phi[i],
                self.phi_r[i],
                self.phi_rr[i],
                self.phi_rrr[i],
            )),
            Provenance::Evolved { base, deviation } => {
                Ok(Jet::perturbed(&base.jet(r)?, deviation.at(i)))
            }
        }
    }

    pub fn jets(&self) -> Result<Vec<Jet>> {
        (0..self.len()).map(|i| self.jet(i)).collect()
    }

    fn check_inside(&self, r: f64) -> Result<()> {
        let (lo, hi) = (self.grid[0], self.grid[self.len() - 1]);
        if !(r >= lo && r <= hi) {
            return Err(Error::OutOfGrid {
                r,
                r_min: lo,
                r_max: hi,
            });
        }
        Ok(())
    }
}

/// Anything that can produce a [`Jet`] at a given r.
pub trait RadialSource {
    fn jet_at(&self, r: f64) -> Result<Jet>;

    /// Complex dimension the source is tied to, if any.
    fn dimension(&self) -> Option<usize>;
}

impl RadialSource for MetricFamily {
    fn jet_at(&self, r: f64) -> Result<Jet> {
        self.jet(r)
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.n)
    }
}

const INTERPOLATION_POINTS: usize = 6;

impl RadialSource for RadialProfile {
    fn jet_at(&self, r: f64) -> Result<Jet> {
        match &self.provenance {
            Provenance::Analytic(f) => f.jet(r),
            Provenance::Numeric => {
                self.check_inside(r)?;
                let ip = |v: &[f64]| lagrange_interpolate(&self.grid, v, r, INTERPOLATION_POINTS);
                Ok(Jet::from_derivatives(
                    r,
                    ip(&self.phi),
                    ip(&self.phi_r),
                    ip(&self.phi_rr),
                    ip(&self.phi_rrr),
                ))
            }
            Provenance::Evolved { base, deviation } => {
                self.check_inside(r)?;
                let ip = |v: &[f64]| lagrange_interpolate(&self.grid, v, r, INTERPOLATION_POINTS);
                let d = [
                    ip(&deviation.value),
                    ip(&deviation.d1),
                    ip(&deviation.d2),
                    ip(&deviation.d3),
                ];
                Ok(Jet::perturbed(&base.jet(r)?, d))
            }
        }
    }

    fn dimension(&self) -> Option<usize> {
        self.family().map(|f| f.n())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KahlerFailure {
    pub index: usize,
    pub r: f64,
    pub phi: f64,
    pub phi_r: f64,
}

/// Per-node verdict of the positivity conditions φ > 0, φ_r > 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KahlerReport {
    pub node_ok: Vec<bool>,
    pub failures: Vec<KahlerFailure>,
    pub holds: bool,
}

/// P is a Kähler potential exactly where φ > 0 and φ_r > 0.
pub fn check_kahler(profile: &RadialProfile) -> KahlerReport {
    let mut node_ok = Vec::with_capacity(profile.len());
    let mut failures = Vec::new();
    for i in 0..profile.len() {
        let (p, p1) = (profile.phi[i], profile.phi_r[i]);
        let ok = p > 0.0 && p1 > 0.0;
        node_ok.push(ok);
        if !ok {
            failures.push(KahlerFailure {
                index: i,
                r: profile.grid[i],
                phi: p,
                phi_r: p1,
            });
        }
    }
    KahlerReport {
        holds: failures.is_empty(),
        node_ok,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn closed_form_values_at_origin() {
        let f = MetricFamily::paper(1.0, 1.0).unwrap();
        let [p, p1, p2, p3] = f.eval(0.0).unwrap();
        let s3 = 3f64.sqrt();
        assert!(rel(p, s3) < 1e-15);
        assert!(rel(p1, 1.0 / s3) < 1e-15);
        assert!(rel(p2, (2.0 / 3.0) / s3) < 1e-15);
        // 3φ_rφ_rr + φφ_rrr = a²e^{ar}
        assert!(rel(p3, (1.0 - 3.0 * p1 * p2) / p) < 1e-15);
        assert!(rel(p3, 1.0 / (3.0 * s3)) < 1e-15);
    }

    #[test]
    fn degenerate_cone_is_flat() {
        let f = MetricFamily::paper(2.0, 0.0).unwrap();
        assert!(f.is_flat());
        for r in [-7.0, -0.3, 0.0, 4.5] {
            let [p, p1, p2, _] = f.eval(r).unwrap();
            let e = f64::exp(r);
            assert!(rel(p, e) < 1e-15 && rel(p1, e) < 1e-15 && rel(p2, e) < 1e-15);
        }
        assert!(MetricFamily::flat(3).is_flat());
    }

    #[test]
    fn product_identity_on_sampled_points() {
        let f = MetricFamily::paper(1.0, 1.0).unwrap();
        let worst = (0..100)
            .map(|i| -10.0 + 20.0 * i as f64 / 99.0)
            .map(|r| {
                let [p, p1, _, _] = f.eval(r).unwrap();
                rel(p * p1, f64::exp(r))
            })
            .fold(0.0, f64::max);
        assert!(worst <= 1e-14, "{worst}");
    }

    #[test]
    fn third_derivative_matches_richardson_differences() {
        // Richardson-extrapolated central differences of the closed-form φ_rr.
        for family in [
            MetricFamily::paper(1.0, 1.0).unwrap(),
            MetricFamily::paper(0.5, 3.0).unwrap(),
            MetricFamily::general(3, 2.0, 1.5).unwrap(),
        ] {
            for r in [-3.0, -0.5, 0.0, 1.2, 4.0] {
                let d = |h: f64| {
                    (family.eval(r + h).unwrap()[2] - family.eval(r - h).unwrap()[2]) / (2.0 * h)
                };
                let h = 1e-3;
                let richardson = (4.0 * d(h / 2.0) - d(h)) / 3.0;
                let exact = family.eval(r).unwrap()[3];
                assert!(
                    (richardson - exact).abs() <= 1e-9 * exact.abs().max(1e-3),
                    "{family:?} r={r}: {richardson} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn overflow_is_reported_with_location() {
        let f = MetricFamily::paper(1.0, 1.0).unwrap();
        assert_eq!(f.eval(800.0), Err(Error::DomainOverflow { r: 800.0 }));
    }

    #[test]
    fn family_parameter_validation() {
        assert!(MetricFamily::new(1, 1.0, 1.0, Variant::PaperN2).is_err());
        assert!(MetricFamily::paper(0.0, 1.0).is_err());
        assert!(MetricFamily::paper(1.0, -1.0).is_err());
        assert!(MetricFamily::paper(1.5, 1.0).unwrap().bundle_index().is_err());
        assert_eq!(MetricFamily::general(4, 3.0, 1.0).unwrap().bundle_index().unwrap().get(), 3);
        assert!(MetricFamily::general(3, 3.0, 1.0).unwrap().bundle_index().is_err());
    }

    #[test]
    fn build_profile_spacing_and_checks() {
        let f = MetricFamily::paper(1.0, 1.0).unwrap();
        let p = build_profile(&f, GridSpec::new(-12.0, 12.0, 2401).unwrap()).unwrap();
        assert_eq!(p.len(), 2401);
        assert!((p.spacing().unwrap() - 0.01).abs() < 1e-12);
        assert!(check_kahler(&p).holds);
        assert!(matches!(
            GridSpec::new(-12.0, 12.0, 3),
            Err(Error::GridTooSmall { min: 5, got: 3 })
        ));
        let flat = build_profile(
            &MetricFamily::paper(2.0, 0.0).unwrap(),
            GridSpec::new(-5.0, 5.0, 1001).unwrap(),
        )
        .unwrap();
        assert!(flat.phi().iter().zip(flat.phi_r()).all(|(a, b)| rel(*b, *a) < 1e-15));
        assert!(check_kahler(&flat).holds);
    }

    #[test]
    fn check_kahler_flags_the_bad_node() {
        let f = MetricFamily::paper(1.0, 1.0).unwrap();
        let p = build_profile(&f, GridSpec::new(-2.0, 2.0, 41).unwrap())
            .unwrap()
            .with_phi_r_at(17, -1.0);
        let report = check_kahler(&p);
        assert!(!report.holds);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].index, 17);
        assert!(!report.node_ok[17] && report.node_ok[16]);
    }

    #[test]
    fn differentiating_the_family_recovers_phi_r() {
        let f = MetricFamily::paper(1.0, 1.0).unwrap();
        let p = build_profile(&f, GridSpec::new(-12.0, 12.0, 2401).unwrap()).unwrap();
        let d = differentiate_profile(p.phi(), p.grid()).unwrap();
        let worst = p
            .grid()
            .iter()
            .zip(d.iter().zip(p.phi_r()))
            .filter(|(r, _)| r.abs() <= 10.0)
            .map(|(_, (num, exact))| rel(*num, *exact))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-7, "{worst}");
    }

    #[test]
    fn numeric_profile_interpolates_between_nodes() {
        let f = MetricFamily::paper(1.0, 1.0).unwrap();
        let an = build_profile(&f, GridSpec::new(-3.0, 3.0, 601).unwrap()).unwrap();
        let num = RadialProfile::numeric(
            an.grid().to_vec(),
            an.phi().to_vec(),
            an.phi_r().to_vec(),
            an.phi_rr().to_vec(),
            an.phi_rrr().to_vec(),
        )
        .unwrap();
        let j = num.jet_at(0.1234).unwrap();
        let e = f.jet(0.1234).unwrap();
        assert!(rel(j.phi, e.phi) < 1e-12 && rel(j.phi_rrr, e.phi_rrr) < 1e-10);
        assert!(matches!(num.jet_at(3.5), Err(Error::OutOfGrid { .. })));
    }

    proptest! {
        #[test]
        fn paper_family_identity(r in -30.0f64..30.0, a in 0.2f64..1.9, c in 0.0f64..5.0) {
            let f = MetricFamily::paper(a, c).unwrap();
            let [p, p1, _, _] = f.eval(r).unwrap();
            prop_assert!(rel(p * p1, (a * r).exp()) <= 1e-13);
        }

        #[test]
        fn general_family_identity(r in -30.0f64..30.0, n in 2usize..6, a in 0.2f64..3.0, c in 0.0f64..5.0) {
            let f = MetricFamily::general(n, a, c).unwrap();
            let [p, p1, _, _] = f.eval(r).unwrap();
            prop_assert!(rel(p.powi(n as i32 - 1) * p1, (a * r).exp()) <= 1e-13);
        }

        #[test]
        fn translation_is_a_rescaling(r in -10.0f64..10.0, b in -4.0f64..4.0, a in 0.2f64..1.9, c in 0.1f64..5.0) {
            let lhs = MetricFamily::paper(a, c).unwrap().eval(r + b).unwrap()[0];
            let rhs = (a * b / 2.0).exp()
                * MetricFamily::paper(a, c * (-a * b).exp()).unwrap().eval(r).unwrap()[0];
            prop_assert!(rel(lhs, rhs) <= 1e-13);
        }
    }
}

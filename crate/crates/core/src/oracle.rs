//! Finite-difference arbiter for the closed-form tensor formulas.
//!
//! Everything here is computed from the Kähler potential P (or the metric it
//! defines) by central differences in the 2n real coordinates, so it shares no
//! algebra with [`crate::curvature`].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::curvature::{
    christoffels_at, inverse_metric_at, metric_at, psi_at, ricci_at, riemann_at, Christoffels, FormulaVersion,
    HermitianForm, RiemannTensor, C64,
};
use crate::error::{Error, Result};
use crate::flow::{flow_rhs, initial_derivatives, FlowState, SolverControls};
use crate::numerics::quadrature::{integrate, GaussLegendre};
use crate::radial::{build_profile, BundleIndex, GridSpec, MetricFamily, Variant};

/// Default relative step for differences of P.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Default relative step for differences of the closed-form metric. Second
/// differences of log det g lose about ε/h² to rounding, so this is larger.
pub const DEFAULT_CURVATURE_STEP: f64 = 1e-4;
/// Relative discrepancy below which a finite-difference comparison passes.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-4;
/// Tolerance for comparisons against one time step of the flow.
pub const TIME_DIFFERENCE_TOLERANCE: f64 = 1e-3;
/// Time step used for time-differenced rates.
pub const TIME_DIFFERENCE_STEP: f64 = 1e-7;
/// Rates are compared relative to at least this magnitude: differencing over
/// one step leaves absolute noise near 1e-7, which swamps a rate that vanishes.
pub const RATE_FLOOR: f64 = 1e-3;

const MIN_STEP: f64 = 1e-7;
const MAX_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AuditVerdict {
    Consistent,
    Inconsistent,
}

/// A comparison between a closed-form value and its oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditFinding {
    pub location: String,
    pub quantity: String,
    pub variant: Option<Variant>,
    pub version: Option<FormulaVersion>,
    /// Closed-form value at the worst sample (the largest modulus for tensors).
    pub printed_value: f64,
    pub oracle_value: f64,
    /// Relative discrepancy, ≥ 0.
    pub discrepancy: f64,
    pub tolerance: f64,
    pub verdict: AuditVerdict,
}

impl AuditFinding {
    pub fn new(
        location: impl Into<String>,
        quantity: impl Into<String>,
        printed_value: f64,
        oracle_value: f64,
        discrepancy: f64,
        tolerance: f64,
    ) -> Self {
        // NaN discrepancies count as inconsistent.
        let verdict = if discrepancy <= tolerance {
            AuditVerdict::Consistent
        } else {
            AuditVerdict::Inconsistent
        };
        Self {
            location: location.into(),
            quantity: quantity.into(),
            variant: None,
            version: None,
            printed_value,
            oracle_value,
            discrepancy: discrepancy.abs(),
            tolerance,
            verdict,
        }
    }

    pub fn tagged(mut self, variant: Variant, version: Option<FormulaVersion>) -> Self {
        self.variant = Some(variant);
        self.version = version;
        self
    }

    pub fn is_consistent(&self) -> bool {
        self.verdict == AuditVerdict::Consistent
    }
}

/// P(r) = ∫₀ʳ φ ds.
pub fn potential_value(family: &MetricFamily, r: f64) -> Result<f64> {
    let phi = |s: f64| family.eval(s).map(|e| e[0]).unwrap_or(f64::NAN);
    family.eval(r)?;
    integrate(phi, 0.0, r, 0.0, 1e-14)
}

/// P(r₀ + Δr) − P(r₀), accurate relative to the increment itself.
fn potential_increment(family: &MetricFamily, r0: f64, dr: f64) -> f64 {
    thread_local! {
        static RULE: GaussLegendre = GaussLegendre::new(10);
    }
    // Integrating over the offset keeps the interval width exact; r₀ + Δr
    // would round it.
    RULE.with(|g| g.integrate(|u| family.eval(r0 + u).map(|e| e[0]).unwrap_or(f64::NAN), 0.0, dr, 1))
}

fn norm(z: &[C64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn absolute_step(z: &[C64], h: f64) -> Result<f64> {
    if !(MIN_STEP..=MAX_STEP).contains(&h) {
        return Err(Error::InvalidStep { h });
    }
    let size = norm(z);
    if size == 0.0 {
        return Err(Error::ZeroPoint);
    }
    let step = h * size;
    if !(step > 1e-150) {
        return Err(Error::InvalidStep { h: step });
    }
    Ok(step)
}

fn check_dimension(family: &MetricFamily, z: &[C64]) -> Result<()> {
    if z.len() != family.n() {
        return Err(Error::DimensionMismatch {
            expected: family.n(),
            got: z.len(),
        });
    }
    Ok(())
}

/// Unit displacement along real coordinate `a` (x₀, y₀, x₁, y₁, …).
fn shifted(z: &[C64], moves: &[(usize, f64)]) -> Vec<C64> {
    let mut out = z.to_vec();
    for &(a, h) in moves {
        if a % 2 == 0 {
            out[a / 2].re += h;
        } else {
            out[a / 2].im += h;
        }
    }
    out
}

/// Displacement moves from z, as a function of the displaced point.
type Sampler<'a, T> = dyn Fn(&[(usize, f64)]) -> Result<T> + 'a;

/// ∂ᵢ∂̄ⱼ f for a real or matrix-valued f, from central second differences in
/// the real coordinates. `f` receives the displacement and may return an
/// increment f(z + δ) − f(z).
fn complex_hessian(n: usize, h: f64, f: &Sampler<'_, DMatrix<C64>>) -> Result<Vec<Vec<DMatrix<C64>>>> {
    let dim = 2 * n;
    let f0 = f(&[])?;
    let mut real = vec![vec![DMatrix::<C64>::zeros(f0.nrows(), f0.ncols()); dim]; dim];
    for a in 0..dim {
        let plus = f(&[(a, h)])?;
        let minus = f(&[(a, -h)])?;
        real[a][a] = (plus - &f0 * C64::new(2.0, 0.0) + minus) / C64::new(h * h, 0.0);
        for b in a + 1..dim {
            let pp = f(&[(a, h), (b, h)])?;
            let pm = f(&[(a, h), (b, -h)])?;
            let mp = f(&[(a, -h), (b, h)])?;
            let mm = f(&[(a, -h), (b, -h)])?;
            let v = (pp - pm - mp + mm) / C64::new(4.0 * h * h, 0.0);
            real[b][a] = v.clone();
            real[a][b] = v;
        }
    }
    let i = C64::new(0.0, 1.0);
    let quarter = C64::new(0.25, 0.0);
    Ok((0..n)
        .map(|p| {
            (0..n)
                .map(|q| {
                    let (xp, yp, xq, yq) = (2 * p, 2 * p + 1, 2 * q, 2 * q + 1);
                    (&real[xp][xq] + &real[yp][yq] + (&real[xp][yq] - &real[yp][xq]) * i) * quarter
                })
                .collect()
        })
        .collect())
}

/// (∂ᵢf, ∂̄ᵢf) for each i from central first differences.
fn complex_gradient(
    n: usize,
    h: f64,
    f: &Sampler<'_, DMatrix<C64>>,
) -> Result<(Vec<DMatrix<C64>>, Vec<DMatrix<C64>>)> {
    let i = C64::new(0.0, 1.0);
    let mut holo = Vec::with_capacity(n);
    let mut anti = Vec::with_capacity(n);
    for p in 0..n {
        let dx = (f(&[(2 * p, h)])? - f(&[(2 * p, -h)])?) / C64::new(2.0 * h, 0.0);
        let dy = (f(&[(2 * p + 1, h)])? - f(&[(2 * p + 1, -h)])?) / C64::new(2.0 * h, 0.0);
        holo.push((&dx - &dy * i) * C64::new(0.5, 0.0));
        anti.push((dx + dy * i) * C64::new(0.5, 0.0));
    }
    Ok((holo, anti))
}

fn scalar(v: f64) -> DMatrix<C64> {
    DMatrix::from_element(1, 1, C64::new(v, 0.0))
}

fn form_of(hess: &[Vec<DMatrix<C64>>], sign: f64) -> Result<HermitianForm> {
    let n = hess.len();
    let m = DMatrix::from_fn(n, n, |i, j| hess[i][j][(0, 0)] * sign);
    HermitianForm::symmetrize(&m)
}

/// g_{ij̄} = ∂ᵢ∂̄ⱼP by central differences of P with relative step h.
pub fn fd_metric(family: &MetricFamily, z: &[C64], h: f64) -> Result<HermitianForm> {
    check_dimension(family, z)?;
    let step = absolute_step(z, h)?;
    let w0: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    let r0 = w0.ln();
    family.eval(r0)?;
    let increment = |moves: &[(usize, f64)]| -> Result<DMatrix<C64>> {
        if moves.is_empty() {
            return Ok(scalar(0.0));
        }
        // w − w₀ without cancellation: Σ 2 Re(z̄ δ) + |δ|².
        let mut delta = vec![C64::new(0.0, 0.0); z.len()];
        for &(a, hh) in moves {
            if a % 2 == 0 {
                delta[a / 2].re += hh;
            } else {
                delta[a / 2].im += hh;
            }
        }
        let dw: f64 = z
            .iter()
            .zip(&delta)
            .map(|(zi, di)| 2.0 * (zi.conj() * di).re + di.norm_sqr())
            .sum();
        let dr = (dw / w0).ln_1p();
        let v = potential_increment(family, r0, dr);
        if !v.is_finite() {
            return Err(Error::DomainOverflow { r: r0 + dr });
        }
        Ok(scalar(v))
    };
    form_of(&complex_hessian(z.len(), step, &increment)?, 1.0)
}

/// Ricci form −∂ᵢ∂̄ⱼ log det g, with det g taken from the closed-form metric
/// by LU factorisation. Does not use any Ricci-potential formula.
pub fn fd_ricci(family: &MetricFamily, z: &[C64], h: f64, n: usize) -> Result<HermitianForm> {
    if n != family.n() {
        return Err(Error::DimensionMismatch {
            expected: family.n(),
            got: n,
        });
    }
    check_dimension(family, z)?;
    let step = absolute_step(z, h)?;
    let log_det = |moves: &[(usize, f64)]| -> Result<DMatrix<C64>> {
        let g = metric_at(family, &shifted(z, moves))?;
        Ok(scalar(log_determinant(g.matrix())?))
    };
    form_of(&complex_hessian(n, step, &log_det)?, -1.0)
}

/// Ricci form from P alone: log det of [`fd_metric`] differenced again.
/// Slow and only accurate to about 1e−5.
pub fn fd_ricci_full(family: &MetricFamily, z: &[C64]) -> Result<HermitianForm> {
    const INNER: f64 = 1e-4;
    const OUTER: f64 = 1e-3;
    check_dimension(family, z)?;
    let step = absolute_step(z, OUTER)?;
    let log_det = |moves: &[(usize, f64)]| -> Result<DMatrix<C64>> {
        let g = fd_metric(family, &shifted(z, moves), INNER)?;
        Ok(scalar(log_determinant(g.matrix())?))
    };
    form_of(&complex_hessian(z.len(), step, &log_det)?, -1.0)
}

fn log_determinant(m: &DMatrix<C64>) -> Result<f64> {
    let det = m.clone().lu().determinant();
    if !(det.re > 0.0) || !det.re.is_finite() {
        return Err(Error::Precondition(format!("metric determinant {det} is not positive")));
    }
    Ok(det.re.ln())
}

fn metric_sampler<'a>(family: &'a MetricFamily, z: &'a [C64]) -> impl Fn(&[(usize, f64)]) -> Result<DMatrix<C64>> + 'a {
    move |moves| Ok(metric_at(family, &shifted(z, moves))?.matrix().clone())
}

fn inverse_of(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Precondition("metric is singular".into()))
}

/// Γᵐᵢₖ = g^{ml̄} ∂ᵢ g_{kl̄} with the closed-form metric differenced numerically
/// and inverted numerically.
pub fn fd_christoffel(family: &MetricFamily, z: &[C64], h: f64) -> Result<Christoffels> {
    check_dimension(family, z)?;
    if z.len() != 2 {
        return Err(Error::UnsupportedDimension {
            what: "Christoffel symbols",
            n: z.len(),
        });
    }
    let step = absolute_step(z, h)?;
    let g = metric_at(family, z)?;
    let inv = inverse_of(g.matrix())?;
    let (holo, _) = complex_gradient(2, step, &metric_sampler(family, z))?;
    let mut gamma = [[[C64::new(0.0, 0.0); 2]; 2]; 2];
    for (m, plane) in gamma.iter_mut().enumerate() {
        for (i, row) in plane.iter_mut().enumerate() {
            for (k, entry) in row.iter_mut().enumerate() {
                *entry = (0..2).map(|l| holo[i][(k, l)] * inv[(l, m)]).sum();
            }
        }
    }
    Ok(Christoffels { gamma })
}

/// R_{ij̄kl̄} = −∂ᵢ∂̄ⱼ g_{kl̄} + g^{pq̄} ∂ᵢ g_{kq̄} ∂̄ⱼ g_{pl̄}, evaluated with
/// differences of the closed-form metric.
pub fn fd_riemann(family: &MetricFamily, z: &[C64], h: f64) -> Result<RiemannTensor> {
    check_dimension(family, z)?;
    if z.len() != 2 {
        return Err(Error::UnsupportedDimension {
            what: "the Riemann tensor",
            n: z.len(),
        });
    }
    let step = absolute_step(z, h)?;
    let sample = metric_sampler(family, z);
    let inv = inverse_of(&sample(&[])?)?;
    let hess = complex_hessian(2, step, &sample)?;
    let (holo, anti) = complex_gradient(2, step, &sample)?;
    let mut r = [[[[C64::new(0.0, 0.0); 2]; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let mut v = -hess[i][j][(k, l)];
                    for p in 0..2 {
                        for q in 0..2 {
                            v += inv[(q, p)] * holo[i][(k, q)] * anti[j][(p, l)];
                        }
                    }
                    r[i][j][k][l] = v;
                }
            }
        }
    }
    Ok(RiemannTensor { r })
}

/// (f, f_r) of a radial form (f/w)δᵢⱼ + ((f_r − f)/w²) z̄ᵢzⱼ, read off at z:
/// zᵀF z̄ = f_r and w·tr F = (n − 1)f + f_r.
pub fn radial_coefficients(form: &HermitianForm, z: &[C64]) -> (f64, f64) {
    let n = z.len();
    let w: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    let mut along = C64::new(0.0, 0.0);
    let mut trace = 0.0;
    for i in 0..n {
        trace += form.get(i, i).re;
        for j in 0..n {
            along += z[i] * form.get(i, j) * z[j].conj();
        }
    }
    let f_r = along.re;
    ((w * trace - f_r) / (n - 1) as f64, f_r)
}

/// Result of fitting φ(w) = a₀ + a₁wᵏ + a₂w²ᵏ + a₃w³ᵏ near the zero section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalabiFit {
    pub k: u32,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Largest pointwise misfit over the samples.
    pub residual: f64,
    /// a₀ > 0, a₁ > 0 and residual ≤ 1e−10·a₀.
    pub extends: bool,
}

pub const CALABI_SAMPLES: usize = 50;
pub const CALABI_W_MIN: f64 = 1e-8;
pub const CALABI_W_MAX: f64 = 1e-3;

/// Least-squares fit of φ in powers of wᵏ on log-spaced w ∈ [1e−8, 1e−3].
pub fn series_fit_calabi(family: &MetricFamily, k: BundleIndex) -> Result<CalabiFit> {
    let k_exp = k.get() as i32;
    let (lo, hi) = (CALABI_W_MIN.ln(), CALABI_W_MAX.ln());
    let ws: Vec<f64> = (0..CALABI_SAMPLES)
        .map(|i| (lo + (hi - lo) * i as f64 / (CALABI_SAMPLES - 1) as f64).exp())
        .collect();
    let phi = ws
        .iter()
        .map(|w| family.eval(w.ln()).map(|e| e[0]))
        .collect::<Result<Vec<_>>>()?;
    // Columns scaled by their largest entry so the SVD sees unit-sized data.
    let scales: Vec<f64> = (0..4).map(|p| CALABI_W_MAX.powi(p * k_exp)).collect();
    let a = DMatrix::from_fn(ws.len(), 4, |i, p| ws[i].powi(p as i32 * k_exp) / scales[p]);
    let b = DVector::from_vec(phi.clone());
    let x = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-15)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let residual = (&a * &x - &b).amax();
    let coef: Vec<f64> = (0..4).map(|p| x[p] / scales[p]).collect();
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::Fit("non-finite coefficients".into()));
    }
    Ok(CalabiFit {
        k: k.get(),
        a0: coef[0],
        a1: coef[1],
        a2: coef[2],
        a3: coef[3],
        residual,
        extends: coef[0] > 0.0 && coef[1] > 0.0 && residual <= 1e-10 * coef[0],
    })
}

/// Sample radii for the general-dimension audit.
const AUDIT_RADII: (f64, f64, usize) = (-3.0, 3.0, 13);

/// A fixed point off the coordinate axes at radius e^{r/2}.
fn generic_point(r: f64, n: usize) -> Vec<C64> {
    let raw: Vec<C64> = (0..n)
        .map(|i| C64::new(1.0 + 0.25 * i as f64, if i % 2 == 1 { 0.5 } else { -0.3 }))
        .collect();
    let scale = (0.5 * r).exp() / norm(&raw);
    raw.into_iter().map(|c| c * scale).collect()
}

/// Largest gap between the two series, relative to the oracle's magnitude but
/// never to less than `floor`.
fn worst(printed: &[f64], oracle: &[f64], floor: f64) -> (f64, f64, f64) {
    let scale = oracle.iter().map(|v| v.abs()).fold(floor, f64::max);
    let mut at = 0;
    let mut diff = 0.0f64;
    for i in 0..printed.len() {
        let d = (printed[i] - oracle[i]).abs();
        if d > diff || d.is_nan() {
            diff = d;
            at = i;
        }
    }
    let rel = if scale > 0.0 { diff / scale } else { diff };
    (printed[at], oracle[at], rel)
}

struct VariantEvidence {
    family: MetricFamily,
    radii: Vec<f64>,
    psi_fd: Vec<f64>,
    flow_r: Vec<f64>,
    dpsir_flow: Result<Vec<f64>>,
}

fn gather(variant: Variant, n: usize, a: f64, c: f64) -> Result<VariantEvidence> {
    let family = MetricFamily::new(n, a, c, variant)?;
    let (lo, hi, count) = AUDIT_RADII;
    let spec = GridSpec::new(lo, hi, count)?;
    let radii = spec.points();
    let psi_fd = radii
        .iter()
        .map(|&r| {
            let z = generic_point(r, n);
            let rc = fd_ricci(&family, &z, DEFAULT_CURVATURE_STEP, n)?;
            Ok(radial_coefficients(&rc, &z).0)
        })
        .collect::<Result<Vec<_>>>()?;
    // One step of the true flow; ψ_r is differenced in time on nodes near the
    // sample radii.
    let mut flow_r = Vec::new();
    let dpsir_flow = (|| {
        let s0 = FlowState::initial(&family, GridSpec::default(), FormulaVersion::Corrected)?;
        let s1 = s0.step_implicit(TIME_DIFFERENCE_STEP, &SolverControls::default())?;
        let (p0, p1) = (s0.psi_window()?, s1.psi_window()?);
        let mut rates = Vec::new();
        for (x, y) in p0.iter().zip(&p1) {
            if x.0 >= lo - 1e-9 && x.0 <= hi + 1e-9 {
                flow_r.push(x.0);
                rates.push((y.2 - x.2) / (s1.t() - s0.t()));
            }
        }
        Ok(rates)
    })();
    Ok(VariantEvidence {
        family,
        radii,
        psi_fd,
        flow_r,
        dpsir_flow,
    })
}

fn findings_for(ev: &VariantEvidence, version: FormulaVersion) -> Result<Vec<AuditFinding>> {
    let fam = &ev.family;
    let n = fam.n();
    let variant = fam.variant();
    let where_ = |what: &str| format!("{what}, n = {n}, {variant} family, {version} formula");
    let mut out = Vec::new();

    let psi_printed = ev
        .radii
        .iter()
        .map(|&r| psi_at(&fam.jet(r)?, n, version).map(|p| p.0))
        .collect::<Result<Vec<_>>>()?;
    let (p, o, d) = worst(&psi_printed, &ev.psi_fd, 0.0);
    out.push(AuditFinding::new(where_("Ricci potential ψ vs −∂∂̄ log det g"), "psi", p, o, d, CONSISTENCY_TOLERANCE).tagged(variant, Some(version)));

    let profile = build_profile(fam, GridSpec::new(AUDIT_RADII.0, AUDIT_RADII.1, AUDIT_RADII.2)?)?;
    let rate = flow_rhs(&profile, n, version)?;
    let rate_fd: Vec<f64> = ev.psi_fd.iter().map(|v| -v).collect();
    let (p, o, d) = worst(&rate, &rate_fd, 0.0);
    out.push(AuditFinding::new(where_("flow velocity φ_t vs −ψ from −∂∂̄ log det g"), "phi_t", p, o, d, CONSISTENCY_TOLERANCE).tagged(variant, Some(version)));

    let label = where_("initial rate ∂ψ_r/∂t vs one implicit step");
    match &ev.dpsir_flow {
        Ok(rates) => {
            let printed = ev
                .flow_r
                .iter()
                .map(|&r| initial_derivatives(fam, r, version).map(|d| d.dpsir_dt))
                .collect::<Result<Vec<_>>>()?;
            let (p, o, d) = worst(&printed, rates, RATE_FLOOR);
            out.push(AuditFinding::new(label, "dpsi_r_dt", p, o, d, TIME_DIFFERENCE_TOLERANCE).tagged(variant, Some(version)));
        }
        Err(e) => {
            let mut f = AuditFinding::new(format!("{label} (step failed: {e})"), "dpsi_r_dt", f64::NAN, f64::NAN, f64::NAN, TIME_DIFFERENCE_TOLERANCE);
            f = f.tagged(variant, Some(version));
            out.push(f);
        }
    }
    Ok(out)
}

/// Audits the general-dimension formulas: for each family variant and
/// formula version, ψ and φ_t against [`fd_ricci`] and ∂ψ_r/∂t at t = 0
/// against one implicit step of the flow.
pub fn audit_general_dimension(n: usize, a: f64, c: f64) -> Result<Vec<AuditFinding>> {
    if n < 2 {
        return Err(Error::Precondition(format!("audit needs n ≥ 2, got {n}")));
    }
    let variants = [Variant::PaperN2, Variant::CorrectedGeneral];
    let evidence: Vec<Result<VariantEvidence>> = variants.par_iter().map(|&v| gather(v, n, a, c)).collect();
    let mut out = Vec::new();
    for ev in evidence {
        let ev = ev?;
        for version in [FormulaVersion::Printed, FormulaVersion::Corrected] {
            out.extend(findings_for(&ev, version)?);
        }
    }
    Ok(out)
}

/// Seeded sample points with |z| log-uniform in [0.1, 10] and uniformly
/// random direction.
pub fn sample_points(n: usize, seed: u64, count: usize) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let radius = 10f64.powf(rng.gen_range(-1.0..=1.0));
            loop {
                let raw: Vec<C64> = (0..n)
                    .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                let size = norm(&raw);
                if size > 0.1 && size <= 1.0 {
                    break raw.into_iter().map(|c| c * (radius / size)).collect();
                }
            }
        })
        .collect()
}

fn tensor_distance(closed: &[C64], oracle: &[C64]) -> (f64, f64, f64) {
    let scale_c = closed.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let scale_o = oracle.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let diff = closed
        .iter()
        .zip(oracle)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let scale = scale_c.max(scale_o);
    (scale_c, scale_o, if scale > 0.0 { diff / scale } else { 0.0 })
}

fn form_entries(f: &HermitianForm) -> Vec<C64> {
    f.matrix().iter().copied().collect()
}

/// Closed-form g, g⁻¹, Ricci (and, for n = 2, Christoffel symbols and the
/// Riemann tensor) against the oracles at `count` seeded points. One finding
/// per quantity, reporting the worst point.
pub fn cross_check(family: &MetricFamily, seed: u64, count: usize, tolerance: f64) -> Result<Vec<AuditFinding>> {
    let n = family.n();
    let points = sample_points(n, seed, count);
    let per_point: Vec<Result<Vec<(&'static str, (f64, f64, f64))>>> = points
        .par_iter()
        .map(|z| {
            let mut row = Vec::new();
            let g = metric_at(family, z)?;
            let g_fd = fd_metric(family, z, DEFAULT_STEP)?;
            row.push(("metric", tensor_distance(&form_entries(&g), &form_entries(&g_fd))));
            let inv = inverse_metric_at(family, z)?;
            let inv_fd = inverse_of(g_fd.matrix())?;
            row.push(("inverse_metric", tensor_distance(&form_entries(&inv), &inv_fd.iter().copied().collect::<Vec<_>>())));
            let rc = ricci_at(family, z, FormulaVersion::Corrected)?;
            let rc_fd = fd_ricci(family, z, DEFAULT_CURVATURE_STEP, n)?;
            row.push(("ricci", tensor_distance(&form_entries(&rc), &form_entries(&rc_fd))));
            if n == 2 {
                let ch = christoffels_at(family, z)?;
                let ch_fd = fd_christoffel(family, z, DEFAULT_CURVATURE_STEP)?;
                row.push(("christoffel", tensor_distance(&ch.six(), &ch_fd.six())));
                let rm = riemann_at(family, z)?;
                let rm_fd = fd_riemann(family, z, DEFAULT_CURVATURE_STEP)?;
                let a: Vec<C64> = rm.components().map(|c| c.1).collect();
                let b: Vec<C64> = rm_fd.components().map(|c| c.1).collect();
                row.push(("riemann", tensor_distance(&a, &b)));
            }
            Ok(row)
        })
        .collect();
    let rows = per_point.into_iter().collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    let Some(first) = rows.first() else {
        return Ok(out);
    };
    for (q, (name, _)) in first.iter().enumerate() {
        let (at, worst) = rows
            .iter()
            .enumerate()
            .map(|(i, row)| (i, row[q].1))
            .fold((0, (0.0, 0.0, -1.0)), |acc, x| if x.1 .2 > acc.1 .2 { x } else { acc });
        let z = &points[at];
        let location = format!(
            "closed form vs finite differences, worst of {} points at |z| = {:.4}",
            rows.len(),
            norm(z)
        );
        out.push(AuditFinding::new(location, *name, worst.0, worst.1, worst.2, tolerance).tagged(family.variant(), None));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z2(a: f64, b: f64) -> Vec<C64> {
        vec![C64::new(a, 0.0), C64::new(b, 0.0)]
    }

    #[test]
    fn vanishing_rates_are_not_judged_on_noise() {
        let (_, _, d) = worst(&[0.0, 1e-16], &[2e-7, -1e-7], RATE_FLOOR);
        assert!(d < TIME_DIFFERENCE_TOLERANCE);
        let (_, _, d) = worst(&[0.5, 1.0], &[0.5, 1.1], RATE_FLOOR);
        assert!((d - 0.1 / 1.1).abs() < 1e-12);
    }

    fn family() -> MetricFamily {
        MetricFamily::paper(1.0, 1.0).unwrap()
    }

    #[test]
    fn flat_potential_is_w_minus_one() {
        let f = MetricFamily::flat(2);
        for r in [-3.0, 0.0, 0.7, 2.5] {
            let p = potential_value(&f, r).unwrap();
            assert!((p - (r.exp() - 1.0)).abs() < 1e-13 * r.exp().max(1.0), "r={r}");
        }
    }

    #[test]
    fn potential_differentiates_back_to_phi() {
        let f = family();
        for r in [-2.0, 0.3, 1.5] {
            let h = 1e-3;
            let d = (potential_value(&f, r + h).unwrap() - potential_value(&f, r - h).unwrap()) / (2.0 * h);
            let d4 = (8.0 * (potential_value(&f, r + h).unwrap() - potential_value(&f, r - h).unwrap())
                - (potential_value(&f, r + 2.0 * h).unwrap() - potential_value(&f, r - 2.0 * h).unwrap()))
                / (12.0 * h);
            let phi = f.eval(r).unwrap()[0];
            assert!((d4 - phi).abs() < 1e-10, "r={r}: {d4} vs {phi}");
            assert!((d - phi).abs() < 1e-6);
        }
    }

    #[test]
    fn potential_agrees_across_quadrature_orders() {
        let f = family();
        let adaptive = potential_value(&f, 1.0).unwrap();
        let phi = |s: f64| f.eval(s).unwrap()[0];
        let fixed = GaussLegendre::new(20).integrate(phi, 0.0, 1.0, 4);
        assert!((adaptive - fixed).abs() < 1e-12);
    }

    #[test]
    fn fd_metric_of_flat_space_is_identity() {
        let f = MetricFamily::flat(2);
        for z in [z2(1.0, 0.0), vec![C64::new(0.3, -0.2), C64::new(1.1, 0.7)]] {
            let g = fd_metric(&f, &z, DEFAULT_STEP).unwrap();
            let id = HermitianForm::from_fn(2, |i, j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0));
            assert!((g.relative_distance(&id)) < 1e-8);
        }
    }

    #[test]
    fn fd_metric_matches_closed_form() {
        let f = family();
        let g = fd_metric(&f, &z2(1.0, 0.0), 1e-5).unwrap();
        let s3 = 3f64.sqrt();
        assert!((g.get(0, 0).re - 1.0 / s3).abs() < 1e-6 / s3);
        assert!((g.get(1, 1).re - s3).abs() < 1e-6 * s3);
        assert!(g.get(0, 1).norm() < 1e-6);
        let z = z2(1.0, 1.0);
        let g = fd_metric(&f, &z, 1e-5).unwrap();
        assert!(g.relative_distance(&metric_at(&f, &z).unwrap()) < 1e-6);
        assert!(g.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn fd_steps_are_validated() {
        let f = family();
        assert!(matches!(fd_metric(&f, &z2(1.0, 0.0), 1e-2), Err(Error::InvalidStep { .. })));
        assert!(matches!(fd_metric(&f, &z2(0.0, 0.0), 1e-5), Err(Error::ZeroPoint)));
        assert!(matches!(fd_metric(&f, &[C64::new(1.0, 0.0); 3], 1e-5), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn fd_metric_converges_at_second_order() {
        let f = family();
        let z = vec![C64::new(0.7, 0.2), C64::new(-0.4, 0.9)];
        let exact = metric_at(&f, &z).unwrap();
        let e1 = fd_metric(&f, &z, 1e-3).unwrap().relative_distance(&exact);
        let e2 = fd_metric(&f, &z, 5e-4).unwrap().relative_distance(&exact);
        assert!(e1 > 1e-10 && e1 / e2 >= 3.0, "{e1} {e2}");
    }

    #[test]
    fn fd_ricci_at_axis_point() {
        let f = family();
        let rc = fd_ricci(&f, &z2(1.0, 0.0), DEFAULT_CURVATURE_STEP, 2).unwrap();
        assert!(rc.get(0, 0).norm() < 1e-6);
        assert!((rc.get(1, 1).re - 1.0).abs() < 1e-6);
        assert!(rc.get(0, 1).norm() < 1e-6);
    }

    #[test]
    fn fd_ricci_of_flat_space_vanishes() {
        let rc = fd_ricci(&MetricFamily::flat(2), &z2(0.6, 0.8), DEFAULT_CURVATURE_STEP, 2).unwrap();
        assert!(rc.max_abs() < 1e-8);
    }

    #[test]
    fn fd_ricci_in_dimension_three_has_constant_potential() {
        let f = MetricFamily::general(3, 1.0, 1.0).unwrap();
        let z = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
        let rc = fd_ricci(&f, &z, DEFAULT_CURVATURE_STEP, 3).unwrap();
        // diag(ψ_r, ψ, ψ) at w = 1 with ψ = 2.
        assert!(rc.get(0, 0).norm() < 1e-5);
        assert!((rc.get(1, 1).re - 2.0).abs() < 1e-5);
        assert!((rc.get(2, 2).re - 2.0).abs() < 1e-5);
        let (psi, psi_r) = radial_coefficients(&rc, &z);
        assert!((psi - 2.0).abs() < 1e-5 && psi_r.abs() < 1e-5);
    }

    #[test]
    fn fully_differenced_ricci_agrees_loosely() {
        let f = family();
        let z = vec![C64::new(0.8, 0.1), C64::new(0.3, -0.5)];
        let full = fd_ricci_full(&f, &z).unwrap();
        let closed = ricci_at(&f, &z, FormulaVersion::Corrected).unwrap();
        assert!(full.relative_distance(&closed) < 1e-4);
    }

    #[test]
    fn christoffels_match_at_general_point() {
        let f = family();
        for z in [z2(1.0, 0.0), z2(1.0, 1.0), vec![C64::new(0.3, 1.2), C64::new(-0.7, 0.4)]] {
            let a = christoffels_at(&f, &z).unwrap().six();
            let b = fd_christoffel(&f, &z, DEFAULT_CURVATURE_STEP).unwrap().six();
            let (_, _, d) = tensor_distance(&a, &b);
            assert!(d < 1e-6, "{z:?}: {d}");
        }
    }

    #[test]
    fn riemann_matches_at_general_point() {
        let f = family();
        for z in [z2(1.0, 0.0), z2(1.0, 1.0), vec![C64::new(0.3, 1.2), C64::new(-0.7, 0.4)]] {
            let a: Vec<C64> = riemann_at(&f, &z).unwrap().components().map(|c| c.1).collect();
            let b: Vec<C64> = fd_riemann(&f, &z, DEFAULT_CURVATURE_STEP).unwrap().components().map(|c| c.1).collect();
            let (_, _, d) = tensor_distance(&a, &b);
            assert!(d < 1e-5, "{z:?}: {d}");
        }
    }

    #[test]
    fn riemann_frame_value_reproduces_bxx() {
        let f = family();
        let z = z2(1.0, 0.0);
        let rm = fd_riemann(&f, &z, DEFAULT_CURVATURE_STEP).unwrap();
        let phi_r = 1.0 / 3f64.sqrt();
        let x = [C64::new(1.0 / phi_r.sqrt(), 0.0), C64::new(0.0, 0.0)];
        let bxx = rm.contract(x, x).re;
        let expected = 1.0 / 3f64.sqrt().powi(3);
        assert!((bxx - expected).abs() < 1e-6 * expected, "{bxx} vs {expected}");
    }

    #[test]
    fn flat_riemann_vanishes() {
        let rm = fd_riemann(&MetricFamily::flat(2), &z2(0.6, 0.8), DEFAULT_CURVATURE_STEP).unwrap();
        assert!(rm.max_abs() < 1e-7);
    }

    #[test]
    fn calabi_fit_recovers_expansion() {
        let k = BundleIndex::new(1).unwrap();
        let fit = series_fit_calabi(&family(), k).unwrap();
        assert!((fit.a0 - 1.0).abs() < 1e-8 && (fit.a1 - 1.0).abs() < 1e-6 && (fit.a2 + 0.5).abs() < 1e-4);
        assert!(fit.extends);
        let fit = series_fit_calabi(&MetricFamily::paper(1.0, 4.0).unwrap(), k).unwrap();
        assert!((fit.a0 - 2.0).abs() < 1e-8 && (fit.a1 - 0.5).abs() < 1e-6 && (fit.a2 + 0.0625).abs() < 1e-5);
    }

    #[test]
    fn calabi_fit_flags_wrong_index() {
        let fit = series_fit_calabi(&family(), BundleIndex::new(2).unwrap()).unwrap();
        assert!(!fit.extends);
        assert!(fit.residual > 1e-10 * fit.a0);
    }

    #[test]
    fn calabi_fit_for_general_family() {
        let (n, a, c) = (4usize, 3.0, 2.0);
        let f = MetricFamily::general(n, a, c).unwrap();
        let fit = series_fit_calabi(&f, BundleIndex::new(3).unwrap()).unwrap();
        let a0 = c.powf(1.0 / n as f64);
        let a1 = c.powf(1.0 / n as f64 - 1.0) / a;
        assert!((fit.a0 / a0 - 1.0).abs() < 1e-8 && (fit.a1 / a1 - 1.0).abs() < 1e-5);
        assert!(fit.extends);
    }

    #[test]
    fn audit_flags_printed_formulas_in_dimension_three() {
        let findings = audit_general_dimension(3, 1.0, 1.0).unwrap();
        assert_eq!(findings.len(), 12);
        let get = |v: Variant, ver: FormulaVersion, q: &str| {
            findings
                .iter()
                .find(|f| f.variant == Some(v) && f.version == Some(ver) && f.quantity == q)
                .unwrap()
        };
        assert!(!get(Variant::PaperN2, FormulaVersion::Printed, "psi").is_consistent());
        assert!(!get(Variant::CorrectedGeneral, FormulaVersion::Printed, "psi").is_consistent());
        let ok = get(Variant::CorrectedGeneral, FormulaVersion::Corrected, "psi");
        assert!(ok.is_consistent() && (ok.printed_value - 2.0).abs() < 1e-8);
        assert!(get(Variant::PaperN2, FormulaVersion::Corrected, "psi").is_consistent());
        assert!(get(Variant::CorrectedGeneral, FormulaVersion::Corrected, "dpsi_r_dt").is_consistent());
        assert!(!get(Variant::CorrectedGeneral, FormulaVersion::Printed, "dpsi_r_dt").is_consistent());
    }

    #[test]
    fn audit_is_clean_in_dimension_two() {
        let findings = audit_general_dimension(2, 1.0, 1.0).unwrap();
        for f in &findings {
            assert!(f.is_consistent(), "{f:?}");
        }
    }

    #[test]
    fn cross_check_is_clean_and_deterministic() {
        let a = cross_check(&family(), 42, 6, 1e-5).unwrap();
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(AuditFinding::is_consistent), "{a:#?}");
        assert_eq!(a, cross_check(&family(), 42, 6, 1e-5).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn fd_metric_is_hermitian_and_close(x0 in -2.0f64..2.0, y0 in -2.0f64..2.0, x1 in -2.0f64..2.0, y1 in -2.0f64..2.0) {
            let z = vec![C64::new(x0, y0), C64::new(x1, y1)];
            prop_assume!(norm(&z) > 0.1);
            let f = family();
            let g = fd_metric(&f, &z, DEFAULT_STEP).unwrap();
            prop_assert!(g.hermiticity_defect() < 1e-12);
            prop_assert!(g.relative_distance(&metric_at(&f, &z).unwrap()) < 1e-6);
        }

        #[test]
        fn sample_points_respect_radius_bounds(seed in 0u64..1000) {
            for z in sample_points(3, seed, 5) {
                let r = norm(&z);
                prop_assert!((0.1 - 1e-12..=10.0 + 1e-12).contains(&r));
            }
        }
    }
}

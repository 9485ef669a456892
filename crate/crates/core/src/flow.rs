//! The reduced Kähler–Ricci flow φ_t = −ψ.
//!
//! The unknown is stored as φ(r, t) = φ₀(r) + κ(t) + v(r, t), where φ₀ is the
//! closed-form initial potential and κ(t) = −ψ_∞ t absorbs the uniform drift
//! of the far-left region, where ψ tends to the constant ψ_∞. What remains, v,
//! is small and smooth, so finite differences of it do not cancel against the
//! large derivatives of φ₀. The 1/φ_r diffusion coefficient grows like e^{−ar}
//! to the left, hence implicit time stepping with a banded Newton solve.
//!
//! Boundary treatment: the right end uses one-sided stencils with nothing
//! pinned. At the left end one-sided closures of the stiff diffusion term have
//! eigenvalues with positive real part, so the first node is held at v = 0,
//! i.e. it follows the uniform drift; the exact v is O(t²e^{ar}) there.

use std::sync::Arc;

use serde::Serialize;

use crate::curvature::{psi_at, FormulaVersion};
use crate::error::{Error, Result};
use crate::numerics::banded::BandMatrix;
use crate::numerics::stencil::{self, Differentiator};
use crate::radial::{Deviation, GridSpec, Jet, MetricFamily, RadialProfile};

/// Distance kept between the trusted window and each end of the grid.
pub const TRUST_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Scheme {
    #[default]
    ImplicitEuler,
    CrankNicolson,
}

impl Scheme {
    fn theta(self) -> f64 {
        match self {
            Scheme::ImplicitEuler => 1.0,
            Scheme::CrankNicolson => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverControls {
    pub dt_init: f64,
    pub dt_max: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub scheme: Scheme,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            dt_init: 1e-6,
            dt_max: 1e-5,
            newton_tol: 1e-9,
            newton_max_iter: 8,
            scheme: Scheme::ImplicitEuler,
        }
    }
}

impl SolverControls {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.dt_init, self.dt_max, self.newton_tol]
            .iter()
            .all(|x| *x > 0.0 && x.is_finite());
        if !positive {
            return Err(Error::Precondition("solver controls must be positive and finite".into()));
        }
        if self.newton_max_iter < 2 {
            return Err(Error::Precondition("newton_max_iter must be at least 2".into()));
        }
        if self.dt_init > self.dt_max {
            return Err(Error::Precondition(format!(
                "dt_init = {} exceeds dt_max = {}",
                self.dt_init, self.dt_max
            )));
        }
        Ok(())
    }
}

/// Time-independent pieces shared by every state of one run.
#[derive(Debug)]
struct Setup {
    grid: Vec<f64>,
    base: Vec<Jet>,
    /// −(ψ(φ₀) − ψ_∞) at each node, from the family's closed form.
    base_rate: Vec<f64>,
    d1: Differentiator,
    d2: Differentiator,
    d3: Differentiator,
    psi_inf: f64,
    kappa: f64,
    lo: usize,
    hi: usize,
}

/// φ at time t on a fixed grid, with its trusted window.
#[derive(Debug, Clone)]
pub struct FlowState {
    t: f64,
    family: MetricFamily,
    version: FormulaVersion,
    offset: f64,
    v: Vec<f64>,
    setup: Arc<Setup>,
}

impl FlowState {
    /// The closed-form family at t = 0.
    pub fn initial(family: &MetricFamily, spec: GridSpec, version: FormulaVersion) -> Result<Self> {
        spec.validate()?;
        let grid = spec.points();
        let h = spec.spacing();
        let lo_r = spec.r_min + TRUST_MARGIN;
        let hi_r = spec.r_max - TRUST_MARGIN;
        if !(lo_r < hi_r) {
            return Err(Error::InvalidGrid(format!(
                "grid [{}, {}] leaves no trusted window after a margin of {TRUST_MARGIN}",
                spec.r_min, spec.r_max
            )));
        }
        let lo = grid.iter().position(|&r| r >= lo_r - 1e-9 * h).unwrap_or(0);
        let hi = grid.iter().rposition(|&r| r <= hi_r + 1e-9 * h).unwrap_or(grid.len() - 1);

        let n = family.n();
        let kappa = version.kappa(n);
        let m = family.power() as f64;
        let a = family.a();
        let q_left = if family.c() > 0.0 { 0.0 } else { a / (m + 1.0) };
        let psi_inf = n as f64 - a + (m - kappa) * q_left;

        let base = grid.iter().map(|&r| family.jet(r)).collect::<Result<Vec<_>>>()?;
        // ψ(φ₀) = (n − a) + (m − κ)q for these families.
        let base_rate = base
            .iter()
            .map(|j| -((n as f64 - a - psi_inf) + (m - kappa) * j.q()))
            .collect();
        for j in &base {
            if !(j.phi_r >= crate::curvature::DEGENERATE_PHI_R) {
                return Err(Error::DegenerateDerivative { r: j.r });
            }
        }
        let nodes = grid.len();
        let setup = Setup {
            d1: Differentiator::new(1, nodes, h),
            d2: Differentiator::new(2, nodes, h),
            d3: Differentiator::new(3, nodes, h),
            grid,
            base,
            base_rate,
            psi_inf,
            kappa,
            lo,
            hi,
        };
        Ok(Self {
            t: 0.0,
            family: *family,
            version,
            offset: 0.0,
            v: vec![0.0; nodes],
            setup: Arc::new(setup),
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn family(&self) -> &MetricFamily {
        &self.family
    }

    pub fn version(&self) -> FormulaVersion {
        self.version
    }

    pub fn grid(&self) -> &[f64] {
        &self.setup.grid
    }

    /// (r_lo, r_hi) of the trusted window.
    pub fn trusted_window(&self) -> (f64, f64) {
        (self.setup.grid[self.setup.lo], self.setup.grid[self.setup.hi])
    }

    /// Index range of the trusted window.
    pub fn trusted_indices(&self) -> std::ops::RangeInclusive<usize> {
        self.setup.lo..=self.setup.hi
    }

    /// φ(t) − φ(0) at every node.
    pub fn displacement(&self) -> Vec<f64> {
        self.v.iter().map(|v| self.offset + v).collect()
    }

    fn deviation(&self) -> Deviation {
        let s = &self.setup;
        Deviation {
            value: self.displacement(),
            d1: s.d1.apply(&self.v),
            d2: s.d2.apply(&self.v),
            d3: s.d3.apply(&self.v),
        }
    }

    pub fn profile(&self) -> Result<RadialProfile> {
        RadialProfile::evolved(self.setup.grid.clone(), self.family, self.deviation())
    }

    pub fn jets(&self) -> Vec<Jet> {
        let dev = self.deviation();
        self.setup
            .base
            .iter()
            .enumerate()
            .map(|(i, b)| Jet::perturbed(b, [dev.value[i], dev.d1[i], dev.d2[i], dev.d3[i]]))
            .collect()
    }

    /// (r, ψ, ψ_r) on the trusted window.
    pub fn psi_window(&self) -> Result<Vec<(f64, f64, f64)>> {
        self.psi_window_for(self.version)
    }

    /// As [`FlowState::psi_window`] but with ψ taken in the given version.
    pub fn psi_window_for(&self, version: FormulaVersion) -> Result<Vec<(f64, f64, f64)>> {
        let n = self.family.n();
        let jets = self.jets();
        self.trusted_indices()
            .map(|i| {
                let (p, pr) = psi_at(&jets[i], n, version)?;
                Ok((jets[i].r, p, pr))
            })
            .collect()
    }

    /// (r, λ₁, λ₂) on the trusted window, with λ₁ = ψ/w and λ₂ = ψ_r/w.
    pub fn eigenvalues_window(&self) -> Result<Vec<(f64, f64, f64)>> {
        self.eigenvalues_window_for(self.version)
    }

    pub fn eigenvalues_window_for(&self, version: FormulaVersion) -> Result<Vec<(f64, f64, f64)>> {
        Ok(self
            .psi_window_for(version)?
            .into_iter()
            .map(|(r, p, pr)| {
                let w = r.exp();
                (r, p / w, pr / w)
            })
            .collect())
    }

    /// Fails with the first trusted node where φ ≤ 0 or φ_r ≤ 0.
    pub fn check_kahler_window(&self) -> Result<()> {
        let s = &self.setup;
        let d1 = s.d1.apply(&self.v);
        for i in self.trusted_indices() {
            let phi = s.base[i].phi + self.offset + self.v[i];
            let phi_r = s.base[i].phi_r + d1[i];
            if !(phi > 0.0 && phi_r > 0.0) {
                return Err(Error::KahlerViolation { r: s.grid[i], t: self.t });
            }
        }
        Ok(())
    }

    /// Rate G = v_t = −(ψ − ψ_∞) together with the linearisation
    /// coefficients of −ψ in φ, φ_r, φ_rr and a roundoff scale for G.
    fn rate(&self, offset: f64, v: &[f64], want_linear: bool) -> Rate {
        let s = &self.setup;
        let k = s.kappa;
        let d1 = s.d1.apply(v);
        let d2 = s.d2.apply(v);
        let nodes = v.len();
        let mut rate = Rate {
            g: Vec::with_capacity(nodes),
            scale: Vec::with_capacity(nodes),
            noise: Vec::with_capacity(nodes),
            lin: Vec::with_capacity(if want_linear { nodes } else { 0 }),
        };
        for i in 0..nodes {
            let j = Jet::perturbed(&s.base[i], [offset + v[i], d1[i], d2[i], 0.0]);
            let dq = j.dev.q;
            let ds = j.dev.s;
            rate.g.push(s.base_rate[i] + k * dq + ds);
            rate.scale.push(s.base_rate[i].abs() + k * dq.abs() + ds.abs());
            let (q, sv) = (j.q(), j.s());
            let lin = [-k * q / j.phi, k / j.phi - sv / j.phi_r, 1.0 / j.phi_r];
            // Rounding error carried by the stencils; near the left end
            // 1/φ_r is huge and this sets the attainable residual.
            let spread = |d: &Differentiator| {
                let (start, w) = d.row(i);
                w.iter().enumerate().map(|(m, wm)| (wm * v[start + m]).abs()).sum::<f64>()
            };
            rate.noise.push(
                NOISE_ULPS * f64::EPSILON * (lin[0].abs() * v[i].abs() + lin[1].abs() * spread(&s.d1) + lin[2].abs() * spread(&s.d2)),
            );
            if want_linear {
                rate.lin.push(lin);
            }
        }
        rate
    }

    /// One implicit step of size dt.
    pub fn step_implicit(&self, dt: f64, controls: &SolverControls) -> Result<FlowState> {
        controls.validate()?;
        if !(dt > 0.0) || dt > controls.dt_max {
            return Err(Error::Precondition(format!(
                "dt = {dt} must lie in (0, dt_max = {}]",
                controls.dt_max
            )));
        }
        self.step_counted(dt, controls).map(|(s, _)| s)
    }

    fn step_counted(&self, dt: f64, controls: &SolverControls) -> Result<(FlowState, usize)> {
        let s = &self.setup;
        let theta = controls.scheme.theta();
        let new_offset = self.offset - s.psi_inf * dt;
        let explicit_part: Vec<f64> = if theta < 1.0 {
            let r0 = self.rate(self.offset, &self.v, false);
            r0.g.iter().map(|g| (1.0 - theta) * dt * g).collect()
        } else {
            vec![0.0; self.v.len()]
        };
        let band = s.d2.half_bandwidth().max(s.d1.half_bandwidth());
        let mut v = self.v.clone();
        let mut residual = f64::INFINITY;
        for iter in 0..=controls.newton_max_iter {
            let last = iter == controls.newton_max_iter;
            let rate = self.rate(new_offset, &v, !last);
            let mut f = Vec::with_capacity(v.len());
            // The leftmost node follows the uniform drift: v = 0 there.
            f.push(0.0);
            residual = 0.0f64;
            for i in 1..v.len() {
                let fi = v[i] - self.v[i] - theta * dt * rate.g[i] - explicit_part[i];
                let scale = v[i].abs() + self.v[i].abs() + dt * rate.scale[i] + explicit_part[i].abs()
                    + theta * dt * rate.noise[i] / controls.newton_tol;
                if fi != 0.0 {
                    residual = residual.max(fi.abs() / scale.max(f64::MIN_POSITIVE));
                }
                f.push(fi);
            }
            if !residual.is_finite() {
                break;
            }
            if residual <= controls.newton_tol {
                let next = FlowState {
                    t: self.t + dt,
                    offset: new_offset,
                    v,
                    ..self.clone()
                };
                next.check_kahler_window()?;
                return Ok((next, iter));
            }
            if last {
                break;
            }
            let mut jac = BandMatrix::zeros(v.len(), band, band);
            jac.add(0, 0, 1.0);
            for i in 1..v.len() {
                let [g0, g1, g2] = rate.lin[i];
                let c = theta * dt;
                jac.add(i, i, 1.0 - c * g0);
                let (start, w) = s.d1.row(i);
                for (k, wk) in w.iter().enumerate() {
                    jac.add(i, start + k, -c * g1 * wk);
                }
                let (start, w) = s.d2.row(i);
                for (k, wk) in w.iter().enumerate() {
                    jac.add(i, start + k, -c * g2 * wk);
                }
            }
            let lu = jac.factor()?;
            let neg: Vec<f64> = f.iter().map(|x| -x).collect();
            let delta = lu.solve(&neg);
            for (vi, di) in v.iter_mut().zip(&delta).skip(1) {
                *vi += di;
            }
        }
        Err(Error::NewtonFailed {
            t: self.t,
            dt,
            residual,
            recommended_dt: 0.5 * dt,
        })
    }
}

struct Rate {
    g: Vec<f64>,
    scale: Vec<f64>,
    noise: Vec<f64>,
    lin: Vec<[f64; 3]>,
}

/// λ₂ on the trusted window at one recorded time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub r: Vec<f64>,
    pub lambda2: Vec<f64>,
}

impl Snapshot {
    pub fn of(state: &FlowState) -> Result<Self> {
        let ev = state.eigenvalues_window()?;
        Ok(Self {
            t: state.t(),
            r: ev.iter().map(|e| e.0).collect(),
            lambda2: ev.iter().map(|e| e.2).collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    pub state: FlowState,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    pub rejected: usize,
}

/// Multiple of machine epsilon allowed per stencil term before a residual
/// counts as unconverged.
const NOISE_ULPS: f64 = 16.0;

/// Smallest step before a run gives up.
const DT_FLOOR: f64 = 1e-14;

/// Advances to `t_final` with adaptive steps, recording λ₂ snapshots at each
/// requested time (times outside (t, t_final] are ignored).
pub fn evolve(state: &FlowState, t_final: f64, controls: &SolverControls, snapshot_times: &[f64]) -> Result<FlowRun> {
    controls.validate()?;
    if !(t_final > state.t()) {
        return Err(Error::Precondition(format!(
            "t_final = {t_final} must exceed the current time {}",
            state.t()
        )));
    }
    let mut marks: Vec<f64> = snapshot_times
        .iter()
        .copied()
        .filter(|&t| t > state.t() && t <= t_final)
        .collect();
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    marks.push(t_final);

    let mut cur = state.clone();
    let mut dt = controls.dt_init;
    let mut snapshots = Vec::new();
    let (mut steps, mut rejected) = (0usize, 0usize);
    for (mi, &mark) in marks.iter().enumerate() {
        while cur.t() < mark {
            let remaining = mark - cur.t();
            let finishing = dt >= remaining * (1.0 - 1e-12);
            let h = if finishing { remaining } else { dt };
            match cur.step_counted(h, controls) {
                Ok((next, iters)) => {
                    cur = next;
                    if finishing {
                        cur.t = mark;
                    }
                    steps += 1;
                    if iters <= 2 && !finishing {
                        dt = (dt * 1.5).min(controls.dt_max);
                    }
                }
                Err(Error::NewtonFailed { recommended_dt, .. }) if recommended_dt >= DT_FLOOR => {
                    rejected += 1;
                    dt = recommended_dt.min(h * 0.5);
                }
                Err(e) => return Err(e),
            }
        }
        let is_final = mi + 1 == marks.len();
        if !is_final || snapshot_times.contains(&t_final) {
            snapshots.push(Snapshot::of(&cur)?);
        }
    }
    Ok(FlowRun {
        state: cur,
        snapshots,
        steps,
        rejected,
    })
}

/// Right-hand side φ_t of the flow at each node: Printed is
/// φ_rr/φ_r + φ_r/φ − n, Corrected is φ_rr/φ_r + (n−1)φ_r/φ − n. Either way
/// it equals −ψ of the same version.
pub fn flow_rhs(profile: &RadialProfile, n: usize, version: FormulaVersion) -> Result<Vec<f64>> {
    (0..profile.len())
        .map(|i| psi_at(&profile.jet(i)?, n, version).map(|(p, _)| -p))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialDerivatives {
    pub dpsi_dt: f64,
    pub dpsir_dt: f64,
}

/// ∂ψ/∂t and ∂ψ_r/∂t at t = 0 for the closed-form family.
///
/// In dimension 2, and for the printed version in any dimension, these are
/// −(n−a)φ_r/φ² and (n−a)e^{ar}(e^{ar} − ac)/φ⁵. The corrected version in
/// dimension n > 2 differentiates ψ_t = (ψ_rr − sψ_r)/φ_r + (n−1)(ψ_r − qψ)/φ
/// once in r and evaluates with the closed-form r-derivatives of q.
pub fn initial_derivatives(family: &MetricFamily, r: f64, version: FormulaVersion) -> Result<InitialDerivatives> {
    let n = family.n();
    let a = family.a();
    let j = family.jet(r)?;
    if n == 2 || version == FormulaVersion::Printed {
        let e = (a * r).exp();
        let na = n as f64 - a;
        return Ok(InitialDerivatives {
            dpsi_dt: -na * j.phi_r / (j.phi * j.phi),
            dpsir_dt: na * e * (e - a * family.c()) / j.phi.powi(5),
        });
    }
    general_initial_derivatives(family, r, version)
}

/// The differentiated-ψ_t evaluation behind [`initial_derivatives`], valid in
/// every dimension and for either version.
pub fn general_initial_derivatives(family: &MetricFamily, r: f64, version: FormulaVersion) -> Result<InitialDerivatives> {
    let n = family.n();
    let k = version.kappa(n);
    let m = family.power() as f64;
    let j = family.jet(r)?;
    let [q, q1, q2, q3] = family.q_derivatives(r)?;
    let s = j.s();
    let s1 = -m * q1;
    // ψ = (n − a) + (m − κ)q for these families.
    let psi = n as f64 - family.a() + (m - k) * q;
    let (p1, p2, p3) = ((m - k) * q1, (m - k) * q2, (m - k) * q3);
    let big_a = p2 - s * p1;
    let big_a_r = p3 - s1 * p1 - s * p2;
    let big_b = p1 - q * psi;
    let big_b_r = p2 - q1 * psi - q * p1;
    Ok(InitialDerivatives {
        dpsi_dt: big_a / j.phi_r + k * big_b / j.phi,
        dpsir_dt: (big_a_r - s * big_a) / j.phi_r + k * (big_b_r - q * big_b) / j.phi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiResidual {
    pub t: f64,
    pub max_abs: f64,
    pub r_at: f64,
}

/// Difference between ψ_t from the stored states (central in time) and the
/// right-hand side (ψ_rr − sψ_r)/φ_r + κ(ψ_r − qψ)/φ, on the trusted window of
/// each interior state.
pub fn psi_residual(history: &[FlowState], version: FormulaVersion) -> Result<Vec<PsiResidual>> {
    if history.len() < 3 {
        return Err(Error::Precondition(format!(
            "need at least 3 states, got {}",
            history.len()
        )));
    }
    let grid = history[0].grid();
    for s in history {
        if s.grid().len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: s.grid().len(),
            });
        }
        if s.grid() != grid {
            return Err(Error::InvalidGrid("states do not share a grid".into()));
        }
    }
    let n = history[0].family().n();
    let k = version.kappa(n);
    let psis = history
        .iter()
        .map(|s| {
            s.jets()
                .iter()
                .map(|j| psi_at(j, n, version))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for w in 1..history.len() - 1 {
        let (t0, t1, t2) = (history[w - 1].t(), history[w].t(), history[w + 1].t());
        let (h0, h1) = (t1 - t0, t2 - t1);
        if !(h0 > 0.0 && h1 > 0.0) {
            return Err(Error::Precondition("states must have increasing times".into()));
        }
        let jets = history[w].jets();
        let psi_r: Vec<f64> = psis[w].iter().map(|p| p.1).collect();
        let psi_rr = stencil::differentiate(&psi_r, grid)?;
        let mut worst = PsiResidual {
            t: t1,
            max_abs: 0.0,
            r_at: grid[history[w].setup.lo],
        };
        for i in history[w].trusted_indices() {
            let (a, b, c) = (psis[w - 1][i].0, psis[w][i].0, psis[w + 1][i].0);
            let dt_psi = -h1 / (h0 * (h0 + h1)) * a + (h1 - h0) / (h0 * h1) * b + h0 / (h1 * (h0 + h1)) * c;
            let j = &jets[i];
            let (p, pr) = psis[w][i];
            let rhs = (psi_rr[i] - j.s() * pr) / j.phi_r + k * (pr - j.q() * p) / j.phi;
            let res = (dt_psi - rhs).abs();
            if res > worst.max_abs {
                worst.max_abs = res;
                worst.r_at = grid[i];
            }
        }
        out.push(worst);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignChangeReport {
    pub t: f64,
    /// λ₂ threshold separating a sign from roundoff.
    pub epsilon: f64,
    /// Extent of the trusted nodes with λ₂ < −ε, if any.
    pub negative_region: Option<(f64, f64)>,
    pub boundary_detected: Option<f64>,
    pub boundary_predicted: Option<f64>,
    /// Trusted nodes left of r* − 2h that are not negative.
    pub left_mismatches: usize,
    /// Trusted nodes right of r* + 2h that are not positive.
    pub right_mismatches: usize,
    pub cells: Option<f64>,
    pub verdict: Verdict,
}

/// ε_sign = 1e−8 · max|λ₂|, at least 1e−14.
pub fn sign_epsilon(lambda2: &[f64]) -> f64 {
    (1e-8 * lambda2.iter().map(|x| x.abs()).fold(0.0, f64::max)).max(1e-14)
}

/// Locates where λ₂ changes sign on the trusted window of `state_t` and
/// compares it with r* = (1/a) log(ac).
pub fn sign_change_scan(state0: &FlowState, state_t: &FlowState, version: FormulaVersion) -> Result<SignChangeReport> {
    let ev = state_t.eigenvalues_window_for(version)?;
    let r: Vec<f64> = ev.iter().map(|e| e.0).collect();
    let l2: Vec<f64> = ev.iter().map(|e| e.2).collect();
    let eps = sign_epsilon(&l2);
    let h = state_t.grid()[1] - state_t.grid()[0];
    let predicted = state0.family().predicted_boundary().filter(|_| state0.family().is_theorem_family());

    let negative: Vec<usize> = (0..l2.len()).filter(|&i| l2[i] < -eps).collect();
    let negative_region = (!negative.is_empty()).then(|| (r[negative[0]], r[*negative.last().unwrap()]));

    // First transition from negative to non-negative, scanning rightwards.
    let boundary_detected = (1..l2.len()).find(|&i| l2[i - 1] < -eps && l2[i] >= -eps).map(|i| {
        let (x0, x1, y0, y1) = (r[i - 1], r[i], l2[i - 1], l2[i]);
        if y1 > y0 {
            x0 - y0 * (x1 - x0) / (y1 - y0)
        } else {
            x1
        }
    });

    let (mut left_mismatches, mut right_mismatches) = (0, 0);
    if let Some(rs) = predicted {
        for (ri, li) in r.iter().zip(&l2) {
            if *ri < rs - 2.0 * h && !(*li < -eps) {
                left_mismatches += 1;
            }
            if *ri > rs + 2.0 * h && !(*li > eps) {
                right_mismatches += 1;
            }
        }
    }
    let cells = match (boundary_detected, predicted) {
        (Some(b), Some(p)) => Some((b - p).abs() / h),
        _ => None,
    };
    let verdict = match predicted {
        None if negative.is_empty() => Verdict::NotApplicable,
        None => Verdict::Fail,
        Some(_) => match cells {
            Some(c) if c <= 2.0 && left_mismatches == 0 => Verdict::Pass,
            _ => Verdict::Fail,
        },
    };
    Ok(SignChangeReport {
        t: state_t.t(),
        epsilon: eps,
        negative_region,
        boundary_detected,
        boundary_predicted: predicted,
        left_mismatches,
        right_mismatches,
        cells,
        verdict,
    })
}

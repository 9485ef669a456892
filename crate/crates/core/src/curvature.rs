//! Closed-form curvature of U(n)-invariant metrics.
//!
//! Matrices are indexed (i, j̄) in the basis ∂/∂z₁, …, ∂/∂zₙ. With w = |z|²
//! the metric is g = (φ/w)δ + ((φ_r − φ)/w²) z̄ᵢzⱼ and the Ricci form has the
//! same shape with ψ in place of φ.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::numerics::stencil;
use crate::radial::{Jet, RadialProfile, RadialSource, Provenance};

pub type C64 = Complex<f64>;

/// Which ψ formula to use in dimension n.
///
/// `Printed` is ψ = n − φ_r/φ − φ_rr/φ_r. `Corrected` is
/// ψ = n − (n−1)φ_r/φ − φ_rr/φ_r, the r-derivative of −log det g.
/// They coincide when n = 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize)]
pub enum FormulaVersion {
    Printed,
    #[default]
    Corrected,
}

impl FormulaVersion {
    /// Coefficient of φ_r/φ in ψ.
    pub fn kappa(self, n: usize) -> f64 {
        match self {
            FormulaVersion::Printed => 1.0,
            FormulaVersion::Corrected => (n - 1) as f64,
        }
    }
}

impl std::fmt::Display for FormulaVersion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FormulaVersion::Printed => "printed",
            FormulaVersion::Corrected => "corrected",
        })
    }
}

/// Nodes where φ_r is below this are left out of curvature reports.
pub const DEGENERATE_PHI_R: f64 = 1e-300;

/// (ψ, ψ_r) at a jet. Base and deviation parts are combined separately so
/// that small deviations are not swamped by the base cancellation.
pub fn psi_at(jet: &Jet, n: usize, version: FormulaVersion) -> Result<(f64, f64)> {
    if !(jet.phi_r >= DEGENERATE_PHI_R) {
        return Err(Error::DegenerateDerivative { r: jet.r });
    }
    let k = version.kappa(n);
    let (b, d) = (&jet.base, &jet.dev);
    let psi = (n as f64 - k * b.q - b.s) - (k * d.q + d.s);
    let psi_r = (-k * b.q_r - b.s_r) - (k * d.q_r + d.s_r);
    Ok((psi, psi_r))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DegenerateNode {
    pub index: usize,
    pub r: f64,
}

/// ψ and ψ_r on the non-degenerate nodes of a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiProfile {
    /// Indices into the profile grid.
    pub nodes: Vec<usize>,
    pub r: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_r: Vec<f64>,
    pub excluded: Vec<DegenerateNode>,
}

/// ψ and ψ_r over a profile. Analytic and evolved profiles use the jet
/// formulas; purely numeric profiles differentiate ψ on the grid.
pub fn psi_of(profile: &RadialProfile, n: usize, version: FormulaVersion) -> Result<PsiProfile> {
    let mut out = PsiProfile {
        nodes: Vec::new(),
        r: Vec::new(),
        psi: Vec::new(),
        psi_r: Vec::new(),
        excluded: Vec::new(),
    };
    for i in 0..profile.len() {
        let jet = profile.jet(i)?;
        match psi_at(&jet, n, version) {
            Ok((p, pr)) => {
                out.nodes.push(i);
                out.r.push(jet.r);
                out.psi.push(p);
                out.psi_r.push(pr);
            }
            Err(Error::DegenerateDerivative { r }) => out.excluded.push(DegenerateNode { index: i, r }),
            Err(e) => return Err(e),
        }
    }
    if matches!(profile.provenance(), Provenance::Numeric) {
        if !out.excluded.is_empty() {
            return Err(Error::DegenerateDerivative { r: out.excluded[0].r });
        }
        out.psi_r = stencil::differentiate(&out.psi, profile.grid())?;
    }
    Ok(out)
}

/// An n×n Hermitian matrix; the lower triangle is the exact conjugate of the
/// upper one.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianForm {
    m: DMatrix<C64>,
}

impl HermitianForm {
    /// Builds from the upper triangle of `f(i, j)`; diagonal imaginary parts
    /// are dropped.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> C64) -> Self {
        let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for i in 0..n {
            m[(i, i)] = C64::new(f(i, i).re, 0.0);
            for j in i + 1..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        Self { m }
    }

    /// Symmetrises (A + Aᴴ)/2 of a square matrix.
    pub fn symmetrize(a: &DMatrix<C64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        let n = a.nrows();
        Ok(Self::from_fn(n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// max |aᵢⱼ − bᵢⱼ| / max(‖a‖_max, ‖b‖_max); zero when both vanish.
    pub fn relative_distance(&self, other: &HermitianForm) -> f64 {
        let diff = (&self.m - &other.m).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let scale = self.max_abs().max(other.max_abs());
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.m - self.m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Ordinary eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.m.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Eigenvalues λ of A V = λ B V for positive definite B, ascending.
    pub fn generalized_eigenvalues(&self, b: &HermitianForm) -> Result<Vec<f64>> {
        if b.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: b.dim(),
            });
        }
        let chol = b
            .m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Precondition("second form is not positive definite".into()))?;
        let l = chol.l();
        let l_inv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Precondition("Cholesky factor is singular".into()))?;
        let reduced = &l_inv * &self.m * l_inv.adjoint();
        Ok(HermitianForm::symmetrize(&reduced)?.eigenvalues())
    }

    pub fn is_positive_definite(&self) -> bool {
        self.m.clone().cholesky().is_some()
    }
}

fn radius_squared(z: &[C64]) -> Result<f64> {
    let w: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    if w == 0.0 {
        return Err(Error::ZeroPoint);
    }
    if !w.is_finite() {
        return Err(Error::Precondition("point has non-finite coordinates".into()));
    }
    Ok(w)
}

fn check_point<S: RadialSource + ?Sized>(src: &S, z: &[C64]) -> Result<(f64, Jet)> {
    if z.len() < 2 {
        return Err(Error::UnsupportedDimension {
            what: "points of ℂⁿ",
            n: z.len(),
        });
    }
    if let Some(n) = src.dimension() {
        if n != z.len() {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: z.len(),
            });
        }
    }
    let w = radius_squared(z)?;
    Ok((w, src.jet_at(w.ln())?))
}

/// The radial form (f/w)δ + ((f_r − f)/w²) z̄ᵢzⱼ.
fn radial_form(z: &[C64], w: f64, f: f64, f_r: f64) -> HermitianForm {
    let diag = f / w;
    let rank_one = (f_r - f) / (w * w);
    HermitianForm::from_fn(z.len(), |i, j| {
        let d = if i == j { diag } else { 0.0 };
        C64::new(d, 0.0) + z[i].conj() * z[j] * rank_one
    })
}

/// The canonical point (e^{r/2}, 0, …, 0).
pub fn canonical_point(r: f64, n: usize) -> Vec<C64> {
    let mut z = vec![C64::new(0.0, 0.0); n];
    z[0] = C64::new((0.5 * r).exp(), 0.0);
    z
}

pub fn metric_at<S: RadialSource + ?Sized>(src: &S, z: &[C64]) -> Result<HermitianForm> {
    let (w, j) = check_point(src, z)?;
    Ok(radial_form(z, w, j.phi, j.phi_r))
}

pub fn inverse_metric_at<S: RadialSource + ?Sized>(src: &S, z: &[C64]) -> Result<HermitianForm> {
    let (w, j) = check_point(src, z)?;
    if !(j.phi_r >= DEGENERATE_PHI_R) {
        return Err(Error::DegenerateDerivative { r: j.r });
    }
    let diag = w / j.phi;
    let rank_one = 1.0 / j.phi_r - 1.0 / j.phi;
    Ok(HermitianForm::from_fn(z.len(), |i, k| {
        let d = if i == k { diag } else { 0.0 };
        C64::new(d, 0.0) + z[i].conj() * z[k] * rank_one
    }))
}

pub fn ricci_at<S: RadialSource + ?Sized>(src: &S, z: &[C64], version: FormulaVersion) -> Result<HermitianForm> {
    let (w, j) = check_point(src, z)?;
    let (psi, psi_r) = psi_at(&j, z.len(), version)?;
    Ok(radial_form(z, w, psi, psi_r))
}

/// Ricci eigenvalues at radius r.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RicciEigenvalues {
    /// ψ/w, multiplicity n − 1.
    pub lambda1: f64,
    /// ψ_r/w.
    pub lambda2: f64,
    /// ψ/φ: eigenvalue of Rc relative to g on the tangential directions.
    pub relative1: f64,
    /// ψ_r/φ_r: eigenvalue of Rc relative to g in the radial direction.
    pub relative2: f64,
}

/// λ₁ = ψ/w and λ₂ = ψ_r/w are the eigenvalues of the coordinate Ricci matrix;
/// the eigenvalues relative to g are returned alongside. Both pairs have the
/// same signs.
pub fn ricci_eigenvalues<S: RadialSource + ?Sized>(
    src: &S,
    r: f64,
    n: usize,
    version: FormulaVersion,
) -> Result<RicciEigenvalues> {
    let j = src.jet_at(r)?;
    let (psi, psi_r) = psi_at(&j, n, version)?;
    let w = r.exp();
    Ok(RicciEigenvalues {
        lambda1: psi / w,
        lambda2: psi_r / w,
        relative1: psi / j.phi,
        relative2: psi_r / j.phi_r,
    })
}

/// Christoffel symbols Γᵐᵢₖ of an invariant metric on ℂ², stored as
/// `gamma[m][i][k]` with 0-based indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Christoffels {
    pub gamma: [[[C64; 2]; 2]; 2],
}

impl Christoffels {
    /// The six independent symbols in the order Γ¹₁₁, Γ¹₁₂, Γ¹₂₂, Γ²₁₁, Γ²₁₂, Γ²₂₂.
    pub fn six(&self) -> [C64; 6] {
        let g = &self.gamma;
        [g[0][0][0], g[0][0][1], g[0][1][1], g[1][0][0], g[1][0][1], g[1][1][1]]
    }

    pub fn max_abs(&self) -> f64 {
        self.six().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn require_surface(n: usize, what: &'static str) -> Result<()> {
    if n != 2 {
        return Err(Error::UnsupportedDimension { what, n });
    }
    Ok(())
}

pub fn christoffels_at<S: RadialSource + ?Sized>(src: &S, z: &[C64]) -> Result<Christoffels> {
    require_surface(z.len(), "Christoffel symbols")?;
    let (w, j) = check_point(src, z)?;
    let (u, v) = (z[0].norm_sqr(), z[1].norm_sqr());
    let (q, s) = (j.q(), j.s());
    let (zb1, zb2) = (z[0].conj(), z[1].conj());
    let w2 = w * w;
    let mixed = s - 2.0 * q + 1.0;
    let g111 = zb1 * ((u * s + 2.0 * v * q + u - 2.0 * w) / w2);
    let g112 = zb2 * ((u * s + (v - u) * q - v) / w2);
    let g122 = z[0] * zb2 * zb2 * (mixed / w2);
    let g211 = zb1 * zb1 * z[1] * (mixed / w2);
    let g212 = zb1 * ((v * s + (u - v) * q - u) / w2);
    let g222 = zb2 * ((v * s + 2.0 * u * q + v - 2.0 * w) / w2);
    Ok(Christoffels {
        gamma: [[[g111, g112], [g112, g122]], [[g211, g212], [g212, g222]]],
    })
}

/// R_{ij̄kl̄} on ℂ², stored as `r[i][j][k][l]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannTensor {
    pub r: [[[[C64; 2]; 2]; 2]; 2],
}

impl RiemannTensor {
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> C64 {
        self.r[i][j][k][l]
    }

    pub fn components(&self) -> impl Iterator<Item = ([usize; 4], C64)> + '_ {
        (0..16).map(move |idx| {
            let ix = [idx >> 3 & 1, idx >> 2 & 1, idx >> 1 & 1, idx & 1];
            (ix, self.r[ix[0]][ix[1]][ix[2]][ix[3]])
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.components().map(|(_, v)| v.norm()).fold(0.0, f64::max)
    }

    /// R(x, x̄, y, ȳ) = Σ R_{ij̄kl̄} xⁱ x̄ʲ yᵏ ȳˡ.
    pub fn contract(&self, x: [C64; 2], y: [C64; 2]) -> C64 {
        self.components()
            .map(|([i, j, k, l], v)| v * x[i] * x[j].conj() * y[k] * y[l].conj())
            .sum()
    }

    /// Largest violation of R_{ij̄kl̄} = R_{kj̄il̄} and R_{ij̄kl̄} = conj(R_{jīlk̄}).
    pub fn symmetry_defect(&self) -> f64 {
        self.components()
            .map(|([i, j, k, l], v)| {
                let swap = (v - self.r[k][j][i][l]).norm();
                let conj = (v - self.r[j][i][l][k].conj()).norm();
                swap.max(conj)
            })
            .fold(0.0, f64::max)
    }
}

/// The three-term closed form of R_{ij̄kl̄} on ℂ². Coefficients are written in
/// logarithmic derivatives, which is algebraically identical and avoids
/// cancelling φ_rrr against φ_rr²/φ_r.
pub fn riemann_at<S: RadialSource + ?Sized>(src: &S, z: &[C64]) -> Result<RiemannTensor> {
    require_surface(z.len(), "the Riemann tensor")?;
    let (w, j) = check_point(src, z)?;
    let (q, s) = (j.q(), j.s());
    let quartic = j.phi_r * (-j.s_r() + 4.0 * s - 2.0 - 4.0 * q) + 2.0 * j.phi;
    let cubic = j.phi_r * (1.0 + q - s) - j.phi;
    let quadratic = j.phi - j.phi_r;
    let (c4, c3, c2) = (quartic / (w * w * w * w), cubic / (w * w * w), quadratic / (w * w));
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let zb = [z[0].conj(), z[1].conj()];
    let mut r = [[[[C64::new(0.0, 0.0); 2]; 2]; 2]; 2];
    for i in 0..2 {
        for jj in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let t4 = zb[i] * z[jj] * zb[k] * z[l];
                    let t3 = zb[i] * z[jj] * d(k, l)
                        + zb[i] * z[l] * d(jj, k)
                        + zb[k] * z[l] * d(i, jj)
                        + z[jj] * zb[k] * d(i, l);
                    let t2 = d(i, jj) * d(k, l) + d(i, l) * d(jj, k);
                    r[i][jj][k][l] = t4 * c4 + t3 * c3 + C64::new(t2 * c2, 0.0);
                }
            }
        }
    }
    Ok(RiemannTensor { r })
}

/// Bisectional curvatures in the unit frame X = |ζ|/√φ_r ∂₁, Y = |ζ|/√φ ∂₂
/// at (ζ, 0, …, 0) with |ζ|² = eʳ.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Bisectional {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Bisectional {
    pub fn max_abs(&self) -> f64 {
        self.xx.abs().max(self.xy.abs()).max(self.yy.abs())
    }

    /// Ricci form evaluated on X and Y in dimension n: Rc(X, X̄) and Rc(Y, Ȳ).
    /// The extra (n − 2) tangential directions each contribute B(Y, Y)/2.
    pub fn frame_ricci(&self, n: usize) -> (f64, f64) {
        let m = (n - 1) as f64;
        (
            self.xx + m * self.xy,
            self.yy + self.xy + 0.5 * (n as f64 - 2.0) * self.yy,
        )
    }
}

pub fn bisectional_from_jet(j: &Jet) -> Result<Bisectional> {
    if !(j.phi_r >= DEGENERATE_PHI_R) {
        return Err(Error::DegenerateDerivative { r: j.r });
    }
    let q = j.q();
    Ok(Bisectional {
        xx: -j.s_r() / j.phi_r,
        xy: (q - j.s()) / j.phi,
        yy: 2.0 * (1.0 - q) / j.phi,
    })
}

pub fn bisectional_at<S: RadialSource + ?Sized>(src: &S, r: f64) -> Result<Bisectional> {
    bisectional_from_jet(&src.jet_at(r)?)
}

/// B(x, x), B(x, y), B(y, y) at (ζ, 0) for arbitrary tangent vectors
/// x, y with x² = 0 (x only along ∂₁), using the general-frame expressions.
pub fn bisectional_general(j: &Jet, x: [C64; 2], y: [C64; 2]) -> (f64, f64, f64) {
    let w = j.r.exp();
    let radial = -j.phi_r * j.s_r(); // φ_rr²/φ_r − φ_rrr
    let mixed = j.phi_r * (j.q() - j.s()); // φ_r²/φ − φ_rr
    let tangential = j.phi - j.phi_r;
    let (x1, y1, y2) = (x[0].norm_sqr(), y[0].norm_sqr(), y[1].norm_sqr());
    let w2 = w * w;
    (
        radial * x1 * x1 / w2,
        (radial * x1 * y1 + mixed * x1 * y2) / w2,
        (radial * y1 * y1 + 4.0 * mixed * y1 * y2 + 2.0 * tangential * y2 * y2) / w2,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CurvatureSup {
    pub value: f64,
    pub r: f64,
}

/// max over grid nodes of max(|B(X,X)|, |B(X,Y)|, |B(Y,Y)|).
pub fn curvature_sup(profile: &RadialProfile) -> Result<CurvatureSup> {
    let mut best = CurvatureSup {
        value: 0.0,
        r: profile.grid()[0],
    };
    for i in 0..profile.len() {
        let b = match bisectional_from_jet(&profile.jet(i)?) {
            Ok(b) => b,
            Err(Error::DegenerateDerivative { .. }) => continue,
            Err(e) => return Err(e),
        };
        if b.max_abs() > best.value {
            best = CurvatureSup {
                value: b.max_abs(),
                r: profile.grid()[i],
            };
        }
    }
    Ok(best)
}

/// Everything the closed forms give at the canonical point of radius r.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePointReport {
    pub r: f64,
    pub w: f64,
    pub psi: f64,
    pub psi_r: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub bisectional: Bisectional,
    /// Present only in complex dimension 2.
    pub christoffels: Option<Christoffels>,
}

pub fn point_report<S: RadialSource + ?Sized>(
    src: &S,
    r: f64,
    n: usize,
    version: FormulaVersion,
) -> Result<CurvaturePointReport> {
    let j = src.jet_at(r)?;
    let (psi, psi_r) = psi_at(&j, n, version)?;
    let w = r.exp();
    let christoffels = if n == 2 {
        Some(christoffels_at(src, &canonical_point(r, 2))?)
    } else {
        None
    };
    Ok(CurvaturePointReport {
        r,
        w,
        psi,
        psi_r,
        lambda1: psi / w,
        lambda2: psi_r / w,
        bisectional: bisectional_from_jet(&j)?,
        christoffels,
    })
}

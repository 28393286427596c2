//! Log-density evaluation for every distribution family in the library, in
//! log space, with normalized kernels.
//!
//! Conventions shared by all operations here:
//! - determinants are carried as log-determinants end to end;
//! - kernel-indexed densities take a [`KernelSpec`] normalized over the total
//!   stacked dimension of the construction, so every density integrates to 1;
//! - inputs violating an open-set constraint (a companion at or past its
//!   boundary) evaluate to -infinity, while structurally invalid inputs
//!   (mismatched shapes, wrong kernel dimension) are errors. Optimizers probe
//!   boundaries; they should see -inf, not a crash.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{MmvError, Result};
use crate::kernels::KernelSpec;
use crate::matrix::{MatrixBlock, SpdMatrix};
use crate::special::ln_mv_gamma;
use crate::transforms::{CompanionFamily, Companions};

/// Shape record of a multimatricvariate family: matrix dimension m, an
/// optional anchor parameter a0 and one parameter per companion block.
///
/// Parameters are real ("extended" shapes); constructions with integer row
/// counts use half-integer parameters a_i = n_i / 2, recoverable through
/// [`ExtendedShape::integer_view`]. Families built on a Gram anchor carry
/// `a0`; the generalised Wishart families do not.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedShape {
    m: usize,
    a0: Option<f64>,
    a: Vec<f64>,
}

impl ExtendedShape {
    /// Shape with an anchor parameter (Gram-anchored families).
    pub fn with_anchor(m: usize, a0: f64, a: Vec<f64>) -> Result<Self> {
        Self::build(m, Some(a0), a)
    }

    /// Shape without an anchor (generalised Wishart families).
    pub fn without_anchor(m: usize, a: Vec<f64>) -> Result<Self> {
        Self::build(m, None, a)
    }

    /// Shape from integer block row counts, a_i = n_i / 2. When `anchored`,
    /// the first entry is the anchor block.
    pub fn from_block_rows(m: usize, rows: &[usize], anchored: bool) -> Result<Self> {
        if anchored && rows.is_empty() {
            return Err(MmvError::Shape(
                "anchored shape needs the anchor row count".into(),
            ));
        }
        let a: Vec<f64> = rows.iter().map(|&n| n as f64 / 2.0).collect();
        if anchored {
            Self::build(m, Some(a[0]), a[1..].to_vec())
        } else {
            Self::build(m, None, a)
        }
    }

    fn build(m: usize, a0: Option<f64>, a: Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(MmvError::Shape(
                "matrix dimension m must be positive".into(),
            ));
        }
        let bound = (m as f64 - 1.0) / 2.0;
        let check = |v: f64, what: &str| -> Result<()> {
            if !v.is_finite() || !(v > bound) {
                return Err(MmvError::Domain(format!(
                    "shape parameter {what} must exceed (m-1)/2 = {bound}, got {v}"
                )));
            }
            Ok(())
        };
        if let Some(a0) = a0 {
            check(a0, "a0")?;
        }
        for (i, &ai) in a.iter().enumerate() {
            check(ai, &format!("a[{i}]"))?;
        }
        Ok(Self { m, a0, a })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of companion blocks.
    pub fn k(&self) -> usize {
        self.a.len()
    }

    pub fn a0(&self) -> Option<f64> {
        self.a0
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Sum of all shape parameters (anchor included when present); the
    /// half total row count of the stacked construction.
    pub fn a_star(&self) -> f64 {
        self.a0.unwrap_or(0.0) + self.a.iter().sum::<f64>()
    }

    /// Total dimension the family's kernel must be normalized over.
    pub fn kernel_dim(&self) -> f64 {
        2.0 * self.a_star() * self.m as f64
    }

    /// Integer row counts [n0?, n1, ..], available when every parameter is a
    /// half-integer. Constructive sampling requires this view.
    pub fn integer_view(&self) -> Option<Vec<usize>> {
        let to_n = |a: f64| -> Option<usize> {
            let n = 2.0 * a;
            let rounded = n.round();
            if (n - rounded).abs() < 1e-9 && rounded >= 1.0 {
                Some(rounded as usize)
            } else {
                None
            }
        };
        let mut out = Vec::with_capacity(self.a.len() + 1);
        if let Some(a0) = self.a0 {
            out.push(to_n(a0)?);
        }
        for &ai in &self.a {
            out.push(to_n(ai)?);
        }
        Some(out)
    }
}

/// Scale matrices for the generalised Wishart families; empty means identity
/// scales.
#[derive(Debug, Clone, Default)]
pub struct ScaleSet {
    sigma: Vec<SpdMatrix>,
}

impl ScaleSet {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(sigma: Vec<SpdMatrix>) -> Result<Self> {
        if let Some(first) = sigma.first() {
            let m = first.dim();
            if sigma.iter().any(|s| s.dim() != m) {
                return Err(MmvError::Shape(
                    "scale matrices must share one dimension".into(),
                ));
            }
        }
        Ok(Self { sigma })
    }

    pub fn is_identity(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&SpdMatrix> {
        self.sigma.get(i)
    }
}

/// The two trimatricvariate forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrimatricForm {
    /// (W, T, R) companions.
    Wtp2,
    /// (W, F, U) companions.
    Wb2b1,
}

/// The two inverted-family kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InvertedKind {
    GwInvWishart,
    Beta2Inv,
}

/// Companion pair of a trimatricvariate point.
#[derive(Debug, Clone)]
pub enum TrimatricCompanions {
    Wtp2 { t: MatrixBlock, r: MatrixBlock },
    Wb2b1 { f: SpdMatrix, u: SpdMatrix },
}

/// Every distribution family the library evaluates, samples and verifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    GenWishart,
    Joint(CompanionFamily),
    Marginal(CompanionFamily),
    Trimatric(TrimatricForm),
    Inverted { kind: InvertedKind, k1: usize },
}

impl Family {
    /// All family names exposed on the command line.
    pub const NAMES: [&'static str; 13] = [
        "gen-wishart",
        "wishart-t",
        "t",
        "wishart-beta2",
        "beta2",
        "wishart-pearson2",
        "pearson2",
        "wishart-beta1",
        "beta1",
        "tri-wtp2",
        "tri-wb2b1",
        "gw-inv-wishart",
        "beta2-inv",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::GenWishart => "gen-wishart",
            Family::Joint(CompanionFamily::T) => "wishart-t",
            Family::Joint(CompanionFamily::Beta2) => "wishart-beta2",
            Family::Joint(CompanionFamily::Pearson2) => "wishart-pearson2",
            Family::Joint(CompanionFamily::Beta1) => "wishart-beta1",
            Family::Marginal(CompanionFamily::T) => "t",
            Family::Marginal(CompanionFamily::Beta2) => "beta2",
            Family::Marginal(CompanionFamily::Pearson2) => "pearson2",
            Family::Marginal(CompanionFamily::Beta1) => "beta1",
            Family::Trimatric(TrimatricForm::Wtp2) => "tri-wtp2",
            Family::Trimatric(TrimatricForm::Wb2b1) => "tri-wb2b1",
            Family::Inverted {
                kind: InvertedKind::GwInvWishart,
                ..
            } => "gw-inv-wishart",
            Family::Inverted {
                kind: InvertedKind::Beta2Inv,
                ..
            } => "beta2-inv",
        }
    }

    /// Parses a family name; `split` is the head count k1 for the inverted
    /// families (ignored elsewhere).
    pub fn parse_with_split(name: &str, split: usize) -> Result<Self> {
        let fam = match name {
            "gen-wishart" => Family::GenWishart,
            "wishart-t" => Family::Joint(CompanionFamily::T),
            "wishart-beta2" => Family::Joint(CompanionFamily::Beta2),
            "wishart-pearson2" => Family::Joint(CompanionFamily::Pearson2),
            "wishart-beta1" => Family::Joint(CompanionFamily::Beta1),
            "t" => Family::Marginal(CompanionFamily::T),
            "beta2" => Family::Marginal(CompanionFamily::Beta2),
            "pearson2" => Family::Marginal(CompanionFamily::Pearson2),
            "beta1" => Family::Marginal(CompanionFamily::Beta1),
            "tri-wtp2" => Family::Trimatric(TrimatricForm::Wtp2),
            "tri-wb2b1" => Family::Trimatric(TrimatricForm::Wb2b1),
            "gw-inv-wishart" => Family::Inverted {
                kind: InvertedKind::GwInvWishart,
                k1: split,
            },
            "beta2-inv" => Family::Inverted {
                kind: InvertedKind::Beta2Inv,
                k1: split,
            },
            other => {
                return Err(MmvError::Domain(format!(
                    "unknown family `{other}`; expected one of {:?}",
                    Self::NAMES
                )))
            }
        };
        Ok(fam)
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::parse_with_split(name, 0)
    }
}

/// One evaluation/sampling point: the ordered tuple of matrices the family's
/// density governs.
///
/// Layout by family: `gen-wishart` [V_1..V_k]; joint families
/// [anchor, C_1..C_k]; marginal families [C_1..C_k]; `tri-wtp2` [W, T, R];
/// `tri-wb2b1` [W, F, U]; `gw-inv-wishart` [V_1..V_k1, W_{k1+1}..W_k];
/// `beta2-inv` [F_1..F_k1, E_{k1+1}..E_k].
#[derive(Debug, Clone)]
pub struct Draw {
    pub items: Vec<DMatrix<f64>>,
}

const NEG_INF: f64 = f64::NEG_INFINITY;

/// SPD construction distinguishing boundary violations (None) from
/// structural problems (Err).
fn try_spd(mat: DMatrix<f64>) -> Result<Option<SpdMatrix>> {
    match SpdMatrix::new(mat) {
        Ok(s) => Ok(Some(s)),
        Err(MmvError::NotPositiveDefinite { .. }) | Err(MmvError::NearSingular { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Matrix variate elliptical log-density of an N x m observation with
/// row scale `sigma` (N x N), column scale `theta` (m x m) and a kernel
/// normalized over N*m:
/// -(m/2) logdet Sigma - (N/2) logdet Theta + log h(tr(Sigma^-1 (Z-mu) Theta^-1 (Z-mu)')).
pub fn logpdf_elliptical(
    z: &MatrixBlock,
    mu: &MatrixBlock,
    sigma: &SpdMatrix,
    theta: &SpdMatrix,
    kernel: &KernelSpec,
) -> Result<f64> {
    let (n, m) = (z.rows(), z.cols());
    if mu.rows() != n || mu.cols() != m {
        return Err(MmvError::Shape(format!(
            "location is {}x{}, observation is {n}x{m}",
            mu.rows(),
            mu.cols()
        )));
    }
    if sigma.dim() != n || theta.dim() != m {
        return Err(MmvError::Shape(format!(
            "scales are {}x{} and {}x{}, observation is {n}x{m}",
            sigma.dim(),
            sigma.dim(),
            theta.dim(),
            theta.dim()
        )));
    }
    kernel.require_dim((n * m) as f64)?;
    let diff = z.as_matrix() - mu.as_matrix();
    let u =
        (sigma.inverse()?.as_matrix() * &diff * theta.inverse()?.as_matrix() * diff.transpose())
            .trace()
            .max(0.0);
    Ok(
        -(m as f64 / 2.0) * sigma.logdet()? - (n as f64 / 2.0) * theta.logdet()?
            + kernel.log_h(u)?,
    )
}

/// Generalised Wishart joint log-density of k SPD matrices with optional
/// scale matrices, under a kernel normalized over the stacked dimension
/// 2 m sum(a_i).
pub fn logpdf_gen_wishart(
    v: &[SpdMatrix],
    shape: &ExtendedShape,
    scales: &ScaleSet,
    kernel: &KernelSpec,
) -> Result<f64> {
    if shape.a0().is_some() {
        return Err(MmvError::Shape(
            "generalised Wishart shapes carry no anchor parameter; use ExtendedShape::without_anchor".into(),
        ));
    }
    let m = shape.m();
    if v.len() != shape.k() {
        return Err(MmvError::Shape(format!(
            "{} matrices for {} shape parameters",
            v.len(),
            shape.k()
        )));
    }
    if !scales.is_identity() && scales.len() != v.len() {
        return Err(MmvError::Shape(format!(
            "{} scale matrices for {} blocks",
            scales.len(),
            v.len()
        )));
    }
    kernel.require_dim(shape.kernel_dim())?;
    let half_m1 = (m as f64 + 1.0) / 2.0;
    let mut lnf = shape.a_star() * m as f64 * PI.ln();
    let mut u = 0.0;
    for (i, (vi, &ai)) in v.iter().zip(shape.a()).enumerate() {
        if vi.dim() != m {
            return Err(MmvError::Shape(format!(
                "block {i} is {}x{}, expected {m}x{m}",
                vi.dim(),
                vi.dim()
            )));
        }
        lnf += (ai - half_m1) * vi.logdet()? - ln_mv_gamma(m, ai)?;
        match scales.get(i) {
            None => u += vi.trace(),
            Some(s) => {
                if s.dim() != m {
                    return Err(MmvError::Shape("scale dimension mismatch".into()));
                }
                lnf -= ai * s.logdet()?;
                u += (s.inverse()?.as_matrix() * vi.as_matrix()).trace();
            }
        }
    }
    Ok(lnf + kernel.log_h(u.max(0.0))?)
}

/// Block-companion shape consistency: T and Pearson II companions are
/// rectangular blocks whose row counts must match 2 a_i exactly, otherwise
/// the stated constants do not normalize.
fn require_block_rows(rows: usize, ai: f64, what: &str) -> Result<()> {
    if (2.0 * ai - rows as f64).abs() > 1e-9 {
        return Err(MmvError::Shape(format!(
            "{what} has {rows} rows but shape parameter {ai}; block-companion families need a_i = rows/2"
        )));
    }
    Ok(())
}

struct CompanionTerms {
    /// Log constant plus determinant powers contributed by the companions.
    ln_terms: f64,
    /// M with h-argument tr(anchor * M); M = I + sum of companion terms.
    m_matrix: DMatrix<f64>,
}

/// Shared companion handling for the joint densities. Returns None when a
/// companion violates its open-set constraint.
fn companion_terms(comp: &Companions, shape: &ExtendedShape) -> Result<Option<CompanionTerms>> {
    let m = shape.m();
    let a0 = shape.a0().ok_or_else(|| {
        MmvError::Shape("anchored family needs a shape with an anchor parameter".into())
    })?;
    if comp.len() != shape.k() {
        return Err(MmvError::Shape(format!(
            "{} companions for {} shape parameters",
            comp.len(),
            shape.k()
        )));
    }
    let half_m1 = (m as f64 + 1.0) / 2.0;
    let a_star = shape.a_star();
    let mut mm = DMatrix::identity(m, m);
    let mut ln_terms;
    match comp {
        Companions::T(ts) => {
            ln_terms = m as f64 * a0 * PI.ln() - ln_mv_gamma(m, a0)?;
            for (t, &ai) in ts.iter().zip(shape.a()) {
                if t.cols() != m {
                    return Err(MmvError::Shape("companion column count mismatch".into()));
                }
                require_block_rows(t.rows(), ai, "T companion")?;
                mm += t.gram()?;
            }
        }
        Companions::Beta2(fs) => {
            ln_terms = m as f64 * a_star * PI.ln() - ln_mv_gamma(m, a0)?;
            for (f, &ai) in fs.iter().zip(shape.a()) {
                if f.dim() != m {
                    return Err(MmvError::Shape("companion dimension mismatch".into()));
                }
                ln_terms += (ai - half_m1) * f.logdet()? - ln_mv_gamma(m, ai)?;
                mm += f.as_matrix();
            }
        }
        Companions::Pearson2(rs) => {
            ln_terms = m as f64 * a0 * PI.ln() - ln_mv_gamma(m, a0)?;
            for (r, &ai) in rs.iter().zip(shape.a()) {
                if r.cols() != m {
                    return Err(MmvError::Shape("companion column count mismatch".into()));
                }
                require_block_rows(r.rows(), ai, "Pearson II companion")?;
                let Some(s) = try_spd(DMatrix::identity(m, m) - r.gram()?)? else {
                    return Ok(None);
                };
                ln_terms -= (ai + half_m1) * s.logdet()?;
                mm += s.inverse()?.as_matrix() - DMatrix::identity(m, m);
            }
        }
        Companions::Beta1(us) => {
            ln_terms = m as f64 * a_star * PI.ln() - ln_mv_gamma(m, a0)?;
            for (u, &ai) in us.iter().zip(shape.a()) {
                if u.dim() != m {
                    return Err(MmvError::Shape("companion dimension mismatch".into()));
                }
                let Some(s) = try_spd(DMatrix::identity(m, m) - u.as_matrix())? else {
                    return Ok(None);
                };
                // |I - U_i| carries -(a_i + (m+1)/2): it is |I - R_i'R_i|
                // from the Pearson II joint, unchanged by the Gram
                // reduction U_i = R_i'R_i. The quadrature mass check pins
                // this exponent.
                ln_terms += (ai - half_m1) * u.logdet()?
                    - (ai + half_m1) * s.logdet()?
                    - ln_mv_gamma(m, ai)?;
                mm += s.inverse()?.as_matrix() - DMatrix::identity(m, m);
            }
        }
    }
    Ok(Some(CompanionTerms {
        ln_terms,
        m_matrix: mm,
    }))
}

/// Joint log-density of a Gram anchor and its companions (the
/// Wishart-T / -beta II / -Pearson II / -beta I families). The kernel is
/// normalized over the stacked dimension 2 m a_star.
pub fn logpdf_wishart_companion(
    anchor: &SpdMatrix,
    comp: &Companions,
    shape: &ExtendedShape,
    kernel: &KernelSpec,
) -> Result<f64> {
    let m = shape.m();
    if anchor.dim() != m {
        return Err(MmvError::Shape(format!(
            "anchor is {}x{}, shape says m = {m}",
            anchor.dim(),
            anchor.dim()
        )));
    }
    kernel.require_dim(shape.kernel_dim())?;
    let Some(terms) = companion_terms(comp, shape)? else {
        return Ok(NEG_INF);
    };
    let common = (shape.a_star() - (m as f64 + 1.0) / 2.0) * anchor.logdet()?;
    let u = (anchor.as_matrix() * &terms.m_matrix).trace().max(0.0);
    Ok(terms.ln_terms + common + kernel.log_h(u)?)
}

/// Log of the combination determinant shared by the Pearson II and beta I
/// marginals, computed order-free as
/// sum_i logdet S_i + logdet(sum_i S_i^{-1} - (k-1) I)
/// for S_i = I - R_i'R_i or I - U_i. For k = 2 this equals
/// logdet(I - U_1 U_2).
pub fn log_combination_det(ss: &[SpdMatrix]) -> Result<f64> {
    let k = ss.len();
    if k == 0 {
        return Ok(0.0);
    }
    let m = ss[0].dim();
    let mut acc = 0.0;
    let mut sum_inv = DMatrix::<f64>::zeros(m, m);
    for s in ss {
        if s.dim() != m {
            return Err(MmvError::Shape(
                "combination blocks must share dimension".into(),
            ));
        }
        acc += s.logdet()?;
        sum_inv += s.inverse()?.as_matrix();
    }
    sum_inv -= DMatrix::identity(m, m) * (k as f64 - 1.0);
    acc += SpdMatrix::new(sum_inv)?.logdet()?;
    Ok(acc)
}

/// Kernel-free marginal log-density of the companions alone. The marginal is
/// the same whatever elliptical kernel generated the data, so no kernel
/// argument exists.
pub fn logpdf_marginal(comp: &Companions, shape: &ExtendedShape) -> Result<f64> {
    let m = shape.m();
    let a0 = shape.a0().ok_or_else(|| {
        MmvError::Shape("marginal families need a shape with an anchor parameter".into())
    })?;
    if comp.len() != shape.k() {
        return Err(MmvError::Shape(format!(
            "{} companions for {} shape parameters",
            comp.len(),
            shape.k()
        )));
    }
    let half_m1 = (m as f64 + 1.0) / 2.0;
    let a_star = shape.a_star();
    let mf = m as f64;
    match comp {
        Companions::T(ts) => {
            let mut g = DMatrix::identity(m, m);
            for (t, &ai) in ts.iter().zip(shape.a()) {
                if t.cols() != m {
                    return Err(MmvError::Shape("companion column count mismatch".into()));
                }
                require_block_rows(t.rows(), ai, "T companion")?;
                g += t.gram()?;
            }
            Ok(ln_mv_gamma(m, a_star)?
                - ln_mv_gamma(m, a0)?
                - mf * (a_star - a0) * PI.ln()
                - a_star * SpdMatrix::new(g)?.logdet()?)
        }
        Companions::Beta2(fs) => {
            let mut lnf = ln_mv_gamma(m, a_star)? - ln_mv_gamma(m, a0)?;
            let mut g = DMatrix::identity(m, m);
            for (f, &ai) in fs.iter().zip(shape.a()) {
                if f.dim() != m {
                    return Err(MmvError::Shape("companion dimension mismatch".into()));
                }
                lnf += (ai - half_m1) * f.logdet()? - ln_mv_gamma(m, ai)?;
                g += f.as_matrix();
            }
            Ok(lnf - a_star * SpdMatrix::new(g)?.logdet()?)
        }
        Companions::Pearson2(rs) => {
            let mut lnf =
                ln_mv_gamma(m, a_star)? - ln_mv_gamma(m, a0)? - mf * (a_star - a0) * PI.ln();
            let mut ss = Vec::with_capacity(rs.len());
            for (r, &ai) in rs.iter().zip(shape.a()) {
                if r.cols() != m {
                    return Err(MmvError::Shape("companion column count mismatch".into()));
                }
                require_block_rows(r.rows(), ai, "Pearson II companion")?;
                let Some(s) = try_spd(DMatrix::identity(m, m) - r.gram()?)? else {
                    return Ok(NEG_INF);
                };
                lnf += (a_star - ai - half_m1) * s.logdet()?;
                ss.push(s);
            }
            Ok(lnf - a_star * log_combination_det(&ss)?)
        }
        Companions::Beta1(us) => {
            let mut lnf = ln_mv_gamma(m, a_star)? - ln_mv_gamma(m, a0)?;
            let mut ss = Vec::with_capacity(us.len());
            for (u, &ai) in us.iter().zip(shape.a()) {
                if u.dim() != m {
                    return Err(MmvError::Shape("companion dimension mismatch".into()));
                }
                let Some(s) = try_spd(DMatrix::identity(m, m) - u.as_matrix())? else {
                    return Ok(NEG_INF);
                };
                lnf += (ai - half_m1) * u.logdet()? + (a_star - ai - half_m1) * s.logdet()?
                    - ln_mv_gamma(m, ai)?;
                ss.push(s);
            }
            Ok(lnf - a_star * log_combination_det(&ss)?)
        }
    }
}

/// Trimatricvariate joint log-density of (W, T, R) or (W, F, U) with a
/// two-companion anchored shape. The kernel argument is
/// tr W + tr(S W^{1/2} C W^{1/2}) with S = I - R'R (or I - U) and C = T'T
/// (or F).
pub fn logpdf_trimatric(
    w: &SpdMatrix,
    comp: &TrimatricCompanions,
    shape: &ExtendedShape,
    kernel: &KernelSpec,
) -> Result<f64> {
    let m = shape.m();
    let a0 = shape.a0().ok_or_else(|| {
        MmvError::Shape("trimatricvariate shapes need an anchor parameter".into())
    })?;
    if shape.k() != 2 {
        return Err(MmvError::Shape(format!(
            "trimatricvariate families need exactly 2 companions, shape has {}",
            shape.k()
        )));
    }
    if w.dim() != m {
        return Err(MmvError::Shape("W dimension mismatch".into()));
    }
    kernel.require_dim(shape.kernel_dim())?;
    let (a1, a2) = (shape.a()[0], shape.a()[1]);
    let a_star = shape.a_star();
    let half_m1 = (m as f64 + 1.0) / 2.0;
    let mf = m as f64;
    let common = (a_star - half_m1) * w.logdet()?;
    let ws = w.sym_sqrt();

    // (constant, S = I - R'R or I - U, C = T'T or F, extra det powers)
    let (constant, s, c_mat, extra) = match comp {
        TrimatricCompanions::Wtp2 { t, r } => {
            if t.cols() != m || r.cols() != m {
                return Err(MmvError::Shape("companion column count mismatch".into()));
            }
            require_block_rows(t.rows(), a1, "T companion")?;
            require_block_rows(r.rows(), a2, "Pearson II companion")?;
            let Some(s) = try_spd(DMatrix::identity(m, m) - r.gram()?)? else {
                return Ok(NEG_INF);
            };
            let constant = mf * a0 * PI.ln() - ln_mv_gamma(m, a0)?;
            (constant, s, t.gram()?, 0.0)
        }
        TrimatricCompanions::Wb2b1 { f, u } => {
            if f.dim() != m || u.dim() != m {
                return Err(MmvError::Shape("companion dimension mismatch".into()));
            }
            let Some(s) = try_spd(DMatrix::identity(m, m) - u.as_matrix())? else {
                return Ok(NEG_INF);
            };
            let constant = mf * a_star * PI.ln()
                - ln_mv_gamma(m, a0)?
                - ln_mv_gamma(m, a1)?
                - ln_mv_gamma(m, a2)?;
            let extra = (a1 - half_m1) * f.logdet()? + (a2 - half_m1) * u.logdet()?;
            (constant, s, f.as_matrix().clone(), extra)
        }
    };
    let s_pow = (a0 + a1 - half_m1) * s.logdet()?;
    let u_arg =
        (w.trace() + (s.as_matrix() * ws.as_matrix() * &c_mat * ws.as_matrix()).trace()).max(0.0);
    Ok(constant + common + s_pow + extra + kernel.log_h(u_arg)?)
}

/// Log-density of the inverted families: a generalised Wishart tuple whose
/// tail entered through matrix inversion, or a beta II tuple whose tail did.
pub fn logpdf_inverted(
    kind: InvertedKind,
    head: &[SpdMatrix],
    tail: &[SpdMatrix],
    shape: &ExtendedShape,
    scales: Option<&ScaleSet>,
    kernel: Option<&KernelSpec>,
) -> Result<f64> {
    let m = shape.m();
    let k = head.len() + tail.len();
    if k != shape.k() {
        return Err(MmvError::Shape(format!(
            "{} matrices for {} shape parameters",
            k,
            shape.k()
        )));
    }
    if head.iter().chain(tail).any(|x| x.dim() != m) {
        return Err(MmvError::Shape("block dimension mismatch".into()));
    }
    let half_m1 = (m as f64 + 1.0) / 2.0;
    let mf = m as f64;
    match kind {
        InvertedKind::GwInvWishart => {
            if shape.a0().is_some() {
                return Err(MmvError::Shape(
                    "generalised Wishart shapes carry no anchor parameter".into(),
                ));
            }
            let kernel = kernel.ok_or_else(|| {
                MmvError::Shape("the Wishart-inverted-Wishart family needs a kernel".into())
            })?;
            kernel.require_dim(shape.kernel_dim())?;
            let identity = ScaleSet::identity();
            let scales = scales.unwrap_or(&identity);
            if !scales.is_identity() && scales.len() != k {
                return Err(MmvError::Shape(format!(
                    "{} scale matrices for {} blocks",
                    scales.len(),
                    k
                )));
            }
            let mut lnf = shape.a_star() * mf * PI.ln();
            let mut u = 0.0;
            for (i, &ai) in shape.a().iter().enumerate() {
                lnf -= ln_mv_gamma(m, ai)?;
                let (mat, inverted) = if i < head.len() {
                    (&head[i], false)
                } else {
                    (&tail[i - head.len()], true)
                };
                lnf += if inverted {
                    -(ai + half_m1) * mat.logdet()?
                } else {
                    (ai - half_m1) * mat.logdet()?
                };
                let contrib = if inverted {
                    mat.inverse()?
                } else {
                    mat.clone()
                };
                match scales.get(i) {
                    None => u += contrib.trace(),
                    Some(s) => {
                        lnf -= ai * s.logdet()?;
                        u += (s.inverse()?.as_matrix() * contrib.as_matrix()).trace();
                    }
                }
            }
            Ok(lnf + kernel.log_h(u.max(0.0))?)
        }
        InvertedKind::Beta2Inv => {
            if kernel.is_some() {
                return Err(MmvError::Shape(
                    "the inverted beta II family is kernel-free; do not pass a kernel".into(),
                ));
            }
            if scales.is_some_and(|s| !s.is_identity()) {
                return Err(MmvError::Shape(
                    "the inverted beta II family takes no scale matrices".into(),
                ));
            }
            let a0 = shape.a0().ok_or_else(|| {
                MmvError::Shape("the inverted beta II family needs an anchor parameter".into())
            })?;
            let a_star = shape.a_star();
            let mut lnf = ln_mv_gamma(m, a_star)? - ln_mv_gamma(m, a0)?;
            let mut g = DMatrix::identity(m, m);
            for (i, &ai) in shape.a().iter().enumerate() {
                lnf -= ln_mv_gamma(m, ai)?;
                if i < head.len() {
                    lnf += (ai - half_m1) * head[i].logdet()?;
                    g += head[i].as_matrix();
                } else {
                    let e = &tail[i - head.len()];
                    lnf -= (ai + half_m1) * e.logdet()?;
                    g += e.inverse()?.as_matrix();
                }
            }
            Ok(lnf - a_star * SpdMatrix::new(g)?.logdet()?)
        }
    }
}

/// Evaluates the named family's log-density at a [`Draw`] tuple, rebuilding
/// the typed views the layout documents. Boundary violations give -inf.
pub fn logpdf_draw(
    family: Family,
    draw: &Draw,
    shape: &ExtendedShape,
    scales: Option<&ScaleSet>,
    kernel: Option<&KernelSpec>,
) -> Result<f64> {
    let items = &draw.items;
    let need = |n: usize| -> Result<()> {
        if items.len() != n {
            return Err(MmvError::Shape(format!(
                "family `{}` needs {n} matrices per draw, got {}",
                family.name(),
                items.len()
            )));
        }
        Ok(())
    };
    let spd = |mat: &DMatrix<f64>| -> Result<Option<SpdMatrix>> { try_spd(mat.clone()) };
    let block = |mat: &DMatrix<f64>| -> Result<MatrixBlock> { MatrixBlock::new(mat.clone()) };
    fn kernel_required(kernel: Option<&KernelSpec>, family: Family) -> Result<&KernelSpec> {
        kernel.ok_or_else(|| MmvError::Shape(format!("family `{}` needs a kernel", family.name())))
    }
    let spd_all = |mats: &[DMatrix<f64>]| -> Result<Option<Vec<SpdMatrix>>> {
        let mut out = Vec::with_capacity(mats.len());
        for m in mats {
            match try_spd(m.clone())? {
                Some(s) => out.push(s),
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    };

    match family {
        Family::GenWishart => {
            need(shape.k())?;
            let Some(vs) = spd_all(items)? else {
                return Ok(NEG_INF);
            };
            let identity = ScaleSet::identity();
            logpdf_gen_wishart(
                &vs,
                shape,
                scales.unwrap_or(&identity),
                kernel_required(kernel, family)?,
            )
        }
        Family::Joint(cf) => {
            need(shape.k() + 1)?;
            let Some(anchor) = spd(&items[0])? else {
                return Ok(NEG_INF);
            };
            let comp = build_companions(cf, &items[1..])?;
            let Some(comp) = comp else { return Ok(NEG_INF) };
            logpdf_wishart_companion(&anchor, &comp, shape, kernel_required(kernel, family)?)
        }
        Family::Marginal(cf) => {
            need(shape.k())?;
            if kernel.is_some() {
                return Err(MmvError::Shape(format!(
                    "family `{}` is kernel-free (the marginal does not depend on the generating kernel); do not pass one",
                    family.name()
                )));
            }
            let Some(comp) = build_companions(cf, items)? else {
                return Ok(NEG_INF);
            };
            logpdf_marginal(&comp, shape)
        }
        Family::Trimatric(form) => {
            need(3)?;
            let Some(w) = spd(&items[0])? else {
                return Ok(NEG_INF);
            };
            let comp = match form {
                TrimatricForm::Wtp2 => TrimatricCompanions::Wtp2 {
                    t: block(&items[1])?,
                    r: block(&items[2])?,
                },
                TrimatricForm::Wb2b1 => {
                    let (Some(f), Some(u)) = (spd(&items[1])?, spd(&items[2])?) else {
                        return Ok(NEG_INF);
                    };
                    TrimatricCompanions::Wb2b1 { f, u }
                }
            };
            logpdf_trimatric(&w, &comp, shape, kernel_required(kernel, family)?)
        }
        Family::Inverted { kind, k1 } => {
            need(shape.k())?;
            if k1 > shape.k() {
                return Err(MmvError::Shape(format!(
                    "split {k1} exceeds block count {}",
                    shape.k()
                )));
            }
            let Some(all) = spd_all(items)? else {
                return Ok(NEG_INF);
            };
            let (head, tail) = all.split_at(k1);
            logpdf_inverted(kind, head, tail, shape, scales, kernel)
        }
    }
}

/// Builds typed companions from raw matrices; None flags a boundary
/// violation for the SPD kinds.
fn build_companions(cf: CompanionFamily, items: &[DMatrix<f64>]) -> Result<Option<Companions>> {
    match cf {
        CompanionFamily::T | CompanionFamily::Pearson2 => {
            let blocks = items
                .iter()
                .map(|m| MatrixBlock::new(m.clone()))
                .collect::<Result<Vec<_>>>()?;
            Ok(Some(if cf == CompanionFamily::T {
                Companions::T(blocks)
            } else {
                Companions::Pearson2(blocks)
            }))
        }
        CompanionFamily::Beta2 | CompanionFamily::Beta1 => {
            let mut mats = Vec::with_capacity(items.len());
            for m in items {
                match try_spd(m.clone())? {
                    Some(s) => mats.push(s),
                    None => return Ok(None),
                }
            }
            Ok(Some(if cf == CompanionFamily::Beta2 {
                Companions::Beta2(mats)
            } else {
                Companions::Beta1(mats)
            }))
        }
    }
}

//! The claim-checking harness: quadrature and Monte Carlo normalization,
//! finite-difference Jacobians, pushforward and identity checks. Everything
//! the density formulas assert is falsifiable here at desk scale.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::densities::{
    log_combination_det, logpdf_draw, logpdf_marginal, Draw, ExtendedShape, Family, InvertedKind,
};
use crate::error::{MmvError, Result};
use crate::kernels::KernelSpec;
use crate::matrix::{MatrixBlock, SpdMatrix};
use crate::quad;
use crate::samplers::{sample_family, RngStream};
use crate::transforms::{
    beta1_to_beta2, beta1_to_beta2_log_jac, r_to_t, t_to_r, CompanionFamily, Companions,
};

/// Outcome of one verification check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub statistic: f64,
    pub target: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn closeness(name: &str, statistic: f64, target: f64, tolerance: f64, detail: String) -> Self {
        let passed = statistic.is_finite() && (statistic - target).abs() <= tolerance;
        Self {
            name: name.to_string(),
            statistic,
            target,
            tolerance,
            passed,
            detail,
        }
    }

    fn p_value(name: &str, p: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            statistic: p,
            target: threshold,
            tolerance: 0.0,
            passed: p.is_finite() && p > threshold,
            detail: format!("pass iff p-value > {threshold}; {detail}"),
        }
    }
}

/// Normalization method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMethod {
    /// Nested adaptive quadrature; m = 1 and at most two variables.
    Quadrature,
    /// Importance sampling with the gaussian-kernel sampler as proposal.
    Importance,
}

/// Integration domain of one scalar coordinate.
#[derive(Debug, Clone, Copy)]
enum Axis {
    Positive,
    UnitInterval,
    MinusOneOne,
    RealLine,
}

fn integrate_axis<F: Fn(f64) -> f64>(f: F, axis: Axis, tol: f64) -> quad::QuadResult {
    match axis {
        Axis::Positive => quad::integrate_semi_infinite(f, tol),
        Axis::UnitInterval => quad::integrate(f, 0.0, 1.0, tol),
        Axis::MinusOneOne => quad::integrate(
            move |phi: f64| f(phi.sin()) * phi.cos(),
            -std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
            tol,
        ),
        Axis::RealLine => quad::integrate_real_line(f, tol),
    }
}

/// Coordinate layout of an m = 1 tuple for the given family.
fn axes_for(family: Family, shape: &ExtendedShape) -> Result<Vec<Axis>> {
    let k = shape.k();
    let comp_axis = |cf: CompanionFamily| match cf {
        CompanionFamily::T => Axis::RealLine,
        CompanionFamily::Beta2 => Axis::Positive,
        CompanionFamily::Pearson2 => Axis::MinusOneOne,
        CompanionFamily::Beta1 => Axis::UnitInterval,
    };
    Ok(match family {
        Family::GenWishart => vec![Axis::Positive; k],
        Family::Joint(cf) => {
            let mut v = vec![Axis::Positive];
            v.extend(std::iter::repeat_n(comp_axis(cf), k));
            v
        }
        Family::Marginal(cf) => vec![comp_axis(cf); k],
        Family::Trimatric(_) => {
            return Err(MmvError::Domain(
                "trimatricvariate normalization uses importance sampling, not quadrature".into(),
            ))
        }
        Family::Inverted { .. } => vec![Axis::Positive; k],
    })
}

fn scalar_draw(coords: &[f64]) -> Draw {
    Draw {
        items: coords
            .iter()
            .map(|&x| DMatrix::from_element(1, 1, x))
            .collect(),
    }
}

/// Verifies that the family's density integrates to one.
pub fn check_normalization(
    name: &str,
    family: Family,
    shape: &ExtendedShape,
    kernel: Option<&KernelSpec>,
    method: NormMethod,
) -> CheckReport {
    match method {
        NormMethod::Quadrature => check_normalization_quadrature(name, family, shape, kernel),
        NormMethod::Importance => check_normalization_importance(name, family, shape, kernel),
    }
}

fn check_normalization_quadrature(
    name: &str,
    family: Family,
    shape: &ExtendedShape,
    kernel: Option<&KernelSpec>,
) -> CheckReport {
    if shape.m() != 1 {
        return CheckReport::closeness(
            name,
            f64::NAN,
            1.0,
            1e-3,
            "quadrature normalization needs m = 1".into(),
        );
    }
    let axes = match axes_for(family, shape) {
        Ok(a) => a,
        Err(e) => {
            return CheckReport::closeness(name, f64::NAN, 1.0, 1e-3, e.to_string());
        }
    };
    let pdf = |coords: &[f64]| -> f64 {
        match logpdf_draw(family, &scalar_draw(coords), shape, None, kernel) {
            Ok(lp) => lp.exp(),
            Err(_) => f64::NAN,
        }
    };
    let (mass, err, panels) = match axes.len() {
        1 => {
            let r = integrate_axis(|x| pdf(&[x]), axes[0], 1e-6);
            (r.value, r.abs_error, r.panels)
        }
        2 => {
            let inner_axis = axes[1];
            let r = integrate_axis(
                |x| integrate_axis(|y| pdf(&[x, y]), inner_axis, 1e-8).value,
                axes[0],
                1e-6,
            );
            (r.value, r.abs_error, r.panels)
        }
        n => {
            return CheckReport::closeness(
                name,
                f64::NAN,
                1.0,
                1e-3,
                format!("quadrature normalization supports at most 2 variables, family has {n}"),
            );
        }
    };
    let detail = format!(
        "family {} mass by adaptive quadrature; estimate error {err:.2e}, {panels} panels",
        family.name()
    );
    CheckReport::closeness(name, mass, 1.0, 1e-3, detail)
}

fn check_normalization_importance(
    name: &str,
    family: Family,
    shape: &ExtendedShape,
    kernel: Option<&KernelSpec>,
) -> CheckReport {
    let n_draws = 100_000usize;
    let run = || -> Result<(f64, f64)> {
        let proposal_kernel = KernelSpec::gaussian(shape.kernel_dim())?;
        let draws = sample_family(
            family,
            shape,
            &proposal_kernel,
            n_draws,
            RngStream::new(0x1535, 0),
        )?;
        let needs_kernel = !matches!(
            family,
            Family::Marginal(_)
                | Family::Inverted {
                    kind: InvertedKind::Beta2Inv,
                    ..
                }
        );
        let mut weights = Vec::with_capacity(n_draws);
        for d in &draws {
            let target = if needs_kernel {
                logpdf_draw(family, d, shape, None, kernel)?
            } else {
                logpdf_draw(family, d, shape, None, None)?
            };
            let proposal = logpdf_draw(
                family,
                d,
                shape,
                None,
                if needs_kernel {
                    Some(&proposal_kernel)
                } else {
                    None
                },
            )?;
            weights.push((target - proposal).exp());
        }
        let mean = weights.iter().sum::<f64>() / n_draws as f64;
        let var =
            weights.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (n_draws as f64 - 1.0);
        Ok((mean, (var / n_draws as f64).sqrt()))
    };
    match run() {
        Ok((mass, se)) => {
            let tol = (3.0 * se).max(1e-12);
            CheckReport::closeness(
                name,
                mass,
                1.0,
                tol,
                format!(
                    "family {} mass by importance sampling, {n_draws} draws, se {se:.3e}",
                    family.name()
                ),
            )
        }
        Err(e) => CheckReport::closeness(name, f64::NAN, 1.0, 0.0, e.to_string()),
    }
}

/// Transforms registered with the finite-difference Jacobian harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdTransform {
    TToR,
    RToT,
    InvertSpd,
}

impl FdTransform {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "t-to-r" => Ok(Self::TToR),
            "r-to-t" => Ok(Self::RToT),
            "invert-spd" => Ok(Self::InvertSpd),
            other => Err(MmvError::Domain(format!(
                "unknown transform `{other}` (expected t-to-r, r-to-t, invert-spd)"
            ))),
        }
    }
}

fn block_from_coords(coords: &[f64], n: usize, m: usize) -> MatrixBlock {
    MatrixBlock::new(DMatrix::from_column_slice(n, m, coords)).expect("finite coords")
}

fn block_to_coords(b: &MatrixBlock) -> Vec<f64> {
    b.as_matrix().as_slice().to_vec()
}

fn sym_from_vech(coords: &[f64], m: usize) -> DMatrix<f64> {
    let mut mat = DMatrix::zeros(m, m);
    let mut idx = 0;
    for i in 0..m {
        for j in i..m {
            mat[(i, j)] = coords[idx];
            mat[(j, i)] = coords[idx];
            idx += 1;
        }
    }
    mat
}

fn vech(mat: &DMatrix<f64>) -> Vec<f64> {
    let m = mat.nrows();
    let mut out = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        for j in i..m {
            out.push(mat[(i, j)]);
        }
    }
    out
}

type CoordMap = Box<dyn Fn(&[f64]) -> Option<Vec<f64>>>;

/// Central-difference Jacobian determinant of `map` at `x`.
fn fd_jacobian_det<F: Fn(&[f64]) -> Option<Vec<f64>>>(map: F, x: &[f64], eps: f64) -> Option<f64> {
    let d = x.len();
    let mut jac = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for j in 0..d {
        xp[j] = x[j] + eps;
        xm[j] = x[j] - eps;
        let fp = map(&xp)?;
        let fm = map(&xm)?;
        for i in 0..d {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * eps);
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    Some(jac.determinant().abs())
}

/// Compares exp(log_jac) of a registered transform against the
/// finite-difference determinant of its coordinate map, over random trials.
pub fn check_jacobian_fd(
    transform: FdTransform,
    n: usize,
    m: usize,
    trials: usize,
    eps: f64,
) -> CheckReport {
    let name = format!(
        "jac-fd-{}-{n}x{m}",
        match transform {
            FdTransform::TToR => "t-to-r",
            FdTransform::RToT => "r-to-t",
            FdTransform::InvertSpd => "invert-spd",
        }
    );
    let mut rng = RngStream::new(0xFD0 + n as u64 * 31 + m as u64, 0).rng();
    let mut max_rel = 0.0f64;
    let mut resamples = 0usize;
    let mut done = 0usize;
    while done < trials {
        let (coords, claimed, map): (Vec<f64>, f64, CoordMap) = match transform {
            FdTransform::TToR => {
                let t = DMatrix::from_fn(n, m, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                });
                let tb = MatrixBlock::new(t).unwrap();
                let (_, lj) = t_to_r(&tb).unwrap();
                (
                    block_to_coords(&tb),
                    lj,
                    Box::new(move |c: &[f64]| {
                        t_to_r(&block_from_coords(c, n, m))
                            .ok()
                            .map(|(r, _)| block_to_coords(&r))
                    }),
                )
            }
            FdTransform::RToT => {
                let t = DMatrix::from_fn(n, m, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    0.6 * z
                });
                let (r, _) = t_to_r(&MatrixBlock::new(t).unwrap()).unwrap();
                // Keep the FD stencil strictly inside the unit ball.
                let s = DMatrix::identity(m, m) - r.gram().unwrap();
                if s.symmetric_eigenvalues().min() < 0.05 {
                    resamples += 1;
                    continue;
                }
                let (_, lj) = r_to_t(&r).unwrap();
                (
                    block_to_coords(&r),
                    lj,
                    Box::new(move |c: &[f64]| {
                        r_to_t(&block_from_coords(c, n, m))
                            .ok()
                            .map(|(t, _)| block_to_coords(&t))
                    }),
                )
            }
            FdTransform::InvertSpd => {
                let x = DMatrix::from_fn(m + 2, m, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                });
                let s =
                    MatrixBlock::new(x).unwrap().gram().unwrap() + DMatrix::identity(m, m) * 0.4;
                let spd = SpdMatrix::new(s).unwrap();
                // Claimed |det D(inv)(X)| = |X|^{-(m+1)}: invert_spd's
                // log_jac evaluated at the point being differentiated.
                let claimed = -((m + 1) as f64) * spd.logdet().unwrap();
                let mm = m;
                (
                    vech(spd.as_matrix()),
                    claimed,
                    Box::new(move |c: &[f64]| {
                        sym_from_vech(c, mm).try_inverse().map(|inv| vech(&inv))
                    }),
                )
            }
        };
        match fd_jacobian_det(map.as_ref(), &coords, eps) {
            Some(det) => {
                let rel = (det / claimed.exp() - 1.0).abs();
                max_rel = max_rel.max(rel);
                done += 1;
            }
            None => {
                resamples += 1;
            }
        }
        if resamples > 10 * trials + 100 {
            return CheckReport::closeness(
                &name,
                f64::NAN,
                0.0,
                1e-5,
                format!("too many resamples ({resamples}); domain generation failed"),
            );
        }
    }
    CheckReport::closeness(
        &name,
        max_rel,
        0.0,
        1e-5,
        format!("max relative error over {trials} trials, eps {eps:.1e}, {resamples} resampled"),
    )
}

/// Random SPD matrix strictly inside the unit interval (both U and I - U
/// positive definite), for identity and pushforward trials.
fn random_unit_interval_spd<R: Rng + ?Sized>(m: usize, rng: &mut R) -> SpdMatrix {
    loop {
        let x = DMatrix::from_fn(m + 1, m, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            z
        });
        let g = x.transpose() * &x + DMatrix::identity(m, m) * 0.02;
        let top = g.clone().symmetric_eigenvalues().max() * (1.05 + rng.random::<f64>());
        if let Ok(u) = SpdMatrix::new(g / top) {
            let s = DMatrix::identity(m, m) - u.as_matrix();
            if SpdMatrix::new(s).is_ok() {
                return u;
            }
        }
    }
}

/// Verifies the two-block combination determinant against logdet(I - U1 U2).
pub fn check_bimatrix_identity(trials: usize) -> CheckReport {
    let m = 3;
    let mut rng = RngStream::new(0xB1, 0).rng();
    let mut max_diff = 0.0f64;
    for _ in 0..trials {
        let u1 = random_unit_interval_spd(m, &mut rng);
        let u2 = random_unit_interval_spd(m, &mut rng);
        let i = DMatrix::identity(m, m);
        let s1 = SpdMatrix::new(&i - u1.as_matrix()).unwrap();
        let s2 = SpdMatrix::new(&i - u2.as_matrix()).unwrap();
        let comb = log_combination_det(&[s1, s2]).unwrap();
        let direct = (&i - u1.as_matrix() * u2.as_matrix()).determinant().ln();
        max_diff = max_diff.max((comb - direct).abs());
    }
    CheckReport::closeness(
        "bimatrix-identity",
        max_diff,
        0.0,
        1e-10,
        format!("max |logdet difference| over {trials} random m={m} pairs"),
    )
}

/// Registered density pushforward pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushforwardPair {
    /// T marginal through r_to_t versus the Pearson II marginal.
    TToPearson2,
    /// beta II marginal through the beta I -> II map versus the beta I
    /// marginal.
    Beta2ToBeta1,
}

/// Checks dst log-density = src log-density at the transformed point plus the
/// transform's log-Jacobian, exactly as evaluated.
pub fn check_pushforward(pair: PushforwardPair, trials: usize) -> CheckReport {
    let mut rng = RngStream::new(0x9F, 0).rng();
    let mut max_diff = 0.0f64;
    let (name, detail_tag) = match pair {
        PushforwardPair::TToPearson2 => ("pushforward-t-pearson2", "pearson2 vs t"),
        PushforwardPair::Beta2ToBeta1 => ("pushforward-beta2-beta1", "beta1 vs beta2"),
    };
    for trial in 0..trials {
        // Alternate between (m, k) layouts to cover matrix and multi-block
        // cases.
        let (m, k) = match trial % 3 {
            0 => (1usize, 1usize),
            1 => (2, 1),
            _ => (2, 2),
        };
        let rows_each = m + 1;
        let a: Vec<f64> = vec![rows_each as f64 / 2.0; k];
        let shape = ExtendedShape::with_anchor(m, (m as f64 + 2.0) / 2.0, a).unwrap();
        match pair {
            PushforwardPair::TToPearson2 => {
                let mut rs = Vec::new();
                let mut ts = Vec::new();
                let mut lj_sum = 0.0;
                for _ in 0..k {
                    let t0 = DMatrix::from_fn(rows_each, m, |_, _| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    });
                    let (r, _) = t_to_r(&MatrixBlock::new(t0).unwrap()).unwrap();
                    let (t, lj) = r_to_t(&r).unwrap();
                    lj_sum += lj;
                    rs.push(r);
                    ts.push(t);
                }
                let dst = logpdf_marginal(&Companions::Pearson2(rs), &shape).unwrap();
                let src = logpdf_marginal(&Companions::T(ts), &shape).unwrap();
                max_diff = max_diff.max((dst - (src + lj_sum)).abs());
            }
            PushforwardPair::Beta2ToBeta1 => {
                let mut us = Vec::new();
                let mut fs = Vec::new();
                let mut lj_sum = 0.0;
                for _ in 0..k {
                    let u = random_unit_interval_spd(m, &mut rng);
                    fs.push(beta1_to_beta2(&u).unwrap());
                    lj_sum += beta1_to_beta2_log_jac(&u).unwrap();
                    us.push(u);
                }
                let dst = logpdf_marginal(&Companions::Beta1(us), &shape).unwrap();
                let src = logpdf_marginal(&Companions::Beta2(fs), &shape).unwrap();
                max_diff = max_diff.max((dst - (src + lj_sum)).abs());
            }
        }
    }
    CheckReport::closeness(
        name,
        max_diff,
        0.0,
        1e-10,
        format!("max |{detail_tag} difference| over {trials} random points"),
    )
}

/// Asymptotic Kolmogorov-Smirnov p-value with the Stephens small-sample
/// correction; `n` is the (effective) sample size.
pub fn ks_p_value(d: f64, n: f64) -> f64 {
    let sqrt_n = n.sqrt();
    let lambda = d * (sqrt_n + 0.12 + 0.11 / sqrt_n);
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = 2.0 * (-1.0f64).powi(j - 1) * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Two-sample KS p-value via the effective sample size n1 n2 / (n1 + n2).
pub fn ks_two_sample_p(d: f64, n1: f64, n2: f64) -> f64 {
    ks_p_value(d, n1 * n2 / (n1 + n2))
}

fn chi2_sf(x: f64, df: f64) -> f64 {
    ChiSquared::new(df)
        .map(|c| 1.0 - c.cdf(x))
        .unwrap_or(f64::NAN)
}

/// Exact-mass quantile edges of a 1-D density known through its log-pdf.
fn scalar_quantile_edges<F: Fn(f64) -> f64>(pdf: &F, axis: Axis, bins: usize) -> Result<Vec<f64>> {
    // Work in the compactified y in (0, 1) coordinate of the axis.
    let to_x = |y: f64| -> f64 {
        match axis {
            Axis::Positive => y / (1.0 - y),
            Axis::UnitInterval => y,
            Axis::MinusOneOne => 2.0 * y - 1.0,
            Axis::RealLine => (std::f64::consts::PI * (y - 0.5)).tan(),
        }
    };
    let weight = |y: f64| -> f64 {
        match axis {
            Axis::Positive => 1.0 / ((1.0 - y) * (1.0 - y)),
            Axis::UnitInterval => 1.0,
            Axis::MinusOneOne => 2.0,
            Axis::RealLine => {
                let x = (std::f64::consts::PI * (y - 0.5)).tan();
                std::f64::consts::PI * (1.0 + x * x)
            }
        }
    };
    let g = |y: f64| pdf(to_x(y)) * weight(y);
    let total = quad::integrate(g, 0.0, 1.0, 1e-9);
    if !total.converged(1e-6) {
        return Err(MmvError::Domain(format!(
            "density mass quadrature did not converge (mass {}, err {})",
            total.value, total.abs_error
        )));
    }
    let mut edges = Vec::with_capacity(bins - 1);
    let mut y_lo = 0.0;
    let mut acc = 0.0;
    for b in 1..bins {
        let want = total.value * b as f64 / bins as f64 - acc;
        // Bisect on (y_lo, 1) for the edge holding `want` additional mass.
        let mut lo = y_lo;
        let mut hi = 1.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let part = quad::integrate(g, y_lo, mid, 1e-10).value;
            if part < want {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let edge_y = 0.5 * (lo + hi);
        acc += quad::integrate(g, y_lo, edge_y, 1e-10).value;
        y_lo = edge_y;
        edges.push(to_x(edge_y));
    }
    Ok(edges)
}

/// Chi-square goodness of fit of sampled draws against the exponentiated
/// density, on equal-mass bins from the density's own quantiles. m = 1,
/// single-companion marginal families.
pub fn check_sampler_density(
    name: &str,
    family: Family,
    shape: &ExtendedShape,
    kernel: &KernelSpec,
    n_draws: usize,
) -> CheckReport {
    let run = || -> Result<(f64, f64, usize)> {
        if shape.m() != 1 || shape.k() != 1 {
            return Err(MmvError::Domain(
                "sampler-density check covers m = 1, k = 1 families".into(),
            ));
        }
        let axis = *axes_for(family, shape)?.last().expect("one companion");
        let draws = sample_family(family, shape, kernel, n_draws, RngStream::new(0x5d, 9))?;
        let mut xs: Vec<f64> = draws
            .iter()
            .map(|d| d.items.last().expect("nonempty")[(0, 0)])
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pdf = |x: f64| -> f64 {
            logpdf_draw(family, &scalar_draw(&[x]), shape, None, None)
                .map(|lp| lp.exp())
                .unwrap_or(0.0)
        };
        let bins = 50usize;
        let edges = scalar_quantile_edges(&pdf, axis, bins)?;
        let expected = n_draws as f64 / bins as f64;
        let uppers = edges
            .iter()
            .map(|e| xs.partition_point(|&x| x < *e))
            .chain(std::iter::once(xs.len()));
        let mut stat = 0.0;
        let mut prev = 0usize;
        for upto in uppers {
            let observed = (upto - prev) as f64;
            stat += (observed - expected) * (observed - expected) / expected;
            prev = upto;
        }
        let df = (bins - 1) as f64;
        Ok((chi2_sf(stat, df), stat, bins))
    };
    match run() {
        Ok((p, stat, bins)) => CheckReport::p_value(
            name,
            p,
            0.01,
            format!(
                "chi-square GOF of {n_draws} draws from {} vs density, {bins} equal-mass bins, stat {stat:.2}",
                family.name()
            ),
        ),
        Err(e) => CheckReport::p_value(name, f64::NAN, 0.01, e.to_string()),
    }
}

/// Two-sample KS on the companion trace between gaussian-kernel draws and
/// Pearson VII(nu) draws of the same marginal family: the marginal must not
/// depend on the generating kernel.
pub fn check_kernel_invariance(nu: f64, n_draws: usize) -> CheckReport {
    let run = || -> Result<(f64, f64)> {
        let shape = ExtendedShape::from_block_rows(1, &[3, 2], true)?;
        let family = Family::Marginal(CompanionFamily::Beta2);
        let dim = shape.kernel_dim();
        let gauss = KernelSpec::gaussian(dim)?;
        let p7 = KernelSpec::pearson7(nu, dim)?;
        let tr_of =
            |draws: &[Draw]| -> Vec<f64> { draws.iter().map(|d| d.items[0].trace()).collect() };
        let a = tr_of(&sample_family(
            family,
            &shape,
            &gauss,
            n_draws,
            RngStream::new(0xA11CE, 0),
        )?);
        let b = tr_of(&sample_family(
            family,
            &shape,
            &p7,
            n_draws,
            RngStream::new(0xB0B, 0),
        )?);
        let mut a = a;
        let mut b = b;
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut d: f64 = 0.0;
        let (mut i, mut j) = (0usize, 0usize);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            let fa = i as f64 / a.len() as f64;
            let fb = j as f64 / b.len() as f64;
            d = d.max((fa - fb).abs());
        }
        Ok((ks_two_sample_p(d, a.len() as f64, b.len() as f64), d))
    };
    match run() {
        Ok((p, d)) => CheckReport::p_value(
            "kernel-invariance-beta2",
            p,
            0.01,
            format!(
                "two-sample KS on tr F, gaussian vs pearson7(nu={nu}), {n_draws} draws each, D {d:.4}"
            ),
        ),
        Err(e) => CheckReport::p_value("kernel-invariance-beta2", f64::NAN, 0.01, e.to_string()),
    }
}

/// A check registered in the default suite.
pub struct NamedCheck {
    pub name: &'static str,
    /// Family the check covers, when it verifies a specific density.
    pub family: Option<&'static str>,
    runner: fn() -> CheckReport,
}

impl NamedCheck {
    pub fn run(&self) -> CheckReport {
        (self.runner)()
    }
}

macro_rules! norm_check {
    ($name:literal, $family:literal, $shape:expr, $kernel:expr, $method:expr) => {
        NamedCheck {
            name: $name,
            family: Some($family),
            runner: || {
                let family = Family::parse($family).expect("registered family");
                let shape = $shape;
                let kernel: Option<KernelSpec> = $kernel(&shape);
                check_normalization($name, family, &shape, kernel.as_ref(), $method)
            },
        }
    };
}

fn gauss_kernel(shape: &ExtendedShape) -> Option<KernelSpec> {
    Some(KernelSpec::gaussian(shape.kernel_dim()).expect("valid dim"))
}

fn pearson7_kernel(nu: f64) -> impl Fn(&ExtendedShape) -> Option<KernelSpec> {
    move |shape| Some(KernelSpec::pearson7(nu, shape.kernel_dim()).expect("valid dim"))
}

fn no_kernel(_: &ExtendedShape) -> Option<KernelSpec> {
    None
}

/// The default verification suite. Every family name in [`Family::NAMES`]
/// appears in at least one normalization check, and every sampled m = 1
/// marginal family has a sampler-density check;
/// [`assert_registry_complete`] enforces this at startup.
pub fn default_suite() -> Vec<NamedCheck> {
    vec![
        norm_check!(
            "norm-quad-gen-wishart",
            "gen-wishart",
            ExtendedShape::without_anchor(1, vec![1.0]).unwrap(),
            gauss_kernel,
            NormMethod::Quadrature
        ),
        norm_check!(
            "norm-quad-gen-wishart-k2",
            "gen-wishart",
            ExtendedShape::without_anchor(1, vec![0.5, 1.5]).unwrap(),
            gauss_kernel,
            NormMethod::Quadrature
        ),
        norm_check!(
            "norm-imp-gen-wishart-p7",
            "gen-wishart",
            ExtendedShape::from_block_rows(1, &[2, 3], false).unwrap(),
            pearson7_kernel(4.0),
            NormMethod::Importance
        ),
        norm_check!(
            "norm-quad-wishart-t",
            "wishart-t",
            ExtendedShape::from_block_rows(1, &[1, 1], true).unwrap(),
            gauss_kernel,
            NormMethod::Quadrature
        ),
        norm_check!(
            "norm-quad-wishart-beta2",
            "wishart-beta2",
            ExtendedShape::from_block_rows(1, &[2, 2], true).unwrap(),
            gauss_kernel,
            NormMethod::Quadrature
        ),
        norm_check!(
            "norm-quad-wishart-pearson2",
            "wishart-pearson2",
            ExtendedShape::from_block_rows(1, &[3, 1], true).unwrap(),
            gauss_kernel,
            NormMethod::Quadrature
        ),
        norm_check!(
            "norm-quad-wishart-beta1",
            "wishart-beta1",
            ExtendedShape::from_block_rows(1, &[3, 2], true).unwrap(),
            gauss_kernel,
            NormMethod::Quadrature
        ),
        norm_check!(
            "norm-quad-t-k1",
            "t",
            ExtendedShape::from_block_rows(1, &[1, 1], true).unwrap(),
            no_kernel,
            NormMethod::Quadrature
        ),
        norm_check!(
            "norm-quad-t-k2",
            "t",
            ExtendedShape::from_block_rows(1, &[2, 1, 1], true).unwrap(),
            no_kernel,
            NormMethod::Quadrature
        ),
        norm_check!(
            "norm-quad-beta2-k1",
            "beta2",
            ExtendedShape::with_anchor(1, 1.0, vec![1.0]).unwrap(),
            no_kernel,
            NormMethod::Quadrature
        ),
        norm_check!(
            "norm-quad-beta2-k2",
            "beta2",
            ExtendedShape::with_anchor(1, 1.2, vec![1.0, 1.4]).unwrap(),
            no_kernel,
            NormMethod::Quadrature
        ),
        norm_check!(
            "norm-quad-pearson2-k1",
            "pearson2",
            ExtendedShape::from_block_rows(1, &[1, 1], true).unwrap(),
            no_kernel,
            NormMethod::Quadrature
        ),
        norm_check!(
            "norm-quad-pearson2-k2",
            "pearson2",
            ExtendedShape::from_block_rows(1, &[3, 1, 1], true).unwrap(),
            no_kernel,
            NormMethod::Quadrature
        ),
        norm_check!(
            "norm-quad-beta1-k1",
            "beta1",
            ExtendedShape::with_anchor(1, 1.0, vec![1.0]).unwrap(),
            no_kernel,
            NormMethod::Quadrature
        ),
        norm_check!(
            "norm-quad-beta1-k2",
            "beta1",
            ExtendedShape::with_anchor(1, 2.0, vec![1.5, 1.0]).unwrap(),
            no_kernel,
            NormMethod::Quadrature
        ),
        norm_check!(
            "norm-imp-tri-wtp2",
            "tri-wtp2",
            ExtendedShape::from_block_rows(1, &[1, 1, 1], true).unwrap(),
            pearson7_kernel(6.0),
            NormMethod::Importance
        ),
        norm_check!(
            "norm-imp-tri-wb2b1",
            "tri-wb2b1",
            ExtendedShape::from_block_rows(1, &[2, 1, 1], true).unwrap(),
            pearson7_kernel(6.0),
            NormMethod::Importance
        ),
        NamedCheck {
            name: "norm-quad-gw-inv-wishart",
            family: Some("gw-inv-wishart"),
            runner: || {
                let shape = ExtendedShape::from_block_rows(1, &[3], false).unwrap();
                let kernel = KernelSpec::gaussian(shape.kernel_dim()).unwrap();
                check_normalization(
                    "norm-quad-gw-inv-wishart",
                    Family::parse_with_split("gw-inv-wishart", 0).unwrap(),
                    &shape,
                    Some(&kernel),
                    NormMethod::Quadrature,
                )
            },
        },
        NamedCheck {
            name: "norm-quad-beta2-inv",
            family: Some("beta2-inv"),
            runner: || {
                let shape = ExtendedShape::with_anchor(1, 1.5, vec![1.0]).unwrap();
                check_normalization(
                    "norm-quad-beta2-inv",
                    Family::parse_with_split("beta2-inv", 0).unwrap(),
                    &shape,
                    None,
                    NormMethod::Quadrature,
                )
            },
        },
        NamedCheck {
            name: "jac-fd-t-to-r",
            family: None,
            runner: || check_jacobian_fd(FdTransform::TToR, 3, 2, 100, 1e-6),
        },
        NamedCheck {
            name: "jac-fd-r-to-t",
            family: None,
            runner: || check_jacobian_fd(FdTransform::RToT, 2, 2, 100, 1e-6),
        },
        NamedCheck {
            name: "jac-fd-invert-spd",
            family: None,
            runner: || check_jacobian_fd(FdTransform::InvertSpd, 2, 2, 100, 1e-6),
        },
        NamedCheck {
            name: "bimatrix-identity",
            family: None,
            runner: || check_bimatrix_identity(1000),
        },
        NamedCheck {
            name: "pushforward-t-pearson2",
            family: None,
            runner: || check_pushforward(PushforwardPair::TToPearson2, 500),
        },
        NamedCheck {
            name: "pushforward-beta2-beta1",
            family: None,
            runner: || check_pushforward(PushforwardPair::Beta2ToBeta1, 500),
        },
        NamedCheck {
            name: "sampler-density-t",
            family: Some("t"),
            runner: || {
                let shape = ExtendedShape::from_block_rows(1, &[1, 1], true).unwrap();
                let kernel = KernelSpec::gaussian(2.0).unwrap();
                check_sampler_density(
                    "sampler-density-t",
                    Family::Marginal(CompanionFamily::T),
                    &shape,
                    &kernel,
                    100_000,
                )
            },
        },
        NamedCheck {
            name: "sampler-density-beta2",
            family: Some("beta2"),
            runner: || {
                let shape = ExtendedShape::from_block_rows(1, &[3, 2], true).unwrap();
                let kernel = KernelSpec::gaussian(5.0).unwrap();
                check_sampler_density(
                    "sampler-density-beta2",
                    Family::Marginal(CompanionFamily::Beta2),
                    &shape,
                    &kernel,
                    100_000,
                )
            },
        },
        NamedCheck {
            name: "sampler-density-pearson2",
            family: Some("pearson2"),
            runner: || {
                let shape = ExtendedShape::from_block_rows(1, &[2, 1], true).unwrap();
                let kernel = KernelSpec::gaussian(3.0).unwrap();
                check_sampler_density(
                    "sampler-density-pearson2",
                    Family::Marginal(CompanionFamily::Pearson2),
                    &shape,
                    &kernel,
                    100_000,
                )
            },
        },
        NamedCheck {
            name: "sampler-density-beta1",
            family: Some("beta1"),
            runner: || {
                let shape = ExtendedShape::from_block_rows(1, &[2, 2], true).unwrap();
                let kernel = KernelSpec::gaussian(4.0).unwrap();
                check_sampler_density(
                    "sampler-density-beta1",
                    Family::Marginal(CompanionFamily::Beta1),
                    &shape,
                    &kernel,
                    100_000,
                )
            },
        },
        NamedCheck {
            name: "sampler-density-beta2-p7",
            family: Some("beta2"),
            runner: || {
                // Pearson VII draws against the kernel-free density: the
                // marginal invariance, exercised through the sampler.
                let shape = ExtendedShape::from_block_rows(1, &[3, 2], true).unwrap();
                let kernel = KernelSpec::pearson7(5.0, 5.0).unwrap();
                check_sampler_density(
                    "sampler-density-beta2-p7",
                    Family::Marginal(CompanionFamily::Beta2),
                    &shape,
                    &kernel,
                    100_000,
                )
            },
        },
        NamedCheck {
            name: "kernel-invariance-beta2",
            family: Some("beta2"),
            runner: || check_kernel_invariance(5.0, 100_000),
        },
    ]
}

/// Runs one named check from the default suite.
pub fn run_named(name: &str) -> Option<CheckReport> {
    default_suite()
        .into_iter()
        .find(|c| c.name == name)
        .map(|c| c.run())
}

/// Asserts the registry covers every density family with a normalization
/// check and every sampled m = 1 marginal family with a sampler-density
/// check.
pub fn assert_registry_complete() -> Result<()> {
    let suite = default_suite();
    for fam in Family::NAMES {
        let has_norm = suite
            .iter()
            .any(|c| c.family == Some(fam) && c.name.starts_with("norm-"));
        if !has_norm {
            return Err(MmvError::Domain(format!(
                "family `{fam}` has no normalization check registered"
            )));
        }
    }
    for fam in ["t", "beta2", "pearson2", "beta1"] {
        let has_sd = suite
            .iter()
            .any(|c| c.family == Some(fam) && c.name.starts_with("sampler-density-"));
        if !has_sd {
            return Err(MmvError::Domain(format!(
                "sampled family `{fam}` has no sampler-density check registered"
            )));
        }
    }
    Ok(())
}

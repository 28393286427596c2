//! Elliptical kernel functions h with their radial normalization, so every
//! kernel-indexed density integrates to one.
//!
//! A kernel is bound to the total dimension D it normalizes over at
//! construction: the same functional form normalizes differently for every D,
//! so reusing a kernel across shapes is an error, not a convention.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma};

use crate::error::{MmvError, Result};
use crate::quad;
use crate::special::{ln_gamma, ln_sphere_area};

/// Absolute tolerance for the radial normalization quadrature.
const RADIAL_QUAD_TOL: f64 = 1e-10;

/// Knot count of the tabulated inverse CDF used to draw Kotz radii.
const RADIAL_TABLE_KNOTS: usize = 2048;

/// Kernel family with its family-specific parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// h(u) proportional to exp(-u/2).
    Gaussian,
    /// h(u) proportional to (1 + u/nu)^{-(D+nu)/2}; nu > 0.
    Pearson7 { nu: f64 },
    /// h(u) proportional to u^{T-1} exp(-r u^s); T > 1 - D/2, r > 0, s > 0.
    Kotz { t: f64, r: f64, s: f64 },
}

/// An elliptical kernel together with the total dimension it normalizes over
/// and the cached log normalization constant.
///
/// The dimension is a positive real: half-integer shape parameters produce
/// non-integer total dimensions and every normalizer here extends to them.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    family: KernelFamily,
    dim: f64,
    ln_norm: f64,
    radial_table: Option<Arc<RadialTable>>,
}

impl KernelSpec {
    /// Builds a kernel for total dimension `dim`, computing the log
    /// normalization constant: closed form for gaussian and Pearson VII,
    /// adaptive quadrature of the radial integral for Kotz.
    pub fn new(family: KernelFamily, dim: f64) -> Result<Self> {
        if !(dim >= 1.0) || !dim.is_finite() {
            return Err(MmvError::Domain(format!(
                "kernel dimension must be >= 1, got {dim}"
            )));
        }
        let (ln_norm, radial_table) = match family {
            KernelFamily::Gaussian => (-(dim / 2.0) * (2.0 * PI).ln(), None),
            KernelFamily::Pearson7 { nu } => {
                if !(nu > 0.0) {
                    return Err(MmvError::Domain(format!(
                        "Pearson VII needs nu > 0, got {nu}"
                    )));
                }
                let ln_norm =
                    ln_gamma((dim + nu) / 2.0) - dim / 2.0 * (PI * nu).ln() - ln_gamma(nu / 2.0);
                (ln_norm, None)
            }
            KernelFamily::Kotz { t, r, s } => {
                if !(r > 0.0) || !(s > 0.0) {
                    return Err(MmvError::Domain(format!(
                        "Kotz needs r > 0 and s > 0, got r = {r}, s = {s}"
                    )));
                }
                if !(t > 1.0 - dim / 2.0) {
                    return Err(MmvError::Domain(format!(
                        "Kotz radial integral diverges unless T > 1 - D/2 = {}, got T = {t}",
                        1.0 - dim / 2.0
                    )));
                }
                let ln_radial = kotz_ln_radial_integral(dim, t, r, s)?;
                let ln_norm = -(ln_sphere_area(dim)? + ln_radial);
                let table = RadialTable::build(dim, t, r, s)?;
                (ln_norm, Some(Arc::new(table)))
            }
        };
        Ok(Self {
            family,
            dim,
            ln_norm,
            radial_table,
        })
    }

    pub fn gaussian(dim: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, dim)
    }

    pub fn pearson7(nu: f64, dim: f64) -> Result<Self> {
        Self::new(KernelFamily::Pearson7 { nu }, dim)
    }

    pub fn kotz(t: f64, r: f64, s: f64, dim: f64) -> Result<Self> {
        Self::new(KernelFamily::Kotz { t, r, s }, dim)
    }

    /// Parses a kernel name as used on the command line:
    /// `gaussian`, `pearson7:nu=5`, `kotz:T=2,r=0.5,s=1`.
    pub fn parse(name: &str, dim: f64) -> Result<Self> {
        let (head, rest) = match name.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (name, None),
        };
        let mut params = std::collections::BTreeMap::new();
        if let Some(rest) = rest {
            for part in rest.split(',') {
                let (k, v) = part.split_once('=').ok_or_else(|| {
                    MmvError::Domain(format!("kernel parameter `{part}` is not key=value"))
                })?;
                let v: f64 = v.trim().parse().map_err(|_| {
                    MmvError::Domain(format!("kernel parameter `{part}` has a non-numeric value"))
                })?;
                params.insert(k.trim().to_ascii_lowercase(), v);
            }
        }
        let take = |params: &mut std::collections::BTreeMap<String, f64>, key: &str| {
            params
                .remove(key)
                .ok_or_else(|| MmvError::Domain(format!("kernel `{head}` needs parameter `{key}`")))
        };
        let spec = match head.to_ascii_lowercase().as_str() {
            "gaussian" => Self::gaussian(dim)?,
            "pearson7" => {
                let nu = take(&mut params, "nu")?;
                Self::pearson7(nu, dim)?
            }
            "kotz" => {
                let t = take(&mut params, "t")?;
                let r = take(&mut params, "r")?;
                let s = take(&mut params, "s")?;
                Self::kotz(t, r, s, dim)?
            }
            other => {
                return Err(MmvError::Domain(format!(
                    "unknown kernel `{other}` (expected gaussian, pearson7 or kotz)"
                )))
            }
        };
        if let Some(extra) = params.keys().next() {
            return Err(MmvError::Domain(format!(
                "unexpected kernel parameter `{extra}` for `{head}`"
            )));
        }
        Ok(spec)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dim(&self) -> f64 {
        self.dim
    }

    pub fn ln_norm(&self) -> f64 {
        self.ln_norm
    }

    /// Checks that this kernel was built for total dimension `required`.
    pub fn require_dim(&self, required: f64) -> Result<()> {
        if (self.dim - required).abs() > 1e-9 * required.max(1.0) {
            return Err(MmvError::Shape(format!(
                "kernel normalized over dimension {}, but the density needs {}",
                self.dim, required
            )));
        }
        Ok(())
    }

    /// Log of the normalized kernel at quadratic-form value u >= 0.
    pub fn log_h(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(MmvError::Domain(format!(
                "kernel argument must be nonnegative, got {u}"
            )));
        }
        Ok(self.ln_norm + self.log_h_raw(u))
    }

    fn log_h_raw(&self, u: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => -0.5 * u,
            KernelFamily::Pearson7 { nu } => -(self.dim + nu) / 2.0 * (1.0 + u / nu).ln(),
            KernelFamily::Kotz { t, r, s } => {
                let power = if t == 1.0 {
                    0.0
                } else if u == 0.0 {
                    // (T-1) ln 0: -inf for T > 1 (density vanishes at the
                    // origin), +inf for T < 1 (integrable singularity).
                    if t > 1.0 {
                        f64::NEG_INFINITY
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (t - 1.0) * u.ln()
                };
                power - r * u.powf(s)
            }
        }
    }

    /// Draws one radius rho with density proportional to rho^{D-1} h(rho^2).
    pub fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            KernelFamily::Gaussian => {
                let chi = ChiSquared::new(self.dim).expect("dim >= 1");
                chi.sample(rng).sqrt()
            }
            KernelFamily::Pearson7 { nu } => {
                let chi = ChiSquared::new(self.dim).expect("dim >= 1");
                let mix = Gamma::new(nu / 2.0, 2.0 / nu).expect("nu > 0");
                (chi.sample(rng) / mix.sample(rng)).sqrt()
            }
            KernelFamily::Kotz { .. } => {
                let table = self
                    .radial_table
                    .as_ref()
                    .expect("kotz kernels carry a table");
                table.inverse_cdf(rng.random::<f64>())
            }
        }
    }
}

/// ln of int_0^inf rho^{D-1} (rho^2)^{T-1} exp(-r rho^{2s}) d(rho), evaluated
/// with the peak factored out so large D stays in range.
fn kotz_ln_radial_integral(dim: f64, t: f64, r: f64, s: f64) -> Result<f64> {
    let p = dim - 1.0 + 2.0 * (t - 1.0); // rho power of the integrand
    let ln_g = move |rho: f64| -> f64 {
        if rho <= 0.0 {
            return if p > 0.0 {
                f64::NEG_INFINITY
            } else if p == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
        }
        p * rho.ln() - r * rho.powf(2.0 * s)
    };
    // Mode of the log-integrand (0 if the power is nonpositive).
    let g_max = if p > 0.0 {
        ln_g((p / (2.0 * s * r)).powf(1.0 / (2.0 * s)))
    } else {
        0.0
    };
    let res = quad::integrate_semi_infinite(move |rho| (ln_g(rho) - g_max).exp(), RADIAL_QUAD_TOL);
    if !res.value.is_finite()
        || res.value <= 0.0
        || !res.converged(RADIAL_QUAD_TOL.max(1e-9 * res.value))
    {
        return Err(MmvError::Domain(format!(
            "Kotz radial integral did not converge (T = {t}, r = {r}, s = {s}, D = {dim})"
        )));
    }
    Ok(g_max + res.value.ln())
}

/// Tabulated inverse CDF of the Kotz radial density on a monotone grid.
#[derive(Debug)]
struct RadialTable {
    radii: Vec<f64>,
    cdf: Vec<f64>,
}

impl RadialTable {
    fn build(dim: f64, t: f64, r: f64, s: f64) -> Result<Self> {
        let p = dim - 1.0 + 2.0 * (t - 1.0);
        let ln_g = move |rho: f64| p * rho.ln() - r * rho.powf(2.0 * s);
        let mode = if p > 0.0 {
            (p / (2.0 * s * r)).powf(1.0 / (2.0 * s))
        } else {
            (1.0 / r).powf(1.0 / (2.0 * s))
        };
        let g_max = if p > 0.0 { ln_g(mode) } else { 0.0 };
        // Upper cutoff: extend until the integrand is negligible relative to
        // the peak.
        let mut hi = mode.max(1.0);
        while ln_g(hi) - g_max > -46.0 {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(MmvError::Domain(
                    "Kotz radial tail does not decay; check r and s".into(),
                ));
            }
        }
        let n = RADIAL_TABLE_KNOTS;
        let mut radii = Vec::with_capacity(n + 1);
        let mut cdf = Vec::with_capacity(n + 1);
        radii.push(0.0);
        cdf.push(0.0);
        let mut acc = 0.0;
        let step = hi / n as f64;
        for i in 1..=n {
            let a = (i - 1) as f64 * step;
            let b = i as f64 * step;
            let piece = quad::integrate(
                |rho| {
                    if rho <= 0.0 {
                        0.0
                    } else {
                        (ln_g(rho) - g_max).exp()
                    }
                },
                a,
                b,
                1e-13,
            );
            acc += piece.value;
            radii.push(b);
            cdf.push(acc);
        }
        let total = acc;
        if !(total > 0.0) || !total.is_finite() {
            return Err(MmvError::Domain("Kotz radial table degenerate".into()));
        }
        for v in cdf.iter_mut() {
            *v /= total;
        }
        Ok(Self { radii, cdf })
    }

    /// Monotone piecewise-linear inversion of the tabulated CDF.
    fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let idx = self.cdf.partition_point(|&c| c < u);
        if idx == 0 {
            return self.radii[0];
        }
        if idx >= self.cdf.len() {
            return *self.radii.last().expect("table nonempty");
        }
        let (c0, c1) = (self.cdf[idx - 1], self.cdf[idx]);
        let (r0, r1) = (self.radii[idx - 1], self.radii[idx]);
        if c1 <= c0 {
            return r1;
        }
        r0 + (u - c0) / (c1 - c0) * (r1 - r0)
    }
}

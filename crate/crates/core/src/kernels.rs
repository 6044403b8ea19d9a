//! Radial mollifiers and the sphere constants `Q_{N,p}`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{usage, Error, Result};
use crate::fields::{lp_modulus_pow, scalar_lp_pow, ComplexVector};
use crate::quadrature::{pairwise_sum, RadialGrid, SphereRule};
use crate::sphere_area;

/// Which normalization a kernel satisfies.
///
/// `Full`: `∫₀^∞ ρ(r) r^{N−1} dr = 1`. `UnitInterval`: `∫₀^1 ρ(r) r^{N−1} dr = 1`
/// with a vanishing moment `∫₁^∞ ρ(r) r^{N−3} dr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Full,
    UnitInterval,
}

#[derive(Clone)]
enum Family {
    Fractional {
        s: f64,
    },
    Truncated {
        s: f64,
        radius: f64,
    },
    Custom {
        label: String,
        eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

/// A radial kernel `ρ(r)` on `R^N`.
#[derive(Clone)]
pub struct Mollifier {
    dim: usize,
    family: Family,
    regime: Regime,
    concentration: f64,
    support_cutoff: Option<f64>,
}

impl fmt::Debug for Mollifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mollifier")
            .field("label", &self.label())
            .field("dim", &self.dim)
            .field("regime", &self.regime)
            .field("support_cutoff", &self.support_cutoff)
            .finish()
    }
}

fn check_s(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return usage(format!("s must lie in (0, 1), got {s}"));
    }
    Ok(())
}

fn check_dim(dim: usize) -> Result<()> {
    if !(1..=3).contains(&dim) {
        return usage(format!("kernel dimension must be in 1..=3, got {dim}"));
    }
    Ok(())
}

/// `∫_a^b c r^{e1−1} dr`.
fn power_integral(c: f64, e1: f64, a: f64, b: f64) -> f64 {
    if e1.abs() < 1e-14 {
        c * (b / a).ln()
    } else if b.is_infinite() {
        debug_assert!(e1 < 0.0);
        -c * a.powf(e1) / e1
    } else {
        c * (b.powf(e1) - a.powf(e1)) / e1
    }
}

impl Mollifier {
    /// `ρ(r) = 2(1−s) r^{2−2s−N}` for all `r > 0`.
    pub fn fractional(s: f64, dim: usize) -> Result<Self> {
        check_s(s)?;
        check_dim(dim)?;
        Ok(Self {
            dim,
            family: Family::Fractional { s },
            regime: Regime::UnitInterval,
            concentration: s,
            support_cutoff: None,
        })
    }

    /// `ρ(r) = 2(1−s) R^{2s−2} r^{2−2s−N}` on `(0, R]`, zero beyond.
    pub fn truncated_fractional(s: f64, radius: f64, dim: usize) -> Result<Self> {
        check_s(s)?;
        check_dim(dim)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return usage(format!("kernel radius must be positive, got {radius}"));
        }
        Ok(Self {
            dim,
            family: Family::Truncated { s, radius },
            regime: Regime::Full,
            concentration: s,
            support_cutoff: Some(radius),
        })
    }

    /// A user-supplied kernel. Masses and moments are computed numerically.
    pub fn custom(
        dim: usize,
        label: impl Into<String>,
        regime: Regime,
        concentration: f64,
        support_cutoff: Option<f64>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            family: Family::Custom {
                label: label.into(),
                eval: Arc::new(eval),
            },
            regime,
            concentration,
            support_cutoff,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn concentration(&self) -> f64 {
        self.concentration
    }

    pub fn support_cutoff(&self) -> Option<f64> {
        self.support_cutoff
    }

    pub fn label(&self) -> String {
        match &self.family {
            Family::Fractional { s } => format!("fractional:s={s}"),
            Family::Truncated { s, radius } => format!("truncated:s={s},R={radius}"),
            Family::Custom { label, .. } => label.clone(),
        }
    }

    /// Same family with a different dimension.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let mut m = self.clone();
        m.dim = dim;
        Ok(m)
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        let n = self.dim as f64;
        match &self.family {
            Family::Fractional { s } => 2.0 * (1.0 - s) * r.powf(2.0 - 2.0 * s - n),
            Family::Truncated { s, radius } => {
                if r > *radius {
                    0.0
                } else {
                    2.0 * (1.0 - s) * radius.powf(2.0 * s - 2.0) * r.powf(2.0 - 2.0 * s - n)
                }
            }
            Family::Custom { eval, .. } => {
                if self.support_cutoff.is_some_and(|c| r > c) {
                    0.0
                } else {
                    eval(r)
                }
            }
        }
    }

    /// `(c, α)` with `ρ(r) = c r^{α−N}` on the support, for the power-law families.
    fn power_law(&self) -> Option<(f64, f64)> {
        match &self.family {
            Family::Fractional { s } => Some((2.0 * (1.0 - s), 2.0 - 2.0 * s)),
            Family::Truncated { s, radius } => {
                Some((2.0 * (1.0 - s) * radius.powf(2.0 * s - 2.0), 2.0 - 2.0 * s))
            }
            Family::Custom { .. } => None,
        }
    }

    /// `∫_a^b ρ(r) r^q dr` in closed form when available, otherwise
    /// numerically on a fine log grid. `b` may be infinite.
    pub fn moment(&self, a: f64, b: f64, q: f64) -> Result<f64> {
        let hi = match self.support_cutoff {
            Some(c) => b.min(c),
            None => b,
        };
        if !(hi > a) {
            return Ok(0.0);
        }
        if let Some((c, alpha)) = self.power_law() {
            // keep α separate so that q = N − 1 gives the exponent α exactly
            let e1 = alpha + (q - self.dim as f64 + 1.0);
            if a == 0.0 && e1 <= 0.0 {
                return Err(Error::NumericDomain(format!(
                    "{}: moment r^{q} diverges at 0",
                    self.label()
                )));
            }
            if hi.is_infinite() && e1 >= 0.0 {
                return Err(Error::NumericDomain(format!(
                    "{}: moment r^{q} diverges at ∞",
                    self.label()
                )));
            }
            if a == 0.0 {
                return Ok(c * hi.powf(e1) / e1);
            }
            return Ok(power_integral(c, e1, a, hi));
        }
        let fine = RadialGrid::new(1e-12, 1e12, 4000)?;
        numeric_moment(self, a, hi, q, &fine)
    }

    /// Mass carried by `(0, h)`: `∫₀^h ρ(r) r^{N−1} dr`.
    pub fn core_mass(&self, h: f64) -> Result<f64> {
        self.moment(0.0, h, self.dim as f64 - 1.0)
    }
}

/// `∫_a^b ρ(r) r^q dr` on the radial grid's log rule, with power-law
/// extrapolation for `a = 0` below `h_min` and for `b = ∞` above `h_max`.
pub fn numeric_moment(rho: &Mollifier, a: f64, b: f64, q: f64, radial: &RadialGrid) -> Result<f64> {
    let f = |r: f64| rho.eval(r) * r.powf(q + 1.0);
    let lo = if a == 0.0 { radial.h_min } else { a };
    let hi = if b.is_infinite() { radial.h_max } else { b };
    let mut parts = Vec::new();
    if hi > lo {
        for (r, w) in radial.rule(lo, hi) {
            parts.push(w * rho.eval(r) * r.powf(q));
        }
    }
    // local exponent of r ↦ ρ(r) r^{q+1} from two nearby samples
    let slope = |r0: f64, r1: f64| -> Option<f64> {
        let (f0, f1) = (f(r0), f(r1));
        if f0 > 0.0 && f1 > 0.0 {
            Some((f1 / f0).ln() / (r1 / r0).ln())
        } else {
            None
        }
    };
    if a == 0.0 && lo < hi {
        match slope(lo, lo * 1.5) {
            Some(alpha) if alpha > 0.0 => parts.push(f(lo) / alpha),
            Some(_) => {
                return Err(Error::NumericDomain(format!(
                    "{}: r^{q} moment not integrable at 0",
                    rho.label()
                )))
            }
            None => {}
        }
    }
    if b.is_infinite() {
        let top = if lo < hi { hi } else { lo };
        match slope(top / 1.5, top) {
            Some(alpha) if alpha < 0.0 => parts.push(-f(top) / alpha),
            Some(_) => {
                return Err(Error::NumericDomain(format!(
                    "{}: r^{q} moment not integrable at ∞",
                    rho.label()
                )))
            }
            None => {}
        }
    }
    let v = pairwise_sum(&parts);
    if !v.is_finite() {
        return Err(Error::NumericDomain(format!(
            "{}: non-finite moment",
            rho.label()
        )));
    }
    Ok(v)
}

/// Numerically computed normalization checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MollifierDiagnostics {
    /// `∫ ρ r^{N−1}` over `(0, ∞)` (full) or `(0, 1)` (unit interval).
    pub mass: f64,
    /// `∫_δ ρ r^{N−1}` up to `∞` (full) or `1` (unit interval).
    pub tail: f64,
    /// `∫₁^∞ ρ r^{N−3}`, unit-interval regime only.
    pub remark_tail: Option<f64>,
}

pub fn mollifier_diagnostics(
    rho: &Mollifier,
    delta: f64,
    radial: &RadialGrid,
) -> Result<MollifierDiagnostics> {
    if !(delta > 0.0) {
        return usage(format!("delta must be positive, got {delta}"));
    }
    let n = rho.dim() as f64;
    let upper = match (rho.regime(), rho.support_cutoff()) {
        (Regime::UnitInterval, _) => 1.0,
        (Regime::Full, Some(c)) => c,
        (Regime::Full, None) => f64::INFINITY,
    };
    let mass = numeric_moment(rho, 0.0, upper, n - 1.0, radial)?;
    let tail = if delta >= upper {
        0.0
    } else {
        numeric_moment(rho, delta, upper, n - 1.0, radial)?
    };
    let remark_tail = match rho.regime() {
        Regime::UnitInterval => {
            let b = rho.support_cutoff().unwrap_or(f64::INFINITY);
            Some(if b <= 1.0 {
                0.0
            } else {
                numeric_moment(rho, 1.0, b, n - 3.0, radial)?
            })
        }
        Regime::Full => None,
    };
    Ok(MollifierDiagnostics {
        mass,
        tail,
        remark_tail,
    })
}

/// CLI kernel selector: `fractional:s=0.99` or `truncated:s=0.99,R=16`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum KernelSpec {
    Fractional { s: f64 },
    Truncated { s: f64, radius: f64 },
}

pub const DEFAULT_KERNEL_RADIUS: f64 = 16.0;

impl KernelSpec {
    pub fn build(&self, dim: usize) -> Result<Mollifier> {
        match *self {
            KernelSpec::Fractional { s } => Mollifier::fractional(s, dim),
            KernelSpec::Truncated { s, radius } => Mollifier::truncated_fractional(s, radius, dim),
        }
    }

    pub fn s(&self) -> f64 {
        match *self {
            KernelSpec::Fractional { s } | KernelSpec::Truncated { s, .. } => s,
        }
    }

    pub fn with_s(&self, s: f64) -> Self {
        match *self {
            KernelSpec::Fractional { .. } => KernelSpec::Fractional { s },
            KernelSpec::Truncated { radius, .. } => KernelSpec::Truncated { s, radius },
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Fractional { s } => write!(f, "fractional:s={s}"),
            KernelSpec::Truncated { s, radius } => write!(f, "truncated:s={s},R={radius}"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (family, rest) = text.split_once(':').unwrap_or((text, ""));
        let mut s = None;
        let mut radius = None;
        for kv in rest.split(',').filter(|t| !t.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("kernel parameter `{kv}` is not key=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Usage(format!("kernel parameter `{k}` is not a number")))?;
            match k.trim() {
                "s" => s = Some(v),
                "R" | "r" => radius = Some(v),
                other => return usage(format!("unknown kernel parameter `{other}`")),
            }
        }
        let s = s.ok_or_else(|| Error::Usage(format!("kernel `{text}` needs s=...")))?;
        check_s(s)?;
        match family.trim() {
            "fractional" => {
                if radius.is_some() {
                    return usage("fractional kernel takes no R");
                }
                Ok(KernelSpec::Fractional { s })
            }
            "truncated" => {
                let radius = radius.unwrap_or(DEFAULT_KERNEL_RADIUS);
                if !(radius > 0.0 && radius.is_finite()) {
                    return usage(format!("kernel R must be positive, got {radius}"));
                }
                Ok(KernelSpec::Truncated { s, radius })
            }
            other => usage(format!("unknown kernel family `{other}`")),
        }
    }
}

/// `Q_{N,p}` together with its quadrature value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QConstant {
    pub dim: usize,
    pub p: f64,
    /// Closed form for `p = 2`, quadrature otherwise.
    pub value: f64,
    pub quadrature_value: f64,
    /// `|S^{N−1}|/(2N)`, only for `p = 2`.
    pub closed_form: Option<f64>,
}

/// `(1/p) Σ_σ w_σ |ω·σ|_p^p` for a real unit vector `ω`.
pub fn q_quadrature(omega: &[f64], p: f64, rule: &SphereRule) -> f64 {
    let n = rule.dim();
    let terms: Vec<f64> = rule
        .nodes()
        .iter()
        .map(|(sig, w)| {
            let d: f64 = omega.iter().zip(&sig[..n]).map(|(a, b)| a * b).sum();
            w * d.abs().powf(p)
        })
        .collect();
    pairwise_sum(&terms) / p
}

/// `Q_{N,p} = (1/p) ∫_{S^{N−1}} |e_N·σ|_p^p dσ`.
pub fn q_constant(dim: usize, p: f64, rule: &SphereRule) -> Result<QConstant> {
    if rule.dim() != dim {
        return usage(format!(
            "sphere rule has dimension {}, expected {dim}",
            rule.dim()
        ));
    }
    if !(p > 1.0 && p.is_finite()) {
        return usage(format!("p must be in (1, ∞), got {p}"));
    }
    let mut omega = vec![0.0; dim];
    omega[dim - 1] = 1.0;
    let quadrature_value = q_quadrature(&omega, p, rule);
    let closed_form = (p == 2.0).then(|| sphere_area(dim) / (2.0 * dim as f64));
    Ok(QConstant {
        dim,
        p,
        value: closed_form.unwrap_or(quadrature_value),
        quadrature_value,
        closed_form,
    })
}

/// Relative defect of `Σ_σ w_σ |z·σ|_p^p = p Q_{N,p} |z|_p^p`.
pub fn sphere_moment_identity_residual(
    z: &ComplexVector,
    p: f64,
    rule: &SphereRule,
) -> Result<f64> {
    let q = q_constant(z.dim(), p, rule)?;
    let zp = lp_modulus_pow(z.as_slice(), p);
    if zp == 0.0 {
        return Ok(0.0);
    }
    let n = rule.dim();
    let terms: Vec<f64> = rule
        .nodes()
        .iter()
        .map(|(sig, w)| {
            let d: Complex64 = z.dot_real(&sig[..n]);
            w * scalar_lp_pow(d, p)
        })
        .collect();
    let lhs = pairwise_sum(&terms);
    let rhs = p * q.value * zp;
    Ok((lhs - rhs).abs() / rhs)
}

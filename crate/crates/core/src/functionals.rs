//! Local and nonlocal magnetic energies, pointwise densities and the maximal
//! operators used to audit them.
//!
//! Nonlocal integrals are taken in polar form around each outer point,
//! `y = x + hσ`, so the inner integrals are one-dimensional in `h`. Two
//! pieces are handled in closed form rather than by quadrature:
//!
//! * below `h_min` the difference `Ψ_u(x, x+hσ) − u(x)` is replaced by its
//!   first-order expansion `h (∇u − iAu)(x)·σ`; this carries the mass of the
//!   fractional kernels, which pile up at `h → 0` as `s → 1`;
//! * for `J_δ` the radial weight `δ^p h^{−p−1}` is integrated exactly over
//!   the super-level set `{h : |Ψ_u(x, x+hσ) − u(x)|_p > δ}`, whose boundary
//!   is located by dense sampling followed by bisection inside each cell
//!   where the sampled indicator flips.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{usage, Error, Result};
use crate::fields::{
    lp_modulus_pow, magnetic_gradient_raw, psi_raw, scalar_lp_pow, ComplexVector, ScalarField,
    VectorPotential, MAX_DIM,
};
use crate::kernels::Mollifier;
use crate::quadrature::{
    gauss_legendre_on, integrate_box, pairwise_sum, reduce_indexed, uniform_sphere3, BoxGrid,
    QuadConfig, RadialGrid, SphereRule,
};
use crate::sphere_area;

/// A computed functional value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyValue {
    pub value: f64,
    pub estimated_error: f64,
    pub config_digest: String,
}

impl EnergyValue {
    fn zero(digest: String) -> Self {
        Self {
            value: 0.0,
            estimated_error: 0.0,
            config_digest: digest,
        }
    }
}

const BISECTION_STEPS: usize = 48;

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return usage(format!("p must lie in (1, ∞), got {p}"));
    }
    Ok(())
}

fn check_pair(u: &ScalarField, a: &VectorPotential, dim: usize) -> Result<()> {
    if u.dim() != dim || a.dim() != dim {
        return usage(format!(
            "dimension mismatch: field {}, potential {}, quadrature {dim}",
            u.dim(),
            a.dim()
        ));
    }
    Ok(())
}

fn check_point(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return usage(format!("point has dimension {}, expected {dim}", x.len()));
    }
    Ok(())
}

fn check_direction(sigma: &[f64], dim: usize) -> Result<()> {
    check_point(sigma, dim)?;
    let r: f64 = sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (r - 1.0).abs() > 1e-12 {
        return usage(format!("direction must be a unit vector, |σ| = {r}"));
    }
    Ok(())
}

fn non_finite(v: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NumericDomain(format!(
            "non-finite value {v} at {}",
            what()
        )))
    }
}

/// Ray geometry around a fixed outer point.
struct Ray<'a> {
    u: &'a ScalarField,
    a: &'a VectorPotential,
    x: &'a [f64],
    sigma: &'a [f64],
    ux: Complex64,
}

impl Ray<'_> {
    /// `Ψ_u(x, x + hσ) − Ψ_u(x, x)`.
    #[inline]
    fn diff(&self, h: f64) -> Complex64 {
        let n = self.x.len();
        let mut y = [0.0; MAX_DIM];
        for k in 0..n {
            y[k] = self.x[k] + h * self.sigma[k];
        }
        psi_raw(self.u, self.a, self.x, &y[..n]) - self.ux
    }
}

/// Integrates `ray(x, u(x), g(x), σ)` over `x` in the box and `σ` on the
/// sphere: tensor quadrature, or sampling when the configuration asks for it.
/// Returns the value and a sampling standard error (zero for tensor rules).
fn integrate_rays<F>(
    u: &ScalarField,
    a: &VectorPotential,
    cfg: &QuadConfig,
    ray: F,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64], Complex64, &ComplexVector, &[f64]) -> f64 + Sync + Send,
{
    let n = cfg.dim();
    if cfg.uses_mc() {
        let mc = cfg.mc.expect("mc sampler");
        let r = cfg.grid.radius();
        let (mean, se) = mc.mean(5, |s| {
            let x = [
                r * (2.0 * s[0] - 1.0),
                r * (2.0 * s[1] - 1.0),
                r * (2.0 * s[2] - 1.0),
            ];
            let sigma = uniform_sphere3(s[3], s[4]);
            let ux = u.eval(&x);
            let g = magnetic_gradient_raw(u, a, &x, None);
            non_finite(ray(&x, ux, &g, &sigma), || {
                format!("sample x={x:?} sigma={sigma:?}")
            })
        })?;
        let scale = (2.0 * r).powi(3) * sphere_area(3);
        return Ok((scale * mean, scale * se));
    }
    let sphere = &cfg.sphere;
    let v = reduce_indexed(cfg.grid.len(), 1, |i| {
        let (p, wx) = cfg.grid.node(i);
        let x = &p[..n];
        let ux = u.eval(x);
        let g = magnetic_gradient_raw(u, a, x, None);
        let mut acc = Vec::with_capacity(sphere.len());
        for (sig, ws) in sphere.nodes() {
            let v = ray(x, ux, &g, &sig[..n]);
            let v = non_finite(v, || format!("node {i} x={x:?} sigma={:?}", &sig[..n]))?;
            acc.push(ws * v);
        }
        Ok(wx * pairwise_sum(&acc))
    })?;
    Ok((v, 0.0))
}

/// `∫ |∇u − iAu|_p^p dx` over the box.
pub fn local_energy(
    u: &ScalarField,
    a: &VectorPotential,
    p: f64,
    grid: &BoxGrid,
) -> Result<EnergyValue> {
    check_p(p)?;
    check_pair(u, a, grid.dim())?;
    let digest = box_digest(grid);
    if u.is_zero() {
        return Ok(EnergyValue::zero(digest));
    }
    let density = |x: &[f64]| lp_modulus_pow(magnetic_gradient_raw(u, a, x, None).as_slice(), p);
    let value = integrate_box(density, grid)?;
    Ok(EnergyValue {
        value,
        estimated_error: box_face_term(&density, grid),
        config_digest: digest,
    })
}

fn box_digest(grid: &BoxGrid) -> String {
    use sha2::{Digest, Sha256};
    let desc = format!(
        "dim={};radius={:e};nodes_per_dim={};rule={:?}",
        grid.dim(),
        grid.radius(),
        grid.nodes_per_dim(),
        grid.rule()
    );
    hex::encode(&Sha256::digest(desc.as_bytes())[..8])
}

/// Size of the integrand on the box faces times the box volume; a proxy for
/// the truncation error of the whole-space integral.
fn box_face_term(f: &dyn Fn(&[f64]) -> f64, grid: &BoxGrid) -> f64 {
    let n = grid.dim();
    let r = grid.radius();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        for sgn in [-1.0, 1.0] {
            let mut x = [0.0; MAX_DIM];
            x[k] = sgn * r;
            worst = worst.max(f(&x[..n]).abs());
        }
    }
    worst * (2.0 * r).powi(n as i32)
}

/// `∫ |u|_p^p dx` over the box.
pub fn lp_norm_pow(u: &ScalarField, p: f64, grid: &BoxGrid) -> Result<f64> {
    if u.is_zero() {
        return Ok(0.0);
    }
    integrate_box(|x| scalar_lp_pow(u.eval(x), p), grid)
}

/// Largest `|u|` over the box nodes.
pub fn sup_modulus(u: &ScalarField, grid: &BoxGrid) -> f64 {
    let n = grid.dim();
    grid.iter()
        .map(|(x, _)| u.eval(&x[..n]).norm())
        .fold(0.0, f64::max)
}

/// Precomputed radial pieces of the mollified energy for one kernel.
struct BbmRadial {
    /// `(h, w_h h^{N−1} ρ(h) / h^p)`.
    nodes: Vec<(f64, f64)>,
    /// `∫₀^{h_min} ρ r^{N−1} dr`.
    core_mass: f64,
    /// `∫_{cap}^∞ ρ r^{N−1−p} dr`, zero when the kernel is cut off inside the grid.
    tail_moment: f64,
    h_lo: f64,
}

impl BbmRadial {
    fn new(rho: &Mollifier, p: f64, radial: &RadialGrid) -> Result<Self> {
        let n = rho.dim() as f64;
        let h_lo = radial.h_min;
        let cap = radial
            .h_max
            .min(rho.support_cutoff().unwrap_or(f64::INFINITY));
        let nodes = radial
            .rule(h_lo, cap)
            .into_iter()
            .map(|(h, w)| (h, w * h.powf(n - 1.0 - p) * rho.eval(h)))
            .collect();
        let core_mass = rho.core_mass(h_lo.min(cap))?;
        let tail_moment = match rho.support_cutoff() {
            Some(c) if c <= cap => 0.0,
            _ => rho
                .moment(cap, f64::INFINITY, n - 1.0 - p)
                .map_err(|e| match e {
                    Error::NumericDomain(m) => {
                        Error::NumericDomain(format!("diverging kernel tail: {m}"))
                    }
                    other => other,
                })?,
        };
        Ok(Self {
            nodes,
            core_mass,
            tail_moment,
            h_lo,
        })
    }

    /// Quadrature part plus the first-order core; the tail is added separately.
    #[inline]
    fn ray(&self, ray: &Ray<'_>, g: &ComplexVector, p: f64, buf: &mut Vec<f64>) -> f64 {
        buf.clear();
        for &(h, w) in &self.nodes {
            buf.push(w * scalar_lp_pow(ray.diff(h), p));
        }
        let core = self.core_mass * scalar_lp_pow(g.dot_real(ray.sigma), p);
        pairwise_sum(buf) + core
    }

    /// Far-field estimate: for `|x − y|` beyond the grid, the two values
    /// decouple and each outer point contributes `2|u(x)|_p^p` per direction.
    #[inline]
    fn tail(&self, ux: Complex64, p: f64) -> f64 {
        if self.tail_moment == 0.0 {
            0.0
        } else {
            2.0 * scalar_lp_pow(ux, p) * self.tail_moment
        }
    }
}

/// `∬ |Ψ_u(x,y) − Ψ_u(x,x)|_p^p / |x−y|^p ρ(|x−y|) dx dy`.
pub fn bbm_energy(
    u: &ScalarField,
    a: &VectorPotential,
    rho: &Mollifier,
    p: f64,
    cfg: &QuadConfig,
) -> Result<EnergyValue> {
    check_p(p)?;
    check_pair(u, a, cfg.dim())?;
    if rho.dim() != cfg.dim() {
        return usage("kernel dimension differs from quadrature dimension");
    }
    let digest = format!("{}:{}", cfg.digest(), rho.label());
    if u.is_zero() {
        return Ok(EnergyValue::zero(digest));
    }
    let radial = BbmRadial::new(rho, p, &cfg.radial)?;
    let (value, mc_err) = integrate_rays(u, a, cfg, |x, ux, g, sigma| {
        let ray = Ray { u, a, x, sigma, ux };
        let mut buf = Vec::with_capacity(radial.nodes.len());
        radial.ray(&ray, g, p, &mut buf) + radial.tail(ux, p)
    })?;
    // error budget: tail estimate, second-order defect of the core, box faces, sampling
    let tail_total = if radial.tail_moment > 0.0 {
        sphere_area(cfg.dim()) * 2.0 * radial.tail_moment * lp_norm_pow(u, p, &cfg.grid)?
    } else {
        0.0
    };
    let core_total =
        radial.core_mass * sphere_area(cfg.dim()) * local_energy(u, a, p, &cfg.grid)?.value;
    let face = box_face_term(&|x: &[f64]| scalar_lp_pow(u.eval(x), p), &cfg.grid);
    let exterior = exterior_pairs(u, rho, p, cfg, radial.h_lo)?;
    Ok(EnergyValue {
        value,
        estimated_error: tail_total + core_total * radial.h_lo + face + exterior + mc_err,
        config_digest: digest,
    })
}

/// Bound on the pairs with `x` outside the box and `y` inside:
/// `|S| Σ_y w_y |u(y)|_p^p ∫_{d(y)}^∞ ρ(r) r^{N−1−p} dr`, `d(y)` the
/// distance from `y` to the box boundary.
fn exterior_pairs(
    u: &ScalarField,
    rho: &Mollifier,
    p: f64,
    cfg: &QuadConfig,
    h_lo: f64,
) -> Result<f64> {
    let n = cfg.dim();
    let r = cfg.grid.radius();
    let q = n as f64 - 1.0 - p;
    let per_node = reduce_indexed(cfg.grid.len(), 64, |i| {
        let (y, w) = cfg.grid.node(i);
        let m = scalar_lp_pow(u.eval(&y[..n]), p);
        if m == 0.0 {
            return Ok(0.0);
        }
        let d = y[..n]
            .iter()
            .fold(r, |acc, v| acc.min(r - v.abs()))
            .max(h_lo);
        Ok(w * m * rho.moment(d, f64::INFINITY, q)?)
    })?;
    Ok(sphere_area(n) * per_node)
}

/// `∫ 1{|Ψ_u(x, x+hσ) − u(x)|_p > δ} δ^p h^{−p−1} dh` along one ray.
fn jdelta_ray_raw(ray: &Ray<'_>, delta: f64, p: f64, samples: &[f64], vals: &mut Vec<f64>) -> f64 {
    let dp = delta.powf(p);
    let above = |h: f64| scalar_lp_pow(ray.diff(h), p) > dp;
    let seg = |lo: f64, hi: f64| -> f64 {
        if hi.is_infinite() {
            dp / p * lo.powf(-p)
        } else {
            dp / p * (lo.powf(-p) - hi.powf(-p))
        }
    };
    vals.clear();
    vals.extend(samples.iter().map(|&h| scalar_lp_pow(ray.diff(h), p)));
    let mut pieces = Vec::new();
    let mut start = None;
    if vals[0] > dp {
        // |Ψ − u(x)| ≈ c h below the first sample
        start = Some(samples[0] * (dp / vals[0]).powf(1.0 / p));
    }
    for k in 0..samples.len() - 1 {
        let (pk, pk1) = (vals[k] > dp, vals[k + 1] > dp);
        if pk == pk1 {
            continue;
        }
        let (mut lo, mut hi) = (samples[k], samples[k + 1]);
        for _ in 0..BISECTION_STEPS {
            let mid = (lo * hi).sqrt();
            if above(mid) == pk {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c = (lo * hi).sqrt();
        if pk {
            pieces.push(seg(start.take().expect("open interval"), c));
        } else {
            start = Some(c);
        }
    }
    if let Some(s) = start {
        pieces.push(seg(s, f64::INFINITY));
    }
    pieces.iter().sum()
}

/// The inner radial integral of [`jdelta_energy`] for a fixed `(x, σ)`.
pub fn jdelta_ray(
    u: &ScalarField,
    a: &VectorPotential,
    x: &[f64],
    sigma: &[f64],
    delta: f64,
    p: f64,
    radial: &RadialGrid,
) -> Result<f64> {
    check_p(p)?;
    check_pair(u, a, u.dim())?;
    check_point(x, u.dim())?;
    check_direction(sigma, u.dim())?;
    if !(delta > 0.0) {
        return usage(format!("delta must be positive, got {delta}"));
    }
    if u.is_zero() {
        return Ok(0.0);
    }
    let ray = Ray {
        u,
        a,
        x,
        sigma,
        ux: u.eval(x),
    };
    let samples = radial.samples();
    let mut vals = Vec::with_capacity(samples.len());
    let v = jdelta_ray_raw(&ray, delta, p, &samples, &mut vals);
    non_finite(v, || format!("ray x={x:?} sigma={sigma:?}"))
}

/// `(1/p) |(∇u − iAu)(x)·σ|_p^p`, the `δ → 0` limit of [`jdelta_ray`].
pub fn jdelta_ray_oracle(
    u: &ScalarField,
    a: &VectorPotential,
    x: &[f64],
    sigma: &[f64],
    p: f64,
) -> Result<f64> {
    check_p(p)?;
    check_pair(u, a, u.dim())?;
    check_point(x, u.dim())?;
    check_direction(sigma, u.dim())?;
    let g = magnetic_gradient_raw(u, a, x, None);
    Ok(scalar_lp_pow(g.dot_real(sigma), p) / p)
}

/// `∬_{|Ψ_u(x,y) − Ψ_u(x,x)|_p > δ} δ^p / |x−y|^{N+p} dx dy`.
pub fn jdelta_energy(
    u: &ScalarField,
    a: &VectorPotential,
    delta: f64,
    p: f64,
    cfg: &QuadConfig,
) -> Result<EnergyValue> {
    check_p(p)?;
    check_pair(u, a, cfg.dim())?;
    if !(delta > 0.0 && delta.is_finite()) {
        return usage(format!("delta must be positive, got {delta}"));
    }
    let digest = format!("{}:delta={delta:e}", cfg.digest());
    if u.is_zero() {
        return Ok(EnergyValue::zero(digest));
    }
    let samples = cfg.radial.samples();
    let (value, mc_err) = integrate_rays(u, a, cfg, |x, ux, _g, sigma| {
        let ray = Ray { u, a, x, sigma, ux };
        let mut vals = Vec::with_capacity(samples.len());
        jdelta_ray_raw(&ray, delta, p, &samples, &mut vals)
    })?;
    let face = box_face_term(&|x: &[f64]| scalar_lp_pow(u.eval(x), p), &cfg.grid);
    Ok(EnergyValue {
        value,
        estimated_error: face + mc_err,
        config_digest: digest,
    })
}

/// Checks `sup_{t>1} t^{−2} ρ(t) < ∞` on a log sample of `t ∈ [1, 10^12]`.
fn check_kernel_far_field(rho: &Mollifier) -> Result<()> {
    let q = |t: f64| rho.eval(t) / (t * t);
    let near = q(1.0).max(q(10.0)).max(f64::MIN_POSITIVE);
    let far = (0..=48)
        .map(|k| q(10f64.powf(k as f64 / 4.0)))
        .fold(0.0, f64::max);
    if !far.is_finite() || far > 1e3 * near {
        return Err(Error::NumericDomain(format!(
            "diverging kernel tail: t^-2 rho(t) grows on [1, 1e12] for {}",
            rho.label()
        )));
    }
    Ok(())
}

/// `D(u, x) = ∫ |Ψ_u(x,y) − Ψ_u(x,x)|² / |x−y|² ρ(|x−y|) dy`.
pub fn pointwise_bbm_density(
    u: &ScalarField,
    a: &VectorPotential,
    rho: &Mollifier,
    x: &[f64],
    radial: &RadialGrid,
    sphere: &SphereRule,
) -> Result<f64> {
    let n = sphere.dim();
    check_pair(u, a, n)?;
    check_point(x, n)?;
    if rho.dim() != n {
        return usage("kernel dimension differs from sphere dimension");
    }
    check_kernel_far_field(rho)?;
    if u.is_zero() {
        return Ok(0.0);
    }
    let p = 2.0;
    let rad = BbmRadial::new(rho, p, radial)?;
    let ux = u.eval(x);
    let g = magnetic_gradient_raw(u, a, x, None);
    let mut buf = Vec::with_capacity(rad.nodes.len());
    let mut acc = Vec::with_capacity(sphere.len());
    for (sig, ws) in sphere.nodes() {
        let ray = Ray {
            u,
            a,
            x,
            sigma: &sig[..n],
            ux,
        };
        acc.push(ws * (rad.ray(&ray, &g, p, &mut buf) + rad.tail(ux, p)));
    }
    non_finite(pairwise_sum(&acc), || format!("x={x:?}"))
}

/// `J_δ(u, x) = ∫_{|Ψ_u(x,y) − Ψ_u(x,x)| > δ} δ² / |x−y|^{N+2} dy`.
pub fn pointwise_jdelta(
    u: &ScalarField,
    a: &VectorPotential,
    delta: f64,
    x: &[f64],
    radial: &RadialGrid,
    sphere: &SphereRule,
) -> Result<f64> {
    let n = sphere.dim();
    check_pair(u, a, n)?;
    check_point(x, n)?;
    if !(delta > 0.0) {
        return usage(format!("delta must be positive, got {delta}"));
    }
    if u.is_zero() {
        return Ok(0.0);
    }
    let samples = radial.samples();
    let ux = u.eval(x);
    let mut vals = Vec::with_capacity(samples.len());
    let acc: Vec<f64> = sphere
        .nodes()
        .iter()
        .map(|(sig, ws)| {
            let ray = Ray {
                u,
                a,
                x,
                sigma: &sig[..n],
                ux,
            };
            ws * jdelta_ray_raw(&ray, delta, 2.0, &samples, &mut vals)
        })
        .collect();
    non_finite(pairwise_sum(&acc), || format!("x={x:?}"))
}

/// Simpson panels for each segment average.
pub const SIMPSON_PANELS: usize = 64;
/// Log-grid density of the maximal operators.
pub const POINTS_PER_DECADE: usize = 64;

/// `(1/t) ∫₀^t f(x + sσ) ds` by composite Simpson.
fn segment_average(f: &dyn Fn(&[f64]) -> f64, x: &[f64], sigma: &[f64], t: f64) -> f64 {
    let n = x.len();
    let m = SIMPSON_PANELS;
    let step = t / m as f64;
    let mut y = [0.0; MAX_DIM];
    let mut terms = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let s = step * k as f64;
        for i in 0..n {
            y[i] = x[i] + s * sigma[i];
        }
        let c = if k == 0 || k == m {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        terms.push(c * f(&y[..n]));
    }
    pairwise_sum(&terms) * step / 3.0 / t
}

/// Discretized `M_σ f(x) = sup_t (1/t) ∫₀^t f(x + sσ) ds` over the log grid
/// `t_k = t_max·10^{−k/64}`, `k = 0..count`.
pub fn directional_maximal(
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    sigma: &[f64],
    t_max: f64,
    count: usize,
) -> f64 {
    (0..count.max(1))
        .map(|k| t_max * 10f64.powf(-(k as f64) / POINTS_PER_DECADE as f64))
        .map(|t| segment_average(f, x, sigma, t))
        .fold(0.0, f64::max)
}

/// Discretized Hardy–Littlewood maximal function: the largest ball average
/// of `f` around `x` over `radii`, each average by a Gauss–Legendre radial
/// rule with `resolution` nodes times a sphere rule of order `resolution`.
pub fn hl_maximal(
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    radii: &[f64],
    resolution: usize,
) -> Result<f64> {
    let n = x.len();
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return usage("radii must be a nonempty list of positive numbers");
    }
    if resolution == 0 {
        return usage("resolution must be positive");
    }
    let sphere = SphereRule::build(n, resolution)?;
    let mut best: f64 = 0.0;
    for &r in radii {
        let (hs, wh) = gauss_legendre_on(resolution, 0.0, r);
        let mut terms = Vec::with_capacity(hs.len() * sphere.len());
        let mut y = [0.0; MAX_DIM];
        for (h, w) in hs.iter().zip(&wh) {
            for (sig, ws) in sphere.nodes() {
                for i in 0..n {
                    y[i] = x[i] + h * sig[i];
                }
                terms.push(w * ws * h.powi(n as i32 - 1) * f(&y[..n]));
            }
        }
        let volume = sphere_area(n) * r.powi(n as i32) / n as f64;
        best = best.max(pairwise_sum(&terms) / volume);
    }
    Ok(best)
}

/// `T_M u`: radial projection of the values onto the disc of radius `M`.
pub fn truncate_field(u: &ScalarField, m: f64) -> Result<ScalarField> {
    if !(m > 0.0 && m.is_finite()) {
        return usage(format!("truncation level must be positive, got {m}"));
    }
    let inner = u.clone();
    let mut t = ScalarField::new(u.dim(), format!("T_{m}({})", u.label()), move |x| {
        let v = inner.eval(x);
        let r = v.norm();
        if r <= m {
            v
        } else {
            v * (m / r)
        }
    })?;
    if let Some(r) = u.support_radius() {
        t = t.with_support_radius(r);
    }
    Ok(t)
}

/// `|Ψ_u(x, x+hσ) − Ψ_u(x,x)| − [h M_σ(|∇u − iAu|)(x) + h² ‖∇A‖ M_σ(|u|)(x)]`.
///
/// The maximal functions run over `t ∈ [h/100, 10h]`, which contains `t = h`
/// exactly. A nonpositive value certifies the segment bound at `(x, h, σ)`.
pub fn segment_bound_residual(
    u: &ScalarField,
    a: &VectorPotential,
    x: &[f64],
    h: f64,
    sigma: &[f64],
) -> Result<f64> {
    let n = u.dim();
    check_pair(u, a, n)?;
    check_point(x, n)?;
    check_direction(sigma, n)?;
    if !(h > 0.0 && h < 1.0) {
        return usage(format!("h must lie in (0, 1), got {h}"));
    }
    if u.is_zero() {
        return Ok(0.0);
    }
    let ray = Ray {
        u,
        a,
        x,
        sigma,
        ux: u.eval(x),
    };
    let lhs = ray.diff(h).norm();
    let grad_mod = |y: &[f64]| magnetic_gradient_raw(u, a, y, None).norm();
    let modulus = |y: &[f64]| u.eval(y).norm();
    let count = 3 * POINTS_PER_DECADE + 1;
    let mg = directional_maximal(&grad_mod, x, sigma, 10.0 * h, count);
    let mu = directional_maximal(&modulus, x, sigma, 10.0 * h, count);
    Ok(lhs - (h * mg + h * h * a.lipschitz_bound() * mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::catalog;
    use crate::quadrature::{BoxRule, McSampler};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn field(name: &str, dim: usize, params: &[f64]) -> ScalarField {
        catalog(name, dim, params).unwrap().into_field().unwrap()
    }

    fn potential(name: &str, dim: usize, params: &[f64]) -> VectorPotential {
        catalog(name, dim, params)
            .unwrap()
            .into_potential()
            .unwrap()
    }

    fn cfg1() -> QuadConfig {
        QuadConfig::new(
            BoxGrid::new(1, 8.0, 256, BoxRule::GaussLegendre).unwrap(),
            RadialGrid::new(1e-6, 32.0, 160).unwrap(),
            SphereRule::build(1, 1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn local_energy_examples() {
        let g = BoxGrid::new(1, 8.0, 256, BoxRule::GaussLegendre).unwrap();
        let e = local_energy(
            &field("gaussian", 1, &[]),
            &VectorPotential::zero(1).unwrap(),
            2.0,
            &g,
        )
        .unwrap();
        assert_abs_diff_eq!(e.value, PI.sqrt() / 2.0, epsilon = 1e-8);
        let g2 = BoxGrid::new(2, 8.0, 96, BoxRule::GaussLegendre).unwrap();
        let e2 = local_energy(
            &field("gaussian", 2, &[]),
            &potential("rotational_potential", 2, &[2.0]),
            2.0,
            &g2,
        )
        .unwrap();
        assert_abs_diff_eq!(e2.value, 2.0 * PI, epsilon = 1e-6);
        let z = local_energy(
            &ScalarField::zero(2).unwrap(),
            &VectorPotential::zero(2).unwrap(),
            2.0,
            &g2,
        )
        .unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn gauge_transform_leaves_local_energy_invariant() {
        // e^{iφ}u with A = ∇φ has the same energy as u with A = 0
        let g = BoxGrid::new(2, 8.0, 64, BoxRule::GaussLegendre).unwrap();
        let u = field("gaussian", 2, &[]);
        let b = 0.7;
        let twisted = ScalarField::new(2, "twisted", {
            let u = u.clone();
            move |x| Complex64::from_polar(1.0, 0.5 * b * (x[0] * x[0] + x[1] * x[1])) * u.eval(x)
        })
        .unwrap();
        let e0 = local_energy(&u, &VectorPotential::zero(2).unwrap(), 2.0, &g)
            .unwrap()
            .value;
        let e1 = local_energy(&twisted, &potential("gradient_potential", 2, &[b]), 2.0, &g)
            .unwrap()
            .value;
        assert!((e0 - e1).abs() < 1e-7 * e0, "{e0} {e1}");
    }

    #[test]
    fn bbm_zero_field() {
        let rho = Mollifier::truncated_fractional(0.9, 16.0, 1).unwrap();
        let e = bbm_energy(
            &ScalarField::zero(1).unwrap(),
            &VectorPotential::zero(1).unwrap(),
            &rho,
            2.0,
            &cfg1(),
        )
        .unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.estimated_error, 0.0);
    }

    #[test]
    fn bbm_gaussian_near_limit() {
        let rho = Mollifier::truncated_fractional(0.999, 16.0, 1).unwrap();
        let e = bbm_energy(
            &field("gaussian", 1, &[]),
            &VectorPotential::zero(1).unwrap(),
            &rho,
            2.0,
            &cfg1(),
        )
        .unwrap();
        assert!((e.value / PI.sqrt() - 1.0).abs() < 0.02, "{}", e.value);
    }

    #[test]
    fn bbm_rejects_bad_inputs() {
        let rho = Mollifier::truncated_fractional(0.9, 16.0, 2).unwrap();
        let u = field("gaussian", 1, &[]);
        let a = VectorPotential::zero(1).unwrap();
        assert!(matches!(
            bbm_energy(&u, &a, &rho, 2.0, &cfg1()),
            Err(Error::Usage(_))
        ));
        let rho1 = Mollifier::truncated_fractional(0.9, 16.0, 1).unwrap();
        assert!(matches!(
            bbm_energy(&u, &a, &rho1, 1.0, &cfg1()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn fractional_kernel_tail_is_finite_for_p2() {
        let rho = Mollifier::fractional(0.99, 1).unwrap();
        let u = field("gaussian", 1, &[]);
        let a = VectorPotential::zero(1).unwrap();
        let e = bbm_energy(&u, &a, &rho, 2.0, &cfg1()).unwrap();
        assert!((e.value / PI.sqrt() - 1.0).abs() < 0.05, "{}", e.value);
    }

    #[test]
    fn jdelta_examples() {
        let u = field("gaussian", 1, &[]);
        let a = VectorPotential::zero(1).unwrap();
        let mut cfg = cfg1();
        cfg.radial = RadialGrid::new(1e-6, 32.0, 400).unwrap();
        assert_eq!(jdelta_energy(&u, &a, 2.5, 2.0, &cfg).unwrap().value, 0.0);
        let j = jdelta_energy(&u, &a, 1e-3, 2.0, &cfg).unwrap().value;
        assert!((j / (PI.sqrt() / 2.0) - 1.0).abs() < 0.05, "{j}");
        assert!(jdelta_energy(&u, &a, 0.0, 2.0, &cfg).is_err());
    }

    #[test]
    fn ray_oracle_examples() {
        let u = field("gaussian", 1, &[]);
        let a = VectorPotential::zero(1).unwrap();
        assert_abs_diff_eq!(
            jdelta_ray_oracle(&u, &a, &[1.0], &[1.0], 2.0).unwrap(),
            (-1f64).exp() / 2.0,
            epsilon = 1e-15
        );
        assert_eq!(jdelta_ray_oracle(&u, &a, &[0.0], &[1.0], 2.0).unwrap(), 0.0);
        let u2 = field("gaussian", 2, &[]);
        let a2 = VectorPotential::zero(2).unwrap();
        // ∇u ∥ x, σ ⟂ x
        assert_abs_diff_eq!(
            jdelta_ray_oracle(&u2, &a2, &[0.5, 0.0], &[0.0, 1.0], 2.0).unwrap(),
            0.0,
            epsilon = 1e-30
        );
        let radial = RadialGrid::new(1e-6, 32.0, 400).unwrap();
        let r = jdelta_ray(&u, &a, &[1.0], &[1.0], 1e-4, 2.0, &radial).unwrap();
        assert!((r / ((-1f64).exp() / 2.0) - 1.0).abs() < 0.01, "{r}");
    }

    #[test]
    fn pointwise_examples() {
        let u = field("gaussian", 1, &[]);
        let a = VectorPotential::zero(1).unwrap();
        let radial = RadialGrid::new(1e-6, 32.0, 160).unwrap();
        let sphere = SphereRule::build(1, 1).unwrap();
        let rho = Mollifier::truncated_fractional(0.999, 16.0, 1).unwrap();
        let d1 = pointwise_bbm_density(&u, &a, &rho, &[1.0], &radial, &sphere).unwrap();
        assert!((d1 / (2.0 * (-1f64).exp()) - 1.0).abs() < 0.03, "{d1}");
        let d0 = pointwise_bbm_density(&u, &a, &rho, &[0.0], &radial, &sphere).unwrap();
        assert!(d0.abs() < 0.05 * 2.0 * (-1f64).exp(), "{d0}");
        let z = pointwise_bbm_density(
            &ScalarField::zero(1).unwrap(),
            &a,
            &rho,
            &[1.0],
            &radial,
            &sphere,
        )
        .unwrap();
        assert_eq!(z, 0.0);

        let dense = RadialGrid::new(1e-6, 32.0, 400).unwrap();
        let j = pointwise_jdelta(&u, &a, 1e-3, &[1.0], &dense, &sphere).unwrap();
        assert!((j / (-1f64).exp() - 1.0).abs() < 0.05, "{j}");
        assert_eq!(
            pointwise_jdelta(&u, &a, 2.5, &[1.0], &dense, &sphere).unwrap(),
            0.0
        );

        // far from a compact bump, rays that never reach the support see nothing
        let bump = field("bump", 1, &[1.0]);
        let short = RadialGrid::new(1e-6, 2.0, 200).unwrap();
        assert_eq!(
            pointwise_jdelta(&bump, &a, 1e-3, &[5.0], &short, &sphere).unwrap(),
            0.0
        );
    }

    #[test]
    fn pointwise_rejects_growing_kernel() {
        let rho =
            Mollifier::custom(1, "r^3", crate::Regime::Full, 0.0, None, |r| r * r * r).unwrap();
        let u = field("gaussian", 1, &[]);
        let a = VectorPotential::zero(1).unwrap();
        let radial = RadialGrid::new(1e-6, 32.0, 160).unwrap();
        let sphere = SphereRule::build(1, 1).unwrap();
        assert!(matches!(
            pointwise_bbm_density(&u, &a, &rho, &[1.0], &radial, &sphere),
            Err(Error::NumericDomain(_))
        ));
    }

    #[test]
    fn directional_maximal_examples() {
        let c = |_: &[f64]| 2.5;
        assert_abs_diff_eq!(
            directional_maximal(&c, &[0.3], &[1.0], 4.0, 100),
            2.5,
            epsilon = 1e-14
        );
        let abs = |x: &[f64]| x[0].abs();
        assert_abs_diff_eq!(
            directional_maximal(&abs, &[0.0], &[1.0], 3.0, 100),
            1.5,
            epsilon = 1e-14
        );
        let bump = |x: &[f64]| {
            if x[0] > 1.0 && x[0] < 2.0 {
                (x[0] - 1.0) * (2.0 - x[0])
            } else {
                0.0
            }
        };
        assert_eq!(directional_maximal(&bump, &[0.0], &[-1.0], 5.0, 200), 0.0);
    }

    #[test]
    fn hl_maximal_examples() {
        let c = |_: &[f64]| 3.0;
        assert_abs_diff_eq!(
            hl_maximal(&c, &[0.0, 1.0], &[0.5, 2.0], 16).unwrap(),
            3.0,
            epsilon = 1e-12
        );
        let z = |_: &[f64]| 0.0;
        assert_eq!(hl_maximal(&z, &[0.0], &[1.0], 8).unwrap(), 0.0);
        let bump = |x: &[f64]| (-(x[0] * x[0] + x[1] * x[1]) * 4.0).exp();
        let radii = [0.1, 0.3, 0.9, 2.7];
        let avgs: Vec<f64> = radii
            .iter()
            .map(|r| hl_maximal(&bump, &[0.0, 0.0], &[*r], 24).unwrap())
            .collect();
        assert!(avgs.windows(2).all(|w| w[0] > w[1]), "{avgs:?}");
        assert_eq!(hl_maximal(&bump, &[0.0, 0.0], &radii, 24).unwrap(), avgs[0]);
        assert!(hl_maximal(&bump, &[0.0, 0.0], &[], 24).is_err());
    }

    #[test]
    fn truncation_examples() {
        let u = field("modulated_gaussian", 1, &[1.0]);
        let same = truncate_field(&u, 1.0).unwrap();
        for x in [-2.0, -0.1, 0.0, 0.7, 3.0] {
            assert_eq!(same.eval(&[x]), u.eval(&[x]));
        }
        let two = ScalarField::new(1, "two", |x| Complex64::from_polar(2.0, x[0])).unwrap();
        let t = truncate_field(&two, 1.0).unwrap();
        let v = t.eval(&[0.4]);
        assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.arg(), 0.4, epsilon = 1e-15);
        assert!(!t.has_grad());
        assert!(truncate_field(&u, 0.0).is_err());
    }

    #[test]
    fn segment_bound_examples() {
        let a = VectorPotential::zero(1).unwrap();
        assert_eq!(
            segment_bound_residual(&ScalarField::zero(1).unwrap(), &a, &[0.0], 0.5, &[1.0])
                .unwrap(),
            0.0
        );
        let r =
            segment_bound_residual(&field("gaussian", 1, &[]), &a, &[0.0], 0.5, &[1.0]).unwrap();
        assert!(r <= 1e-3, "{r}");
        let c = ScalarField::new(1, "c", |_| Complex64::new(0.3, -0.2)).unwrap();
        assert!(segment_bound_residual(&c, &a, &[0.2], 0.5, &[-1.0]).unwrap() <= 0.0);
        assert!(segment_bound_residual(&c, &a, &[0.2], 1.5, &[-1.0]).is_err());
    }

    #[test]
    fn mc_path_is_deterministic() {
        let u = field("gaussian", 3, &[]);
        let a = potential("rotational_potential", 3, &[1.0]);
        let cfg = QuadConfig::new(
            BoxGrid::new(3, 5.0, 8, BoxRule::GaussLegendre).unwrap(),
            RadialGrid::new(1e-6, 16.0, 64).unwrap(),
            SphereRule::build(3, 4).unwrap(),
        )
        .unwrap()
        .with_mc(McSampler::new(42, 20_000, 0).unwrap());
        let rho = Mollifier::truncated_fractional(0.99, 8.0, 3).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| bbm_energy(&u, &a, &rho, 2.0, &cfg).unwrap())
        };
        let e1 = run(1);
        let e4 = run(4);
        assert_eq!(e1, e4);
        // 2 Q_3 ∫ |∇u − iAu|² = (4π/3) (3/2 + 1/4·... ) checked loosely
        assert!(e1.estimated_error > 0.0);
    }
}

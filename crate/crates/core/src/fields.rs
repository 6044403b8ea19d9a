//! Complex scalar fields, magnetic potentials and the phase-twisted comparison.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{usage, Result};

/// Largest spatial dimension supported by the quadrature layer.
pub const MAX_DIM: usize = 3;

pub type EvalFn = dyn Fn(&[f64]) -> Complex64 + Send + Sync;
pub type GradFn = dyn Fn(&[f64], &mut [Complex64]) + Send + Sync;
pub type PotentialFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return usage(format!("dimension must be in 1..={MAX_DIM}, got {dim}"));
    }
    Ok(())
}

/// A complex-valued function on `R^N`, optionally with an analytic gradient.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    label: String,
    support_radius: Option<f64>,
    eval: Arc<EvalFn>,
    grad: Option<Arc<GradFn>>,
    zero: bool,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("support_radius", &self.support_radius)
            .field("analytic_grad", &self.grad.is_some())
            .finish()
    }
}

impl ScalarField {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        eval: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            label: label.into(),
            support_radius: None,
            eval: Arc::new(eval),
            grad: None,
            zero: false,
        })
    }

    /// The field `u ≡ 0`. Functionals short-circuit on it and return exact zeros.
    pub fn zero(dim: usize) -> Result<Self> {
        let mut u = Self::new(dim, "zero", |_| Complex64::new(0.0, 0.0))?;
        u.grad = Some(Arc::new(|_, out: &mut [Complex64]| {
            out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0))
        }));
        u.zero = true;
        Ok(u)
    }

    pub fn with_grad(
        mut self,
        grad: impl Fn(&[f64], &mut [Complex64]) + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn with_support_radius(mut self, radius: f64) -> Self {
        self.support_radius = Some(radius);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support_radius(&self) -> Option<f64> {
        self.support_radius
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        (self.eval)(x)
    }

    /// Writes the analytic gradient into `out`; returns `false` when there is none.
    #[inline]
    pub fn grad_into(&self, x: &[f64], out: &mut [Complex64]) -> bool {
        match &self.grad {
            Some(g) => {
                g(x, out);
                true
            }
            None => false,
        }
    }

    /// Multiplies the field by a constant phase `e^{iθ}`.
    pub fn rotate_phase(&self, theta: f64) -> Self {
        let phase = Complex64::from_polar(1.0, theta);
        let inner = self.eval.clone();
        let mut out = Self {
            dim: self.dim,
            label: format!("{}*e^(i{theta})", self.label),
            support_radius: self.support_radius,
            eval: Arc::new(move |x| phase * inner(x)),
            grad: None,
            zero: self.zero,
        };
        if let Some(g) = self.grad.clone() {
            out.grad = Some(Arc::new(move |x, o: &mut [Complex64]| {
                g(x, o);
                o.iter_mut().for_each(|z| *z *= phase);
            }));
        }
        out
    }
}

/// A Lipschitz vector potential `A : R^N → R^N`.
///
/// `lipschitz_bound` is the operator norm of the Jacobian, used wherever
/// `‖∇A‖_∞` enters a bound.
#[derive(Clone)]
pub struct VectorPotential {
    dim: usize,
    label: String,
    lipschitz_bound: f64,
    eval: Arc<PotentialFn>,
    zero: bool,
}

impl fmt::Debug for VectorPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorPotential")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .finish()
    }
}

impl VectorPotential {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        lipschitz_bound: f64,
        eval: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        check_dim(dim)?;
        if !(lipschitz_bound >= 0.0 && lipschitz_bound.is_finite()) {
            return usage(format!(
                "lipschitz bound must be finite and >= 0, got {lipschitz_bound}"
            ));
        }
        Ok(Self {
            dim,
            label: label.into(),
            lipschitz_bound,
            eval: Arc::new(eval),
            zero: false,
        })
    }

    pub fn zero(dim: usize) -> Result<Self> {
        let mut a = Self::new(dim, "zero_potential", 0.0, |_, out: &mut [f64]| {
            out.fill(0.0)
        })?;
        a.zero = true;
        Ok(a)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }
}

/// A vector in `C^N`, `N ≤ MAX_DIM`, stored inline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexVector {
    entries: [Complex64; MAX_DIM],
    dim: usize,
}

impl ComplexVector {
    pub fn zeros(dim: usize) -> Self {
        debug_assert!(dim <= MAX_DIM);
        Self {
            entries: [Complex64::new(0.0, 0.0); MAX_DIM],
            dim,
        }
    }

    pub fn from_slice(z: &[Complex64]) -> Self {
        let mut v = Self::zeros(z.len());
        v.entries[..z.len()].copy_from_slice(z);
        v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.entries[..self.dim]
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.entries[..self.dim]
    }

    /// `z·σ` for a real direction `σ`.
    #[inline]
    pub fn dot_real(&self, sigma: &[f64]) -> Complex64 {
        self.as_slice()
            .iter()
            .zip(sigma)
            .fold(Complex64::new(0.0, 0.0), |acc, (z, s)| acc + z * s)
    }

    /// Euclidean norm in `C^N`.
    pub fn norm(&self) -> f64 {
        self.as_slice()
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// `Ψ_u(x, y) = e^{i(x−y)·A((x+y)/2)} u(y)` without dimension checks.
#[inline]
pub(crate) fn psi_raw(u: &ScalarField, a: &VectorPotential, x: &[f64], y: &[f64]) -> Complex64 {
    let uy = u.eval(y);
    if a.zero {
        return uy;
    }
    let n = x.len();
    let mut mid = [0.0; MAX_DIM];
    for k in 0..n {
        mid[k] = 0.5 * (x[k] + y[k]);
    }
    let mut av = [0.0; MAX_DIM];
    a.eval_into(&mid[..n], &mut av[..n]);
    let mut phase = 0.0;
    for k in 0..n {
        phase += (x[k] - y[k]) * av[k];
    }
    if phase == 0.0 {
        return uy;
    }
    Complex64::from_polar(1.0, phase) * uy
}

/// The phase-corrected comparison value `Ψ_u(x, y)`.
pub fn psi(u: &ScalarField, a: &VectorPotential, x: &[f64], y: &[f64]) -> Result<Complex64> {
    let n = u.dim;
    if a.dim != n || x.len() != n || y.len() != n {
        return usage(format!(
            "dimension mismatch: field {n}, potential {}, x {}, y {}",
            a.dim,
            x.len(),
            y.len()
        ));
    }
    Ok(psi_raw(u, a, x, y))
}

/// Default central-difference step, `1e−5·(1+|x|)`.
pub fn default_fd_step(x: &[f64]) -> f64 {
    1e-5 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt())
}

pub(crate) fn magnetic_gradient_raw(
    u: &ScalarField,
    a: &VectorPotential,
    x: &[f64],
    fd_step: Option<f64>,
) -> ComplexVector {
    let n = x.len();
    let mut g = ComplexVector::zeros(n);
    if !u.grad_into(x, g.as_mut_slice()) {
        let h = fd_step.unwrap_or_else(|| default_fd_step(x));
        let mut xp = [0.0; MAX_DIM];
        xp[..n].copy_from_slice(x);
        for k in 0..n {
            xp[k] = x[k] + h;
            let up = u.eval(&xp[..n]);
            xp[k] = x[k] - h;
            let um = u.eval(&xp[..n]);
            xp[k] = x[k];
            g.entries[k] = (up - um) / (2.0 * h);
        }
    }
    if !a.zero {
        let ux = u.eval(x);
        let mut av = [0.0; MAX_DIM];
        a.eval_into(x, &mut av[..n]);
        for k in 0..n {
            g.entries[k] -= Complex64::new(0.0, av[k]) * ux;
        }
    }
    g
}

/// `∇u(x) − iA(x)u(x)`, using the analytic gradient when the field has one and
/// central differences with step `fd_step` (default [`default_fd_step`]) otherwise.
pub fn magnetic_gradient(
    u: &ScalarField,
    a: &VectorPotential,
    x: &[f64],
    fd_step: Option<f64>,
) -> Result<ComplexVector> {
    if a.dim != u.dim || x.len() != u.dim {
        return usage("dimension mismatch in magnetic_gradient");
    }
    if let Some(h) = fd_step {
        if !(h > 0.0) {
            return usage(format!("fd_step must be positive, got {h}"));
        }
    }
    Ok(magnetic_gradient_raw(u, a, x, fd_step))
}

/// `|z|_p^p = |Re z|^p + |Im z|^p`, with `Re z`, `Im z` the Euclidean norms
/// of the componentwise real and imaginary parts.
#[inline]
pub fn lp_modulus_pow(z: &[Complex64], p: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for c in z {
        re += c.re * c.re;
        im += c.im * c.im;
    }
    if p == 2.0 {
        re + im
    } else {
        re.powf(0.5 * p) + im.powf(0.5 * p)
    }
}

/// The mixed modulus `|z|_p = (|Re z|^p + |Im z|^p)^{1/p}`.
pub fn lp_modulus(z: &[Complex64], p: f64) -> f64 {
    debug_assert!(p > 1.0 && p.is_finite());
    if p == 2.0 {
        return lp_modulus_pow(z, 2.0).sqrt();
    }
    lp_modulus_pow(z, p).powf(1.0 / p)
}

/// `|c|_p^p` for a single complex number.
#[inline]
pub(crate) fn scalar_lp_pow(c: Complex64, p: f64) -> f64 {
    if p == 2.0 {
        c.norm_sqr()
    } else {
        c.re.abs().powf(p) + c.im.abs().powf(p)
    }
}

/// Anything the catalog can build.
#[derive(Debug, Clone)]
pub enum CatalogObject {
    Field(ScalarField),
    Potential(VectorPotential),
}

impl CatalogObject {
    pub fn into_field(self) -> Result<ScalarField> {
        match self {
            CatalogObject::Field(u) => Ok(u),
            CatalogObject::Potential(a) => {
                usage(format!("`{}` is a potential, not a field", a.label))
            }
        }
    }

    pub fn into_potential(self) -> Result<VectorPotential> {
        match self {
            CatalogObject::Potential(a) => Ok(a),
            CatalogObject::Field(u) => usage(format!("`{}` is a field, not a potential", u.label)),
        }
    }
}

pub const FIELD_NAMES: &[&str] = &["gaussian", "modulated_gaussian", "bump", "zero"];
pub const POTENTIAL_NAMES: &[&str] = &[
    "zero_potential",
    "constant_potential",
    "rotational_potential",
    "gradient_potential",
];

fn param(params: &[f64], idx: usize, default: f64) -> f64 {
    params.get(idx).copied().unwrap_or(default)
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Builds a named analytic field or potential in dimension `dim`.
///
/// | name | params | object |
/// |---|---|---|
/// | `gaussian` | `[width=1]` | `e^{−|x|²/(2w²)}` |
/// | `modulated_gaussian` | `[k=1, width=1]` | `e^{ikx₁} e^{−|x|²/(2w²)}` |
/// | `bump` | `[radius=1]` | `e^{1−1/(1−|x|²/r²)}` inside the ball, 0 outside |
/// | `zero` | | `u ≡ 0` |
/// | `zero_potential` | | `A ≡ 0` |
/// | `constant_potential` | `[c₁, …]` (one value is broadcast) | `A ≡ c` |
/// | `rotational_potential` | `[b=1]` | `(b/2)(−x₂, x₁[, 0])`, `N ∈ {2,3}` |
/// | `gradient_potential` | `[b=1]` | `A = b x = ∇(b|x|²/2)` |
pub fn catalog(name: &str, dim: usize, params: &[f64]) -> Result<CatalogObject> {
    check_dim(dim)?;
    if params.iter().any(|v| !v.is_finite()) {
        return usage(format!("non-finite parameter for `{name}`"));
    }
    let obj = match name {
        "gaussian" => {
            let w = param(params, 0, 1.0);
            if !(w > 0.0) {
                return usage("gaussian width must be positive");
            }
            let c = 0.5 / (w * w);
            let u = ScalarField::new(dim, format!("gaussian(w={w})"), move |x| {
                Complex64::new((-c * norm_sq(x)).exp(), 0.0)
            })?
            .with_grad(move |x, out| {
                let v = (-c * norm_sq(x)).exp();
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = Complex64::new(-2.0 * c * xi * v, 0.0);
                }
            });
            CatalogObject::Field(u)
        }
        "modulated_gaussian" => {
            let k = param(params, 0, 1.0);
            let w = param(params, 1, 1.0);
            if !(w > 0.0) {
                return usage("modulated_gaussian width must be positive");
            }
            let c = 0.5 / (w * w);
            let u = ScalarField::new(dim, format!("modulated_gaussian(k={k},w={w})"), move |x| {
                Complex64::from_polar((-c * norm_sq(x)).exp(), k * x[0])
            })?
            .with_grad(move |x, out| {
                let v = Complex64::from_polar((-c * norm_sq(x)).exp(), k * x[0]);
                for (i, (o, xi)) in out.iter_mut().zip(x).enumerate() {
                    let mut d = Complex64::new(-2.0 * c * xi, 0.0);
                    if i == 0 {
                        d.im += k;
                    }
                    *o = d * v;
                }
            });
            CatalogObject::Field(u)
        }
        "bump" => {
            let r = param(params, 0, 1.0);
            if !(r > 0.0) {
                return usage("bump radius must be positive");
            }
            let r2 = r * r;
            let u = ScalarField::new(dim, format!("bump(r={r})"), move |x| {
                let q = norm_sq(x) / r2;
                if q >= 1.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new((1.0 - 1.0 / (1.0 - q)).exp(), 0.0)
                }
            })?
            .with_grad(move |x, out| {
                let q = norm_sq(x) / r2;
                if q >= 1.0 {
                    out.fill(Complex64::new(0.0, 0.0));
                    return;
                }
                let s = 1.0 - q;
                let v = (1.0 - 1.0 / s).exp();
                // d/dx_i e^{1-1/(1-q)} = -e^{..} / (1-q)^2 * 2 x_i / r^2
                let f = -v / (s * s) * 2.0 / r2;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = Complex64::new(f * xi, 0.0);
                }
            })
            .with_support_radius(r);
            CatalogObject::Field(u)
        }
        "zero" => CatalogObject::Field(ScalarField::zero(dim)?),
        "zero_potential" => CatalogObject::Potential(VectorPotential::zero(dim)?),
        "constant_potential" => {
            let c: Vec<f64> = match params.len() {
                0 => vec![1.0; dim],
                1 => vec![params[0]; dim],
                n if n == dim => params.to_vec(),
                n => return usage(format!("constant_potential takes 1 or {dim} params, got {n}")),
            };
            let label = format!("constant_potential({c:?})");
            CatalogObject::Potential(VectorPotential::new(dim, label, 0.0, move |_, out| {
                out.copy_from_slice(&c)
            })?)
        }
        "rotational_potential" => {
            let b = param(params, 0, 1.0);
            if dim < 2 {
                return usage("rotational_potential needs dim 2 or 3");
            }
            let h = 0.5 * b;
            // Jacobian is (b/2)·rotation on the first two axes.
            let a = VectorPotential::new(dim, format!("rotational_potential(b={b})"), h.abs(), move |x, out| {
                out[0] = -h * x[1];
                out[1] = h * x[0];
                if out.len() > 2 {
                    out[2] = 0.0;
                }
            })?;
            CatalogObject::Potential(a)
        }
        "gradient_potential" => {
            let b = param(params, 0, 1.0);
            let a = VectorPotential::new(dim, format!("gradient_potential(b={b})"), b.abs(), move |x, out| {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = b * xi;
                }
            })?;
            CatalogObject::Potential(a)
        }
        other => {
            return usage(format!(
                "unknown catalog name `{other}`; fields: {FIELD_NAMES:?}, potentials: {POTENTIAL_NAMES:?}"
            ))
        }
    };
    Ok(obj)
}

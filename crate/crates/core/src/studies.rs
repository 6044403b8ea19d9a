//! Parameter sweeps, limit extrapolation and inequality audits.
//!
//! Every study returns a [`StudyReport`] whose serialized forms are stable:
//! the same inputs give byte-identical JSON and CSV regardless of the size of
//! the thread pool.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{usage, Result};
use crate::fields::{magnetic_gradient_raw, ScalarField, VectorPotential};
use crate::functionals::{
    bbm_energy, jdelta_energy, local_energy, lp_norm_pow, pointwise_bbm_density, pointwise_jdelta,
    segment_bound_residual, sup_modulus, truncate_field, EnergyValue,
};
use crate::kernels::{q_constant, KernelSpec, Mollifier, Regime};
use crate::quadrature::{pairwise_sum, BoxGrid, QuadConfig, RadialGrid, SphereRule};
use crate::sphere_area;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    BbmSweep,
    JdeltaSweep,
    PointwiseSweep,
    BoundAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub margin: f64,
}

impl Verdict {
    fn new(check: impl Into<String>, margin: f64) -> Self {
        Self {
            check: check.into(),
            pass: margin >= 0.0,
            margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub study_kind: StudyKind,
    pub params: Vec<f64>,
    pub values: Vec<EnergyValue>,
    pub reference: f64,
    pub extrapolated: f64,
    pub residual: f64,
    pub verdicts: Vec<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_pointwise_residual: Option<f64>,
    /// Audit only: `max_δ J_δ / (E + (‖∇A‖² + 1)‖u‖_p^p)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jdelta_bound_ratio: Option<f64>,
}

fn relative(a: f64, reference: f64) -> f64 {
    (a - reference).abs() / reference.max(1e-300)
}

impl StudyReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per parameter point, 17 significant digits, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,value,est_error,reference,residual\n");
        for (p, v) in self.params.iter().zip(&self.values) {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                p,
                v.value,
                v.estimated_error,
                self.reference,
                relative(v.value, self.reference)
            )
            .unwrap();
        }
        out
    }
}

/// `Q_{N,p}` on the configured sphere rule.
fn q_value(dim: usize, p: f64, sphere: &SphereRule) -> Result<f64> {
    Ok(q_constant(dim, p, sphere)?.value)
}

fn check_increasing(name: &str, v: &[f64], min_len: usize, lo: f64, hi: f64) -> Result<()> {
    if v.len() < min_len {
        return usage(format!("{name} needs at least {min_len} values"));
    }
    if v.iter().any(|x| !(*x > lo && *x < hi)) {
        return usage(format!("{name} values must lie in ({lo}, {hi})"));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return usage(format!("{name} must be strictly increasing"));
    }
    Ok(())
}

fn check_decreasing_positive(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return usage(format!("{name} must be nonempty"));
    }
    if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return usage(format!("{name} values must be positive"));
    }
    if v.windows(2).any(|w| w[1] >= w[0]) {
        return usage(format!("{name} must be strictly decreasing"));
    }
    Ok(())
}

/// Sweeps `s` for a kernel family and extrapolates `F(s) ≈ F_lim + c(1−s)`
/// through the last two points. The reference is `p Q_{N,p} E`.
///
/// Verdicts: the extrapolated residual against `tol`, monotone improvement
/// along the sweep (1% jitter allowed) and the lower bound
/// `F(s_last) ≥ 0.95 p Q_{N,p} E`.
pub fn bbm_convergence_study(
    u: &ScalarField,
    a: &VectorPotential,
    p: f64,
    s_list: &[f64],
    family: &KernelSpec,
    cfg: &QuadConfig,
    tol: f64,
) -> Result<StudyReport> {
    check_increasing("s_list", s_list, 2, 0.0, 1.0)?;
    let dim = cfg.dim();
    let energy = local_energy(u, a, p, &cfg.grid)?;
    let reference = p * q_value(dim, p, &cfg.sphere)? * energy.value;
    let mut values = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let rho = family.with_s(s).build(dim)?;
        values.push(bbm_energy(u, a, &rho, p, cfg)?);
    }
    let k = values.len();
    let (s0, s1) = (s_list[k - 2], s_list[k - 1]);
    let (f0, f1) = (values[k - 2].value, values[k - 1].value);
    let (e0, e1) = (1.0 - s0, 1.0 - s1);
    let extrapolated = (e0 * f1 - e1 * f0) / (e0 - e1);
    let residual = relative(extrapolated, reference);

    let errs: Vec<f64> = values.iter().map(|v| (v.value - reference).abs()).collect();
    let jitter = 0.01 * reference;
    let monotone = errs
        .windows(2)
        .map(|w| w[0] + jitter - w[1])
        .fold(f64::INFINITY, f64::min);
    let verdicts = vec![
        Verdict::new("limit_residual", tol - residual),
        Verdict::new("monotone_improvement", monotone),
        Verdict::new("lower_bound", f1 - 0.95 * reference),
    ];
    Ok(StudyReport {
        study_kind: StudyKind::BbmSweep,
        params: s_list.to_vec(),
        values,
        reference,
        extrapolated,
        residual,
        verdicts,
        l1_error: None,
        max_pointwise_residual: None,
        jdelta_bound_ratio: None,
    })
}

/// Sweeps a decreasing `δ` list. With three or more points the last two are
/// extrapolated with `J_δ ≈ J_0 + aδ`; otherwise the smallest-δ value is
/// reported. The reference is `Q_{N,p} E`.
///
/// Verdicts: the residual against `tol`, and stabilization (the two smallest
/// δ differ by less than 10%).
pub fn jdelta_convergence_study(
    u: &ScalarField,
    a: &VectorPotential,
    p: f64,
    delta_list: &[f64],
    cfg: &QuadConfig,
    tol: f64,
) -> Result<StudyReport> {
    check_decreasing_positive("delta_list", delta_list)?;
    let dim = cfg.dim();
    let energy = local_energy(u, a, p, &cfg.grid)?;
    let reference = q_value(dim, p, &cfg.sphere)? * energy.value;
    let values = delta_list
        .iter()
        .map(|&d| jdelta_energy(u, a, d, p, cfg))
        .collect::<Result<Vec<_>>>()?;
    let k = values.len();
    let extrapolated = if k >= 3 {
        let (d0, d1) = (delta_list[k - 2], delta_list[k - 1]);
        let (j0, j1) = (values[k - 2].value, values[k - 1].value);
        (d0 * j1 - d1 * j0) / (d0 - d1)
    } else {
        values[k - 1].value
    };
    let residual = relative(extrapolated, reference);
    let mut verdicts = vec![Verdict::new("limit_residual", tol - residual)];
    verdicts.push(stabilization(&values));
    Ok(StudyReport {
        study_kind: StudyKind::JdeltaSweep,
        params: delta_list.to_vec(),
        values,
        reference,
        extrapolated,
        residual,
        verdicts,
        l1_error: None,
        max_pointwise_residual: None,
        jdelta_bound_ratio: None,
    })
}

fn stabilization(values: &[EnergyValue]) -> Verdict {
    let k = values.len();
    if k < 2 {
        let ok = values.iter().all(|v| v.value.is_finite());
        return Verdict::new("jdelta_stabilization", if ok { 0.0 } else { -1.0 });
    }
    let (a, b) = (values[k - 2].value, values[k - 1].value);
    let var = if a == 0.0 && b == 0.0 {
        0.0
    } else {
        (b - a).abs() / a.abs().max(b.abs())
    };
    Verdict::new("jdelta_stabilization", 0.1 - var)
}

/// Points with weights, used as the discrete measure for `L¹` errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return usage("point set needs matching nonempty points and weights");
        }
        if points.iter().any(|x| x.len() != dim) {
            return usage(format!("every point must have dimension {dim}"));
        }
        Ok(Self {
            dim,
            points,
            weights,
        })
    }

    /// Nodes and weights of a box grid.
    pub fn from_grid(grid: &BoxGrid) -> Self {
        let n = grid.dim();
        let (points, weights) = grid.iter().map(|(x, w)| (x[..n].to_vec(), w)).unzip();
        Self {
            dim: n,
            points,
            weights,
        }
    }

    pub fn single(x: &[f64]) -> Self {
        Self {
            dim: x.len(),
            points: vec![x.to_vec()],
            weights: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Which pointwise density a pointwise sweep evaluates.
#[derive(Debug, Clone, PartialEq)]
pub enum PointwiseMode {
    /// `D(u, x)` with the family evaluated at each `s`; limit `2 Q_N |∇u − iAu|²(x)`.
    Bbm(KernelSpec),
    /// `J_δ(u, x)`; limit `Q_N |∇u − iAu|²(x)`.
    Jdelta,
}

/// Evaluates the pointwise density over `points` for each parameter.
///
/// `values[k].value` is the discrete `L¹` mass `Σ w_x D_k(x)`; the reference
/// is the mass of the limit density. `l1_error` and `max_pointwise_residual`
/// refer to the last parameter. The verdict compares the `L¹` error with
/// `tol` times the reference mass.
#[allow(clippy::too_many_arguments)]
pub fn pointwise_convergence_study(
    u: &ScalarField,
    a: &VectorPotential,
    points: &PointSet,
    params: &[f64],
    mode: &PointwiseMode,
    radial: &RadialGrid,
    sphere: &SphereRule,
    tol: f64,
) -> Result<StudyReport> {
    let dim = sphere.dim();
    if points.dim() != dim {
        return usage("point set and sphere rule dimensions differ");
    }
    match mode {
        PointwiseMode::Bbm(_) => check_increasing("s_list", params, 1, 0.0, 1.0)?,
        PointwiseMode::Jdelta => check_decreasing_positive("delta_list", params)?,
    }
    let q = q_value(dim, 2.0, sphere)?;
    let factor = match mode {
        PointwiseMode::Bbm(_) => 2.0 * q,
        PointwiseMode::Jdelta => q,
    };
    let limits: Vec<f64> = points
        .points
        .iter()
        .map(|x| factor * magnetic_gradient_raw(u, a, x, None).norm().powi(2))
        .collect();
    let weighted = |f: &[f64]| -> f64 {
        let t: Vec<f64> = f
            .iter()
            .zip(&points.weights)
            .map(|(v, w)| w * v.abs())
            .collect();
        pairwise_sum(&t)
    };
    let reference = weighted(&limits);

    let mut values = Vec::with_capacity(params.len());
    let mut last = Vec::new();
    for &t in params {
        let rho = match mode {
            PointwiseMode::Bbm(fam) => Some(fam.with_s(t).build(dim)?),
            PointwiseMode::Jdelta => None,
        };
        let dens = points
            .points
            .iter()
            .map(|x| match &rho {
                Some(r) => pointwise_bbm_density(u, a, r, x, radial, sphere),
                None => pointwise_jdelta(u, a, t, x, radial, sphere),
            })
            .collect::<Result<Vec<f64>>>()?;
        values.push(EnergyValue {
            value: weighted(&dens),
            estimated_error: 0.0,
            config_digest: format!("pointwise:{}:{t:e}", points.len()),
        });
        last = dens;
    }
    let diffs: Vec<f64> = last.iter().zip(&limits).map(|(c, l)| c - l).collect();
    let l1 = weighted(&diffs);
    let max_res = diffs.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let extrapolated = values.last().expect("nonempty").value;
    let verdicts = vec![Verdict::new("l1_error", tol * reference - l1)];
    Ok(StudyReport {
        study_kind: StudyKind::PointwiseSweep,
        params: params.to_vec(),
        values,
        reference,
        extrapolated,
        residual: relative(extrapolated, reference),
        verdicts,
        l1_error: Some(l1),
        max_pointwise_residual: Some(max_res),
        jdelta_bound_ratio: None,
    })
}

/// Truncation levels of the audit, as fractions of `sup|u|`.
pub const TRUNCATION_FRACTIONS: [f64; 3] = [0.25, 0.5, 1.0];
/// Allowed residual of the discretized segment bound.
pub const SEGMENT_TOLERANCE: f64 = 1e-3;
/// Allowed excess of `J_δ(T_M u)` over `J_δ(u)`.
pub const TRUNCATION_TOLERANCE: f64 = 1e-12;

fn audit_directions(dim: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..3)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 3.0 + 0.3;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            let r3 = 3f64.sqrt();
            let r2 = 2f64.sqrt();
            vec![
                vec![1.0 / r3, 1.0 / r3, 1.0 / r3],
                vec![1.0 / r2, -1.0 / r2, 0.0],
                vec![0.0, 0.0, 1.0],
            ]
        }
    }
}

/// Runs the inequality checks on one `(u, A)`:
///
/// * `bbm_bound[...]`: for each full-regime kernel, the `p = 2` energy stays
///   below `2|S|E + 2|S|(2 + ‖∇A‖²)‖u‖²` up to the combined error estimates;
/// * `truncation[M=..,delta=..]`: `J_δ(T_M u) ≤ J_δ(u) + 1e−12` for
///   `M ∈ {¼, ½, 1}·sup|u|` on the same nodes;
/// * `segment_bound`: the largest segment residual over a 3×3×3 sample of
///   `(x, h, σ)` (3×3×2 in one dimension) is below `1e−3`;
/// * `jdelta_stabilization`: the two smallest δ agree within 10%.
///
/// `params`/`values` hold the `J_δ` sweep of `u`.
pub fn bound_audit(
    u: &ScalarField,
    a: &VectorPotential,
    p: f64,
    kernels: &[Mollifier],
    delta_list: &[f64],
    cfg: &QuadConfig,
) -> Result<StudyReport> {
    if kernels.is_empty() {
        return usage("bound audit needs at least one kernel");
    }
    check_decreasing_positive("delta_list", delta_list)?;
    let dim = cfg.dim();
    let area = sphere_area(dim);
    let lip = a.lipschitz_bound();
    let mut verdicts = Vec::new();

    let e2 = local_energy(u, a, 2.0, &cfg.grid)?;
    let mass = lp_norm_pow(u, 2.0, &cfg.grid)?;
    let rhs = 2.0 * area * e2.value + 2.0 * area * (2.0 + lip * lip) * mass;
    for rho in kernels.iter().filter(|r| r.regime() == Regime::Full) {
        let lhs = bbm_energy(u, a, rho, 2.0, cfg)?;
        let tol = lhs.estimated_error + 2.0 * area * e2.estimated_error;
        verdicts.push(Verdict::new(
            format!("bbm_bound[{}]", rho.label()),
            rhs - lhs.value + tol,
        ));
    }

    let values = delta_list
        .iter()
        .map(|&d| jdelta_energy(u, a, d, p, cfg))
        .collect::<Result<Vec<_>>>()?;
    let sup = sup_modulus(u, &cfg.grid);
    if sup > 0.0 {
        for frac in TRUNCATION_FRACTIONS {
            let m = frac * sup;
            let t = truncate_field(u, m)?;
            for (d, ju) in delta_list.iter().zip(&values) {
                let jt = jdelta_energy(&t, a, *d, p, cfg)?;
                verdicts.push(Verdict::new(
                    format!("truncation[M={m:e},delta={d:e}]"),
                    ju.value + TRUNCATION_TOLERANCE - jt.value,
                ));
            }
        }
    } else {
        verdicts.push(Verdict::new("truncation", 0.0));
    }

    let dirs = audit_directions(dim);
    let base = [1.0, 0.5, 0.25];
    let mut worst = f64::NEG_INFINITY;
    for t in [-0.8, 0.0, 0.6] {
        let x: Vec<f64> = base[..dim].iter().map(|b| t * b).collect();
        for h in [0.05, 0.2, 0.7] {
            for sigma in &dirs {
                worst = worst.max(segment_bound_residual(u, a, &x, h, sigma)?);
            }
        }
    }
    verdicts.push(Verdict::new("segment_bound", SEGMENT_TOLERANCE - worst));
    verdicts.push(stabilization(&values));

    let ep = local_energy(u, a, p, &cfg.grid)?.value;
    let scale = ep + (lip * lip + 1.0) * lp_norm_pow(u, p, &cfg.grid)?;
    let jmax = values.iter().map(|v| v.value).fold(0.0, f64::max);
    let ratio = if scale > 0.0 { jmax / scale } else { 0.0 };
    let reference = q_value(dim, p, &cfg.sphere)? * ep;
    let extrapolated = values.last().expect("nonempty").value;
    Ok(StudyReport {
        study_kind: StudyKind::BoundAudit,
        params: delta_list.to_vec(),
        values,
        reference,
        extrapolated,
        residual: relative(extrapolated, reference),
        verdicts,
        l1_error: None,
        max_pointwise_residual: None,
        jdelta_bound_ratio: Some(ratio),
    })
}

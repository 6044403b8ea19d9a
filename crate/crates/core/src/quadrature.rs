//! Integration rules over boxes, the radial half-line and unit spheres.
//!
//! Every reduction in this crate is a pairwise tree over node indices
//! ([`pairwise_sum`]). Node values may be produced concurrently, but they are
//! collected in index order before summation, so a sum is bit-identical for
//! any worker count.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{usage, Error, Result};
use crate::fields::MAX_DIM;

/// `(P_n(z), P_{n−1}(z))` by the three-term recurrence.
fn legendre_pair(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (pn, pn1) = legendre_pair(n, z);
            let dz = pn / (nf * (z * pn - pn1) / (z * z - 1.0));
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (pn, pn1) = legendre_pair(n, z);
        let dp = nf * (z * pn - pn1) / (z * z - 1.0);
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    (
        x.iter().map(|t| c + r * t).collect(),
        w.iter().map(|v| r * v).collect(),
    )
}

/// Pairwise (cascade) summation in slice order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if v.len() <= BLOCK {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Evaluates `f` at `0..n` (possibly in parallel) and sums the values pairwise
/// in index order. The first failing index wins.
pub fn reduce_indexed<F>(n: usize, min_len: usize, f: F) -> Result<f64>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    let vals: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .with_min_len(min_len.max(1))
        .map(&f)
        .collect();
    let mut out = Vec::with_capacity(n);
    for v in vals {
        out.push(v?);
    }
    Ok(pairwise_sum(&out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxRule {
    GaussLegendre,
    Trapezoid,
}

impl std::str::FromStr for BoxRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss_legendre" => Ok(BoxRule::GaussLegendre),
            "trapezoid" => Ok(BoxRule::Trapezoid),
            other => usage(format!("unknown box rule `{other}`")),
        }
    }
}

impl std::fmt::Display for BoxRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoxRule::GaussLegendre => "gauss_legendre",
            BoxRule::Trapezoid => "trapezoid",
        })
    }
}

/// Tensor rule on `[−R, R]^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrid {
    dim: usize,
    radius: f64,
    nodes_per_dim: usize,
    rule: BoxRule,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl BoxGrid {
    pub fn new(dim: usize, radius: f64, nodes_per_dim: usize, rule: BoxRule) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return usage(format!("box grid dimension must be in 1..={MAX_DIM}"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return usage(format!("radius must be positive, got {radius}"));
        }
        if nodes_per_dim == 0 || (rule == BoxRule::Trapezoid && nodes_per_dim < 2) {
            return usage(format!("nodes_per_dim too small: {nodes_per_dim}"));
        }
        let (nodes, weights) = match rule {
            BoxRule::GaussLegendre => gauss_legendre_on(nodes_per_dim, -radius, radius),
            BoxRule::Trapezoid => {
                let h = 2.0 * radius / (nodes_per_dim - 1) as f64;
                let nodes = (0..nodes_per_dim).map(|i| -radius + h * i as f64).collect();
                let mut weights = vec![h; nodes_per_dim];
                weights[0] *= 0.5;
                weights[nodes_per_dim - 1] *= 0.5;
                (nodes, weights)
            }
        };
        Ok(Self {
            dim,
            radius,
            nodes_per_dim,
            rule,
            nodes,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes_per_dim(&self) -> usize {
        self.nodes_per_dim
    }

    pub fn rule(&self) -> BoxRule {
        self.rule
    }

    pub fn len(&self) -> usize {
        self.nodes_per_dim.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node `index` in row-major order (last coordinate fastest) and its weight.
    #[inline]
    pub fn node(&self, index: usize) -> ([f64; MAX_DIM], f64) {
        let mut p = [0.0; MAX_DIM];
        let mut w = 1.0;
        let mut rest = index;
        for k in (0..self.dim).rev() {
            let i = rest % self.nodes_per_dim;
            rest /= self.nodes_per_dim;
            p[k] = self.nodes[i];
            w *= self.weights[i];
        }
        (p, w)
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; MAX_DIM], f64)> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }
}

/// Logarithmically spaced grid on `[h_min, h_max]`.
///
/// Serves two purposes: [`RadialGrid::rule`] is a composite Gauss–Legendre
/// rule in `t = ln h` (eight nodes per panel), and [`RadialGrid::samples`]
/// are geometric sample points used to resolve level sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub h_min: f64,
    pub h_max: f64,
    pub count: usize,
}

pub const RADIAL_PANEL_ORDER: usize = 8;

impl RadialGrid {
    pub fn new(h_min: f64, h_max: f64, count: usize) -> Result<Self> {
        if !(h_min > 0.0 && h_min.is_finite()) {
            return usage(format!("radial.h_min must be positive, got {h_min}"));
        }
        if !(h_max > h_min && h_max.is_finite()) {
            return usage(format!(
                "radial.h_max must exceed radial.h_min, got {h_max}"
            ));
        }
        if count < 2 {
            return usage(format!("radial.count must be at least 2, got {count}"));
        }
        Ok(Self {
            h_min,
            h_max,
            count,
        })
    }

    /// Composite Gauss–Legendre rule in `ln h` over `[lo, hi]`, returned as
    /// `(h, w)` with `w` already including `dh = h dt`. Panel density matches
    /// the full `[h_min, h_max]` grid.
    pub fn rule(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        if !(hi > lo) {
            return Vec::new();
        }
        let (tl, th) = (lo.ln(), hi.ln());
        let full = (self.h_max / self.h_min).ln();
        let per_unit = (self.count as f64 / RADIAL_PANEL_ORDER as f64) / full;
        let panels = ((th - tl) * per_unit).ceil().max(1.0) as usize;
        let (gx, gw) = gauss_legendre(RADIAL_PANEL_ORDER);
        let width = (th - tl) / panels as f64;
        let mut out = Vec::with_capacity(panels * RADIAL_PANEL_ORDER);
        for p in 0..panels {
            let a = tl + width * p as f64;
            let c = a + 0.5 * width;
            for (x, w) in gx.iter().zip(&gw) {
                let t = c + 0.5 * width * x;
                let h = t.exp();
                out.push((h, 0.5 * width * w * h));
            }
        }
        out
    }

    /// Geometric sample points from `h_min` to `h_max` inclusive.
    pub fn samples(&self) -> Vec<f64> {
        let ratio = (self.h_max / self.h_min).ln() / (self.count - 1) as f64;
        let mut v: Vec<f64> = (0..self.count)
            .map(|i| self.h_min * (ratio * i as f64).exp())
            .collect();
        v[self.count - 1] = self.h_max;
        v
    }
}

/// Quadrature rule on `S^{N−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereRule {
    dim: usize,
    order: usize,
    nodes: Vec<([f64; MAX_DIM], f64)>,
}

impl SphereRule {
    /// `N = 1`: the two points `±1`. `N = 2`: `order` equally spaced angles.
    /// `N = 3`: `order` Gauss–Legendre nodes in `cos θ` times `2·order`
    /// uniform azimuths.
    pub fn build(dim: usize, order: usize) -> Result<Self> {
        if order == 0 {
            return usage("sphere.order must be at least 1");
        }
        let mut nodes = Vec::new();
        match dim {
            1 => {
                nodes.push(([1.0, 0.0, 0.0], 1.0));
                nodes.push(([-1.0, 0.0, 0.0], 1.0));
            }
            2 => {
                let w = 2.0 * PI / order as f64;
                for k in 0..order {
                    let th = w * k as f64;
                    nodes.push(([th.cos(), th.sin(), 0.0], w));
                }
            }
            3 => {
                let (mu, wmu) = gauss_legendre(order);
                let naz = 2 * order;
                let waz = 2.0 * PI / naz as f64;
                for (m, wm) in mu.iter().zip(&wmu) {
                    let st = (1.0 - m * m).max(0.0).sqrt();
                    for k in 0..naz {
                        let ph = waz * k as f64;
                        nodes.push(([st * ph.cos(), st * ph.sin(), *m], wm * waz));
                    }
                }
            }
            n => return usage(format!("sphere rules exist for N in {{1,2,3}}, got {n}")),
        }
        Ok(Self { dim, order, nodes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[([f64; MAX_DIM], f64)] {
        &self.nodes
    }

    pub fn total_weight(&self) -> f64 {
        pairwise_sum(&self.nodes.iter().map(|n| n.1).collect::<Vec<_>>())
    }
}

/// Counter-based sampler: sample `i` of stream `stream_id` depends only on
/// `(seed, stream_id, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McSampler {
    pub seed: u64,
    pub count: usize,
    pub stream_id: u64,
}

impl McSampler {
    pub fn new(seed: u64, count: usize, stream_id: u64) -> Result<Self> {
        if count < 2 {
            return usage(format!("mc.count must be at least 2, got {count}"));
        }
        Ok(Self {
            seed,
            count,
            stream_id,
        })
    }

    fn rng_at(&self, index: usize, width: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        // one u64 = two 32-bit words
        rng.set_word_pos(index as u128 * width as u128 * 2);
        rng
    }

    /// Fills `out` with the `out.len()` uniforms in `[0, 1)` of sample `index`.
    pub fn uniforms(&self, index: usize, out: &mut [f64]) {
        let mut rng = self.rng_at(index, out.len());
        for o in out.iter_mut() {
            *o = unit_f64(rng.next_u64());
        }
    }

    /// Mean and standard error of `f` over the samples, each sample consuming
    /// `width` uniforms. Chunks seek independently, so the result does not
    /// depend on scheduling.
    pub fn mean<F>(&self, width: usize, f: F) -> Result<(f64, f64)>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync + Send,
    {
        const CHUNK: usize = 1024;
        assert!(width <= 16);
        let chunks = self.count.div_ceil(CHUNK);
        let parts: Vec<Result<Vec<f64>>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK;
                let end = (start + CHUNK).min(self.count);
                let mut rng = self.rng_at(start, width);
                let mut buf = [0.0; 16];
                let mut vals = Vec::with_capacity(end - start);
                for _ in start..end {
                    for b in buf[..width].iter_mut() {
                        *b = unit_f64(rng.next_u64());
                    }
                    vals.push(f(&buf[..width])?);
                }
                Ok(vals)
            })
            .collect();
        let mut vals = Vec::with_capacity(self.count);
        for p in parts {
            vals.extend(p?);
        }
        let n = vals.len() as f64;
        let mean = pairwise_sum(&vals) / n;
        let sq: Vec<f64> = vals.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = pairwise_sum(&sq) / (n - 1.0);
        Ok((mean, (var / n).sqrt()))
    }
}

#[inline]
fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform point on `S²` from two uniforms.
#[inline]
pub fn uniform_sphere3(u: f64, v: f64) -> [f64; 3] {
    let z = 2.0 * u - 1.0;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let ph = 2.0 * PI * v;
    [r * ph.cos(), r * ph.sin(), z]
}

/// Complete quadrature configuration for the double integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConfig {
    pub grid: BoxGrid,
    pub radial: RadialGrid,
    pub sphere: SphereRule,
    /// When set and `N = 3`, `(x, σ)` are sampled instead of tensorized.
    pub mc: Option<McSampler>,
}

pub const DEFAULT_RADIUS: f64 = 8.0;
pub const DEFAULT_H_MIN: f64 = 1e-6;
pub const DEFAULT_H_MAX: f64 = 32.0;
pub const DEFAULT_RADIAL_COUNT: usize = 160;
pub const DEFAULT_MC_SEED: u64 = 42;
pub const DEFAULT_MC_COUNT: usize = 2_000_000;

pub fn default_nodes_per_dim(dim: usize) -> usize {
    match dim {
        1 => 256,
        2 => 96,
        _ => 24,
    }
}

pub fn default_sphere_order(dim: usize) -> usize {
    match dim {
        1 => 2,
        2 => 32,
        _ => 8,
    }
}

impl QuadConfig {
    pub fn new(grid: BoxGrid, radial: RadialGrid, sphere: SphereRule) -> Result<Self> {
        if grid.dim() != sphere.dim() {
            return usage("box grid and sphere rule dimensions differ");
        }
        Ok(Self {
            grid,
            radial,
            sphere,
            mc: None,
        })
    }

    pub fn with_mc(mut self, mc: McSampler) -> Self {
        self.mc = Some(mc);
        self
    }

    /// Defaults: `R = 8`, Gauss–Legendre box with 256 / 96 nodes per
    /// dimension for `N = 1 / 2`, radial grid `[1e−6, 32]` with 160 nodes;
    /// `N = 3` samples `(x, σ)` with 2·10⁶ draws, seed 42.
    pub fn default_for_dim(dim: usize) -> Result<Self> {
        let grid = BoxGrid::new(
            dim,
            DEFAULT_RADIUS,
            default_nodes_per_dim(dim),
            BoxRule::GaussLegendre,
        )?;
        let radial = RadialGrid::new(DEFAULT_H_MIN, DEFAULT_H_MAX, DEFAULT_RADIAL_COUNT)?;
        let sphere = SphereRule::build(dim, default_sphere_order(dim))?;
        let mut cfg = Self::new(grid, radial, sphere)?;
        if dim == 3 {
            cfg.mc = Some(McSampler::new(DEFAULT_MC_SEED, DEFAULT_MC_COUNT, 0)?);
        }
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn uses_mc(&self) -> bool {
        self.dim() == 3 && self.mc.is_some()
    }

    /// Stable identifier of this configuration.
    pub fn digest(&self) -> String {
        let desc = format!(
            "dim={};radius={:e};nodes_per_dim={};rule={:?};h_min={:e};h_max={:e};count={};sphere.order={};mc={:?}",
            self.grid.dim(),
            self.grid.radius(),
            self.grid.nodes_per_dim(),
            self.grid.rule(),
            self.radial.h_min,
            self.radial.h_max,
            self.radial.count,
            self.sphere.order(),
            self.mc.map(|m| (m.seed, m.count, m.stream_id)),
        );
        let hash = Sha256::digest(desc.as_bytes());
        hex::encode(&hash[..8])
    }
}

fn check_finite(v: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NumericDomain(format!(
            "non-finite value {v} at {}",
            what()
        )))
    }
}

/// `Σ w_i f(x_i)` over the box grid.
pub fn integrate_box<F>(f: F, grid: &BoxGrid) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let n = grid.dim();
    reduce_indexed(grid.len(), 256, |i| {
        let (p, w) = grid.node(i);
        let v = check_finite(f(&p[..n]), || format!("box node {i} {:?}", &p[..n]))?;
        Ok(w * v)
    })
}

/// `Σ_x Σ_σ Σ_h w_x w_σ w_h h^{N−1} g(x, h, σ)` with `h` from the radial
/// rule over `[h_min, h_max]`.
pub fn integrate_polar<G>(
    g: G,
    grid: &BoxGrid,
    radial: &RadialGrid,
    sphere: &SphereRule,
) -> Result<f64>
where
    G: Fn(&[f64], f64, &[f64]) -> f64 + Sync + Send,
{
    let n = grid.dim();
    if sphere.dim() != n {
        return usage("sphere rule dimension differs from box grid");
    }
    let hs = radial.rule(radial.h_min, radial.h_max);
    reduce_indexed(grid.len(), 1, |i| {
        let (p, wx) = grid.node(i);
        let x = &p[..n];
        let mut acc = Vec::with_capacity(sphere.len());
        for (sig, ws) in sphere.nodes() {
            let mut inner = Vec::with_capacity(hs.len());
            for &(h, wh) in &hs {
                let v = g(x, h, &sig[..n]);
                let v = check_finite(v, || {
                    format!("polar node x={x:?} h={h:e} sigma={:?}", &sig[..n])
                })?;
                inner.push(wh * h.powi(n as i32 - 1) * v);
            }
            acc.push(ws * pairwise_sum(&inner));
        }
        Ok(wx * pairwise_sum(&acc))
    })
}

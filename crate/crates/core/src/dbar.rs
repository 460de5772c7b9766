//! D-bar reconstruction from difference ND matrices.
//!
//! The scattering transform is evaluated from the basis expansion of
//! `ζ e^{ikζ}`, truncated to `|k| < R` with an amplitude cap, and the
//! real-linear integral equation
//!
//! `μ(k) = 1 + (1/π) ∫ T_z(k') conj(μ(k')) / (k − k') dk'`,
//! `T_z(k) = t(k) e^{−2i Re(kz)} / (4π k̄)`,
//!
//! is solved on a uniform periodic k-grid by GMRES on the real and imaginary
//! parts. The conductivity is `σ(z) = (Re μ(z, 0))²`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::linalg::{gmres, IterStats};
use crate::ndmap::NdMatrix;
use crate::phantoms::Phantom;
use crate::{Error, Result};

pub type C64 = Complex64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbarConfig {
    /// Truncation radius `R`.
    pub radius: f64,
    /// Amplitude cap `C_t` on real and imaginary parts.
    pub cap: f64,
    /// The k-grid has `2^grid_exp` points per axis.
    pub grid_exp: u32,
    /// Half width of the k-grid square relative to `R`.
    pub extent: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DbarConfig {
    fn default() -> Self {
        Self {
            radius: 4.0,
            cap: 25.0,
            grid_exp: 7,
            extent: 2.1,
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

impl DbarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.cap > 0.0 && self.extent > 2.0) {
            return Err(Error::InvalidArgument(
                "D-bar needs R > 0, C_t > 0 and a k-grid extent above 2R".into(),
            ));
        }
        if !(2..=12).contains(&self.grid_exp) {
            return Err(Error::InvalidArgument(format!(
                "k-grid exponent {} out of range 2..=12",
                self.grid_exp
            )));
        }
        Ok(())
    }
}

/// `t(k) = |k|² aᵀ R b` with `a`, `b` the basis coefficients of
/// `ζ e^{ikζ}` and `ζ̄ e^{ik̄ζ̄}` on the unit circle.
pub fn scattering_transform(r: &NdMatrix, k: C64) -> C64 {
    let basis = r.basis();
    let half = basis.len() / 2;
    let sqrt_pi = PI.sqrt();
    let ik = C64::new(0.0, 1.0) * k;
    let ikb = C64::new(0.0, 1.0) * k.conj();
    // coefficients for e^{ipθ} = √π(φ_p − i φ_{−p}) and e^{−ipθ} = √π(φ_p + i φ_{−p})
    let mut a = vec![C64::new(0.0, 0.0); basis.len()];
    let mut b = vec![C64::new(0.0, 0.0); basis.len()];
    let (mut pa, mut pb) = (C64::new(sqrt_pi, 0.0), C64::new(sqrt_pi, 0.0));
    for p in 1..=half {
        if p > 1 {
            let d = (p - 1) as f64;
            pa = pa * ik / d;
            pb = pb * ikb / d;
        }
        let pos = basis.position(p as i32).expect("in basis");
        let neg = basis.position(-(p as i32)).expect("in basis");
        a[pos] = pa;
        a[neg] = C64::new(0.0, -1.0) * pa;
        b[pos] = pb;
        b[neg] = C64::new(0.0, 1.0) * pb;
    }
    let mut sum = C64::new(0.0, 0.0);
    for (i, ai) in a.iter().enumerate() {
        let row: C64 = r.row(i).iter().zip(&b).map(|(x, y)| *x * *y).sum();
        sum += ai * row;
    }
    sum * k.norm_sqr()
}

/// Uniform `n×n` grid on `[−L, L]²`, offset by half a cell so that `k = 0`
/// is not a node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KGrid {
    pub n: usize,
    pub half_width: f64,
}

impl KGrid {
    pub fn step(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn point(&self, a: usize, b: usize) -> C64 {
        let h = self.step();
        C64::new(
            -self.half_width + (a as f64 + 0.5) * h,
            -self.half_width + (b as f64 + 0.5) * h,
        )
    }

    /// Node at flat index `a·n + b` (real part index `a`).
    pub fn node(&self, idx: usize) -> C64 {
        self.point(idx / self.n, idx % self.n)
    }
}

/// Truncated scattering transform on a k-grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringData {
    pub radius: f64,
    pub cap: f64,
    pub grid: KGrid,
    /// Row-major values, real part index first.
    pub values: Vec<C64>,
    /// Nodes inside `|k| < R` zeroed by the amplitude cap.
    pub clipped: usize,
}

/// Samples `t` on the grid, keeping values with `0 < |k| < R` and both
/// components bounded by `cap`.
pub fn truncate(t: impl Fn(C64) -> C64, radius: f64, cap: f64, grid_exp: u32, extent: f64) -> ScatteringData {
    let grid = KGrid {
        n: 1 << grid_exp,
        half_width: extent * radius,
    };
    let mut clipped = 0;
    let values = (0..grid.n * grid.n)
        .map(|idx| {
            let k = grid.node(idx);
            let r = k.norm();
            if r == 0.0 || r >= radius {
                return C64::new(0.0, 0.0);
            }
            let v = t(k);
            if v.re.abs() <= cap && v.im.abs() <= cap {
                v
            } else {
                clipped += 1;
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    ScatteringData {
        radius,
        cap,
        grid,
        values,
        clipped,
    }
}

/// Truncated scattering data of a difference ND matrix.
pub fn scattering_data(r: &NdMatrix, cfg: &DbarConfig) -> Result<ScatteringData> {
    cfg.validate()?;
    Ok(truncate(
        |k| scattering_transform(r, k),
        cfg.radius,
        cfg.cap,
        cfg.grid_exp,
        cfg.extent,
    ))
}

impl ScatteringData {
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == C64::new(0.0, 0.0))
    }

    /// `k_re,k_im,t_re,t_im` per node.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k_re,k_im,t_re,t_im\n");
        for (idx, v) in self.values.iter().enumerate() {
            let k = self.grid.node(idx);
            writeln!(out, "{:?},{:?},{:?},{:?}", k.re, k.im, v.re, v.im).expect("string write");
        }
        out
    }
}

/// 2D FFT on a square row-major array.
struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn run(&self, data: &mut [C64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inverse } else { &self.forward };
        plan.process(data);
        let mut col = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = data[i * n + j];
            }
            plan.process(&mut col);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
    }
}

/// Outcome of one D-bar solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuValue {
    pub mu: C64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solution `μ(z, ·)` on the support of the scattering data.
#[derive(Clone, Debug, PartialEq)]
pub struct MuField {
    pub z: [f64; 2],
    /// Flat grid indices of the support.
    pub support: Vec<usize>,
    pub values: Vec<C64>,
}

/// D-bar solver for fixed scattering data, reusable across points `z`.
pub struct DbarSolver {
    data: ScatteringData,
    fft: Fft2,
    /// Transformed Cauchy kernel `h² g / n²` for the periodic convolution.
    kernel_hat: Vec<C64>,
    /// Flat indices of nodes with nonzero scattering data.
    support: Vec<usize>,
    tol: f64,
    max_iter: usize,
}

impl DbarSolver {
    pub fn new(data: ScatteringData, tol: f64, max_iter: usize) -> Self {
        let n = data.grid.n;
        let h = data.grid.step();
        let fft = Fft2::new(n);
        let wrap = |a: usize| if a < n / 2 { a as f64 } else { a as f64 - n as f64 };
        let mut kernel_hat: Vec<C64> = (0..n * n)
            .map(|idx| {
                let d = C64::new(wrap(idx / n) * h, wrap(idx % n) * h);
                if d.norm() == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    1.0 / (PI * d)
                }
            })
            .collect();
        fft.run(&mut kernel_hat, false);
        let scale = h * h / (n * n) as f64;
        kernel_hat.iter_mut().for_each(|v| *v *= scale);
        let support = (0..n * n).filter(|&i| data.values[i] != C64::new(0.0, 0.0)).collect();
        Self {
            data,
            fft,
            kernel_hat,
            support,
            tol,
            max_iter,
        }
    }

    pub fn data(&self) -> &ScatteringData {
        &self.data
    }

    /// `T_z` on the support.
    fn weights(&self, z: [f64; 2]) -> Vec<C64> {
        let zc = C64::new(z[0], z[1]);
        self.support
            .iter()
            .map(|&i| {
                let k = self.data.grid.node(i);
                let phase = -2.0 * (k * zc).re;
                self.data.values[i] * C64::new(phase.cos(), phase.sin()) / (4.0 * PI * k.conj())
            })
            .collect()
    }

    /// `(g * (T conj μ))` on the support.
    fn convolve(&self, w: &[C64], mu: &[C64], buf: &mut [C64]) -> Vec<C64> {
        buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for ((&i, wi), m) in self.support.iter().zip(w).zip(mu) {
            buf[i] = wi * m.conj();
        }
        self.fft.run(buf, false);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.fft.run(buf, true);
        self.support.iter().map(|&i| buf[i]).collect()
    }

    /// Solves for `μ(z, ·)` on the support.
    pub fn solve_field(&self, z: [f64; 2]) -> Result<(MuField, IterStats)> {
        let s = self.support.len();
        if s == 0 {
            return Ok((
                MuField {
                    z,
                    support: vec![],
                    values: vec![],
                },
                IterStats {
                    iterations: 0,
                    residual: 0.0,
                },
            ));
        }
        let w = self.weights(z);
        let n = self.data.grid.n;
        let buf = std::cell::RefCell::new(vec![C64::new(0.0, 0.0); n * n]);
        let apply = |x: &[f64]| {
            let mu: Vec<C64> = (0..s).map(|i| C64::new(x[i], x[s + i])).collect();
            let c = self.convolve(&w, &mu, &mut buf.borrow_mut());
            let mut out = vec![0.0; 2 * s];
            for i in 0..s {
                let r = mu[i] - c[i];
                out[i] = r.re;
                out[s + i] = r.im;
            }
            out
        };
        let mut rhs = vec![0.0; 2 * s];
        rhs[..s].iter_mut().for_each(|v| *v = 1.0);
        let (x, stats) = gmres(apply, &rhs, self.tol, self.max_iter)?;
        let values = (0..s).map(|i| C64::new(x[i], x[s + i])).collect();
        Ok((
            MuField {
                z,
                support: self.support.clone(),
                values,
            },
            stats,
        ))
    }

    /// `μ(z, 0)` by evaluating the discretized integral equation at `k = 0`.
    pub fn solve(&self, z: [f64; 2]) -> Result<MuValue> {
        let (field, stats) = self.solve_field(z)?;
        let w = self.weights(z);
        let h2 = self.data.grid.step().powi(2);
        let mut mu = C64::new(1.0, 0.0);
        for ((&i, wi), m) in field.support.iter().zip(&w).zip(&field.values) {
            let k = self.data.grid.node(i);
            mu += h2 * (-1.0 / (PI * k)) * wi * m.conj();
        }
        Ok(MuValue {
            mu,
            iterations: stats.iterations,
            residual: stats.residual,
        })
    }
}

/// `μ(z, 0)` for one point.
pub fn solve_dbar(sc: &ScatteringData, z: [f64; 2], cfg: &DbarConfig) -> Result<C64> {
    Ok(DbarSolver::new(sc.clone(), cfg.tol, cfg.max_iter).solve(z)?.mu)
}

/// Pixel-centre grid on `[−1, 1]²` restricted to the open unit disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub size: usize,
}

impl EvalGrid {
    pub fn coordinate(&self, i: usize) -> f64 {
        -1.0 + (i as f64 + 0.5) * 2.0 / self.size as f64
    }

    /// `(row, col, [x, y])` for pixels inside the disk; row 0 is the top.
    pub fn points(&self) -> Vec<(usize, usize, [f64; 2])> {
        let mut out = Vec::new();
        for row in 0..self.size {
            let y = -self.coordinate(row);
            for col in 0..self.size {
                let x = self.coordinate(col);
                if x * x + y * y < 1.0 {
                    out.push((row, col, [x, y]));
                }
            }
        }
        out
    }
}

/// Reconstructed conductivity on an evaluation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub grid: EvalGrid,
    pub pixels: Vec<(usize, usize, [f64; 2])>,
    /// `(Re μ(z,0))²` per pixel.
    pub sigma: Vec<f64>,
    /// `Im μ(z,0)²` per pixel, discarded from `sigma`.
    pub imag: Vec<f64>,
    pub max_iterations: usize,
}

/// `σ(z) = (Re μ(z,0))²` at every pixel inside the disk, in parallel.
pub fn reconstruct(sc: &ScatteringData, grid: &EvalGrid, cfg: &DbarConfig) -> Result<Reconstruction> {
    let solver = DbarSolver::new(sc.clone(), cfg.tol, cfg.max_iter);
    reconstruct_with(&solver, grid)
}

pub fn reconstruct_with(solver: &DbarSolver, grid: &EvalGrid) -> Result<Reconstruction> {
    let pixels = grid.points();
    let values: Vec<MuValue> = pixels
        .par_iter()
        .map(|(_, _, z)| solver.solve(*z))
        .collect::<Result<_>>()?;
    Ok(Reconstruction {
        grid: grid.clone(),
        sigma: values.iter().map(|v| v.mu.re * v.mu.re).collect(),
        imag: values.iter().map(|v| (v.mu * v.mu).im).collect(),
        max_iterations: values.iter().map(|v| v.iterations).max().unwrap_or(0),
        pixels,
    })
}

impl Reconstruction {
    /// `x,y,sigma,imag` per pixel.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,sigma,imag\n");
        for ((_, _, z), (s, i)) in self.pixels.iter().zip(self.sigma.iter().zip(&self.imag)) {
            writeln!(out, "{:?},{:?},{:?},{:?}", z[0], z[1], s, i).expect("string write");
        }
        out
    }

    /// Full image with `None` outside the disk, row-major from the top.
    pub fn image(&self) -> Vec<Option<f64>> {
        let mut img = vec![None; self.grid.size * self.grid.size];
        for ((r, c, _), s) in self.pixels.iter().zip(&self.sigma) {
            img[r * self.grid.size + c] = Some(*s);
        }
        img
    }

    /// Phantom sampled at the same pixels.
    pub fn rasterize(&self, phantom: &Phantom) -> Vec<f64> {
        self.pixels.iter().map(|(_, _, z)| phantom.value(z[0], z[1])).collect()
    }

    /// Relative ℓ² distance to a phantom on the pixel grid.
    pub fn error_to_phantom(&self, phantom: &Phantom) -> Result<f64> {
        crate::phantoms::relative_l2_error(&self.sigma, &self.rasterize(phantom))
    }

    /// Relative ℓ² distance to another reconstruction on the same grid.
    pub fn error_to(&self, reference: &Reconstruction) -> Result<f64> {
        if self.grid != reference.grid {
            return Err(Error::GridMismatch(reference.grid.size, self.grid.size));
        }
        crate::phantoms::relative_l2_error(&self.sigma, &reference.sigma)
    }

    /// Largest `|Im μ²| / (Re μ)²` over the pixels.
    pub fn max_relative_imag(&self) -> f64 {
        self.sigma
            .iter()
            .zip(&self.imag)
            .map(|(s, i)| i.abs() / s.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    /// Number of 4-connected pixel components where `σ − background`
    /// exceeds half of its maximum.
    pub fn inclusion_components(&self, background: f64) -> usize {
        let n = self.grid.size;
        let peak = self.sigma.iter().map(|s| s - background).fold(0.0, f64::max);
        if peak <= 0.0 {
            return 0;
        }
        let img = self.image();
        let above: Vec<bool> = img
            .iter()
            .map(|v| v.is_some_and(|s| s - background > 0.5 * peak))
            .collect();
        let mut seen = vec![false; n * n];
        let mut count = 0;
        for start in 0..n * n {
            if !above[start] || seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(p) = stack.pop() {
                let (r, c) = (p / n, p % n);
                let mut push = |q: usize| {
                    if above[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                };
                if r > 0 {
                    push(p - n);
                }
                if r + 1 < n {
                    push(p + n);
                }
                if c > 0 {
                    push(p - 1);
                }
                if c + 1 < n {
                    push(p + 1);
                }
            }
        }
        count
    }
}

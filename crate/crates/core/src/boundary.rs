//! Boundary function spaces and the electrode operators.
//!
//! Functions on the circle are sampled on a [`QuadratureGrid`]. Electrode
//! integrals sum the grid nodes inside an arc; the discrete arc measure
//! (node count × weight) is used throughout so that `P` is an exact
//! projection and `LP` is the exact adjoint of `Q` on the grid.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::{ElectrodeLayout, QuadratureGrid};
use crate::{Error, Result};

/// Orthonormal trigonometric basis `φ_n`, `n ∈ {-N/2,…,-1,1,…,N/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrigBasis {
    size: usize,
}

impl TrigBasis {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || !size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "basis size must be positive and even, got {size}"
            )));
        }
        Ok(Self { size })
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Basis indices in ascending order.
    pub fn indices(&self) -> Vec<i32> {
        let h = (self.size / 2) as i32;
        (-h..=h).filter(|&n| n != 0).collect()
    }

    /// Index at position `pos` of the ascending order.
    pub fn index_at(&self, pos: usize) -> i32 {
        let h = (self.size / 2) as i32;
        let p = pos as i32;
        if p < h {
            p - h
        } else {
            p - h + 1
        }
    }

    /// Position of index `n` in the ascending order.
    pub fn position(&self, n: i32) -> Option<usize> {
        let h = (self.size / 2) as i32;
        match n {
            0 => None,
            n if n < -h || n > h => None,
            n if n < 0 => Some((n + h) as usize),
            n => Some((n + h - 1) as usize),
        }
    }
}

/// `sin(nθ)/√π` for `n < 0`, `cos(nθ)/√π` for `n > 0`.
pub fn basis_eval(n: i32, theta: f64) -> Result<f64> {
    match n {
        0 => Err(Error::InvalidArgument("basis index 0 is excluded".into())),
        n if n < 0 => Ok((n as f64 * theta).sin() / PI.sqrt()),
        n => Ok((n as f64 * theta).cos() / PI.sqrt()),
    }
}

/// Real function sampled on the boundary quadrature grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFunction {
    grid: QuadratureGrid,
    values: Vec<f64>,
}

impl BoundaryFunction {
    pub fn new(grid: QuadratureGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: QuadratureGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: QuadratureGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.angles().map(f).collect(),
        }
    }

    /// Samples of `φ_n`.
    pub fn basis(grid: QuadratureGrid, n: i32) -> Result<Self> {
        basis_eval(n, 0.0)?;
        Ok(Self::from_fn(grid, |t| basis_eval(n, t).expect("n != 0")))
    }

    pub fn grid(&self) -> QuadratureGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `∫ f ds` by the grid rule.
    pub fn integral(&self) -> f64 {
        self.grid.weight() * self.values.iter().sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        (self.grid.weight() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// `|∫ f ds| ≤ tol · ‖f‖`.
    pub fn is_mean_free(&self, tol: f64) -> bool {
        self.integral().abs() <= tol * self.norm().max(f64::MIN_POSITIVE)
    }

    /// Removes the mean so that `∫ f ds = 0`.
    pub fn mean_free(mut self) -> Self {
        let mean = self.values.iter().sum::<f64>() / self.values.len() as f64;
        self.values.iter_mut().for_each(|v| *v -= mean);
        self
    }

    pub fn scaled(mut self, a: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= a);
        self
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_grid(self, other)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    /// Two-column CSV `theta,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("theta,value\n");
        for (t, v) in self.grid.angles().zip(&self.values) {
            let _ = writeln!(s, "{t:?},{v:?}");
        }
        s
    }
}

fn check_grid(f: &BoundaryFunction, g: &BoundaryFunction) -> Result<()> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch(f.grid.len(), g.grid.len()));
    }
    Ok(())
}

/// `(f, g)_{L²(∂Ω)}` by the grid rule; exact for trigonometric polynomials
/// of degree below `K`.
pub fn inner_product(f: &BoundaryFunction, g: &BoundaryFunction) -> Result<f64> {
    check_grid(f, g)?;
    Ok(f.grid.weight() * f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum::<f64>())
}

/// One value per active electrode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeVector(pub Vec<f64>);

impl ElectrodeVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// The operators `Q`, `P` and `L` of a layout, discretized on a grid.
#[derive(Clone, Debug)]
pub struct ElectrodeOps {
    grid: QuadratureGrid,
    /// Electrode containing each grid node, if any.
    electrode_of: Vec<Option<usize>>,
    /// Extended electrode containing each grid node.
    extended_of: Vec<usize>,
    electrode_len: Vec<f64>,
    extended_len: Vec<f64>,
}

impl ElectrodeOps {
    pub fn new(layout: &ElectrodeLayout, grid: QuadratureGrid) -> Result<Self> {
        let m = layout.num_electrodes();
        let w = grid.weight();
        let mut electrode_of = vec![None; grid.len()];
        let mut extended_of = vec![usize::MAX; grid.len()];
        let mut electrode_len = vec![0.0; m];
        let mut extended_len = vec![0.0; m];
        for (k, theta) in grid.angles().enumerate() {
            for (i, e) in layout.electrodes().iter().enumerate() {
                if e.contains(theta) {
                    electrode_of[k] = Some(i);
                    electrode_len[i] += w;
                }
            }
            for (i, e) in layout.extended().iter().enumerate() {
                if e.contains(theta) {
                    extended_of[k] = i;
                    extended_len[i] += w;
                }
            }
        }
        if electrode_len.contains(&0.0) {
            return Err(Error::InvalidArgument(
                "quadrature grid too coarse: an electrode contains no grid node".into(),
            ));
        }
        for (k, (&e, &x)) in electrode_of.iter().zip(&extended_of).enumerate() {
            if x == usize::MAX || e.is_some_and(|e| e != x) {
                return Err(Error::InvalidArgument(format!(
                    "grid node {k} is not inside its extended electrode"
                )));
            }
        }
        Ok(Self {
            grid,
            electrode_of,
            extended_of,
            electrode_len,
            extended_len,
        })
    }

    pub fn grid(&self) -> QuadratureGrid {
        self.grid
    }

    pub fn num_electrodes(&self) -> usize {
        self.electrode_len.len()
    }

    /// Discrete electrode lengths `|E_m|`.
    pub fn electrode_lengths(&self) -> &[f64] {
        &self.electrode_len
    }

    /// Discrete extended electrode lengths `|Ẽ_m|`.
    pub fn extended_lengths(&self) -> &[f64] {
        &self.extended_len
    }

    /// `min_m |E_m| / |Ẽ_m|` for the discrete measures.
    pub fn c_e(&self) -> f64 {
        self.electrode_len
            .iter()
            .zip(&self.extended_len)
            .map(|(e, x)| e / x)
            .fold(f64::INFINITY, f64::min)
    }

    /// Mask of grid nodes lying on some electrode.
    pub fn on_electrodes(&self) -> Vec<bool> {
        self.electrode_of.iter().map(Option::is_some).collect()
    }

    fn check(&self, f: &BoundaryFunction) -> Result<()> {
        if f.grid != self.grid {
            return Err(Error::GridMismatch(self.grid.len(), f.grid.len()));
        }
        Ok(())
    }

    /// `(1/|E_m|) ∫_{E_m} g ds` for each electrode.
    pub fn electrode_means(&self, g: &BoundaryFunction) -> Result<ElectrodeVector> {
        self.check(g)?;
        let mut sums = vec![0.0; self.num_electrodes()];
        for (v, e) in g.values.iter().zip(&self.electrode_of) {
            if let Some(e) = e {
                sums[*e] += v;
            }
        }
        let w = self.grid.weight();
        Ok(ElectrodeVector(
            sums.iter().zip(&self.electrode_len).map(|(s, l)| w * s / l).collect(),
        ))
    }

    /// `(1/|E_m|) ∫_{Ẽ_m} φ ds` for each electrode: the values of `Qφ`.
    pub fn q_values(&self, f: &BoundaryFunction) -> Result<ElectrodeVector> {
        self.check(f)?;
        let mut sums = vec![0.0; self.num_electrodes()];
        for (v, &x) in f.values.iter().zip(&self.extended_of) {
            sums[x] += v;
        }
        let w = self.grid.weight();
        Ok(ElectrodeVector(
            sums.iter().zip(&self.electrode_len).map(|(s, l)| w * s / l).collect(),
        ))
    }

    /// `Σ χ_m V_m`: electrode values as a function vanishing off the electrodes.
    pub fn on_electrode(&self, v: &ElectrodeVector) -> Result<BoundaryFunction> {
        self.check_len(v)?;
        Ok(BoundaryFunction {
            grid: self.grid,
            values: self.electrode_of.iter().map(|e| e.map_or(0.0, |e| v.0[e])).collect(),
        })
    }

    fn check_len(&self, v: &ElectrodeVector) -> Result<()> {
        if v.len() != self.num_electrodes() {
            return Err(Error::DimensionMismatch {
                expected: self.num_electrodes(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Non-orthogonal projection `Q`.
    pub fn project_q(&self, f: &BoundaryFunction) -> Result<BoundaryFunction> {
        self.on_electrode(&self.q_values(f)?)
    }

    /// Orthogonal projection `P` onto piecewise constants on the electrodes.
    pub fn project_p(&self, g: &BoundaryFunction) -> Result<BoundaryFunction> {
        self.on_electrode(&self.electrode_means(g)?)
    }

    /// Extension `L`: `V_m` on all of `Ẽ_m`.
    pub fn extend_l(&self, v: &ElectrodeVector) -> Result<BoundaryFunction> {
        self.check_len(v)?;
        Ok(BoundaryFunction {
            grid: self.grid,
            values: self.extended_of.iter().map(|&x| v.0[x]).collect(),
        })
    }

    /// `L P g`.
    pub fn extend_p(&self, g: &BoundaryFunction) -> Result<BoundaryFunction> {
        self.extend_l(&self.electrode_means(g)?)
    }
}

/// Basis samples on a grid, for repeated coefficient evaluation.
#[derive(Clone, Debug)]
pub struct BasisTable {
    basis: TrigBasis,
    grid: QuadratureGrid,
    samples: Vec<Vec<f64>>,
}

impl BasisTable {
    pub fn new(basis: TrigBasis, grid: QuadratureGrid) -> Result<Self> {
        if grid.len() < 2 * basis.len() + 2 {
            return Err(Error::InvalidArgument(format!(
                "grid of {} nodes does not resolve order {}",
                grid.len(),
                basis.len() / 2
            )));
        }
        let samples = basis
            .indices()
            .into_iter()
            .map(|n| BoundaryFunction::basis(grid, n).map(BoundaryFunction::into_values))
            .collect::<Result<_>>()?;
        Ok(Self { basis, grid, samples })
    }

    pub fn basis(&self) -> TrigBasis {
        self.basis
    }

    pub fn grid(&self) -> QuadratureGrid {
        self.grid
    }

    pub fn function(&self, pos: usize) -> BoundaryFunction {
        BoundaryFunction {
            grid: self.grid,
            values: self.samples[pos].clone(),
        }
    }

    /// `(f, φ_j)` for all `j`, ascending.
    pub fn coefficients(&self, f: &BoundaryFunction) -> Result<Vec<f64>> {
        if f.grid != self.grid {
            return Err(Error::GridMismatch(self.grid.len(), f.grid.len()));
        }
        let w = self.grid.weight();
        Ok(self
            .samples
            .iter()
            .map(|s| w * s.iter().zip(&f.values).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }

    /// `Σ c_j φ_j`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<BoundaryFunction> {
        if coeffs.len() != self.basis.len() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.len(),
                got: coeffs.len(),
            });
        }
        let mut values = vec![0.0; self.grid.len()];
        for (c, s) in coeffs.iter().zip(&self.samples) {
            for (v, b) in values.iter_mut().zip(s) {
                *v += c * b;
            }
        }
        Ok(BoundaryFunction {
            grid: self.grid,
            values,
        })
    }
}

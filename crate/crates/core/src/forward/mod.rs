//! Forward solvers and simulated measurement datasets.
//!
//! Three measurement models are supported:
//!
//! - continuum (`Cm`): full-boundary traces for inputs `φ_n`;
//! - electrode continuum (`Ecm`): `U^n = P(R_σ Qφ_n)`;
//! - complete electrode (`Cem`): electrode voltages for currents `J = Qφ_n|_E`.

mod fem;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{BasisTable, BoundaryFunction, ElectrodeOps, ElectrodeVector, TrigBasis};
use crate::geometry::{ElectrodeLayout, Mesh, QuadratureGrid};
use crate::ndmap::{NdKind, NdMatrix, Provenance};
use crate::phantoms::Phantom;
use crate::{Error, Result};

pub use fem::{CemFem, ContinuumFem};

/// Sub-sampling per triangle edge used to average a phantom over an element.
const PHANTOM_SUBSAMPLES: usize = 4;

/// Piecewise constant conductivity on a mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct ConductivityField {
    values: Vec<f64>,
    phantom: Option<Phantom>,
}

impl ConductivityField {
    /// Per-triangle averages of a phantom over a regular sub-triangulation.
    pub fn from_phantom(mesh: &Mesh, phantom: &Phantom) -> Result<Self> {
        phantom.validate()?;
        let s = PHANTOM_SUBSAMPLES;
        let nodes = mesh.nodes();
        let values = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let [a, b, c] = tri.map(|i| nodes[i]);
                let at = |u: f64, v: f64| {
                    let w = 1.0 - u - v;
                    phantom.value(w * a[0] + u * b[0] + v * c[0], w * a[1] + u * b[1] + v * c[1])
                };
                let h = 1.0 / s as f64;
                let mut sum = 0.0;
                for i in 0..s {
                    for j in 0..s - i {
                        let (u, v) = (i as f64 * h, j as f64 * h);
                        sum += at(u + h / 3.0, v + h / 3.0);
                        if i + j + 1 < s {
                            sum += at(u + 2.0 * h / 3.0, v + 2.0 * h / 3.0);
                        }
                    }
                }
                sum / (s * s) as f64
            })
            .collect();
        Ok(Self {
            values,
            phantom: Some(phantom.clone()),
        })
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Result<Self> {
        Self::from_values(mesh, vec![value; mesh.num_triangles()])
    }

    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_triangles() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_triangles(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("conductivity must be strictly positive".into()));
        }
        Ok(Self { values, phantom: None })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn phantom(&self) -> Option<&Phantom> {
        self.phantom.as_ref()
    }
}

/// Continuum Neumann solver factorized once for a conductivity.
pub struct ContinuumSolver {
    fem: ContinuumFem,
}

impl ContinuumSolver {
    pub fn new(mesh: &Mesh, sigma: &ConductivityField, grid: QuadratureGrid) -> Result<Self> {
        Ok(Self {
            fem: ContinuumFem::new(mesh, sigma.values(), grid)?,
        })
    }

    /// Boundary trace with zero mean for mean-free Neumann data `ψ`.
    pub fn solve(&self, psi: &BoundaryFunction) -> Result<BoundaryFunction> {
        if psi.grid() != self.fem.grid() {
            return Err(Error::GridMismatch(self.fem.grid().len(), psi.grid().len()));
        }
        let total = psi.integral();
        let scale = psi.values().iter().map(|v| v.abs()).sum::<f64>() * psi.grid().weight();
        if total.abs() > 1e-10 * scale + 1e-14 {
            return Err(Error::NotMeanFree(total));
        }
        let u = self.fem.solve_nodal(psi)?;
        Ok(self.fem.trace(&u))
    }

    /// Nodal potential for mean-free Neumann data.
    pub fn solve_nodal(&self, psi: &BoundaryFunction) -> Result<Vec<f64>> {
        self.solve(psi)?;
        self.fem.solve_nodal(psi)
    }
}

/// One-off continuum solve.
pub fn solve_continuum(mesh: &Mesh, sigma: &ConductivityField, psi: &BoundaryFunction) -> Result<BoundaryFunction> {
    ContinuumSolver::new(mesh, sigma, psi.grid())?.solve(psi)
}

/// Complete electrode model solver factorized once.
pub struct CemSolver {
    fem: CemFem,
}

impl CemSolver {
    pub fn new(
        mesh: &Mesh,
        sigma: &ConductivityField,
        layout: &ElectrodeLayout,
        z: f64,
        grid: QuadratureGrid,
    ) -> Result<Self> {
        Ok(Self {
            fem: CemFem::new(mesh, sigma.values(), layout, z, grid)?,
        })
    }

    /// Electrode voltages for current densities `J` with `Σ J_m |E_m| = 0`.
    pub fn solve(&self, j: &ElectrodeVector) -> Result<ElectrodeVector> {
        self.fem.solve(j)
    }
}

/// One-off complete electrode model solve.
pub fn solve_cem(
    mesh: &Mesh,
    sigma: &ConductivityField,
    layout: &ElectrodeLayout,
    z: f64,
    j: &ElectrodeVector,
    grid: QuadratureGrid,
) -> Result<ElectrodeVector> {
    CemSolver::new(mesh, sigma, layout, z, grid)?.solve(j)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Cm,
    Ecm,
    Cem,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::Cm => "cm",
            Model::Ecm => "ecm",
            Model::Cem => "cem",
        })
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cm" => Ok(Model::Cm),
            "ecm" => Ok(Model::Ecm),
            "cem" => Ok(Model::Cem),
            other => Err(Error::Parse(format!("unknown model `{other}`"))),
        }
    }
}

/// Input current descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Pattern {
    /// Basis function `φ_n` (through `Q` for electrode models).
    Trig { n: i32 },
    /// Unit current into electrode `source`, out of electrode `sink`.
    Pair { source: usize, sink: usize },
    /// Continuum input `Qφ_n` on the full boundary.
    Projected { n: i32 },
}

/// Measurements for a list of current patterns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltageDataset {
    pub model: Model,
    pub layout: Option<ElectrodeLayout>,
    pub basis: TrigBasis,
    pub grid: QuadratureGrid,
    pub z: Option<f64>,
    pub patterns: Vec<Pattern>,
    /// Electrode current densities per pattern (electrode models).
    pub currents: Vec<ElectrodeVector>,
    /// Electrode voltages per pattern (electrode models).
    pub voltages: Vec<ElectrodeVector>,
    /// Boundary traces per pattern (continuum model).
    #[serde(skip)]
    pub traces: Vec<BoundaryFunction>,
    pub noise_level: f64,
    pub seed: Option<u64>,
}

impl VoltageDataset {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Sidecar CSV path for continuum traces next to a dataset JSON file.
    pub fn trace_path(json: &Path) -> PathBuf {
        let stem = json.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
        json.with_file_name(format!("{stem}_traces.csv"))
    }

    /// Traces as one CSV table: `theta` followed by one column per pattern.
    pub fn traces_csv(&self) -> String {
        let mut out = String::from("theta");
        for p in &self.patterns {
            match p {
                Pattern::Trig { n } => write!(out, ",n{n}").unwrap(),
                Pattern::Pair { source, sink } => write!(out, ",p{source}_{sink}").unwrap(),
                Pattern::Projected { n } => write!(out, ",q{n}").unwrap(),
            }
        }
        out.push('\n');
        for (k, theta) in self.grid.angles().enumerate() {
            write!(out, "{theta:?}").unwrap();
            for t in &self.traces {
                write!(out, ",{:?}", t.values()[k]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    fn parse_traces(&mut self, csv: &str) -> Result<()> {
        let mut columns = vec![Vec::with_capacity(self.grid.len()); self.patterns.len()];
        for (i, line) in csv.lines().skip(1).enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != self.patterns.len() + 1 {
                return Err(Error::Parse(format!("trace row {i} has {} fields", fields.len())));
            }
            for (col, f) in columns.iter_mut().zip(&fields[1..]) {
                col.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("trace row {i}: {e}")))?,
                );
            }
        }
        self.traces = columns
            .into_iter()
            .map(|c| BoundaryFunction::new(self.grid, c))
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// Writes the dataset JSON and, for continuum data, the trace sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        if self.model == Model::Cm {
            std::fs::write(Self::trace_path(path), self.traces_csv())?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut ds: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ds.model == Model::Cm {
            let csv = std::fs::read_to_string(Self::trace_path(path))?;
            ds.parse_traces(&csv)?;
        }
        ds.validate()?;
        Ok(ds)
    }

    /// Structural consistency of the record lists.
    pub fn validate(&self) -> Result<()> {
        let n = self.patterns.len();
        let records = match self.model {
            Model::Cm => self.traces.len(),
            _ => self.voltages.len(),
        };
        if records != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: records,
            });
        }
        if self.model != Model::Cm {
            let layout = self
                .layout
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("electrode data without layout".into()))?;
            let m = layout.num_electrodes();
            if let Some(v) = self.voltages.iter().chain(&self.currents).find(|v| v.len() != m) {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// Simulates one record per basis function `φ_n`.
///
/// `layout` is required for the electrode models and `z` for the complete
/// electrode model.
pub fn simulate_dataset(
    model: Model,
    mesh: &Mesh,
    sigma: &ConductivityField,
    layout: Option<&ElectrodeLayout>,
    basis: TrigBasis,
    grid: QuadratureGrid,
    z: Option<f64>,
) -> Result<VoltageDataset> {
    let patterns: Vec<Pattern> = basis.indices().into_iter().map(|n| Pattern::Trig { n }).collect();
    let inputs: Vec<BoundaryFunction> = basis
        .indices()
        .into_iter()
        .map(|n| BoundaryFunction::basis(grid, n))
        .collect::<Result<_>>()?;
    let mut ds = VoltageDataset {
        model,
        layout: layout.cloned(),
        basis,
        grid,
        z: None,
        patterns,
        currents: vec![],
        voltages: vec![],
        traces: vec![],
        noise_level: 0.0,
        seed: None,
    };
    match model {
        Model::Cm => {
            let solver = ContinuumSolver::new(mesh, sigma, grid)?;
            ds.traces = inputs.par_iter().map(|f| solver.solve(f)).collect::<Result<_>>()?;
        }
        Model::Ecm => {
            let layout = require_layout(layout)?;
            let ops = ElectrodeOps::new(layout, grid)?;
            let solver = ContinuumSolver::new(mesh, sigma, grid)?;
            let results: Vec<(ElectrodeVector, ElectrodeVector)> = inputs
                .par_iter()
                .map(|f| {
                    let j = ops.q_values(f)?;
                    let trace = solver.solve(&ops.on_electrode(&j)?)?;
                    Ok((j, ops.electrode_means(&trace)?))
                })
                .collect::<Result<_>>()?;
            (ds.currents, ds.voltages) = results.into_iter().unzip();
        }
        Model::Cem => {
            let layout = require_layout(layout)?;
            let z =
                z.ok_or_else(|| Error::InvalidArgument("complete electrode model needs a contact impedance".into()))?;
            let ops = ElectrodeOps::new(layout, grid)?;
            let solver = CemSolver::new(mesh, sigma, layout, z, grid)?;
            let results: Vec<(ElectrodeVector, ElectrodeVector)> = inputs
                .par_iter()
                .map(|f| {
                    let j = ops.q_values(f)?;
                    let u = solver.solve(&j)?;
                    Ok((j, u))
                })
                .collect::<Result<_>>()?;
            (ds.currents, ds.voltages) = results.into_iter().unzip();
            ds.z = Some(z);
        }
    }
    Ok(ds)
}

fn require_layout(layout: Option<&ElectrodeLayout>) -> Result<&ElectrodeLayout> {
    layout.ok_or_else(|| Error::InvalidArgument("electrode model needs a layout".into()))
}

/// Complete electrode model data for pairwise injections: unit current into
/// `source`, out of `sink`, i.e. `J = (e_source − e_sink)/|E|`.
pub fn simulate_pairwise(
    mesh: &Mesh,
    sigma: &ConductivityField,
    layout: &ElectrodeLayout,
    basis: TrigBasis,
    grid: QuadratureGrid,
    z: f64,
    pairs: &[(usize, usize)],
) -> Result<VoltageDataset> {
    let m = layout.num_electrodes();
    let ops = ElectrodeOps::new(layout, grid)?;
    let len = ops.electrode_lengths();
    let solver = CemSolver::new(mesh, sigma, layout, z, grid)?;
    let mut currents = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        if a >= m || b >= m || a == b {
            return Err(Error::InvalidArgument(format!("invalid injection pair ({a}, {b})")));
        }
        let mut j = vec![0.0; m];
        j[a] = 1.0 / len[a];
        j[b] = -1.0 / len[b];
        currents.push(ElectrodeVector(j));
    }
    let voltages = currents.par_iter().map(|j| solver.solve(j)).collect::<Result<_>>()?;
    Ok(VoltageDataset {
        model: Model::Cem,
        layout: Some(layout.clone()),
        basis,
        grid,
        z: Some(z),
        patterns: pairs
            .iter()
            .map(|&(source, sink)| Pattern::Pair { source, sink })
            .collect(),
        currents,
        voltages,
        traces: vec![],
        noise_level: 0.0,
        seed: None,
    })
}

/// Continuum traces for the projected inputs `Qφ_n`, one record per order.
pub fn simulate_projected(
    mesh: &Mesh,
    sigma: &ConductivityField,
    layout: &ElectrodeLayout,
    basis: TrigBasis,
    grid: QuadratureGrid,
    orders: &[i32],
) -> Result<VoltageDataset> {
    let ops = ElectrodeOps::new(layout, grid)?;
    let inputs = orders
        .iter()
        .map(|&n| ops.project_q(&BoundaryFunction::basis(grid, n)?))
        .collect::<Result<Vec<_>>>()?;
    let solver = ContinuumSolver::new(mesh, sigma, grid)?;
    let traces = inputs.par_iter().map(|f| solver.solve(f)).collect::<Result<_>>()?;
    Ok(VoltageDataset {
        model: Model::Cm,
        layout: Some(layout.clone()),
        basis,
        grid,
        z: None,
        patterns: orders.iter().map(|&n| Pattern::Projected { n }).collect(),
        currents: vec![],
        voltages: vec![],
        traces,
        noise_level: 0.0,
        seed: None,
    })
}

/// Adjacent injection pairs `(m, m+1)` over consecutive electrode indices.
pub fn adjacent_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m.saturating_sub(1)).map(|i| (i, i + 1)).collect()
}

/// Adds independent Gaussian noise with standard deviation
/// `level·‖U‖₂/√dim` to every record.
pub fn add_relative_noise(ds: &VoltageDataset, level: f64, seed: u64) -> Result<VoltageDataset> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise level must be ≥ 0, got {level}")));
    }
    let mut out = ds.clone();
    out.noise_level = level;
    out.seed = Some(seed);
    if level == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let mut perturb = |v: &mut [f64]| {
        let dim = v.len() as f64;
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let std = level * norm / dim.sqrt();
        for x in v.iter_mut() {
            *x += std * standard.sample(&mut rng);
        }
    };
    for u in &mut out.voltages {
        perturb(&mut u.0);
    }
    for t in &mut out.traces {
        perturb(t.values_mut());
    }
    Ok(out)
}

/// Exact ND matrix of the unit disk with `σ ≡ 1`: `diag(1/|n|)`.
pub fn analytic_nd_unit(basis: TrigBasis) -> NdMatrix {
    let n = basis.len();
    let mut entries = vec![0.0; n * n];
    for (i, k) in basis.indices().into_iter().enumerate() {
        entries[i * n + i] = 1.0 / k.unsigned_abs() as f64;
    }
    NdMatrix::new(basis, entries, NdKind::Absolute, Provenance::Full).expect("square")
}

/// Exact ND eigenvalue for frequency `k ≥ 1` of a rotationally symmetric
/// piecewise constant conductivity, by transfer of the ratio of the
/// decaying and growing radial modes across each interface.
pub fn rotsym_nd_eigenvalue(phantom: &Phantom, k: u32) -> Result<f64> {
    let Phantom::RotSym { steps, .. } = phantom else {
        return Err(Error::InvalidArgument("phantom is not rotationally symmetric".into()));
    };
    if k == 0 {
        return Err(Error::InvalidArgument("frequency must be positive".into()));
    }
    phantom.validate()?;
    let mut radii: Vec<f64> = steps
        .iter()
        .flat_map(|s| [s.inner, s.outer])
        .filter(|r| *r > 0.0 && *r < 1.0)
        .chain([0.0, 1.0])
        .collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let layer = |i: usize| {
        let r = 0.5 * (radii[i] + radii[i + 1]);
        phantom.value(r, 0.0)
    };
    let e = 2 * k as i32;
    // x = B r^{-k} / (A r^k) for u = A r^k + B r^{-k}, evaluated at the outer radius of a layer
    let mut x = 0.0;
    for i in 0..radii.len() - 2 {
        let rho = radii[i + 1];
        let (inner, outer) = (layer(i), layer(i + 1));
        let s = inner * (1.0 - x) / (1.0 + x);
        let at_interface = (outer - s) / (outer + s);
        x = at_interface * (rho / radii[i + 2]).powi(e);
    }
    let boundary = layer(radii.len() - 2);
    Ok((1.0 + x) / ((1.0 - x) * boundary * k as f64))
}

/// Exact continuum trace `R_σ f` for a rotationally symmetric phantom,
/// using all frequencies up to `(K − 2)/4` on a grid of `K` nodes.
pub fn rotsym_continuum_response(phantom: &Phantom, f: &BoundaryFunction) -> Result<BoundaryFunction> {
    let grid = f.grid();
    let top = ((grid.len() - 2) / 4).max(1);
    let basis = TrigBasis::new(2 * top)?;
    let table = BasisTable::new(basis, grid)?;
    let mut c = table.coefficients(f)?;
    for (ci, n) in c.iter_mut().zip(basis.indices()) {
        *ci *= rotsym_nd_eigenvalue(phantom, n.unsigned_abs())?;
    }
    table.synthesize(&c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::inner_product;
    use crate::geometry::{generate_disk_mesh, make_layout};
    use crate::phantoms::{default_paired_circles, rotsym, RadialStep};
    use std::f64::consts::TAU;

    fn grid() -> QuadratureGrid {
        QuadratureGrid::new(256).unwrap()
    }

    #[test]
    fn unit_disk_eigenfunctions() {
        let mesh = generate_disk_mesh(4);
        let sigma = ConductivityField::constant(&mesh, 1.0).unwrap();
        let solver = ContinuumSolver::new(&mesh, &sigma, grid()).unwrap();
        for n in [-3, 1, 4] {
            let phi = BoundaryFunction::basis(grid(), n).unwrap();
            let trace = solver.solve(&phi).unwrap();
            let expected = phi.clone().scaled(1.0 / n.unsigned_abs() as f64);
            let err = trace.sub(&expected).unwrap().norm() / expected.norm();
            assert!(err < 0.02, "n = {n}: {err}");
        }
    }

    #[test]
    fn layered_eigenvalues_match_closed_form() {
        let unit = rotsym(vec![]).unwrap();
        assert!((rotsym_nd_eigenvalue(&unit, 3).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let disk = rotsym(vec![RadialStep {
            inner: 0.0,
            outer: 0.5,
            value: 2.0,
        }])
        .unwrap();
        for k in 1..6u32 {
            let q = -0.25f64.powi(k as i32) / 3.0;
            let expected = (1.0 + q) / ((1.0 - q) * k as f64);
            assert!((rotsym_nd_eigenvalue(&disk, k).unwrap() - expected).abs() < 1e-14);
        }
        let split = rotsym(vec![
            RadialStep {
                inner: 0.0,
                outer: 0.3,
                value: 2.0,
            },
            RadialStep {
                inner: 0.3,
                outer: 0.5,
                value: 2.0,
            },
        ])
        .unwrap();
        for k in 1..6u32 {
            let a = rotsym_nd_eigenvalue(&split, k).unwrap();
            let b = rotsym_nd_eigenvalue(&disk, k).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
        assert!(rotsym_nd_eigenvalue(&default_paired_circles(2.0), 1).is_err());
    }

    #[test]
    fn layered_eigenvalues_match_fem() {
        let p = rotsym(vec![
            RadialStep {
                inner: 0.0,
                outer: 0.3,
                value: 0.5,
            },
            RadialStep {
                inner: 0.3,
                outer: 0.6,
                value: 3.0,
            },
        ])
        .unwrap();
        let phi = BoundaryFunction::basis(grid(), 1).unwrap();
        let exact = rotsym_nd_eigenvalue(&p, 1).unwrap();
        let errors: Vec<f64> = [4, 5]
            .into_iter()
            .map(|level| {
                let mesh = generate_disk_mesh(level);
                let sigma = ConductivityField::from_phantom(&mesh, &p).unwrap();
                let trace = solve_continuum(&mesh, &sigma, &phi).unwrap();
                (inner_product(&trace, &phi).unwrap() - exact).abs() / exact
            })
            .collect();
        assert!(errors[1] < errors[0] && errors[1] < 0.02, "{errors:?}");
    }

    #[test]
    fn continuum_response_scales_basis_functions() {
        let p = rotsym(vec![RadialStep {
            inner: 0.0,
            outer: 0.4,
            value: 5.0,
        }])
        .unwrap();
        let phi = BoundaryFunction::basis(grid(), -7).unwrap();
        let out = rotsym_continuum_response(&p, &phi).unwrap();
        let expected = phi.clone().scaled(rotsym_nd_eigenvalue(&p, 7).unwrap());
        assert!(out.sub(&expected).unwrap().norm() < 1e-13);
    }

    #[test]
    fn projected_inputs_match_direct_solve() {
        let mesh = generate_disk_mesh(3);
        let sigma = ConductivityField::constant(&mesh, 1.0).unwrap();
        let layout = make_layout(16, TAU / 32.0, 0.0, 2).unwrap();
        let basis = TrigBasis::new(4).unwrap();
        let ds = simulate_projected(&mesh, &sigma, &layout, basis, grid(), &[2]).unwrap();
        assert_eq!(ds.patterns, vec![Pattern::Projected { n: 2 }]);
        let ops = ElectrodeOps::new(&layout, grid()).unwrap();
        let input = ops.project_q(&BoundaryFunction::basis(grid(), 2).unwrap()).unwrap();
        let direct = solve_continuum(&mesh, &sigma, &input).unwrap();
        assert!(ds.traces[0].sub(&direct).unwrap().norm() < 1e-12);
        assert!(ds.traces_csv().starts_with("theta,q2\n"));
    }

    #[test]
    fn zero_data_gives_zero_trace() {
        let mesh = generate_disk_mesh(2);
        let sigma = ConductivityField::constant(&mesh, 1.0).unwrap();
        let t = solve_continuum(&mesh, &sigma, &BoundaryFunction::zeros(grid())).unwrap();
        assert!(t.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_non_mean_free_input() {
        let mesh = generate_disk_mesh(2);
        let sigma = ConductivityField::constant(&mesh, 1.0).unwrap();
        let one = BoundaryFunction::from_fn(grid(), |_| 1.0);
        assert!(matches!(
            solve_continuum(&mesh, &sigma, &one),
            Err(Error::NotMeanFree(_))
        ));
    }

    #[test]
    fn trace_has_zero_mean() {
        let mesh = generate_disk_mesh(3);
        let p = default_paired_circles(2.0);
        let sigma = ConductivityField::from_phantom(&mesh, &p).unwrap();
        let phi = BoundaryFunction::from_fn(grid(), |t| (2.0 * t).sin() + 0.3 * t.cos());
        let trace = solve_continuum(&mesh, &sigma, &phi).unwrap();
        assert!(trace.integral().abs() < 1e-12);
    }

    #[test]
    fn rotationally_symmetric_trace_is_proportional() {
        let mesh = generate_disk_mesh(4);
        let p = rotsym(vec![RadialStep {
            inner: 0.0,
            outer: 0.5,
            value: 2.0,
        }])
        .unwrap();
        let sigma = ConductivityField::from_phantom(&mesh, &p).unwrap();
        let phi = BoundaryFunction::basis(grid(), 2).unwrap();
        let trace = solve_continuum(&mesh, &sigma, &phi).unwrap();
        let c = inner_product(&trace, &phi).unwrap();
        let resid = trace.sub(&phi.clone().scaled(c)).unwrap().norm();
        assert!(resid < 1e-2 * trace.norm(), "{resid}");
    }

    #[test]
    fn phantom_average_is_between_extremes() {
        let mesh = generate_disk_mesh(3);
        let sigma = ConductivityField::from_phantom(&mesh, &default_paired_circles(2.0)).unwrap();
        assert!(sigma.values().iter().all(|v| (1.0..=2.0).contains(v)));
        assert!(sigma.values().iter().any(|v| *v > 1.0 && *v < 2.0));
    }

    #[test]
    fn cem_large_impedance_limit() {
        let mesh = generate_disk_mesh(3);
        let sigma = ConductivityField::constant(&mesh, 1.0).unwrap();
        let layout = make_layout(8, 0.3, 0.0, 0).unwrap();
        let ops = ElectrodeOps::new(&layout, grid()).unwrap();
        let j = ops.q_values(&BoundaryFunction::basis(grid(), 1).unwrap()).unwrap();
        let z = 1e4;
        let u = solve_cem(&mesh, &sigma, &layout, z, &j, grid()).unwrap();
        for (a, b) in u.values().iter().zip(j.values()) {
            assert!((a / z - b).abs() < 1e-3 * j.norm(), "{a} {b}");
        }
    }

    #[test]
    fn cem_rotation_equivariance() {
        let mesh = generate_disk_mesh(4);
        let sigma = ConductivityField::constant(&mesh, 1.0).unwrap();
        let layout = make_layout(8, TAU / 16.0, 0.0, 0).unwrap();
        let len = ElectrodeOps::new(&layout, grid()).unwrap().electrode_lengths()[0];
        let mut j = vec![0.0; 8];
        j[0] = 1.0 / len;
        j[1] = -1.0 / len;
        let u0 = solve_cem(&mesh, &sigma, &layout, 0.01, &ElectrodeVector(j.clone()), grid()).unwrap();
        // rotating by two pitches (a quarter turn) is a mesh symmetry
        j.rotate_right(2);
        let u1 = solve_cem(&mesh, &sigma, &layout, 0.01, &ElectrodeVector(j), grid()).unwrap();
        let mut rotated = u0.0.clone();
        rotated.rotate_right(2);
        for (a, b) in rotated.iter().zip(u1.values()) {
            assert!((a - b).abs() < 1e-9 * u0.norm());
        }
    }

    #[test]
    fn ecm_equals_projected_continuum() {
        let mesh = generate_disk_mesh(3);
        let sigma = ConductivityField::from_phantom(&mesh, &default_paired_circles(2.0)).unwrap();
        let layout = make_layout(16, TAU / 32.0, 0.0, 4).unwrap();
        let basis = TrigBasis::new(8).unwrap();
        let ecm = simulate_dataset(Model::Ecm, &mesh, &sigma, Some(&layout), basis, grid(), None).unwrap();
        let ops = ElectrodeOps::new(&layout, grid()).unwrap();
        let solver = ContinuumSolver::new(&mesh, &sigma, grid()).unwrap();
        let table = BasisTable::new(basis, grid()).unwrap();
        for (i, u) in ecm.voltages.iter().enumerate() {
            let q = ops.project_q(&table.function(i)).unwrap();
            let direct = ops.electrode_means(&solver.solve(&q).unwrap()).unwrap();
            assert_eq!(direct, *u);
        }
    }

    #[test]
    fn noise_is_seeded_and_scaled() {
        let mesh = generate_disk_mesh(2);
        let sigma = ConductivityField::constant(&mesh, 1.0).unwrap();
        let layout = make_layout(16, TAU / 32.0, 0.0, 0).unwrap();
        let basis = TrigBasis::new(4).unwrap();
        let ds = simulate_dataset(Model::Ecm, &mesh, &sigma, Some(&layout), basis, grid(), None).unwrap();
        assert_eq!(add_relative_noise(&ds, 0.0, 1).unwrap().voltages, ds.voltages);
        let a = add_relative_noise(&ds, 0.01, 7).unwrap();
        let b = add_relative_noise(&ds, 0.01, 7).unwrap();
        let c = add_relative_noise(&ds, 0.01, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.voltages, c.voltages);
        for (noisy, clean) in a.voltages.iter().zip(&ds.voltages) {
            let d: Vec<f64> = noisy.values().iter().zip(clean.values()).map(|(x, y)| x - y).collect();
            let rel = d.iter().map(|x| x * x).sum::<f64>().sqrt() / clean.norm();
            assert!(rel > 1e-4 && rel < 0.05, "{rel}");
        }
    }

    #[test]
    fn dataset_round_trip() {
        let mesh = generate_disk_mesh(2);
        let sigma = ConductivityField::constant(&mesh, 1.0).unwrap();
        let basis = TrigBasis::new(4).unwrap();
        let dir = std::env::temp_dir().join(format!("eit-ds-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let cm = simulate_dataset(Model::Cm, &mesh, &sigma, None, basis, grid(), None).unwrap();
        let path = dir.join("cm.json");
        cm.write(&path).unwrap();
        assert_eq!(VoltageDataset::read(&path).unwrap(), cm);
        let layout = make_layout(8, 0.3, 0.0, 2).unwrap();
        let cem = simulate_dataset(Model::Cem, &mesh, &sigma, Some(&layout), basis, grid(), Some(0.01)).unwrap();
        let path = dir.join("cem.json");
        cem.write(&path).unwrap();
        assert_eq!(VoltageDataset::read(&path).unwrap(), cem);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn analytic_unit_entries() {
        let basis = TrigBasis::new(16).unwrap();
        let r = analytic_nd_unit(basis);
        assert_eq!(r.get(0, 0), 1.0 / 8.0);
        assert_eq!(r.get(7, 7), 1.0);
        assert_eq!(r.get(3, 4), 0.0);
    }
}

//! Piecewise-linear finite elements on a disk mesh.

use std::f64::consts::TAU;

use crate::boundary::{BoundaryFunction, ElectrodeOps, ElectrodeVector};
use crate::geometry::{Arc, ElectrodeLayout, Mesh, QuadratureGrid};
use crate::linalg::SparseLu;
use crate::{Error, Result};

/// Linear interpolation from boundary node values to the quadrature grid,
/// parameterized by angle. Its transpose (weighted by the grid rule) turns
/// grid Neumann data into a load vector, so the two transfers are adjoint.
#[derive(Clone, Debug)]
pub(crate) struct BoundaryTransfer {
    grid: QuadratureGrid,
    /// `(node_a, node_b, t)` per grid point: value = (1-t)·u_a + t·u_b.
    stencil: Vec<(usize, usize, f64)>,
}

impl BoundaryTransfer {
    pub fn new(mesh: &Mesh, grid: QuadratureGrid) -> Self {
        let ids = mesh.boundary_nodes();
        let ang = mesh.boundary_angles();
        let nb = ids.len();
        let mut stencil = Vec::with_capacity(grid.len());
        let mut j = 0usize;
        for theta in grid.angles() {
            // boundary edge [ang[j], ang[j+1]) containing theta, cyclically
            while j + 1 < nb && ang[j + 1] <= theta {
                j += 1;
            }
            let (a, lo) = if theta < ang[0] {
                (nb - 1, ang[nb - 1] - TAU)
            } else {
                (j, ang[j])
            };
            let (b, hi) = if a + 1 < nb {
                (a + 1, ang[a + 1])
            } else {
                (0, ang[0] + TAU)
            };
            let t = (theta - lo) / (hi - lo);
            stencil.push((ids[a], ids[b], t));
        }
        Self { grid, stencil }
    }

    pub fn grid(&self) -> QuadratureGrid {
        self.grid
    }

    pub fn trace(&self, u: &[f64]) -> BoundaryFunction {
        let values = self
            .stencil
            .iter()
            .map(|&(a, b, t)| (1.0 - t) * u[a] + t * u[b])
            .collect();
        BoundaryFunction::new(self.grid, values).expect("stencil matches grid")
    }

    /// `f_i = Σ_k w ψ_k T_{k,i}`.
    pub fn load(&self, psi: &BoundaryFunction, n: usize) -> Vec<f64> {
        let w = self.grid.weight();
        let mut f = vec![0.0; n];
        for (&(a, b, t), v) in self.stencil.iter().zip(psi.values()) {
            f[a] += w * (1.0 - t) * v;
            f[b] += w * t * v;
        }
        f
    }

    /// Gauge functional: `w_i` with `Σ_i w_i u_i = ∫ trace(u) ds` on the grid.
    pub fn mean_weights(&self, n: usize) -> Vec<f64> {
        let one = BoundaryFunction::from_fn(self.grid, |_| 1.0);
        self.load(&one, n)
    }
}

/// Stiffness matrix `∫ σ ∇φ_i·∇φ_j` as triplets.
pub(crate) fn stiffness_triplets(mesh: &Mesh, sigma: &[f64]) -> Vec<(usize, usize, f64)> {
    let nodes = mesh.nodes();
    let mut trip = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p: Vec<[f64; 2]> = tri.iter().map(|&i| nodes[i]).collect();
        let area = mesh.triangle_area(t);
        // gradients of barycentric coordinates times 2·area
        let g = [
            [p[1][1] - p[2][1], p[2][0] - p[1][0]],
            [p[2][1] - p[0][1], p[0][0] - p[2][0]],
            [p[0][1] - p[1][1], p[1][0] - p[0][0]],
        ];
        let scale = sigma[t] / (4.0 * area);
        for a in 0..3 {
            for b in 0..3 {
                let v = scale * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                trip.push((tri[a], tri[b], v));
            }
        }
    }
    trip
}

fn check_sigma(mesh: &Mesh, sigma: &[f64]) -> Result<()> {
    if sigma.len() != mesh.num_triangles() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_triangles(),
            got: sigma.len(),
        });
    }
    if let Some(v) = sigma.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Singular(format!(
            "conductivity must be strictly positive, found {v}"
        )));
    }
    Ok(())
}

/// Factorized Neumann problem `∇·σ∇u = 0`, `σ∂νu = ψ`, `∫ u ds = 0`.
///
/// The gauge is a Lagrange multiplier bordering the stiffness matrix.
pub struct ContinuumFem {
    n: usize,
    transfer: BoundaryTransfer,
    lu: SparseLu,
}

impl ContinuumFem {
    pub fn new(mesh: &Mesh, sigma: &[f64], grid: QuadratureGrid) -> Result<Self> {
        check_sigma(mesh, sigma)?;
        let n = mesh.num_nodes();
        let transfer = BoundaryTransfer::new(mesh, grid);
        let mut trip = stiffness_triplets(mesh, sigma);
        for (i, w) in transfer.mean_weights(n).into_iter().enumerate() {
            if w != 0.0 {
                trip.push((i, n, w));
                trip.push((n, i, w));
            }
        }
        let lu = SparseLu::new(n + 1, &trip)?;
        Ok(Self { n, transfer, lu })
    }

    pub fn grid(&self) -> QuadratureGrid {
        self.transfer.grid()
    }

    /// Nodal solution for grid Neumann data (mean-freeness is the caller's
    /// responsibility).
    pub fn solve_nodal(&self, psi: &BoundaryFunction) -> Result<Vec<f64>> {
        let mut rhs = self.transfer.load(psi, self.n);
        rhs.push(0.0);
        let mut u = self.lu.solve(&rhs)?;
        u.truncate(self.n);
        Ok(u)
    }

    pub fn trace(&self, u: &[f64]) -> BoundaryFunction {
        self.transfer.trace(u)
    }
}

/// Overlaps of the angular interval `[lo, hi]` with an arc, as sub-intervals.
fn arc_overlaps(lo: f64, hi: f64, arc: &Arc) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for shift in [-TAU, 0.0, TAU] {
        let a = arc.start + shift;
        let b = a + arc.length;
        let (s, e) = (lo.max(a), hi.min(b));
        if e > s {
            out.push((s, e));
        }
    }
    out
}

/// Electrode boundary integrals on the mesh polygon.
struct ElectrodeIntegrals {
    /// `∫_{E_m} φ_i φ_j ds` triplets per electrode.
    mass: Vec<Vec<(usize, usize, f64)>>,
    /// `∫_{E_m} φ_i ds` per electrode.
    load: Vec<Vec<(usize, f64)>>,
    length: Vec<f64>,
}

fn electrode_integrals(mesh: &Mesh, layout: &ElectrodeLayout) -> ElectrodeIntegrals {
    let ids = mesh.boundary_nodes();
    let ang = mesh.boundary_angles();
    let nodes = mesh.nodes();
    let nb = ids.len();
    let m = layout.num_electrodes();
    let mut out = ElectrodeIntegrals {
        mass: vec![Vec::new(); m],
        load: vec![Vec::new(); m],
        length: vec![0.0; m],
    };
    for j in 0..nb {
        let (a, b) = (ids[j], ids[(j + 1) % nb]);
        let lo = ang[j];
        let hi = if j + 1 < nb { ang[j + 1] } else { ang[0] + TAU };
        let chord = (nodes[b][0] - nodes[a][0]).hypot(nodes[b][1] - nodes[a][1]);
        for (e, arc) in layout.electrodes().iter().enumerate() {
            for (s, f) in arc_overlaps(lo, hi, arc) {
                let t0 = (s - lo) / (hi - lo);
                let t1 = (f - lo) / (hi - lo);
                let int = |g: &dyn Fn(f64) -> f64| chord * (g(t1) - g(t0));
                let la = int(&|t| t - 0.5 * t * t);
                let lb = int(&|t| 0.5 * t * t);
                let maa = int(&|t| -(1.0 - t).powi(3) / 3.0);
                let mbb = int(&|t| t.powi(3) / 3.0);
                let mab = int(&|t| 0.5 * t * t - t.powi(3) / 3.0);
                out.mass[e].extend_from_slice(&[(a, a, maa), (b, b, mbb), (a, b, mab), (b, a, mab)]);
                out.load[e].extend_from_slice(&[(a, la), (b, lb)]);
                out.length[e] += la + lb;
            }
        }
    }
    out
}

/// Factorized complete electrode model with constant contact impedance `z`.
///
/// Unknowns are the nodal potential, the electrode voltages and a gauge
/// multiplier enforcing `∫ u ds = 0`.
pub struct CemFem {
    n: usize,
    m: usize,
    lu: SparseLu,
    /// Discrete electrode lengths on the quadrature grid.
    electrode_len: Vec<f64>,
    /// Electrode lengths along the mesh boundary.
    mesh_len: Vec<f64>,
}

impl CemFem {
    pub fn new(mesh: &Mesh, sigma: &[f64], layout: &ElectrodeLayout, z: f64, grid: QuadratureGrid) -> Result<Self> {
        check_sigma(mesh, sigma)?;
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "contact impedance must be positive, got {z}"
            )));
        }
        let n = mesh.num_nodes();
        let m = layout.num_electrodes();
        let ints = electrode_integrals(mesh, layout);
        if let Some(e) = ints.length.iter().position(|&l| l <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "electrode {e} does not overlap the mesh boundary"
            )));
        }
        let mut trip = stiffness_triplets(mesh, sigma);
        for e in 0..m {
            for &(i, j, v) in &ints.mass[e] {
                trip.push((i, j, v / z));
            }
            for &(i, v) in &ints.load[e] {
                trip.push((i, n + e, -v / z));
                trip.push((n + e, i, -v / z));
            }
            trip.push((n + e, n + e, ints.length[e] / z));
        }
        let transfer = BoundaryTransfer::new(mesh, grid);
        let gauge = n + m;
        for (i, w) in transfer.mean_weights(n).into_iter().enumerate() {
            if w != 0.0 {
                trip.push((i, gauge, w));
                trip.push((gauge, i, w));
            }
        }
        let lu = SparseLu::new(n + m + 1, &trip)?;
        let ops = ElectrodeOps::new(layout, grid)?;
        Ok(Self {
            n,
            m,
            lu,
            electrode_len: ops.electrode_lengths().to_vec(),
            mesh_len: ints.length,
        })
    }

    pub fn num_electrodes(&self) -> usize {
        self.m
    }

    /// Electrode voltages for current densities `J`.
    ///
    /// Mean-freeness is checked with the grid lengths; the injected currents
    /// use the mesh lengths, `I_m = |E_m|_h J_m`, so that a uniform density
    /// balances the contact term exactly.
    pub fn solve(&self, j: &ElectrodeVector) -> Result<ElectrodeVector> {
        if j.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: j.len(),
            });
        }
        let total: f64 = j.values().iter().zip(&self.electrode_len).map(|(a, l)| a * l).sum();
        let scale: f64 = j
            .values()
            .iter()
            .zip(&self.electrode_len)
            .map(|(a, l)| (a * l).abs())
            .sum();
        if total.abs() > 1e-10 * scale + 1e-14 {
            return Err(Error::NotMeanFree(total));
        }
        let mut rhs = vec![0.0; self.n + self.m + 1];
        for (e, (a, l)) in j.values().iter().zip(&self.mesh_len).enumerate() {
            rhs[self.n + e] = a * l;
        }
        let x = self.lu.solve(&rhs)?;
        Ok(ElectrodeVector(x[self.n..self.n + self.m].to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_disk_mesh, make_layout};

    #[test]
    fn transfer_is_exact_for_linear_data() {
        let mesh = generate_disk_mesh(3);
        let grid = QuadratureGrid::new(256).unwrap();
        let tr = BoundaryTransfer::new(&mesh, grid);
        let u: Vec<f64> = (0..mesh.num_nodes()).map(|i| i as f64).collect();
        let trace = tr.trace(&u);
        // grid points between two boundary nodes stay within their values
        for ((a, b, t), v) in tr.stencil.iter().zip(trace.values()) {
            assert!((0.0..=1.0).contains(t));
            let (lo, hi) = (u[*a].min(u[*b]), u[*a].max(u[*b]));
            assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
        let w = tr.mean_weights(mesh.num_nodes());
        assert!((w.iter().sum::<f64>() - TAU).abs() < 1e-12);
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let mesh = generate_disk_mesh(2);
        let sigma = vec![1.5; mesh.num_triangles()];
        let mut row = vec![0.0; mesh.num_nodes()];
        for (i, _, v) in stiffness_triplets(&mesh, &sigma) {
            row[i] += v;
        }
        assert!(row.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn electrode_lengths_match_arcs() {
        let mesh = generate_disk_mesh(5);
        let layout = make_layout(16, TAU / 32.0, 0.0, 4).unwrap();
        let ints = electrode_integrals(&mesh, &layout);
        for l in ints.length {
            // chord vs arc discrepancy only
            assert!((l - layout.width()).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mesh = generate_disk_mesh(1);
        let grid = QuadratureGrid::new(64).unwrap();
        let mut sigma = vec![1.0; mesh.num_triangles()];
        sigma[3] = 0.0;
        assert!(matches!(
            ContinuumFem::new(&mesh, &sigma, grid),
            Err(Error::Singular(_))
        ));
        let layout = make_layout(4, 0.3, 0.0, 0).unwrap();
        let sigma = vec![1.0; mesh.num_triangles()];
        assert!(CemFem::new(&mesh, &sigma, &layout, 0.0, grid).is_err());
    }
}

//! Neumann-to-Dirichlet matrices, the vectorized `Ψ` system and the change
//! of basis for pairwise injection data.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boundary::{BasisTable, BoundaryFunction, ElectrodeOps, ElectrodeVector, TrigBasis};
use crate::forward::{Pattern, VoltageDataset};
use crate::geometry::ElectrodeLayout;
use crate::linalg::{lstsq_min_norm, numerical_rank, to_mat};
use crate::{Error, Result};

/// Relative singular value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NdKind {
    Absolute,
    Difference,
}

/// Origin of an ND matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Full-boundary inputs and traces.
    Full,
    /// Partial-boundary inputs or electrode data.
    Partial,
    /// Output of the regularized completion.
    Approximated,
}

/// `N×N` matrix with entry `(n, ℓ) = (R φ_n, φ_ℓ)`, stored row-major in the
/// ascending basis order.
#[derive(Clone, Debug, PartialEq)]
pub struct NdMatrix {
    basis: TrigBasis,
    entries: Vec<f64>,
    kind: NdKind,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    n: usize,
    kind: NdKind,
    provenance: Provenance,
    layout_hash: Option<String>,
}

impl NdMatrix {
    pub fn new(basis: TrigBasis, entries: Vec<f64>, kind: NdKind, provenance: Provenance) -> Result<Self> {
        let n = basis.len();
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: entries.len(),
            });
        }
        Ok(Self {
            basis,
            entries,
            kind,
            provenance,
        })
    }

    pub fn zeros(basis: TrigBasis, kind: NdKind, provenance: Provenance) -> Self {
        let n = basis.len();
        Self {
            basis,
            entries: vec![0.0; n * n],
            kind,
            provenance,
        }
    }

    pub fn basis(&self) -> TrigBasis {
        self.basis
    }

    pub fn size(&self) -> usize {
        self.basis.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn kind(&self) -> NdKind {
        self.kind
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.size() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.size();
        &self.entries[row * n..(row + 1) * n]
    }

    /// `(R x)_n = Σ_ℓ R_{n,ℓ} x_ℓ`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.size())
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.size();
        let mut t = self.clone();
        for i in 0..n {
            for j in 0..n {
                t.entries[j * n + i] = self.entries[i * n + j];
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest off-diagonal magnitude relative to the largest entry.
    pub fn off_diagonal_ratio(&self) -> f64 {
        let n = self.size();
        let max = self.entries.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let off = (0..n * n)
            .filter(|k| k / n != k % n)
            .fold(0.0f64, |m, k| m.max(self.entries[k].abs()));
        if max == 0.0 {
            0.0
        } else {
            off / max
        }
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        crate::linalg::singular_values(self.size(), self.size(), &self.entries)
    }

    /// Number of singular values above `RANK_TOL·σ_max`.
    pub fn rank(&self) -> Result<usize> {
        numerical_rank(self.size(), self.size(), &self.entries, RANK_TOL)
    }

    /// `‖self − reference‖_F / ‖reference‖_F`.
    pub fn relative_error(&self, reference: &NdMatrix) -> Result<f64> {
        crate::phantoms::relative_l2_error(&self.entries, &reference.entries)
    }

    /// JSON header line followed by one CSV row per matrix row.
    pub fn to_file_string(&self, layout: Option<&ElectrodeLayout>) -> Result<String> {
        let header = FileHeader {
            n: self.size(),
            kind: self.kind,
            provenance: self.provenance,
            layout_hash: layout.map(layout_hash).transpose()?,
        };
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        for i in 0..self.size() {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", row.join(",")).expect("string write");
        }
        Ok(out)
    }

    /// Parses the file format; returns the matrix and its layout hash.
    pub fn from_file_string(text: &str) -> Result<(Self, Option<String>)> {
        let mut lines = text.lines();
        let header: FileHeader = serde_json::from_str(
            lines
                .next()
                .ok_or_else(|| Error::Parse("empty ND matrix file".into()))?,
        )?;
        let basis = TrigBasis::new(header.n)?;
        let mut entries = Vec::with_capacity(header.n * header.n);
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("row {i}: {e}")))?;
            if row.len() != header.n {
                return Err(Error::Parse(format!(
                    "row {i} has {} entries, expected {}",
                    row.len(),
                    header.n
                )));
            }
            entries.extend(row);
        }
        let m = Self::new(basis, entries, header.kind, header.provenance)?;
        Ok((m, header.layout_hash))
    }

    pub fn write(&self, path: &Path, layout: Option<&ElectrodeLayout>) -> Result<()> {
        std::fs::write(path, self.to_file_string(layout)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<(Self, Option<String>)> {
        Self::from_file_string(&std::fs::read_to_string(path)?)
    }
}

/// Hex SHA-256 of the layout's JSON encoding.
pub fn layout_hash(layout: &ElectrodeLayout) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(layout)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// `(f, φ_j)` for `j` in ascending basis order.
pub fn coefficients(f: &BoundaryFunction, basis: TrigBasis) -> Result<Vec<f64>> {
    BasisTable::new(basis, f.grid())?.coefficients(f)
}

/// Entry `(n, ℓ) = (trace_n, φ_ℓ)`; one trace per basis function.
pub fn assemble_nd_matrix(
    traces: &[BoundaryFunction],
    basis: TrigBasis,
    kind: NdKind,
    provenance: Provenance,
) -> Result<NdMatrix> {
    if traces.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            got: traces.len(),
        });
    }
    let Some(first) = traces.first() else {
        return Err(Error::InvalidArgument("no traces".into()));
    };
    let table = BasisTable::new(basis, first.grid())?;
    let mut entries = Vec::with_capacity(basis.len() * basis.len());
    for t in traces {
        entries.extend(table.coefficients(t)?);
    }
    NdMatrix::new(basis, entries, kind, provenance)
}

/// ND matrix from electrode voltages: row `n` holds the coefficients of `L U^n`.
pub fn electrode_nd_matrix(
    voltages: &[ElectrodeVector],
    ops: &ElectrodeOps,
    basis: TrigBasis,
    kind: NdKind,
) -> Result<NdMatrix> {
    let traces = voltages.iter().map(|u| ops.extend_l(u)).collect::<Result<Vec<_>>>()?;
    assemble_nd_matrix(&traces, basis, kind, Provenance::Partial)
}

/// `R_σ − R_1`.
pub fn difference(r_sigma: &NdMatrix, r_one: &NdMatrix) -> Result<NdMatrix> {
    if r_sigma.basis != r_one.basis {
        return Err(Error::DimensionMismatch {
            expected: r_one.size(),
            got: r_sigma.size(),
        });
    }
    if r_sigma.kind != NdKind::Absolute || r_one.kind != NdKind::Absolute {
        return Err(Error::InvalidArgument("difference of difference maps".into()));
    }
    if r_sigma.provenance != r_one.provenance {
        return Err(Error::InvalidArgument(format!(
            "provenance mismatch: {:?} vs {:?}",
            r_sigma.provenance, r_one.provenance
        )));
    }
    let entries = r_sigma.entries.iter().zip(&r_one.entries).map(|(a, b)| a - b).collect();
    NdMatrix::new(r_sigma.basis, entries, NdKind::Difference, r_sigma.provenance)
}

/// Row-major stacking of the rows `r_1, …, r_N`.
pub fn vectorize(r: &NdMatrix) -> Vec<f64> {
    r.entries.clone()
}

/// Inverse of [`vectorize`].
pub fn devectorize(r: &[f64], kind: NdKind, provenance: Provenance) -> Result<NdMatrix> {
    let n = (r.len() as f64).sqrt().round() as usize;
    if n * n != r.len() {
        return Err(Error::InvalidArgument(format!(
            "vector length {} is not a perfect square",
            r.len()
        )));
    }
    NdMatrix::new(TrigBasis::new(n)?, r.to_vec(), kind, provenance)
}

/// Blocks `Ψ_n` with measurements `ĝ_n`.
///
/// `Ψ_n = I_N ⊗ ψ̂_nᵀ` acts on the row-stacked matrix, `Ψ_n vectorize(R) = R ψ̂_n`.
/// The measurement rows `ĝ_n` form the partial matrix, so the data term applies
/// `R` from the left while the partial matrix holds the responses as rows; for
/// the symmetric ND map both describe the same operator.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiSystem {
    n: usize,
    psi_hat: Vec<Vec<f64>>,
    g_hat: Vec<Vec<f64>>,
}

pub fn build_psi_system(psi_hat: Vec<Vec<f64>>, g_hat: Vec<Vec<f64>>) -> Result<PsiSystem> {
    if psi_hat.len() != g_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: psi_hat.len(),
            got: g_hat.len(),
        });
    }
    let Some(n) = psi_hat.first().map(Vec::len) else {
        return Err(Error::InvalidArgument("Ψ system needs at least one pattern".into()));
    };
    if let Some(v) = psi_hat.iter().chain(&g_hat).find(|v| v.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    Ok(PsiSystem { n, psi_hat, g_hat })
}

impl PsiSystem {
    /// Basis size `N`.
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn num_patterns(&self) -> usize {
        self.psi_hat.len()
    }

    pub fn psi_hat(&self) -> &[Vec<f64>] {
        &self.psi_hat
    }

    pub fn g_hat(&self) -> &[Vec<f64>] {
        &self.g_hat
    }

    pub fn rows(&self) -> usize {
        self.n * self.num_patterns()
    }

    pub fn cols(&self) -> usize {
        self.n * self.n
    }

    /// Dense `Ψ`, row-major.
    pub fn matrix(&self) -> Vec<f64> {
        let (n, cols) = (self.n, self.cols());
        let mut a = vec![0.0; self.rows() * cols];
        for (p, psi) in self.psi_hat.iter().enumerate() {
            for j in 0..n {
                let row = p * n + j;
                for (i, s) in psi.iter().enumerate() {
                    a[row * cols + j * n + i] = *s;
                }
            }
        }
        a
    }

    /// Stacked `ĝ_n`.
    pub fn rhs(&self) -> Vec<f64> {
        self.g_hat.concat()
    }

    /// `Ψ r` without forming `Ψ`.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.rows());
        for psi in &self.psi_hat {
            for j in 0..n {
                out.push(psi.iter().enumerate().map(|(i, s)| s * r[j * n + i]).sum());
            }
        }
        out
    }

    /// `Ψᵀ y` without forming `Ψ`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; self.cols()];
        for (p, psi) in self.psi_hat.iter().enumerate() {
            for j in 0..n {
                let yj = y[p * n + j];
                for (i, s) in psi.iter().enumerate() {
                    out[j * n + i] += yj * s;
                }
            }
        }
        out
    }

    /// Numerical rank of `Ψ`.
    pub fn rank(&self) -> Result<usize> {
        numerical_rank(self.rows(), self.cols(), &self.matrix(), RANK_TOL)
    }
}

/// Trigonometric-basis data derived from pairwise injections.
#[derive(Clone, Debug)]
pub struct TrigTransform {
    /// Effective input coefficients per basis function, normalized.
    pub psi_hat: Vec<Vec<f64>>,
    /// Coefficients of `L ΔU^n` for the transformed, normalized data.
    pub g_hat: Vec<Vec<f64>>,
    /// Measurement data re-expressed for trigonometric inputs.
    pub measured: VoltageDataset,
    /// Background data re-expressed for trigonometric inputs.
    pub background: VoltageDataset,
    /// Rank of the pattern matrix.
    pub rank: usize,
}

/// Change of basis from pairwise injections to trigonometric inputs.
///
/// The current densities `Qφ_n` on the electrodes are written as least
/// squares combinations of the injected patterns and the voltages are
/// combined accordingly. Effective input coefficients are estimated from the
/// background response through the unit-disk eigenvalues,
/// `ψ̂_n = diag(|j|)·coeffs(L U_bg)`, and every pattern is scaled so that
/// `(ψ̂_n)_n = 1`.
pub fn pairwise_to_trig(ds: &VoltageDataset, background: &VoltageDataset) -> Result<TrigTransform> {
    let layout = ds
        .layout
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("pairwise data needs a layout".into()))?;
    if background.layout.as_ref() != Some(layout) || background.patterns != ds.patterns {
        return Err(Error::InvalidArgument(
            "background must share layout and patterns".into(),
        ));
    }
    if ds.patterns.iter().any(|p| !matches!(p, Pattern::Pair { .. })) {
        return Err(Error::InvalidArgument("expected pairwise patterns".into()));
    }
    ds.validate()?;
    background.validate()?;
    let m = layout.num_electrodes();
    let p = ds.len();
    let ops = ElectrodeOps::new(layout, ds.grid)?;
    let table = BasisTable::new(ds.basis, ds.grid)?;

    // pattern matrix: columns are the injected current densities
    let mut pi = vec![0.0; m * p];
    for (c, j) in ds.currents.iter().enumerate() {
        for (r, v) in j.values().iter().enumerate() {
            pi[r * p + c] = *v;
        }
    }
    let rank = numerical_rank(m, p, &pi, RANK_TOL)?;
    if rank < m - 1 {
        return Err(Error::RankDeficient { required: m - 1, rank });
    }
    let pi_mat = to_mat(m, p, &pi);
    let combine = |weights: &[f64], records: &[ElectrodeVector]| {
        let mut out = vec![0.0; m];
        for (w, u) in weights.iter().zip(records) {
            for (o, v) in out.iter_mut().zip(u.values()) {
                *o += w * v;
            }
        }
        ElectrodeVector(out)
    };

    let indices = ds.basis.indices();
    let mut psi_hat = Vec::with_capacity(indices.len());
    let mut g_hat = Vec::with_capacity(indices.len());
    let mut measured = Vec::new();
    let mut bg = Vec::new();
    let mut currents = Vec::new();
    for (pos, &n) in indices.iter().enumerate() {
        let target = ops.q_values(&table.function(pos))?;
        let (w, _) = lstsq_min_norm(&pi_mat, target.values(), RANK_TOL)?;
        let u_bg = combine(&w, &background.voltages);
        let u_sigma = combine(&w, &ds.voltages);
        let coeff_bg = table.coefficients(&ops.extend_l(&u_bg)?)?;
        let mut psi: Vec<f64> = coeff_bg
            .iter()
            .zip(&indices)
            .map(|(c, j)| c * j.unsigned_abs() as f64)
            .collect();
        let norm = psi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let lead = psi[pos];
        let scale = if lead.abs() > 1e-3 * norm {
            1.0 / lead
        } else if norm > 0.0 {
            1.0 / norm
        } else {
            return Err(Error::Singular(format!(
                "background response for basis index {n} vanishes"
            )));
        };
        psi.iter_mut().for_each(|v| *v *= scale);
        let scaled = |u: ElectrodeVector| ElectrodeVector(u.0.into_iter().map(|v| v * scale).collect());
        let u_bg = scaled(u_bg);
        let u_sigma = scaled(u_sigma);
        let delta = ElectrodeVector(u_sigma.values().iter().zip(u_bg.values()).map(|(a, b)| a - b).collect());
        g_hat.push(table.coefficients(&ops.extend_l(&delta)?)?);
        psi_hat.push(psi);
        currents.push(ElectrodeVector(target.0.iter().map(|v| v * scale).collect()));
        measured.push(u_sigma);
        bg.push(u_bg);
    }
    let make = |voltages: Vec<ElectrodeVector>, src: &VoltageDataset| VoltageDataset {
        patterns: indices.iter().map(|&n| Pattern::Trig { n }).collect(),
        currents: currents.clone(),
        voltages,
        ..src.clone()
    };
    Ok(TrigTransform {
        psi_hat,
        g_hat,
        measured: make(measured, ds),
        background: make(bg, background),
        rank,
    })
}

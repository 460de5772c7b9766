//! Trace recovery from electrode voltages and the regularized approximation
//! of the full-boundary ND matrix.
//!
//! The pipeline has three steps: recover continuum traces `g'_n` from the
//! voltage differences by Tikhonov regularization of `LP g' ≈ U`, assemble
//! the `Ψ` system from the known partial inputs `ψ̂_n = coeffs(Qφ_n)`, and
//! solve `min ‖Ψr − g‖² + β‖r − S r^Γ‖²` with the measured partial matrix
//! as anchor `r^Γ`.

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::boundary::{inner_product, BasisTable, BoundaryFunction, ElectrodeOps, ElectrodeVector};
use crate::forward::{Model, Pattern, VoltageDataset};
use crate::linalg::{conjugate_gradient, lstsq_min_norm, to_mat, IterStats};
use crate::ndmap::{
    build_psi_system, devectorize, electrode_nd_matrix, vectorize, NdKind, NdMatrix, Provenance, PsiSystem, RANK_TOL,
};
use crate::{Error, Result};

/// Space in which the recovered trace is sought.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceSpace {
    /// Span of the trigonometric basis used for the ND matrix.
    Basis,
    /// All functions on the quadrature grid.
    Grid,
}

/// Weight matrix `S` in the penalty `β‖r − S r^Γ‖²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Weight {
    Identity,
    /// Diagonal of `S`, one entry per vectorized coefficient.
    Diagonal {
        values: Vec<f64>,
    },
}

impl Weight {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        match self {
            Weight::Identity => Ok(r.to_vec()),
            Weight::Diagonal { values } => {
                if values.len() != r.len() {
                    return Err(Error::DimensionMismatch {
                        expected: r.len(),
                        got: values.len(),
                    });
                }
                if values.contains(&0.0) {
                    return Err(Error::InvalidArgument("weight matrix must have full rank".into()));
                }
                Ok(r.iter().zip(values).map(|(a, b)| a * b).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionConfig {
    /// Trace regularization `α > 0`.
    pub alpha: f64,
    /// ND regularization `β ≥ 0`.
    pub beta: f64,
    pub weight: Weight,
    pub trace_space: TraceSpace,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-2,
            beta: 0.06,
            weight: Weight::Identity,
            trace_space: TraceSpace::Basis,
            cg_tol: 1e-10,
            cg_max_iter: 500,
        }
    }
}

impl CompletionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be ≥ 0, got {}", self.beta)));
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iter == 0 {
            return Err(Error::InvalidArgument("invalid CG settings".into()));
        }
        Ok(())
    }
}

/// Normal-equation operator `g ↦ Q(LP g) + α g` on grid functions.
pub fn trace_operator(ops: &ElectrodeOps, alpha: f64, g: &BoundaryFunction) -> Result<BoundaryFunction> {
    let mut out = ops.project_q(&ops.extend_p(g)?)?;
    for (o, v) in out.values_mut().iter_mut().zip(g.values()) {
        *o += alpha * v;
    }
    Ok(out)
}

/// Minimizer of `‖LP g' − L U‖² + α‖g'‖²`, i.e. the solution of
/// `(QLP + αI) g' = Q L U`, by conjugate gradients.
///
/// With [`TraceSpace::Basis`] the equation is solved in the span of `table`'s
/// basis (Galerkin projection); with [`TraceSpace::Grid`] on all grid
/// functions. The result is shifted to zero mean.
pub fn recover_trace(
    u: &ElectrodeVector,
    ops: &ElectrodeOps,
    table: &BasisTable,
    cfg: &CompletionConfig,
) -> Result<(BoundaryFunction, IterStats)> {
    cfg.validate()?;
    let rhs = ops.project_q(&ops.extend_l(u)?)?;
    let alpha = cfg.alpha;
    match cfg.trace_space {
        TraceSpace::Grid => {
            let grid = ops.grid();
            let w = grid.weight();
            let apply = |x: &[f64]| {
                let g = BoundaryFunction::new(grid, x.to_vec()).expect("grid length");
                trace_operator(ops, alpha, &g).expect("same grid").into_values()
            };
            let inner = |a: &[f64], b: &[f64]| w * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let (x, stats) = conjugate_gradient(apply, inner, rhs.values(), cfg.cg_tol, cfg.cg_max_iter)?;
            Ok((BoundaryFunction::new(grid, x)?.mean_free(), stats))
        }
        TraceSpace::Basis => {
            let b = table.coefficients(&rhs)?;
            let apply = |c: &[f64]| {
                let g = table.synthesize(c).expect("basis length");
                let y = trace_operator(ops, alpha, &g).expect("same grid");
                table.coefficients(&y).expect("same grid")
            };
            let inner = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let (c, stats) = conjugate_gradient(apply, inner, &b, cfg.cg_tol, cfg.cg_max_iter)?;
            Ok((table.synthesize(&c)?.mean_free(), stats))
        }
    }
}

/// Least squares solution of `Ψ r = g` (minimum norm if rank deficient).
#[derive(Clone, Debug)]
pub struct NormalSolution {
    pub matrix: NdMatrix,
    pub rank: usize,
    pub full_rank: bool,
}

pub fn solve_normal_equation(sys: &PsiSystem) -> Result<NormalSolution> {
    let a = to_mat(sys.rows(), sys.cols(), &sys.matrix());
    let (r, rank) = lstsq_min_norm(&a, &sys.rhs(), RANK_TOL)?;
    Ok(NormalSolution {
        matrix: devectorize(&r, NdKind::Difference, Provenance::Approximated)?,
        rank,
        full_rank: rank == sys.cols(),
    })
}

/// Diagonal ND matrix from a single pattern when `R` is known to be
/// diagonal: `R_jj = (ĝ)_j / (ψ̂)_j`.
pub fn diagonal_from_single_pattern(psi_hat: &[f64], g_hat: &[f64]) -> Result<NdMatrix> {
    if psi_hat.len() != g_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: psi_hat.len(),
            got: g_hat.len(),
        });
    }
    let n = psi_hat.len();
    let scale = psi_hat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut entries = vec![0.0; n * n];
    for (j, (p, g)) in psi_hat.iter().zip(g_hat).enumerate() {
        if p.abs() <= RANK_TOL * scale || *p == 0.0 {
            return Err(Error::RankDeficient {
                required: n,
                rank: psi_hat.iter().filter(|v| v.abs() > RANK_TOL * scale).count(),
            });
        }
        entries[j * n + j] = g / p;
    }
    devectorize(&entries, NdKind::Difference, Provenance::Approximated)
}

/// Dense `ΨᵀΨ = I ⊗ G` with `G = Σ_n ψ̂_n ψ̂_nᵀ`.
fn gram(sys: &PsiSystem) -> Mat<f64> {
    let n = sys.size();
    let mut g = vec![0.0; n * n];
    for psi in sys.psi_hat() {
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] += psi[i] * psi[j];
            }
        }
    }
    Mat::from_fn(
        n * n,
        n * n,
        |r, c| {
            if r / n == c / n {
                g[(r % n) * n + c % n]
            } else {
                0.0
            }
        },
    )
}

/// `r = (ΨᵀΨ + βI)⁻¹ (Ψᵀg + β S r^Γ)` by dense Cholesky.
pub fn approximate_nd(sys: &PsiSystem, r_gamma: &[f64], cfg: &CompletionConfig) -> Result<NdMatrix> {
    let dim = sys.cols();
    if r_gamma.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: r_gamma.len(),
        });
    }
    let anchor = cfg.weight.apply(r_gamma)?;
    let mut a = gram(sys);
    for i in 0..dim {
        a[(i, i)] += cfg.beta;
    }
    let atg = sys.apply_transpose(&sys.rhs());
    let b = Mat::from_fn(dim, 1, |i, _| atg[i] + cfg.beta * anchor[i]);
    let llt = a
        .llt(Side::Lower)
        .map_err(|_| Error::Singular("ΨᵀΨ + βI is not positive definite; use β > 0".into()))?;
    let x = llt.solve(&b);
    let r: Vec<f64> = (0..dim).map(|i| x[(i, 0)]).collect();
    devectorize(&r, NdKind::Difference, Provenance::Approximated)
}

/// Norm of `ΨᵀΨr + βr − (Ψᵀg + βSr^Γ)` and of the right-hand side.
pub fn optimality_residual(
    sys: &PsiSystem,
    r_gamma: &[f64],
    cfg: &CompletionConfig,
    r: &NdMatrix,
) -> Result<(f64, f64)> {
    let r = vectorize(r);
    let anchor = cfg.weight.apply(r_gamma)?;
    let lhs = sys.apply_transpose(&sys.apply(&r));
    let atg = sys.apply_transpose(&sys.rhs());
    let mut res = 0.0;
    for i in 0..r.len() {
        let d = lhs[i] + cfg.beta * r[i] - atg[i] - cfg.beta * anchor[i];
        res += d * d;
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = norm(&atg) + cfg.beta * norm(&anchor);
    Ok((res.sqrt(), scale))
}

/// `‖Ψr − g‖` and `‖r − S r^Γ‖` for a candidate.
pub fn tradeoff(sys: &PsiSystem, r_gamma: &[f64], cfg: &CompletionConfig, r: &NdMatrix) -> Result<(f64, f64)> {
    let r = vectorize(r);
    let anchor = cfg.weight.apply(r_gamma)?;
    let fit: f64 = sys
        .apply(&r)
        .iter()
        .zip(sys.rhs())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let pen: f64 = r.iter().zip(&anchor).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((fit.sqrt(), pen.sqrt()))
}

/// One point of a β sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub beta: f64,
    pub error: f64,
}

/// Relative error to `reference` for each β; returns the points and the
/// index of the smallest error.
pub fn beta_sweep(
    sys: &PsiSystem,
    r_gamma: &[f64],
    cfg: &CompletionConfig,
    betas: &[f64],
    reference: &NdMatrix,
) -> Result<(Vec<SweepPoint>, usize)> {
    if betas.is_empty() {
        return Err(Error::InvalidArgument("empty β sweep".into()));
    }
    let mut points = Vec::with_capacity(betas.len());
    for &beta in betas {
        let c = CompletionConfig { beta, ..cfg.clone() };
        let r = approximate_nd(sys, r_gamma, &c)?;
        points.push(SweepPoint {
            beta,
            error: r.relative_error(reference)?,
        });
    }
    let best = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.error.total_cmp(&b.1.error))
        .map(|(i, _)| i)
        .expect("non-empty");
    Ok((points, best))
}

/// Log-spaced β values `10^lo … 10^hi`.
pub fn log_betas(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![10f64.powf(lo)];
    }
    (0..count)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Everything produced by the completion pipeline.
#[derive(Clone, Debug)]
pub struct CompletionOutput {
    /// Recovered difference traces `g'_n`.
    pub traces: Vec<BoundaryFunction>,
    /// Coefficients of the recovered traces, rows `ĝ_n`.
    pub recovered: NdMatrix,
    /// Measured partial difference ND matrix used as the anchor: rows are the
    /// coefficients of the extended electrode voltages `L ΔU_n`, or `ĝ_n` for
    /// continuum data.
    pub partial: NdMatrix,
    pub system: PsiSystem,
    pub approximated: NdMatrix,
    /// Total conjugate gradient iterations over all patterns.
    pub cg_iterations: usize,
    /// Seconds spent in trace recovery and in the regularized solve.
    pub seconds: [f64; 2],
}

fn check_pair(ds: &VoltageDataset, background: &VoltageDataset) -> Result<()> {
    ds.validate()?;
    background.validate()?;
    if ds.model != background.model
        || ds.basis != background.basis
        || ds.grid != background.grid
        || ds.layout != background.layout
        || ds.patterns != background.patterns
    {
        return Err(Error::InvalidArgument(
            "dataset and background differ in model, basis, grid, layout or patterns".into(),
        ));
    }
    let expected: Vec<Pattern> = ds.basis.indices().into_iter().map(|n| Pattern::Trig { n }).collect();
    if ds.patterns != expected {
        return Err(Error::InvalidArgument(
            "completion expects one trigonometric pattern per basis function".into(),
        ));
    }
    Ok(())
}

/// Steps 2 and 3 of the algorithm: recover difference traces, build the
/// `Ψ` system with `ψ̂_n = coeffs(Qφ_n)` and solve the regularized problem.
///
/// Continuum datasets use their traces directly with `ψ̂_n = e_n`.
pub fn complete_pipeline(
    ds: &VoltageDataset,
    background: &VoltageDataset,
    cfg: &CompletionConfig,
) -> Result<CompletionOutput> {
    check_pair(ds, background)?;
    let table = BasisTable::new(ds.basis, ds.grid)?;
    let psi_hat = match (&ds.model, &ds.layout) {
        (Model::Cm, _) => (0..ds.basis.len())
            .map(|i| (0..ds.basis.len()).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect(),
        (_, Some(layout)) => {
            let ops = ElectrodeOps::new(layout, ds.grid)?;
            (0..ds.basis.len())
                .map(|i| table.coefficients(&ops.project_q(&table.function(i))?))
                .collect::<Result<Vec<_>>>()?
        }
        (_, None) => return Err(Error::InvalidArgument("electrode data without layout".into())),
    };
    complete_with_inputs(ds, background, psi_hat, cfg)
}

/// As [`complete_pipeline`] with explicitly supplied input coefficients.
pub fn complete_with_inputs(
    ds: &VoltageDataset,
    background: &VoltageDataset,
    psi_hat: Vec<Vec<f64>>,
    cfg: &CompletionConfig,
) -> Result<CompletionOutput> {
    cfg.validate()?;
    let table = BasisTable::new(ds.basis, ds.grid)?;
    let start = Instant::now();
    let mut cg_iterations = 0;
    let (traces, measured) = match ds.model {
        Model::Cm => {
            let traces: Vec<BoundaryFunction> = ds
                .traces
                .iter()
                .zip(&background.traces)
                .map(|(a, b)| a.sub(b))
                .collect::<Result<_>>()?;
            (traces, None)
        }
        _ => {
            let layout = ds
                .layout
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("electrode data without layout".into()))?;
            let ops = ElectrodeOps::new(layout, ds.grid)?;
            let deltas: Vec<ElectrodeVector> = ds
                .voltages
                .iter()
                .zip(&background.voltages)
                .map(|(a, b)| ElectrodeVector(a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect()))
                .collect();
            let mut out = Vec::with_capacity(ds.len());
            for delta in &deltas {
                let (g, stats) = recover_trace(delta, &ops, &table, cfg)?;
                cg_iterations += stats.iterations;
                out.push(g);
            }
            let measured = electrode_nd_matrix(&deltas, &ops, ds.basis, NdKind::Difference)?;
            (out, Some(measured))
        }
    };
    let g_hat = traces
        .iter()
        .map(|t| table.coefficients(t))
        .collect::<Result<Vec<_>>>()?;
    let recover_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let recovered = NdMatrix::new(ds.basis, g_hat.concat(), NdKind::Difference, Provenance::Partial)?;
    let partial = measured.unwrap_or_else(|| recovered.clone());
    let system = build_psi_system(psi_hat, g_hat)?;
    let approximated = approximate_nd(&system, &vectorize(&partial), cfg)?;
    Ok(CompletionOutput {
        traces,
        recovered,
        partial,
        system,
        approximated,
        cg_iterations,
        seconds: [recover_secs, start.elapsed().as_secs_f64()],
    })
}

/// Check of the symmetry `(A f, g) = (f, A g)` of the trace operator.
pub fn trace_operator_asymmetry(
    ops: &ElectrodeOps,
    alpha: f64,
    f: &BoundaryFunction,
    g: &BoundaryFunction,
) -> Result<f64> {
    let a = inner_product(&trace_operator(ops, alpha, f)?, g)?;
    let b = inner_product(f, &trace_operator(ops, alpha, g)?)?;
    Ok((a - b).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::TrigBasis;
    use crate::geometry::{make_layout, QuadratureGrid};
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn setup() -> (ElectrodeOps, BasisTable) {
        let grid = QuadratureGrid::new(512).unwrap();
        let layout = make_layout(16, TAU / 32.0, 0.0, 4).unwrap();
        let ops = ElectrodeOps::new(&layout, grid).unwrap();
        let table = BasisTable::new(TrigBasis::new(16).unwrap(), grid).unwrap();
        (ops, table)
    }

    #[test]
    fn zero_data_gives_zero_trace() {
        let (ops, table) = setup();
        for space in [TraceSpace::Basis, TraceSpace::Grid] {
            let cfg = CompletionConfig {
                trace_space: space,
                ..Default::default()
            };
            let (g, _) = recover_trace(&ElectrodeVector(vec![0.0; 12]), &ops, &table, &cfg).unwrap();
            assert!(g.values().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn consistent_data_is_fitted_as_alpha_vanishes() {
        let (ops, table) = setup();
        let g = BoundaryFunction::from_fn(ops.grid(), |t| (t + 0.4).cos() + 0.5 * (2.0 * t).sin());
        let u = ops.electrode_means(&g).unwrap();
        let mut last = f64::INFINITY;
        for alpha in [1e-2, 1e-4, 1e-6] {
            let cfg = CompletionConfig {
                alpha,
                trace_space: TraceSpace::Grid,
                ..Default::default()
            };
            let (rec, _) = recover_trace(&u, &ops, &table, &cfg).unwrap();
            // the zero-mean shift only changes the fit by a constant
            let misfit = ops
                .extend_p(&rec)
                .unwrap()
                .sub(&ops.extend_l(&u).unwrap())
                .unwrap()
                .mean_free()
                .norm();
            assert!(misfit < last);
            last = misfit;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn basis_recovery_is_smooth_and_close() {
        let (_, table) = setup();
        let layout = make_layout(16, TAU / 32.0, 0.0, 0).unwrap();
        let ops = ElectrodeOps::new(&layout, table.grid()).unwrap();
        let g = BoundaryFunction::from_fn(ops.grid(), |t| (t + 0.4).cos() / 2.0);
        let u = ops.electrode_means(&g).unwrap();
        let cfg = CompletionConfig {
            alpha: 1e-4,
            ..Default::default()
        };
        let (rec, _) = recover_trace(&u, &ops, &table, &cfg).unwrap();
        let err = rec.sub(&g).unwrap().norm() / g.norm();
        assert!(err < 0.02, "{err}");
    }

    #[test]
    fn unit_system_returns_transposed_rows() {
        let sys = build_psi_system(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.5, -1.0], vec![2.0, 3.0]],
        )
        .unwrap();
        let s = solve_normal_equation(&sys).unwrap();
        assert!(s.full_rank);
        for (a, b) in s.matrix.entries().iter().zip([0.5, 2.0, -1.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_diagonal_pattern_recovers_eigenvalues() {
        let psi = vec![0.5, -0.25, 2.0, 1.0];
        let c = [0.1, -0.2, 0.3, 0.05];
        let g: Vec<f64> = psi.iter().zip(&c).map(|(p, c)| p * c).collect();
        let sys = build_psi_system(vec![psi], vec![g]).unwrap();
        let s = solve_normal_equation(&sys).unwrap();
        // one pattern only determines the products of each row with ψ̂
        assert!(!s.full_rank);
        let rec = s.matrix;
        for j in 0..4 {
            let applied: f64 = rec.row(j).iter().zip(&sys.psi_hat()[0]).map(|(a, b)| a * b).sum();
            assert!((applied - sys.g_hat()[0][j]).abs() < 1e-12);
        }
        let diag = diagonal_from_single_pattern(&sys.psi_hat()[0], &sys.g_hat()[0]).unwrap();
        for (j, cj) in c.iter().enumerate() {
            assert!((diag.get(j, j) - cj).abs() < 1e-15);
        }
        assert!(diagonal_from_single_pattern(&[1.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn large_beta_returns_anchor() {
        let sys = build_psi_system(
            vec![vec![1.0, 0.2], vec![0.3, 1.0]],
            vec![vec![0.5, -1.0], vec![2.0, 3.0]],
        )
        .unwrap();
        let anchor = vec![1.0, 2.0, 3.0, 4.0];
        let cfg = CompletionConfig {
            beta: 1e12,
            ..Default::default()
        };
        let r = approximate_nd(&sys, &anchor, &cfg).unwrap();
        for (a, b) in r.entries().iter().zip(&anchor) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_beta_rank_deficient_is_rejected() {
        let sys = build_psi_system(vec![vec![1.0, 0.0]], vec![vec![1.0, 1.0]]).unwrap();
        let cfg = CompletionConfig {
            beta: 0.0,
            ..Default::default()
        };
        assert!(matches!(approximate_nd(&sys, &[0.0; 4], &cfg), Err(Error::Singular(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn trace_operator_is_symmetric(
            a in proptest::collection::vec(-1.0f64..1.0, 512),
            b in proptest::collection::vec(-1.0f64..1.0, 512),
        ) {
            let (ops, _) = setup();
            let f = BoundaryFunction::new(ops.grid(), a).unwrap();
            let g = BoundaryFunction::new(ops.grid(), b).unwrap();
            let d = trace_operator_asymmetry(&ops, 0.1, &f, &g).unwrap();
            prop_assert!(d <= 1e-10 * f.norm() * g.norm());
        }

        #[test]
        fn regularization_is_monotone(
            psi in proptest::collection::vec(-1.0f64..1.0, 18),
            g in proptest::collection::vec(-1.0f64..1.0, 18),
            anchor in proptest::collection::vec(-1.0f64..1.0, 4),
        ) {
            let sys = build_psi_system(
                psi.chunks(2).map(<[f64]>::to_vec).collect(),
                g.chunks(2).map(<[f64]>::to_vec).collect(),
            ).unwrap();
            let mut last = (0.0, f64::INFINITY);
            for beta in log_betas(-3.0, 2.0, 12) {
                let cfg = CompletionConfig { beta, ..Default::default() };
                let r = approximate_nd(&sys, &anchor, &cfg).unwrap();
                let (res, scale) = optimality_residual(&sys, &anchor, &cfg, &r).unwrap();
                prop_assert!(res <= 1e-8 * scale.max(1e-300));
                let (fit, pen) = tradeoff(&sys, &anchor, &cfg, &r).unwrap();
                prop_assert!(fit >= last.0 - 1e-10);
                prop_assert!(pen <= last.1 + 1e-10);
                last = (fit, pen);
            }
        }
    }
}

//! The four pipeline stages. Each stage reads its inputs from the run
//! directory and writes its outputs there, so every stage can be rerun on
//! its own.
//!
//! Layout of a run directory:
//!
//! - `data/`: simulated datasets (JSON, continuum traces as CSV sidecars);
//! - `nd/`: ND matrices, recovered traces and the β sweep;
//! - `recon/`: scattering data and conductivity grids as CSV;
//! - `images/`: PNG rasters and the shared color scale;
//! - `tables/`: evaluation tables as CSV and text;
//! - `manifest.json`: stage times and iteration counts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eit_core::boundary::{BasisTable, BoundaryFunction, ElectrodeOps, TrigBasis};
use eit_core::completion::{
    approximate_nd, beta_sweep, complete_pipeline, diagonal_from_single_pattern, CompletionConfig,
};
use eit_core::dbar::{reconstruct_with, scattering_data, DbarSolver, EvalGrid, Reconstruction};
use eit_core::forward::{
    add_relative_noise, simulate_dataset, simulate_projected, ConductivityField, Model, VoltageDataset,
};
use eit_core::geometry::{generate_disk_mesh, generate_graded_disk_mesh, ElectrodeLayout, Mesh, QuadratureGrid};
use eit_core::ndmap::{assemble_nd_matrix, difference, electrode_nd_matrix, vectorize, NdKind, NdMatrix, Provenance};
use eit_core::phantoms::{l2_distance, Phantom};

use crate::config::{describe_layout, Experiment, ExperimentConfig};
use crate::error::{CliError, Result, StageExt};
use crate::image::{write_png, ColorScale};
use crate::manifest::{Manifest, StageRecord};

/// ND matrices reconstructed and evaluated, in output order.
pub const MATRICES: [&str; 3] = ["reference", "partial", "approximated"];

pub struct Run {
    pub cfg: ExperimentConfig,
    pub dir: PathBuf,
    pub workers: usize,
}

impl Run {
    pub fn new(cfg: ExperimentConfig, dir: PathBuf, workers: usize) -> Self {
        Self { cfg, dir, workers }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn ensure(&self, sub: &str) -> Result<PathBuf> {
        let p = self.dir.join(sub);
        std::fs::create_dir_all(&p).map_err(CliError::io(&p))?;
        Ok(p)
    }

    fn write(&self, rel: &str, text: &str, rec: &mut StageRecord) -> Result<()> {
        let p = self.path(rel);
        std::fs::write(&p, text).map_err(CliError::io(&p))?;
        rec.output(rel);
        Ok(())
    }

    fn mesh(&self) -> Mesh {
        if self.cfg.mesh.graded {
            generate_graded_disk_mesh(self.cfg.mesh.level)
        } else {
            generate_disk_mesh(self.cfg.mesh.level)
        }
    }

    fn basis(&self) -> Result<TrigBasis> {
        TrigBasis::new(self.cfg.model.basis_size).stage("setup")
    }

    fn grid(&self) -> Result<QuadratureGrid> {
        QuadratureGrid::new(self.cfg.model.quadrature).stage("setup")
    }

    fn phantom(&self) -> Result<Phantom> {
        self.cfg.phantom().stage("setup")
    }

    fn layout(&self, removed: usize) -> Result<ElectrodeLayout> {
        self.cfg.layout_with(removed).stage("setup")
    }

    fn save(&self, ds: &VoltageDataset, rel: &str, rec: &mut StageRecord) -> Result<()> {
        ds.write(&self.path(rel)).stage("write dataset")?;
        rec.output(rel);
        Ok(())
    }

    fn load(&self, rel: &str) -> Result<VoltageDataset> {
        let p = self.path(rel);
        if !p.exists() {
            return Err(CliError::Io {
                path: p,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "run the simulate stage first"),
            });
        }
        VoltageDataset::read(&p).stage("read dataset")
    }

    fn save_nd(&self, m: &NdMatrix, name: &str, layout: Option<&ElectrodeLayout>, rec: &mut StageRecord) -> Result<()> {
        let rel = format!("nd/{name}.txt");
        m.write(&self.path(&rel), layout).stage("write ND matrix")?;
        rec.output(rel);
        Ok(())
    }

    fn load_nd(&self, name: &str) -> Result<Option<NdMatrix>> {
        let p = self.path(&format!("nd/{name}.txt"));
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(NdMatrix::read(&p).stage("read ND matrix")?.0))
    }

    fn record(&self, stage: &str, rec: &StageRecord) -> Result<()> {
        let mut m = Manifest::load_or_default(&self.dir)?;
        m.seed = self.cfg.noise.seed;
        m.workers = self.workers;
        m.stages.insert(stage.to_string(), rec.clone());
        m.save(&self.dir)
    }

    /// Simulates the measured, background and full-boundary reference datasets.
    pub fn simulate(&self) -> Result<StageRecord> {
        let start = Instant::now();
        let mut rec = StageRecord::default();
        self.ensure("data")?;
        let cfg = &self.cfg;
        let (basis, grid) = (self.basis()?, self.grid()?);
        let mesh = self.mesh();
        let phantom = self.phantom()?;
        let sigma = ConductivityField::from_phantom(&mesh, &phantom).stage("simulate")?;
        let one = ConductivityField::constant(&mesh, 1.0).stage("simulate")?;
        println!(
            "mesh: {} triangles, {} boundary nodes",
            mesh.num_triangles(),
            mesh.boundary_nodes().len()
        );
        let z = cfg.model.contact_impedance;
        let noisy = |ds: VoltageDataset| -> Result<VoltageDataset> {
            if cfg.noise.level > 0.0 {
                add_relative_noise(&ds, cfg.noise.level, cfg.noise.seed).stage("simulate")
            } else {
                Ok(ds)
            }
        };
        match cfg.experiment {
            Experiment::Completion => {
                let model = cfg.model.kind;
                let layout = self.layout(cfg.layout.removed)?;
                let electrodes = (model != Model::Cm).then_some(&layout);
                if electrodes.is_some() {
                    println!("layout: {}", describe_layout(&layout));
                }
                let zc = (model == Model::Cem).then_some(z);
                let measured = simulate_dataset(model, &mesh, &sigma, electrodes, basis, grid, zc).stage("simulate")?;
                self.save(&noisy(measured)?, "data/measured.json", &mut rec)?;
                let background = simulate_dataset(model, &mesh, &one, electrodes, basis, grid, zc).stage("simulate")?;
                self.save(&background, "data/background.json", &mut rec)?;
            }
            Experiment::SinglePattern => {
                let layout = self.layout(cfg.layout.removed)?;
                println!("layout: {}", describe_layout(&layout));
                let order = [cfg.model.pattern_order];
                let measured = simulate_projected(&mesh, &sigma, &layout, basis, grid, &order).stage("simulate")?;
                self.save(&noisy(measured)?, "data/measured.json", &mut rec)?;
                let background = simulate_projected(&mesh, &one, &layout, basis, grid, &order).stage("simulate")?;
                self.save(&background, "data/background.json", &mut rec)?;
            }
            Experiment::ElectrodeSweep => {
                for &removed in &cfg.sweep.removed {
                    let layout = self.layout(removed)?;
                    let m = layout.num_electrodes();
                    println!("layout: {}", describe_layout(&layout));
                    for model in [Model::Ecm, Model::Cem] {
                        for (tag, s) in [("", &sigma), ("_background", &one)] {
                            let ds = simulate_dataset(model, &mesh, s, Some(&layout), basis, grid, Some(z))
                                .stage("simulate")?;
                            self.save(&ds, &format!("data/m{m}_{model}{tag}.json"), &mut rec)?;
                        }
                    }
                }
            }
        }
        let reference = simulate_dataset(Model::Cm, &mesh, &sigma, None, basis, grid, None).stage("simulate")?;
        self.save(&reference, "data/reference.json", &mut rec)?;
        let reference_bg = simulate_dataset(Model::Cm, &mesh, &one, None, basis, grid, None).stage("simulate")?;
        self.save(&reference_bg, "data/reference_background.json", &mut rec)?;
        rec.seconds = start.elapsed().as_secs_f64();
        self.record("simulate", &rec)?;
        Ok(rec)
    }

    fn reference_nd(&self) -> Result<NdMatrix> {
        let s = self.load("data/reference.json")?;
        let b = self.load("data/reference_background.json")?;
        let assemble =
            |ds: &VoltageDataset| assemble_nd_matrix(&ds.traces, ds.basis, NdKind::Absolute, Provenance::Full);
        difference(&assemble(&s).stage("reference")?, &assemble(&b).stage("reference")?).stage("reference")
    }

    /// Builds the partial and approximated difference ND matrices.
    pub fn complete(&self) -> Result<StageRecord> {
        let start = Instant::now();
        let mut rec = StageRecord::default();
        self.ensure("nd")?;
        let reference = self.reference_nd()?;
        self.save_nd(&reference, "reference", None, &mut rec)?;
        match self.cfg.experiment {
            Experiment::Completion => self.complete_partial(&reference, &mut rec)?,
            Experiment::SinglePattern => self.complete_single(&mut rec)?,
            Experiment::ElectrodeSweep => self.complete_sweep(&mut rec)?,
        }
        rec.value("stage_seconds", start.elapsed().as_secs_f64());
        self.record("complete", &rec)?;
        Ok(rec)
    }

    fn complete_partial(&self, reference: &NdMatrix, rec: &mut StageRecord) -> Result<()> {
        let measured = self.load("data/measured.json")?;
        let background = self.load("data/background.json")?;
        let mut ccfg: CompletionConfig = self.cfg.completion_config();
        let out = complete_pipeline(&measured, &background, &ccfg).stage("completion")?;
        let mut compute = out.seconds[0] + out.seconds[1];
        let mut approximated = out.approximated;
        if let Some(sweep) = &self.cfg.completion.beta_sweep {
            let t = Instant::now();
            let anchor = vectorize(&out.partial);
            let (points, best) =
                beta_sweep(&out.system, &anchor, &ccfg, &sweep.values(), reference).stage("beta sweep")?;
            let mut csv = String::from("beta,error\n");
            for p in &points {
                writeln!(csv, "{:e},{:.12e}", p.beta, p.error).expect("string write");
            }
            self.write("nd/beta_sweep.csv", &csv, rec)?;
            ccfg.beta = points[best].beta;
            let t_solve = Instant::now();
            approximated = approximate_nd(&out.system, &anchor, &ccfg).stage("completion")?;
            compute += t_solve.elapsed().as_secs_f64();
            rec.value("sweep_seconds", t.elapsed().as_secs_f64());
        }
        let layout = measured.layout.as_ref();
        self.save_nd(&out.partial, "partial", layout, rec)?;
        self.save_nd(&out.recovered, "recovered", layout, rec)?;
        self.save_nd(&approximated, "approximated", layout, rec)?;
        let labels: Vec<String> = measured.basis.indices().iter().map(|n| format!("n{n}")).collect();
        self.write("nd/traces.csv", &traces_csv(&labels, &out.traces), rec)?;
        let rank_p = out.partial.rank().stage("rank")?;
        let rank_a = approximated.rank().stage("rank")?;
        println!(
            "completion: beta {:e}, rank {} -> {}, {:.1} ms",
            ccfg.beta,
            rank_p,
            rank_a,
            1e3 * compute
        );
        rec.seconds = compute;
        rec.iterations("trace_cg", out.cg_iterations);
        rec.value("beta", ccfg.beta);
        rec.value("rank_partial", rank_p);
        rec.value("rank_approximated", rank_a);
        Ok(())
    }

    fn complete_single(&self, rec: &mut StageRecord) -> Result<()> {
        let measured = self.load("data/measured.json")?;
        let background = self.load("data/background.json")?;
        let t = Instant::now();
        let layout = measured
            .layout
            .as_ref()
            .ok_or_else(|| CliError::Config("single-pattern data without layout".into()))?;
        let table = BasisTable::new(measured.basis, measured.grid).stage("single pattern")?;
        let ops = ElectrodeOps::new(layout, measured.grid).stage("single pattern")?;
        let input = BoundaryFunction::basis(measured.grid, self.cfg.model.pattern_order)
            .and_then(|f| ops.project_q(&f))
            .and_then(|f| table.coefficients(&f))
            .stage("single pattern")?;
        let response = measured.traces[0]
            .sub(&background.traces[0])
            .and_then(|g| table.coefficients(&g))
            .stage("single pattern")?;
        let diag = diagonal_from_single_pattern(&input, &response).stage("single pattern")?;
        rec.seconds = t.elapsed().as_secs_f64();
        self.save_nd(&diag, "approximated", Some(layout), rec)?;
        println!(
            "single pattern: diagonal ND matrix from Qφ_{}",
            self.cfg.model.pattern_order
        );
        Ok(())
    }

    fn complete_sweep(&self, rec: &mut StageRecord) -> Result<()> {
        for &removed in &self.cfg.sweep.removed {
            let layout = self.layout(removed)?;
            let m = layout.num_electrodes();
            for model in [Model::Ecm, Model::Cem] {
                let s = self.load(&format!("data/m{m}_{model}.json"))?;
                let b = self.load(&format!("data/m{m}_{model}_background.json"))?;
                let ops = ElectrodeOps::new(&layout, s.grid).stage("electrode sweep")?;
                let nd = |ds: &VoltageDataset| electrode_nd_matrix(&ds.voltages, &ops, ds.basis, NdKind::Absolute);
                let d = difference(&nd(&s).stage("electrode sweep")?, &nd(&b).stage("electrode sweep")?)
                    .stage("electrode sweep")?;
                self.save_nd(&d, &format!("m{m}_{model}"), Some(&layout), rec)?;
            }
        }
        Ok(())
    }

    /// D-bar reconstructions of every available difference ND matrix.
    pub fn reconstruct(&self) -> Result<StageRecord> {
        let start = Instant::now();
        let mut rec = StageRecord::default();
        if self.cfg.experiment == Experiment::ElectrodeSweep {
            println!("reconstruct: nothing to do for an electrode sweep");
            self.record("reconstruct", &rec)?;
            return Ok(rec);
        }
        self.ensure("recon")?;
        let dcfg = self.cfg.dbar_config();
        let grid = self.cfg.eval_grid();
        let mut recons: Vec<(&str, Reconstruction)> = Vec::new();
        for name in MATRICES {
            let Some(r) = self.load_nd(name)? else { continue };
            if r.kind() != NdKind::Difference {
                return Err(CliError::Config(format!("nd/{name}.txt is not a difference ND matrix")));
            }
            let t = Instant::now();
            let sc = scattering_data(&r, &dcfg).stage("scattering transform")?;
            self.write(&format!("recon/{name}_scattering.csv"), &sc.to_csv(), &mut rec)?;
            let solver = DbarSolver::new(sc, dcfg.tol, dcfg.max_iter);
            let out = reconstruct_with(&solver, &grid).stage("D-bar")?;
            self.write(&format!("recon/{name}.csv"), &out.to_csv(), &mut rec)?;
            rec.iterations(&format!("{name}_gmres_max"), out.max_iterations);
            rec.value(&format!("{name}_seconds"), t.elapsed().as_secs_f64());
            println!("reconstruct {name}: {:.1} s", t.elapsed().as_secs_f64());
            recons.push((name, out));
        }
        if self.cfg.output.images && !recons.is_empty() {
            self.ensure("images")?;
            let phantom = self.phantom()?;
            let truth = phantom_image(&grid, &phantom);
            let mut images: Vec<(&str, Vec<Option<f64>>)> = vec![("phantom", truth)];
            images.extend(recons.iter().map(|(n, r)| (*n, r.image())));
            let refs: Vec<&[Option<f64>]> = images.iter().map(|(_, i)| i.as_slice()).collect();
            let scale = ColorScale::shared(&refs, 1.0, self.cfg.output.color_range);
            for (name, img) in &images {
                let rel = format!("images/{name}.png");
                write_png(&self.path(&rel), img, grid.size, self.cfg.output.image_scale, &scale)?;
                rec.output(rel);
            }
            let names: Vec<&str> = images.iter().map(|(n, _)| *n).collect();
            let sidecar = serde_json::json!({
                "center": scale.center,
                "half_range": scale.half_range,
                "bounds": scale.bounds(),
                "images": names,
            });
            self.write("images/scale.json", &serde_json::to_string_pretty(&sidecar)?, &mut rec)?;
        }
        rec.seconds = start.elapsed().as_secs_f64();
        self.record("reconstruct", &rec)?;
        Ok(rec)
    }

    /// Error tables against the full-boundary reference.
    pub fn evaluate(&self) -> Result<StageRecord> {
        let start = Instant::now();
        let mut rec = StageRecord::default();
        self.ensure("tables")?;
        let text = match self.cfg.experiment {
            Experiment::ElectrodeSweep => self.evaluate_sweep(&mut rec)?,
            _ => self.evaluate_completion(&mut rec)?,
        };
        print!("{text}");
        rec.seconds = start.elapsed().as_secs_f64();
        self.record("evaluate", &rec)?;
        Ok(rec)
    }

    fn evaluate_completion(&self, rec: &mut StageRecord) -> Result<String> {
        let reference = self
            .load_nd("reference")?
            .ok_or_else(|| missing(&self.path("nd/reference.txt")))?;
        let phantom = self.phantom()?;
        let grid = self.cfg.eval_grid();
        let reference_recon = self.load_recon("reference", &grid)?;
        let mut rows = Vec::new();
        for name in MATRICES {
            let Some(m) = self.load_nd(name)? else { continue };
            let recon = self.load_recon(name, &grid)?;
            let row = EvalRow {
                name,
                nd_error: m.relative_error(&reference).stage("evaluate")?,
                rank: m.rank().stage("evaluate")?,
                recon_error: recon
                    .as_ref()
                    .map(|r| r.error_to_phantom(&phantom))
                    .transpose()
                    .stage("evaluate")?,
                recon_to_reference: match (&recon, &reference_recon) {
                    (Some(r), Some(f)) => Some(r.error_to(f).stage("evaluate")?),
                    _ => None,
                },
                components: recon.as_ref().map(|r| r.inclusion_components(1.0)),
                max_relative_imag: recon.as_ref().map(|r| r.max_relative_imag()),
            };
            rows.push(row);
        }
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let mut csv =
            String::from("matrix,nd_error,rank,recon_error,recon_error_to_reference,components,max_relative_imag\n");
        for r in &rows {
            writeln!(
                csv,
                "{},{:.6},{},{},{},{},{}",
                r.name,
                r.nd_error,
                r.rank,
                opt(r.recon_error),
                opt(r.recon_to_reference),
                r.components.map_or(String::new(), |c| c.to_string()),
                r.max_relative_imag.map_or(String::new(), |v| format!("{v:.3e}")),
            )
            .expect("string write");
        }
        self.write("tables/summary.csv", &csv, rec)?;
        let mut text = String::from("matrix        ND error   rank   recon error   to reference   components\n");
        for r in &rows {
            let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2} %", 100.0 * x));
            writeln!(
                text,
                "{:<12} {:>8.2} %  {:>5}  {:>12}  {:>13}  {:>11}",
                r.name,
                100.0 * r.nd_error,
                r.rank,
                pct(r.recon_error),
                pct(r.recon_to_reference),
                r.components.map_or("-".to_string(), |c| c.to_string()),
            )
            .expect("string write");
        }
        let find = |n: &str| rows.iter().find(|r| r.name == n);
        if let (Some(p), Some(a)) = (find("partial"), find("approximated")) {
            let mut t2 = String::from("model,nd_partial,nd_approximated,recon_partial,recon_approximated\n");
            writeln!(
                t2,
                "{},{:.6},{:.6},{},{}",
                self.cfg.model.kind,
                p.nd_error,
                a.nd_error,
                opt(p.recon_error),
                opt(a.recon_error)
            )
            .expect("string write");
            self.write("tables/table2.csv", &t2, rec)?;
            rec.value("nd_partial", p.nd_error);
            rec.value("nd_approximated", a.nd_error);
        }
        self.write("tables/summary.txt", &text, rec)?;
        Ok(text)
    }

    fn evaluate_sweep(&self, rec: &mut StageRecord) -> Result<String> {
        let reference = self
            .load_nd("reference")?
            .ok_or_else(|| missing(&self.path("nd/reference.txt")))?;
        let mut csv = String::from("electrodes,cm_vs_cem,ecm_vs_cem\n");
        let mut text = String::from("electrodes   CM vs CEM   ECM vs CEM\n");
        for &removed in &self.cfg.sweep.removed {
            let m = self.cfg.layout.electrodes - removed;
            let get = |model: &str| -> Result<NdMatrix> {
                let name = format!("m{m}_{model}");
                self.load_nd(&name)?
                    .ok_or_else(|| missing(&self.path(&format!("nd/{name}.txt"))))
            };
            let (ecm, cem) = (get("ecm")?, get("cem")?);
            let cm_err = l2_distance(reference.entries(), cem.entries()).stage("evaluate")?;
            let ecm_err = l2_distance(ecm.entries(), cem.entries()).stage("evaluate")?;
            writeln!(csv, "{m},{cm_err:.6e},{ecm_err:.6e}").expect("string write");
            writeln!(text, "{m:>10}   {cm_err:>9.4}   {ecm_err:>10.4}").expect("string write");
        }
        self.write("tables/table1.csv", &csv, rec)?;
        self.write("tables/table1.txt", &text, rec)?;
        Ok(text)
    }

    fn load_recon(&self, name: &str, grid: &EvalGrid) -> Result<Option<Reconstruction>> {
        let p = self.path(&format!("recon/{name}.csv"));
        if !p.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&p).map_err(CliError::io(&p))?;
        parse_reconstruction(&text, grid).map(Some)
    }

    /// All four stages in sequence.
    pub fn pipeline(&self) -> Result<()> {
        self.simulate()?;
        self.complete()?;
        self.reconstruct()?;
        self.evaluate()?;
        Ok(())
    }
}

struct EvalRow<'a> {
    name: &'a str,
    nd_error: f64,
    rank: usize,
    recon_error: Option<f64>,
    recon_to_reference: Option<f64>,
    components: Option<usize>,
    max_relative_imag: Option<f64>,
}

fn missing(p: &Path) -> CliError {
    CliError::Io {
        path: p.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "missing stage output"),
    }
}

/// `theta` followed by one column per trace.
pub fn traces_csv(labels: &[String], traces: &[BoundaryFunction]) -> String {
    let mut out = String::from("theta");
    for l in labels {
        write!(out, ",{l}").expect("string write");
    }
    out.push('\n');
    if let Some(first) = traces.first() {
        for (k, theta) in first.grid().angles().enumerate() {
            write!(out, "{theta:?}").expect("string write");
            for t in traces {
                write!(out, ",{:?}", t.values()[k]).expect("string write");
            }
            out.push('\n');
        }
    }
    out
}

/// Phantom values at the pixels inside the disk.
pub fn phantom_image(grid: &EvalGrid, phantom: &Phantom) -> Vec<Option<f64>> {
    let mut img = vec![None; grid.size * grid.size];
    for (r, c, z) in grid.points() {
        img[r * grid.size + c] = Some(phantom.value(z[0], z[1]));
    }
    img
}

/// Reads a reconstruction CSV written for `grid`; the pixel coordinates
/// must match the grid.
pub fn parse_reconstruction(text: &str, grid: &EvalGrid) -> Result<Reconstruction> {
    let pixels = grid.points();
    let mut sigma = Vec::with_capacity(pixels.len());
    let mut imag = Vec::with_capacity(pixels.len());
    let mismatch = || CliError::Config(format!("reconstruction does not match a {0}×{0} grid", grid.size));
    let mut lines = text.lines().skip(1).filter(|l| !l.trim().is_empty());
    for (_, _, z) in &pixels {
        let line = lines.next().ok_or_else(mismatch)?;
        let f: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CliError::Config(format!("reconstruction CSV: {e}")))?;
        if f.len() != 4 || (f[0] - z[0]).abs() > 1e-12 || (f[1] - z[1]).abs() > 1e-12 {
            return Err(mismatch());
        }
        sigma.push(f[2]);
        imag.push(f[3]);
    }
    if lines.next().is_some() {
        return Err(mismatch());
    }
    Ok(Reconstruction {
        grid: grid.clone(),
        pixels,
        sigma,
        imag,
        max_iterations: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstruction_csv_round_trip() {
        let grid = EvalGrid { size: 6 };
        let pixels = grid.points();
        let rec = Reconstruction {
            grid: grid.clone(),
            sigma: (0..pixels.len()).map(|i| 1.0 + i as f64 * 0.01).collect(),
            imag: vec![0.0; pixels.len()],
            pixels,
            max_iterations: 0,
        };
        let back = parse_reconstruction(&rec.to_csv(), &grid).unwrap();
        assert_eq!(back, rec);
        assert!(parse_reconstruction(&rec.to_csv(), &EvalGrid { size: 8 }).is_err());
    }

    #[test]
    fn phantom_image_masks_outside() {
        let grid = EvalGrid { size: 4 };
        let img = phantom_image(&grid, &Phantom::unit());
        assert_eq!(img[0], None);
        assert_eq!(img[5], Some(1.0));
    }
}

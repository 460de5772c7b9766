//! Experiment configuration, read from a TOML file.
//!
//! Every section has defaults matching the 12-of-16 electrode completion
//! experiment, so a file only needs to state what differs.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use eit_core::completion::{log_betas, CompletionConfig, TraceSpace, Weight};
use eit_core::dbar::{DbarConfig, EvalGrid};
use eit_core::forward::Model;
use eit_core::geometry::{make_layout, ElectrodeLayout};
use eit_core::phantoms::{paired_circles, rotsym, Circle, Phantom, RadialStep};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Partial data, completion to the full ND matrix, reconstructions.
    #[default]
    Completion,
    /// ND errors of CM and ECM data against CEM data while electrodes are removed.
    ElectrodeSweep,
    /// Diagonal ND matrix from one projected input for a radial phantom.
    SinglePattern,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub phantom: PhantomConfig,
    pub mesh: MeshConfig,
    pub layout: LayoutConfig,
    pub model: ModelConfig,
    pub noise: NoiseConfig,
    pub completion: CompletionSection,
    pub dbar: DbarSection,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    PairedCircles,
    Rotsym,
    Unit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub kind: PhantomKind,
    /// Inclusion conductivity for paired circles.
    pub amplitude: f64,
    /// Explicit circles; the default pair is used when empty.
    pub circles: Vec<Circle>,
    /// Radial steps for `rotsym`.
    pub steps: Vec<RadialStep>,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            kind: PhantomKind::PairedCircles,
            amplitude: 2.0,
            circles: vec![],
            steps: vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub level: u32,
    /// One extra refinement pass next to the boundary.
    pub graded: bool,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            level: 6,
            graded: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutConfig {
    /// Electrodes before removal.
    pub electrodes: usize,
    /// Electrode width in radians.
    pub width: f64,
    /// Angle around which electrodes are removed.
    pub gap_center: f64,
    pub removed: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            electrodes: 16,
            width: TAU / 32.0,
            gap_center: 0.0,
            removed: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: Model,
    pub contact_impedance: f64,
    pub basis_size: usize,
    pub quadrature: usize,
    /// Order `n` of the single projected input `Qφ_n`.
    pub pattern_order: i32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: Model::Ecm,
            contact_impedance: 0.005,
            basis_size: 16,
            quadrature: 512,
            pattern_order: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Relative noise level, e.g. `0.001` for 0.1 %.
    pub level: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { level: 0.0, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompletionSection {
    pub alpha: f64,
    pub beta: f64,
    pub trace_space: TraceSpace,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Diagonal of the weight matrix `S`; identity when empty.
    pub weight: Vec<f64>,
    /// Selects β by minimal error to the full-boundary reference.
    pub beta_sweep: Option<BetaSweep>,
}

impl Default for CompletionSection {
    fn default() -> Self {
        let c = CompletionConfig::default();
        Self {
            alpha: c.alpha,
            beta: c.beta,
            trace_space: c.trace_space,
            cg_tol: c.cg_tol,
            cg_max_iter: c.cg_max_iter,
            weight: vec![],
            beta_sweep: None,
        }
    }
}

/// `count` log-spaced values `10^min_exp … 10^max_exp`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSweep {
    pub min_exp: f64,
    pub max_exp: f64,
    pub count: usize,
}

impl BetaSweep {
    pub fn values(&self) -> Vec<f64> {
        log_betas(self.min_exp, self.max_exp, self.count)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DbarSection {
    pub radius: f64,
    pub cap: f64,
    pub grid_exp: u32,
    pub extent: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Pixels per side of the evaluation grid.
    pub eval_size: usize,
}

impl Default for DbarSection {
    fn default() -> Self {
        let d = DbarConfig::default();
        Self {
            radius: d.radius,
            cap: d.cap,
            grid_exp: d.grid_exp,
            extent: d.extent,
            tol: d.tol,
            max_iter: d.max_iter,
            eval_size: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Removed electrode counts for the electrode sweep.
    pub removed: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            removed: vec![0, 2, 4, 6, 8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub images: bool,
    /// Output pixels per evaluation pixel.
    pub image_scale: usize,
    /// Fixed half range of the diverging color scale around σ = 1; chosen
    /// from the comparison set when absent.
    pub color_range: Option<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            images: true,
            image_scale: 4,
            color_range: None,
        }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Field-level checks of everything the stages rely on.
    pub fn validate(&self) -> Result<()> {
        if self.mesh.level > 8 {
            return Err(invalid("mesh.level", format!("{} exceeds 8", self.mesh.level)));
        }
        let m = &self.model;
        if m.basis_size == 0 || !m.basis_size.is_multiple_of(2) {
            return Err(invalid("model.basis_size", "must be positive and even"));
        }
        if m.quadrature < 2 * m.basis_size + 2 {
            return Err(invalid(
                "model.quadrature",
                format!("needs at least {} nodes", 2 * m.basis_size + 2),
            ));
        }
        if !(m.contact_impedance > 0.0) {
            return Err(invalid("model.contact_impedance", "must be positive"));
        }
        if m.pattern_order == 0 || m.pattern_order.unsigned_abs() as usize > m.basis_size / 2 {
            return Err(invalid("model.pattern_order", "must be a nonzero basis order"));
        }
        if !(self.noise.level >= 0.0 && self.noise.level.is_finite()) {
            return Err(invalid("noise.level", "must be non-negative"));
        }
        self.phantom().map_err(|e| invalid("phantom", e))?;
        self.layout_with(self.layout.removed)
            .map_err(|e| invalid("layout", e))?;
        if self.experiment == Experiment::ElectrodeSweep {
            if self.sweep.removed.is_empty() {
                return Err(invalid("sweep.removed", "must not be empty"));
            }
            for &r in &self.sweep.removed {
                self.layout_with(r).map_err(|e| invalid("sweep.removed", e))?;
            }
        }
        if self.experiment == Experiment::SinglePattern && self.phantom.kind != PhantomKind::Rotsym {
            return Err(invalid(
                "phantom.kind",
                "single-pattern recovery needs a rotationally symmetric phantom",
            ));
        }
        self.completion_config()
            .validate()
            .map_err(|e| invalid("completion", e))?;
        let n2 = m.basis_size * m.basis_size;
        let w = &self.completion.weight;
        if !w.is_empty() && (w.len() != n2 || w.contains(&0.0)) {
            return Err(invalid("completion.weight", format!("needs {n2} nonzero entries")));
        }
        if let Some(s) = &self.completion.beta_sweep {
            if s.count == 0 || !(s.min_exp <= s.max_exp) {
                return Err(invalid(
                    "completion.beta_sweep",
                    "needs count ≥ 1 and min_exp ≤ max_exp",
                ));
            }
        }
        self.dbar_config().validate().map_err(|e| invalid("dbar", e))?;
        if !(self.dbar.tol > 0.0) || self.dbar.max_iter == 0 {
            return Err(invalid("dbar", "tol and max_iter must be positive"));
        }
        if self.dbar.eval_size < 2 {
            return Err(invalid("dbar.eval_size", "must be at least 2"));
        }
        if self.output.image_scale == 0 {
            return Err(invalid("output.image_scale", "must be at least 1"));
        }
        if let Some(r) = self.output.color_range {
            if !(r > 0.0) {
                return Err(invalid("output.color_range", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn phantom(&self) -> eit_core::Result<Phantom> {
        match self.phantom.kind {
            PhantomKind::Unit => Ok(Phantom::unit()),
            PhantomKind::Rotsym => rotsym(self.phantom.steps.clone()),
            PhantomKind::PairedCircles if self.phantom.circles.is_empty() => {
                let amplitude = self.phantom.amplitude;
                let p = eit_core::phantoms::default_paired_circles(amplitude);
                p.validate()?;
                Ok(p)
            }
            PhantomKind::PairedCircles => paired_circles(self.phantom.circles.clone(), self.phantom.amplitude),
        }
    }

    pub fn layout_with(&self, removed: usize) -> eit_core::Result<ElectrodeLayout> {
        let l = &self.layout;
        make_layout(l.electrodes, l.width, l.gap_center, removed)
    }

    pub fn completion_config(&self) -> CompletionConfig {
        let c = &self.completion;
        CompletionConfig {
            alpha: c.alpha,
            beta: c.beta,
            weight: if c.weight.is_empty() {
                Weight::Identity
            } else {
                Weight::Diagonal {
                    values: c.weight.clone(),
                }
            },
            trace_space: c.trace_space,
            cg_tol: c.cg_tol,
            cg_max_iter: c.cg_max_iter,
        }
    }

    pub fn dbar_config(&self) -> DbarConfig {
        let d = &self.dbar;
        DbarConfig {
            radius: d.radius,
            cap: d.cap,
            grid_exp: d.grid_exp,
            extent: d.extent,
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }

    pub fn eval_grid(&self) -> EvalGrid {
        EvalGrid {
            size: self.dbar.eval_size,
        }
    }
}

/// One-line layout summary including `c_E`.
pub fn describe_layout(layout: &ElectrodeLayout) -> String {
    format!(
        "{} electrodes, width {:.4} rad, coverage {:.1} %, c_E = {:.4}",
        layout.num_electrodes(),
        layout.width(),
        100.0 * layout.coverage(),
        layout.c_e()
    )
}

//! Run configuration, experiment presets, the mode driver, and result
//! persistence. Output files are delimited text with '#'-prefixed header
//! lines carrying the full resolved configuration.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::baselines::{self, NewtonOpts};
use crate::contour::{ContourFamily, TimeContour};
use crate::diagnostics::{self, BranchOpts, FieldMap};
use crate::dynamics::{init_from_gaussian, propagate, InitialGaussian, StepperOpts, TrajectoryRecord};
use crate::error::{FincoError, Result};
use crate::finco::{
    apply_filters, gaussian_on_grid, reconstruct, sample_weight, FilterThresholds, FincoSample,
    Rejection, WavefunctionGrid,
};
use crate::potentials::PotentialModel;
use crate::reference_qm::{propagate_exact, GridSpec};
use crate::sampling::{ManifoldGrid, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Finco,
    Reference,
    Branchmap,
    Rootsearch,
    Compare,
    RealContourCompare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    /// Multiples of the classical period of the center trajectory.
    TCl,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourConfig {
    pub family: ContourFamily,
    pub dip_depth: f64,
    pub dip_fraction: (f64, f64),
}

impl Default for ContourConfig {
    fn default() -> Self {
        ContourConfig {
            family: ContourFamily::RectangularDip,
            dip_depth: 0.4,
            dip_fraction: (0.05, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldConfig {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub refine_rounds: usize,
    #[serde(default)]
    pub refine_budget: usize,
}

impl ManifoldConfig {
    pub fn rect(&self) -> Rect {
        Rect { re_min: self.re_min, re_max: self.re_max, im_min: self.im_min, im_max: self.im_max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub unit: TimeUnit,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSearchConfig {
    /// Evaluate the baseline amplitude on every k-th reference grid point.
    pub x_stride: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for RootSearchConfig {
    fn default() -> Self {
        RootSearchConfig { x_stride: 64, max_iter: 30, tol: 1e-10 }
    }
}

/// Full run configuration; the single source of truth for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub potential: PotentialModel,
    pub initial: InitialGaussian,
    pub gamma_f: f64,
    pub contour: ContourConfig,
    pub manifold: ManifoldConfig,
    pub checkpoints: CheckpointConfig,
    #[serde(default)]
    pub filters: FilterThresholds,
    #[serde(default)]
    pub stepper: StepperOpts,
    pub reference: GridSpec,
    #[serde(default)]
    pub branch: BranchOpts,
    #[serde(default)]
    pub root_search: RootSearchConfig,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |key: &str, message: &str| {
            Err(FincoError::Config { key: key.into(), message: message.into() })
        };
        if !(self.initial.gamma0 > 0.0) {
            return err("initial.gamma0", "must be positive");
        }
        if !(self.gamma_f > 0.0) {
            return err("gamma_f", "must be positive");
        }
        if self.manifold.nx < 1 || self.manifold.ny < 1 {
            return err("manifold", "resolution must be >= 1");
        }
        if !(self.manifold.re_max > self.manifold.re_min)
            || !(self.manifold.im_max > self.manifold.im_min)
        {
            return err("manifold", "degenerate rectangle");
        }
        if self.checkpoints.times.is_empty() {
            return err("checkpoints.times", "at least one checkpoint required");
        }
        if self.checkpoints.times.iter().any(|t| *t < 0.0) {
            return err("checkpoints.times", "times must be >= 0");
        }
        if matches!(self.checkpoints.unit, TimeUnit::TCl) && self.classical_period().is_none() {
            return err("checkpoints.unit", "t_cl units need a bound center trajectory");
        }
        self.reference.validate().map_err(|e| FincoError::Config {
            key: "reference".into(),
            message: e.to_string(),
        })?;
        if self.stepper.gamma_f != self.gamma_f {
            return err("stepper.gamma_f", "must equal gamma_f");
        }
        Ok(())
    }

    /// Classical period of the trajectory launched at the wavepacket center.
    ///
    /// Morse: T = 2 pi / (beta sqrt(2 |E|)) with E = V(q0) + p0^2 / 2;
    /// harmonic: 2 pi / omega. None for unbound motion.
    pub fn classical_period(&self) -> Option<f64> {
        match self.potential {
            PotentialModel::Morse { beta, .. } => {
                let v0 = self
                    .potential
                    .eval_derivs(Complex64::new(self.initial.q0, 0.0), 0)
                    .ok()?[0]
                    .re;
                let energy = v0 + 0.5 * self.initial.p0 * self.initial.p0;
                (energy < 0.0)
                    .then(|| 2.0 * std::f64::consts::PI / (beta * (2.0 * energy.abs()).sqrt()))
            }
            PotentialModel::Harmonic { omega } => Some(2.0 * std::f64::consts::PI / omega),
            PotentialModel::FreeParticle => None,
        }
    }

    /// Checkpoint times in absolute atomic units, sorted.
    pub fn absolute_times(&self) -> Result<Vec<f64>> {
        let scale = match self.checkpoints.unit {
            TimeUnit::Absolute => 1.0,
            TimeUnit::TCl => self.classical_period().ok_or_else(|| FincoError::Config {
                key: "checkpoints.unit".into(),
                message: "t_cl units need a bound center trajectory".into(),
            })?,
        };
        let mut times: Vec<f64> = self.checkpoints.times.iter().map(|t| t * scale).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(times)
    }

    pub fn contour_for(&self, t_final: f64) -> Result<TimeContour> {
        TimeContour::make(
            self.contour.family,
            t_final,
            self.contour.dip_depth,
            self.contour.dip_fraction,
        )
    }
}

// ---------------------------------------------------------------------------
// presets

pub const PRESET_NAMES: [&str; 3] = ["morse-revival", "harmonic-check", "identity"];

/// Built-in experiment configurations.
pub fn preset(name: &str) -> Option<RunConfig> {
    let morse = PotentialModel::Morse { d: 10.25, beta: 0.2209 };
    let morse_initial = InitialGaussian { gamma0: 0.5, q0: 9.342, p0: 0.0 };
    let morse_manifold = ManifoldConfig {
        re_min: 9.342 - 3.5,
        re_max: 9.342 + 4.5,
        im_min: -3.5,
        im_max: 3.5,
        nx: 400,
        ny: 300,
        refine_rounds: 0,
        refine_budget: 0,
    };
    let morse_reference = GridSpec { x_min: -12.0, x_max: 50.0, n: 4096, dt: 0.005 };
    match name {
        "morse-revival" => Some(RunConfig {
            potential: morse,
            initial: morse_initial,
            gamma_f: 0.5,
            contour: ContourConfig::default(),
            manifold: morse_manifold,
            checkpoints: CheckpointConfig {
                unit: TimeUnit::TCl,
                times: vec![0.5, 1.0, 4.0, 10.0, 19.0, 20.0],
            },
            filters: FilterThresholds::default(),
            stepper: StepperOpts::default(),
            reference: morse_reference,
            branch: BranchOpts::default(),
            root_search: RootSearchConfig::default(),
            output_dir: PathBuf::from("out/morse-revival"),
        }),
        "harmonic-check" => Some(RunConfig {
            potential: PotentialModel::Harmonic { omega: 1.0 },
            initial: InitialGaussian { gamma0: 0.5, q0: 2.0, p0: 0.0 },
            gamma_f: 0.5,
            contour: ContourConfig {
                family: ContourFamily::Real,
                dip_depth: 0.0,
                dip_fraction: (0.0, 1.0),
            },
            manifold: ManifoldConfig {
                re_min: 2.0 - 4.5,
                re_max: 2.0 + 4.5,
                im_min: -4.5,
                im_max: 4.5,
                nx: 100,
                ny: 100,
                refine_rounds: 0,
                refine_budget: 0,
            },
            checkpoints: CheckpointConfig {
                unit: TimeUnit::Absolute,
                times: vec![
                    std::f64::consts::FRAC_PI_2,
                    std::f64::consts::PI,
                    2.0 * std::f64::consts::PI,
                ],
            },
            filters: FilterThresholds::disabled(),
            stepper: StepperOpts::default(),
            reference: GridSpec { x_min: -20.0, x_max: 20.0, n: 2048, dt: 0.002 },
            branch: BranchOpts::default(),
            root_search: RootSearchConfig::default(),
            output_dir: PathBuf::from("out/harmonic-check"),
        }),
        "identity" => Some(RunConfig {
            potential: morse,
            initial: morse_initial,
            gamma_f: 0.5,
            contour: ContourConfig::default(),
            manifold: ManifoldConfig { nx: 100, ny: 100, ..morse_manifold },
            checkpoints: CheckpointConfig { unit: TimeUnit::Absolute, times: vec![0.0] },
            filters: FilterThresholds::default(),
            stepper: StepperOpts::default(),
            reference: morse_reference,
            branch: BranchOpts::default(),
            root_search: RootSearchConfig::default(),
            output_dir: PathBuf::from("out/identity"),
        }),
        _ => None,
    }
}

/// Load a config from a TOML file, or fall back to a preset name.
pub fn load_config(spec: &str) -> Result<RunConfig> {
    let text = if Path::new(spec).exists() {
        std::fs::read_to_string(spec)?
    } else if let Some(cfg) = preset(spec) {
        return Ok(cfg);
    } else {
        return Err(FincoError::Config {
            key: "config".into(),
            message: format!("`{spec}` is neither a file nor a preset name"),
        });
    };
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| FincoError::Config {
        key: "config".into(),
        message: e.to_string(),
    })
}

pub fn config_to_toml(cfg: &RunConfig) -> String {
    toml::to_string_pretty(cfg).expect("config serializes")
}

/// Apply `key=value` overrides onto the TOML representation of a config.
pub fn apply_overrides(cfg: &RunConfig, overrides: &[String]) -> Result<RunConfig> {
    if overrides.is_empty() {
        return Ok(cfg.clone());
    }
    let mut table: toml::Table =
        toml::from_str(&config_to_toml(cfg)).expect("round trip through toml");
    for ov in overrides {
        let (path, value) = ov.split_once('=').ok_or_else(|| FincoError::Config {
            key: ov.clone(),
            message: "override must be key=value".into(),
        })?;
        let parsed: toml::Value = toml::from_str(&format!("v = {value}"))
            .map(|t: toml::Table| t["v"].clone())
            .unwrap_or_else(|_| toml::Value::String(value.to_string()));
        let mut node = &mut table;
        let parts: Vec<&str> = path.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            node = node
                .entry(part.to_string())
                .or_insert(toml::Value::Table(Default::default()))
                .as_table_mut()
                .ok_or_else(|| FincoError::Config {
                    key: path.to_string(),
                    message: "override path traverses a non-table".into(),
                })?;
        }
        node.insert(parts[parts.len() - 1].to_string(), parsed);
    }
    parse_config(&toml::to_string(&table).expect("table serializes"))
}

// ---------------------------------------------------------------------------
// run driver

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct SampleCounts {
    pub total: usize,
    pub accepted: usize,
    pub invalid: usize,
    pub kinetic_action: usize,
    pub potential_divergence: usize,
    pub noise_magnitude: usize,
}

impl SampleCounts {
    fn tally(samples: &[FincoSample]) -> SampleCounts {
        let mut c = SampleCounts { total: samples.len(), ..Default::default() };
        for s in samples {
            match s.rejection {
                None => c.accepted += 1,
                Some(Rejection::Invalid) => c.invalid += 1,
                Some(Rejection::KineticAction) => c.kinetic_action += 1,
                Some(Rejection::PotentialDivergence) => c.potential_divergence += 1,
                Some(Rejection::NoiseMagnitude) => c.noise_magnitude += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ErrorStats {
    pub l2_density: f64,
    pub linf_density: f64,
    pub norm_finco: f64,
    pub norm_reference: f64,
}

fn density_errors(finco: &WavefunctionGrid, reference: &WavefunctionGrid) -> ErrorStats {
    let linf = finco
        .psi
        .iter()
        .zip(&reference.psi)
        .map(|(a, b)| (a.norm_sqr() - b.norm_sqr()).abs())
        .fold(0.0_f64, f64::max);
    ErrorStats {
        l2_density: finco.l2_density_diff(reference),
        linf_density: linf,
        norm_finco: finco.norm,
        norm_reference: reference.norm,
    }
}

#[derive(Debug, Clone)]
pub struct CheckpointOutput {
    pub t: f64,
    pub finco: Option<WavefunctionGrid>,
    pub reference: Option<WavefunctionGrid>,
    /// Reconstruction restricted to trajectories reachable without a dip.
    pub real_filtered: Option<WavefunctionGrid>,
    pub root_amplitudes: Option<WavefunctionGrid>,
    pub branch_count: Option<usize>,
    pub scar_count: Option<usize>,
    pub counts: SampleCounts,
    pub errors: Option<ErrorStats>,
    pub errors_real_filtered: Option<ErrorStats>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub t_cl: Option<f64>,
    pub checkpoints: Vec<CheckpointOutput>,
}

/// Propagate every manifold point along the contour for one final time.
pub fn propagate_manifold(
    cfg: &RunConfig,
    grid: &ManifoldGrid,
    contour: &TimeContour,
) -> Vec<TrajectoryRecord> {
    grid.points
        .par_iter()
        .map(|p| {
            let s0 = init_from_gaussian(&cfg.initial, p.q, cfg.gamma_f);
            propagate(&s0, contour, &cfg.potential, &cfg.stepper, &[])
        })
        .collect()
}

/// Zero-time records: the initial states themselves.
fn records_at_t0(cfg: &RunConfig, grid: &ManifoldGrid) -> Vec<TrajectoryRecord> {
    grid.points
        .iter()
        .map(|p| {
            let s0 = init_from_gaussian(&cfg.initial, p.q, cfg.gamma_f);
            let min_re_v = cfg
                .potential
                .v012(s0.qt)
                .map(|v| v[0].re)
                .unwrap_or(f64::INFINITY);
            TrajectoryRecord {
                q_init: p.q,
                final_state: s0,
                checkpoints: vec![],
                max_abs_im_q: p.q.im.abs(),
                min_re_v,
                final_re_v: min_re_v,
                min_abs_d: crate::dynamics::caustic_denominator(&s0, cfg.gamma_f).norm(),
                rejected_steps: 0,
            }
        })
        .collect()
}

fn records_for_time(cfg: &RunConfig, grid: &ManifoldGrid, t: f64) -> Result<Vec<TrajectoryRecord>> {
    if t == 0.0 {
        Ok(records_at_t0(cfg, grid))
    } else {
        let contour = cfg.contour_for(t)?;
        Ok(propagate_manifold(cfg, grid, &contour))
    }
}

fn filtered_samples(cfg: &RunConfig, grid: &ManifoldGrid, records: &[TrajectoryRecord]) -> Vec<FincoSample> {
    records
        .iter()
        .zip(&grid.points)
        .map(|(rec, p)| {
            let s = sample_weight(rec, &cfg.initial, cfg.gamma_f, p.weight);
            apply_filters(rec, &s, &cfg.filters)
        })
        .collect()
}

/// Refinement score: discrete gradient magnitude of the complex weight
/// field on the base uniform grid.
pub fn weight_gradient_scores(samples: &[FincoSample], grid: &ManifoldGrid) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let w = |i: usize| -> Complex64 {
        let s = &samples[i];
        if s.is_valid() {
            Complex64::from_polar(s.jac_overlap_mag.min(1e6), s.weight.arg())
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    (0..samples.len())
        .map(|idx| {
            if samples.len() != nx * ny {
                return samples[idx].jac_overlap_mag;
            }
            let (i, j) = (idx % nx, idx / nx);
            let right = if i + 1 < nx { w(idx + 1) } else { w(idx) };
            let left = if i > 0 { w(idx - 1) } else { w(idx) };
            let up = if j + 1 < ny { w(idx + nx) } else { w(idx) };
            let down = if j > 0 { w(idx - nx) } else { w(idx) };
            ((right - left).norm() + (up - down).norm()) / 2.0
        })
        .collect()
}

fn build_grid(cfg: &RunConfig) -> Result<ManifoldGrid> {
    ManifoldGrid::uniform(cfg.manifold.rect(), cfg.manifold.nx, cfg.manifold.ny)
}

/// Manifold grid after the configured refinement rounds, scored on the
/// weight field at the earliest nonzero checkpoint time.
fn refined_grid(cfg: &RunConfig, times: &[f64]) -> Result<ManifoldGrid> {
    let mut grid = build_grid(cfg)?;
    if cfg.manifold.refine_rounds == 0 || cfg.manifold.refine_budget == 0 {
        return Ok(grid);
    }
    let t_score = times.iter().copied().find(|&t| t > 0.0).unwrap_or(0.0);
    if t_score == 0.0 {
        return Ok(grid);
    }
    for _ in 0..cfg.manifold.refine_rounds {
        let records = records_for_time(cfg, &grid, t_score)?;
        let samples = filtered_samples(cfg, &grid, &records);
        let scores = weight_gradient_scores(&samples, &grid);
        grid = grid.refine(&scores, cfg.manifold.refine_budget)?;
    }
    Ok(grid)
}

/// Reference x-axis shared by the reconstruction and comparison outputs.
fn x_axis(cfg: &RunConfig) -> Vec<f64> {
    cfg.reference.x_grid()
}

/// Execute one run mode. Returns the in-memory results after writing the
/// artifact files into `output_dir`.
pub fn run(cfg: &RunConfig, mode: RunMode) -> Result<RunOutput> {
    cfg.validate()?;
    let times = cfg.absolute_times()?;
    let t_cl = cfg.classical_period();
    std::fs::create_dir_all(&cfg.output_dir)?;
    let x = x_axis(cfg);
    let header = file_header(cfg, mode);

    let t_final = *times.last().unwrap();
    let reference_grids: Option<Vec<WavefunctionGrid>> = match mode {
        RunMode::Reference | RunMode::Compare | RunMode::RealContourCompare => Some(
            propagate_exact(&cfg.initial, &cfg.potential, &cfg.reference, t_final, &times)?,
        ),
        _ => None,
    };

    let grid = match mode {
        RunMode::Reference => None,
        _ => Some(refined_grid(cfg, &times)?),
    };

    let mut out = RunOutput { t_cl, checkpoints: Vec::new() };
    for (k, &t) in times.iter().enumerate() {
        let mut cp = CheckpointOutput {
            t,
            finco: None,
            reference: reference_grids.as_ref().map(|g| g[k].clone()),
            real_filtered: None,
            root_amplitudes: None,
            branch_count: None,
            scar_count: None,
            counts: SampleCounts::default(),
            errors: None,
            errors_real_filtered: None,
        };

        if let Some(grid) = &grid {
            match mode {
                RunMode::Finco | RunMode::Compare | RunMode::RealContourCompare => {
                    let records = records_for_time(cfg, grid, t)?;
                    let samples = filtered_samples(cfg, grid, &records);
                    cp.counts = SampleCounts::tally(&samples);
                    let psi = reconstruct(&samples, &x, cfg.gamma_f, t)?;
                    if let Some(r) = &cp.reference {
                        cp.errors = Some(density_errors(&psi, r));
                    }
                    write_wavefunction(
                        &cfg.output_dir.join(format!("finco_wf_{k:02}.dat")),
                        &header,
                        &psi,
                        cfg.gamma_f,
                        &cp.counts,
                    )?;
                    cp.finco = Some(psi);

                    if mode == RunMode::RealContourCompare && t > 0.0 {
                        let real_samples = real_accessible_samples(cfg, grid, &samples, t)?;
                        let psi_real = reconstruct(&real_samples, &x, cfg.gamma_f, t)?;
                        if let Some(r) = &cp.reference {
                            cp.errors_real_filtered = Some(density_errors(&psi_real, r));
                        }
                        write_wavefunction(
                            &cfg.output_dir.join(format!("finco_wf_real_{k:02}.dat")),
                            &header,
                            &psi_real,
                            cfg.gamma_f,
                            &SampleCounts::tally(&real_samples),
                        )?;
                        cp.real_filtered = Some(psi_real);
                    }
                }
                RunMode::Branchmap => {
                    let records = records_for_time(cfg, grid, t)?;
                    let samples = filtered_samples(cfg, grid, &records);
                    cp.counts = SampleCounts::tally(&samples);
                    let (map, n_branches) = diagnostics::branch_map(&records, grid, &cfg.branch)?;
                    cp.branch_count = Some(n_branches);
                    write_field_map(
                        &cfg.output_dir.join(format!("branch_map_{k:02}.dat")),
                        &header,
                        &map,
                    )?;
                    let wmap = diagnostics::weight_map(&samples, grid)?;
                    cp.scar_count = Some(diagnostics::detect_scars(&wmap)?.len());
                    write_field_map(
                        &cfg.output_dir.join(format!("weight_map_{k:02}.dat")),
                        &header,
                        &wmap,
                    )?;
                }
                RunMode::Rootsearch => {
                    if t > 0.0 {
                        let psi = root_search_grid(cfg, grid, t, &x)?;
                        write_wavefunction(
                            &cfg.output_dir.join(format!("rootsearch_wf_{k:02}.dat")),
                            &header,
                            &psi,
                            cfg.gamma_f,
                            &cp.counts,
                        )?;
                        cp.root_amplitudes = Some(psi);
                    }
                }
                RunMode::Reference => {}
            }
        }

        if let (RunMode::Reference, Some(r)) = (mode, &cp.reference) {
            write_wavefunction(
                &cfg.output_dir.join(format!("reference_wf_{k:02}.dat")),
                &header,
                r,
                cfg.gamma_f,
                &SampleCounts::default(),
            )?;
        }
        out.checkpoints.push(cp);
    }

    if matches!(mode, RunMode::Compare | RunMode::RealContourCompare) {
        write_error_table(&cfg.output_dir.join("compare.dat"), &header, &out)?;
    }
    write_resolved_config(&cfg.output_dir.join("config.toml"), cfg)?;
    Ok(out)
}

/// Restrict samples to trajectories reachable with a purely real contour:
/// re-propagate each accepted point along the real axis and keep those
/// that survive without faults and pass the same filters.
fn real_accessible_samples(
    cfg: &RunConfig,
    grid: &ManifoldGrid,
    samples: &[FincoSample],
    t: f64,
) -> Result<Vec<FincoSample>> {
    let real_contour = TimeContour::make(ContourFamily::Real, t, 0.0, (0.0, 1.0))?;
    let accessible: Vec<bool> = grid
        .points
        .par_iter()
        .zip(samples.par_iter())
        .map(|(p, s)| {
            if !s.is_valid() {
                return false;
            }
            let s0 = init_from_gaussian(&cfg.initial, p.q, cfg.gamma_f);
            let rec = propagate(&s0, &real_contour, &cfg.potential, &cfg.stepper, &[]);
            if !rec.is_valid() {
                return false;
            }
            let sw = sample_weight(&rec, &cfg.initial, cfg.gamma_f, p.weight);
            apply_filters(&rec, &sw, &cfg.filters).is_valid()
        })
        .collect();
    Ok(samples
        .iter()
        .zip(&accessible)
        .map(|(s, &ok)| {
            let mut s = *s;
            if !ok && s.is_valid() {
                s.rejection = Some(Rejection::Invalid);
                s.weight = Complex64::new(0.0, 0.0);
            }
            s
        })
        .collect())
}

/// Root-search baseline on a decimated x-axis, seeded from branch points.
fn root_search_grid(
    cfg: &RunConfig,
    grid: &ManifoldGrid,
    t: f64,
    x: &[f64],
) -> Result<WavefunctionGrid> {
    let contour = cfg.contour_for(t)?;
    let records = propagate_manifold(cfg, grid, &contour);
    // one seed per branch: the grid point with the smallest |Im q~(t)|
    // inside each connected component of the branch sublevel set
    let seeds = branch_seeds(&records, grid, &cfg.branch);
    let newton = NewtonOpts { max_iter: cfg.root_search.max_iter, tol: cfg.root_search.tol, dedup_dist: 1e-6 };
    let stride = cfg.root_search.x_stride.max(1);
    let xs: Vec<f64> = x.iter().copied().step_by(stride).collect();
    let amps: Vec<Complex64> = xs
        .par_iter()
        .map(|&xi| {
            baselines::root_search_reconstruct(
                &cfg.initial,
                &cfg.potential,
                &contour,
                xi,
                &seeds,
                &cfg.stepper,
                &newton,
            )
            .unwrap_or(Complex64::new(0.0, 0.0))
        })
        .collect();
    Ok(WavefunctionGrid::new(xs, amps, t))
}

/// One seed per branch component: the member point closest to the real axis.
pub fn branch_seeds(
    records: &[TrajectoryRecord],
    grid: &ManifoldGrid,
    opts: &BranchOpts,
) -> Vec<Complex64> {
    let (nx, ny) = (grid.nx, grid.ny);
    if records.len() != nx * ny {
        return Vec::new();
    }
    let value =
        |i: usize| -> f64 {
            if records[i].is_valid() { records[i].final_state.qt.im.abs() } else { f64::INFINITY }
        };
    let mask: Vec<bool> = (0..records.len()).map(|i| value(i) < opts.threshold).collect();
    let mut seen = vec![false; mask.len()];
    let mut seeds = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut best = start;
        let mut members = 0;
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(idx) = queue.pop_front() {
            members += 1;
            if value(idx) < value(best) {
                best = idx;
            }
            let (i, j) = (idx % nx, idx / nx);
            let mut push = |n: usize| {
                if mask[n] && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            };
            if i > 0 {
                push(idx - 1);
            }
            if i + 1 < nx {
                push(idx + 1);
            }
            if j > 0 {
                push(idx - nx);
            }
            if j + 1 < ny {
                push(idx + nx);
            }
        }
        if members >= opts.min_points {
            seeds.push(grid.points[best].q);
        }
    }
    seeds
}

// ---------------------------------------------------------------------------
// artifact files

fn file_header(cfg: &RunConfig, mode: RunMode) -> String {
    let mut h = String::new();
    h.push_str(&format!("# mode: {mode:?}\n"));
    if let Some(t_cl) = cfg.classical_period() {
        h.push_str(&format!("# t_cl: {t_cl:.17e}\n"));
    }
    for line in config_to_toml(cfg).lines() {
        h.push_str("# ");
        h.push_str(line);
        h.push('\n');
    }
    h
}

fn write_wavefunction(
    path: &Path,
    header: &str,
    grid: &WavefunctionGrid,
    gamma_f: f64,
    counts: &SampleCounts,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(header.as_bytes())?;
    writeln!(f, "# t_final: {:.17e}", grid.t_final)?;
    writeln!(f, "# gamma_f: {gamma_f:.17e}")?;
    writeln!(f, "# norm: {:.17e}", grid.norm)?;
    writeln!(
        f,
        "# samples: total={} accepted={} invalid={} kinetic_action={} potential_divergence={} noise={}",
        counts.total, counts.accepted, counts.invalid, counts.kinetic_action,
        counts.potential_divergence, counts.noise_magnitude
    )?;
    writeln!(f, "# columns: x Re(psi) Im(psi) |psi|^2")?;
    for (x, p) in grid.x.iter().zip(&grid.psi) {
        writeln!(f, "{:.17e} {:.17e} {:.17e} {:.17e}", x, p.re, p.im, p.norm_sqr())?;
    }
    Ok(())
}

fn write_field_map(path: &Path, header: &str, map: &FieldMap) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(header.as_bytes())?;
    writeln!(f, "# kind: {:?}", map.kind)?;
    writeln!(f, "# columns: Re(q0) Im(q0) magnitude phase")?;
    for (p, v) in map.grid.points.iter().zip(&map.values) {
        writeln!(f, "{:.17e} {:.17e} {:.17e} {:.17e}", p.q.re, p.q.im, v.norm(), v.arg())?;
    }
    Ok(())
}

fn write_error_table(path: &Path, header: &str, out: &RunOutput) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(header.as_bytes())?;
    writeln!(f, "# columns: t l2 linf norm_finco norm_ref l2_real_filtered")?;
    for cp in &out.checkpoints {
        if let Some(e) = &cp.errors {
            let l2r = cp.errors_real_filtered.map(|e| e.l2_density).unwrap_or(f64::NAN);
            writeln!(
                f,
                "{:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}",
                cp.t, e.l2_density, e.linf_density, e.norm_finco, e.norm_reference, l2r
            )?;
        }
    }
    Ok(())
}

fn write_resolved_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::write(path, config_to_toml(cfg))?;
    Ok(())
}

/// Analytic t = 0 state for identity checks.
pub fn initial_state_on_axis(cfg: &RunConfig) -> WavefunctionGrid {
    gaussian_on_grid(&cfg.initial, &x_axis(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_exist_and_validate() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn morse_revival_preset_parameters() {
        let cfg = preset("morse-revival").unwrap();
        assert_eq!(cfg.potential, PotentialModel::Morse { d: 10.25, beta: 0.2209 });
        assert_eq!(cfg.initial, InitialGaussian { gamma0: 0.5, q0: 9.342, p0: 0.0 });
        assert_eq!(cfg.gamma_f, 0.5);
        assert_eq!(cfg.filters, FilterThresholds { sigma: -2.5, nu: -20.0, epsilon: 1e4 });
        assert_eq!(cfg.checkpoints.times, vec![0.5, 1.0, 4.0, 10.0, 19.0, 20.0]);
        let t_cl = cfg.classical_period().unwrap();
        assert!((12.87..12.89).contains(&t_cl), "t_cl = {t_cl}");
    }

    #[test]
    fn config_round_trip() {
        let cfg = preset("morse-revival").unwrap();
        let text = config_to_toml(&cfg);
        let back = parse_config(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn overrides_apply() {
        let cfg = preset("identity").unwrap();
        let out = apply_overrides(
            &cfg,
            &["manifold.nx=64".into(), "filters.sigma=-1.25".into(), "gamma_f=0.5".into()],
        )
        .unwrap();
        assert_eq!(out.manifold.nx, 64);
        assert_eq!(out.filters.sigma, -1.25);
    }

    #[test]
    fn invalid_config_reports_key() {
        let mut cfg = preset("identity").unwrap();
        cfg.gamma_f = -1.0;
        cfg.stepper.gamma_f = -1.0;
        match cfg.validate() {
            Err(FincoError::Config { key, .. }) => assert_eq!(key, "gamma_f"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn absolute_times_sorted_and_scaled() {
        let cfg = preset("morse-revival").unwrap();
        let t_cl = cfg.classical_period().unwrap();
        let times = cfg.absolute_times().unwrap();
        assert_eq!(times.len(), 6);
        assert!((times[0] - 0.5 * t_cl).abs() < 1e-12);
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }
}

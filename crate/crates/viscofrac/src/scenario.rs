//! Scenario configuration, shipped presets, the run loop, and the analysis
//! operations built on top of it.
//!
//! A scenario is one complete simulation described by a TOML file: mesh,
//! material, time grid, loads, supports, and output plan. The run loop
//! advances the staggered solver, records probe channels once per accepted
//! step (no row for t = 0), and writes CSV/VTK artifacts. Everything is
//! serial and deterministic: the same configuration produces bit-identical
//! CSV output.

use crate::assembly::{
    add_nodal_force, add_traction, displacement_gradient_at, reaction_sum, AssemblyError,
};
use crate::element::quadrature;
use crate::fractional::{memory_potential, FractionalError};
use crate::material::{
    entropy_production, memory_modulus_tensor, second_piola, Material, StressMode, StressState,
};
use crate::mesh::{dogbone, rod_1d, rod_1d_quadratic, rod_2d_strip, DogboneGeometry, Mesh, MeshError};
use crate::output::{
    mean_square_deviation, vtk_filename, write_vtk, Normalization, OutputError, TimeSeries,
    VtkSnapshot,
};
use crate::solver::{Simulation, SolverError, SolverSettings};
use crate::tensor::SymTensor2;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("TOML error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fractional(#[from] FractionalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<AssemblyError> for ScenarioError {
    fn from(e: AssemblyError) -> Self {
        ScenarioError::Solver(e.into())
    }
}

impl ScenarioError {
    /// Exit-code contract: solver nonconvergence maps to 2, every other
    /// failure to 1.
    pub fn is_nonconvergence(&self) -> bool {
        matches!(
            self,
            ScenarioError::Solver(SolverError::Nonconvergence { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Dynamic,
    QuasiStatic,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default)]
    pub stress_mode: StressMode,
    /// Whether the damage equation runs at all.
    #[serde(default)]
    pub damage: bool,
    /// Nodewise non-decrease clamp on the damage field.
    #[serde(default = "default_true")]
    pub irreversible: bool,
    /// Record per-step minima of the memory potential and the entropy
    /// production over all quadrature points (costly on long histories).
    #[serde(default)]
    pub diagnostics: bool,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            mode: RunMode::Dynamic,
            stress_mode: StressMode::Partial,
            damage: false,
            irreversible: true,
            diagnostics: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSpec {
    Rod1d {
        elements: usize,
        length: f64,
        area: f64,
        /// Use three-node quadratic bars instead of two-node linear ones.
        #[serde(default)]
        quadratic: bool,
    },
    Rod2dStrip {
        nx: usize,
        ny: usize,
        length: f64,
        height: f64,
        thickness: f64,
    },
    Dogbone {
        nx: usize,
        ny: usize,
        #[serde(default)]
        triangles: bool,
        length: f64,
        grip_width: f64,
        gauge_width: f64,
        gauge_length: f64,
        transition_length: f64,
        thickness: f64,
    },
    File {
        path: String,
    },
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh, ScenarioError> {
        let mesh = match self {
            MeshSpec::Rod1d {
                elements,
                length,
                area,
                quadratic,
            } => {
                if *quadratic {
                    rod_1d_quadratic(*elements, *length, *area)
                } else {
                    rod_1d(*elements, *length, *area)
                }
            }
            MeshSpec::Rod2dStrip {
                nx,
                ny,
                length,
                height,
                thickness,
            } => rod_2d_strip(*nx, *ny, *length, *height, *thickness),
            MeshSpec::Dogbone {
                nx,
                ny,
                triangles,
                length,
                grip_width,
                gauge_width,
                gauge_length,
                transition_length,
                thickness,
            } => dogbone(
                &DogboneGeometry {
                    length: *length,
                    grip_width: *grip_width,
                    gauge_width: *gauge_width,
                    gauge_length: *gauge_length,
                    transition_length: *transition_length,
                    thickness: *thickness,
                },
                *nx,
                *ny,
                *triangles,
            ),
            MeshSpec::File { path } => Mesh::from_text(&std::fs::read_to_string(path)?)?,
        };
        mesh.validate()?;
        Ok(mesh)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub motion_tol: f64,
    pub damage_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub newmark_beta: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            motion_tol: s.motion_tol,
            damage_tol: s.damage_tol,
            max_iter: s.max_iter,
            max_halvings: s.max_halvings,
            newmark_beta: s.newmark_beta,
        }
    }
}

impl SolverSection {
    fn to_settings(self) -> SolverSettings {
        SolverSettings {
            motion_tol: self.motion_tol,
            damage_tol: self.damage_tol,
            max_iter: self.max_iter,
            max_halvings: self.max_halvings,
            newmark_beta: self.newmark_beta,
        }
    }
}

/// Scalar load/displacement program over time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Program {
    #[default]
    Zero,
    /// Constant value from t = 0 on.
    Step { value: f64 },
    /// `rate * t`.
    Ramp { rate: f64 },
    /// `rate * t` up to `t_turn`, then back down at the same rate (no floor:
    /// past 2 t_turn the value goes negative).
    Triangle { rate: f64, t_turn: f64 },
}

impl Program {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Program::Zero => 0.0,
            Program::Step { value } => value,
            Program::Ramp { rate } => rate * t,
            Program::Triangle { rate, t_turn } => {
                if t <= t_turn {
                    rate * t
                } else {
                    rate * (2.0 * t_turn - t)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadKind {
    /// Total point force split over a node set [N].
    Force,
    /// Reference traction over an edge set [N/m^2].
    Traction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadEntry {
    pub set: String,
    pub kind: LoadKind,
    pub direction: [f64; 2],
    pub program: Program,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletEntry {
    pub set: String,
    pub components: Vec<usize>,
    /// Prescribed value applied to every listed component (zero supports by
    /// default).
    #[serde(default)]
    pub program: Program,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Time-series CSV path.
    pub csv: Option<String>,
    /// Field-snapshot filename prefix; enables VTK output.
    pub vtk_prefix: Option<String>,
    /// Snapshot cadence in steps.
    pub vtk_every: usize,
    /// Node set whose `probe_set_index`-th node provides `u_x` and `phi`.
    pub probe_set: Option<String>,
    pub probe_set_index: usize,
    /// Element for the strain/stress probe; defaults to the last element.
    pub probe_element: Option<usize>,
    /// Quadrature point of the probe element; defaults to the second point
    /// (or the only one).
    pub probe_qp: Option<usize>,
    /// Node set whose x reactions are summed into `reaction_x`.
    pub reaction_set: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub scenario: ScenarioSection,
    pub mesh: MeshSpec,
    #[serde(default)]
    pub material: Material,
    pub time: TimeSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub loads: Vec<LoadEntry>,
    #[serde(default)]
    pub dirichlet: Vec<DirichletEntry>,
    #[serde(default)]
    pub output: OutputSection,
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    Ok(toml::from_str(text)?)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Apply `key=value` overrides onto the TOML tree before deserialization.
/// Keys are dot-separated; numeric segments index arrays (`loads.0.set`).
pub fn parse_config_with_overrides(
    text: &str,
    overrides: &[(String, String)],
) -> Result<ScenarioConfig, ScenarioError> {
    let mut value: toml::Value = toml::from_str(text)?;
    for (key, raw) in overrides {
        set_path(&mut value, key, raw)?;
    }
    Ok(value.try_into()?)
}

fn parse_literal(raw: &str) -> toml::Value {
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    match raw {
        "true" => toml::Value::Boolean(true),
        "false" => toml::Value::Boolean(false),
        _ => toml::Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut toml::Value, path: &str, raw: &str) -> Result<(), ScenarioError> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(ScenarioError::Config(format!("bad override key '{path}'")));
    }
    let mut cursor = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        if let Ok(idx) = seg.parse::<usize>() {
            let arr = cursor.as_array_mut().ok_or_else(|| {
                ScenarioError::Config(format!("'{path}': segment '{seg}' indexes a non-array"))
            })?;
            let slot = arr.get_mut(idx).ok_or_else(|| {
                ScenarioError::Config(format!("'{path}': index {idx} out of bounds"))
            })?;
            if last {
                *slot = parse_literal(raw);
                return Ok(());
            }
            cursor = slot;
        } else {
            let table = cursor.as_table_mut().ok_or_else(|| {
                ScenarioError::Config(format!("'{path}': segment '{seg}' enters a non-table"))
            })?;
            if last {
                table.insert(seg.to_string(), parse_literal(raw));
                return Ok(());
            }
            cursor = table
                .entry(seg.to_string())
                .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
        }
    }
    unreachable!("loop always returns on the last segment")
}

/// Shipped scenario presets (TOML text compiled in).
pub const PRESET_NAMES: [&str; 6] = [
    "rod_1d",
    "rod_2d",
    "i_shaped_load_unload",
    "i_shaped_tensile_damage",
    "hdpe_small",
    "hdpe_large",
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "rod_1d" => Some(include_str!("../presets/rod_1d.toml")),
        "rod_2d" => Some(include_str!("../presets/rod_2d.toml")),
        "i_shaped_load_unload" => Some(include_str!("../presets/i_shaped_load_unload.toml")),
        "i_shaped_tensile_damage" => Some(include_str!("../presets/i_shaped_tensile_damage.toml")),
        "hdpe_small" => Some(include_str!("../presets/hdpe_small.toml")),
        "hdpe_large" => Some(include_str!("../presets/hdpe_large.toml")),
        _ => None,
    }
}

pub fn preset_config(name: &str) -> Result<ScenarioConfig, ScenarioError> {
    let text = preset_text(name).ok_or_else(|| {
        ScenarioError::Config(format!(
            "unknown preset '{name}' (available: {})",
            PRESET_NAMES.join(", ")
        ))
    })?;
    parse_config(text)
}

/// Named meshes for the standalone mesh generator.
pub fn mesh_preset(name: &str) -> Result<Mesh, ScenarioError> {
    let i_shaped = DogboneGeometry {
        length: 0.1,
        grip_width: 0.03,
        gauge_width: 0.01,
        gauge_length: 0.04,
        transition_length: 0.015,
        thickness: 1.32934e-4,
    };
    let hdpe = DogboneGeometry {
        length: 0.115,
        grip_width: 0.025,
        gauge_width: 0.006,
        gauge_length: 0.033,
        transition_length: 0.025,
        thickness: 0.004,
    };
    match name {
        "rod_1d" => Ok(rod_1d_quadratic(30, 2.0, 1.7671459e-4)),
        "rod_2d" => Ok(rod_2d_strip(30, 1, 2.0, 0.0132934, 0.0132934)),
        "i_shaped" => Ok(dogbone(&i_shaped, 30, 10, false)),
        "i_shaped_coarse" => Ok(dogbone(&i_shaped, 15, 5, false)),
        "hdpe" => Ok(dogbone(&hdpe, 40, 14, true)),
        "hdpe_coarse" => Ok(dogbone(&hdpe, 25, 10, true)),
        _ => Err(ScenarioError::Config(format!(
            "unknown mesh preset '{name}' (available: rod_1d, rod_2d, i_shaped, \
             i_shaped_coarse, hdpe, hdpe_coarse)"
        ))),
    }
}

/// Outcome of one scenario run.
pub struct RunResult {
    pub series: TimeSeries,
    pub steps: usize,
    pub halvings: usize,
    pub final_phi_max: f64,
}

struct Probe {
    node: Option<usize>,
    element: usize,
    qp: usize,
}

fn resolve_probe(cfg: &ScenarioConfig, mesh: &Mesh) -> Result<Probe, ScenarioError> {
    let node = match &cfg.output.probe_set {
        Some(set) => {
            let nodes = mesh.node_set(set)?;
            let idx = cfg.output.probe_set_index;
            if idx >= nodes.len() {
                return Err(ScenarioError::Config(format!(
                    "probe_set_index {idx} out of bounds for set '{set}' ({} nodes)",
                    nodes.len()
                )));
            }
            Some(nodes[idx])
        }
        None => None,
    };
    let n_qp = quadrature(mesh.kind).len();
    let element = cfg.output.probe_element.unwrap_or(mesh.n_elements() - 1);
    if element >= mesh.n_elements() {
        return Err(ScenarioError::Config(format!(
            "probe_element {element} out of bounds ({} elements)",
            mesh.n_elements()
        )));
    }
    let qp = cfg.output.probe_qp.unwrap_or(1.min(n_qp - 1));
    if qp >= n_qp {
        return Err(ScenarioError::Config(format!(
            "probe_qp {qp} out of bounds ({n_qp} points per element)"
        )));
    }
    Ok(Probe { node, element, qp })
}

/// Damage value and reference gradient interpolated at a quadrature point.
fn phi_at_qp(sim: &Simulation, el: usize, q: usize) -> (f64, [f64; 2]) {
    let sh = &sim.shapes[el][q];
    let mut phi = 0.0;
    let mut grad = [0.0; 2];
    for (i, &n) in sim.mesh.elements[el].iter().enumerate() {
        phi += sh.n[i] * sim.phi[n];
        grad[0] += sh.grad[i][0] * sim.phi[n];
        grad[1] += sh.grad[i][1] * sim.phi[n];
    }
    (phi, grad)
}

/// Second Piola-Kirchhoff stress at a quadrature point of the committed
/// state. The newest history sample is split off and treated as the
/// provisional strain so the constitutive conventions apply unchanged.
fn committed_stress(sim: &Simulation, el: usize, q: usize) -> SymTensor2<f64> {
    let h = &sim.histories[el][q];
    if h.steps() == 0 {
        return SymTensor2::zero(h.dim());
    }
    let trunc = h.truncated();
    let e = *h.last();
    let rate = (e - *trunc.last()).scale(1.0 / h.dt());
    let (phi, grad_phi) = phi_at_qp(sim, el, q);
    let st = StressState {
        strain: e,
        strain_rate: rate,
        damage: phi,
        damage_grad: grad_phi,
        history: &trunc,
        coeffs: &sim.coeffs,
        caputo_tail: None,
    };
    second_piola(&sim.material, sim.mode, &st)
}

fn write_snapshot(sim: &Simulation, prefix: &str, step: usize) -> Result<(), ScenarioError> {
    let n_el = sim.mesh.n_elements();
    let mut cell_stress = Vec::with_capacity(n_el);
    for el in 0..n_el {
        let n_qp = sim.shapes[el].len();
        let mut avg = [0.0; 3];
        for q in 0..n_qp {
            let s = committed_stress(sim, el, q);
            let v = crate::tensor::stress_voigt(&s);
            for (slot, acc) in avg.iter_mut().enumerate() {
                *acc += v[slot] / n_qp as f64;
            }
        }
        cell_stress.push(avg);
    }
    let name = vtk_filename(prefix, step);
    if let Some(parent) = Path::new(&name).parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_vtk(
        Path::new(&name),
        &VtkSnapshot {
            mesh: &sim.mesh,
            title: &format!("step {step} t = {:.6e}", sim.t),
            displacement: &sim.u,
            damage: &sim.phi,
            cell_stress: &cell_stress,
        },
    )?;
    Ok(())
}

/// Channel names recorded every step, in column order.
fn channel_names(diagnostics: bool) -> Vec<&'static str> {
    let mut names = vec![
        "time",
        "load",
        "u_x",
        "strain_gl",
        "strain_eng",
        "s11",
        "p11",
        "phi",
        "phi_max",
        "reaction_x",
    ];
    if diagnostics {
        names.push("min_psi_m");
        names.push("min_r");
    }
    names
}

/// Execute a configured scenario start to finish.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunResult, ScenarioError> {
    let mesh = config.mesh.build()?;
    let dynamic = config.scenario.mode == RunMode::Dynamic;
    let mut sim = Simulation::new(
        mesh,
        config.material.clone(),
        config.scenario.stress_mode,
        dynamic,
        config.scenario.damage,
        config.scenario.irreversible,
        config.solver.to_settings(),
        config.time.dt,
    )?;
    for d in &config.dirichlet {
        for &c in &d.components {
            if c >= sim.mesh.dim().coords() {
                return Err(ScenarioError::Config(format!(
                    "dirichlet component {c} out of range for this mesh dimension"
                )));
            }
        }
        sim.mark_fixed(&d.set, &d.components)?;
    }
    let probe = resolve_probe(config, &sim.mesh)?;

    // Validate load targets once so the per-step closure cannot fail.
    {
        let mut scratch = vec![0.0; sim.ndof()];
        for l in &config.loads {
            match l.kind {
                LoadKind::Force => {
                    add_nodal_force(&sim.mesh, &mut scratch, &l.set, [0.0; 2], 1.0)?
                }
                LoadKind::Traction => {
                    add_traction(&sim.mesh, &mut scratch, &l.set, [0.0; 2], 1.0)?
                }
            }
        }
        if let Some(set) = &config.output.reaction_set {
            sim.mesh.node_set(set)?;
        }
    }

    let loads_mesh = sim.mesh.clone();
    let rho = sim.material.density;
    let load_list = config.loads.clone();
    let mut loads = move |t: f64, f: &mut [f64]| {
        for l in &load_list {
            let v = l.program.value(t);
            let vec2 = [l.direction[0] * v, l.direction[1] * v];
            let res = match l.kind {
                LoadKind::Force => add_nodal_force(&loads_mesh, f, &l.set, vec2, rho),
                LoadKind::Traction => add_traction(&loads_mesh, f, &l.set, vec2, rho),
            };
            res.expect("load targets validated before the run");
        }
    };

    let nc = sim.mesh.dim().coords();
    let mut prescribed: Vec<(Vec<usize>, Program)> = Vec::new();
    for d in &config.dirichlet {
        let nodes = sim.mesh.node_set(&d.set)?.to_vec();
        let dofs = nodes
            .iter()
            .flat_map(|&n| d.components.iter().map(move |&c| n * nc + c))
            .collect();
        prescribed.push((dofs, d.program));
    }
    let mut prescribe = move |t: f64, u: &mut [f64]| {
        for (dofs, prog) in &prescribed {
            let v = prog.value(t);
            for &d in dofs {
                u[d] = v;
            }
        }
    };

    let mut f0 = vec![0.0; sim.ndof()];
    loads(0.0, &mut f0);
    sim.set_initial_acceleration(&f0)?;

    let diagnostics = config.scenario.diagnostics;
    let mut series = TimeSeries::new(channel_names(diagnostics));
    let vtk_on = config.output.vtk_prefix.is_some() && config.output.vtk_every > 0;
    if let Some(prefix) = &config.output.vtk_prefix {
        write_snapshot(&sim, prefix, 0)?;
    }

    let t_end = config.time.t_end;
    let eps = 1e-9 * config.time.dt;
    let mut last_snapshot = 0;
    while t_end - sim.t > eps {
        let report = sim.step(&mut loads, &mut prescribe)?;

        let load_value = config
            .loads
            .first()
            .map(|l| l.program.value(sim.t))
            .unwrap_or(0.0);
        let u_x = probe.node.map(|n| sim.u[n * nc]).unwrap_or(0.0);
        let e_probe = *sim.histories[probe.element][probe.qp].last();
        let strain_gl = e_probe[0];
        let strain_eng = (1.0 + 2.0 * strain_gl).max(0.0).sqrt() - 1.0;
        let s_probe = committed_stress(&sim, probe.element, probe.qp);
        let s11 = s_probe[0];
        let grad_u = displacement_gradient_at(
            &sim.mesh,
            &sim.shapes,
            probe.element,
            probe.qp,
            &sim.u,
        );
        let p11 = match nc {
            1 => (1.0 + grad_u[0][0]) * s11,
            _ => (1.0 + grad_u[0][0]) * s11 + grad_u[0][1] * s_probe[2],
        };
        let phi_probe = probe.node.map(|n| sim.phi[n]).unwrap_or(0.0);
        let phi_max = sim.phi.iter().cloned().fold(0.0_f64, f64::max);
        let reaction_x = match &config.output.reaction_set {
            Some(set) => reaction_sum(&sim.mesh, &report.raw_residual, rho, set, 0)?,
            None => 0.0,
        };

        let mut row = vec![
            sim.t, load_value, u_x, strain_gl, strain_eng, s11, p11, phi_probe, phi_max,
            reaction_x,
        ];
        if diagnostics {
            let mut min_psi = f64::INFINITY;
            let mut min_r = f64::INFINITY;
            for el in 0..sim.histories.len() {
                for q in 0..sim.histories[el].len() {
                    let h = &sim.histories[el][q];
                    let psi = memory_potential(h, sim.material.alpha, |e| {
                        memory_modulus_tensor(&sim.material, e)
                    })?;
                    let (phi_qp, _) = phi_at_qp(&sim, el, q);
                    let r = entropy_production(&sim.material, h, phi_qp)?;
                    min_psi = min_psi.min(psi);
                    min_r = min_r.min(r);
                }
            }
            row.push(min_psi);
            row.push(min_r);
        }
        series.push_row(row);

        if vtk_on && sim.step_index % config.output.vtk_every == 0 {
            write_snapshot(
                &sim,
                config.output.vtk_prefix.as_deref().unwrap(),
                sim.step_index,
            )?;
            last_snapshot = sim.step_index;
        }
    }
    if let Some(prefix) = &config.output.vtk_prefix {
        if sim.step_index != last_snapshot {
            write_snapshot(&sim, prefix, sim.step_index)?;
        }
    }
    if let Some(csv) = &config.output.csv {
        if let Some(parent) = Path::new(csv).parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        series.write_csv(Path::new(csv))?;
    }

    let final_phi_max = sim.phi.iter().cloned().fold(0.0_f64, f64::max);
    Ok(RunResult {
        series,
        steps: sim.step_index,
        halvings: sim.halvings,
        final_phi_max,
    })
}

/// Outcome of the partial-vs-complete stress comparison.
pub struct StressComparison {
    /// Deviation of the probe stress series, normalized by the complete
    /// form.
    pub msd: f64,
    /// Final probe strain as Green-Lagrange percent (complete run).
    pub final_strain_gl_pct: f64,
    /// Final probe strain as stretch-based (engineering) percent.
    pub final_strain_eng_pct: f64,
}

/// Run a scenario twice — complete and partial memory stress — and compare
/// the probe stress series.
pub fn compare_stress_modes(config: &ScenarioConfig) -> Result<StressComparison, ScenarioError> {
    let mut quiet = config.clone();
    quiet.output.csv = None;
    quiet.output.vtk_prefix = None;
    let mut cfg_c = quiet.clone();
    cfg_c.scenario.stress_mode = StressMode::Complete;
    let mut cfg_p = quiet;
    cfg_p.scenario.stress_mode = StressMode::Partial;

    let rc = run_scenario(&cfg_c)?;
    let rp = run_scenario(&cfg_p)?;
    let sc = rc.series.column("s11")?;
    let sp = rp.series.column("s11")?;
    let msd = mean_square_deviation(&sc, &sp, Normalization::ByFirst)?;
    let last = rc
        .series
        .rows()
        .last()
        .ok_or_else(|| ScenarioError::Config("empty run".into()))?;
    let gl_idx = rc
        .series
        .columns()
        .iter()
        .position(|c| c == "strain_gl")
        .expect("fixed channel set");
    let eng_idx = gl_idx + 1;
    Ok(StressComparison {
        msd,
        final_strain_gl_pct: 100.0 * last[gl_idx],
        final_strain_eng_pct: 100.0 * last[eng_idx],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_rod_toml() -> String {
        r#"
[scenario]
mode = "dynamic"

[mesh]
kind = "rod1d"
elements = 4
length = 1.0
area = 1.0e-4

[material]
density = 1000.0
youngs_modulus = 1.0e9
poisson_ratio = 0.3
plane = "uniaxial"
elasticity = "linear_spring"
memory_modulus = 1.0e8
memory_form = "scalar"
alpha = 0.5

[time]
dt = 1.0e-4
t_end = 1.0e-3

[[loads]]
set = "right"
kind = "force"
direction = [1.0, 0.0]
program = { kind = "step", value = 5.0 }

[[dirichlet]]
set = "left"
components = [0]

[output]
probe_set = "right"
reaction_set = "left"
"#
        .to_string()
    }

    #[test]
    fn tiny_rod_config_parses_and_runs() {
        let cfg = parse_config(&tiny_rod_toml()).unwrap();
        let res = run_scenario(&cfg).unwrap();
        assert_eq!(res.steps, 10);
        assert_eq!(res.series.len(), 10);
        // The loaded bar moves in the pull direction.
        let u = res.series.column("u_x").unwrap();
        assert!(*u.last().unwrap() > 0.0);
        // The load channel reports the program value.
        assert_relative_eq!(res.series.column("load").unwrap()[0], 5.0);
    }

    #[test]
    fn zero_load_run_keeps_every_channel_at_zero() {
        let mut cfg = parse_config(&tiny_rod_toml()).unwrap();
        cfg.loads.clear();
        let res = run_scenario(&cfg).unwrap();
        for row in res.series.rows() {
            // Every channel except time stays identically zero.
            for v in &row[1..] {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn identical_runs_produce_bit_identical_csv() {
        let cfg = parse_config(&tiny_rod_toml()).unwrap();
        let a = run_scenario(&cfg).unwrap().series.to_csv();
        let b = run_scenario(&cfg).unwrap().series.to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_memory_modulus_makes_stress_modes_identical() {
        // With the constant (scalar) modulus the strain sensitivity of the
        // memory tensor vanishes, so partial and complete stresses coincide
        // exactly and the deviation is zero to machine precision.
        let cfg = parse_config(&tiny_rod_toml()).unwrap();
        let cmp = compare_stress_modes(&cfg).unwrap();
        assert_eq!(cmp.msd, 0.0);
    }

    #[test]
    fn overrides_reach_nested_tables_and_arrays() {
        let cfg = parse_config_with_overrides(
            &tiny_rod_toml(),
            &[
                ("material.alpha".into(), "0.3".into()),
                ("mesh.elements".into(), "7".into()),
                ("loads.0.program.value".into(), "12.5".into()),
                ("scenario.diagnostics".into(), "true".into()),
            ],
        )
        .unwrap();
        assert_relative_eq!(cfg.material.alpha, 0.3);
        assert!(matches!(cfg.mesh, MeshSpec::Rod1d { elements: 7, .. }));
        assert!(matches!(
            cfg.loads[0].program,
            Program::Step { value } if value == 12.5
        ));
        assert!(cfg.scenario.diagnostics);
    }

    #[test]
    fn bad_override_paths_are_rejected() {
        assert!(parse_config_with_overrides(
            &tiny_rod_toml(),
            &[("loads.9.set".into(), "left".into())]
        )
        .is_err());
        assert!(parse_config_with_overrides(
            &tiny_rod_toml(),
            &[("material.alpha.deep".into(), "1".into())]
        )
        .is_err());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let text = tiny_rod_toml().replace("[output]", "[output]\nbogus_key = 1");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn all_presets_parse_and_build_meshes() {
        for name in PRESET_NAMES {
            let cfg = preset_config(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            let mesh = cfg.mesh.build().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(mesh.n_elements() > 0, "{name} has an empty mesh");
            assert!(cfg.time.t_end > cfg.time.dt, "{name} has a degenerate grid");
        }
    }

    #[test]
    fn mesh_presets_generate_valid_meshes() {
        for name in [
            "rod_1d",
            "rod_2d",
            "i_shaped",
            "i_shaped_coarse",
            "hdpe",
            "hdpe_coarse",
        ] {
            let mesh = mesh_preset(name).unwrap();
            mesh.validate().unwrap();
        }
        assert!(mesh_preset("nope").is_err());
    }

    #[test]
    fn triangle_program_turns_around() {
        let p = Program::Triangle {
            rate: 2.0,
            t_turn: 1.0,
        };
        assert_relative_eq!(p.value(0.5), 1.0);
        assert_relative_eq!(p.value(1.0), 2.0);
        assert_relative_eq!(p.value(1.5), 1.0);
        assert_relative_eq!(p.value(2.0), 0.0);
    }

    #[test]
    fn static_traction_on_strip_balances_reactions() {
        // Quasi-static pull on a quad8 strip: the support reaction must
        // equal minus the applied resultant.
        let text = r#"
[scenario]
mode = "quasi_static"

[mesh]
kind = "rod2d_strip"
nx = 2
ny = 1
length = 0.1
height = 0.02
thickness = 0.01

[material]
density = 1000.0
youngs_modulus = 1.0e9
poisson_ratio = 0.3
plane = "stress"
elasticity = "neo_hookean"
memory_modulus = 0.0
alpha = 0.5

[time]
dt = 0.1
t_end = 0.3

[[loads]]
set = "right"
kind = "traction"
direction = [1.0, 0.0]
program = { kind = "ramp", rate = 1.0e7 }

[[dirichlet]]
set = "left"
components = [0, 1]

[output]
probe_set = "right"
probe_set_index = 1
reaction_set = "left"
"#;
        let cfg = parse_config(text).unwrap();
        let res = run_scenario(&cfg).unwrap();
        let reactions = res.series.column("reaction_x").unwrap();
        let loads = res.series.column("load").unwrap();
        let area = 0.02 * 0.01;
        for (r, l) in reactions.iter().zip(&loads) {
            assert_relative_eq!(*r, -l * area, max_relative = 1e-6);
        }
        // The strip stretches along the pull.
        assert!(*res.series.column("u_x").unwrap().last().unwrap() > 0.0);
        assert!(*res.series.column("s11").unwrap().last().unwrap() > 0.0);
    }

    #[test]
    fn vtk_snapshots_are_written_at_the_requested_cadence() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("snap").to_str().unwrap().to_string();
        let mut cfg = parse_config(&tiny_rod_toml()).unwrap();
        cfg.output.vtk_prefix = Some(prefix.clone());
        cfg.output.vtk_every = 5;
        run_scenario(&cfg).unwrap();
        for step in [0, 5, 10] {
            let path = vtk_filename(&prefix, step);
            assert!(
                std::path::Path::new(&path).exists(),
                "missing snapshot {path}"
            );
        }
    }

    #[test]
    fn diagnostics_channels_report_nonnegative_minima() {
        let mut cfg = parse_config(&tiny_rod_toml()).unwrap();
        cfg.scenario.diagnostics = true;
        let res = run_scenario(&cfg).unwrap();
        for v in res.series.column("min_psi_m").unwrap() {
            assert!(v >= -1e-18, "memory potential dipped to {v}");
        }
        for v in res.series.column("min_r").unwrap() {
            assert!(v >= -1e-18, "entropy production dipped to {v}");
        }
    }
}

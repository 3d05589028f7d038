//! Scenario configuration and the end-to-end analysis pipelines.
//!
//! A scenario is a single TOML file with nested blocks; every physical
//! quantity carries a unit-suffixed key (`..._m`, `..._hz`, `..._deg`,
//! `..._v`). Optional blocks fall back to the prototype defaults (GT7-29001
//! mixture, AF32/gold stack, calibrated delay line, broadside excitation).
//! The `layout` block is always required.

use std::path::Path;

use serde::Deserialize;

use crate::aperture::{aperture_area, build_layout, ApertureLayout, GridKind};
use crate::error::{Error, Result};
use crate::materials::{
    array_power, response_times, LcMaterial, ResponseTimeBase, StackMaterials,
};
use crate::metrics::{
    bandwidth_3db, efficiency_from_simulation, reduce_measurement, Bandwidth, EfficiencySpectrum,
    MeasuredTraces, TraceGeometry,
};
use crate::optimizer::{
    objective_power, optimize_columns, optimize_elements, OptimizationReport, PowerObjective,
};
use crate::phase_shifter::{
    calibrate_line_with_fom, compactness, differential_phase, effective_permittivity,
    figure_of_merit, insertion_loss, DelayLineSpec, DEFAULT_DPHI_TARGET, DEFAULT_FOM_TARGET,
};
use crate::scattering::{
    build_element_states, far_field, ris_rcs, FarFieldGrid, PlaneWave, RadiatorModel,
    DEFAULT_ELEMENT_EXPONENT, DEFAULT_RADIATOR_BW,
};
use crate::steering::{phases_to_voltages, squint_predict, synthesize_profile, PhaseProfile};
use crate::tolerance::{random_field, tilted_field, uniform_field, ToleranceField};
use crate::wavelength;

fn default_t_nom() -> f64 {
    4.6e-6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsConfig {
    pub eps_perp: f64,
    pub tan_perp: f64,
    pub eps_par: f64,
    pub tan_par: f64,
    #[serde(default = "MaterialsConfig::default_v_threshold")]
    pub v_threshold_v: f64,
    pub v_scale_v: Option<f64>,
}

impl MaterialsConfig {
    fn default_v_threshold() -> f64 {
        2.0
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackConfig {
    pub eps_glass: f64,
    pub tan_glass: f64,
    #[serde(default = "StackConfig::default_t_glass")]
    pub t_glass_m: f64,
    #[serde(default = "StackConfig::default_t_gold")]
    pub t_gold_m: f64,
    #[serde(default = "StackConfig::default_conductor")]
    pub conductor: String,
}

impl StackConfig {
    fn default_t_glass() -> f64 {
        300e-6
    }
    fn default_t_gold() -> f64 {
        2e-6
    }
    fn default_conductor() -> String {
        "gold".to_string()
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    /// Explicit line length; omit to calibrate from `target_dphi_deg`.
    pub l_phys_m: Option<f64>,
    pub t_lc_nominal_m: Option<f64>,
    pub fill_max: Option<f64>,
    pub t_half_m: Option<f64>,
    /// Explicit extra loss rate; omit to pin the figure of merit.
    pub alpha_extra_db_per_m: Option<f64>,
    pub target_dphi_deg: Option<f64>,
    pub fom_target_deg_per_db: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    pub rows: usize,
    pub cols: usize,
    pub dx_lambda0: Option<f64>,
    pub dx_m: Option<f64>,
    pub dy_lambda0: Option<f64>,
    pub dy_m: Option<f64>,
    pub grid: GridKind,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub kind: String,
    pub t_nom_m: f64,
    pub gx: f64,
    pub gy: f64,
    pub sigma_m: f64,
    pub corr_len_m: f64,
    pub seed: u64,
    pub misalign_um: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            kind: "uniform".to_string(),
            t_nom_m: default_t_nom(),
            gx: 0.0,
            gy: 0.0,
            sigma_m: 0.0,
            corr_len_m: 3e-3,
            seed: 0,
            misalign_um: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcitationConfig {
    pub theta_inc_deg: f64,
    pub phi_inc_deg: f64,
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub f_points: usize,
    pub f_design_hz: f64,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        ExcitationConfig {
            theta_inc_deg: 0.0,
            phi_inc_deg: 0.0,
            f_start_hz: 54e9,
            f_stop_hz: 66e9,
            f_points: 201,
            f_design_hz: 60e9,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    pub theta_r_deg: f64,
    pub phi_r_deg: f64,
    /// Wrap modulus in degrees.
    pub wrap_deg: f64,
    /// True-time-delay profile (no wrapping) when set.
    pub unwrapped: bool,
    pub column_constrained: bool,
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig {
            theta_r_deg: 30.0,
            phi_r_deg: 0.0,
            wrap_deg: 360.0,
            unwrapped: false,
            column_constrained: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AngleGridConfig {
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub theta_points: usize,
    /// Peak-tracking window (deg).
    pub window_deg: f64,
}

impl Default for AngleGridConfig {
    fn default() -> Self {
        AngleGridConfig {
            theta_min_deg: -90.0,
            theta_max_deg: 90.0,
            theta_points: 721,
            window_deg: 5.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellConfig {
    pub element_exponent: f64,
    pub radiator_bw_frac: f64,
    /// Explicit radiator center loss; omit to pin the efficiency anchor.
    pub radiator_il_db: Option<f64>,
    pub eta_anchor: f64,
    pub radiator_enabled: bool,
    pub p_element_w: f64,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig {
            element_exponent: DEFAULT_ELEMENT_EXPONENT,
            radiator_bw_frac: DEFAULT_RADIATOR_BW,
            radiator_il_db: None,
            eta_anchor: 0.215,
            radiator_enabled: true,
            p_element_w: 21.5e-9,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub theta_start_deg: f64,
    pub theta_stop_deg: f64,
    pub theta_step_deg: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            theta_start_deg: -60.0,
            theta_stop_deg: 60.0,
            theta_step_deg: 15.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    pub budget: usize,
    pub seed: u64,
    pub v_min: f64,
    pub v_max: f64,
    /// "analytic" (assumed-uniform profile) or "flat" (unsteered bias).
    pub initial: String,
    pub per_element: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            budget: 500_000,
            seed: 1,
            v_min: 0.0,
            v_max: 20.0,
            initial: "analytic".to_string(),
            per_element: false,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReduceConfig {
    pub theta_tx_deg: Option<f64>,
    pub theta_rx_deg: Option<f64>,
    pub phi_tx_deg: Option<f64>,
    pub phi_rx_deg: Option<f64>,
    pub area_ris_m2: Option<f64>,
    pub area_mp_m2: Option<f64>,
}

/// Raw scenario file contents.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub output_dir: Option<String>,
    pub materials: Option<MaterialsConfig>,
    pub stack: Option<StackConfig>,
    #[serde(default)]
    pub line: LineConfig,
    pub layout: Option<LayoutConfig>,
    #[serde(default)]
    pub tolerance: ToleranceConfig,
    #[serde(default)]
    pub excitation: ExcitationConfig,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default)]
    pub grid: AngleGridConfig,
    #[serde(default)]
    pub cell: CellConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    #[serde(default)]
    pub reduce: ReduceConfig,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("scenario parse failed: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

/// Fully validated, ready-to-run scenario.
#[derive(Debug, Clone)]
pub struct CompiledScenario {
    pub material: LcMaterial,
    pub stack: StackMaterials,
    pub spec: DelayLineSpec,
    pub radiator: RadiatorModel,
    pub exponent: f64,
    pub p_element_w: f64,
    pub layout: ApertureLayout,
    pub tolerance: ToleranceConfig,
    pub wave: PlaneWave,
    pub freq_axis: Vec<f64>,
    pub theta_axis: Vec<f64>,
    pub f_design: f64,
    pub target: TargetConfig,
    pub window_deg: f64,
    pub sweep: SweepConfig,
    pub optimize: OptimizeConfig,
    pub reduce: ReduceConfig,
    pub output_dir: Option<String>,
}

/// Validate a scenario and build every model object it references.
pub fn compile(scenario: &Scenario) -> Result<CompiledScenario> {
    let material = match &scenario.materials {
        None => LcMaterial::gt7_29001(),
        Some(m) => {
            let default = LcMaterial::gt7_29001();
            LcMaterial {
                eps_perp: m.eps_perp,
                tan_perp: m.tan_perp,
                eps_par: m.eps_par,
                tan_par: m.tan_par,
                v_threshold: m.v_threshold_v,
                v_scale: m.v_scale_v.unwrap_or(default.v_scale),
            }
        }
    };
    material
        .validate()
        .map_err(|e| Error::Config(format!("materials: {e}")))?;

    let stack = match &scenario.stack {
        None => StackMaterials::af32_gold(),
        Some(s) => StackMaterials {
            eps_glass: s.eps_glass,
            tan_glass: s.tan_glass,
            t_glass: s.t_glass_m,
            t_gold: s.t_gold_m,
            conductor: s.conductor.clone(),
        },
    };
    stack
        .validate()
        .map_err(|e| Error::Config(format!("stack: {e}")))?;

    let exc = &scenario.excitation;
    if exc.f_points < 1 {
        return Err(Error::Config("excitation.f_points: must be at least 1".into()));
    }
    if exc.f_points > 1 && exc.f_stop_hz <= exc.f_start_hz {
        return Err(Error::Config(
            "excitation: f_stop_hz must exceed f_start_hz".into(),
        ));
    }
    if exc.f_start_hz <= 0.0 || exc.f_design_hz <= 0.0 {
        return Err(Error::Config("excitation: frequencies must be positive".into()));
    }
    let freq_axis: Vec<f64> = if exc.f_points == 1 {
        vec![exc.f_start_hz]
    } else {
        (0..exc.f_points)
            .map(|i| {
                exc.f_start_hz
                    + (exc.f_stop_hz - exc.f_start_hz) * i as f64 / (exc.f_points - 1) as f64
            })
            .collect()
    };
    let f_design = exc.f_design_hz;
    let lambda0 = wavelength(f_design);

    let lay = scenario
        .layout
        .as_ref()
        .ok_or_else(|| Error::Config("layout: block required".to_string()))?;
    if lay.rows == 0 || lay.cols == 0 {
        return Err(Error::Config("layout: rows and cols must be at least 1".into()));
    }
    let dx = match (lay.dx_m, lay.dx_lambda0) {
        (Some(m), None) => m,
        (None, Some(l)) => l * lambda0,
        (None, None) => 0.45 * lambda0,
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "layout: give dx_m or dx_lambda0, not both".into(),
            ))
        }
    };
    let dy = match (lay.dy_m, lay.dy_lambda0) {
        (Some(m), None) => m,
        (None, Some(l)) => l * lambda0,
        (None, None) => dx,
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "layout: give dy_m or dy_lambda0, not both".into(),
            ))
        }
    };
    let layout = build_layout(lay.rows, lay.cols, dx, dy, lay.grid)
        .map_err(|e| Error::Config(format!("layout: {e}")))?;

    let line = &scenario.line;
    let t_nom = line.t_lc_nominal_m.unwrap_or_else(default_t_nom);
    let fill_max = line.fill_max.unwrap_or(0.9);
    let t_half = line.t_half_m.unwrap_or(1.0e-6);
    let spec = match line.l_phys_m {
        Some(l_phys) => DelayLineSpec {
            l_phys,
            t_lc_nominal: t_nom,
            fill_max,
            t_half,
            alpha_extra: line.alpha_extra_db_per_m.unwrap_or(0.0),
        },
        None => {
            let mut spec = calibrate_line_with_fom(
                line.target_dphi_deg.unwrap_or(DEFAULT_DPHI_TARGET),
                line.fom_target_deg_per_db.unwrap_or(DEFAULT_FOM_TARGET),
                f_design,
                &material,
                &stack,
                t_nom,
                fill_max,
                t_half,
            )
            .map_err(|e| Error::Config(format!("line: {e}")))?;
            if let Some(alpha) = line.alpha_extra_db_per_m {
                spec.alpha_extra = alpha;
            }
            spec
        }
    };
    spec.validate()
        .map_err(|e| Error::Config(format!("line: {e}")))?;

    let cell = &scenario.cell;
    let radiator = if !cell.radiator_enabled {
        RadiatorModel::disabled(f_design)
    } else if let Some(il) = cell.radiator_il_db {
        RadiatorModel {
            f_center: f_design,
            fractional_bw: cell.radiator_bw_frac,
            il_peak_db: il,
        }
    } else {
        RadiatorModel::calibrated(
            f_design,
            cell.radiator_bw_frac,
            cell.eta_anchor,
            &spec,
            &material,
            &stack,
        )
        .map_err(|e| Error::Config(format!("cell: {e}")))?
    };

    let tol = &scenario.tolerance;
    match tol.kind.as_str() {
        "uniform" | "tilted" | "random" => {}
        other => {
            return Err(Error::Config(format!(
                "tolerance.kind: expected uniform|tilted|random, got '{other}'"
            )))
        }
    }
    if tol.t_nom_m <= 0.0 {
        return Err(Error::Config("tolerance.t_nom_m: must be positive".into()));
    }

    let grid = &scenario.grid;
    if grid.theta_points < 1 {
        return Err(Error::Config("grid.theta_points: must be at least 1".into()));
    }
    if grid.theta_points > 1 && grid.theta_max_deg <= grid.theta_min_deg {
        return Err(Error::Config(
            "grid: theta_max_deg must exceed theta_min_deg".into(),
        ));
    }
    let theta_axis: Vec<f64> = if grid.theta_points == 1 {
        vec![grid.theta_min_deg]
    } else {
        (0..grid.theta_points)
            .map(|i| {
                grid.theta_min_deg
                    + (grid.theta_max_deg - grid.theta_min_deg) * i as f64
                        / (grid.theta_points - 1) as f64
            })
            .collect()
    };

    let wave = PlaneWave {
        theta_inc: exc.theta_inc_deg,
        phi_inc: exc.phi_inc_deg,
        frequency: f_design,
        amplitude: 1.0,
    };
    wave.validate()
        .map_err(|e| Error::Config(format!("excitation: {e}")))?;

    let tgt = &scenario.target;
    if tgt.theta_r_deg.abs() >= 90.0 || tgt.phi_r_deg.abs() >= 90.0 {
        return Err(Error::Config(
            "target: steering angles must lie in (-90, 90) deg".into(),
        ));
    }
    if tgt.wrap_deg <= 0.0 {
        return Err(Error::Config("target.wrap_deg: must be positive".into()));
    }

    let opt = &scenario.optimize;
    match opt.initial.as_str() {
        "analytic" | "flat" => {}
        other => {
            return Err(Error::Config(format!(
                "optimize.initial: expected analytic|flat, got '{other}'"
            )))
        }
    }
    if opt.v_min >= opt.v_max {
        return Err(Error::Config("optimize: v_min must be below v_max".into()));
    }

    Ok(CompiledScenario {
        material,
        stack,
        spec,
        radiator,
        exponent: cell.element_exponent,
        p_element_w: cell.p_element_w,
        layout,
        tolerance: tol.clone(),
        wave,
        freq_axis,
        theta_axis,
        f_design,
        target: tgt.clone(),
        window_deg: grid.window_deg,
        sweep: scenario.sweep.clone(),
        optimize: opt.clone(),
        reduce: scenario.reduce.clone(),
        output_dir: scenario.output_dir.clone(),
    })
}

impl CompiledScenario {
    /// Build the true thickness field; `seed` overrides the config seed.
    pub fn build_field(&self, seed: Option<u64>) -> Result<ToleranceField> {
        let t = &self.tolerance;
        let mut field = match t.kind.as_str() {
            "uniform" => uniform_field(&self.layout, t.t_nom_m)?,
            "tilted" => tilted_field(&self.layout, t.t_nom_m, t.gx, t.gy)?,
            "random" => random_field(
                &self.layout,
                t.t_nom_m,
                t.sigma_m,
                t.corr_len_m,
                seed.unwrap_or(t.seed),
            )?,
            other => return Err(Error::Config(format!("tolerance.kind: '{other}'"))),
        };
        field.misalignment = (t.misalign_um * 1e-6, 0.0);
        Ok(field)
    }

    /// Thickness the drive electronics assume: the uniform nominal layer.
    pub fn assumed_thickness(&self) -> Vec<f64> {
        vec![self.tolerance.t_nom_m; self.layout.len()]
    }

    /// Synthesize the steering profile for the configured target.
    pub fn profile(&self) -> Result<PhaseProfile> {
        synthesize_profile(
            &self.layout,
            (self.target.theta_r_deg, self.target.phi_r_deg),
            &self.wave,
            self.target.wrap_deg,
            self.target.column_constrained,
            !self.target.unwrapped,
        )
    }

    /// Analytic bias voltages for the configured target, assuming the
    /// uniform nominal thickness.
    pub fn analytic_voltages(&self) -> Result<Vec<f64>> {
        let profile = self.profile()?;
        phases_to_voltages(
            &profile,
            &self.material,
            &self.stack,
            &self.spec,
            &self.assumed_thickness(),
        )
    }
}

/// Outputs of the steer pipeline.
#[derive(Debug, Clone)]
pub struct SteerOutputs {
    pub profile: PhaseProfile,
    pub voltages: Vec<f64>,
    pub raw: FarFieldGrid,
    pub rcs: FarFieldGrid,
    pub spectrum: EfficiencySpectrum,
    pub bw_tracked: Option<Bandwidth>,
    pub bw_fixed: Option<Bandwidth>,
    pub summary: String,
}

/// Run the full steering analysis: profile, voltages, far field over
/// (frequency x theta) at the target elevation, RCS, efficiency spectrum
/// with squint-corrected tracking and both bandwidth readings.
pub fn run_steer(cs: &CompiledScenario, seed: Option<u64>) -> Result<SteerOutputs> {
    let profile = cs.profile()?;
    let voltages = phases_to_voltages(
        &profile,
        &cs.material,
        &cs.stack,
        &cs.spec,
        &cs.assumed_thickness(),
    )?;
    let field = cs.build_field(seed)?;
    let states = build_element_states(
        &cs.material,
        &cs.stack,
        &cs.spec,
        &cs.radiator,
        &voltages,
        &field,
        &cs.freq_axis,
    )?;
    let phi_axis = vec![cs.target.phi_r_deg];
    let raw = far_field(
        &cs.layout,
        &states,
        &cs.wave,
        &cs.freq_axis,
        &cs.theta_axis,
        &phi_axis,
        cs.exponent,
    )?;
    let rcs = ris_rcs(&raw, &cs.layout)?;
    let spectrum = efficiency_from_simulation(
        &rcs,
        &cs.layout,
        (cs.wave.theta_inc, cs.wave.phi_inc),
        (cs.target.theta_r_deg, cs.target.phi_r_deg),
        cs.window_deg,
    )?;

    let bw_tracked = bandwidth_3db(&cs.freq_axis, &spectrum.mag_db).ok();
    // Fixed-angle reading: magnitude at the grid sample nearest the target.
    let ti_fixed = nearest_index(&cs.theta_axis, cs.target.theta_r_deg);
    let fixed_mag: Vec<f64> = (0..cs.freq_axis.len())
        .map(|fi| 10.0 * rcs.at(fi, ti_fixed, 0).re.max(1e-300).log10())
        .collect();
    let bw_fixed = bandwidth_3db(&cs.freq_axis, &fixed_mag).ok();

    let mut summary = String::new();
    summary.push_str(&format!(
        "target_theta_deg: {:.3}\ntarget_phi_deg: {:.3}\nelements: {}\n",
        cs.target.theta_r_deg,
        cs.target.phi_r_deg,
        cs.layout.len()
    ));
    let (peak_fi, peak_eta) = spectrum
        .eta
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, &e)| (i, e))
        .unwrap_or((0, f64::NAN));
    summary.push_str(&format!(
        "peak_eta: {:.6}\npeak_eta_freq_hz: {:.6e}\n",
        peak_eta, cs.freq_axis[peak_fi]
    ));
    if let Some(bw) = &bw_tracked {
        summary.push_str(&format!(
            "bw_tracked_frac: {:.6}\nbw_tracked_f_lo_hz: {:.6e}\nbw_tracked_f_hi_hz: {:.6e}\nbw_tracked_f_center_hz: {:.6e}\n",
            bw.fractional, bw.f_lo, bw.f_hi, bw.f_center
        ));
    }
    if let Some(bw) = &bw_fixed {
        summary.push_str(&format!("bw_fixed_frac: {:.6}\n", bw.fractional));
    }
    for (fi, &f) in cs.freq_axis.iter().enumerate() {
        if fi % (cs.freq_axis.len() / 8).max(1) == 0 {
            let sq = squint_predict(&profile, f)?;
            summary.push_str(&format!(
                "track f={:.4e} theta_pk={:.3} squint_predicted={:.3}\n",
                f, spectrum.theta_track[fi], sq.theta_deg
            ));
        }
    }
    Ok(SteerOutputs {
        profile,
        voltages,
        raw,
        rcs,
        spectrum,
        bw_tracked,
        bw_fixed,
        summary,
    })
}

fn nearest_index(axis: &[f64], value: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &x) in axis.iter().enumerate() {
        let d = (x - value).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Outputs of the steering-angle sweep.
#[derive(Debug, Clone)]
pub struct SweepOutputs {
    /// Long CSV: target_deg, theta_deg, mag_db.
    pub patterns_csv: String,
    pub summary: String,
}

/// Pattern vs steering target at the design frequency.
pub fn run_sweep(cs: &CompiledScenario, seed: Option<u64>) -> Result<SweepOutputs> {
    let sw = &cs.sweep;
    if sw.theta_step_deg <= 0.0 {
        return Err(Error::Config("sweep.theta_step_deg: must be positive".into()));
    }
    let field = cs.build_field(seed)?;
    let freq_axis = vec![cs.f_design];
    let phi_axis = vec![cs.target.phi_r_deg];
    let mut patterns = String::from("target_deg,theta_deg,mag_db\n");
    let mut summary = String::new();
    let mut target = sw.theta_start_deg;
    while target <= sw.theta_stop_deg + 1e-9 {
        let profile = synthesize_profile(
            &cs.layout,
            (target, cs.target.phi_r_deg),
            &cs.wave,
            cs.target.wrap_deg,
            cs.target.column_constrained,
            !cs.target.unwrapped,
        )?;
        let voltages = phases_to_voltages(
            &profile,
            &cs.material,
            &cs.stack,
            &cs.spec,
            &cs.assumed_thickness(),
        )?;
        let states = build_element_states(
            &cs.material,
            &cs.stack,
            &cs.spec,
            &cs.radiator,
            &voltages,
            &field,
            &freq_axis,
        )?;
        let grid = far_field(
            &cs.layout,
            &states,
            &cs.wave,
            &freq_axis,
            &cs.theta_axis,
            &phi_axis,
            cs.exponent,
        )?;
        let mut peak_mag = f64::NEG_INFINITY;
        let mut peak_theta = cs.theta_axis[0];
        for (ti, &th) in cs.theta_axis.iter().enumerate() {
            let mag_db = 20.0 * grid.at(0, ti, 0).norm().max(1e-300).log10();
            patterns.push_str(&format!("{target:.3},{th:.4},{mag_db:.6}\n"));
            if mag_db > peak_mag {
                peak_mag = mag_db;
                peak_theta = th;
            }
        }
        summary.push_str(&format!(
            "target={target:.3} peak_theta={peak_theta:.3} peak_mag_db={peak_mag:.4}\n"
        ));
        target += sw.theta_step_deg;
    }
    Ok(SweepOutputs {
        patterns_csv: patterns,
        summary,
    })
}

/// One Monte-Carlo trial result.
#[derive(Debug, Clone, Copy)]
pub struct McTrial {
    pub trial: usize,
    pub seed: u64,
    pub peak_eta: f64,
    pub peak_theta_deg: f64,
    pub peak_offset_deg: f64,
    pub clamp_events: usize,
    pub improvement_db: Option<f64>,
}

/// Outputs of the tolerance Monte Carlo.
#[derive(Debug, Clone)]
pub struct McOutputs {
    pub trials: Vec<McTrial>,
    pub csv: String,
    pub summary: String,
}

/// Monte Carlo over tolerance realizations at the design frequency.
pub fn run_tolerance_mc(
    cs: &CompiledScenario,
    n_trials: usize,
    seed_base: u64,
    with_optimize: bool,
) -> Result<McOutputs> {
    if n_trials == 0 {
        return Err(Error::Config("trials: must be at least 1".into()));
    }
    let voltages = cs.analytic_voltages()?;
    let freq_axis = vec![cs.f_design];
    let phi_axis = vec![cs.target.phi_r_deg];
    let area = aperture_area(&cs.layout);
    let mut trials = Vec::with_capacity(n_trials);
    for trial in 0..n_trials {
        let seed = seed_base.wrapping_add(trial as u64);
        let field = cs.build_field(Some(seed))?;
        let states = build_element_states(
            &cs.material,
            &cs.stack,
            &cs.spec,
            &cs.radiator,
            &voltages,
            &field,
            &freq_axis,
        )?;
        let raw = far_field(
            &cs.layout,
            &states,
            &cs.wave,
            &freq_axis,
            &cs.theta_axis,
            &phi_axis,
            cs.exponent,
        )?;
        let rcs = ris_rcs(&raw, &cs.layout)?;
        // Global peak over the azimuth cut.
        let mut best_ti = 0;
        let mut best = f64::NEG_INFINITY;
        for ti in 0..cs.theta_axis.len() {
            let m = rcs.at(0, ti, 0).re;
            if m > best {
                best = m;
                best_ti = ti;
            }
        }
        let lambda = wavelength(cs.f_design);
        let cos_all = cs.wave.theta_inc.to_radians().cos()
            * cs.wave.phi_inc.to_radians().cos()
            * cs.theta_axis[best_ti].to_radians().cos()
            * cs.target.phi_r_deg.to_radians().cos();
        let peak_eta =
            lambda * lambda * best / (4.0 * std::f64::consts::PI * area * area * cos_all);
        let improvement_db = if with_optimize {
            let objective = PowerObjective {
                layout: &cs.layout,
                field: &field,
                material: &cs.material,
                stack: &cs.stack,
                spec: &cs.spec,
                radiator: &cs.radiator,
                wave: cs.wave,
                target: (cs.target.theta_r_deg, cs.target.phi_r_deg),
                frequency: cs.f_design,
                exponent: cs.exponent,
            };
            let report = optimize_columns(
                &objective,
                &voltages,
                (cs.optimize.v_min, cs.optimize.v_max),
                cs.optimize.budget,
                seed,
            )?;
            Some(report.improvement_db)
        } else {
            None
        };
        trials.push(McTrial {
            trial,
            seed,
            peak_eta,
            peak_theta_deg: cs.theta_axis[best_ti],
            peak_offset_deg: cs.theta_axis[best_ti] - cs.target.theta_r_deg,
            clamp_events: field.clamp_events,
            improvement_db,
        });
    }

    let mut csv = String::from(
        "trial,seed,peak_eta,peak_theta_deg,peak_offset_deg,clamp_events,improvement_db\n",
    );
    for t in &trials {
        let imp = t
            .improvement_db
            .map(|x| format!("{x:.6}"))
            .unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{:.9e},{:.4},{:.4},{},{}\n",
            t.trial, t.seed, t.peak_eta, t.peak_theta_deg, t.peak_offset_deg, t.clamp_events, imp
        ));
    }
    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    };
    let quartiles = |mut v: Vec<f64>| -> (f64, f64) {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| -> f64 {
            let x = p * (v.len() - 1) as f64;
            let i = x.floor() as usize;
            let t = x - i as f64;
            if i + 1 < v.len() {
                v[i] * (1.0 - t) + v[i + 1] * t
            } else {
                v[i]
            }
        };
        (q(0.25), q(0.75))
    };
    let etas: Vec<f64> = trials.iter().map(|t| t.peak_eta).collect();
    let offsets: Vec<f64> = trials.iter().map(|t| t.peak_offset_deg).collect();
    let (eta_q1, eta_q3) = quartiles(etas.clone());
    let (off_q1, off_q3) = quartiles(offsets.clone());
    let mut summary = format!(
        "trials: {n_trials}\nmedian_peak_eta: {:.6}\neta_iqr: [{:.6}, {:.6}]\n\
         median_peak_offset_deg: {:.4}\noffset_iqr: [{:.4}, {:.4}]\n",
        median(etas),
        eta_q1,
        eta_q3,
        median(offsets),
        off_q1,
        off_q3
    );
    if with_optimize {
        let imps: Vec<f64> = trials.iter().filter_map(|t| t.improvement_db).collect();
        let (q1, q3) = quartiles(imps.clone());
        summary.push_str(&format!(
            "median_improvement_db: {:.4}\nimprovement_iqr: [{:.4}, {:.4}]\n",
            median(imps),
            q1,
            q3
        ));
    }
    Ok(McOutputs {
        trials,
        csv,
        summary,
    })
}

/// Outputs of the optimize pipeline.
#[derive(Debug, Clone)]
pub struct OptimizeOutputs {
    pub report: OptimizationReport,
    pub summary: String,
    pub log_csv: String,
}

/// Optimize the bias voltages against the true tolerance field.
pub fn run_optimize(cs: &CompiledScenario, seed: Option<u64>) -> Result<OptimizeOutputs> {
    let field = cs.build_field(seed)?;
    let initial = match cs.optimize.initial.as_str() {
        "analytic" => cs.analytic_voltages()?,
        _ => vec![cs.material.v_threshold; cs.layout.len()],
    };
    let objective = PowerObjective {
        layout: &cs.layout,
        field: &field,
        material: &cs.material,
        stack: &cs.stack,
        spec: &cs.spec,
        radiator: &cs.radiator,
        wave: cs.wave,
        target: (cs.target.theta_r_deg, cs.target.phi_r_deg),
        frequency: cs.f_design,
        exponent: cs.exponent,
    };
    let opt_seed = seed.unwrap_or(cs.optimize.seed);
    let report = if cs.optimize.per_element {
        optimize_elements(
            &objective,
            &initial,
            (cs.optimize.v_min, cs.optimize.v_max),
            cs.optimize.budget,
            opt_seed,
        )?
    } else {
        optimize_columns(
            &objective,
            &initial,
            (cs.optimize.v_min, cs.optimize.v_max),
            cs.optimize.budget,
            opt_seed,
        )?
    };
    let check = objective_power(&objective, &report.voltages)?;
    let mut summary = report.summary();
    summary.push_str(&format!("verified_power_db: {check:.4}\n"));
    let log_csv = report.log_csv();
    Ok(OptimizeOutputs {
        report,
        summary,
        log_csv,
    })
}

/// Reduce measured traces using the scenario geometry (explicit `[reduce]`
/// values override the layout/target-derived defaults).
pub fn run_reduce(cs: &CompiledScenario, traces_text: &str) -> Result<(EfficiencySpectrum, String)> {
    let (freq, ris, mp) = crate::metrics::parse_traces_csv(traces_text)?;
    let area = aperture_area(&cs.layout);
    let geometry = TraceGeometry {
        theta_tx: cs.reduce.theta_tx_deg.unwrap_or(cs.wave.theta_inc),
        theta_rx: cs.reduce.theta_rx_deg.unwrap_or(cs.target.theta_r_deg),
        phi_tx: cs.reduce.phi_tx_deg.unwrap_or(cs.wave.phi_inc),
        phi_rx: cs.reduce.phi_rx_deg.unwrap_or(cs.target.phi_r_deg),
        area_ris: cs.reduce.area_ris_m2.unwrap_or(area),
        area_mp: cs.reduce.area_mp_m2.unwrap_or(area),
    };
    let traces = MeasuredTraces {
        freq_axis: freq,
        s21_ris_db: ris,
        s21_mp_db: mp,
        geometry,
    };
    let spectrum = reduce_measurement(&traces)?;
    let f_mid = traces.freq_axis[traces.freq_axis.len() / 2];
    let sigma_mp = crate::scattering::metal_plate_rcs(
        geometry.area_mp,
        geometry.theta_tx,
        geometry.theta_rx,
        geometry.phi_tx,
        geometry.phi_rx,
        f_mid,
    )?;
    let summary = format!(
        "samples: {}\nsigma_mp_at_{:.4e}_hz_m2: {:.6e}\ngeometry: theta_tx={:.2} theta_rx={:.2} phi_tx={:.2} phi_rx={:.2}\n",
        traces.freq_axis.len(),
        f_mid,
        sigma_mp,
        geometry.theta_tx,
        geometry.theta_rx,
        geometry.phi_tx,
        geometry.phi_rx
    );
    Ok((spectrum, summary))
}

/// Engineering-notation formatting with SI prefixes, trimming trailing
/// zeros ("21.5 mW", "2.58 uW").
pub fn format_si(value: f64, unit: &str) -> String {
    if value == 0.0 {
        return format!("0 {unit}");
    }
    let prefixes: [(f64, &str); 9] = [
        (1e9, "G"),
        (1e6, "M"),
        (1e3, "k"),
        (1.0, ""),
        (1e-3, "m"),
        (1e-6, "u"),
        (1e-9, "n"),
        (1e-12, "p"),
        (1e-15, "f"),
    ];
    let mag = value.abs();
    let (scale, prefix) = prefixes
        .iter()
        .find(|(s, _)| mag >= *s)
        .copied()
        .unwrap_or((1e-15, "f"));
    let scaled = value / scale;
    let mut text = format!("{scaled:.6}");
    while text.contains('.') && (text.ends_with('0') || text.ends_with('.')) {
        text.pop();
    }
    format!("{text} {prefix}{unit}")
}

/// Plain-text report: power, response times, line metrics, layout stats.
pub fn run_report(cs: &CompiledScenario) -> Result<String> {
    let mut out = String::new();
    let n = cs.layout.len() as u64;
    out.push_str(&format!(
        "elements: {} ({} x {})\n",
        n,
        cs.layout.rows(),
        cs.layout.cols()
    ));
    let area = aperture_area(&cs.layout);
    out.push_str(&format!("aperture_area_m2: {area:.6e}\n"));
    let lambda0 = wavelength(cs.f_design);
    out.push_str(&format!(
        "spacing: dx = {:.4} lambda0, dy = {:.4} lambda0\n",
        cs.layout.dx() / lambda0,
        cs.layout.dy() / lambda0
    ));

    let p_total = array_power(cs.p_element_w, n)?;
    out.push_str(&format!(
        "power_per_element: {}\npower_total: {}\n",
        format_si(cs.p_element_w, "W"),
        format_si(p_total, "W")
    ));

    let base = ResponseTimeBase::measured_4p6um();
    let (tau_on, tau_off) = response_times(&base, cs.tolerance.t_nom_m)?;
    out.push_str(&format!(
        "response_tau_on: {}\nresponse_tau_off: {}\n",
        format_si(tau_on, "s"),
        format_si(tau_off, "s")
    ));

    let dphi = differential_phase(&cs.spec, &cs.material, &cs.stack, cs.f_design)?;
    let (eps_lo, tan_lo) = effective_permittivity(
        &cs.spec,
        cs.material.eps_perp,
        cs.material.tan_perp,
        &cs.stack,
        cs.spec.t_lc_nominal,
    )?;
    let il_max = insertion_loss(&cs.spec, eps_lo, tan_lo, cs.f_design)?;
    let fom = figure_of_merit(dphi, il_max)?;
    let comp = compactness(dphi, cs.spec.l_phys, cs.f_design)?;
    out.push_str(&format!(
        "line_l_phys: {}\nline_dphi_max_deg: {dphi:.1}\nline_il_max_db: {il_max:.2}\n\
         line_fom: {fom:.1} deg/dB\nline_compactness: {comp:.1} deg/lambda0\n",
        format_si(cs.spec.l_phys, "m")
    ));

    out.push_str(&format!(
        "tolerance: kind={} t_nom={} misalign={}\n",
        cs.tolerance.kind,
        format_si(cs.tolerance.t_nom_m, "m"),
        format_si(cs.tolerance.misalign_um * 1e-6, "m"),
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[layout]
rows = 4
cols = 5
grid = "triangular"
"#;

    #[test]
    fn minimal_scenario_compiles_with_defaults() {
        let sc = Scenario::from_toml_str(MINIMAL).unwrap();
        let cs = compile(&sc).unwrap();
        assert_eq!(cs.layout.len(), 20);
        assert_eq!(cs.freq_axis.len(), 201);
        assert!((cs.layout.dx() / wavelength(60e9) - 0.45).abs() < 1e-12);
        // Calibrated line with the default anchors.
        let dphi = differential_phase(&cs.spec, &cs.material, &cs.stack, 60e9).unwrap();
        assert!((dphi - 400.0).abs() < 0.1);
    }

    #[test]
    fn missing_layout_names_the_block() {
        let sc = Scenario::from_toml_str("").unwrap();
        let err = compile(&sc).unwrap_err();
        assert!(err.to_string().contains("layout"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bad_tolerance_kind_is_config_error() {
        let text = format!("{MINIMAL}\n[tolerance]\nkind = \"wobbly\"\n");
        let sc = Scenario::from_toml_str(&text).unwrap();
        let err = compile(&sc).unwrap_err();
        assert!(err.to_string().contains("tolerance.kind"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\ntypo_key = 1\n");
        assert!(Scenario::from_toml_str(&text).is_err());
    }

    #[test]
    fn report_contains_anchor_lines() {
        // A million-element surface at half-wavelength spacing.
        let text = r#"
[layout]
rows = 1000
cols = 1000
dx_lambda0 = 0.5
grid = "rectangular"
"#;
        let sc = Scenario::from_toml_str(text).unwrap();
        let cs = compile(&sc).unwrap();
        let report = run_report(&cs).unwrap();
        assert!(report.contains("power_total: 21.5 mW"), "{report}");
        assert!(report.contains("line_fom: 80.0 deg/dB"), "{report}");
        assert!(report.contains("tolerance: kind=uniform"), "{report}");
    }

    #[test]
    fn format_si_cases() {
        assert_eq!(format_si(21.5e-3, "W"), "21.5 mW");
        assert_eq!(format_si(2.58e-6, "W"), "2.58 uW");
        assert_eq!(format_si(15e-3, "s"), "15 ms");
        assert_eq!(format_si(8.0489e-3, "m"), "8.0489 mm");
    }

    #[test]
    fn tracked_peak_matches_squint_prediction_in_band() {
        let text = r#"
[layout]
rows = 30
cols = 25
grid = "triangular"

[excitation]
f_points = 61

[target]
theta_r_deg = 40.0
"#;
        let sc = Scenario::from_toml_str(text).unwrap();
        let cs = compile(&sc).unwrap();
        let out = run_steer(&cs, None).unwrap();
        for (fi, &f) in cs.freq_axis.iter().enumerate() {
            if (f - cs.f_design).abs() > 0.05 * cs.f_design {
                continue;
            }
            let predicted = crate::steering::squint_predict(&out.profile, f)
                .unwrap()
                .theta_deg;
            let tracked = out.spectrum.theta_track[fi];
            assert!(
                (tracked - predicted).abs() < 0.5,
                "f = {f:.3e}: tracked {tracked:.3} vs predicted {predicted:.3}"
            );
        }
    }

    #[test]
    fn tilted_mc_offset_sign_follows_tilt() {
        let text = r#"
[layout]
rows = 12
cols = 10
grid = "triangular"

[excitation]
f_points = 1
f_start_hz = 60e9

[target]
theta_r_deg = 30.0

[tolerance]
kind = "tilted"
gx = 3.1e-4
gy = 0.8e-4
"#;
        let sc = Scenario::from_toml_str(text).unwrap();
        let cs = compile(&sc).unwrap();
        let mc = run_tolerance_mc(&cs, 3, 0, false).unwrap();
        // Thickness rising with +x lowers the local phase slope there, which
        // pushes the beam beyond the target: positive offset.
        for t in &mc.trials {
            assert!(t.peak_offset_deg > 0.0, "offset {}", t.peak_offset_deg);
        }
        // Deterministic generator: every trial identical.
        assert!(mc
            .trials
            .iter()
            .all(|t| t.peak_eta == mc.trials[0].peak_eta));
    }

    #[test]
    fn tolerance_mc_hundred_trials_within_runtime_budget() {
        let text = r#"
[layout]
rows = 12
cols = 10
grid = "triangular"

[excitation]
f_points = 1
f_start_hz = 60e9

[target]
theta_r_deg = 30.0

[tolerance]
kind = "random"
sigma_m = 0.4e-6
corr_len_m = 3e-3
"#;
        let sc = Scenario::from_toml_str(text).unwrap();
        let cs = compile(&sc).unwrap();
        let start = std::time::Instant::now();
        let mc = run_tolerance_mc(&cs, 100, 1, false).unwrap();
        let elapsed = start.elapsed();
        assert_eq!(mc.trials.len(), 100);
        assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    }

    #[test]
    fn single_element_steer_degenerates_gracefully() {
        let text = r#"
[layout]
rows = 1
cols = 1
grid = "rectangular"

[excitation]
f_points = 11
"#;
        let sc = Scenario::from_toml_str(text).unwrap();
        let cs = compile(&sc).unwrap();
        let out = run_steer(&cs, None).unwrap();
        assert_eq!(out.spectrum.eta.len(), 11);
        // A single element cannot focus: the track slides toward the
        // element-pattern maximum and the efficiencies stay physical.
        assert!(out.spectrum.eta.iter().all(|&e| e.is_finite() && e <= 1.0 + 1e-9));
    }
}

//! Phase-profile synthesis for beam steering, phase wrapping, voltage
//! mapping and beam-squint prediction.
//!
//! Profiles use the same direction-cosine convention as the far-field
//! kernel (`u = sin(theta)`, `v = sin(phi) cos(theta)`), so a synthesized
//! profile lands the beam on the requested direction for any target pair.

use crate::aperture::{column_centroids, ApertureLayout};
use crate::error::{Error, Result};
use crate::materials::{invert_permittivity, lc_permittivity, LcMaterial, StackMaterials};
use crate::phase_shifter::{effective_permittivity, round_trip_phase, DelayLineSpec};
use crate::scattering::PlaneWave;
use crate::wavelength;

/// Per-element steering phases in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile {
    /// Requested phase per element (deg). Wrapped profiles lie in
    /// [0, wrap_modulus); unwrapped profiles are unconstrained.
    pub phase_per_element: Vec<f64>,
    /// Whether the phases were wrapped into the modulus.
    pub wrapped: bool,
    /// Wrap modulus in degrees (meaningful when `wrapped`).
    pub wrap_modulus: f64,
    /// Steering target (theta_r, phi_r) in degrees.
    pub target: (f64, f64),
    /// Design frequency the profile was synthesized at (Hz).
    pub f_design: f64,
    /// Warning recorded when the achievable range quantizes coverage.
    pub coverage_warning: Option<String>,
}

impl PhaseProfile {
    /// CSV export: element, phase_deg, voltage_v (voltage column optional).
    pub fn to_csv(&self, voltages: Option<&[f64]>) -> String {
        let mut out = String::from("element,phase_deg,voltage_v\n");
        for (i, &p) in self.phase_per_element.iter().enumerate() {
            match voltages.and_then(|v| v.get(i)) {
                Some(v) => out.push_str(&format!("{i},{p:.6},{v:.6}\n")),
                None => out.push_str(&format!("{i},{p:.6},\n")),
            }
        }
        out
    }
}

/// Synthesize the progressive phase profile steering the reflected beam
/// toward `target = (theta_r, phi_r)` for the given incidence.
///
/// With `column_constrained` every element of a column shares the phase
/// evaluated at the column centroid with the elevation term dropped,
/// mirroring one-plane column biasing. With `wrap` the phases are reduced
/// modulo `dphi_max` into [0, dphi_max).
pub fn synthesize_profile(
    layout: &ApertureLayout,
    target: (f64, f64),
    wave: &PlaneWave,
    dphi_max: f64,
    column_constrained: bool,
    wrap: bool,
) -> Result<PhaseProfile> {
    if target.0.abs() >= 90.0 || target.1.abs() >= 90.0 {
        return Err(Error::Domain(format!(
            "steering target must lie in (-90, 90) deg, got ({}, {})",
            target.0, target.1
        )));
    }
    if dphi_max <= 0.0 {
        return Err(Error::Domain(format!(
            "differential phase range must be positive, got {dphi_max}"
        )));
    }
    wave.validate()?;
    let lambda0 = wavelength(wave.frequency);
    let (u_inc, v_inc) = wave.direction_cosines();
    let th = target.0.to_radians();
    let ph = target.1.to_radians();
    let du = th.sin() - u_inc;
    let dv = ph.sin() * th.cos() - v_inc;
    let deg_per_m = 360.0 / lambda0;

    let mut phases: Vec<f64> = if column_constrained {
        let centroids = column_centroids(layout);
        (0..layout.len())
            .map(|i| -deg_per_m * centroids[layout.column_of(i)] * du)
            .collect()
    } else {
        layout
            .positions()
            .iter()
            .map(|&(x, y)| -deg_per_m * (x * du + y * dv))
            .collect()
    };
    if wrap {
        for p in &mut phases {
            *p = p.rem_euclid(dphi_max);
        }
    }
    let coverage_warning = (dphi_max < 360.0).then(|| {
        format!("wrap modulus {dphi_max} deg is below a full turn; phase coverage is quantized")
    });
    Ok(PhaseProfile {
        phase_per_element: phases,
        wrapped: wrap,
        wrap_modulus: dphi_max,
        target,
        f_design: wave.frequency,
        coverage_warning,
    })
}

/// Map profile phases to bias voltages at the assumed per-element LC
/// thickness: the realized line phase above the element's unbiased state
/// equals the profile phase.
///
/// Unreachable phases produce a range error listing the element indices.
pub fn phases_to_voltages(
    profile: &PhaseProfile,
    material: &LcMaterial,
    stack: &StackMaterials,
    spec: &DelayLineSpec,
    t_lc_assumed: &[f64],
) -> Result<Vec<f64>> {
    if t_lc_assumed.len() != profile.phase_per_element.len() {
        return Err(Error::Domain(format!(
            "{} assumed thicknesses for {} profile phases",
            t_lc_assumed.len(),
            profile.phase_per_element.len()
        )));
    }
    let lambda0 = wavelength(profile.f_design);
    let (eps_perp, tan_perp) = lc_permittivity(material, 0.0)?;
    let mut voltages = Vec::with_capacity(t_lc_assumed.len());
    let mut failed: Vec<usize> = Vec::new();
    for (i, (&phase, &t)) in profile
        .phase_per_element
        .iter()
        .zip(t_lc_assumed)
        .enumerate()
    {
        let (eps_eff_ref, _) = effective_permittivity(spec, eps_perp, tan_perp, stack, t)?;
        let ref_phase = round_trip_phase(spec, eps_eff_ref, profile.f_design)?;
        let target_phase = ref_phase + phase;
        // Invert the dispersionless line: phase = 720 l sqrt(eps_eff)/lambda.
        let sqrt_eps_eff = target_phase * lambda0 / (720.0 * spec.l_phys);
        let eps_eff = sqrt_eps_eff * sqrt_eps_eff;
        let q = spec.filling_factor(t);
        let eps_lc = (eps_eff - (1.0 - q) * stack.eps_glass) / q;
        match invert_permittivity(material, eps_lc) {
            Ok(v) => voltages.push(v),
            Err(_) => {
                failed.push(i);
                voltages.push(f64::NAN);
            }
        }
    }
    if !failed.is_empty() {
        let head: Vec<String> = failed.iter().take(12).map(|i| i.to_string()).collect();
        let suffix = if failed.len() > 12 { ", ..." } else { "" };
        return Err(Error::Range(format!(
            "{} element phases unreachable at the assumed thickness (elements {}{})",
            failed.len(),
            head.join(", "),
            suffix
        )));
    }
    Ok(voltages)
}

/// Predicted squinted peak angle of a profile at an off-design frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquintPrediction {
    /// Predicted azimuth peak angle (deg).
    pub theta_deg: f64,
    /// True when the direction cosine had to be clamped to the horizon.
    pub clamped: bool,
}

/// Predict the beam-peak angle at `frequency` for a single-plane profile.
///
/// Modulo-wrapped profiles squint as sin(theta) * f_design / f; unwrapped
/// (true-time-delay) profiles hold the target angle at every frequency.
pub fn squint_predict(profile: &PhaseProfile, frequency: f64) -> Result<SquintPrediction> {
    if frequency <= 0.0 {
        return Err(Error::Domain(format!(
            "frequency must be positive, got {frequency}"
        )));
    }
    if !profile.wrapped {
        return Ok(SquintPrediction {
            theta_deg: profile.target.0,
            clamped: false,
        });
    }
    let s = profile.target.0.to_radians().sin() * profile.f_design / frequency;
    let clamped = s.abs() > 1.0;
    let theta = s.clamp(-1.0, 1.0).asin().to_degrees();
    Ok(SquintPrediction {
        theta_deg: if clamped { 90.0_f64.copysign(s) } else { theta },
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aperture::{build_layout, GridKind};
    use crate::phase_shifter::calibrate_line;
    use crate::scattering::{element_reflection, RadiatorModel};

    const F0: f64 = 60e9;

    fn layout_750() -> ApertureLayout {
        let d = 0.45 * wavelength(F0);
        build_layout(30, 25, d, d, GridKind::Triangular).unwrap()
    }

    #[test]
    fn broadside_target_gives_uniform_profile() {
        let l = layout_750();
        let wave = PlaneWave::broadside(F0);
        let p = synthesize_profile(&l, (0.0, 0.0), &wave, 360.0, false, true).unwrap();
        assert!(p
            .phase_per_element
            .iter()
            .all(|&x| x.abs() < 1e-9 || (x - 360.0).abs() < 1e-9));
    }

    #[test]
    fn progressive_phase_steps() {
        // Inter-column step 360 * 0.45 * sin(theta_r).
        let l = layout_750();
        let wave = PlaneWave::broadside(F0);
        for (theta_r, expected) in [(30.0_f64, 81.0_f64), (40.0, 104.13)] {
            let p = synthesize_profile(&l, (theta_r, 0.0), &wave, 360.0, true, false).unwrap();
            // Row 0 holds column 0..cols; step between adjacent columns.
            let step = (p.phase_per_element[0] - p.phase_per_element[1]).abs();
            assert!(
                (step - expected).abs() < 0.05,
                "theta {theta_r}: step {step} vs {expected}"
            );
        }
    }

    #[test]
    fn wrapping_changes_phases_by_whole_turns() {
        let l = layout_750();
        let wave = PlaneWave::broadside(F0);
        let unwrapped = synthesize_profile(&l, (40.0, 0.0), &wave, 360.0, false, false).unwrap();
        let wrapped = synthesize_profile(&l, (40.0, 0.0), &wave, 360.0, false, true).unwrap();
        for (u, w) in unwrapped
            .phase_per_element
            .iter()
            .zip(&wrapped.phase_per_element)
        {
            let turns = (w - u) / 360.0;
            assert!((turns - turns.round()).abs() < 1e-9, "u {u} w {w}");
            assert!((0.0..360.0).contains(w));
        }
    }

    #[test]
    fn column_constraint_matches_unconstrained_on_rectangular_grid() {
        let d = 0.45 * wavelength(F0);
        let l = build_layout(8, 10, d, d, GridKind::Rectangular).unwrap();
        let wave = PlaneWave::broadside(F0);
        let free = synthesize_profile(&l, (25.0, 0.0), &wave, 360.0, false, false).unwrap();
        let cols = synthesize_profile(&l, (25.0, 0.0), &wave, 360.0, true, false).unwrap();
        for (a, b) in free
            .phase_per_element
            .iter()
            .zip(&cols.phase_per_element)
        {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn small_wrap_modulus_records_warning() {
        let l = layout_750();
        let wave = PlaneWave::broadside(F0);
        let p = synthesize_profile(&l, (30.0, 0.0), &wave, 300.0, false, true).unwrap();
        assert!(p.coverage_warning.is_some());
        let q = synthesize_profile(&l, (30.0, 0.0), &wave, 360.0, false, true).unwrap();
        assert!(q.coverage_warning.is_none());
    }

    #[test]
    fn zero_profile_maps_to_reference_voltage() {
        let m = LcMaterial::gt7_29001();
        let s = StackMaterials::af32_gold();
        let spec = calibrate_line(400.0, F0, &m, &s).unwrap();
        let l = layout_750();
        let wave = PlaneWave::broadside(F0);
        let p = synthesize_profile(&l, (0.0, 0.0), &wave, 360.0, true, true).unwrap();
        let t = vec![4.6e-6; l.len()];
        let v = phases_to_voltages(&p, &m, &s, &spec, &t).unwrap();
        assert!(v.iter().all(|&x| (x - m.v_threshold).abs() < 1e-6));
    }

    #[test]
    fn voltage_round_trip_recovers_profile() {
        let m = LcMaterial::gt7_29001();
        let s = StackMaterials::af32_gold();
        let spec = calibrate_line(400.0, F0, &m, &s).unwrap();
        let l = layout_750();
        let wave = PlaneWave::broadside(F0);
        let p = synthesize_profile(&l, (40.0, 0.0), &wave, 360.0, true, true).unwrap();
        let t = vec![4.6e-6; l.len()];
        let v = phases_to_voltages(&p, &m, &s, &spec, &t).unwrap();
        let rad = RadiatorModel::disabled(F0);
        let g_ref = element_reflection(&m, &s, &spec, &rad, m.v_threshold, 4.6e-6, F0).unwrap();
        for (i, &vi) in v.iter().enumerate() {
            let g = element_reflection(&m, &s, &spec, &rad, vi, 4.6e-6, F0).unwrap();
            let mut d = (g.arg() - g_ref.arg()).to_degrees() - p.phase_per_element[i];
            d = d.rem_euclid(360.0);
            if d > 180.0 {
                d -= 360.0;
            }
            assert!(d.abs() < 0.1, "element {i}: residual {d}");
        }
    }

    #[test]
    fn unreachable_phases_list_elements() {
        let m = LcMaterial::gt7_29001();
        let s = StackMaterials::af32_gold();
        let spec = calibrate_line(400.0, F0, &m, &s).unwrap();
        let l = layout_750();
        let wave = PlaneWave::broadside(F0);
        // Unwrapped 40-deg profile spans thousands of degrees: unreachable.
        let p = synthesize_profile(&l, (40.0, 0.0), &wave, 360.0, false, false).unwrap();
        let t = vec![4.6e-6; l.len()];
        let err = phases_to_voltages(&p, &m, &s, &spec, &t).unwrap_err();
        assert!(matches!(err, Error::Range(_)));
        assert!(err.to_string().contains("elements"), "{err}");
    }

    #[test]
    fn squint_closed_form() {
        let l = layout_750();
        let wave = PlaneWave::broadside(F0);
        let wrapped = synthesize_profile(&l, (40.0, 0.0), &wave, 360.0, false, true).unwrap();
        let at_design = squint_predict(&wrapped, F0).unwrap();
        assert!((at_design.theta_deg - 40.0).abs() < 1e-9);
        let above = squint_predict(&wrapped, 1.05 * F0).unwrap();
        let expected = (40.0_f64.to_radians().sin() / 1.05).asin().to_degrees();
        assert!((above.theta_deg - expected).abs() < 1e-9);
        assert!((above.theta_deg - 37.75).abs() < 0.05);
        // True-time-delay profile: no squint.
        let unwrapped = synthesize_profile(&l, (40.0, 0.0), &wave, 360.0, false, false).unwrap();
        for f in [0.9 * F0, F0, 1.1 * F0] {
            assert_eq!(squint_predict(&unwrapped, f).unwrap().theta_deg, 40.0);
        }
        // Clamp below the design frequency for steep targets.
        let steep = synthesize_profile(&l, (80.0, 0.0), &wave, 360.0, false, true).unwrap();
        let clamped = squint_predict(&steep, 0.9 * F0).unwrap();
        assert!(clamped.clamped);
        assert_eq!(clamped.theta_deg, 90.0);
    }
}

//! Delay-line phase shifter model.
//!
//! The true line cross-section is only accessible to full-wave solvers, so
//! the dispersion is replaced by a two-parameter filling-factor surrogate:
//! a fraction q of the field energy lives in the LC, the rest in the glass,
//! with q saturating in the LC thickness,
//!
//! ```text
//! q(t) = fill_max * t / (t + t_half)
//! eps_eff = q * eps_lc + (1 - q) * eps_glass
//! ```
//!
//! The line is dispersionless (phase proportional to frequency) and the
//! wave traverses it twice, reflecting at the open end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{lc_permittivity, LcMaterial, StackMaterials};
use crate::{wavelength, SPEED_OF_LIGHT};

/// Dielectric attenuation constant 20*pi/ln(10) (~27.29): loss rate in
/// dB per meter is this times sqrt(eps_eff) * tan_eff * f / c.
pub const DIELECTRIC_LOSS_DB: f64 = 20.0 * std::f64::consts::PI / std::f64::consts::LN_10;

/// Figure-of-merit anchor used when calibrating the line's extra loss rate.
pub const DEFAULT_FOM_TARGET: f64 = 80.0;

/// Default differential-phase calibration target in degrees. The hardware
/// exceeds a full turn, so the default leaves headroom above 360.
pub const DEFAULT_DPHI_TARGET: f64 = 400.0;

/// Geometry and loss parameters of one delay line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayLineSpec {
    /// Physical line length (m).
    pub l_phys: f64,
    /// Nominal LC layer thickness (m).
    pub t_lc_nominal: f64,
    /// Asymptotic LC filling factor, in (0, 1].
    pub fill_max: f64,
    /// Thickness at which the filling factor reaches half its asymptote (m).
    pub t_half: f64,
    /// Non-dielectric (conductor/substrate) loss rate (dB/m).
    pub alpha_extra: f64,
}

impl DelayLineSpec {
    pub fn validate(&self) -> Result<()> {
        if self.l_phys <= 0.0 {
            return Err(Error::Domain(format!(
                "line length must be positive, got {}",
                self.l_phys
            )));
        }
        if !(self.fill_max > 0.0 && self.fill_max <= 1.0) {
            return Err(Error::Domain(format!(
                "fill_max must lie in (0, 1], got {}",
                self.fill_max
            )));
        }
        if self.t_half <= 0.0 {
            return Err(Error::Domain(format!(
                "t_half must be positive, got {}",
                self.t_half
            )));
        }
        if self.alpha_extra < 0.0 {
            return Err(Error::Domain(format!(
                "alpha_extra must be non-negative, got {}",
                self.alpha_extra
            )));
        }
        if self.t_lc_nominal <= 0.0 {
            return Err(Error::Domain(format!(
                "nominal LC thickness must be positive, got {}",
                self.t_lc_nominal
            )));
        }
        Ok(())
    }

    /// LC filling factor at thickness `t_lc`.
    pub fn filling_factor(&self, t_lc: f64) -> f64 {
        self.fill_max * t_lc / (t_lc + self.t_half)
    }
}

/// Insertion phase and loss of the shifter at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShifterResponse {
    /// Round-trip insertion phase (degrees).
    pub phase: f64,
    /// Insertion loss (dB, positive).
    pub insertion_loss: f64,
    /// Evaluation frequency (Hz).
    pub frequency: f64,
}

/// Effective line permittivity and loss tangent for an LC state and layer
/// thickness. Returns `(eps_eff, tan_eff)`.
pub fn effective_permittivity(
    spec: &DelayLineSpec,
    eps_lc: f64,
    tan_lc: f64,
    stack: &StackMaterials,
    t_lc: f64,
) -> Result<(f64, f64)> {
    if t_lc <= 0.0 {
        return Err(Error::Domain(format!(
            "LC thickness must be positive, got {t_lc}"
        )));
    }
    if eps_lc < 1.0 {
        return Err(Error::Domain(format!(
            "LC permittivity must be at least 1, got {eps_lc}"
        )));
    }
    let q = spec.filling_factor(t_lc);
    let eps_eff = q * eps_lc + (1.0 - q) * stack.eps_glass;
    let tan_eff = q * tan_lc + (1.0 - q) * stack.tan_glass;
    Ok((eps_eff, tan_eff))
}

/// Round-trip insertion phase in degrees: the wave travels the line twice.
pub fn round_trip_phase(spec: &DelayLineSpec, eps_eff: f64, frequency: f64) -> Result<f64> {
    if frequency <= 0.0 {
        return Err(Error::Domain(format!(
            "frequency must be positive, got {frequency}"
        )));
    }
    let lambda0 = wavelength(frequency);
    Ok(2.0 * (360.0 / lambda0) * spec.l_phys * eps_eff.sqrt())
}

/// Round-trip insertion loss in dB (positive).
pub fn insertion_loss(
    spec: &DelayLineSpec,
    eps_eff: f64,
    tan_eff: f64,
    frequency: f64,
) -> Result<f64> {
    if frequency <= 0.0 {
        return Err(Error::Domain(format!(
            "frequency must be positive, got {frequency}"
        )));
    }
    let alpha_diel = DIELECTRIC_LOSS_DB * eps_eff.sqrt() * tan_eff * frequency / SPEED_OF_LIGHT;
    Ok(2.0 * spec.l_phys * (alpha_diel + spec.alpha_extra))
}

/// Figure of merit: maximum differential phase shift per dB of loss.
pub fn figure_of_merit(delta_phi_max: f64, il_max: f64) -> Result<f64> {
    if il_max <= 0.0 {
        return Err(Error::Domain(format!(
            "insertion loss must be positive, got {il_max}"
        )));
    }
    Ok(delta_phi_max / il_max)
}

/// Compactness: differential phase shift per physical length, normalized
/// to the free-space wavelength (degrees per lambda0).
pub fn compactness(delta_phi_max: f64, l_phys: f64, frequency: f64) -> Result<f64> {
    if l_phys <= 0.0 || frequency <= 0.0 {
        return Err(Error::Domain(
            "compactness needs positive length and frequency".to_string(),
        ));
    }
    Ok(delta_phi_max * wavelength(frequency) / l_phys)
}

/// Full shifter response at a bias voltage and thickness.
pub fn shifter_response(
    spec: &DelayLineSpec,
    material: &LcMaterial,
    stack: &StackMaterials,
    v_bias: f64,
    t_lc: f64,
    frequency: f64,
) -> Result<ShifterResponse> {
    let (eps_lc, tan_lc) = lc_permittivity(material, v_bias)?;
    let (eps_eff, tan_eff) = effective_permittivity(spec, eps_lc, tan_lc, stack, t_lc)?;
    Ok(ShifterResponse {
        phase: round_trip_phase(spec, eps_eff, frequency)?,
        insertion_loss: insertion_loss(spec, eps_eff, tan_eff, frequency)?,
        frequency,
    })
}

/// Phase change relative to the unbiased nominal-thickness state,
/// in degrees: positive when bias raises the electrical length.
pub fn phase_vs_thickness(
    spec: &DelayLineSpec,
    material: &LcMaterial,
    stack: &StackMaterials,
    v_bias: f64,
    t_lc: f64,
    frequency: f64,
) -> Result<f64> {
    let probe = shifter_response(spec, material, stack, v_bias, t_lc, frequency)?;
    let reference = shifter_response(spec, material, stack, 0.0, spec.t_lc_nominal, frequency)?;
    Ok(probe.phase - reference.phase)
}

/// Differential round-trip phase between the unbiased endpoint and the
/// asymptotic parallel endpoint at the nominal thickness.
pub fn differential_phase(
    spec: &DelayLineSpec,
    material: &LcMaterial,
    stack: &StackMaterials,
    frequency: f64,
) -> Result<f64> {
    let (eps_lo, _) = effective_permittivity(
        spec,
        material.eps_perp,
        material.tan_perp,
        stack,
        spec.t_lc_nominal,
    )?;
    let (eps_hi, _) = effective_permittivity(
        spec,
        material.eps_par,
        material.tan_par,
        stack,
        spec.t_lc_nominal,
    )?;
    Ok(round_trip_phase(spec, eps_hi, frequency)? - round_trip_phase(spec, eps_lo, frequency)?)
}

/// Solve the line length for a differential-phase target and pin the extra
/// loss rate so the figure of merit hits `fom_target` at `frequency`.
///
/// The maximum insertion loss (the FoM denominator) occurs at the unbiased
/// endpoint, where the LC loss tangent is largest.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_line_with_fom(
    target_dphi: f64,
    fom_target: f64,
    frequency: f64,
    material: &LcMaterial,
    stack: &StackMaterials,
    t_lc_nominal: f64,
    fill_max: f64,
    t_half: f64,
) -> Result<DelayLineSpec> {
    if target_dphi <= 0.0 {
        return Err(Error::Calibration(format!(
            "differential-phase target must be positive, got {target_dphi}"
        )));
    }
    if fom_target <= 0.0 {
        return Err(Error::Calibration(format!(
            "figure-of-merit target must be positive, got {fom_target}"
        )));
    }
    let mut spec = DelayLineSpec {
        l_phys: 1.0, // placeholder until solved below
        t_lc_nominal,
        fill_max,
        t_half,
        alpha_extra: 0.0,
    };
    let (eps_lo, tan_lo) =
        effective_permittivity(&spec, material.eps_perp, material.tan_perp, stack, t_lc_nominal)?;
    let (eps_hi, _) =
        effective_permittivity(&spec, material.eps_par, material.tan_par, stack, t_lc_nominal)?;
    let sqrt_delta = eps_hi.sqrt() - eps_lo.sqrt();
    if sqrt_delta < 1e-12 {
        return Err(Error::Calibration(format!(
            "target {target_dphi} deg unreachable: effective permittivity span \
             [{eps_lo:.4}, {eps_hi:.4}] gives no differential phase under the fill constraints"
        )));
    }
    let lambda0 = wavelength(frequency);
    spec.l_phys = target_dphi * lambda0 / (720.0 * sqrt_delta);

    // Max loss state: unbiased (largest tan_eff and it dominates sqrt(eps)).
    let il_target = target_dphi / fom_target;
    let il_diel = insertion_loss(&spec, eps_lo, tan_lo, frequency)?;
    if il_diel > il_target {
        return Err(Error::Calibration(format!(
            "dielectric loss alone ({il_diel:.2} dB) exceeds the {il_target:.2} dB budget \
             implied by FoM {fom_target} deg/dB; line too long for the loss target"
        )));
    }
    spec.alpha_extra = (il_target - il_diel) / (2.0 * spec.l_phys);

    // Verify the closed-form solve before returning.
    let achieved = differential_phase(&spec, material, stack, frequency)?;
    if (achieved - target_dphi).abs() > 0.1 {
        return Err(Error::Calibration(format!(
            "calibration verification failed: achieved {achieved:.3} deg vs target {target_dphi}"
        )));
    }
    spec.validate()?;
    Ok(spec)
}

/// Calibrate with the default fill surrogate (fill_max 0.9, t_half 1 um),
/// nominal 4.6 um LC layer and the 80 deg/dB loss anchor.
pub fn calibrate_line(
    target_dphi: f64,
    frequency: f64,
    material: &LcMaterial,
    stack: &StackMaterials,
) -> Result<DelayLineSpec> {
    calibrate_line_with_fom(
        target_dphi,
        DEFAULT_FOM_TARGET,
        frequency,
        material,
        stack,
        4.6e-6,
        0.9,
        1.0e-6,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const F0: f64 = 60e9;

    fn material() -> LcMaterial {
        LcMaterial::gt7_29001()
    }

    fn stack() -> StackMaterials {
        StackMaterials::af32_gold()
    }

    fn plain_spec() -> DelayLineSpec {
        DelayLineSpec {
            l_phys: 8e-3,
            t_lc_nominal: 4.6e-6,
            fill_max: 0.9,
            t_half: 1e-6,
            alpha_extra: 0.0,
        }
    }

    #[test]
    fn filling_factor_limits() {
        let spec = plain_spec();
        // Saturation: q -> fill_max for t >> t_half.
        let q_inf = spec.filling_factor(1e4 * spec.t_half);
        assert!((q_inf - spec.fill_max).abs() < 1e-3 * spec.fill_max);
        // Half-thickness construction point.
        let q_half = spec.filling_factor(spec.t_half);
        assert_eq!(q_half, spec.fill_max / 2.0);
    }

    #[test]
    fn pure_lc_limit() {
        let mut spec = plain_spec();
        spec.fill_max = 1.0;
        spec.t_half = 1e-30;
        let (eps_eff, tan_eff) =
            effective_permittivity(&spec, 2.46, 0.0116, &stack(), 4.6e-6).unwrap();
        assert!((eps_eff - 2.46).abs() < 1e-9);
        assert!((tan_eff - 0.0116).abs() < 1e-9);
    }

    #[test]
    fn monotone_in_filling_factor() {
        let spec = plain_spec();
        let s = stack();
        let mut prev_q = 0.0;
        for i in 1..100 {
            let t = i as f64 * 1e-7;
            let q = spec.filling_factor(t);
            assert!(q > prev_q);
            prev_q = q;
        }
        // eps_eff strictly increasing in eps_lc at fixed thickness.
        let (e1, _) = effective_permittivity(&spec, 2.46, 0.01, &s, 4.6e-6).unwrap();
        let (e2, _) = effective_permittivity(&spec, 3.53, 0.01, &s, 4.6e-6).unwrap();
        assert!(e2 > e1);
        assert!(effective_permittivity(&spec, 2.46, 0.01, &s, 0.0).is_err());
    }

    #[test]
    fn free_space_half_wavelength_round_trip() {
        let lambda0 = wavelength(F0);
        let mut spec = plain_spec();
        spec.l_phys = lambda0 / 2.0;
        let phase = round_trip_phase(&spec, 1.0, F0).unwrap();
        assert!((phase - 360.0).abs() < 1e-9, "phase = {phase}");
    }

    #[test]
    fn phase_linear_in_frequency() {
        let spec = plain_spec();
        let p1 = round_trip_phase(&spec, 3.0, F0).unwrap();
        let p2 = round_trip_phase(&spec, 3.0, 2.0 * F0).unwrap();
        assert!((p2 / p1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lossless_line_has_zero_insertion_loss() {
        let spec = plain_spec();
        assert_eq!(insertion_loss(&spec, 2.5, 0.0, F0).unwrap(), 0.0);
    }

    #[test]
    fn loss_linear_in_length() {
        let mut spec = plain_spec();
        let il1 = insertion_loss(&spec, 2.5, 0.01, F0).unwrap();
        spec.l_phys *= 2.0;
        let il2 = insertion_loss(&spec, 2.5, 0.01, F0).unwrap();
        assert!((il2 / il1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fom_anchor_values() {
        assert_eq!(figure_of_merit(360.0, 4.5).unwrap(), 80.0);
        assert_eq!(figure_of_merit(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(figure_of_merit(240.0, 3.0).unwrap(), 80.0);
        assert!(figure_of_merit(360.0, 0.0).is_err());
        // Scale consistency: common scaling of phase and loss cancels.
        let a = figure_of_merit(360.0, 4.5).unwrap();
        let b = figure_of_merit(3.7 * 360.0, 3.7 * 4.5).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn compactness_values() {
        let lambda0 = wavelength(F0);
        assert!((compactness(360.0, lambda0, F0).unwrap() - 360.0).abs() < 1e-9);
        assert!((compactness(360.0, 0.5 * lambda0, F0).unwrap() - 720.0).abs() < 1e-9);
        let c1 = compactness(360.0, 2e-3, F0).unwrap();
        let c2 = compactness(360.0, 1e-3, F0).unwrap();
        assert!((c2 / c1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn calibrated_line_pure_lc_closed_form() {
        // fill_max = 1, t_half -> 0: l = lambda0 / (2 (sqrt(3.53) - sqrt(2.46))).
        let spec = calibrate_line_with_fom(
            360.0,
            DEFAULT_FOM_TARGET,
            F0,
            &material(),
            &stack(),
            4.6e-6,
            1.0,
            1e-12,
        )
        .unwrap();
        let lambda0 = wavelength(F0);
        let expected = lambda0 / (2.0 * (3.53_f64.sqrt() - 2.46_f64.sqrt()));
        assert!(
            (spec.l_phys - expected).abs() < 1e-6 * expected,
            "l = {} vs {expected}",
            spec.l_phys
        );
        // ~1.61 lambda0 ~ 8.05 mm.
        assert!((spec.l_phys / lambda0 - 1.6109) .abs() < 2e-3);
        // Plug back: differential phase reproduces the target.
        let dphi = differential_phase(&spec, &material(), &stack(), F0).unwrap();
        assert!((dphi - 360.0).abs() < 0.1, "dphi = {dphi}");
    }

    #[test]
    fn default_calibration_meets_anchors() {
        let spec = calibrate_line(DEFAULT_DPHI_TARGET, F0, &material(), &stack()).unwrap();
        let dphi = differential_phase(&spec, &material(), &stack(), F0).unwrap();
        assert!((dphi - DEFAULT_DPHI_TARGET).abs() < 0.1);
        assert!(dphi >= 360.0);

        // FoM lands on the 80 deg/dB anchor, inside the plausible 60-100 band.
        let m = material();
        let s = stack();
        let (eps_lo, tan_lo) =
            effective_permittivity(&spec, m.eps_perp, m.tan_perp, &s, 4.6e-6).unwrap();
        let il_max = insertion_loss(&spec, eps_lo, tan_lo, F0).unwrap();
        let fom = figure_of_merit(dphi, il_max).unwrap();
        assert!((fom - 80.0).abs() < 0.5, "fom = {fom}");
        assert!((60.0..=100.0).contains(&fom));

        // Drive-limited differential (20 V vs unbiased) still exceeds 360.
        let r20 = shifter_response(&spec, &m, &s, 20.0, 4.6e-6, F0).unwrap();
        let r0 = shifter_response(&spec, &m, &s, 0.0, 4.6e-6, F0).unwrap();
        assert!(r20.phase - r0.phase >= 360.0, "drive diff = {}", r20.phase - r0.phase);
    }

    #[test]
    fn degenerate_target_rejected() {
        assert!(matches!(
            calibrate_line(0.0, F0, &material(), &stack()),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn phase_vs_thickness_reference_and_sense() {
        let spec = calibrate_line(DEFAULT_DPHI_TARGET, F0, &material(), &stack()).unwrap();
        let m = material();
        let s = stack();
        // Reference point is exactly zero by construction.
        let at_ref = phase_vs_thickness(&spec, &m, &s, 0.0, 4.6e-6, F0).unwrap();
        assert_eq!(at_ref, 0.0);
        // Bias raises the phase at nominal thickness.
        let biased = phase_vs_thickness(&spec, &m, &s, 20.0, 4.6e-6, F0).unwrap();
        assert!(biased > 0.0);
        // Monotone in voltage at fixed thickness.
        let mut prev = -1.0;
        for v in [0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0] {
            let d = phase_vs_thickness(&spec, &m, &s, v, 4.6e-6, F0).unwrap();
            assert!(d >= prev, "non-monotone at {v} V");
            prev = d;
        }
        // Monotone in thickness at fixed voltage (eps_lc < eps_glass so
        // thicker LC lowers eps_eff and the phase).
        let d_thin = phase_vs_thickness(&spec, &m, &s, 0.0, 4.0e-6, F0).unwrap();
        let d_thick = phase_vs_thickness(&spec, &m, &s, 0.0, 5.2e-6, F0).unwrap();
        assert!(d_thin > 0.0 && d_thick < 0.0);
    }

    #[test]
    fn thickness_sensitivity_matches_finite_difference() {
        let spec = calibrate_line(DEFAULT_DPHI_TARGET, F0, &material(), &stack()).unwrap();
        let m = material();
        let s = stack();
        let t0 = 4.6e-6;
        let h = 1e-11;
        // Independent finite-difference oracle for the model slope.
        let fd = (phase_vs_thickness(&spec, &m, &s, 0.0, t0 + h, F0).unwrap()
            - phase_vs_thickness(&spec, &m, &s, 0.0, t0 - h, F0).unwrap())
            / (2.0 * h);
        // Analytic slope of the surrogate at the same point.
        let q = spec.filling_factor(t0);
        let dq = spec.fill_max * spec.t_half / ((t0 + spec.t_half) * (t0 + spec.t_half));
        let eps_eff = q * m.eps_perp + (1.0 - q) * s.eps_glass;
        let analytic = 2.0 * (360.0 / wavelength(F0))
            * spec.l_phys
            * dq
            * (m.eps_perp - s.eps_glass)
            / (2.0 * eps_eff.sqrt());
        assert!(
            ((fd - analytic) / analytic).abs() < 0.01,
            "fd {fd} vs analytic {analytic}"
        );
    }

    #[test]
    fn insertion_loss_additive_over_segments() {
        let mut a = plain_spec();
        let mut b = plain_spec();
        a.l_phys = 3e-3;
        b.l_phys = 5e-3;
        let mut joined = plain_spec();
        joined.l_phys = 8e-3;
        let il = |sp: &DelayLineSpec| insertion_loss(sp, 3.0, 0.01, F0).unwrap();
        assert!((il(&a) + il(&b) - il(&joined)).abs() < 1e-12);
    }
}

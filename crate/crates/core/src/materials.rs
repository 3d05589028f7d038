//! Liquid-crystal mixture and substrate-stack material models.
//!
//! The LC tuning curve maps an RMS bias voltage to an effective relative
//! permittivity between the perpendicular and parallel endpoints of the
//! mixture. The curve is threshold-bearing and saturating:
//!
//! ```text
//! s(v) = 0                          for v <= v_threshold
//! s(v) = 1 - exp(-(v - v_threshold) / v_scale)   otherwise
//! eps(v) = eps_perp + (eps_par - eps_perp) * s(v)
//! ```
//!
//! The loss tangent interpolates linearly in the same mixing fraction.
//! The square-wave drive is represented by its RMS amplitude only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anisotropic LC mixture: permittivity/loss endpoints plus tuning-curve
/// parameters. Voltages are RMS values of the applied square wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcMaterial {
    /// Relative permittivity with the director perpendicular to the RF field.
    pub eps_perp: f64,
    /// Loss tangent at the perpendicular endpoint.
    pub tan_perp: f64,
    /// Relative permittivity with the director parallel to the RF field.
    pub eps_par: f64,
    /// Loss tangent at the parallel endpoint.
    pub tan_par: f64,
    /// Threshold voltage below which the directors do not reorient (V RMS).
    pub v_threshold: f64,
    /// Saturation rate parameter of the tuning curve (V).
    pub v_scale: f64,
}

impl LcMaterial {
    /// GT7-29001 mixture endpoints with the default tuning curve:
    /// 2 V threshold, `v_scale` calibrated so that s(20 V) = 0.99.
    pub fn gt7_29001() -> Self {
        LcMaterial {
            eps_perp: 2.46,
            tan_perp: 0.0116,
            eps_par: 3.53,
            tan_par: 0.0064,
            v_threshold: 2.0,
            // 18 / ln(100): saturating to s = 0.99 at 20 V drive.
            v_scale: 18.0 / 100.0_f64.ln(),
        }
    }

    /// Check the type invariants, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_par > self.eps_perp && self.eps_perp > 1.0) {
            return Err(Error::Domain(format!(
                "LC permittivity endpoints must satisfy eps_par > eps_perp > 1, got {} / {}",
                self.eps_par, self.eps_perp
            )));
        }
        if !(self.tan_perp > 0.0 && self.tan_perp < 1.0 && self.tan_par > 0.0 && self.tan_par < 1.0)
        {
            return Err(Error::Domain(format!(
                "LC loss tangents must lie in (0, 1), got {} / {}",
                self.tan_perp, self.tan_par
            )));
        }
        if self.v_threshold < 0.0 || self.v_scale <= 0.0 {
            return Err(Error::Domain(format!(
                "tuning curve needs v_threshold >= 0 and v_scale > 0, got {} / {}",
                self.v_threshold, self.v_scale
            )));
        }
        Ok(())
    }

    /// Mixing fraction s(v) of the tuning curve, in [0, 1).
    pub fn mixing_fraction(&self, v_bias: f64) -> f64 {
        if v_bias <= self.v_threshold {
            0.0
        } else {
            1.0 - (-(v_bias - self.v_threshold) / self.v_scale).exp()
        }
    }
}

/// Glass substrate and conductor properties of the unit-cell stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackMaterials {
    /// Relative permittivity of the glass substrate.
    pub eps_glass: f64,
    /// Loss tangent of the glass substrate.
    pub tan_glass: f64,
    /// Glass thickness (m).
    pub t_glass: f64,
    /// Conductor thickness (m).
    pub t_gold: f64,
    /// Conductor label.
    pub conductor: String,
}

impl StackMaterials {
    /// AF32 glass (300 um) with 2 um gold metallization.
    pub fn af32_gold() -> Self {
        StackMaterials {
            eps_glass: 5.1,
            tan_glass: 0.009,
            t_glass: 300e-6,
            t_gold: 2e-6,
            conductor: "gold".to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_glass <= 0.0 || self.t_gold <= 0.0 {
            return Err(Error::Domain(
                "stack thicknesses must be positive".to_string(),
            ));
        }
        if self.eps_glass <= 1.0 {
            return Err(Error::Domain(format!(
                "glass permittivity must exceed 1, got {}",
                self.eps_glass
            )));
        }
        Ok(())
    }
}

/// Measured response-time reference for quadratic thickness scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseTimeBase {
    /// Switch-on time at the reference thickness (s).
    pub tau_on_ref: f64,
    /// Switch-off time at the reference thickness (s).
    pub tau_off_ref: f64,
    /// Reference LC thickness (m).
    pub t_lc_ref: f64,
}

impl ResponseTimeBase {
    /// 15 ms on / 72 ms off measured at 4.6 um.
    pub fn measured_4p6um() -> Self {
        ResponseTimeBase {
            tau_on_ref: 15e-3,
            tau_off_ref: 72e-3,
            t_lc_ref: 4.6e-6,
        }
    }
}

/// Effective LC permittivity and loss tangent at a bias voltage.
///
/// Returns `(eps_r, tan_delta)`. Errors on negative voltage.
pub fn lc_permittivity(material: &LcMaterial, v_bias: f64) -> Result<(f64, f64)> {
    if v_bias < 0.0 || !v_bias.is_finite() {
        return Err(Error::Domain(format!(
            "bias voltage must be finite and non-negative, got {v_bias}"
        )));
    }
    let s = material.mixing_fraction(v_bias);
    let eps = material.eps_perp + (material.eps_par - material.eps_perp) * s;
    let tan = material.tan_perp + (material.tan_par - material.tan_perp) * s;
    Ok((eps, tan))
}

/// Fraction of the permittivity span that is treated as unreachable because
/// the tuning curve approaches `eps_par` only asymptotically.
pub const EPS_MARGIN: f64 = 1e-3;

/// Largest permittivity accepted by [`invert_permittivity`].
pub fn max_reachable_eps(material: &LcMaterial) -> f64 {
    material.eps_par * (1.0 - EPS_MARGIN)
}

/// Bias voltage producing a target permittivity.
///
/// The inverse is unique because the tuning curve is strictly increasing
/// above threshold; targets at or below `eps_perp` map to `v_threshold`
/// by convention. Targets above `eps_par * (1 - EPS_MARGIN)` are rejected
/// with the reachable interval named.
pub fn invert_permittivity(material: &LcMaterial, eps_target: f64) -> Result<f64> {
    let eps_max = max_reachable_eps(material);
    if eps_target < material.eps_perp || eps_target > eps_max {
        return Err(Error::Range(format!(
            "target permittivity {eps_target} outside reachable interval [{}, {}]",
            material.eps_perp, eps_max
        )));
    }
    if eps_target == material.eps_perp {
        return Ok(material.v_threshold);
    }
    let s = (eps_target - material.eps_perp) / (material.eps_par - material.eps_perp);
    Ok(material.v_threshold - material.v_scale * (1.0 - s).ln())
}

/// Switching times at thickness `t_lc`, scaled quadratically from the
/// reference measurement: tau = tau_ref * (t / t_ref)^2.
pub fn response_times(base: &ResponseTimeBase, t_lc: f64) -> Result<(f64, f64)> {
    if t_lc <= 0.0 {
        return Err(Error::Domain(format!(
            "LC thickness must be positive, got {t_lc}"
        )));
    }
    let k = (t_lc / base.t_lc_ref).powi(2);
    Ok((base.tau_on_ref * k, base.tau_off_ref * k))
}

/// Total bias power of an array: exact product of per-element power and count.
pub fn array_power(p_element: f64, n_elements: u64) -> Result<f64> {
    if p_element < 0.0 {
        return Err(Error::Domain(format!(
            "element power must be non-negative, got {p_element}"
        )));
    }
    if n_elements == 0 {
        return Err(Error::Domain("element count must be at least 1".to_string()));
    }
    Ok(p_element * n_elements as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn unbiased_state_returns_perpendicular_endpoint() {
        let m = LcMaterial::gt7_29001();
        let (eps, tan) = lc_permittivity(&m, 0.0).unwrap();
        assert_eq!(eps, 2.46);
        assert_eq!(tan, 0.0116);
    }

    #[test]
    fn threshold_boundary_still_unbiased() {
        let m = LcMaterial::gt7_29001();
        let (eps, tan) = lc_permittivity(&m, m.v_threshold).unwrap();
        assert_eq!(eps, 2.46);
        assert_eq!(tan, 0.0116);
    }

    #[test]
    fn full_drive_reaches_within_one_percent_of_parallel() {
        // Oracle: direct evaluation of the saturation curve with the
        // calibrated v_scale gives s(20 V) = 0.99 exactly.
        let m = LcMaterial::gt7_29001();
        let s = m.mixing_fraction(20.0);
        assert!((s - 0.99).abs() < 1e-12, "s(20V) = {s}");
        let (eps, _) = lc_permittivity(&m, 20.0).unwrap();
        assert!(rel_err(eps, 3.53) < 0.01, "eps(20V) = {eps}");
    }

    #[test]
    fn negative_voltage_rejected() {
        let m = LcMaterial::gt7_29001();
        assert!(matches!(
            lc_permittivity(&m, -0.1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn invert_lower_endpoint_is_threshold() {
        let m = LcMaterial::gt7_29001();
        assert_eq!(invert_permittivity(&m, 2.46).unwrap(), m.v_threshold);
    }

    #[test]
    fn invert_midpoint_closed_form() {
        // s = 0.5 target: closed-form inverse is v_threshold + v_scale*ln(2).
        let m = LcMaterial::gt7_29001();
        let eps_mid = 0.5 * (m.eps_perp + m.eps_par);
        let v = invert_permittivity(&m, eps_mid).unwrap();
        let expected = m.v_threshold + m.v_scale * 2.0_f64.ln();
        assert!((v - expected).abs() < 1e-12, "v = {v}, expected {expected}");
    }

    #[test]
    fn invert_out_of_range_names_interval() {
        let m = LcMaterial::gt7_29001();
        let err = invert_permittivity(&m, 3.53).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2.46"), "message should name interval: {msg}");
        assert!(matches!(err, Error::Range(_)));
        assert!(invert_permittivity(&m, 2.0).is_err());
    }

    #[test]
    fn round_trip_identity_over_reachable_range() {
        let m = LcMaterial::gt7_29001();
        let eps_max = max_reachable_eps(&m);
        for i in 0..100 {
            let target = m.eps_perp + (eps_max - m.eps_perp) * (i as f64 / 99.0);
            let v = invert_permittivity(&m, target).unwrap();
            let (eps, _) = lc_permittivity(&m, v).unwrap();
            assert!(
                rel_err(eps, target) < 1e-9,
                "round trip {target} -> {v} V -> {eps}"
            );
        }
    }

    #[test]
    fn tuning_curve_monotone_and_bounded() {
        let m = LcMaterial::gt7_29001();
        let mut prev = 0.0;
        for i in 0..=1000 {
            let v = 100.0 * i as f64 / 1000.0;
            let (eps, tan) = lc_permittivity(&m, v).unwrap();
            assert!(eps >= prev - 1e-15, "non-monotone at {v} V");
            assert!((m.eps_perp..=m.eps_par).contains(&eps));
            assert!(tan <= m.tan_perp + 1e-15 && tan >= m.tan_par - 1e-15);
            prev = eps;
        }
    }

    #[test]
    fn response_times_match_measurement_at_reference() {
        let base = ResponseTimeBase::measured_4p6um();
        let (on, off) = response_times(&base, 4.6e-6).unwrap();
        assert_eq!(on, 15e-3);
        assert_eq!(off, 72e-3);
    }

    #[test]
    fn response_times_double_thickness_quadruple() {
        let base = ResponseTimeBase::measured_4p6um();
        let (on, off) = response_times(&base, 9.2e-6).unwrap();
        assert!(rel_err(on, 60e-3) < 1e-12, "on = {on}");
        assert!(rel_err(off, 288e-3) < 1e-12, "off = {off}");
        assert!(response_times(&base, 0.0).is_err());
    }

    #[test]
    fn array_power_product_anchors() {
        // 21.5 nW per element, one million elements -> 21.5 mW.
        let p = array_power(21.5e-9, 1_000_000).unwrap();
        assert!(rel_err(p, 21.5e-3) < 1e-15, "p = {p}");
        let p120 = array_power(21.5e-9, 120).unwrap();
        assert!(rel_err(p120, 2.58e-6) < 1e-15, "p120 = {p120}");
        assert_eq!(array_power(0.7, 1).unwrap(), 0.7);
        assert!(array_power(-1.0, 5).is_err());
        assert!(array_power(1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn response_time_scaling_is_exactly_quadratic(
            t in 1e-7_f64..1e-4,
            k in 0.1_f64..10.0,
        ) {
            let base = ResponseTimeBase::measured_4p6um();
            let (on1, _) = response_times(&base, t).unwrap();
            let (on2, _) = response_times(&base, k * t).unwrap();
            prop_assert!((on2 / on1 - k * k).abs() < 1e-9 * k * k);
        }

        #[test]
        fn invert_is_right_inverse(
            frac in 0.0_f64..1.0,
        ) {
            let m = LcMaterial::gt7_29001();
            let eps_max = max_reachable_eps(&m);
            let target = m.eps_perp + (eps_max - m.eps_perp) * frac;
            let v = invert_permittivity(&m, target).unwrap();
            let (eps, _) = lc_permittivity(&m, v).unwrap();
            prop_assert!((eps - target).abs() <= 1e-9 * target);
        }
    }
}

//! Far-field scattering of the element array and the analytic metal-plate
//! radar-cross-section reference.
//!
//! Direction convention: theta is the azimuth-plane angle (the steering
//! plane), phi the elevation-plane angle. Direction cosines are
//! `u = sin(theta)`, `v = sin(phi) * cos(theta)`, so `u^2 + v^2 <= 1`
//! inside the visible region. The phase origin sits at the layout
//! centroid.
//!
//! Per-element reflection combines the delay line's round-trip insertion
//! phase and loss with a Gaussian radiator frequency window and, when a
//! metallization offset is present, the misalignment window.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aperture::{aperture_area, ApertureLayout};
use crate::error::{Error, Result};
use crate::materials::{LcMaterial, StackMaterials};
use crate::phase_shifter::{
    effective_permittivity, insertion_loss, round_trip_phase, DelayLineSpec,
};
use crate::tolerance::{misalignment_response, ToleranceField};
use crate::{wavelength, SPEED_OF_LIGHT};

/// Default element-pattern exponent e in `cos^e(theta) * cos^e(phi)`.
///
/// The square-root-cosine amplitude gives a cosine power pattern, the
/// projected-aperture law: steered specular RCS then matches the plate
/// formula's obliquity cosines exactly and plate-referenced efficiency
/// never exceeds unity for any passive profile, while the pattern-weighted
/// beam pull stays inside half a degree out to +/-60 deg steering.
pub const DEFAULT_ELEMENT_EXPONENT: f64 = 0.5;

/// Fractional -3 dB power bandwidth of the radiator window.
pub const DEFAULT_RADIATOR_BW: f64 = 0.25;

/// Per-element drive state and its reflection coefficient per frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementState {
    /// Applied bias voltage (V RMS).
    pub v_bias: f64,
    /// Local LC thickness (m).
    pub t_lc: f64,
    /// Complex reflection coefficient, one sample per frequency-axis entry.
    pub gamma: Vec<Complex64>,
}

/// Normalized plane-wave excitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneWave {
    /// Azimuth-plane incidence angle (deg), |theta| < 90.
    pub theta_inc: f64,
    /// Elevation-plane incidence angle (deg), |phi| < 90.
    pub phi_inc: f64,
    /// Design/center frequency (Hz).
    pub frequency: f64,
    /// Field amplitude (normalized to 1).
    pub amplitude: f64,
}

impl PlaneWave {
    pub fn broadside(frequency: f64) -> Self {
        PlaneWave {
            theta_inc: 0.0,
            phi_inc: 0.0,
            frequency,
            amplitude: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_inc.abs() >= 90.0 || self.phi_inc.abs() >= 90.0 {
            return Err(Error::Domain(format!(
                "incidence angles must lie in (-90, 90) deg, got ({}, {})",
                self.theta_inc, self.phi_inc
            )));
        }
        if self.frequency <= 0.0 {
            return Err(Error::Domain("frequency must be positive".to_string()));
        }
        Ok(())
    }

    /// Incidence direction cosines (u, v).
    pub fn direction_cosines(&self) -> (f64, f64) {
        let th = self.theta_inc.to_radians();
        let ph = self.phi_inc.to_radians();
        (th.sin(), ph.sin() * th.cos())
    }
}

/// Normalization state of a far-field grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Complex field samples straight from the array sum.
    Raw,
    /// Radar cross section in m^2 (stored in the real part).
    RcsM2,
    /// dB relative to the broadside metal-plate reference.
    RelMetalPlateDb,
}

/// Complex scattered field / RCS over (frequency x theta x phi).
#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldGrid {
    pub freq_axis: Vec<f64>,
    pub theta_axis: Vec<f64>,
    pub phi_axis: Vec<f64>,
    /// Row-major samples: frequency outermost, phi innermost.
    pub values: Vec<Complex64>,
    pub normalization: Normalization,
}

impl FarFieldGrid {
    pub fn index(&self, fi: usize, ti: usize, pi: usize) -> usize {
        (fi * self.theta_axis.len() + ti) * self.phi_axis.len() + pi
    }

    pub fn at(&self, fi: usize, ti: usize, pi: usize) -> Complex64 {
        self.values[self.index(fi, ti, pi)]
    }

    pub fn validate_axes(&self) -> Result<()> {
        for axis in [&self.freq_axis, &self.theta_axis, &self.phi_axis] {
            if axis.is_empty() {
                return Err(Error::Domain("far-field axis is empty".to_string()));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Domain(
                    "far-field axes must be strictly increasing".to_string(),
                ));
            }
        }
        let expected = self.freq_axis.len() * self.theta_axis.len() * self.phi_axis.len();
        if self.values.len() != expected {
            return Err(Error::Domain(format!(
                "far-field grid has {} samples, expected {expected}",
                self.values.len()
            )));
        }
        Ok(())
    }

    /// Long-format CSV: f_hz, theta_deg, phi_deg, re, im, mag_db.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("f_hz,theta_deg,phi_deg,re,im,mag_db\n");
        for (fi, f) in self.freq_axis.iter().enumerate() {
            for (ti, th) in self.theta_axis.iter().enumerate() {
                for (pi, ph) in self.phi_axis.iter().enumerate() {
                    let v = self.at(fi, ti, pi);
                    let mag_db = 20.0 * v.norm().max(1e-300).log10();
                    out.push_str(&format!(
                        "{f:.9e},{th:.6},{ph:.6},{:.12e},{:.12e},{mag_db:.6}\n",
                        v.re, v.im
                    ));
                }
            }
        }
        out
    }

    /// Compact binary layout (little endian): three u32 axis lengths
    /// (nf, ntheta, nphi), the three axes as f64, then row-major
    /// (re, im) f64 pairs.
    pub fn write_binary<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for len in [
            self.freq_axis.len() as u32,
            self.theta_axis.len() as u32,
            self.phi_axis.len() as u32,
        ] {
            w.write_all(&len.to_le_bytes())?;
        }
        for axis in [&self.freq_axis, &self.theta_axis, &self.phi_axis] {
            for &x in axis.iter() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read back the [`write_binary`](Self::write_binary) layout.
    pub fn read_binary<R: std::io::Read>(mut r: R, normalization: Normalization) -> Result<Self> {
        let mut u32buf = [0u8; 4];
        let mut lens = [0usize; 3];
        for l in &mut lens {
            r.read_exact(&mut u32buf)?;
            *l = u32::from_le_bytes(u32buf) as usize;
        }
        let mut f64buf = [0u8; 8];
        let mut read_axis = |n: usize, r: &mut R| -> Result<Vec<f64>> {
            let mut axis = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut f64buf)?;
                axis.push(f64::from_le_bytes(f64buf));
            }
            Ok(axis)
        };
        let freq_axis = read_axis(lens[0], &mut r)?;
        let theta_axis = read_axis(lens[1], &mut r)?;
        let phi_axis = read_axis(lens[2], &mut r)?;
        let n = lens[0] * lens[1] * lens[2];
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut f64buf)?;
            let re = f64::from_le_bytes(f64buf);
            r.read_exact(&mut f64buf)?;
            let im = f64::from_le_bytes(f64buf);
            values.push(Complex64::new(re, im));
        }
        let grid = FarFieldGrid {
            freq_axis,
            theta_axis,
            phi_axis,
            values,
            normalization,
        };
        grid.validate_axes()?;
        Ok(grid)
    }
}

/// Gaussian radiator frequency window with a flat loss floor at center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiatorModel {
    /// Window center frequency (Hz).
    pub f_center: f64,
    /// -3 dB full power bandwidth as a fraction of `f_center`.
    pub fractional_bw: f64,
    /// Insertion loss at the window center (dB, one-way through the cell).
    pub il_peak_db: f64,
}

impl RadiatorModel {
    /// Window disabled: unity amplitude at every frequency.
    pub fn disabled(f_center: f64) -> Self {
        RadiatorModel {
            f_center,
            fractional_bw: f64::INFINITY,
            il_peak_db: 0.0,
        }
    }

    /// Radiator insertion loss at `f` in dB.
    pub fn il_db(&self, frequency: f64) -> f64 {
        if !self.fractional_bw.is_finite() {
            return self.il_peak_db;
        }
        let half = 0.5 * self.fractional_bw * self.f_center;
        let x = (frequency - self.f_center) / half;
        self.il_peak_db + 3.0 * x * x
    }

    /// Amplitude factor 10^(-IL/20).
    pub fn amplitude(&self, frequency: f64) -> f64 {
        10f64.powf(-self.il_db(frequency) / 20.0)
    }

    /// Pin the center loss so a uniform in-phase aperture at the reference
    /// drive state peaks at `eta_target` power efficiency.
    pub fn calibrated(
        f_center: f64,
        fractional_bw: f64,
        eta_target: f64,
        spec: &DelayLineSpec,
        material: &LcMaterial,
        stack: &StackMaterials,
    ) -> Result<Self> {
        if !(0.0 < eta_target && eta_target <= 1.0) {
            return Err(Error::Calibration(format!(
                "efficiency target must lie in (0, 1], got {eta_target}"
            )));
        }
        let (eps_eff, tan_eff) = effective_permittivity(
            spec,
            material.eps_perp,
            material.tan_perp,
            stack,
            spec.t_lc_nominal,
        )?;
        let il_line = insertion_loss(spec, eps_eff, tan_eff, f_center)?;
        let il_total = -10.0 * eta_target.log10();
        if il_line > il_total {
            return Err(Error::Calibration(format!(
                "line loss {il_line:.2} dB already exceeds the {il_total:.2} dB budget \
                 for efficiency {eta_target}"
            )));
        }
        Ok(RadiatorModel {
            f_center,
            fractional_bw,
            il_peak_db: il_total - il_line,
        })
    }
}

/// Complex reflection coefficient of one element at one frequency.
///
/// Phase is the positive round-trip insertion phase of the delay line;
/// magnitude combines the line loss and the radiator window.
pub fn element_reflection(
    material: &LcMaterial,
    stack: &StackMaterials,
    spec: &DelayLineSpec,
    radiator: &RadiatorModel,
    v_bias: f64,
    t_lc: f64,
    frequency: f64,
) -> Result<Complex64> {
    let (eps_lc, tan_lc) = crate::materials::lc_permittivity(material, v_bias)?;
    let (eps_eff, tan_eff) = effective_permittivity(spec, eps_lc, tan_lc, stack, t_lc)?;
    let phase_deg = round_trip_phase(spec, eps_eff, frequency)?;
    let il_db = insertion_loss(spec, eps_eff, tan_eff, frequency)? + radiator.il_db(frequency);
    let mag = 10f64.powf(-il_db / 20.0);
    Ok(Complex64::from_polar(mag, phase_deg.to_radians()))
}

/// Build per-element states for a voltage vector over a frequency axis,
/// using the true thickness field and its misalignment window.
pub fn build_element_states(
    material: &LcMaterial,
    stack: &StackMaterials,
    spec: &DelayLineSpec,
    radiator: &RadiatorModel,
    voltages: &[f64],
    field: &ToleranceField,
    freq_axis: &[f64],
) -> Result<Vec<ElementState>> {
    if voltages.len() != field.t_lc_per_element.len() {
        return Err(Error::Domain(format!(
            "{} voltages for {} elements",
            voltages.len(),
            field.t_lc_per_element.len()
        )));
    }
    let f_center = radiator.f_center;
    voltages
        .iter()
        .zip(&field.t_lc_per_element)
        .map(|(&v, &t)| {
            let gamma = freq_axis
                .iter()
                .map(|&f| {
                    element_reflection(material, stack, spec, radiator, v, t, f).map(|g| {
                        g * misalignment_response(field.misalignment, f, f_center)
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ElementState {
                v_bias: v,
                t_lc: t,
                gamma,
            })
        })
        .collect()
}

/// Element pattern cos^e(theta) * cos^e(phi), clamped at the horizon.
pub fn element_pattern(theta_deg: f64, phi_deg: f64, exponent: f64) -> f64 {
    let ct = theta_deg.to_radians().cos().max(0.0);
    let cp = phi_deg.to_radians().cos().max(0.0);
    ct.powf(exponent) * cp.powf(exponent)
}

/// Array sum at a single (frequency, theta, phi) sample.
#[allow(clippy::too_many_arguments)]
fn sample_field(
    positions: &[(f64, f64)],
    gammas: &[Complex64],
    k0: f64,
    inc: (f64, f64),
    theta_deg: f64,
    phi_deg: f64,
    exponent: f64,
    amplitude: f64,
) -> Complex64 {
    let th = theta_deg.to_radians();
    let ph = phi_deg.to_radians();
    let du = th.sin() - inc.0;
    let dv = ph.sin() * th.cos() - inc.1;
    let mut acc = Complex64::new(0.0, 0.0);
    for (&(x, y), &g) in positions.iter().zip(gammas) {
        let phase = k0 * (x * du + y * dv);
        acc += g * Complex64::from_polar(1.0, phase);
    }
    acc * element_pattern(theta_deg, phi_deg, exponent) * amplitude
}

/// Scattered far field of the aperture over a (frequency x theta x phi)
/// grid under plane-wave incidence. Output normalization is raw.
///
/// Samples are independent, so the evaluation is partitioned across worker
/// threads and merged by index; the result does not depend on thread count.
pub fn far_field(
    layout: &ApertureLayout,
    states: &[ElementState],
    wave: &PlaneWave,
    freq_axis: &[f64],
    theta_axis: &[f64],
    phi_axis: &[f64],
    exponent: f64,
) -> Result<FarFieldGrid> {
    wave.validate()?;
    if states.len() != layout.len() {
        return Err(Error::Domain(format!(
            "{} element states for {} layout elements",
            states.len(),
            layout.len()
        )));
    }
    for (i, s) in states.iter().enumerate() {
        if s.gamma.len() != freq_axis.len() {
            return Err(Error::Domain(format!(
                "element {i} has {} gamma samples for {} frequencies",
                s.gamma.len(),
                freq_axis.len()
            )));
        }
    }
    let inc = wave.direction_cosines();
    let positions = layout.positions();
    let nt = theta_axis.len();
    let np = phi_axis.len();

    // Per-frequency gamma slabs keep the inner loop contiguous.
    let gamma_slabs: Vec<Vec<Complex64>> = (0..freq_axis.len())
        .map(|fi| states.iter().map(|s| s.gamma[fi]).collect())
        .collect();

    let values: Vec<Complex64> = (0..freq_axis.len() * nt * np)
        .into_par_iter()
        .map(|flat| {
            let fi = flat / (nt * np);
            let ti = (flat / np) % nt;
            let pi = flat % np;
            let k0 = 2.0 * std::f64::consts::PI * freq_axis[fi] / SPEED_OF_LIGHT;
            sample_field(
                positions,
                &gamma_slabs[fi],
                k0,
                inc,
                theta_axis[ti],
                phi_axis[pi],
                exponent,
                wave.amplitude,
            )
        })
        .collect();

    let grid = FarFieldGrid {
        freq_axis: freq_axis.to_vec(),
        theta_axis: theta_axis.to_vec(),
        phi_axis: phi_axis.to_vec(),
        values,
        normalization: Normalization::Raw,
    };
    grid.validate_axes()?;
    Ok(grid)
}

/// Single-direction field sample at one frequency (used by the optimizer).
pub fn far_field_point(
    layout: &ApertureLayout,
    gammas: &[Complex64],
    frequency: f64,
    wave: &PlaneWave,
    theta_deg: f64,
    phi_deg: f64,
    exponent: f64,
) -> Complex64 {
    let k0 = 2.0 * std::f64::consts::PI * frequency / SPEED_OF_LIGHT;
    sample_field(
        layout.positions(),
        gammas,
        k0,
        wave.direction_cosines(),
        theta_deg,
        phi_deg,
        exponent,
        wave.amplitude,
    )
}

/// Analytic bistatic RCS of a flat metal plate (m^2):
/// 4 pi A^2 cos(theta_tx) cos(theta_rx) cos(phi_tx) cos(phi_rx) / lambda^2.
pub fn metal_plate_rcs(
    area: f64,
    theta_tx: f64,
    theta_rx: f64,
    phi_tx: f64,
    phi_rx: f64,
    frequency: f64,
) -> Result<f64> {
    if area <= 0.0 {
        return Err(Error::Domain(format!("area must be positive, got {area}")));
    }
    for a in [theta_tx, theta_rx, phi_tx, phi_rx] {
        if a.abs() >= 90.0 {
            return Err(Error::Domain(format!(
                "plate RCS angles must lie in (-90, 90) deg, got {a}"
            )));
        }
    }
    let lambda0 = wavelength(frequency);
    Ok(4.0 * std::f64::consts::PI * area * area / (lambda0 * lambda0)
        * theta_tx.to_radians().cos()
        * theta_rx.to_radians().cos()
        * phi_tx.to_radians().cos()
        * phi_rx.to_radians().cos())
}

/// Convert a raw field grid to RCS in m^2.
///
/// The anchor: a lossless in-phase aperture scattered to broadside is
/// assigned the normal-incidence plate RCS of the same aperture area, per
/// frequency. The ideal reference field is the element count itself
/// (unit gammas, unity pattern at broadside).
pub fn ris_rcs(grid: &FarFieldGrid, layout: &ApertureLayout) -> Result<FarFieldGrid> {
    if grid.normalization != Normalization::Raw {
        return Err(Error::State(format!(
            "RCS normalization requires a raw grid, got {:?}",
            grid.normalization
        )));
    }
    grid.validate_axes()?;
    let area = aperture_area(layout);
    let n = layout.len() as f64;
    let nt = grid.theta_axis.len();
    let np = grid.phi_axis.len();
    let mut values = Vec::with_capacity(grid.values.len());
    for (fi, &f) in grid.freq_axis.iter().enumerate() {
        let sigma_bs = metal_plate_rcs(area, 0.0, 0.0, 0.0, 0.0, f)?;
        for ti in 0..nt {
            for pi in 0..np {
                let e = grid.at(fi, ti, pi);
                let sigma = sigma_bs * e.norm_sqr() / (n * n);
                values.push(Complex64::new(sigma, 0.0));
            }
        }
    }
    Ok(FarFieldGrid {
        freq_axis: grid.freq_axis.clone(),
        theta_axis: grid.theta_axis.clone(),
        phi_axis: grid.phi_axis.clone(),
        values,
        normalization: Normalization::RcsM2,
    })
}

/// Express an RCS grid in dB relative to the broadside metal-plate
/// reference of the same aperture, per frequency (plot-ready heat maps).
pub fn rcs_to_rel_db(grid: &FarFieldGrid, layout: &ApertureLayout) -> Result<FarFieldGrid> {
    if grid.normalization != Normalization::RcsM2 {
        return Err(Error::State(format!(
            "relative-dB conversion requires an RCS grid, got {:?}",
            grid.normalization
        )));
    }
    let area = aperture_area(layout);
    let nt = grid.theta_axis.len();
    let np = grid.phi_axis.len();
    let mut values = Vec::with_capacity(grid.values.len());
    for (fi, &f) in grid.freq_axis.iter().enumerate() {
        let sigma_bs = metal_plate_rcs(area, 0.0, 0.0, 0.0, 0.0, f)?;
        for ti in 0..nt {
            for pi in 0..np {
                let ratio = grid.at(fi, ti, pi).re / sigma_bs;
                values.push(Complex64::new(10.0 * ratio.max(1e-300).log10(), 0.0));
            }
        }
    }
    Ok(FarFieldGrid {
        freq_axis: grid.freq_axis.clone(),
        theta_axis: grid.theta_axis.clone(),
        phi_axis: grid.phi_axis.clone(),
        values,
        normalization: Normalization::RelMetalPlateDb,
    })
}

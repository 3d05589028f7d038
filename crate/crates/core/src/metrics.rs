//! Aperture efficiency, peak tracking, bandwidth metrics and measurement
//! reduction.
//!
//! Efficiency follows the plate-referenced definition
//! `eta = lambda^2 sigma / (4 pi A^2 cos(theta_tx) cos(theta_rx)
//! cos(phi_tx) cos(phi_rx))`, evaluated at the squint-corrected peak so
//! narrow steered beams are not underestimated. Measurement reduction
//! performs the plate-substitution arithmetic in dBsm, the only
//! dimensionally consistent reading of mixed dB traces.

use serde::{Deserialize, Serialize};

use crate::aperture::{aperture_area, ApertureLayout};
use crate::error::{Error, Result};
use crate::scattering::{metal_plate_rcs, FarFieldGrid, Normalization};
use crate::wavelength;

/// Aperture efficiency and squint-corrected peak track per frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencySpectrum {
    pub freq_axis: Vec<f64>,
    /// Aperture efficiency per frequency, in [0, 1].
    pub eta: Vec<f64>,
    /// Tracked azimuth peak angle per frequency (deg).
    pub theta_track: Vec<f64>,
    /// Tracked elevation peak angle per frequency (deg).
    pub phi_track: Vec<f64>,
    /// Peak magnitude per frequency (dB, relative scale of the input grid).
    pub mag_db: Vec<f64>,
    /// Per-sample flags (flat pattern, non-finite input, window edge).
    pub flags: Vec<bool>,
}

impl EfficiencySpectrum {
    /// CSV export: freq_hz, eta, theta_pk_deg, mag_db.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_hz,eta,theta_pk_deg,mag_db\n");
        for i in 0..self.freq_axis.len() {
            out.push_str(&format!(
                "{:.9e},{:.9e},{:.6},{:.6}\n",
                self.freq_axis[i], self.eta[i], self.theta_track[i], self.mag_db[i]
            ));
        }
        out
    }
}

/// Geometry of a plate-substitution measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceGeometry {
    pub theta_tx: f64,
    pub theta_rx: f64,
    pub phi_tx: f64,
    pub phi_rx: f64,
    /// Aperture area of the surface under test (m^2).
    pub area_ris: f64,
    /// Aperture area of the reference plate (m^2).
    pub area_mp: f64,
}

/// Received-power traces for the surface and the reference plate.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredTraces {
    pub freq_axis: Vec<f64>,
    pub s21_ris_db: Vec<f64>,
    pub s21_mp_db: Vec<f64>,
    pub geometry: TraceGeometry,
}

impl MeasuredTraces {
    pub fn validate(&self) -> Result<()> {
        if self.freq_axis.len() != self.s21_ris_db.len()
            || self.freq_axis.len() != self.s21_mp_db.len()
        {
            return Err(Error::Data(format!(
                "trace lengths differ: {} frequencies, {} RIS samples, {} plate samples",
                self.freq_axis.len(),
                self.s21_ris_db.len(),
                self.s21_mp_db.len()
            )));
        }
        if self.geometry.area_ris <= 0.0 || self.geometry.area_mp <= 0.0 {
            return Err(Error::Data("trace geometry areas must be positive".into()));
        }
        Ok(())
    }
}

/// Parse a trace CSV with header `freq_hz,s21_ris_db,s21_mp_db`.
/// Malformed rows are reported with their 1-based line number.
pub fn parse_traces_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut freq = Vec::new();
    let mut ris = Vec::new();
    let mut mp = Vec::new();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Data("trace file is empty".to_string()))?;
    let expected = "freq_hz,s21_ris_db,s21_mp_db";
    if header.trim() != expected {
        return Err(Error::Data(format!(
            "row 1: expected header '{expected}', got '{}'",
            header.trim()
        )));
    }
    for (i, line) in lines {
        let row = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Data(format!(
                "row {row}: expected 3 columns, got {}",
                parts.len()
            )));
        }
        let parse = |s: &str, col: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Data(format!("row {row}: cannot parse {col} value '{s}'")))
        };
        freq.push(parse(parts[0], "freq_hz")?);
        ris.push(parse(parts[1], "s21_ris_db")?);
        mp.push(parse(parts[2], "s21_mp_db")?);
    }
    Ok((freq, ris, mp))
}

/// One tracked peak sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSample {
    pub theta_deg: f64,
    pub phi_deg: f64,
    /// Peak magnitude in the grid's own units (field norm or RCS).
    pub magnitude: f64,
    /// Set when the window clipped the search or the pattern was flat.
    pub flagged: bool,
}

/// Track the pattern peak across frequency, seeded at `near` and searching
/// within +/- `window` degrees of the previous peak at each step.
pub fn track_peak(
    grid: &FarFieldGrid,
    near: (f64, f64),
    window: f64,
) -> Result<Vec<PeakSample>> {
    grid.validate_axes()?;
    let theta_step = if grid.theta_axis.len() > 1 {
        grid.theta_axis[1] - grid.theta_axis[0]
    } else {
        0.0
    };
    if window <= theta_step {
        return Err(Error::Domain(format!(
            "tracking window {window} deg must exceed the grid step {theta_step} deg"
        )));
    }
    let magnitude = |fi: usize, ti: usize, pi: usize| -> f64 {
        match grid.normalization {
            Normalization::RcsM2 => grid.at(fi, ti, pi).re,
            _ => grid.at(fi, ti, pi).norm(),
        }
    };
    let mut track = Vec::with_capacity(grid.freq_axis.len());
    let mut center = near;
    for fi in 0..grid.freq_axis.len() {
        let mut best = f64::NEG_INFINITY;
        let mut worst = f64::INFINITY;
        let mut best_ti = 0;
        let mut best_pi = 0;
        let mut t_lo = usize::MAX;
        let mut t_hi = 0;
        for (ti, &th) in grid.theta_axis.iter().enumerate() {
            if (th - center.0).abs() > window {
                continue;
            }
            t_lo = t_lo.min(ti);
            t_hi = t_hi.max(ti);
            for (pi, &ph) in grid.phi_axis.iter().enumerate() {
                if grid.phi_axis.len() > 1 && (ph - center.1).abs() > window {
                    continue;
                }
                let m = magnitude(fi, ti, pi);
                worst = worst.min(m);
                if m > best {
                    best = m;
                    best_ti = ti;
                    best_pi = pi;
                }
            }
        }
        if t_lo == usize::MAX {
            return Err(Error::Domain(format!(
                "tracking window around ({:.2}, {:.2}) contains no grid samples",
                center.0, center.1
            )));
        }
        // Flat patch or a peak pinned to the window edge means the window
        // cannot follow the beam.
        let on_edge = (best_ti == t_lo || best_ti == t_hi) && grid.theta_axis.len() > 1;
        let flat = best - worst <= f64::EPSILON * best.abs();
        // Sub-grid refinement of the azimuth angle by a parabolic fit.
        let (theta_pk, mag_pk) = if !flat
            && best_ti > 0
            && best_ti + 1 < grid.theta_axis.len()
        {
            let m0 = magnitude(fi, best_ti - 1, best_pi);
            let m1 = best;
            let m2 = magnitude(fi, best_ti + 1, best_pi);
            let denom = m0 - 2.0 * m1 + m2;
            if denom.abs() > 1e-300 {
                let delta = 0.5 * (m0 - m2) / denom;
                let step = grid.theta_axis[best_ti + 1] - grid.theta_axis[best_ti];
                (
                    grid.theta_axis[best_ti] + delta.clamp(-0.5, 0.5) * step,
                    m1 - 0.25 * (m0 - m2) * delta.clamp(-0.5, 0.5),
                )
            } else {
                (grid.theta_axis[best_ti], m1)
            }
        } else {
            (grid.theta_axis[best_ti], best)
        };
        track.push(PeakSample {
            theta_deg: theta_pk,
            phi_deg: grid.phi_axis[best_pi],
            magnitude: mag_pk,
            flagged: on_edge || flat,
        });
        center = (theta_pk, grid.phi_axis[best_pi]);
    }
    Ok(track)
}

/// Aperture efficiency of a simulated RCS grid at the tracked peak.
pub fn efficiency_from_simulation(
    rcs_grid: &FarFieldGrid,
    layout: &ApertureLayout,
    incidence: (f64, f64),
    seed_target: (f64, f64),
    window: f64,
) -> Result<EfficiencySpectrum> {
    if rcs_grid.normalization != Normalization::RcsM2 {
        return Err(Error::State(format!(
            "efficiency needs an RCS grid, got {:?}",
            rcs_grid.normalization
        )));
    }
    let track = track_peak(rcs_grid, seed_target, window)?;
    let area = aperture_area(layout);
    let mut eta = Vec::with_capacity(track.len());
    let mut mag_db = Vec::with_capacity(track.len());
    let cos_inc =
        incidence.0.to_radians().cos() * incidence.1.to_radians().cos();
    for (fi, pk) in track.iter().enumerate() {
        let lambda = wavelength(rcs_grid.freq_axis[fi]);
        let cos_obs = pk.theta_deg.to_radians().cos() * pk.phi_deg.to_radians().cos();
        let denom = 4.0 * std::f64::consts::PI * area * area * cos_inc * cos_obs;
        eta.push(lambda * lambda * pk.magnitude / denom);
        mag_db.push(10.0 * pk.magnitude.max(1e-300).log10());
    }
    Ok(EfficiencySpectrum {
        freq_axis: rcs_grid.freq_axis.clone(),
        eta,
        theta_track: track.iter().map(|p| p.theta_deg).collect(),
        phi_track: track.iter().map(|p| p.phi_deg).collect(),
        mag_db,
        flags: track.iter().map(|p| p.flagged).collect(),
    })
}

/// Reduce plate-substitution traces to an efficiency spectrum.
///
/// The plate RCS from the analytic formula is converted to dBsm, the trace
/// difference added, and the result converted back before the efficiency
/// division.
pub fn reduce_measurement(traces: &MeasuredTraces) -> Result<EfficiencySpectrum> {
    traces.validate()?;
    let g = traces.geometry;
    let n = traces.freq_axis.len();
    let mut eta = Vec::with_capacity(n);
    let mut mag_db = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    for i in 0..n {
        let f = traces.freq_axis[i];
        let s_ris = traces.s21_ris_db[i];
        let s_mp = traces.s21_mp_db[i];
        if !(f.is_finite() && s_ris.is_finite() && s_mp.is_finite()) {
            eta.push(f64::NAN);
            mag_db.push(f64::NAN);
            flags.push(true);
            continue;
        }
        let sigma_mp = metal_plate_rcs(g.area_mp, g.theta_tx, g.theta_rx, g.phi_tx, g.phi_rx, f)?;
        let sigma_ris_dbsm = 10.0 * sigma_mp.log10() + (s_ris - s_mp);
        let sigma_ris = 10f64.powf(sigma_ris_dbsm / 10.0);
        let lambda = wavelength(f);
        let denom = 4.0
            * std::f64::consts::PI
            * g.area_ris
            * g.area_ris
            * g.theta_tx.to_radians().cos()
            * g.theta_rx.to_radians().cos()
            * g.phi_tx.to_radians().cos()
            * g.phi_rx.to_radians().cos();
        eta.push(lambda * lambda * sigma_ris / denom);
        mag_db.push(sigma_ris_dbsm);
        flags.push(false);
    }
    Ok(EfficiencySpectrum {
        freq_axis: traces.freq_axis.clone(),
        eta,
        theta_track: vec![g.theta_rx; n],
        phi_track: vec![g.phi_rx; n],
        mag_db,
        flags,
    })
}

/// Result of a -3 dB bandwidth evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    pub f_lo: f64,
    pub f_hi: f64,
    pub f_center: f64,
    /// (f_hi - f_lo) / f_center.
    pub fractional: f64,
    /// Set when the corresponding band edge fell outside the sweep.
    pub lo_clipped: bool,
    pub hi_clipped: bool,
}

/// Contiguous -3 dB interval around the global magnitude maximum.
///
/// `mag_db` is any magnitude-like quantity in dB. The center frequency is
/// the midpoint of the band edges; edges outside the sweep produce a
/// one-sided result with the matching flag set.
#[allow(clippy::needless_range_loop)] // crossing interpolation needs i-1 and i
pub fn bandwidth_3db(freq_axis: &[f64], mag_db: &[f64]) -> Result<Bandwidth> {
    if freq_axis.len() != mag_db.len() || freq_axis.len() < 2 {
        return Err(Error::Domain(
            "bandwidth needs matching axes with at least two samples".to_string(),
        ));
    }
    let (imax, &peak) = mag_db
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let ties = mag_db.iter().filter(|&&m| m == peak).count();
    if ties > 1 {
        return Err(Error::Domain(
            "magnitude has no unique global maximum".to_string(),
        ));
    }
    let threshold = peak - 3.0;
    let cross = |i0: usize, i1: usize| -> f64 {
        // Linear interpolation of the threshold crossing between samples.
        let (f0, f1) = (freq_axis[i0], freq_axis[i1]);
        let (m0, m1) = (mag_db[i0], mag_db[i1]);
        f0 + (threshold - m0) * (f1 - f0) / (m1 - m0)
    };
    let mut f_lo = freq_axis[0];
    let mut lo_clipped = true;
    for i in (0..imax).rev() {
        if mag_db[i] < threshold {
            f_lo = cross(i, i + 1);
            lo_clipped = false;
            break;
        }
    }
    let mut f_hi = *freq_axis.last().unwrap();
    let mut hi_clipped = true;
    for i in (imax + 1)..freq_axis.len() {
        if mag_db[i] < threshold {
            f_hi = cross(i - 1, i);
            hi_clipped = false;
            break;
        }
    }
    let f_center = 0.5 * (f_lo + f_hi);
    Ok(Bandwidth {
        f_lo,
        f_hi,
        f_center,
        fractional: (f_hi - f_lo) / f_center,
        lo_clipped,
        hi_clipped,
    })
}

/// Maximal contiguous interval around `f_center` where the differential
/// phase stays within 25% of its center value.
#[allow(clippy::needless_range_loop)] // crossing interpolation needs i-1 and i
pub fn phase_bandwidth_25pct(
    freq_axis: &[f64],
    dphi: &[f64],
    f_center: f64,
) -> Result<Bandwidth> {
    if freq_axis.len() != dphi.len() || freq_axis.len() < 2 {
        return Err(Error::Domain(
            "phase bandwidth needs matching axes with at least two samples".to_string(),
        ));
    }
    if f_center < freq_axis[0] || f_center > *freq_axis.last().unwrap() {
        return Err(Error::Domain(format!(
            "center frequency {f_center} outside the sweep"
        )));
    }
    // Differential phase at the center, linearly interpolated.
    let ic = freq_axis.partition_point(|&f| f < f_center).min(freq_axis.len() - 1);
    let i0 = ic.saturating_sub(1);
    let dphi_c = if freq_axis[ic] == f_center || ic == i0 {
        dphi[ic]
    } else {
        let t = (f_center - freq_axis[i0]) / (freq_axis[ic] - freq_axis[i0]);
        dphi[i0] + t * (dphi[ic] - dphi[i0])
    };
    let tol = 0.25 * dphi_c.abs();
    let inside = |x: f64| (x - dphi_c).abs() <= tol;
    if !inside(dphi_c) {
        return Err(Error::Numeric("center phase is not finite".to_string()));
    }
    let cross = |ia: usize, ib: usize| -> f64 {
        // Crossing of |dphi - dphi_c| = tol between adjacent samples.
        let target = if dphi[ib] > dphi_c { dphi_c + tol } else { dphi_c - tol };
        let t = (target - dphi[ia]) / (dphi[ib] - dphi[ia]);
        freq_axis[ia] + t * (freq_axis[ib] - freq_axis[ia])
    };
    let mut f_lo = freq_axis[0];
    let mut lo_clipped = true;
    for i in (0..=i0).rev() {
        if !inside(dphi[i]) {
            f_lo = cross(i + 1, i);
            lo_clipped = false;
            break;
        }
    }
    let mut f_hi = *freq_axis.last().unwrap();
    let mut hi_clipped = true;
    for i in ic..freq_axis.len() {
        if !inside(dphi[i]) {
            f_hi = cross(i - 1, i);
            hi_clipped = false;
            break;
        }
    }
    Ok(Bandwidth {
        f_lo,
        f_hi,
        f_center,
        fractional: (f_hi - f_lo) / f_center,
        lo_clipped,
        hi_clipped,
    })
}

/// Loss bookkeeping: efficiency plus named mechanism fractions plus a
/// residual must close to one.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBudget {
    pub eta: f64,
    pub mechanisms: Vec<(String, f64)>,
    pub residual: f64,
}

pub fn loss_budget(eta: f64, mechanisms: &[(&str, f64)]) -> Result<LossBudget> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!(
            "efficiency must lie in [0, 1], got {eta}"
        )));
    }
    let mut total = eta;
    for &(name, frac) in mechanisms {
        if frac < 0.0 {
            return Err(Error::Domain(format!(
                "loss fraction '{name}' must be non-negative, got {frac}"
            )));
        }
        total += frac;
    }
    if total > 1.0 + 1e-12 {
        return Err(Error::Domain(format!(
            "efficiency and loss fractions sum to {total:.4}, exceeding 1"
        )));
    }
    Ok(LossBudget {
        eta,
        mechanisms: mechanisms
            .iter()
            .map(|&(n, f)| (n.to_string(), f))
            .collect(),
        residual: 1.0 - total,
    })
}

//! Derivative-free bias-voltage optimization.
//!
//! Cyclic coordinate ascent over column (or element) voltages, one
//! golden-section line search per variable, mirroring a per-column
//! hardware dial driven by live power readings. A candidate voltage is
//! only accepted when it improves the objective, so the reported power
//! never decreases across iterations. The objective evaluates the true
//! thickness field, while initial profiles are typically derived from the
//! assumed uniform layer, exactly the mismatch the optimization corrects.

use num_complex::Complex64;

use crate::aperture::{column_groups, ApertureLayout};
use crate::error::{Error, Result};
use crate::materials::{LcMaterial, StackMaterials};
use crate::phase_shifter::DelayLineSpec;
use crate::scattering::{
    element_pattern, element_reflection, PlaneWave, RadiatorModel,
};
use crate::tolerance::{misalignment_response, ToleranceField};
use crate::SPEED_OF_LIGHT;

/// Voltage resolution of the per-variable line search (V).
pub const VOLTAGE_TOL: f64 = 0.05;

/// Sweep-to-sweep improvement below which the ascent stops (dB).
pub const SWEEP_TOL_DB: f64 = 0.05;

/// Everything the power objective needs besides the voltages.
#[derive(Debug, Clone)]
pub struct PowerObjective<'a> {
    pub layout: &'a ApertureLayout,
    pub field: &'a ToleranceField,
    pub material: &'a LcMaterial,
    pub stack: &'a StackMaterials,
    pub spec: &'a DelayLineSpec,
    pub radiator: &'a RadiatorModel,
    pub wave: PlaneWave,
    /// Receive direction (theta, phi) in degrees.
    pub target: (f64, f64),
    pub frequency: f64,
    /// Element-pattern exponent.
    pub exponent: f64,
}

impl<'a> PowerObjective<'a> {
    /// Phase factor exp(j k (x du + y dv)) per element toward the target.
    fn steering_factors(&self) -> Vec<Complex64> {
        let k0 = 2.0 * std::f64::consts::PI * self.frequency / SPEED_OF_LIGHT;
        let (u_inc, v_inc) = self.wave.direction_cosines();
        let th = self.target.0.to_radians();
        let ph = self.target.1.to_radians();
        let du = th.sin() - u_inc;
        let dv = ph.sin() * th.cos() - v_inc;
        self.layout
            .positions()
            .iter()
            .map(|&(x, y)| Complex64::from_polar(1.0, k0 * (x * du + y * dv)))
            .collect()
    }

    /// Reflection coefficient of element `idx` at voltage `v`.
    fn gamma(&self, idx: usize, v: f64) -> Result<Complex64> {
        let t = self.field.t_lc_per_element[idx];
        let g = element_reflection(
            self.material,
            self.stack,
            self.spec,
            self.radiator,
            v,
            t,
            self.frequency,
        )?;
        Ok(g * misalignment_response(self.field.misalignment, self.frequency, self.radiator.f_center))
    }

    fn power_db_of_sum(&self, sum: Complex64) -> f64 {
        let ep = element_pattern(self.target.0, self.target.1, self.exponent);
        20.0 * (sum.norm() * ep * self.wave.amplitude).max(1e-300).log10()
    }
}

/// Received power (dB) at the target direction for a voltage vector.
pub fn objective_power(objective: &PowerObjective, voltages: &[f64]) -> Result<f64> {
    if voltages.len() != objective.layout.len() {
        return Err(Error::Domain(format!(
            "{} voltages for {} elements",
            voltages.len(),
            objective.layout.len()
        )));
    }
    let factors = objective.steering_factors();
    let mut sum = Complex64::new(0.0, 0.0);
    for (i, &v) in voltages.iter().enumerate() {
        sum += objective.gamma(i, v)? * factors[i];
    }
    Ok(objective.power_db_of_sum(sum))
}

/// One accepted line-search step of the iterate log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateRecord {
    pub sweep: usize,
    pub variable: usize,
    pub voltage: f64,
    pub power_db: f64,
}

/// Outcome of a voltage optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationReport {
    pub initial_power_db: f64,
    pub final_power_db: f64,
    pub improvement_db: f64,
    /// Completed sweeps over all variables.
    pub iterations: usize,
    /// Objective evaluations consumed.
    pub evaluations: usize,
    pub voltages: Vec<f64>,
    pub converged: bool,
    pub seed: u64,
    pub log: Vec<IterateRecord>,
}

impl OptimizationReport {
    /// Key: value summary block.
    pub fn summary(&self) -> String {
        format!(
            "initial_power_db: {:.4}\nfinal_power_db: {:.4}\nimprovement_db: {:.4}\n\
             iterations: {}\nevaluations: {}\nconverged: {}\nseed: {}\n",
            self.initial_power_db,
            self.final_power_db,
            self.improvement_db,
            self.iterations,
            self.evaluations,
            self.converged,
            self.seed
        )
    }

    /// Iterate log CSV: sweep, column, voltage, power_db.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("sweep,column,voltage_v,power_db\n");
        for r in &self.log {
            out.push_str(&format!(
                "{},{},{:.6},{:.6}\n",
                r.sweep, r.variable, r.voltage, r.power_db
            ));
        }
        out
    }
}

/// Golden-section maximization of `f` on [lo, hi] to the given x tolerance.
/// Returns (x_best, f_best, evaluations).
fn golden_section_max(
    mut f: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    tol: f64,
    max_evals: usize,
) -> Result<(f64, f64, usize)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut evals = 2;
    while (b - a) > tol && evals < max_evals {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2)?;
        }
        evals += 1;
    }
    Ok(if f1 >= f2 {
        (x1, f1, evals)
    } else {
        (x2, f2, evals)
    })
}

/// Shared coordinate-ascent driver over arbitrary variable groups.
fn optimize_groups(
    objective: &PowerObjective,
    groups: &[Vec<usize>],
    initial_voltages: &[f64],
    bounds: (f64, f64),
    budget: usize,
    seed: u64,
) -> Result<OptimizationReport> {
    let n = objective.layout.len();
    if initial_voltages.len() != n {
        return Err(Error::Domain(format!(
            "{} initial voltages for {n} elements",
            initial_voltages.len()
        )));
    }
    if bounds.0 >= bounds.1 {
        return Err(Error::Domain(format!(
            "voltage bounds must be ordered, got [{}, {}]",
            bounds.0, bounds.1
        )));
    }
    if budget < groups.len() {
        return Err(Error::Domain(format!(
            "evaluation budget {budget} below the required minimum of {} (one per variable)",
            groups.len()
        )));
    }

    let factors = objective.steering_factors();
    let mut voltages = initial_voltages.to_vec();
    let mut gammas: Vec<Complex64> = (0..n)
        .map(|i| objective.gamma(i, voltages[i]))
        .collect::<Result<Vec<_>>>()?;
    let weighted = |g: &[Complex64]| -> Complex64 {
        g.iter().zip(&factors).map(|(a, b)| a * b).sum()
    };
    let mut total = weighted(&gammas);
    let initial_power_db = objective.power_db_of_sum(total);

    let mut evaluations = 0usize;
    let mut sweeps = 0usize;
    let mut converged = false;
    let mut current_power = initial_power_db;
    let mut log = Vec::new();

    'outer: loop {
        let sweep_start_power = current_power;
        for (gi, group) in groups.iter().enumerate() {
            if evaluations >= budget {
                break 'outer;
            }
            // Field of everything except this group.
            let mut rest = total;
            for &i in group {
                rest -= gammas[i] * factors[i];
            }
            // Group contribution at a candidate voltage.
            let group_sum = |v: f64| -> Result<Complex64> {
                let mut s = Complex64::new(0.0, 0.0);
                for &i in group {
                    s += objective.gamma(i, v)? * factors[i];
                }
                Ok(s)
            };
            let remaining = budget - evaluations;
            let (v_best, p_best, used) = golden_section_max(
                |v| Ok(objective.power_db_of_sum(rest + group_sum(v)?)),
                bounds.0,
                bounds.1,
                VOLTAGE_TOL,
                remaining,
            )?;
            evaluations += used;
            // Monotone ascent: keep the old voltage unless strictly better.
            if p_best > current_power {
                for &i in group {
                    gammas[i] = objective.gamma(i, v_best)?;
                    voltages[i] = v_best;
                }
                total = rest + group_sum(v_best)?;
                current_power = objective.power_db_of_sum(total);
                log.push(IterateRecord {
                    sweep: sweeps,
                    variable: gi,
                    voltage: v_best,
                    power_db: current_power,
                });
            }
        }
        sweeps += 1;
        // Refresh the running sum to shed accumulated rounding drift.
        total = weighted(&gammas);
        current_power = objective.power_db_of_sum(total);
        if current_power - sweep_start_power < SWEEP_TOL_DB {
            converged = true;
            break;
        }
    }

    let final_power_db = current_power;
    Ok(OptimizationReport {
        initial_power_db,
        final_power_db,
        improvement_db: final_power_db - initial_power_db,
        iterations: sweeps,
        evaluations,
        voltages,
        converged,
        seed,
        log,
    })
}

/// Optimize one shared voltage per column.
pub fn optimize_columns(
    objective: &PowerObjective,
    initial_voltages: &[f64],
    bounds: (f64, f64),
    budget: usize,
    seed: u64,
) -> Result<OptimizationReport> {
    let groups = column_groups(objective.layout);
    optimize_groups(objective, &groups, initial_voltages, bounds, budget, seed)
}

/// Optimize every element voltage independently.
pub fn optimize_elements(
    objective: &PowerObjective,
    initial_voltages: &[f64],
    bounds: (f64, f64),
    budget: usize,
    seed: u64,
) -> Result<OptimizationReport> {
    let groups: Vec<Vec<usize>> = (0..objective.layout.len()).map(|i| vec![i]).collect();
    optimize_groups(objective, &groups, initial_voltages, bounds, budget, seed)
}

//! Parallelism and sparsity sweeps.

use aeqsim_core::scheduler::{run_network_with, RunPlan, SimError, UnitExecutor};
use aeqsim_core::{Frame, NetworkSpec, ThresholdSchedule};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SCALES: [f64; 7] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parallelism: usize,
    pub threshold_scale: f64,
    pub total_cycles: u64,
    pub conv_cycles: u64,
    pub pe_utilization: f64,
    /// Per layer, summed over frames.
    pub input_events: Vec<u64>,
    pub layer_conv_cycles: Vec<u64>,
    /// Conv cycles minus wasted reads, stalls and wind-up.
    pub layer_event_cycles: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares. Constant data is a perfect fit only when the
/// residuals vanish.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Fit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (slope * x + intercept)).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Fit { slope, intercept, r2 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerScaling {
    pub layer: usize,
    /// Event-attributed cycles against input events.
    pub accounted: Fit,
    /// Raw conv cycles against input events.
    pub raw: Fit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub parallel_rows: Vec<SweepRow>,
    pub sparsity_rows: Vec<SweepRow>,
    /// Makespan never grows with more units.
    pub makespan_non_increasing: bool,
    /// First-layer conv cycles never shrink as input events grow.
    pub cycles_monotone_in_events: bool,
    pub scaling: Vec<LayerScaling>,
}

/// `None` if scaling collapses the schedule below strictly increasing u16s.
pub fn scaled_schedule(schedule: &ThresholdSchedule, scale: f64) -> Option<ThresholdSchedule> {
    let mut out: Vec<u16> = Vec::with_capacity(schedule.thresholds().len());
    for &t in schedule.thresholds() {
        let v = (t as f64 * scale).round();
        let floor = out.last().map_or(0.0, |&p| p as f64 + 1.0);
        let v = v.max(floor);
        if v > u16::MAX as f64 {
            return None;
        }
        out.push(v as u16);
    }
    ThresholdSchedule::new(out).ok()
}

fn run_row(net: &NetworkSpec, frames: &[Frame], plan: &RunPlan, scale: f64, exec: &dyn UnitExecutor) -> Result<SweepRow, SimError> {
    let layers = net.layers.len();
    let mut row = SweepRow {
        parallelism: plan.parallelism(),
        threshold_scale: scale,
        total_cycles: 0,
        conv_cycles: 0,
        pe_utilization: 0.0,
        input_events: vec![0; layers],
        layer_conv_cycles: vec![0; layers],
        layer_event_cycles: vec![0; layers],
    };
    let mut valid = 0u64;
    for frame in frames {
        let run = run_network_with(net, frame, plan, exec, None)?;
        row.total_cycles += run.stats.total_cycles;
        row.conv_cycles += run.stats.conv_cycles;
        for (l, s) in run.stats.layers.iter().enumerate() {
            valid += s.conv.valid_events;
            row.input_events[l] += s.input_events;
            row.layer_conv_cycles[l] += s.conv.cycles;
            row.layer_event_cycles[l] += s.conv.cycles - s.conv.wasted_reads - s.conv.stalls - s.conv.wind_up;
        }
    }
    if row.conv_cycles > 0 {
        row.pe_utilization = valid as f64 / row.conv_cycles as f64;
    }
    Ok(row)
}

pub fn sweep(
    net: &NetworkSpec,
    frames: &[Frame],
    parallel: &[usize],
    scales: &[f64],
    exec: &dyn UnitExecutor,
) -> Result<SweepReport, SimError> {
    let mut parallel_rows = Vec::with_capacity(parallel.len());
    for &p in parallel {
        parallel_rows.push(run_row(net, frames, &RunPlan::new(p)?, 1.0, exec)?);
    }
    let base_plan = RunPlan::new(parallel.first().copied().unwrap_or(1))?;
    let mut sparsity_rows = Vec::with_capacity(scales.len());
    for &scale in scales {
        let Some(schedule) = scaled_schedule(&net.schedule, scale) else { continue };
        let scaled = NetworkSpec { schedule, ..net.clone() };
        sparsity_rows.push(run_row(&scaled, frames, &base_plan, scale, exec)?);
    }

    let mut by_p: Vec<&SweepRow> = parallel_rows.iter().collect();
    by_p.sort_by_key(|r| r.parallelism);
    let makespan_non_increasing = by_p.windows(2).all(|w| w[1].total_cycles <= w[0].total_cycles);

    let mut by_events: Vec<&SweepRow> = sparsity_rows.iter().collect();
    by_events.sort_by_key(|r| r.input_events[0]);
    let cycles_monotone_in_events = by_events.windows(2).all(|w| w[1].layer_conv_cycles[0] >= w[0].layer_conv_cycles[0]);

    let scaling = (0..net.layers.len())
        .filter(|_| !sparsity_rows.is_empty())
        .map(|l| {
            let xs: Vec<f64> = sparsity_rows.iter().map(|r| r.input_events[l] as f64).collect();
            let ys: Vec<f64> = sparsity_rows.iter().map(|r| r.layer_event_cycles[l] as f64).collect();
            let raw: Vec<f64> = sparsity_rows.iter().map(|r| r.layer_conv_cycles[l] as f64).collect();
            LayerScaling { layer: l, accounted: linear_fit(&xs, &ys), raw: linear_fit(&xs, &raw) }
        })
        .collect();

    Ok(SweepReport { parallel_rows, sparsity_rows, makespan_non_increasing, cycles_monotone_in_events, scaling })
}

impl SweepReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let line = |r: &SweepRow| {
            let ev: Vec<String> = r.input_events.iter().map(u64::to_string).collect();
            format!(
                "row parallelism={} threshold_scale={} total_cycles={} conv_cycles={} pe_utilization={} input_events={}\n",
                r.parallelism,
                r.threshold_scale,
                r.total_cycles,
                r.conv_cycles,
                r.pe_utilization,
                ev.join(",")
            )
        };
        for r in self.parallel_rows.iter().chain(&self.sparsity_rows) {
            out.push_str(&line(r));
        }
        for s in &self.scaling {
            out.push_str(&format!(
                "fit layer={} slope={} intercept={} r2={} raw_r2={}\n",
                s.layer, s.accounted.slope, s.accounted.intercept, s.accounted.r2, s.raw.r2
            ));
        }
        out.push_str(&format!(
            "checks makespan_non_increasing={} cycles_monotone_in_events={}\n",
            self.makespan_non_increasing, self.cycles_monotone_in_events
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [5.0, 7.0, 9.0, 11.0];
        let f = linear_fit(&xs, &ys);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 3.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert_eq!(linear_fit(&[1.0, 1.0], &[2.0, 2.0]).r2, 1.0);
        assert!(linear_fit(&[1.0, 2.0, 3.0], &[1.0, 3.0, 1.0]).r2 < 0.5);
    }

    #[test]
    fn scaled_schedule_stays_increasing() {
        let s = ThresholdSchedule::new(vec![10, 11, 12]).unwrap();
        assert_eq!(scaled_schedule(&s, 0.1).unwrap().thresholds(), &[1, 2, 3]);
        assert_eq!(scaled_schedule(&s, 2.0).unwrap().thresholds(), &[20, 22, 24]);
        assert!(scaled_schedule(&ThresholdSchedule::new(vec![60000]).unwrap(), 2.0).is_none());
    }
}

//! Run reports. The text form is one `key=value` record per line; the JSON
//! form carries the same fields under the same names.

use std::fmt::Write as _;

use aeqsim_core::metrics::{LayerStats, NetworkStats};
use aeqsim_core::NetworkSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub index: usize,
    pub label: usize,
    pub class_potentials: Vec<i16>,
    pub stats: NetworkStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub images: usize,
    pub total_cycles: u64,
    pub conv_cycles: u64,
    pub thresh_cycles: u64,
    pub events: u64,
    pub stalls: u64,
    pub wasted_reads: u64,
    pub mean_cycles_per_frame: f64,
    pub estimated_fps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub width_bits: u32,
    pub timesteps: usize,
    pub layers: usize,
    pub parallelism: usize,
    pub clock_mhz: Option<f64>,
    pub images: Vec<ImageReport>,
    pub totals: Totals,
}

impl RunReport {
    pub fn new(net: &NetworkSpec, parallelism: usize, clock_mhz: Option<f64>, images: Vec<ImageReport>) -> RunReport {
        let mut t = Totals { images: images.len(), ..Totals::default() };
        for img in &images {
            let s = &img.stats;
            t.total_cycles += s.total_cycles;
            t.conv_cycles += s.conv_cycles;
            t.thresh_cycles += s.thresh_cycles;
            t.events += s.events;
            t.stalls += s.stalls;
            t.wasted_reads += s.wasted_reads;
        }
        if !images.is_empty() {
            t.mean_cycles_per_frame = t.total_cycles as f64 / images.len() as f64;
        }
        t.estimated_fps = clock_mhz.filter(|_| t.total_cycles > 0).map(|mhz| mhz * 1e6 / t.mean_cycles_per_frame);
        RunReport {
            width_bits: net.width.bits(),
            timesteps: net.timesteps(),
            layers: net.layers.len(),
            parallelism,
            clock_mhz,
            images,
            totals: t,
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.to_text(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
                s.push('\n');
                s
            }
        }
    }

    fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "run width_bits={} timesteps={} layers={} parallelism={} clock_mhz={}",
            self.width_bits,
            self.timesteps,
            self.layers,
            self.parallelism,
            opt(self.clock_mhz)
        );
        for img in &self.images {
            let s = &img.stats;
            let pots: Vec<String> = img.class_potentials.iter().map(i16::to_string).collect();
            let _ = writeln!(
                out,
                "image index={} label={} class_potentials={} total_cycles={} conv_cycles={} thresh_cycles={} stalls={} wasted_reads={} events={} peak_mempot_cells={} estimated_fps={}",
                img.index,
                img.label,
                pots.join(","),
                s.total_cycles,
                s.conv_cycles,
                s.thresh_cycles,
                s.stalls,
                s.wasted_reads,
                s.events,
                s.peak_mempot_cells,
                opt(s.estimated_fps)
            );
            for l in &s.layers {
                out.push_str(&layer_line(l));
            }
        }
        let t = &self.totals;
        let _ = writeln!(
            out,
            "totals images={} total_cycles={} conv_cycles={} thresh_cycles={} events={} stalls={} wasted_reads={} mean_cycles_per_frame={} estimated_fps={}",
            t.images,
            t.total_cycles,
            t.conv_cycles,
            t.thresh_cycles,
            t.events,
            t.stalls,
            t.wasted_reads,
            t.mean_cycles_per_frame,
            opt(t.estimated_fps)
        );
        out
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |x| x.to_string())
}

fn layer_line(l: &LayerStats) -> String {
    let units: Vec<String> = l.unit_cycles.iter().map(u64::to_string).collect();
    format!(
        "layer index={} input_events={} input_neurons={} timesteps={} input_sparsity={} output_events={} \
         conv_cycles={} valid_events={} wasted_reads={} stalls={} wind_up={} forwards={} saturations={} \
         thresh_cycles={} unit_cycles={} makespan_cycles={} pe_utilization={} mempot_cells={}\n",
        l.layer,
        l.input_events,
        l.input_neurons,
        l.timesteps,
        l.input_sparsity,
        l.output_events,
        l.conv.cycles,
        l.conv.valid_events,
        l.conv.wasted_reads,
        l.conv.stalls,
        l.conv.wind_up,
        l.conv.forwards,
        l.conv.saturations,
        l.thresh.cycles,
        units.join(","),
        l.makespan_cycles,
        l.pe_utilization,
        l.mempot_cells
    )
}

/// Splits a text report into `(record, [(key, value)])` lines.
pub fn parse_text(report: &str) -> Vec<(String, Vec<(String, String)>)> {
    report
        .lines()
        .filter_map(|line| {
            let mut parts = line.split_whitespace();
            let record = parts.next()?.to_string();
            let fields = parts.filter_map(|kv| kv.split_once('=')).map(|(k, v)| (k.to_string(), v.to_string())).collect();
            Some((record, fields))
        })
        .collect()
}

//! Deterministic CSV tables and minimal SVG charts.
//!
//! Floats in CSV are written with six decimals and columns are fixed, so
//! identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::costmodel::{cpu_time, ReferenceTimings};
use crate::fleet::{
    clock_histogram, default_clock_edges, feasibility_fraction, memory_cdf, memory_shortfall_fraction, ClockHistogram,
    Fleet, FleetError,
};
use crate::model::Task;
use crate::pipeline::{OutputSummary, RunTrace, SweepRow};

pub const SWEEP_COLUMNS: [&str; 6] = [
    "bandwidth_kbs",
    "cpu_time_s",
    "wall_time_s",
    "transfer_time_s",
    "uplink_bytes",
    "downlink_bytes",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("writing {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Fleet(#[from] FleetError),
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, ReportError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.display().to_string(),
        source,
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String, ReportError> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                f6(r.bandwidth_kbs),
                f6(r.trace.cpu_time_s()),
                f6(r.trace.wall_time_s()),
                f6(r.trace.transfer_time_s()),
                r.trace.uplink_bytes.to_string(),
                r.trace.downlink_bytes.to_string(),
            ]
        })
        .collect();
    csv_string(&SWEEP_COLUMNS, &rows)
}

pub const TRACE_COLUMNS: [&str; 15] = [
    "task",
    "escalated",
    "degraded",
    "gate_metric",
    "gate_threshold",
    "cpu_time_s",
    "cloud_time_s",
    "transfer_time_s",
    "wall_time_s",
    "uplink_bytes",
    "downlink_bytes",
    "decode_passes",
    "output_tokens",
    "output_audio_s",
    "net_error",
];

pub fn trace_csv(traces: &[RunTrace]) -> Result<String, ReportError> {
    let rows: Vec<Vec<String>> = traces
        .iter()
        .map(|t| {
            let (tokens, audio) = match t.output {
                OutputSummary::Tokens(n) => (n.to_string(), String::new()),
                OutputSummary::AudioSeconds(s) => (String::new(), f6(s)),
            };
            vec![
                t.task.to_string(),
                t.escalated.to_string(),
                t.degraded.to_string(),
                f6(t.gate.metric),
                f6(t.gate.threshold),
                f6(t.cpu_time_s()),
                f6(t.cloud_time_s()),
                f6(t.transfer_time_s()),
                f6(t.wall_time_s()),
                t.uplink_bytes.to_string(),
                t.downlink_bytes.to_string(),
                t.decode_passes.to_string(),
                tokens,
                audio,
                t.net_error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    csv_string(&TRACE_COLUMNS, &rows)
}

pub fn write_text(path: &Path, contents: &str) -> Result<(), ReportError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    std::fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `sweep.csv` and `sweep.svg`.
pub fn write_sweep_report(rows: &[SweepRow], dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    ensure_dir(dir)?;
    let cpu: Vec<(f64, f64)> = rows.iter().map(|r| (r.bandwidth_kbs, r.trace.cpu_time_s())).collect();
    let wall: Vec<(f64, f64)> = rows.iter().map(|r| (r.bandwidth_kbs, r.trace.wall_time_s())).collect();
    let chart = LineChart {
        title: "Inference time vs bandwidth",
        x_label: "bandwidth (KB/s, log2)",
        y_label: "seconds",
        log2_x: true,
        series: vec![("cpu time", cpu), ("wall time", wall)],
    };
    Ok(vec![
        write_file(dir, "sweep.csv", &sweep_csv(rows)?)?,
        write_file(dir, "sweep.svg", &chart.render())?,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetOptions {
    pub required_mb: f64,
    pub task: Task,
    /// Characters for TTS, audio seconds for STT.
    pub input_length: f64,
    /// CPU-time budget; the reference device's time when `None`.
    pub t_max_s: Option<f64>,
    pub unweighted: bool,
    pub bin_width_ghz: f64,
}

impl Default for FleetOptions {
    fn default() -> Self {
        Self {
            required_mb: 149.0,
            task: Task::Tts,
            input_length: 12.0,
            t_max_s: None,
            unweighted: false,
            bin_width_ghz: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetReport {
    pub options: FleetOptions,
    pub t_max_s: f64,
    pub memory_shortfall: f64,
    pub feasible: f64,
    pub histogram: ClockHistogram,
    pub memory_cdf: Vec<(f64, f64)>,
    /// (task, input length, curve of (t_max, fraction))
    pub feasibility_curves: Vec<(Task, f64, Vec<(f64, f64)>)>,
}

/// Budgets of 0.1 s to 20 s for the feasibility curves.
fn budget_grid() -> Vec<f64> {
    (1..=200).map(|i| i as f64 * 0.1).collect()
}

pub fn analyze_fleet(fleet: &Fleet, opts: &FleetOptions, timings: &ReferenceTimings) -> Result<FleetReport, FleetError> {
    let weighted;
    let fleet = if opts.unweighted {
        weighted = fleet.unweighted();
        &weighted
    } else {
        fleet
    };
    let t_max_s = match opts.t_max_s {
        Some(t) => t,
        None => cpu_time(timings.ref_clock_ghz, opts.task, opts.input_length, timings)
            .map_err(|e| FleetError::InvalidArgument(e.to_string()))?,
    };
    let feasible = feasibility_fraction(fleet, opts.task, opts.input_length, t_max_s, timings)?;
    let histogram = clock_histogram(fleet, &default_clock_edges(fleet, opts.bin_width_ghz), timings.ref_clock_ghz)?;
    let mut feasibility_curves = Vec::new();
    for task in [Task::Tts, Task::Stt] {
        for &(len, _) in timings.points(task) {
            let curve = budget_grid()
                .into_iter()
                .map(|t| Ok((t, feasibility_fraction(fleet, task, len, t, timings)?)))
                .collect::<Result<Vec<_>, FleetError>>()?;
            feasibility_curves.push((task, len, curve));
        }
    }
    Ok(FleetReport {
        options: opts.clone(),
        t_max_s,
        memory_shortfall: memory_shortfall_fraction(fleet, opts.required_mb),
        feasible,
        histogram,
        memory_cdf: memory_cdf(fleet),
        feasibility_curves,
    })
}

impl FleetReport {
    pub fn summary_csv(&self) -> Result<String, ReportError> {
        let o = &self.options;
        let rows = vec![
            vec!["weighting".into(), if o.unweighted { "unweighted" } else { "share" }.into()],
            vec!["required_mb".into(), f6(o.required_mb)],
            vec!["memory_shortfall_fraction".into(), f6(self.memory_shortfall)],
            vec!["reference_clock_ghz".into(), f6(self.histogram.reference_ghz)],
            vec!["share_below_reference_clock".into(), f6(self.histogram.below_reference)],
            vec!["task".into(), o.task.to_string()],
            vec!["input_length".into(), f6(o.input_length)],
            vec!["t_max_s".into(), f6(self.t_max_s)],
            vec!["feasibility_fraction".into(), f6(self.feasible)],
        ];
        csv_string(&["metric", "value"], &rows)
    }

    pub fn memory_cdf_csv(&self) -> Result<String, ReportError> {
        let rows: Vec<Vec<String>> = self.memory_cdf.iter().map(|&(m, s)| vec![f6(m), f6(s)]).collect();
        csv_string(&["memory_mb", "cumulative_share"], &rows)
    }

    pub fn histogram_csv(&self) -> Result<String, ReportError> {
        let rows: Vec<Vec<String>> = self
            .histogram
            .bins
            .iter()
            .map(|b| vec![f6(b.lo), f6(b.hi), f6(b.mass)])
            .collect();
        csv_string(&["lo_ghz", "hi_ghz", "share"], &rows)
    }

    pub fn feasibility_csv(&self) -> Result<String, ReportError> {
        let mut rows = Vec::new();
        for (task, len, curve) in &self.feasibility_curves {
            for &(t, f) in curve {
                rows.push(vec![task.to_string(), f6(*len), f6(t), f6(f)]);
            }
        }
        csv_string(&["task", "input_length", "t_max_s", "fraction"], &rows)
    }

    /// Writes the CSV tables and SVG charts into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
        ensure_dir(dir)?;
        let cdf = LineChart {
            title: "Cumulative share by memory",
            x_label: "memory (MB, log2)",
            y_label: "cumulative share",
            log2_x: true,
            series: vec![("fleet", self.memory_cdf.clone())],
        };
        let names: Vec<String> = self
            .feasibility_curves
            .iter()
            .map(|(task, len, _)| match task {
                Task::Tts => format!("tts {len} chars"),
                Task::Stt => format!("stt {len} s"),
            })
            .collect();
        let feas = LineChart {
            title: "Share of devices within a CPU-time budget",
            x_label: "CPU-time budget (s)",
            y_label: "share",
            log2_x: false,
            series: names
                .iter()
                .zip(&self.feasibility_curves)
                .map(|(n, (_, _, c))| (n.as_str(), c.clone()))
                .collect(),
        };
        let labels: Vec<String> = self
            .histogram
            .bins
            .iter()
            .map(|b| format!("{:.2}", b.lo))
            .collect();
        let hist = BarChart {
            title: "Share by CPU clock (GHz)",
            labels: &labels,
            values: &self.histogram.bins.iter().map(|b| b.mass).collect::<Vec<_>>(),
        };
        Ok(vec![
            write_file(dir, "summary.csv", &self.summary_csv()?)?,
            write_file(dir, "memory_cdf.csv", &self.memory_cdf_csv()?)?,
            write_file(dir, "clock_histogram.csv", &self.histogram_csv()?)?,
            write_file(dir, "feasibility.csv", &self.feasibility_csv()?)?,
            write_file(dir, "memory_cdf.svg", &cdf.render())?,
            write_file(dir, "feasibility.svg", &feas.render())?,
            write_file(dir, "clock_histogram.svg", &hist.render())?,
        ])
    }
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1, y1) = (LEFT, H - BOTTOM, W - RIGHT, TOP);
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

/// Line chart over one or more series.
pub struct LineChart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log2_x: bool,
    pub series: Vec<(&'a str, Vec<(f64, f64)>)>,
}

impl LineChart<'_> {
    pub fn render(&self) -> String {
        let tx = |x: f64| if self.log2_x { x.max(f64::MIN_POSITIVE).log2() } else { x };
        let pts = self.series.iter().flat_map(|(_, p)| p.iter());
        let (mut xmin, mut xmax, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for &(x, y) in pts {
            xmin = xmin.min(tx(x));
            xmax = xmax.max(tx(x));
            ymax = ymax.max(y);
        }
        if !xmin.is_finite() {
            (xmin, xmax) = (0.0, 1.0);
        }
        if xmax <= xmin {
            xmax = xmin + 1.0;
        }
        if ymax <= 0.0 {
            ymax = 1.0;
        }
        ymax *= 1.05;
        let px = |x: f64| LEFT + (tx(x) - xmin) / (xmax - xmin) * (W - LEFT - RIGHT);
        let py = |y: f64| H - BOTTOM - y / ymax * (H - TOP - BOTTOM);

        let mut s = svg_open(self.title);
        axes(&mut s, self.x_label, self.y_label);
        for i in 0..=4 {
            let v = ymax * i as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.2}</text>"#,
                LEFT - 6.0,
                py(v) + 4.0,
                v
            );
            let fx = xmin + (xmax - xmin) * i as f64 / 4.0;
            let label = if self.log2_x { fx.exp2() } else { fx };
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.1}</text>"#,
                LEFT + (W - LEFT - RIGHT) * i as f64 / 4.0,
                H - BOTTOM + 16.0,
                label
            );
        }
        for (i, (name, points)) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
            let ly = TOP + 14.0 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{ly:.2}" fill="{color}" text-anchor="end">{}</text>"#,
                W - RIGHT - 4.0,
                escape(name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

pub struct BarChart<'a> {
    pub title: &'a str,
    pub labels: &'a [String],
    pub values: &'a [f64],
}

impl BarChart<'_> {
    pub fn render(&self) -> String {
        let n = self.values.len().max(1) as f64;
        let vmax = self.values.iter().copied().fold(0.0, f64::max).max(1e-12) * 1.05;
        let slot = (W - LEFT - RIGHT) / n;
        let mut s = svg_open(self.title);
        axes(&mut s, "clock rate (GHz, bin start)", "share");
        for (i, (&v, label)) in self.values.iter().zip(self.labels).enumerate() {
            let h = v / vmax * (H - TOP - BOTTOM);
            let x = LEFT + slot * i as f64;
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="#1f77b4"/>"##,
                x + slot * 0.1,
                H - BOTTOM - h,
                slot * 0.8
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="9">{}</text>"#,
                x + slot / 2.0,
                H - BOTTOM + 14.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

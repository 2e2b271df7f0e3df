//! Closed-form deployment arithmetic: quantized memory, edge fractions,
//! clock-scaled CPU time and wall-time prediction.

use std::fmt;

use thiserror::Error;

use crate::config::{ConfigError, KvConfig};
use crate::model::Task;
use crate::netsim::{transfer_time, LinkSpec, MB};

/// INT8 over FP32 bytes per parameter.
pub const INT8_RATIO: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("clock rate must be positive, got {0} GHz")]
    NonPositiveClock(f64),
    #[error("invalid deployment spec: {0}")]
    InvalidSpec(String),
    #[error("invalid reference timings: {0}")]
    InvalidTimings(String),
    #[error("negative input: {0}")]
    NegativeInput(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentSpec {
    pub name: String,
    pub edge_fp32_bytes: f64,
    pub full_fp32_bytes: f64,
    /// Edge memory requirement as originally published, in bytes, when it
    /// disagrees with the formula.
    pub reported_requirement_bytes: Option<f64>,
}

impl DeploymentSpec {
    pub fn new(name: impl Into<String>, edge_fp32_bytes: f64, full_fp32_bytes: f64) -> Result<Self, CostError> {
        let name = name.into();
        if !(edge_fp32_bytes > 0.0 && edge_fp32_bytes.is_finite()) {
            return Err(CostError::InvalidSpec(format!("{name}: edge size must be positive")));
        }
        if !(full_fp32_bytes >= edge_fp32_bytes && full_fp32_bytes.is_finite()) {
            return Err(CostError::InvalidSpec(format!("{name}: full size must be at least the edge size")));
        }
        Ok(Self {
            name,
            edge_fp32_bytes,
            full_fp32_bytes,
            reported_requirement_bytes: None,
        })
    }

    pub fn from_mb(name: impl Into<String>, edge_mb: f64, full_mb: f64) -> Result<Self, CostError> {
        Self::new(name, edge_mb * MB, full_mb * MB)
    }

    pub fn with_reported_requirement_mb(mut self, mb: f64) -> Self {
        self.reported_requirement_bytes = Some(mb * MB);
        self
    }

    /// SpeechT5-sized deployment: 226 MB on the edge, 38% of the model.
    pub fn speecht5() -> Self {
        Self::from_mb("speecht5", 226.0, 594.7).expect("constants are valid")
    }

    /// Whisper-sized deployment: 567 MB on the edge, 56% of the model.
    pub fn whisper() -> Self {
        Self::from_mb("whisper", 567.0, 1012.5)
            .expect("constants are valid")
            .with_reported_requirement_mb(149.0)
    }
}

/// Edge bytes after INT8 quantization.
pub fn edge_memory_requirement(spec: &DeploymentSpec) -> f64 {
    spec.edge_fp32_bytes * INT8_RATIO
}

pub fn edge_fraction_pct(spec: &DeploymentSpec) -> f64 {
    100.0 * spec.edge_fp32_bytes / spec.full_fp32_bytes
}

/// Quantized edge footprint as a percentage of the full FP32 model.
pub fn overall_usage_pct(spec: &DeploymentSpec) -> f64 {
    100.0 * edge_memory_requirement(spec) / spec.full_fp32_bytes
}

/// A note when the published requirement differs from the formula by more
/// than rounding to whole megabytes.
pub fn requirement_annotation(spec: &DeploymentSpec) -> Option<String> {
    let reported = spec.reported_requirement_bytes?;
    let computed = edge_memory_requirement(spec);
    if (reported - computed).abs() <= 0.5 * MB {
        return None;
    }
    Some(format!(
        "{}: computed requirement {:.2} MB (25% of {:.1} MB); published figure is {:.0} MB",
        spec.name,
        computed / MB,
        spec.edge_fp32_bytes / MB,
        reported / MB
    ))
}

/// Measured CPU times on a reference device.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTimings {
    pub ref_clock_ghz: f64,
    /// (characters, seconds)
    pub tts: Vec<(f64, f64)>,
    /// (audio seconds, seconds)
    pub stt: Vec<(f64, f64)>,
}

impl Default for ReferenceTimings {
    fn default() -> Self {
        Self {
            ref_clock_ghz: 1.7,
            tts: vec![(12.0, 0.5), (270.0, 8.9)],
            stt: vec![(1.0, 2.97), (19.0, 3.92)],
        }
    }
}

impl ReferenceTimings {
    pub fn validate(&self) -> Result<(), CostError> {
        if !(self.ref_clock_ghz > 0.0 && self.ref_clock_ghz.is_finite()) {
            return Err(CostError::NonPositiveClock(self.ref_clock_ghz));
        }
        for (task, pts) in [("tts", &self.tts), ("stt", &self.stt)] {
            if pts.is_empty() {
                return Err(CostError::InvalidTimings(format!("no {task} points")));
            }
            if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(CostError::InvalidTimings(format!("{task} points must increase in length")));
            }
            if pts.iter().any(|&(l, t)| !l.is_finite() || !(t >= 0.0 && t.is_finite())) {
                return Err(CostError::InvalidTimings(format!("{task} points must be finite, times non-negative")));
            }
        }
        Ok(())
    }

    pub fn points(&self, task: Task) -> &[(f64, f64)] {
        match task {
            Task::Tts => &self.tts,
            Task::Stt => &self.stt,
        }
    }
}

/// Piecewise-linear through `pts`, extrapolated from the end segments.
fn interp(pts: &[(f64, f64)], x: f64) -> f64 {
    if pts.len() == 1 {
        return pts[0].1;
    }
    let i = pts
        .windows(2)
        .position(|w| x <= w[1].0)
        .unwrap_or(pts.len() - 2);
    let (x0, y0) = pts[i];
    let (x1, y1) = pts[i + 1];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Edge CPU time on a device of `clock_ghz`, scaled inversely from the
/// reference clock. Lengths are characters for TTS and audio seconds for STT.
pub fn cpu_time(clock_ghz: f64, task: Task, input_length: f64, r: &ReferenceTimings) -> Result<f64, CostError> {
    if !(clock_ghz > 0.0) {
        return Err(CostError::NonPositiveClock(clock_ghz));
    }
    let at_ref = interp(r.points(task), input_length).max(0.0);
    Ok(at_ref * r.ref_clock_ghz / clock_ghz)
}

/// Wall time of a run: CPU time plus, when escalated, both transfers and
/// cloud compute.
pub fn predict_wall_time(
    cpu_s: f64,
    escalated: bool,
    uplink_bytes: u64,
    downlink_bytes: u64,
    link: &LinkSpec,
    cloud_s: f64,
) -> Result<f64, CostError> {
    if cpu_s < 0.0 {
        return Err(CostError::NegativeInput("cpu time"));
    }
    if cloud_s < 0.0 {
        return Err(CostError::NegativeInput("cloud time"));
    }
    if !escalated {
        return Ok(cpu_s);
    }
    Ok(cpu_s + transfer_time(uplink_bytes, link) + transfer_time(downlink_bytes, link) + cloud_s)
}

/// Deployment specs and reference timings, with bundled defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    pub deployments: Vec<DeploymentSpec>,
    pub timings: ReferenceTimings,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            deployments: vec![DeploymentSpec::speecht5(), DeploymentSpec::whisper()],
            timings: ReferenceTimings::default(),
        }
    }
}

fn parse_pair(s: &str, key: &str) -> Result<(f64, f64), ConfigError> {
    let bad = || ConfigError::BadValue {
        key: key.to_string(),
        value: s.to_string(),
    };
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

impl CostConfig {
    /// Reads `deployment = name edge_mb full_mb [reported_mb]`,
    /// `ref_clock_ghz`, and repeated `tts_point` / `stt_point` entries of the
    /// form `length:seconds`. Keys that are absent keep their defaults.
    pub fn from_kv(kv: &KvConfig) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let deps: Vec<&str> = kv.get_all("deployment").collect();
        if !deps.is_empty() {
            cfg.deployments = deps
                .iter()
                .map(|line| {
                    let bad = |msg: String| ConfigError::Invalid(format!("deployment `{line}`: {msg}"));
                    let parts: Vec<&str> = line.split_whitespace().collect();
                    if !(3..=4).contains(&parts.len()) {
                        return Err(bad("expected `name edge_mb full_mb [reported_mb]`".into()));
                    }
                    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")));
                    let spec = DeploymentSpec::from_mb(parts[0], num(parts[1])?, num(parts[2])?)
                        .map_err(|e| bad(e.to_string()))?;
                    Ok(match parts.get(3) {
                        Some(r) => spec.with_reported_requirement_mb(num(r)?),
                        None => spec,
                    })
                })
                .collect::<Result<_, _>>()?;
        }
        if let Some(c) = kv.get::<f64>("ref_clock_ghz")? {
            cfg.timings.ref_clock_ghz = c;
        }
        for (key, slot) in [("tts_point", &mut cfg.timings.tts), ("stt_point", &mut cfg.timings.stt)] {
            let pts = kv.get_all(key).map(|s| parse_pair(s, key)).collect::<Result<Vec<_>, _>>()?;
            if !pts.is_empty() {
                *slot = pts;
            }
        }
        cfg.timings
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

/// One line of the memory summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct MemorySummary {
    pub name: String,
    pub edge_fp32_mb: f64,
    pub full_fp32_mb: f64,
    pub edge_int8_mb: f64,
    pub edge_fraction_pct: f64,
    pub overall_usage_pct: f64,
    pub annotation: Option<String>,
}

impl MemorySummary {
    pub fn of(spec: &DeploymentSpec) -> Self {
        Self {
            name: spec.name.clone(),
            edge_fp32_mb: spec.edge_fp32_bytes / MB,
            full_fp32_mb: spec.full_fp32_bytes / MB,
            edge_int8_mb: edge_memory_requirement(spec) / MB,
            edge_fraction_pct: edge_fraction_pct(spec),
            overall_usage_pct: overall_usage_pct(spec),
            annotation: requirement_annotation(spec),
        }
    }
}

impl fmt::Display for MemorySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: edge {:.2} MB fp32 -> {:.2} MB int8, edge fraction {:.1}%, overall usage {:.2}%",
            self.name, self.edge_fp32_mb, self.edge_int8_mb, self.edge_fraction_pct, self.overall_usage_pct
        )?;
        if let Some(a) = &self.annotation {
            write!(f, " [{a}]")?;
        }
        Ok(())
    }
}

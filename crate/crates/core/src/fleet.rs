//! Share-weighted statistics over a fleet of phone models.

use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::costmodel::{cpu_time, ReferenceTimings};
use crate::model::Task;

/// Synthetic 25-device fleet. 4% of share has under 149 MB of memory and
/// 80% of share is clocked below 1.7 GHz.
pub const BUNDLED_FLEET_CSV: &str = include_str!("../data/fleet_fixture.csv");

pub const HEADER: [&str; 4] = ["model", "share", "memory_mb", "cpu_ghz"];

#[derive(Debug, Error)]
pub enum FleetError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad header: expected `model,share,memory_mb,cpu_ghz`, got `{0}`")]
    BadHeader(String),
    #[error("line {line}, field `{field}`: {msg}")]
    Row { line: u64, field: &'static str, msg: String },
    #[error("fleet has no devices")]
    EmptyFleet,
    #[error("fleet shares sum to zero")]
    ZeroShare,
    #[error("bad histogram edges: {0}")]
    BadEdges(String),
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceRecord {
    pub model_name: String,
    pub market_share: f64,
    pub memory_mb: f64,
    pub clock_ghz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    records: Vec<DeviceRecord>,
}

impl Fleet {
    /// Validates records and rescales shares to sum to 1.
    pub fn from_records(mut records: Vec<DeviceRecord>) -> Result<Self, FleetError> {
        if records.is_empty() {
            return Err(FleetError::EmptyFleet);
        }
        for (i, r) in records.iter().enumerate() {
            let line = i as u64 + 2;
            check(line, "share", r.market_share, |v| v >= 0.0, "must be >= 0")?;
            check(line, "memory_mb", r.memory_mb, |v| v > 0.0, "must be > 0")?;
            check(line, "cpu_ghz", r.clock_ghz, |v| v > 0.0, "must be > 0")?;
        }
        let total: f64 = records.iter().map(|r| r.market_share).sum();
        if total <= 0.0 {
            return Err(FleetError::ZeroShare);
        }
        for r in &mut records {
            r.market_share /= total;
        }
        Ok(Self { records })
    }

    pub fn parse_csv(input: impl Read) -> Result<Self, FleetError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr
            .headers()
            .map_err(|e| FleetError::BadHeader(e.to_string()))?
            .clone();
        if header.is_empty() {
            return Err(FleetError::EmptyFleet);
        }
        if header.iter().ne(HEADER) {
            return Err(FleetError::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
        }
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| FleetError::Row {
                line: e.position().map_or(0, |p| p.line()),
                field: "row",
                msg: e.to_string(),
            })?;
            let line = row.position().map_or(0, |p| p.line());
            let num = |idx: usize, field: &'static str| -> Result<f64, FleetError> {
                let raw = &row[idx];
                raw.parse::<f64>().map_err(|_| FleetError::Row {
                    line,
                    field,
                    msg: format!("`{raw}` is not a number"),
                })
            };
            let rec = DeviceRecord {
                model_name: row[0].to_string(),
                market_share: num(1, "share")?,
                memory_mb: num(2, "memory_mb")?,
                clock_ghz: num(3, "cpu_ghz")?,
            };
            check(line, "share", rec.market_share, |v| v >= 0.0, "must be >= 0")?;
            check(line, "memory_mb", rec.memory_mb, |v| v > 0.0, "must be > 0")?;
            check(line, "cpu_ghz", rec.clock_ghz, |v| v > 0.0, "must be > 0")?;
            records.push(rec);
        }
        Self::from_records(records)
    }

    pub fn bundled() -> Self {
        Self::parse_csv(BUNDLED_FLEET_CSV.as_bytes()).expect("bundled fixture is valid")
    }

    pub fn records(&self) -> &[DeviceRecord] {
        &self.records
    }

    /// Every model weighted equally.
    pub fn unweighted(&self) -> Self {
        let w = 1.0 / self.records.len() as f64;
        Self {
            records: self
                .records
                .iter()
                .map(|r| DeviceRecord {
                    market_share: w,
                    ..r.clone()
                })
                .collect(),
        }
    }

    fn share_where(&self, pred: impl Fn(&DeviceRecord) -> bool) -> f64 {
        self.records.iter().filter(|r| pred(r)).map(|r| r.market_share).sum()
    }
}

fn check(line: u64, field: &'static str, v: f64, ok: impl Fn(f64) -> bool, msg: &str) -> Result<(), FleetError> {
    if v.is_finite() && ok(v) {
        Ok(())
    } else {
        Err(FleetError::Row {
            line,
            field,
            msg: format!("{v} {msg}"),
        })
    }
}

pub fn load_fleet(path: impl AsRef<Path>) -> Result<Fleet, FleetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => FleetError::FileNotFound(path.display().to_string()),
        _ => FleetError::Io {
            path: path.display().to_string(),
            source,
        },
    })?;
    Fleet::parse_csv(file)
}

/// Share of the fleet with less than `required_mb` of memory.
pub fn memory_shortfall_fraction(fleet: &Fleet, required_mb: f64) -> f64 {
    fleet.share_where(|r| r.memory_mb < required_mb)
}

/// Share of the fleet clocked strictly below `ghz`.
pub fn share_below_clock(fleet: &Fleet, ghz: f64) -> f64 {
    fleet.share_where(|r| r.clock_ghz < ghz)
}

/// Share of the fleet whose predicted CPU time is within `t_max_s`.
pub fn feasibility_fraction(
    fleet: &Fleet,
    task: Task,
    input_length: f64,
    t_max_s: f64,
    timings: &ReferenceTimings,
) -> Result<f64, FleetError> {
    if !(t_max_s > 0.0) {
        return Err(FleetError::InvalidArgument(format!("t_max must be positive, got {t_max_s}")));
    }
    Ok(fleet.share_where(|r| {
        cpu_time(r.clock_ghz, task, input_length, timings).expect("validated positive clock") <= t_max_s
    }))
}

/// Cumulative share at each distinct memory size, ascending.
pub fn memory_cdf(fleet: &Fleet) -> Vec<(f64, f64)> {
    let mut recs: Vec<&DeviceRecord> = fleet.records.iter().collect();
    recs.sort_by(|a, b| a.memory_mb.total_cmp(&b.memory_mb));
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut acc = 0.0;
    for r in recs {
        acc += r.market_share;
        match out.last_mut() {
            Some(last) if last.0 == r.memory_mb => last.1 = acc,
            _ => out.push((r.memory_mb, acc)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClockHistogram {
    /// Bins are `[lo, hi)` except the last, which includes `hi`.
    pub bins: Vec<HistBin>,
    /// Share outside every bin.
    pub outside: f64,
    pub reference_ghz: f64,
    pub below_reference: f64,
}

/// Share-weighted histogram of clock rates.
pub fn clock_histogram(fleet: &Fleet, edges: &[f64], reference_ghz: f64) -> Result<ClockHistogram, FleetError> {
    if edges.len() < 2 {
        return Err(FleetError::BadEdges("need at least two edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FleetError::BadEdges("edges must be finite and strictly increasing".into()));
    }
    let mut bins: Vec<HistBin> = edges
        .windows(2)
        .map(|w| HistBin {
            lo: w[0],
            hi: w[1],
            mass: 0.0,
        })
        .collect();
    let last = bins.len() - 1;
    let mut outside = 0.0;
    for r in &fleet.records {
        let c = r.clock_ghz;
        let idx = bins
            .iter()
            .position(|b| c >= b.lo && c < b.hi)
            .or_else(|| (c == bins[last].hi).then_some(last));
        match idx {
            Some(i) => bins[i].mass += r.market_share,
            None => outside += r.market_share,
        }
    }
    Ok(ClockHistogram {
        bins,
        outside,
        reference_ghz,
        below_reference: share_below_clock(fleet, reference_ghz),
    })
}

/// Evenly spaced edges of `width` GHz covering every clock in the fleet.
pub fn default_clock_edges(fleet: &Fleet, width: f64) -> Vec<f64> {
    let max = fleet.records.iter().map(|r| r.clock_ghz).fold(0.0, f64::max);
    let n = (max / width).floor() as usize + 1;
    (0..=n).map(|i| i as f64 * width).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn oracle_feasible(f: &Fleet, task: Task, len: f64, t: f64, r: &ReferenceTimings) -> f64 {
        let mut s = 0.0;
        for d in f.records() {
            if cpu_time(d.clock_ghz, task, len, r).unwrap() <= t {
                s += d.market_share;
            }
        }
        s
    }

    #[test]
    fn bundled_fixture_statistics() {
        let f = Fleet::bundled();
        assert_eq!(f.records().len(), 25);
        let total: f64 = f.records().iter().map(|r| r.market_share).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!((memory_shortfall_fraction(&f, 149.0) - 0.04).abs() < 1e-9);
        assert!((share_below_clock(&f, 1.7) - 0.80).abs() < 1e-9);
        let r = ReferenceTimings::default();
        let t = cpu_time(1.7, Task::Tts, 12.0, &r).unwrap();
        let frac = feasibility_fraction(&f, Task::Tts, 12.0, t, &r).unwrap();
        assert!((frac - 0.20).abs() < 1e-9);
        assert_eq!(frac, oracle_feasible(&f, Task::Tts, 12.0, t, &r));
    }

    #[test]
    fn shortfall_extremes() {
        let f = Fleet::bundled();
        assert_eq!(memory_shortfall_fraction(&f, 0.0), 0.0);
        assert!((memory_shortfall_fraction(&f, 1e9) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn feasibility_extremes() {
        let f = Fleet::bundled();
        let r = ReferenceTimings::default();
        assert!((feasibility_fraction(&f, Task::Stt, 5.0, 1e12, &r).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(feasibility_fraction(&f, Task::Stt, 5.0, 1e-9, &r).unwrap(), 0.0);
        assert!(feasibility_fraction(&f, Task::Stt, 5.0, 0.0, &r).is_err());
    }

    #[test]
    fn histogram_masses() {
        let f = Fleet::bundled();
        let h = clock_histogram(&f, &default_clock_edges(&f, 0.25), 1.7).unwrap();
        let sum: f64 = h.bins.iter().map(|b| b.mass).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert_eq!(h.outside, 0.0);
        assert!((h.below_reference - 0.8).abs() < 1e-9);
        let one = clock_histogram(&f, &[0.0, 10.0], 1.7).unwrap();
        assert!((one.bins[0].mass - 1.0).abs() < 1e-9);
        assert!(matches!(clock_histogram(&f, &[1.0, 1.0], 1.7), Err(FleetError::BadEdges(_))));
        assert!(matches!(clock_histogram(&f, &[1.0], 1.7), Err(FleetError::BadEdges(_))));
        let partial = clock_histogram(&f, &[1.0, 2.0], 1.7).unwrap();
        let s: f64 = partial.bins[0].mass + partial.outside;
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let csv = "model,share,memory_mb,cpu_ghz\na,0.5,100,1.0\nb,0.5,-3,1.0\n";
        match Fleet::parse_csv(csv.as_bytes()) {
            Err(FleetError::Row { line: 3, field: "memory_mb", .. }) => {}
            other => panic!("{other:?}"),
        }
        let csv = "model,share,memory_mb,cpu_ghz\na,0.5,100,fast\n";
        assert!(matches!(
            Fleet::parse_csv(csv.as_bytes()),
            Err(FleetError::Row { line: 2, field: "cpu_ghz", .. })
        ));
        assert!(matches!(Fleet::parse_csv("".as_bytes()), Err(FleetError::EmptyFleet)));
        assert!(matches!(
            Fleet::parse_csv("model,share,memory_mb,cpu_ghz\n".as_bytes()),
            Err(FleetError::EmptyFleet)
        ));
        assert!(matches!(Fleet::parse_csv("a,b\n1,2\n".as_bytes()), Err(FleetError::BadHeader(_))));
        assert!(matches!(load_fleet("/nonexistent/fleet.csv"), Err(FleetError::FileNotFound(_))));
    }

    #[test]
    fn shares_are_normalized() {
        let csv = "model,share,memory_mb,cpu_ghz\na,3,100,1.0\nb,1,200,2.0\n";
        let f = Fleet::parse_csv(csv.as_bytes()).unwrap();
        assert_eq!(f.records()[0].market_share, 0.75);
        let u = f.unweighted();
        assert_eq!(memory_shortfall_fraction(&u, 150.0), 0.5);
    }

    #[test]
    fn cdf_ends_at_one() {
        let cdf = memory_cdf(&Fleet::bundled());
        assert!((cdf.last().unwrap().1 - 1.0).abs() < 1e-9);
        assert!(cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
    }

    fn arb_fleet() -> impl Strategy<Value = Fleet> {
        proptest::collection::vec((0.0f64..1.0, 16.0f64..8192.0, 0.3f64..3.5), 1..40).prop_map(|v| {
            let recs = v
                .into_iter()
                .enumerate()
                .map(|(i, (s, m, c))| DeviceRecord {
                    model_name: format!("d{i}"),
                    market_share: s + 1e-3,
                    memory_mb: m,
                    clock_ghz: c,
                })
                .collect();
            Fleet::from_records(recs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn monotone_fractions(f in arb_fleet(), a in 0.0f64..9000.0, b in 0.0f64..9000.0,
                              t1 in 0.01f64..30.0, t2 in 0.01f64..30.0, len in 1.0f64..300.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s_lo = memory_shortfall_fraction(&f, lo);
            let s_hi = memory_shortfall_fraction(&f, hi);
            prop_assert!(s_lo <= s_hi);
            prop_assert!((0.0..=1.0 + 1e-9).contains(&s_hi));

            let r = ReferenceTimings::default();
            let (tl, th) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let fl = feasibility_fraction(&f, Task::Tts, len, tl, &r).unwrap();
            let fh = feasibility_fraction(&f, Task::Tts, len, th, &r).unwrap();
            prop_assert!(fl <= fh);
            prop_assert!((0.0..=1.0 + 1e-9).contains(&fh));
            prop_assert_eq!(fh, oracle_feasible(&f, Task::Tts, len, th, &r));
        }

        #[test]
        fn histogram_conserves_share(f in arb_fleet(), width in 0.1f64..1.0) {
            let h = clock_histogram(&f, &default_clock_edges(&f, width), 1.7).unwrap();
            let sum: f64 = h.bins.iter().map(|b| b.mass).sum::<f64>() + h.outside;
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert_eq!(h.outside, 0.0);
        }
    }
}

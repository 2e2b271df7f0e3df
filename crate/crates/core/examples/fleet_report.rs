//! Fleet feasibility statistics and the CSV/SVG report.

use cascade::costmodel::{cpu_time, ReferenceTimings};
use cascade::fleet::{feasibility_fraction, memory_shortfall_fraction, share_below_clock, Fleet};
use cascade::model::Task;
use cascade::report::{analyze_fleet, FleetOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fleet = match std::env::args().nth(1) {
        Some(p) => cascade::fleet::load_fleet(p)?,
        None => Fleet::bundled(),
    };
    let r = ReferenceTimings::default();
    println!("{} devices", fleet.records().len());
    println!("share under 149 MB:  {:.3}", memory_shortfall_fraction(&fleet, 149.0));
    println!("share below 1.7 GHz: {:.3}", share_below_clock(&fleet, 1.7));
    for (task, len) in [(Task::Tts, 12.0), (Task::Tts, 270.0), (Task::Stt, 19.0)] {
        let t = cpu_time(r.ref_clock_ghz, task, len, &r)?;
        println!(
            "{task} length {len}: {:.3} of share within {t:.2} s (1 GHz device needs {:.2} s)",
            feasibility_fraction(&fleet, task, len, t, &r)?,
            cpu_time(1.0, task, len, &r)?
        );
    }
    let dir = std::env::temp_dir().join("cascade_fleet");
    for p in analyze_fleet(&fleet, &FleetOptions::default(), &r)?.write(&dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

//! CPU and wall time of forced-escalation runs across link bandwidths.

use cascade::fixtures::{speech_like, LONG_TEXT};
use cascade::model::{ModelConfig, SplitModel};
use cascade::netsim::LinkSpec;
use cascade::pipeline::{sweep_bandwidth, text_to_tokens, EdgeRuntime, SweepInput, STANDARD_SWEEP_KBS};
use cascade::report::{sweep_csv, write_sweep_report};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let template = LinkSpec::virtual_kbs(1.0)?;

    let tts = EdgeRuntime::new(SplitModel::build(ModelConfig::bundled_tts())?);
    let tokens = text_to_tokens(LONG_TEXT, 64);
    let rows = sweep_bandwidth(SweepInput::Tokens(&tokens), &STANDARD_SWEEP_KBS, &tts, template)?;
    println!("tts, {} characters\n{}", tokens.len(), sweep_csv(&rows)?);
    for r in &rows {
        println!(
            "{:>6} KB/s: transfer is {:>5.1}% of wall time",
            r.bandwidth_kbs,
            100.0 * r.trace.transfer_time_s() / r.trace.wall_time_s()
        );
    }
    let dir = std::env::temp_dir().join("cascade_sweep");
    write_sweep_report(&rows, &dir)?;
    println!("charts in {}", dir.display());

    let stt = EdgeRuntime::new(SplitModel::build(ModelConfig::bundled_stt())?);
    let w = speech_like(1.9, 1);
    let rows = sweep_bandwidth(SweepInput::Audio(&w), &STANDARD_SWEEP_KBS, &stt, template)?;
    println!("\nstt, 1.9 s audio\n{}", sweep_csv(&rows)?);
    Ok(())
}

//! Transcription through the cascade on a virtual link, with and without
//! escalation.

use cascade::fixtures::speech_like;
use cascade::gating::GateConfig;
use cascade::model::{ModelConfig, SplitModel};
use cascade::netsim::LinkSpec;
use cascade::pipeline::{run_stt, EdgeRuntime};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rt = EdgeRuntime::new(SplitModel::build(ModelConfig::bundled_stt())?);
    let mut link = rt.virtual_link(LinkSpec::virtual_kbs(512.0)?);

    for (secs, force) in [(0.1, false), (0.1, true), (1.9, true)] {
        let w = speech_like(secs, 42);
        let (tokens, t) = run_stt(&w, &rt, &GateConfig::default(), &mut link, force)?;
        println!(
            "{secs:.1} s audio, force={force}: {} tokens, gate {:.3} ({}), escalated={}, up {} B, down {} B, cpu {:.4} s, wall {:.4} s",
            tokens.len(),
            t.gate.metric,
            if t.gate.escalates() { "escalate" } else { "pass" },
            t.escalated,
            t.uplink_bytes,
            t.downlink_bytes,
            t.cpu_time_s(),
            t.wall_time_s()
        );
    }
    println!("virtual clock spent on the link: {:?}", link.clock());
    Ok(())
}

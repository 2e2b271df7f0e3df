//! Speech synthesis through the cascade; writes the edge and cloud audio.

use cascade::audio::wav::write_wav;
use cascade::fixtures::{LONG_TEXT, SHORT_TEXT};
use cascade::gating::GateConfig;
use cascade::model::{ModelConfig, SplitModel};
use cascade::netsim::LinkSpec;
use cascade::pipeline::{run_tts, text_to_tokens, EdgeRuntime};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rt = EdgeRuntime::new(SplitModel::build(ModelConfig::bundled_tts())?);
    let mut link = rt.virtual_link(LinkSpec::virtual_kbs(1024.0)?);
    let out = std::env::temp_dir();

    for (name, text) in [("short", SHORT_TEXT), ("long", LONG_TEXT)] {
        let tokens = text_to_tokens(text, rt.model.config().vocab_size);
        for force in [false, true] {
            let (audio, t) = run_tts(&tokens, &rt, &GateConfig::default(), &mut link, force)?;
            let path = out.join(format!("cascade_{name}_{}.wav", if t.escalated { "cloud" } else { "edge" }));
            write_wav(&path, &audio)?;
            println!(
                "{} chars, force={force}: snr {:.1} dB, {:.2} s audio, up {} B, wall {:.4} s -> {}",
                tokens.len(),
                t.gate.metric,
                audio.duration_s(),
                t.uplink_bytes,
                t.wall_time_s(),
                path.display()
            );
        }
    }
    Ok(())
}

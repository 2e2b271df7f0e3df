//! The split toy transformer: prenet features, both encoders, greedy decoding.

use cascade::model::{Branch, DecodeResult, ModelConfig, ModelInput, Part, SplitModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = SplitModel::build(ModelConfig::bundled_tts())?;
    println!(
        "tts model: {} parameters, edge fraction {:.3}",
        model.param_count(Part::All),
        model.edge_fraction()
    );

    let tokens = [5, 9, 14, 2, 33];
    let features = model.prenet_forward(ModelInput::Tokens(&tokens))?;
    println!("prenet features {:?}", features.shape());

    for branch in [Branch::Edge, Branch::Cloud] {
        let hidden = model.encoder_forward(&features, branch)?;
        match model.decoder_greedy(&hidden) {
            DecodeResult::Frames { frames, stop_probs } => println!(
                "{branch:?} encoder -> {} mel frames, final stop probability {:.3}",
                frames.shape()[0],
                stop_probs.last().copied().unwrap_or(0.0)
            ),
            DecodeResult::Tokens { .. } => unreachable!(),
        }
    }

    let maps = model.encoder_attention_maps(&features, Branch::Edge)?;
    let row: f32 = maps[0][0][0].iter().sum();
    println!("layer 0, head 0, row 0 attention sums to {row:.6}");

    let rigged = model.with_identity_extended_cloud();
    let a = rigged.encoder_forward(&features, Branch::Edge)?;
    let b = rigged.encoder_forward(&features, Branch::Cloud)?;
    println!("identity-extended cloud reproduces the edge encoder: {}", a.states == b.states);
    Ok(())
}

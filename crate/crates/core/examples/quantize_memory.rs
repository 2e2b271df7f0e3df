//! INT8 quantization of the edge model and the deployment memory arithmetic.

use cascade::costmodel::{CostConfig, MemorySummary};
use cascade::model::{ModelConfig, Part, SplitModel};
use cascade::tensor::{dequantize, quantize_linear, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t = Tensor::from_f32(vec![2, 4], vec![-1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 0.9, 1.0])?;
    let q = quantize_linear(&t)?;
    let back = dequantize(&q)?;
    let qp = q.quant().expect("int8 tensors carry parameters");
    println!("scale {:.6}, zero point {}", qp.scale(), qp.zero_point());
    println!("codes     {:?}", q.as_i8().unwrap());
    println!("restored  {:?}", back.as_f32().unwrap());
    println!("bytes     {} -> {}", t.memory_bytes(), q.memory_bytes());

    for cfg in [ModelConfig::bundled_stt(), ModelConfig::bundled_tts()] {
        let mut m = SplitModel::build(cfg)?;
        m.quantize_edge()?;
        println!(
            "{}: {} of {} parameters on the edge, {} B fp32 -> {} B int8",
            m.task(),
            m.param_count(Part::Edge),
            m.param_count(Part::All),
            m.edge_fp32_bytes(),
            m.edge_int8_bytes().unwrap()
        );
    }

    for spec in CostConfig::default().deployments {
        println!("{}", MemorySummary::of(&spec));
    }
    Ok(())
}

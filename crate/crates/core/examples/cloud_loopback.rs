//! Starts the cloud service on loopback and escalates over a throttled TCP link.

use cascade::fixtures::speech_like;
use cascade::gating::GateConfig;
use cascade::model::{ModelConfig, SplitModel};
use cascade::netsim::{LinkSpec, TcpLink};
use cascade::pipeline::{run_stt, EdgeRuntime};
use cascade::service::{serve, ServiceConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let server = serve(&ServiceConfig::bundled("127.0.0.1:0"))?;
    println!("service on {}", server.local_addr());

    let rt = EdgeRuntime::new(SplitModel::build(ModelConfig::bundled_stt())?);
    let mut tcp = TcpLink::new(server.local_addr().to_string(), LinkSpec::real_kbs(512.0)?);
    let mut virt = rt.virtual_link(LinkSpec::virtual_kbs(512.0)?);
    let w = speech_like(0.8, 3);

    let (remote, rt_trace) = run_stt(&w, &rt, &GateConfig::default(), &mut tcp, true)?;
    let (local, vt_trace) = run_stt(&w, &rt, &GateConfig::default(), &mut virt, true)?;
    println!("transcripts agree: {}", remote == local);
    // the real bucket refills while idle, so a small response rides the burst allowance
    println!(
        "{} B up, {} B down: {:.4} s measured over tcp, {:.4} s modeled",
        rt_trace.uplink_bytes,
        rt_trace.downlink_bytes,
        rt_trace.transfer_time_s(),
        vt_trace.transfer_time_s()
    );
    server.shutdown();
    Ok(())
}

use std::net::TcpStream;
use std::sync::Arc;
use std::thread;

use cascade::model::{Branch, ModelInput, Task};
use cascade::netsim::{read_prefixed, write_prefixed};
use cascade::service::{serve_with, CloudService, ServiceConfig};
use cascade::tensor::Tensor;
use cascade::wire::{decode_frame, encode_frame, FrameKind};

#[test]
fn concurrent_clients_get_their_own_answers() {
    let svc = Arc::new(CloudService::new(&ServiceConfig::bundled("127.0.0.1:0")).unwrap());
    let server = serve_with("127.0.0.1:0", Arc::clone(&svc)).unwrap();
    let addr = server.local_addr();

    let clients: Vec<_> = (0..4u32)
        .map(|c| {
            let svc = Arc::clone(&svc);
            thread::spawn(move || {
                let model = svc.model(Task::Tts).unwrap();
                let mut s = TcpStream::connect(addr).unwrap();
                for i in 0..5u32 {
                    let tokens: Vec<u32> = (0..(3 + c + i)).map(|k| 2 + (k * 7 + c) % 60).collect();
                    let f = model.prenet_forward(ModelInput::Tokens(&tokens)).unwrap();
                    write_prefixed(&mut s, &encode_frame(Task::Tts, FrameKind::Features, &f).unwrap()).unwrap();
                    let resp = decode_frame(&read_prefixed(&mut s, 1 << 24).unwrap()).unwrap();
                    assert_eq!(resp.kind, FrameKind::HiddenStates);
                    let direct: Tensor = model.encoder_forward(&f, Branch::Cloud).unwrap().states;
                    assert_eq!(resp.tensor, direct, "client {c} request {i}");
                }
            })
        })
        .collect();
    for c in clients {
        c.join().unwrap();
    }
    server.shutdown();
}

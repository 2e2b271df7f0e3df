//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test fails
//! if any criterion fails.
//!
//! Set `CASCADE_SKIP_REAL_LINK=1` to skip the timed loopback throughput check.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use cascade::audio::{edit_distance, log_mel, mse_loss, wer, wer_str, MelConfig, MelSpec};
use cascade::costmodel::{
    cpu_time, edge_memory_requirement, overall_usage_pct, requirement_annotation, DeploymentSpec, ReferenceTimings,
};
use cascade::fixtures::{speech_like, LONG_TEXT, SHORT_TEXT};
use cascade::fleet::{
    feasibility_fraction, memory_shortfall_fraction, share_below_clock, DeviceRecord, Fleet,
};
use cascade::gating::GateConfig;
use cascade::model::layers::OpCounter;
use cascade::model::{Branch, DecodeResult, ModelConfig, ModelInput, SplitModel, Task};
use cascade::netsim::{LinkSpec, TcpLink, ThrottledStream, KB, MB};
use cascade::pipeline::{
    run_stt, run_tts, sweep_bandwidth, text_to_tokens, EdgeRuntime, SweepInput, STANDARD_SWEEP_KBS,
};
use cascade::service::{serve_with, CloudService, ServiceConfig};
use cascade::tensor::{dequantize, quantize_linear, Tensor};
use cascade::wire::{decode_frame, encode_frame, FrameKind};

fn stt_rt() -> EdgeRuntime {
    EdgeRuntime::new(SplitModel::build(ModelConfig::bundled_stt()).unwrap())
}

fn tts_rt() -> EdgeRuntime {
    EdgeRuntime::new(SplitModel::build(ModelConfig::bundled_tts()).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn c1_memory_arithmetic() {
    let s = DeploymentSpec::speecht5();
    let w = DeploymentSpec::whisper();
    let s_mb = edge_memory_requirement(&s) / MB;
    let w_mb = edge_memory_requirement(&w) / MB;
    assert_eq!(s_mb, 226.0 / 4.0);
    assert!(close(s_mb, 57.0, 0.5), "{s_mb} vs published 57");
    assert_eq!(w_mb, 567.0 / 4.0);
    let note = requirement_annotation(&w).expect("whisper requirement differs from its published figure");
    assert!(note.contains("149"));
    assert!(close(overall_usage_pct(&s), 9.5, 0.2), "{}", overall_usage_pct(&s));
    assert!(close(overall_usage_pct(&w), 14.0, 1.0), "{}", overall_usage_pct(&w));
}

fn c2_inverse_clock() {
    let r = ReferenceTimings::default();
    for (task, len) in [(Task::Tts, 12.0), (Task::Tts, 270.0), (Task::Stt, 1.0), (Task::Stt, 19.0), (Task::Stt, 7.5)] {
        let products: Vec<f64> = [0.5, 1.0, 1.7, 3.4]
            .iter()
            .map(|&f| cpu_time(f, task, len, &r).unwrap() * f)
            .collect();
        for p in &products {
            assert!((p - products[0]).abs() <= 4.0 * f64::EPSILON * products[0], "{products:?}");
        }
    }
    let t = cpu_time(1.0, Task::Tts, 12.0, &r).unwrap();
    assert!(close(t, 0.85, 1e-12) && t < 1.0, "{t}");
    let delta = cpu_time(1.7, Task::Stt, 19.0, &r).unwrap() - cpu_time(1.7, Task::Stt, 1.0, &r).unwrap();
    assert!(close(delta, 0.95, 1e-12));
    assert!(close(delta, 0.9, 0.1));
}

fn c3_fixed_payload() {
    let rt = stt_rt();
    let mut link = rt.virtual_link(LinkSpec::virtual_kbs(256.0).unwrap());
    let gate = GateConfig::default();
    let (_, short) = run_stt(&speech_like(0.1, 10), &rt, &gate, &mut link, true).unwrap();
    let (_, long) = run_stt(&speech_like(1.9, 11), &rt, &gate, &mut link, true).unwrap();
    assert!(short.escalated && long.escalated);
    assert_eq!(short.uplink_bytes, long.uplink_bytes);
    assert_eq!(short.downlink_bytes, long.downlink_bytes);
    assert!(long.cpu_time > short.cpu_time);
    assert_eq!(long.wall_time - short.wall_time, long.cpu_time - short.cpu_time);

    let rt = tts_rt();
    let d = rt.model.config().d_model as u64;
    // 12-byte header, two u32 dims, crc32 trailer
    let header = 12 + 2 * 4 + 4;
    let mut link = rt.virtual_link(LinkSpec::virtual_kbs(256.0).unwrap());
    for text in [SHORT_TEXT, LONG_TEXT] {
        let tokens = text_to_tokens(text, 64);
        let n = text.chars().count() as u64;
        assert_eq!(tokens.len() as u64, n);
        let (_, t) = run_tts(&tokens, &rt, &gate, &mut link, true).unwrap();
        assert_eq!(t.uplink_bytes, header + n * d * 4);
    }
}

fn c4_sweep_shape() {
    let start = Instant::now();
    let rt = tts_rt();
    let tokens = text_to_tokens(LONG_TEXT, 64);
    let rows = sweep_bandwidth(
        SweepInput::Tokens(&tokens),
        &STANDARD_SWEEP_KBS,
        &rt,
        LinkSpec::virtual_kbs(1.0).unwrap(),
    )
    .unwrap();
    assert_eq!(rows.len(), 7);
    for w in rows.windows(2) {
        assert!(w[1].trace.wall_time < w[0].trace.wall_time);
        assert_eq!(w[1].trace.cpu_time, w[0].trace.cpu_time);
    }
    for r in rows.iter().filter(|r| r.bandwidth_kbs <= 512.0) {
        let share = r.trace.transfer_time_s() / r.trace.wall_time_s();
        assert!(share > 0.5, "{} KB/s: transfer share {share}", r.bandwidth_kbs);
    }
    for r in &rows {
        let t = &r.trace;
        assert_eq!(t.wall_time, t.cpu_time + t.cloud_time + t.transfer_time);
    }
    assert!(start.elapsed() < Duration::from_secs(10), "{:?}", start.elapsed());
}

fn c5_cascade_correctness() {
    let always = GateConfig::always_pass();

    // gate pass is the edge-only path
    let rt = stt_rt();
    let w = speech_like(0.6, 5);
    let mut link = rt.virtual_link(LinkSpec::virtual_kbs(512.0).unwrap());
    let (tokens, t) = run_stt(&w, &rt, &always, &mut link, false).unwrap();
    assert!(!t.escalated && t.uplink_bytes == 0 && t.downlink_bytes == 0);
    let mel = log_mel(&w, &rt.mel).unwrap();
    let f = rt.model.prenet_forward(ModelInput::Mel(&mel)).unwrap();
    let DecodeResult::Tokens { tokens: direct, .. } =
        rt.model.decoder_greedy(&rt.model.encoder_forward(&f, Branch::Edge).unwrap())
    else {
        panic!("stt decodes tokens")
    };
    assert_eq!(tokens, direct);

    let tts = tts_rt();
    let toks = text_to_tokens(SHORT_TEXT, 64);
    let mut tlink = tts.virtual_link(LinkSpec::virtual_kbs(512.0).unwrap());
    let (a, ta) = run_tts(&toks, &tts, &always, &mut tlink, false).unwrap();
    let (b, _) = run_tts(&toks, &tts, &always, &mut tlink, false).unwrap();
    assert!(!ta.escalated && ta.uplink_bytes == 0);
    assert_eq!(a, b);

    // loopback oracle against the in-process cloud encoder
    let svc = Arc::new(CloudService::new(&ServiceConfig::bundled("127.0.0.1:0")).unwrap());
    let server = serve_with("127.0.0.1:0", Arc::clone(&svc)).unwrap();
    let mut tcp = TcpLink::new(server.local_addr().to_string(), LinkSpec::real_kbs(1.0e6).unwrap());
    let (remote, rt_trace) = run_stt(&w, &rt, &always, &mut tcp, true).unwrap();
    let (local, _) = run_stt(&w, &rt, &always, &mut link, true).unwrap();
    assert!(rt_trace.escalated);
    assert_eq!(remote, local);
    for (model, features) in [
        (&rt.model, f.clone()),
        (&tts.model, tts.model.prenet_forward(ModelInput::Tokens(&toks)).unwrap()),
    ] {
        let mut s = TcpStream::connect(server.local_addr()).unwrap();
        let req = encode_frame(model.task(), FrameKind::Features, &features).unwrap();
        cascade::netsim::write_prefixed(&mut s, &req).unwrap();
        let resp = decode_frame(&cascade::netsim::read_prefixed(&mut s, 1 << 24).unwrap()).unwrap();
        let direct = model.encoder_forward(&features, Branch::Cloud).unwrap();
        let bits = |t: &Tensor| t.as_f32().unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&resp.tensor), bits(&direct.states));
    }
    server.shutdown();

    // wire round trip over dtype x shape
    let mut rng = Pcg64::seed_from_u64(5);
    let shapes: [&[u32]; 6] = [&[], &[0], &[1], &[7], &[3, 5], &[2, 3, 4]];
    for shape in shapes {
        let n: usize = shape.iter().map(|&d| d as usize).product();
        let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-50.0f32..50.0)).collect();
        let t = Tensor::from_f32(shape.to_vec(), data).unwrap();
        for t in [t.clone(), quantize_linear(&t).unwrap()] {
            for task in [Task::Stt, Task::Tts] {
                let b = encode_frame(task, FrameKind::Features, &t).unwrap();
                let back = decode_frame(&b).unwrap();
                assert_eq!(back.tensor, t);
                assert_eq!(encode_frame(back.task, back.kind, &back.tensor).unwrap(), b);
            }
        }
    }

    // every single-byte corruption is detected
    let t = Tensor::from_f32(vec![2, 3], vec![0.5, -1.0, 2.0, 0.0, 3.25, -0.125]).unwrap();
    for t in [t.clone(), quantize_linear(&t).unwrap()] {
        let b = encode_frame(Task::Stt, FrameKind::Features, &t).unwrap();
        for i in 0..b.len() {
            for delta in 1..=255u8 {
                let mut c = b.clone();
                c[i] = c[i].wrapping_add(delta);
                assert!(decode_frame(&c).is_err(), "byte {i} +{delta}");
            }
        }
    }
}

fn c6_model_properties() {
    let mel = {
        let rows: Vec<Vec<f32>> = (0..50)
            .map(|i| (0..40).map(|j| ((i * 7 + j * 3) % 11) as f32 * 0.2 - 1.0).collect())
            .collect();
        MelSpec::from_rows(&rows, 40, 320, 16000)
    };
    for seed in 0..20u64 {
        let m = SplitModel::build(ModelConfig { seed, ..ModelConfig::bundled_stt() }).unwrap();
        let h = m
            .encoder_forward(&m.prenet_forward(ModelInput::Mel(&mel)).unwrap(), Branch::Edge)
            .unwrap();
        let DecodeResult::Tokens { tokens, step_logprobs } = m.decoder_greedy(&h) else {
            panic!("stt decodes tokens")
        };
        for k in 1..step_logprobs.len() {
            let DecodeResult::Tokens { tokens: tk, step_logprobs: lp } =
                m.decode_steps(&h, k, &mut OpCounter::default())
            else {
                unreachable!()
            };
            assert_eq!(lp[..], step_logprobs[..k], "seed {seed} k {k}");
            assert_eq!(tk[..], tokens[..tk.len()]);
        }
    }

    let m = SplitModel::build(ModelConfig::bundled_tts()).unwrap();
    let f = m.prenet_forward(ModelInput::Tokens(&text_to_tokens(LONG_TEXT, 64))).unwrap();
    for branch in [Branch::Edge, Branch::Cloud] {
        for layer in m.encoder_attention_maps(&f, branch).unwrap() {
            for head in layer {
                for row in head {
                    let s: f32 = row.iter().sum();
                    assert!((s - 1.0).abs() <= 1e-5, "{s}");
                }
            }
        }
    }

    assert_eq!(
        SplitModel::build(ModelConfig::bundled_stt()).unwrap(),
        SplitModel::build(ModelConfig::bundled_stt()).unwrap()
    );
    let stt = SplitModel::build(ModelConfig::bundled_stt()).unwrap().edge_fraction();
    let tts = SplitModel::build(ModelConfig::bundled_tts()).unwrap().edge_fraction();
    assert!(close(stt, 0.56, 0.02), "{stt}");
    assert!(close(tts, 0.38, 0.02), "{tts}");
}

/// Textbook Wagner-Fischer table, kept separate from the library's
/// rolling-row implementation.
fn dp_edit_distance(a: &[u8], b: &[u8]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        t[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = t[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            t[i][j] = sub.min(t[i - 1][j] + 1).min(t[i][j - 1] + 1);
        }
    }
    t[a.len()][b.len()]
}

fn c7_metric_oracles() {
    let mut rng = Pcg64::seed_from_u64(7);
    for _ in 0..500 {
        let la = rng.gen_range(1..12);
        let lb = rng.gen_range(0..12);
        let a: Vec<u8> = (0..la).map(|_| rng.gen_range(0..5)).collect();
        let b: Vec<u8> = (0..lb).map(|_| rng.gen_range(0..5)).collect();
        let d = dp_edit_distance(&a, &b);
        assert_eq!(edit_distance(&a, &b), d);
        assert_eq!(wer(&a, &b).unwrap(), 100.0 * d as f64 / a.len() as f64);
    }
    assert_eq!(wer_str("how is it going", "how is it").unwrap(), 25.0);

    let cfg = MelConfig::default();
    for seed in 0..5 {
        let a = log_mel(&speech_like(0.5, seed), &cfg).unwrap();
        let b = log_mel(&speech_like(0.5, seed + 100), &cfg).unwrap();
        let mut naive = 0.0f64;
        for (x, y) in a.values().iter().zip(b.values()) {
            naive += (f64::from(*x) - f64::from(*y)).powi(2);
        }
        naive /= a.values().len() as f64;
        assert!((mse_loss(&a, &b).unwrap() - naive).abs() <= 1e-12);
    }

    for seed in 0..100u64 {
        let mut rng = Pcg64::seed_from_u64(seed);
        let n = rng.gen_range(1..300);
        let span = rng.gen_range(0.01f32..100.0);
        let shift = rng.gen_range(-50.0f32..50.0);
        let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-span..span) + shift).collect();
        let t = Tensor::from_f32(vec![n as u32], data).unwrap();
        let q = quantize_linear(&t).unwrap();
        let scale = q.quant().unwrap().scale();
        let back = dequantize(&q).unwrap();
        let err = t
            .as_f32()
            .unwrap()
            .iter()
            .zip(back.as_f32().unwrap())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err <= scale / 2.0 + 1e-6, "seed {seed}: {err} > {}", scale / 2.0);
    }
}

fn c8_fleet() {
    let start = Instant::now();
    let f = Fleet::bundled();
    let r = ReferenceTimings::default();
    assert!(close(memory_shortfall_fraction(&f, 149.0), 0.04, 0.005));
    assert!(close(share_below_clock(&f, 1.7), 0.80, 0.01));
    for (task, len) in [(Task::Tts, 12.0), (Task::Tts, 270.0), (Task::Stt, 19.0)] {
        let t = cpu_time(r.ref_clock_ghz, task, len, &r).unwrap();
        let frac = feasibility_fraction(&f, task, len, t, &r).unwrap();
        assert!(close(frac, 0.20, 0.01), "{task} {len}: {frac}");
        let oracle: f64 = f
            .records()
            .iter()
            .filter(|d| r.points(task).len() == 2 && cpu_time(d.clock_ghz, task, len, &r).unwrap() <= t)
            .map(|d| d.market_share)
            .sum();
        assert_eq!(frac, oracle);
    }

    let mut rng = Pcg64::seed_from_u64(8);
    for _ in 0..200 {
        let n = rng.gen_range(1..30);
        let recs = (0..n)
            .map(|i| DeviceRecord {
                model_name: format!("m{i}"),
                market_share: rng.gen_range(0.0..1.0) + 1e-6,
                memory_mb: rng.gen_range(32.0..8192.0),
                clock_ghz: rng.gen_range(0.5..3.5),
            })
            .collect();
        let fleet = Fleet::from_records(recs).unwrap();
        let mut prev = -1.0;
        for mb in (0..20).map(|i| i as f64 * 450.0) {
            let s = memory_shortfall_fraction(&fleet, mb);
            assert!(s >= prev && (0.0..=1.0 + 1e-9).contains(&s));
            prev = s;
        }
        let mut prev = -1.0;
        for t in (1..40).map(|i| i as f64 * 0.5) {
            let s = feasibility_fraction(&fleet, Task::Stt, 10.0, t, &r).unwrap();
            assert!(s >= prev && (0.0..=1.0 + 1e-9).contains(&s));
            prev = s;
        }
    }
    assert!(start.elapsed() < Duration::from_secs(5), "{:?}", start.elapsed());
}

fn c9_real_link() -> Option<()> {
    if std::env::var_os("CASCADE_SKIP_REAL_LINK").is_some() {
        return None;
    }
    let rate = 512.0 * KB;
    let total = 4usize << 20;
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let sink = thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        let mut buf = vec![0u8; 64 * 1024];
        let mut got = 0;
        while got < total {
            let n = s.read(&mut buf).unwrap();
            assert!(n > 0);
            got += n;
        }
        s.write_all(&[1]).unwrap();
    });
    let mut stream = ThrottledStream::new(TcpStream::connect(addr).unwrap(), rate);
    let payload = vec![0xA5u8; total];
    let t0 = Instant::now();
    stream.write_all_throttled(&payload).unwrap();
    let mut ack = [0u8; 1];
    stream.get_mut().read_exact(&mut ack).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    sink.join().unwrap();
    let measured = total as f64 / secs;
    assert!(
        (measured / rate - 1.0).abs() <= 0.15,
        "measured {:.0} B/s against {:.0} B/s",
        measured,
        rate
    );
    Some(())
}

#[test]
fn acceptance() {
    type Check = fn() -> Option<()>;
    let criteria: [(&str, Check); 9] = [
        ("1 quantization memory arithmetic", || Some(c1_memory_arithmetic())),
        ("2 inverse-clock law", || Some(c2_inverse_clock())),
        ("3 fixed-payload law", || Some(c3_fixed_payload())),
        ("4 bandwidth sweep shape", || Some(c4_sweep_shape())),
        ("5 cascade correctness", || Some(c5_cascade_correctness())),
        ("6 model properties", || Some(c6_model_properties())),
        ("7 metric oracles", || Some(c7_metric_oracles())),
        ("8 fleet analytics", || Some(c8_fleet())),
        ("9 real-link throughput", c9_real_link),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let t0 = Instant::now();
        match catch_unwind(AssertUnwindSafe(check)) {
            Ok(Some(())) => println!("PASS criterion {name} ({:.2} s)", t0.elapsed().as_secs_f64()),
            Ok(None) => println!("SKIP criterion {name}"),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL criterion {name}: {msg}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

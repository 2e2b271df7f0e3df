//! Encoding, decoding and corruption detection of wire frames.

use cascade::model::Task;
use cascade::tensor::{quantize_linear, Tensor};
use cascade::wire::{decode_frame, encode_frame, error_frame, frame_len, ErrorCode, FrameKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t = Tensor::from_f32(vec![2, 3], vec![0.5, -1.0, 2.0, 0.0, 3.25, -0.125])?;
    let bytes = encode_frame(Task::Stt, FrameKind::Features, &t)?;
    println!("fp32 [2,3] frame: {} bytes (formula {})", bytes.len(), frame_len(2, t.dtype(), t.len()));
    println!("{:02x?}", bytes);
    assert_eq!(decode_frame(&bytes)?.tensor, t);

    let q = quantize_linear(&t)?;
    let qbytes = encode_frame(Task::Tts, FrameKind::Features, &q)?;
    println!("int8 [2,3] frame: {} bytes", qbytes.len());

    let mut bad = bytes.clone();
    bad[20] ^= 0x01;
    println!("flipped payload bit: {}", decode_frame(&bad).unwrap_err());
    bad = bytes.clone();
    bad[4] = 2;
    println!("version 2: {}", decode_frame(&bad).unwrap_err());
    println!("truncated: {}", decode_frame(&bytes[..bytes.len() - 1]).unwrap_err());

    let e = decode_frame(&error_frame(Task::Tts, ErrorCode::TooLarge))?;
    println!("error frame: kind {:?}, code {:?}", e.kind, e.error_code());
    Ok(())
}

//! The cloud half of the cascade: a stateless service that runs the full
//! encoder on prenet features and returns hidden states.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;

use crate::model::layers::OpCounter;
use crate::model::{Branch, ModelConfig, ModelError, SplitModel, Task};
use crate::netsim::{FrameHandler, Handled};
use crate::tensor::{dequantize, DType};
use crate::wire::{decode_frame, encode_frame, error_frame, frame_len, task_code, ErrorCode, FrameKind, WireError};

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    BindFailed { addr: String, source: io::Error },
    #[error("max payload {max} is below the largest legal features frame ({needed} bytes)")]
    PayloadLimitTooSmall { max: usize, needed: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: String,
    pub models: Vec<ModelConfig>,
    pub max_payload: usize,
}

impl ServiceConfig {
    /// Both bundled models with a payload cap of twice the largest legal
    /// features frame.
    pub fn bundled(listen: impl Into<String>) -> Self {
        let models = vec![ModelConfig::bundled_stt(), ModelConfig::bundled_tts()];
        let max_payload = 2 * models.iter().map(largest_features_frame).max().unwrap_or(0);
        Self {
            listen: listen.into(),
            models,
            max_payload,
        }
    }
}

/// Encoded size of the longest features frame a config accepts.
pub fn largest_features_frame(cfg: &ModelConfig) -> usize {
    let rows = cfg.enc_fixed_len.unwrap_or(cfg.max_src_len);
    frame_len(2, DType::F32, rows * cfg.d_model)
}

#[derive(Debug)]
pub struct CloudService {
    stt: Option<SplitModel>,
    tts: Option<SplitModel>,
    max_payload: usize,
}

impl CloudService {
    pub fn new(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        let models = cfg
            .models
            .iter()
            .map(|c| SplitModel::build(c.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_models(models, cfg.max_payload)
    }

    /// Serves the cloud encoders of already-built models, at most one per task.
    pub fn from_models(models: Vec<SplitModel>, max_payload: usize) -> Result<Self, ServiceError> {
        let mut svc = Self {
            stt: None,
            tts: None,
            max_payload,
        };
        for m in models {
            let needed = largest_features_frame(m.config());
            if max_payload < needed {
                return Err(ServiceError::PayloadLimitTooSmall { max: max_payload, needed });
            }
            match m.task() {
                Task::Stt => svc.stt = Some(m),
                Task::Tts => svc.tts = Some(m),
            }
        }
        Ok(svc)
    }

    pub fn max_payload(&self) -> usize {
        self.max_payload
    }

    pub fn model(&self, task: Task) -> Option<&SplitModel> {
        match task {
            Task::Stt => self.stt.as_ref(),
            Task::Tts => self.tts.as_ref(),
        }
    }

    pub fn handle_request(&self, request: &[u8]) -> Vec<u8> {
        self.handle_metered(request).response
    }

    pub fn handle_metered(&self, request: &[u8]) -> Handled {
        let mut ops = OpCounter::default();
        let response = match self.process(request, &mut ops) {
            Ok(bytes) => bytes,
            Err(code) => error_frame(guess_task(request), code),
        };
        Handled {
            response,
            macs: ops.macs,
        }
    }

    fn process(&self, request: &[u8], ops: &mut OpCounter) -> Result<Vec<u8>, ErrorCode> {
        if request.len() > self.max_payload {
            return Err(ErrorCode::TooLarge);
        }
        let frame = decode_frame(request).map_err(|e| match e {
            WireError::UnsupportedVersion(_) => ErrorCode::Version,
            _ => ErrorCode::Malformed,
        })?;
        if frame.kind != FrameKind::Features {
            return Err(ErrorCode::Malformed);
        }
        let model = self.model(frame.task).ok_or(ErrorCode::Shape)?;
        let features = match frame.tensor.dtype() {
            DType::F32 => frame.tensor,
            DType::I8 => dequantize(&frame.tensor).map_err(|_| ErrorCode::Malformed)?,
        };
        let hidden = model
            .encoder_forward_metered(&features, Branch::Cloud, ops)
            .map_err(|_| ErrorCode::Shape)?;
        encode_frame(frame.task, FrameKind::HiddenStates, &hidden.states).map_err(|_| ErrorCode::Shape)
    }
}

fn guess_task(request: &[u8]) -> Task {
    match request.get(5) {
        Some(&b) if b == task_code(Task::Tts) => Task::Tts,
        _ => Task::Stt,
    }
}

impl FrameHandler for CloudService {
    fn handle(&self, request: &[u8]) -> Handled {
        self.handle_metered(request)
    }
}

/// A running server. Dropping the handle does not stop it; call
/// [`ServerHandle::shutdown`].
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, lets in-flight requests finish and joins every
    /// connection thread.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

pub fn serve(cfg: &ServiceConfig) -> Result<ServerHandle, ServiceError> {
    let service = Arc::new(CloudService::new(cfg)?);
    serve_with(&cfg.listen, service)
}

pub fn serve_with(listen: &str, service: Arc<CloudService>) -> Result<ServerHandle, ServiceError> {
    let bind_err = |source| ServiceError::BindFailed {
        addr: listen.to_string(),
        source,
    };
    let listener = TcpListener::bind(listen).map_err(bind_err)?;
    listener.set_nonblocking(true).map_err(bind_err)?;
    let addr = listener.local_addr().map_err(bind_err)?;
    let stop = Arc::new(AtomicBool::new(false));
    let accept_stop = Arc::clone(&stop);
    let accept = thread::spawn(move || {
        let mut workers = Vec::new();
        while !accept_stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let svc = Arc::clone(&service);
                    let stop = Arc::clone(&accept_stop);
                    workers.push(thread::spawn(move || {
                        let _ = handle_connection(stream, &svc, &stop);
                    }));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(_) => thread::sleep(POLL),
            }
            workers.retain(|w| !w.is_finished());
        }
        for w in workers {
            let _ = w.join();
        }
    });
    Ok(ServerHandle {
        addr,
        stop,
        accept: Some(accept),
    })
}

enum Fill {
    Done,
    Closed,
}

/// Fills `buf`, polling the stop flag while no byte of it has arrived.
/// Once a message has started it is read to the end.
fn fill(stream: &mut TcpStream, buf: &mut [u8], stop: &AtomicBool, idle: bool) -> io::Result<Fill> {
    let mut got = 0;
    while got < buf.len() {
        match stream.read(&mut buf[got..]) {
            Ok(0) => {
                return if got == 0 && idle {
                    Ok(Fill::Closed)
                } else {
                    Err(io::ErrorKind::UnexpectedEof.into())
                }
            }
            Ok(n) => got += n,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                if got == 0 && idle && stop.load(Ordering::SeqCst) {
                    return Ok(Fill::Closed);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(Fill::Done)
}

fn discard(stream: &mut TcpStream, mut n: usize, stop: &AtomicBool) -> io::Result<()> {
    let mut scratch = vec![0u8; 64 * 1024];
    while n > 0 {
        let take = n.min(scratch.len());
        if let Fill::Closed = fill(stream, &mut scratch[..take], stop, false)? {
            return Ok(());
        }
        n -= take;
    }
    Ok(())
}

fn handle_connection(mut stream: TcpStream, svc: &CloudService, stop: &AtomicBool) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    stream.set_nodelay(true)?;
    loop {
        let mut len = [0u8; 4];
        if let Fill::Closed = fill(&mut stream, &mut len, stop, true)? {
            return Ok(());
        }
        let len = u32::from_le_bytes(len) as usize;
        let response = if len > svc.max_payload() {
            discard(&mut stream, len, stop)?;
            error_frame(Task::Stt, ErrorCode::TooLarge)
        } else {
            let mut body = vec![0u8; len];
            fill(&mut stream, &mut body, stop, false)?;
            svc.handle_request(&body)
        };
        stream.write_all(&(response.len() as u32).to_le_bytes())?;
        stream.write_all(&response)?;
        stream.flush()?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelInput;
    use crate::netsim::{read_prefixed, write_prefixed};
    use crate::tensor::Tensor;
    use std::time::Instant;

    fn tts_features(svc: &CloudService, n: usize) -> Tensor {
        let tokens: Vec<u32> = (0..n as u32).map(|i| i % 64).collect();
        svc.model(Task::Tts).unwrap().prenet_forward(ModelInput::Tokens(&tokens)).unwrap()
    }

    fn bundled() -> CloudService {
        CloudService::new(&ServiceConfig::bundled("127.0.0.1:0")).unwrap()
    }

    #[test]
    fn hidden_frame_matches_direct_encoding() {
        let svc = bundled();
        let f = tts_features(&svc, 17);
        let req = encode_frame(Task::Tts, FrameKind::Features, &f).unwrap();
        let resp = decode_frame(&svc.handle_request(&req)).unwrap();
        assert_eq!(resp.kind, FrameKind::HiddenStates);
        let direct = svc.model(Task::Tts).unwrap().encoder_forward(&f, Branch::Cloud).unwrap();
        assert_eq!(resp.tensor, direct.states);
    }

    #[test]
    fn stt_shape_contract() {
        let svc = bundled();
        let f = Tensor::zeros(vec![64, 64]);
        let req = encode_frame(Task::Stt, FrameKind::Features, &f).unwrap();
        let resp = decode_frame(&svc.handle_request(&req)).unwrap();
        assert_eq!(resp.tensor.shape(), &[64, 64]);

        let wrong = encode_frame(Task::Stt, FrameKind::Features, &Tensor::zeros(vec![10, 64])).unwrap();
        assert_eq!(decode_frame(&svc.handle_request(&wrong)).unwrap().error_code(), Some(2));
    }

    #[test]
    fn error_codes() {
        let svc = bundled();
        let garbage: Vec<u8> = (0..100u32).map(|i| (i * 31 % 251) as u8).collect();
        assert_eq!(decode_frame(&svc.handle_request(&garbage)).unwrap().error_code(), Some(1));

        let mut v2 = encode_frame(Task::Stt, FrameKind::Features, &Tensor::zeros(vec![64, 64])).unwrap();
        v2[4] = 2;
        assert_eq!(decode_frame(&svc.handle_request(&v2)).unwrap().error_code(), Some(3));

        let hidden = encode_frame(Task::Stt, FrameKind::HiddenStates, &Tensor::zeros(vec![64, 64])).unwrap();
        assert_eq!(decode_frame(&svc.handle_request(&hidden)).unwrap().error_code(), Some(1));

        let huge = vec![0u8; svc.max_payload() + 1];
        assert_eq!(decode_frame(&svc.handle_request(&huge)).unwrap().error_code(), Some(4));
    }

    #[test]
    fn payload_limit_validated() {
        let mut cfg = ServiceConfig::bundled("127.0.0.1:0");
        cfg.max_payload = 1000;
        assert!(matches!(
            CloudService::new(&cfg),
            Err(ServiceError::PayloadLimitTooSmall { .. })
        ));
    }

    #[test]
    fn statelessness_under_permutation() {
        let svc = bundled();
        let reqs: Vec<Vec<u8>> = [3, 9, 1, 30]
            .iter()
            .map(|&n| encode_frame(Task::Tts, FrameKind::Features, &tts_features(&svc, n)).unwrap())
            .collect();
        let forward: Vec<_> = reqs.iter().map(|r| svc.handle_request(r)).collect();
        let backward: Vec<_> = reqs.iter().rev().map(|r| svc.handle_request(r)).collect();
        for (i, b) in backward.iter().rev().enumerate() {
            assert_eq!(&forward[i], b);
        }
    }

    #[test]
    fn oversized_payload_keeps_connection_usable() {
        let svc = Arc::new(bundled());
        let server = serve_with("127.0.0.1:0", Arc::clone(&svc)).unwrap();
        let mut s = TcpStream::connect(server.local_addr()).unwrap();
        let huge = vec![0u8; svc.max_payload() + 10];
        write_prefixed(&mut s, &huge).unwrap();
        let resp = read_prefixed(&mut s, 1 << 20).unwrap();
        assert_eq!(decode_frame(&resp).unwrap().error_code(), Some(4));

        let f = tts_features(&svc, 5);
        write_prefixed(&mut s, &encode_frame(Task::Tts, FrameKind::Features, &f).unwrap()).unwrap();
        let resp = decode_frame(&read_prefixed(&mut s, 1 << 20).unwrap()).unwrap();
        assert_eq!(resp.kind, FrameKind::HiddenStates);
        drop(s);
        server.shutdown();
    }

    #[test]
    fn idle_shutdown_is_prompt() {
        let server = serve(&ServiceConfig::bundled("127.0.0.1:0")).unwrap();
        let _idle = TcpStream::connect(server.local_addr()).unwrap();
        thread::sleep(Duration::from_millis(50));
        let t0 = Instant::now();
        server.shutdown();
        assert!(t0.elapsed() < Duration::from_secs(1));
    }

    #[test]
    fn bind_failure() {
        let taken = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = taken.local_addr().unwrap().to_string();
        assert!(matches!(
            serve(&ServiceConfig::bundled(addr)),
            Err(ServiceError::BindFailed { .. })
        ));
    }
}

//! Bandwidth-limited edge-cloud links.
//!
//! A [`VirtualLink`] runs the cloud handler in-process and charges transfer
//! time from the link model, `rtt / 2 + bytes / bandwidth` per direction,
//! on a virtual clock. A [`TcpLink`] talks to a real service over a stream
//! socket and throttles its own writes and reads with a token bucket.
//!
//! On the socket every frame is preceded by its length as a `u32` LE.

use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::wire::{decode_frame, FrameKind};

pub const KB: f64 = 1024.0;
pub const MB: f64 = 1024.0 * KB;

/// Bucket depth in seconds of traffic.
pub const BUCKET_WINDOW_S: f64 = 0.05;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("connection failed: {0}")]
    ConnectionFailed(String),
    #[error("cloud returned error frame with code {code}")]
    HandlerError { code: u8, frame: Vec<u8> },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("invalid link: {0}")]
    InvalidLink(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkMode {
    Virtual,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    /// Bytes per second.
    pub bandwidth: f64,
    /// Round-trip time in seconds.
    pub rtt: f64,
    pub mode: LinkMode,
}

impl LinkSpec {
    pub fn new(bandwidth: f64, rtt: f64, mode: LinkMode) -> Result<Self, NetError> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(NetError::InvalidLink(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if !(rtt >= 0.0 && rtt.is_finite()) {
            return Err(NetError::InvalidLink(format!("rtt must be non-negative, got {rtt}")));
        }
        Ok(Self { bandwidth, rtt, mode })
    }

    /// Virtual link of `kbs` KB/s (1 KB = 1024 bytes) and zero RTT.
    pub fn virtual_kbs(kbs: f64) -> Result<Self, NetError> {
        Self::new(kbs * KB, 0.0, LinkMode::Virtual)
    }

    pub fn real_kbs(kbs: f64) -> Result<Self, NetError> {
        Self::new(kbs * KB, 0.0, LinkMode::Real)
    }

    pub fn with_rtt(self, rtt: f64) -> Result<Self, NetError> {
        Self::new(self.bandwidth, rtt, self.mode)
    }

    pub fn bandwidth_kbs(&self) -> f64 {
        self.bandwidth / KB
    }
}

/// One-way transfer time in seconds.
pub fn transfer_time(bytes: u64, link: &LinkSpec) -> f64 {
    link.rtt / 2.0 + bytes as f64 / link.bandwidth
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Uplink,
    Downlink,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferReceipt {
    pub bytes: u64,
    /// Seconds.
    pub transfer_time: f64,
    pub direction: Direction,
}

impl TransferReceipt {
    pub fn duration(&self) -> Duration {
        Duration::from_secs_f64(self.transfer_time)
    }
}

/// A completed request/response round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub response: Vec<u8>,
    pub uplink: TransferReceipt,
    pub downlink: TransferReceipt,
    pub handler_time: Duration,
    /// Total time charged for the exchange.
    pub elapsed: Duration,
}

/// Response bytes plus the compute spent producing them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Handled {
    pub response: Vec<u8>,
    pub macs: u64,
}

pub trait FrameHandler: Send + Sync {
    fn handle(&self, request: &[u8]) -> Handled;
}

pub trait CloudLink {
    fn spec(&self) -> &LinkSpec;
    fn send_recv(&mut self, request: &[u8]) -> Result<Exchange, NetError>;
}

fn check_error_frame(response: &[u8]) -> Result<(), NetError> {
    if let Ok(f) = decode_frame(response) {
        if f.kind == FrameKind::Error {
            return Err(NetError::HandlerError {
                code: f.error_code().unwrap_or(0),
                frame: response.to_vec(),
            });
        }
    }
    Ok(())
}

/// Deterministic in-process link with a virtual clock.
pub struct VirtualLink {
    spec: LinkSpec,
    handler: Arc<dyn FrameHandler>,
    cloud_macs_per_s: f64,
    clock: Duration,
}

impl VirtualLink {
    pub fn new(spec: LinkSpec, handler: Arc<dyn FrameHandler>, cloud_macs_per_s: f64) -> Self {
        Self {
            spec,
            handler,
            cloud_macs_per_s,
            clock: Duration::ZERO,
        }
    }

    pub fn clock(&self) -> Duration {
        self.clock
    }

    pub fn set_bandwidth(&mut self, bandwidth: f64) -> Result<(), NetError> {
        self.spec = LinkSpec::new(bandwidth, self.spec.rtt, self.spec.mode)?;
        Ok(())
    }
}

impl CloudLink for VirtualLink {
    fn spec(&self) -> &LinkSpec {
        &self.spec
    }

    fn send_recv(&mut self, request: &[u8]) -> Result<Exchange, NetError> {
        let uplink = TransferReceipt {
            bytes: request.len() as u64,
            transfer_time: transfer_time(request.len() as u64, &self.spec),
            direction: Direction::Uplink,
        };
        let Handled { response, macs } = self.handler.handle(request);
        let handler_time = Duration::from_secs_f64(macs as f64 / self.cloud_macs_per_s);
        let downlink = TransferReceipt {
            bytes: response.len() as u64,
            transfer_time: transfer_time(response.len() as u64, &self.spec),
            direction: Direction::Downlink,
        };
        let elapsed = uplink.duration() + handler_time + downlink.duration();
        self.clock += elapsed;
        check_error_frame(&response)?;
        Ok(Exchange {
            response,
            uplink,
            downlink,
            handler_time,
            elapsed,
        })
    }
}

/// Token bucket holding [`BUCKET_WINDOW_S`] seconds of traffic.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    pub fn new(bytes_per_s: f64) -> Self {
        let capacity = (bytes_per_s * BUCKET_WINDOW_S).max(1.0);
        Self {
            rate: bytes_per_s,
            capacity,
            // starts empty so short transfers see the steady rate, not a burst
            tokens: 0.0,
            last: Instant::now(),
        }
    }

    /// Largest single grant, in bytes.
    pub fn chunk(&self) -> usize {
        self.capacity as usize
    }

    /// Blocks until `n` bytes may pass. `n` should not exceed [`Self::chunk`].
    pub fn consume(&mut self, n: usize) {
        let now = Instant::now();
        self.tokens = (self.tokens + now.duration_since(self.last).as_secs_f64() * self.rate).min(self.capacity);
        self.last = now;
        self.tokens -= n as f64;
        if self.tokens < 0.0 {
            thread::sleep(Duration::from_secs_f64(-self.tokens / self.rate));
        }
    }
}

/// Stream wrapper that paces both directions through one bucket each.
pub struct ThrottledStream<S> {
    inner: S,
    up: TokenBucket,
    down: TokenBucket,
}

impl<S: Read + Write> ThrottledStream<S> {
    pub fn new(inner: S, bytes_per_s: f64) -> Self {
        Self {
            inner,
            up: TokenBucket::new(bytes_per_s),
            down: TokenBucket::new(bytes_per_s),
        }
    }

    pub fn write_all_throttled(&mut self, bytes: &[u8]) -> io::Result<()> {
        for chunk in bytes.chunks(self.up.chunk().max(1)) {
            self.up.consume(chunk.len());
            self.inner.write_all(chunk)?;
        }
        self.inner.flush()
    }

    pub fn read_exact_throttled(&mut self, buf: &mut [u8]) -> io::Result<()> {
        let step = self.down.chunk().max(1);
        for chunk in buf.chunks_mut(step) {
            self.inner.read_exact(chunk)?;
            self.down.consume(chunk.len());
        }
        Ok(())
    }

    pub fn get_mut(&mut self) -> &mut S {
        &mut self.inner
    }
}

pub fn write_prefixed<W: Write>(w: &mut W, frame: &[u8]) -> io::Result<()> {
    w.write_all(&(frame.len() as u32).to_le_bytes())?;
    w.write_all(frame)?;
    w.flush()
}

/// Reads one length-prefixed frame. Frames longer than `max_len` are
/// rejected before their body is read.
pub fn read_prefixed<R: Read>(r: &mut R, max_len: usize) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > max_len {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds limit {max_len}"),
        ));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Real link to a cloud service. Connects on first use and reuses the
/// connection; one request is in flight at a time.
pub struct TcpLink {
    addr: String,
    spec: LinkSpec,
    max_response: usize,
    stream: Option<ThrottledStream<TcpStream>>,
}

impl TcpLink {
    pub fn new(addr: impl Into<String>, spec: LinkSpec) -> Self {
        Self {
            addr: addr.into(),
            spec,
            max_response: 64 << 20,
            stream: None,
        }
    }

    fn connect(&mut self) -> Result<&mut ThrottledStream<TcpStream>, NetError> {
        if self.stream.is_none() {
            let fail = |e: io::Error| NetError::ConnectionFailed(e.to_string());
            let addr = self
                .addr
                .to_socket_addrs()
                .map_err(fail)?
                .next()
                .ok_or_else(|| NetError::ConnectionFailed(format!("cannot resolve {}", self.addr)))?;
            let s = TcpStream::connect_timeout(&addr, Duration::from_secs(2)).map_err(fail)?;
            s.set_nodelay(true).map_err(fail)?;
            self.stream = Some(ThrottledStream::new(s, self.spec.bandwidth));
        }
        Ok(self.stream.as_mut().expect("connected above"))
    }

    fn exchange(&mut self, request: &[u8]) -> io::Result<(Vec<u8>, Duration, Duration, Duration)> {
        let max = self.max_response;
        let s = self
            .connect()
            .map_err(|e| io::Error::new(io::ErrorKind::NotConnected, e.to_string()))?;
        let t0 = Instant::now();
        s.write_all_throttled(&(request.len() as u32).to_le_bytes())?;
        s.write_all_throttled(request)?;
        let t1 = Instant::now();
        let mut len = [0u8; 4];
        s.get_mut().read_exact(&mut len)?;
        let t2 = Instant::now();
        let len = u32::from_le_bytes(len) as usize;
        if len > max {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "response too large"));
        }
        let mut body = vec![0u8; len];
        s.read_exact_throttled(&mut body)?;
        let t3 = Instant::now();
        Ok((body, t1 - t0, t2 - t1, t3 - t2))
    }
}

impl CloudLink for TcpLink {
    fn spec(&self) -> &LinkSpec {
        &self.spec
    }

    fn send_recv(&mut self, request: &[u8]) -> Result<Exchange, NetError> {
        let (response, up, handler_time, down) = match self.exchange(request) {
            Ok(v) => v,
            Err(e) => {
                self.stream = None;
                return Err(NetError::ConnectionFailed(e.to_string()));
            }
        };
        check_error_frame(&response)?;
        Ok(Exchange {
            uplink: TransferReceipt {
                bytes: request.len() as u64,
                transfer_time: up.as_secs_f64(),
                direction: Direction::Uplink,
            },
            downlink: TransferReceipt {
                bytes: response.len() as u64,
                transfer_time: down.as_secs_f64(),
                direction: Direction::Downlink,
            },
            response,
            handler_time,
            elapsed: up + handler_time + down,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    struct Echo;

    impl FrameHandler for Echo {
        fn handle(&self, request: &[u8]) -> Handled {
            Handled {
                response: request.to_vec(),
                macs: 1_000_000,
            }
        }
    }

    #[test]
    fn transfer_time_examples() {
        let link = LinkSpec::virtual_kbs(1024.0).unwrap();
        assert_eq!(transfer_time(1 << 20, &link), 1.0);
        let slow = LinkSpec::virtual_kbs(512.0).unwrap();
        assert_eq!(transfer_time(6_291_456, &slow), 12.0);
        let fast = LinkSpec::virtual_kbs(2048.0).unwrap();
        assert_eq!(transfer_time(1000, &link) / 2.0, transfer_time(1000, &fast));
    }

    #[test]
    fn invalid_specs() {
        assert!(LinkSpec::new(0.0, 0.0, LinkMode::Virtual).is_err());
        assert!(LinkSpec::new(1.0, -1.0, LinkMode::Virtual).is_err());
    }

    #[test]
    fn virtual_clock_is_sum_of_terms() {
        let spec = LinkSpec::virtual_kbs(64.0).unwrap().with_rtt(0.1).unwrap();
        let mut link = VirtualLink::new(spec, Arc::new(Echo), 1e9);
        let before = link.clock();
        let ex = link.send_recv(&[7u8; 4096]).unwrap();
        assert_eq!(ex.response.len(), 4096);
        assert_eq!(link.clock() - before, ex.uplink.duration() + ex.handler_time + ex.downlink.duration());
        assert_eq!(ex.handler_time, Duration::from_millis(1));
        assert_eq!(ex.uplink.transfer_time, 0.05 + 4096.0 / (64.0 * 1024.0));

        let ex = link.send_recv(&[]).unwrap();
        assert_eq!(ex.elapsed, Duration::from_millis(100) + ex.handler_time);
        let again = VirtualLink::new(spec, Arc::new(Echo), 1e9).send_recv(&[]).unwrap();
        assert_eq!(ex, again);
    }

    #[test]
    fn unreachable_peer_fails_to_connect() {
        let port = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap().port()
        };
        let mut link = TcpLink::new(format!("127.0.0.1:{port}"), LinkSpec::real_kbs(1024.0).unwrap());
        assert!(matches!(link.send_recv(&[1, 2, 3]), Err(NetError::ConnectionFailed(_))));
    }

    #[test]
    fn prefixed_framing_limits() {
        let mut buf = Vec::new();
        write_prefixed(&mut buf, &[1, 2, 3]).unwrap();
        assert_eq!(buf, [3, 0, 0, 0, 1, 2, 3]);
        assert_eq!(read_prefixed(&mut buf.as_slice(), 3).unwrap(), [1, 2, 3]);
        assert!(read_prefixed(&mut buf.as_slice(), 2).is_err());
    }

    #[test]
    fn token_bucket_paces_a_short_transfer() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let sink = thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let mut total = 0usize;
            let mut buf = [0u8; 65536];
            loop {
                match s.read(&mut buf).unwrap() {
                    0 => break total,
                    n => total += n,
                }
            }
        });
        let rate = 4.0 * MB;
        let payload = vec![0u8; 1 << 20];
        let mut s = ThrottledStream::new(TcpStream::connect(addr).unwrap(), rate);
        let t0 = Instant::now();
        s.write_all_throttled(&payload).unwrap();
        let elapsed = t0.elapsed().as_secs_f64();
        drop(s);
        assert_eq!(sink.join().unwrap(), payload.len());
        let measured = payload.len() as f64 / elapsed;
        assert!((measured / rate - 1.0).abs() <= 0.15, "measured {measured} B/s vs {rate}");
    }
}

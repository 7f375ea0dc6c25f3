//! Byte-stream transports between the host driver and a device emulator.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::firmware::{run_device_loop, DeviceEmulator, PressureSource};

/// Host end of an ordered byte stream.
pub trait Link {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()>;

    /// Waits up to `timeout` for bytes. An empty vector means nothing
    /// arrived in time. A closed peer is reported as an error.
    fn recv(&mut self, timeout: Duration) -> io::Result<Vec<u8>>;
}

impl<L: Link + ?Sized> Link for Box<L> {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        (**self).send(bytes)
    }

    fn recv(&mut self, timeout: Duration) -> io::Result<Vec<u8>> {
        (**self).recv(timeout)
    }
}

fn closed() -> io::Error {
    io::Error::new(io::ErrorKind::BrokenPipe, "peer closed the stream")
}

/// Write half of an in-process pipe.
#[derive(Debug, Clone)]
pub struct PipeWriter(Sender<Vec<u8>>);

/// Read half of an in-process pipe. Reads return 0 once every writer is gone.
#[derive(Debug)]
pub struct PipeReader {
    rx: Receiver<Vec<u8>>,
    pending: VecDeque<u8>,
}

pub fn pipe() -> (PipeWriter, PipeReader) {
    let (tx, rx) = mpsc::channel();
    (
        PipeWriter(tx),
        PipeReader {
            rx,
            pending: VecDeque::new(),
        },
    )
}

impl Write for PipeWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.send(buf.to_vec()).map_err(|_| closed())?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl PipeReader {
    fn take_pending(&mut self, buf: &mut [u8]) -> usize {
        let n = buf.len().min(self.pending.len());
        for (dst, src) in buf.iter_mut().zip(self.pending.drain(..n)) {
            *dst = src;
        }
        n
    }

    pub fn recv_timeout(&mut self, timeout: Duration) -> io::Result<Vec<u8>> {
        if !self.pending.is_empty() {
            return Ok(self.pending.drain(..).collect());
        }
        match self.rx.recv_timeout(timeout) {
            Ok(chunk) => Ok(chunk),
            Err(RecvTimeoutError::Timeout) => Ok(Vec::new()),
            Err(RecvTimeoutError::Disconnected) => Err(closed()),
        }
    }
}

impl Read for PipeReader {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.pending.is_empty() {
            match self.rx.recv() {
                Ok(chunk) => self.pending.extend(chunk),
                Err(_) => return Ok(0),
            }
        }
        Ok(self.take_pending(buf))
    }
}

/// Host side of a pipe pair connected to a device emulator thread.
#[derive(Debug)]
pub struct PipeLink {
    tx: Option<PipeWriter>,
    rx: PipeReader,
}

impl PipeLink {
    pub fn new(tx: PipeWriter, rx: PipeReader) -> Self {
        Self { tx: Some(tx), rx }
    }

    /// Closes the host-to-device direction; the device loop then exits.
    pub fn close(&mut self) {
        self.tx = None;
    }
}

impl Link for PipeLink {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        match &mut self.tx {
            Some(tx) => tx.write_all(bytes),
            None => Err(closed()),
        }
    }

    fn recv(&mut self, timeout: Duration) -> io::Result<Vec<u8>> {
        self.rx.recv_timeout(timeout)
    }
}

/// Runs `emulator` on its own thread behind an in-process pipe. Joining
/// the handle after the link is closed or dropped yields the emulator.
pub fn spawn_device<S>(emulator: DeviceEmulator<S>) -> (PipeLink, JoinHandle<io::Result<DeviceEmulator<S>>>)
where
    S: PressureSource + Send + 'static,
{
    let (host_tx, device_rx) = pipe();
    let (device_tx, host_rx) = pipe();
    let handle = thread::spawn(move || run_device_loop(device_rx, device_tx, emulator));
    (PipeLink::new(host_tx, host_rx), handle)
}

#[derive(Debug)]
pub struct TcpLink {
    stream: TcpStream,
}

impl TcpLink {
    pub fn connect(addr: &str) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }

    pub fn from_stream(stream: TcpStream) -> Self {
        Self { stream }
    }
}

impl Link for TcpLink {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.stream.write_all(bytes)
    }

    fn recv(&mut self, timeout: Duration) -> io::Result<Vec<u8>> {
        self.stream
            .set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        let mut buf = [0u8; 256];
        match self.stream.read(&mut buf) {
            Ok(0) => Err(closed()),
            Ok(n) => Ok(buf[..n].to_vec()),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                Ok(Vec::new())
            }
            Err(e) => Err(e),
        }
    }
}

/// Synchronous in-process link: the emulator runs inline on `send`, so
/// replies are available immediately and no simulated time passes while
/// waiting. Used where determinism matters (simulation, teleop sessions).
pub struct LoopbackLink<S> {
    emulator: DeviceEmulator<S>,
    outbox: Vec<u8>,
    connected: bool,
}

impl<S: PressureSource> LoopbackLink<S> {
    pub fn new(emulator: DeviceEmulator<S>) -> Self {
        Self {
            emulator,
            outbox: Vec::new(),
            connected: true,
        }
    }

    pub fn emulator(&self) -> &DeviceEmulator<S> {
        &self.emulator
    }

    pub fn emulator_mut(&mut self) -> &mut DeviceEmulator<S> {
        &mut self.emulator
    }

    /// Simulates a cut cable: further sends vanish and nothing is received.
    pub fn sever(&mut self) {
        self.connected = false;
        self.outbox.clear();
    }
}

impl<S: PressureSource> Link for LoopbackLink<S> {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        if self.connected {
            let reply = self.emulator.feed(bytes);
            self.outbox.extend(reply);
        }
        Ok(())
    }

    fn recv(&mut self, _timeout: Duration) -> io::Result<Vec<u8>> {
        Ok(std::mem::take(&mut self.outbox))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipe_reader_sees_eof_after_writer_drop() {
        let (mut w, mut r) = pipe();
        w.write_all(b"abc").unwrap();
        drop(w);
        let mut s = Vec::new();
        r.read_to_end(&mut s).unwrap();
        assert_eq!(s, b"abc");
    }

    #[test]
    fn pipe_recv_timeout_is_empty() {
        let (_w, mut r) = pipe();
        assert!(r.recv_timeout(Duration::from_millis(5)).unwrap().is_empty());
    }

    #[test]
    fn pipe_recv_reports_closed() {
        let (w, mut r) = pipe();
        drop(w);
        assert!(r.recv_timeout(Duration::from_millis(5)).is_err());
    }
}

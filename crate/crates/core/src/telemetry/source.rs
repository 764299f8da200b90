use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::net::TcpStream;
use std::path::PathBuf;
use std::time::Duration;

use super::{parse_record, OrderCheck, Record, StreamHeader, TelemetryError, TelemetryFrame};

/// Where telemetry comes from: a JSON-lines file or a line-delimited TCP
/// stream (`tcp://host:port`, we connect as a client).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TelemetrySource {
    File(PathBuf),
    Tcp(String),
}

impl TelemetrySource {
    pub fn parse(spec: &str) -> Self {
        match spec.strip_prefix("tcp://") {
            Some(addr) => TelemetrySource::Tcp(addr.to_string()),
            None => TelemetrySource::File(PathBuf::from(spec)),
        }
    }
}

/// Open a telemetry source. `idle_timeout` only applies to sockets.
pub fn open_source(
    spec: &str,
    idle_timeout: Option<Duration>,
) -> Result<FrameReader<Box<dyn BufRead + Send>>, TelemetryError> {
    let io_err = |e: io::Error| TelemetryError::Io(format!("{spec}: {e}"));
    let reader: Box<dyn BufRead + Send> = match TelemetrySource::parse(spec) {
        TelemetrySource::File(path) => Box::new(BufReader::new(File::open(path).map_err(io_err)?)),
        TelemetrySource::Tcp(addr) => {
            let stream = TcpStream::connect(&addr).map_err(io_err)?;
            stream.set_read_timeout(idle_timeout).map_err(io_err)?;
            Box::new(BufReader::new(stream))
        }
    };
    Ok(FrameReader::new(reader).with_idle_timeout(idle_timeout))
}

/// Iterator over frames of a JSON-lines stream.
///
/// Yields frames in order and stops at end-of-stream. Out-of-order or
/// duplicate timestamps produce a stream error; once an error other than an
/// idle timeout is returned the reader is fused.
pub struct FrameReader<R> {
    inner: R,
    line: Vec<u8>,
    header: Option<StreamHeader>,
    order: OrderCheck,
    records: u64,
    idle_timeout: Option<Duration>,
    done: bool,
}

impl<R: BufRead> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            line: Vec::new(),
            header: None,
            order: OrderCheck::default(),
            records: 0,
            idle_timeout: None,
            done: false,
        }
    }

    pub fn with_idle_timeout(mut self, timeout: Option<Duration>) -> Self {
        self.idle_timeout = timeout;
        self
    }

    /// The header, once the first record has been read.
    pub fn header(&self) -> Option<&StreamHeader> {
        self.header.as_ref()
    }

    fn next_line(&mut self) -> Option<Result<(), TelemetryError>> {
        loop {
            match self.inner.read_until(b'\n', &mut self.line) {
                Ok(0) => {
                    // a final line without a newline is still a record
                    return if self.line.trim_ascii().is_empty() {
                        None
                    } else {
                        Some(Ok(()))
                    };
                }
                Ok(_) => {
                    if self.line.ends_with(b"\n") {
                        if self.line.trim_ascii().is_empty() {
                            self.line.clear();
                            continue;
                        }
                        return Some(Ok(()));
                    }
                }
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                    ) =>
                {
                    let secs = self.idle_timeout.map_or(0.0, |d| d.as_secs_f64());
                    return Some(Err(TelemetryError::IdleTimeout(secs)));
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Some(Err(TelemetryError::Io(e.to_string()))),
            }
        }
    }
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = Result<TelemetryFrame, TelemetryError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            match self.next_line()? {
                Ok(()) => {}
                Err(e @ TelemetryError::IdleTimeout(_)) => return Some(Err(e)),
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
            let parsed = std::str::from_utf8(&self.line)
                .map_err(|e| TelemetryError::Parse {
                    field: "<record>".into(),
                    reason: e.to_string(),
                })
                .and_then(parse_record);
            self.line.clear();
            let first = self.records == 0;
            self.records += 1;
            let result = match parsed {
                Ok(Record::Header(h)) if first => {
                    self.header = Some(h);
                    continue;
                }
                Ok(Record::Header(_)) => Err(TelemetryError::LateHeader),
                Ok(Record::Frame(f)) => self.order.check(f.t).map(|_| f),
                Err(e) => Err(e),
            };
            if result.is_err() {
                self.done = true;
            }
            return Some(result);
        }
    }
}

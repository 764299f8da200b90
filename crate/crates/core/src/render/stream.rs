//! Block-by-block rendering into a sink running on its own thread.

use std::io::{self, Write};
use std::sync::mpsc::{sync_channel, SyncSender, TrySendError};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::{Pipeline, RenderConfig, RenderError, Scape};
use crate::gate::{GateEvent, GateEventKind};
use crate::telemetry::{JointId, TelemetryError, TelemetryFrame};

/// Consumer of fixed-size mono blocks (the final block may be short).
pub trait BlockSink: Send {
    fn write_block(&mut self, samples: &[f32]) -> io::Result<()>;

    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Raw signed 16-bit little-endian PCM.
pub struct PcmSink<W: Write + Send> {
    inner: W,
    bytes: Vec<u8>,
}

impl<W: Write + Send> PcmSink<W> {
    pub fn new(inner: W) -> Self {
        Self {
            inner,
            bytes: Vec::new(),
        }
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

impl<W: Write + Send> BlockSink for PcmSink<W> {
    fn write_block(&mut self, samples: &[f32]) -> io::Result<()> {
        self.bytes.clear();
        for s in samples {
            self.bytes
                .extend_from_slice(&super::sample_to_i16(*s).to_le_bytes());
        }
        self.inner.write_all(&self.bytes)
    }

    fn finish(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Keeps everything in memory.
#[derive(Debug, Default, Clone)]
pub struct CollectSink {
    pub samples: Vec<f32>,
    pub blocks: usize,
}

impl BlockSink for CollectSink {
    fn write_block(&mut self, samples: &[f32]) -> io::Result<()> {
        self.samples.extend_from_slice(samples);
        self.blocks += 1;
        Ok(())
    }
}

/// A block with the stream time and wall time of the frame that completed it.
#[derive(Debug, Clone)]
pub struct Block {
    pub index: u64,
    pub start_sample: u64,
    pub samples: Vec<f32>,
    pub stream_t: f64,
    pub arrived: Instant,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StreamOptions {
    /// Wait for the sink instead of dropping blocks. Use for file replay
    /// where no real-time deadline exists.
    pub lossless: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TriggerLatency {
    pub joint: JointId,
    pub t: f64,
    pub block: u64,
    /// Stream time from the trigger to the emission of the block holding its onset.
    pub stream_s: f64,
    /// Wall time from the trigger frame's arrival to the sink receiving that
    /// block; absent if the block was dropped.
    pub wall_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StreamReport {
    pub blocks: u64,
    pub dropped: u64,
    pub samples: u64,
    pub block_seconds: f64,
    /// The source went quiet for longer than its idle timeout.
    pub idle_timeout: bool,
    pub events: Vec<GateEvent>,
    pub latencies: Vec<TriggerLatency>,
}

impl StreamReport {
    /// Worst stream-time latency in blocks.
    pub fn max_latency_blocks(&self) -> f64 {
        self.latencies
            .iter()
            .map(|l| l.stream_s / self.block_seconds)
            .fold(0.0, f64::max)
    }
}

struct Emitter {
    tx: Option<SyncSender<Block>>,
    lossless: bool,
    index: u64,
    dropped: u64,
    stamps: Vec<(f64, Instant)>,
    closed: bool,
}

impl Emitter {
    /// `wait` forces a blocking send for blocks with no real-time deadline.
    fn emit(&mut self, block: Block, wait: bool) {
        self.stamps.push((block.stream_t, block.arrived));
        self.index += 1;
        let Some(tx) = &self.tx else { return };
        let sent = if self.lossless || wait {
            tx.send(block).map_err(|_| ())
        } else {
            match tx.try_send(block) {
                Ok(()) => Ok(()),
                Err(TrySendError::Full(_)) => {
                    self.dropped += 1;
                    Ok(())
                }
                Err(TrySendError::Disconnected(_)) => Err(()),
            }
        };
        if sent.is_err() {
            self.closed = true;
            self.tx = None;
        }
    }
}

fn render_block(
    p: &mut Pipeline,
    em: &mut Emitter,
    len: usize,
    stream_t: f64,
    arrived: Instant,
    wait: bool,
) {
    let start_sample = p.position();
    let mut samples = vec![0.0; len];
    p.render(&mut samples);
    em.emit(
        Block {
            index: em.index,
            start_sample,
            samples,
            stream_t,
            arrived,
        },
        wait,
    );
}

/// Render live telemetry into `sink` block by block.
///
/// A block is emitted as soon as a frame arrives at or past its end, so a
/// trigger reaches the sink within one block plus one telemetry period. The
/// queue holds `cfg.buffer_seconds` of audio; when it is full the block is
/// dropped and the stream ends with [`RenderError::Overrun`]. Fade tails
/// rendered after the input ends have no deadline and wait for the sink. An
/// idle timeout from the source ends the stream normally.
pub fn render_stream<I, S>(
    frames: I,
    scape: &Scape,
    cfg: &RenderConfig,
    sink: S,
    opts: StreamOptions,
) -> Result<(StreamReport, S), RenderError>
where
    I: IntoIterator<Item = Result<TelemetryFrame, TelemetryError>>,
    S: BlockSink + 'static,
{
    let mut p = Pipeline::new(scape.clone(), cfg.clone(), None)?;
    let (tx, rx) = sync_channel::<Block>(cfg.queue_blocks());
    let writer = thread::spawn(move || {
        let mut sink = sink;
        let mut received = Vec::new();
        for block in rx {
            sink.write_block(&block.samples)?;
            received.push((block.index, Instant::now()));
        }
        sink.finish()?;
        Ok::<_, io::Error>((sink, received))
    });
    let mut em = Emitter {
        tx: Some(tx),
        lossless: opts.lossless,
        index: 0,
        dropped: 0,
        stamps: Vec::new(),
        closed: false,
    };
    let block = cfg.block_frames as u64;
    let mut arrivals: Vec<Instant> = Vec::new();
    let mut idle_timeout = false;
    let mut failure = None;
    let mut last_t = 0.0;
    for item in frames {
        let frame = match item {
            Ok(f) => f,
            Err(TelemetryError::IdleTimeout(secs)) => {
                log::warn!("telemetry idle for {secs} s, ending stream");
                idle_timeout = true;
                break;
            }
            Err(e) => {
                failure = Some(e.into());
                break;
            }
        };
        let arrived = Instant::now();
        if let Err(e) = p.push(&frame) {
            failure = Some(e);
            break;
        }
        arrivals.resize(p.events().len(), arrived);
        last_t = frame.t;
        while p.position() + block <= p.ready() {
            render_block(&mut p, &mut em, cfg.block_frames, frame.t, arrived, false);
        }
        if em.closed {
            break;
        }
    }
    if failure.is_none() && !em.closed {
        let len = p.finish();
        let now = Instant::now();
        arrivals.resize(p.events().len(), now);
        let end_t = cfg.duration.unwrap_or(last_t);
        while p.position() < len && !em.closed {
            let n = (len - p.position()).min(block) as usize;
            render_block(&mut p, &mut em, n, end_t, now, true);
        }
    }
    em.tx = None;
    let joined = writer
        .join()
        .map_err(|_| RenderError::Io("sink thread panicked".into()))?;
    if let Some(e) = failure {
        return Err(e);
    }
    let (sink, received) = joined.map_err(|e| RenderError::Io(e.to_string()))?;
    if em.dropped > 0 {
        return Err(RenderError::Overrun {
            dropped: em.dropped,
            blocks: em.index,
        });
    }

    let mut received_at = vec![None; em.index as usize];
    for (i, at) in received {
        received_at[i as usize] = Some(at);
    }
    let latencies = p
        .events()
        .iter()
        .zip(&arrivals)
        .filter(|(e, _)| e.kind == GateEventKind::Trigger)
        .filter_map(|(e, arrived)| {
            let k = cfg.sample_at(e.t) / block;
            let (stream_t, _) = *em.stamps.get(k as usize)?;
            Some(TriggerLatency {
                joint: e.joint,
                t: e.t,
                block: k,
                stream_s: stream_t - e.t,
                wall_s: received_at[k as usize]
                    .map(|at| at.saturating_duration_since(*arrived).as_secs_f64()),
            })
        })
        .collect();
    let report = StreamReport {
        blocks: em.index,
        dropped: em.dropped,
        samples: p.position(),
        block_seconds: cfg.block_seconds(),
        idle_timeout,
        events: p.events().to_vec(),
        latencies,
    };
    Ok((report, sink))
}

/// Replays frames at their timestamps, scaled by `speed`.
pub struct Paced<I> {
    inner: I,
    speed: f64,
    origin: Option<(Instant, f64)>,
}

impl<I> Paced<I> {
    pub fn new(inner: I, speed: f64) -> Self {
        assert!(speed > 0.0, "speed must be positive");
        Self {
            inner,
            speed,
            origin: None,
        }
    }
}

impl<I> Iterator for Paced<I>
where
    I: Iterator<Item = Result<TelemetryFrame, TelemetryError>>,
{
    type Item = I::Item;

    fn next(&mut self) -> Option<Self::Item> {
        let item = self.inner.next()?;
        if let Ok(f) = &item {
            let (start, t0) = *self.origin.get_or_insert((Instant::now(), f.t));
            let due = start + Duration::from_secs_f64(((f.t - t0) / self.speed).max(0.0));
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
        }
        Some(item)
    }
}

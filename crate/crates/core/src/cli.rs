//! The `music-mode` command line.
//!
//! Exit codes: 0 success, 2 config error, 3 stream or I/O error, 4 overrun.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::config::{AppConfig, ConfigError, Overrides};
use crate::gate::{gate_run, GateEvent};
use crate::midibridge::{
    check_balance, events_to_midi, notes_to_midi, write_smf, LiveBridge, LiveMidiWriter, MidiError,
    MidiEvent, SignalRegistry,
};
use crate::render::{
    render_offline, render_stream, triggers_per_joint, write_wav, Paced, PcmSink, RenderError,
    Scape, StreamOptions,
};
use crate::sim::{generate, TaskPreset};
use crate::soundscape::{
    empirical_rates, legacy_note_events, random_schedule, schedule_to_jsonl, Mode,
};
use crate::telemetry::{
    open_source, to_jsonl, TelemetryError, TelemetryFrame, TelemetrySource, DEFAULT_SAMPLE_RATE_HZ,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STREAM: i32 = 3;
pub const EXIT_OVERRUN: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "music-mode", version, about = "Sonify robot joint motion")]
pub struct Cli {
    /// JSON config file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for random mode
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Soundscape mode: orchestral, robotic, legacy_note, random
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    #[arg(long, global = true, value_enum, default_value_t)]
    pub report: ReportFormat,
    /// Gate threshold in rad/s
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Gate debounce in seconds
    #[arg(long, global = true)]
    pub debounce: Option<f64>,
    /// Master volume percent
    #[arg(long, global = true)]
    pub master: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render telemetry to a WAV file
    Render {
        /// JSON-lines file or tcp://host:port
        #[arg(long)]
        telemetry: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        sample_rate: Option<u32>,
    },
    /// Stream raw s16le PCM to stdout, a file, or tcp://host:port
    Stream {
        #[arg(long)]
        telemetry: String,
        #[arg(long, default_value = "-")]
        out: String,
        /// Replay a file at its own timestamps
        #[arg(long)]
        realtime: bool,
        /// Replay speed factor with --realtime
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Wait for the sink instead of dropping blocks
        #[arg(long)]
        lossless: bool,
        /// Seconds of socket silence that end the stream
        #[arg(long)]
        idle_timeout: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        sample_rate: Option<u32>,
    },
    /// Convert telemetry to MIDI: a .mid file and/or live event lines
    Midi {
        #[arg(long)]
        telemetry: Option<String>,
        /// Standard MIDI File to write
        #[arg(long)]
        out: Option<PathBuf>,
        /// tcp://host:port for live JSON event lines
        #[arg(long)]
        midi_out: Option<String>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        idle_timeout: Option<f64>,
    },
    /// Write synthetic task telemetry
    Simulate {
        /// dance, navigate, wipe, or a preset file
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE_HZ)]
        rate: f64,
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Write a random-mode trigger schedule as JSON lines
    ScheduleRandom {
        #[arg(long)]
        duration: f64,
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Check a config and print the effective values
    Validate,
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }

    fn stream(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_STREAM,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

impl From<RenderError> for Failure {
    fn from(e: RenderError) -> Self {
        Self {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

impl From<TelemetryError> for Failure {
    fn from(e: TelemetryError) -> Self {
        Failure::stream(e)
    }
}

impl From<MidiError> for Failure {
    fn from(e: MidiError) -> Self {
        match e {
            MidiError::Capacity(_)
            | MidiError::Conflict(_)
            | MidiError::Unmapped(_)
            | MidiError::NoSound(_) => Failure::config(e),
            _ => Failure::stream(e),
        }
    }
}

/// Parse arguments, run, and return the exit code. Usage errors exit 2.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let format = cli.report;
    match execute(&cli) {
        Ok(report) => {
            emit_report(&report, format, cli.command.report_to_stderr());
            EXIT_OK
        }
        Err(f) => {
            if format == ReportFormat::Json {
                eprintln!(
                    "{}",
                    json!({"status": "error", "exit_code": f.code, "error": f.message})
                );
            } else {
                eprintln!("error: {}", f.message);
            }
            f.code
        }
    }
}

impl Command {
    fn report_to_stderr(&self) -> bool {
        match self {
            Command::Stream { out, .. } => out == "-",
            Command::Simulate { out, .. } | Command::ScheduleRandom { out, .. } => out == "-",
            _ => false,
        }
    }
}

fn emit_report(report: &Value, format: ReportFormat, stderr: bool) {
    let text = match format {
        ReportFormat::Json => report.to_string(),
        ReportFormat::Text => text_report(report),
    };
    if stderr {
        eprintln!("{text}");
    } else {
        println!("{text}");
    }
}

fn text_report(v: &Value) -> String {
    let mut lines = Vec::new();
    if let Value::Object(map) = v {
        for (k, val) in map {
            match val {
                Value::Object(inner) if k != "effective" => {
                    let parts: Vec<String> =
                        inner.iter().map(|(a, b)| format!("{a}={b}")).collect();
                    lines.push(format!("{k}: {}", parts.join(" ")));
                }
                Value::Array(items) if k == "warnings" => {
                    for w in items {
                        lines.push(format!("warning: {}", w.as_str().unwrap_or_default()));
                    }
                }
                Value::String(s) => lines.push(format!("{k}: {s}")),
                other => lines.push(format!("{k}: {other}")),
            }
        }
    }
    lines.join("\n")
}

fn overrides(cli: &Cli, duration: Option<f64>, sample_rate: Option<u32>) -> Overrides {
    Overrides {
        mode: cli.mode,
        seed: cli.seed,
        threshold: cli.threshold,
        debounce: cli.debounce,
        master_percent: cli.master,
        duration,
        sample_rate,
        ..Default::default()
    }
}

fn load_config(cli: &Cli, o: &Overrides) -> Result<(AppConfig, Vec<String>), Failure> {
    let cfg = match &cli.config {
        Some(path) => AppConfig::load_with(path, o)?,
        None => AppConfig::parse("", None, o)?,
    };
    let warnings = cfg.validate()?;
    for w in &warnings {
        log::warn!("{w}");
    }
    log::info!("effective config sha256 {}", cfg.hash());
    Ok((cfg, warnings))
}

fn read_frames(spec: &str, idle: Option<f64>) -> Result<Vec<TelemetryFrame>, Failure> {
    let timeout = idle.map(Duration::from_secs_f64);
    let reader = open_source(spec, timeout)?;
    let mut frames = Vec::new();
    for item in reader {
        match item {
            Ok(f) => frames.push(f),
            Err(TelemetryError::IdleTimeout(s)) => {
                log::warn!("telemetry idle for {s} s, ending stream");
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(frames)
}

fn open_output(out: &str) -> Result<Box<dyn Write + Send>, Failure> {
    if out == "-" {
        return Ok(Box::new(io::stdout()));
    }
    if let Some(addr) = out.strip_prefix("tcp://") {
        let s = TcpStream::connect(addr).map_err(|e| Failure::stream(format!("{out}: {e}")))?;
        return Ok(Box::new(s));
    }
    let f = File::create(out).map_err(|e| Failure::stream(format!("{out}: {e}")))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn joint_counts(events: &[GateEvent]) -> Value {
    triggers_per_joint(events)
        .into_iter()
        .map(|(j, n)| (j.name().to_string(), json!(n)))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn execute(cli: &Cli) -> Result<Value, Failure> {
    match &cli.command {
        Command::Render {
            telemetry,
            out,
            duration,
            sample_rate,
        } => {
            let (cfg, warnings) = load_config(cli, &overrides(cli, *duration, *sample_rate))?;
            cmd_render(&cfg, telemetry.as_deref(), out, warnings)
        }
        Command::Stream {
            telemetry,
            out,
            realtime,
            speed,
            lossless,
            idle_timeout,
            duration,
            sample_rate,
        } => {
            let (cfg, _) = load_config(cli, &overrides(cli, *duration, *sample_rate))?;
            let live = matches!(TelemetrySource::parse(telemetry), TelemetrySource::Tcp(_));
            let opts = StreamOptions {
                lossless: *lossless || !(live || *realtime),
            };
            cmd_stream(
                &cfg,
                telemetry,
                out,
                (*realtime).then_some(*speed),
                opts,
                *idle_timeout,
            )
        }
        Command::Midi {
            telemetry,
            out,
            midi_out,
            duration,
            idle_timeout,
        } => {
            let (cfg, _) = load_config(cli, &overrides(cli, *duration, None))?;
            cmd_midi(
                &cfg,
                telemetry.as_deref(),
                out.as_deref(),
                midi_out.as_deref(),
                *idle_timeout,
            )
        }
        Command::Simulate { task, rate, out } => cmd_simulate(task, *rate, cli.seed, out),
        Command::ScheduleRandom { duration, out } => {
            let (cfg, _) = load_config(cli, &overrides(cli, Some(*duration), None))?;
            cmd_schedule_random(&cfg, *duration, out)
        }
        Command::Validate => {
            let o = overrides(cli, None, None);
            let (cfg, warnings) = load_config(cli, &o)?;
            Ok(cmd_validate(&cfg, &warnings))
        }
    }
}

pub fn cmd_validate(cfg: &AppConfig, warnings: &[String]) -> Value {
    json!({
        "status": "ok",
        "config_hash": cfg.hash(),
        "warnings": warnings,
        "effective": cfg.effective(),
    })
}

pub fn cmd_render(
    cfg: &AppConfig,
    telemetry: Option<&str>,
    out: &Path,
    warnings: Vec<String>,
) -> Result<Value, Failure> {
    let frames = match telemetry {
        Some(spec) => read_frames(spec, None)?,
        None if cfg.mode() == Mode::Random && cfg.render.duration.is_some() => Vec::new(),
        None => {
            return Err(Failure::config(
                "--telemetry is required (random mode may use --duration instead)",
            ))
        }
    };
    let started = Instant::now();
    let scape = Scape::load(
        cfg.soundscape.clone(),
        cfg.gate_bank(),
        cfg.render.sample_rate,
    )?;
    let output = render_offline(&frames, &scape, &cfg.render)?;
    write_wav(&output.buffer, out)?;
    Ok(json!({
        "status": "ok",
        "out": out.display().to_string(),
        "mode": cfg.mode().name(),
        "config_hash": cfg.hash(),
        "frames": frames.len(),
        "duration_s": output.buffer.duration(),
        "peak": output.buffer.peak(),
        "clipped_samples": output.buffer.clipped(),
        "triggers": joint_counts(&output.events),
        "notes": output.notes.len(),
        "elapsed_s": started.elapsed().as_secs_f64(),
        "warnings": warnings,
    }))
}

pub fn cmd_stream(
    cfg: &AppConfig,
    telemetry: &str,
    out: &str,
    realtime: Option<f64>,
    opts: StreamOptions,
    idle_timeout: Option<f64>,
) -> Result<Value, Failure> {
    let scape = Scape::load(
        cfg.soundscape.clone(),
        cfg.gate_bank(),
        cfg.render.sample_rate,
    )?;
    let reader = open_source(telemetry, idle_timeout.map(Duration::from_secs_f64))?;
    let sink = PcmSink::new(open_output(out)?);
    let (report, _) = match realtime {
        Some(speed) => render_stream(Paced::new(reader, speed), &scape, &cfg.render, sink, opts)?,
        None => render_stream(reader, &scape, &cfg.render, sink, opts)?,
    };
    let wall: Vec<f64> = report.latencies.iter().filter_map(|l| l.wall_s).collect();
    Ok(json!({
        "status": "ok",
        "config_hash": cfg.hash(),
        "blocks": report.blocks,
        "dropped": report.dropped,
        "samples": report.samples,
        "idle_timeout": report.idle_timeout,
        "triggers": joint_counts(&report.events),
        "max_latency_blocks": report.max_latency_blocks(),
        "max_wall_latency_s": wall.iter().copied().fold(0.0, f64::max),
    }))
}

/// Gate events (or notes) for the whole input, plus the end time.
fn midi_events(
    cfg: &AppConfig,
    frames: &[TelemetryFrame],
) -> Result<(Vec<MidiEvent>, usize), Failure> {
    let tick = cfg.render.tick;
    let reg = SignalRegistry::from_soundscape(&cfg.soundscape)?;
    let end = cfg.render.duration.or(frames.last().map(|f| f.t));
    let sc = &cfg.soundscape;
    let (events, sources) = match sc.mode {
        Mode::LegacyNote => {
            let notes = legacy_note_events(frames, &sc.scale_maps());
            (notes_to_midi(&notes, &reg, sc, tick, end)?, notes.len())
        }
        Mode::Random => {
            let d =
                end.ok_or_else(|| Failure::config("random mode needs --duration or telemetry"))?;
            let sched = random_schedule(d, sc.joints.keys().copied(), &sc.random)
                .map_err(Failure::config)?;
            (events_to_midi(&sched, &reg, sc, tick, end)?, sched.len())
        }
        Mode::Orchestral | Mode::Robotic => {
            let ge = gate_run(frames, &cfg.gate_bank()).map_err(Failure::stream)?;
            (events_to_midi(&ge, &reg, sc, tick, end)?, ge.len())
        }
    };
    Ok((events, sources))
}

pub fn cmd_midi(
    cfg: &AppConfig,
    telemetry: Option<&str>,
    out: Option<&Path>,
    midi_out: Option<&str>,
    idle_timeout: Option<f64>,
) -> Result<Value, Failure> {
    if out.is_none() && midi_out.is_none() {
        return Err(Failure::config("give --out and/or --midi-out"));
    }
    let reg = SignalRegistry::from_soundscape(&cfg.soundscape)?;
    let mut report = json!({"status": "ok", "config_hash": cfg.hash(), "channels": reg.len()});
    let frames = match (midi_out, telemetry) {
        (Some(addr), Some(spec)) if cfg.mode() != Mode::Random => {
            let (frames, sent) = stream_midi(cfg, spec, addr, idle_timeout)?;
            report["live_events"] = json!(sent);
            frames
        }
        (_, Some(spec)) => read_frames(spec, idle_timeout)?,
        (_, None) if cfg.mode() == Mode::Random && cfg.render.duration.is_some() => Vec::new(),
        (_, None) => {
            return Err(Failure::config(
                "--telemetry is required (random mode may use --duration instead)",
            ))
        }
    };
    let (events, _) = midi_events(cfg, &frames)?;
    let channels = check_balance(&events).map_err(Failure::stream)?;
    if let Some(addr) = midi_out.filter(|_| report.get("live_events").is_none()) {
        let addr = addr.strip_prefix("tcp://").unwrap_or(addr);
        let mut w =
            LiveMidiWriter::connect(addr).map_err(|e| Failure::stream(format!("{addr}: {e}")))?;
        for e in &events {
            w.send(e)?;
        }
        report["live_events"] = json!(events.len());
    }
    if let Some(path) = out {
        write_smf(&events, path)?;
        report["out"] = json!(path.display().to_string());
    }
    report["events"] = json!(events.len());
    report["channels_used"] = json!(channels);
    Ok(report)
}

/// Forward MIDI lines while telemetry is still arriving.
fn stream_midi(
    cfg: &AppConfig,
    spec: &str,
    addr: &str,
    idle_timeout: Option<f64>,
) -> Result<(Vec<TelemetryFrame>, usize), Failure> {
    let addr = addr.strip_prefix("tcp://").unwrap_or(addr);
    let mut w =
        LiveMidiWriter::connect(addr).map_err(|e| Failure::stream(format!("{addr}: {e}")))?;
    let reg = SignalRegistry::from_soundscape(&cfg.soundscape)?;
    let mut bridge = LiveBridge::new(reg, cfg.soundscape.clone(), cfg.render.tick);
    let mut gates = cfg.gate_bank();
    let mut legacy = crate::soundscape::LegacyTracker::new(cfg.soundscape.scale_maps());
    let mut frames = Vec::new();
    let mut sent = 0;
    let reader = open_source(spec, idle_timeout.map(Duration::from_secs_f64))?;
    for item in reader {
        let frame = match item {
            Ok(f) => f,
            Err(TelemetryError::IdleTimeout(_)) => break,
            Err(e) => return Err(e.into()),
        };
        if cfg.render.duration.is_some_and(|d| frame.t > d) {
            break;
        }
        let mut out = Vec::new();
        if cfg.mode() == Mode::LegacyNote {
            for n in legacy.push(&frame) {
                out.extend(bridge.push_note(&n)?);
            }
        } else {
            for e in gates.push(&frame).map_err(Failure::stream)? {
                out.extend(bridge.push(&e)?);
            }
        }
        out.extend(bridge.advance(frame.t));
        for e in &out {
            w.send(e)?;
        }
        sent += out.len();
        frames.push(frame);
    }
    let end = cfg
        .render
        .duration
        .or(frames.last().map(|f| f.t))
        .unwrap_or(0.0);
    for e in bridge.finish(end) {
        w.send(&e)?;
        sent += 1;
    }
    Ok((frames, sent))
}

pub fn cmd_simulate(task: &str, rate: f64, seed: Option<u64>, out: &str) -> Result<Value, Failure> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Failure::config(format!("rate must be > 0, got {rate}")));
    }
    let mut preset = TaskPreset::resolve(task).map_err(Failure::config)?;
    if let Some(s) = seed {
        preset.seed = s;
    }
    let frames = generate(&preset, rate);
    let text = to_jsonl(Some(&preset.header(rate)), &frames);
    let mut w = open_output(out)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(Failure::stream)?;
    Ok(json!({
        "status": "ok",
        "task": preset.name,
        "seed": preset.seed,
        "frames": frames.len(),
        "duration_s": preset.duration,
    }))
}

pub fn cmd_schedule_random(cfg: &AppConfig, duration: f64, out: &str) -> Result<Value, Failure> {
    let sc = &cfg.soundscape;
    let sched = random_schedule(duration, sc.joints.keys().copied(), &sc.random)
        .map_err(Failure::config)?;
    let mut w = open_output(out)?;
    w.write_all(schedule_to_jsonl(&sched).as_bytes())
        .and_then(|_| w.flush())
        .map_err(Failure::stream)?;
    let rates: serde_json::Map<String, Value> = empirical_rates(&sched, duration)
        .into_iter()
        .map(|(j, r)| (j.name().to_string(), json!(r)))
        .collect();
    Ok(json!({
        "status": "ok",
        "seed": sc.random.seed,
        "events": sched.len(),
        "triggers": joint_counts(&sched),
        "rates": rates,
    }))
}

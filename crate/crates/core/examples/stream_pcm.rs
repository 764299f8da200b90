//! Streaming render: frames are paced in real time and blocks go to a raw
//! PCM file as they are produced.

use std::fs::File;
use std::io::BufWriter;

use music_mode::config::AppConfig;
use music_mode::render::{render_stream, Paced, PcmSink, Scape, StreamOptions};
use music_mode::sim::{generate, TaskPreset};
use music_mode::telemetry::TelemetryError;

fn main() {
    let cfg = AppConfig::default();
    let scape = Scape::load(
        cfg.soundscape.clone(),
        cfg.gate_bank(),
        cfg.render.sample_rate,
    )
    .unwrap();
    let mut preset = TaskPreset::builtin("navigate").unwrap();
    preset.duration = 5.0;
    let frames = generate(&preset, 250.0)
        .into_iter()
        .map(Ok::<_, TelemetryError>);
    let sink = PcmSink::new(BufWriter::new(File::create("navigate.pcm").unwrap()));
    let (report, _) = render_stream(
        Paced::new(frames, 1.0),
        &scape,
        &cfg.render,
        sink,
        StreamOptions::default(),
    )
    .unwrap();
    println!("{} blocks, {} dropped", report.blocks, report.dropped);
    for l in &report.latencies {
        println!(
            "{:?} at {:.3} s heard after {:.1} ms",
            l.joint,
            l.t,
            l.stream_s * 1000.0
        );
    }
}

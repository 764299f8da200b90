mod common;

use std::io;
use std::time::Duration;

use common::{reference_render, ticks_to_silence, RefSetup};
use music_mode::config::AppConfig;
use music_mode::envelope::{fade_duration, FadeClass};
use music_mode::gate::GateEventKind;
use music_mode::render::{
    render_offline, render_stream, BlockSink, CollectSink, Paced, RenderConfig, RenderError, Scape,
    StreamOptions,
};
use music_mode::sim::{generate, random_pulses, PulseStats, TaskPreset};
use music_mode::telemetry::{JointId, TelemetryError, TelemetryFrame};
use proptest::prelude::*;

fn scape(cfg: &AppConfig) -> Scape {
    Scape::load(
        cfg.soundscape.clone(),
        cfg.gate_bank(),
        cfg.render.sample_rate,
    )
    .unwrap()
}

fn app(sample_rate: u32) -> AppConfig {
    let mut cfg = AppConfig::default();
    cfg.render.sample_rate = sample_rate;
    cfg
}

fn clip(seed: u64, secs: f64) -> Vec<TelemetryFrame> {
    let stats = PulseStats {
        rate: 0.8,
        amplitude: (0.0, 0.4),
        width: (0.0, 1.5),
        min_gap: 0.004,
        ..Default::default()
    };
    random_pulses(&JointId::ALL, secs, &stats, seed).unwrap()
}

fn reference(frames: &[TelemetryFrame], cfg: &AppConfig, sc: &Scape) -> Vec<f32> {
    let setup = RefSetup {
        bank: &sc.bank,
        rates_tenths: cfg
            .soundscape
            .joints
            .iter()
            .map(|(j, s)| (*j, (s.fade_rate * 10.0).round() as u32))
            .collect(),
        sample_rate: cfg.render.sample_rate,
        tick: cfg.render.tick,
        headroom: cfg.render.headroom,
        master: cfg.render.master_percent,
        anchors: cfg.render.anchors,
        threshold: cfg.gate.threshold,
        debounce: cfg.gate.debounce,
    };
    reference_render(frames, &setup)
}

fn bits(x: &[f32]) -> Vec<u32> {
    x.iter().map(|s| s.to_bits()).collect()
}

#[test]
fn production_matches_reference() {
    let cfg = app(22050);
    let sc = scape(&cfg);
    for seed in 0..4 {
        let frames = clip(seed, 6.0);
        let out = render_offline(&frames, &sc, &cfg.render).unwrap();
        let want = reference(&frames, &cfg, &sc);
        assert_eq!(out.buffer.samples.len(), want.len(), "seed {seed}");
        assert!(bits(&out.buffer.samples) == bits(&want), "seed {seed}");
    }
}

#[test]
fn reference_matches_with_master_and_headroom() {
    let mut cfg = app(22050);
    cfg.render.master_percent = 37.5;
    cfg.render.headroom = 1.0;
    cfg.soundscape
        .joints
        .get_mut(&JointId::Torso)
        .unwrap()
        .fade_rate = 0.7;
    let sc = scape(&cfg);
    let frames = clip(77, 5.0);
    let out = render_offline(&frames, &sc, &cfg.render).unwrap();
    assert!(bits(&out.buffer.samples) == bits(&reference(&frames, &cfg, &sc)));
}

fn streamed(frames: &[TelemetryFrame], sc: &Scape, cfg: &RenderConfig) -> Vec<f32> {
    let items = frames.iter().cloned().map(Ok::<_, TelemetryError>);
    let (report, sink) = render_stream(
        items,
        sc,
        cfg,
        CollectSink::default(),
        StreamOptions { lossless: true },
    )
    .unwrap();
    assert_eq!(report.dropped, 0);
    assert_eq!(report.samples as usize, sink.samples.len());
    sink.samples
}

#[test]
fn streamed_equals_offline_on_presets() {
    let cfg = app(22050);
    let sc = scape(&cfg);
    for name in ["wipe", "navigate"] {
        let frames = generate(&TaskPreset::builtin(name).unwrap(), 250.0);
        let off = render_offline(&frames, &sc, &cfg.render).unwrap();
        assert!(
            bits(&off.buffer.samples) == bits(&streamed(&frames, &sc, &cfg.render)),
            "{name}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn streamed_equals_offline_for_any_block_size(seed in 0u64..1000, block in 1usize..2000) {
        let mut cfg = app(22050);
        cfg.render.block_frames = block;
        let sc = scape(&cfg);
        let frames = clip(seed, 3.0);
        let off = render_offline(&frames, &sc, &cfg.render).unwrap();
        prop_assert!(bits(&off.buffer.samples) == bits(&streamed(&frames, &sc, &cfg.render)));
    }

    #[test]
    fn output_within_full_scale(seed in 0u64..1000) {
        let mut cfg = app(22050);
        cfg.render.headroom = 1.0;
        let sc = scape(&cfg);
        let out = render_offline(&clip(seed, 3.0), &sc, &cfg.render).unwrap();
        prop_assert!(out.buffer.samples.iter().all(|s| (-1.0..=1.0).contains(s)));
    }
}

#[test]
fn eight_full_gain_channels_clamp() {
    let mut cfg = app(22050);
    cfg.render.headroom = 1.0;
    let sc = scape(&cfg);
    let frames: Vec<TelemetryFrame> = (0..500)
        .map(|i| {
            JointId::ALL
                .iter()
                .fold(TelemetryFrame::new(i as f64 * 0.004), |f, j| {
                    f.with(*j, 1.0)
                })
        })
        .collect();
    let out = render_offline(&frames, &sc, &cfg.render).unwrap();
    assert!(out.buffer.peak() <= 1.0);
    assert!(out.buffer.clipped() > 0);
}

#[test]
fn silence_wherever_every_envelope_is_zero() {
    let cfg = app(22050);
    let sc = scape(&cfg);
    let frames = clip(5, 6.0);
    let out = render_offline(&frames, &sc, &cfg.render).unwrap();
    let sr = 22050.0;
    let tick = cfg.render.tick_samples() as usize;
    // audible windows: trigger .. release + fade
    let mut audible = vec![false; out.buffer.samples.len()];
    for j in JointId::ALL {
        let rate = (cfg.soundscape.joints[&j].fade_rate * 10.0).round() as u32;
        let mut on = None;
        for e in out.events.iter().filter(|e| e.joint == j) {
            let s = (e.t * sr).round() as usize;
            match e.kind {
                GateEventKind::Trigger => on = Some(s),
                GateEventKind::Release => {
                    let end = s + ticks_to_silence(rate) as usize * tick;
                    audible[on.take().unwrap()..end].fill(true);
                }
            }
        }
    }
    for (i, s) in out.buffer.samples.iter().enumerate() {
        if !audible[i] {
            assert_eq!(*s, 0.0, "sample {i}");
        }
    }
}

#[test]
fn tail_is_the_slowest_fade() {
    let cfg = app(22050);
    let sc = scape(&cfg);
    // everything moving, then the stream ends mid-gate
    let frames: Vec<TelemetryFrame> = (0..=250)
        .map(|i| {
            JointId::ALL
                .iter()
                .fold(TelemetryFrame::new(i as f64 * 0.004), |f, j| {
                    f.with(*j, 0.3)
                })
        })
        .collect();
    let out = render_offline(&frames, &sc, &cfg.render).unwrap();
    let slowest = cfg
        .soundscape
        .joints
        .values()
        .map(|s| fade_duration(&FadeClass::new(s.fade_rate, 0.04).unwrap()))
        .fold(0.0, f64::max);
    let tail = out.buffer.duration() - 1.0;
    assert!(
        (tail - slowest).abs() < 0.04 + 1e-9,
        "tail {tail} slowest {slowest}"
    );
    let last_loud = out.buffer.samples.iter().rposition(|s| *s != 0.0).unwrap();
    assert!(out.buffer.samples.len() - last_loud <= cfg.render.tick_samples() as usize + 1);
}

#[derive(Debug)]
struct StallSink {
    stall: Duration,
    first: bool,
}

impl BlockSink for StallSink {
    fn write_block(&mut self, _: &[f32]) -> io::Result<()> {
        if self.first {
            self.first = false;
            std::thread::sleep(self.stall);
        }
        Ok(())
    }
}

#[test]
fn stalled_sink_overruns_with_drop_count() {
    let cfg = app(44100);
    let sc = scape(&cfg);
    let frames: Vec<_> = (0..500)
        .map(|i| {
            Ok::<_, TelemetryError>(TelemetryFrame::new(i as f64 * 0.004).with(JointId::Torso, 0.0))
        })
        .collect();
    let sink = StallSink {
        stall: Duration::from_secs(1),
        first: true,
    };
    let err = render_stream(
        Paced::new(frames.into_iter(), 1.0),
        &sc,
        &cfg.render,
        sink,
        StreamOptions::default(),
    )
    .unwrap_err();
    match err {
        RenderError::Overrun { dropped, blocks } => {
            assert!(dropped > 50, "dropped {dropped}");
            assert!(blocks >= 199);
            assert_eq!(err.exit_code(), 4);
        }
        other => panic!("expected overrun, got {other}"),
    }
}

#[test]
fn stream_error_aborts() {
    let cfg = app(22050);
    let sc = scape(&cfg);
    let items = vec![
        Ok(TelemetryFrame::new(0.0)),
        Err(TelemetryError::OutOfOrder {
            previous: 0.1,
            current: 0.05,
        }),
    ];
    let err = render_stream(
        items,
        &sc,
        &cfg.render,
        CollectSink::default(),
        StreamOptions::default(),
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn impulse_latency_within_two_blocks() {
    let cfg = app(44100);
    let sc = scape(&cfg);
    let frames: Vec<_> = (0..250)
        .map(|i| {
            let t = i as f64 * 0.004;
            let v = if (0.3..0.6).contains(&t) { 0.5 } else { 0.0 };
            Ok::<_, TelemetryError>(TelemetryFrame::new(t).with(JointId::Elbow, v))
        })
        .collect();
    let (report, _) = render_stream(
        Paced::new(frames.into_iter(), 1.0),
        &sc,
        &cfg.render,
        CollectSink::default(),
        StreamOptions::default(),
    )
    .unwrap();
    assert_eq!(report.latencies.len(), 1);
    assert!(
        report.max_latency_blocks() <= 2.0,
        "{}",
        report.max_latency_blocks()
    );
    assert!(report.latencies[0].wall_s.is_some());
}

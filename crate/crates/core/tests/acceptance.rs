//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{
    brute_force_gate, next_degree, reference_render, scale_walk, ticks_to_silence, RefSetup,
};
use music_mode::config::AppConfig;
use music_mode::envelope::{
    percent_to_db, percent_to_gain, Envelope, FadeClass, SplLevel, VolumeAnchors,
};
use music_mode::gate::{gate_run, GateBank, GateConfig, GateEventKind};
use music_mode::midibridge::{
    check_balance, events_to_midi, read_smf, write_smf, MidiError, MidiKind, SignalRegistry,
    TICKS_PER_SECOND,
};
use music_mode::render::{
    render_offline, render_stream, CollectSink, Paced, RenderConfig, Scape, StreamOptions,
};
use music_mode::sim::{generate, random_pulses, PulseStats, TaskPreset};
use music_mode::soundscape::{
    angle_to_note, random_schedule, schedule_to_jsonl, Instrument, JointSound, Mode, Note,
    ScaleMap, MAJOR,
};
use music_mode::telemetry::{to_jsonl, JointId, TelemetryError, TelemetryFrame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fade_arithmetic() -> Check {
    let mut env = Envelope::new(FadeClass::with_rate(4.0).map_err(|e| e.to_string())?);
    env.trigger();
    env.release();
    let env = env.tick();
    ensure(
        env.volume.tenths() == 960,
        format!("after one tick: {}", env.volume.tenths()),
    )?;

    let mut counts = Vec::new();
    for (rate, want) in [(4.0, 25), (3.0, 34), (1.5, 67)] {
        let fade = FadeClass::with_rate(rate).map_err(|e| e.to_string())?;
        let mut env = Envelope::new(fade);
        env.trigger();
        env.release();
        let mut n = 0;
        while !env.volume.is_silent() {
            env = env.tick();
            n += 1;
        }
        let oracle = ticks_to_silence((rate * 10.0) as u32);
        ensure(
            n == want && oracle == want && fade.ticks_to_silence() == want,
            format!("{rate}%: {n} ticks, oracle {oracle}"),
        )?;
        counts.push(n);
    }
    Ok(format!("96.0% after one tick; silence at {counts:?} ticks"))
}

fn gate_contract() -> Check {
    let cfg = GateConfig::default();
    let bank = GateBank::uniform(cfg);
    let spans = |frames: &[TelemetryFrame]| -> Vec<(f64, Option<f64>)> {
        let mut out: Vec<(f64, Option<f64>)> = Vec::new();
        for e in gate_run(frames, &bank).unwrap() {
            match e.kind {
                GateEventKind::Trigger => out.push((e.t, None)),
                GateEventKind::Release => out.last_mut().unwrap().1 = Some(e.t),
            }
        }
        out
    };
    let mut triggers = 0;
    for seed in 0..10_000u64 {
        let stats = PulseStats {
            rate: 2.0,
            amplitude: (0.0, 0.2),
            width: (0.0, 0.3),
            ..Default::default()
        };
        let frames =
            random_pulses(&[JointId::Torso], 3.0, &stats, seed).map_err(|e| e.to_string())?;
        let want: Vec<_> = brute_force_gate(&frames, JointId::Torso, cfg.threshold, cfg.debounce)
            .iter()
            .map(|s| (s.trigger, s.release))
            .collect();
        let got = spans(&frames);
        ensure(got == want, format!("seed {seed}: {got:?} vs {want:?}"))?;
        triggers += got.len();
    }
    let mut short = 0;
    for seed in 0..500u64 {
        let narrow = PulseStats {
            rate: 4.0,
            amplitude: (0.05, 1.0),
            width: (0.0, 0.0399),
            ..Default::default()
        };
        let weak = PulseStats {
            rate: 4.0,
            amplitude: (0.0, 0.0499),
            width: (0.0, 1.0),
            ..Default::default()
        };
        for stats in [narrow, weak] {
            let frames =
                random_pulses(&[JointId::Torso], 5.0, &stats, seed).map_err(|e| e.to_string())?;
            short += spans(&frames).len();
        }
    }
    ensure(
        short == 0,
        format!("{short} triggers from sub-threshold pulses"),
    )?;
    Ok(format!("10000 trains agree with the oracle ({triggers} triggers); 0 triggers from narrow or weak pulses"))
}

fn volume_anchors() -> Check {
    let a = VolumeAnchors::default();
    let db = |p| percent_to_db(p, &a).map_err(|e| e.to_string());
    ensure(db(10.0)? == SplLevel::Db(65.0), "10% is not 65 dB")?;
    ensure(db(100.0)? == SplLevel::Db(80.0), "100% is not 80 dB")?;
    let gains: Vec<f64> = (0..=1000)
        .map(|i| percent_to_gain(f64::from(i) / 10.0, &a).unwrap())
        .collect();
    let mut worst = 0.0f64;
    for (i, w) in gains.windows(2).enumerate() {
        ensure(
            w[1] > w[0],
            format!("not increasing at {}%", f64::from(i as u32) / 10.0),
        )?;
        worst = worst.max(w[1] - w[0]);
    }
    // continuity: a 0.1% step never moves gain by more than the steepest
    // slope of the dB curve (ln10/20 * 15/90 per percent) allows
    let bound = 0.1 * (10f64.ln() / 20.0) * (15.0 / 90.0) * 1.0001;
    ensure(worst <= bound, format!("jump of {worst} exceeds {bound}"))?;
    ensure(gains[0] == 0.0 && gains[1000] == 1.0, "endpoints")?;
    Ok(format!(
        "65.0 / 80.0 dB exact; gain monotone, largest 0.1% step {worst:.5}"
    ))
}

fn legacy_notes() -> Check {
    let map = ScaleMap::default();
    let c = angle_to_note(80.0, &map).to_string();
    let d = angle_to_note(90.0, &map).to_string();
    ensure(c == "C4" && d == "D4", format!("80 -> {c}, 90 -> {d}"))?;
    let patterns: [&[u8]; 3] = [&MAJOR, &[0, 2, 3, 5, 7, 8, 10], &[0, 2, 4, 7, 9]];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1000 {
        let map = ScaleMap {
            root: Note::from_midi(rng.random_range(36..84)),
            pattern: patterns[rng.random_range(0..3)].to_vec(),
            reference_angle: rng.random_range(-90.0..90.0),
            resolution: rng.random_range(1.0..30.0),
        };
        let steps: i64 = rng.random_range(-12..12);
        let angle =
            map.reference_angle + (steps as f64 + rng.random_range(0.01..0.99)) * map.resolution;
        let here = angle_to_note(angle, &map);
        let up = angle_to_note(angle + map.resolution, &map);
        ensure(
            i64::from(here.midi()) == scale_walk(&map, steps),
            format!("case {case}: position"),
        )?;
        ensure(
            i64::from(up.midi()) == next_degree(&map, here),
            format!("case {case}: step"),
        )?;
    }
    Ok("80 deg -> C4, 90 deg -> D4; 1000 random steps move one degree".into())
}

fn scape(cfg: &AppConfig) -> Result<Scape, String> {
    Scape::load(
        cfg.soundscape.clone(),
        cfg.gate_bank(),
        cfg.render.sample_rate,
    )
    .map_err(|e| e.to_string())
}

fn same_bits(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn render_equivalence() -> Check {
    let cfg = AppConfig::default();
    ensure(
        cfg.render.sample_rate == 44100,
        "default rate is not 44.1 kHz",
    )?;
    let sc = scape(&cfg)?;
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
    let stats = PulseStats {
        rate: 0.8,
        amplitude: (0.0, 0.4),
        width: (0.0, 1.5),
        min_gap: 0.004,
        ..Default::default()
    };
    let mut total = 0;
    for seed in [11, 22, 33] {
        let frames = random_pulses(&JointId::ALL, 10.0, &stats, seed).map_err(|e| e.to_string())?;
        let out = render_offline(&frames, &sc, &cfg.render).map_err(|e| e.to_string())?;
        ensure(
            same_bits(&out.buffer.samples, &reference_render(&frames, &setup)),
            format!("clip {seed} differs"),
        )?;
        total += out.buffer.samples.len();
    }
    let frames = generate(
        &TaskPreset::builtin("wipe").map_err(|e| e.to_string())?,
        250.0,
    );
    let off = render_offline(&frames, &sc, &cfg.render).map_err(|e| e.to_string())?;
    let items = frames.iter().cloned().map(Ok::<_, TelemetryError>);
    let (_, sink) = render_stream(
        items,
        &sc,
        &cfg.render,
        CollectSink::default(),
        StreamOptions { lossless: true },
    )
    .map_err(|e| e.to_string())?;
    ensure(
        same_bits(&off.buffer.samples, &sink.samples),
        "wipe: streamed differs from offline",
    )?;
    Ok(format!(
        "3 clips ({total} samples) match the reference; wipe streamed == offline ({} samples)",
        sink.samples.len()
    ))
}

fn midi_dance() -> Check {
    let cfg = AppConfig::default();
    let frames = generate(
        &TaskPreset::builtin("dance").map_err(|e| e.to_string())?,
        250.0,
    );
    let events = gate_run(&frames, &cfg.gate_bank()).map_err(|e| e.to_string())?;
    let reg = SignalRegistry::from_soundscape(&cfg.soundscape).map_err(|e| e.to_string())?;
    let midi = events_to_midi(
        &events,
        &reg,
        &cfg.soundscape,
        cfg.render.tick,
        frames.last().map(|f| f.t),
    )
    .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("dance.mid");
    write_smf(&midi, &path).map_err(|e| e.to_string())?;
    let back = read_smf(&path).map_err(|e| e.to_string())?;
    ensure(back.len() == midi.len(), "event count changed")?;
    for (a, b) in midi.iter().zip(&back) {
        ensure(
            (a.t - b.t).abs() <= 1.0 / TICKS_PER_SECOND,
            format!("{a:?} vs {b:?}"),
        )?;
        ensure(
            (a.kind, a.channel, a.pitch) == (b.kind, b.channel, b.pitch),
            format!("{a:?} vs {b:?}"),
        )?;
    }
    let channels = check_balance(&back)?;
    ensure(channels <= 16, format!("{channels} channels"))?;
    let ons = back.iter().filter(|e| e.kind == MidiKind::NoteOn).count();

    let mut over = cfg.soundscape.clone();
    for i in 0..(17 - over.joints.len()) {
        over.signals.insert(
            format!("sensor{i}"),
            JointSound::synth(Instrument::Sine, "C6", 4.0),
        );
    }
    match SignalRegistry::from_soundscape(&over) {
        Err(MidiError::Capacity(name)) => {
            Ok(format!("{} events round-trip, {ons} balanced notes on {channels} channels; 17th signal '{name}' rejected", midi.len()))
        }
        other => Err(format!("17 signals gave {other:?}")),
    }
}

fn random_mode() -> Check {
    let mut cfg = AppConfig::for_mode(Mode::Random);
    cfg.soundscape.random.seed = 2024;
    let a =
        random_schedule(60.0, JointId::ALL, &cfg.soundscape.random).map_err(|e| e.to_string())?;
    let b =
        random_schedule(60.0, JointId::ALL, &cfg.soundscape.random).map_err(|e| e.to_string())?;
    ensure(
        schedule_to_jsonl(&a) == schedule_to_jsonl(&b),
        "schedules differ between runs",
    )?;

    let sc = scape(&cfg)?;
    let still: Vec<TelemetryFrame> = (0..=2500)
        .map(|i| TelemetryFrame::new(i as f64 * 0.004))
        .collect();
    let busy = generate(
        &TaskPreset::builtin("dance").map_err(|e| e.to_string())?,
        250.0,
    );
    let busy: Vec<TelemetryFrame> = busy.into_iter().take(2501).collect();
    let r1 = render_offline(&still, &sc, &cfg.render).map_err(|e| e.to_string())?;
    let r2 = render_offline(&busy, &sc, &cfg.render).map_err(|e| e.to_string())?;
    ensure(r1.events == r2.events, "events depend on telemetry")?;
    ensure(
        same_bits(&r1.buffer.samples, &r2.buffer.samples),
        "audio depends on telemetry",
    )?;

    let seeds = 100;
    let mut counts: BTreeMap<JointId, u64> = BTreeMap::new();
    for seed in 0..seeds {
        let mut rc = cfg.soundscape.random.clone();
        rc.seed = seed;
        rc.default_rate = 0.5;
        rc.rates.clear();
        for e in random_schedule(60.0, JointId::ALL, &rc).map_err(|e| e.to_string())? {
            if e.kind == GateEventKind::Trigger {
                *counts.entry(e.joint).or_default() += 1;
            }
        }
    }
    let sigma = (30.0 / seeds as f64).sqrt();
    let mut means = Vec::new();
    for j in JointId::ALL {
        let mean = *counts.get(&j).unwrap_or(&0) as f64 / seeds as f64;
        ensure(
            (mean - 30.0).abs() <= 3.0 * sigma,
            format!("{j:?}: mean {mean} outside 30 +/- {:.3}", 3.0 * sigma),
        )?;
        means.push(format!("{mean:.2}"));
    }
    Ok(format!("byte-identical schedules, independent of telemetry; per-joint means [{}] within 30 +/- {:.2}", means.join(", "), 3.0 * sigma))
}

fn performance() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let stats = PulseStats {
        rate: 0.5,
        amplitude: (0.0, 0.5),
        width: (0.0, 3.0),
        ..Default::default()
    };
    let frames = random_pulses(&JointId::ALL, 60.0, &stats, 8).map_err(|e| e.to_string())?;
    let input = dir.path().join("sixty.jsonl");
    std::fs::write(&input, to_jsonl(None, &frames)).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_music-mode"))
        .args([
            "render",
            "--telemetry",
            input.to_str().unwrap(),
            "--out",
            dir.path().join("sixty.wav").to_str().unwrap(),
        ])
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(
        out.status.success(),
        String::from_utf8_lossy(&out.stderr).to_string(),
    )?;
    ensure(
        elapsed < Duration::from_secs(10),
        format!("render took {elapsed:?}"),
    )?;

    let cfg = AppConfig::default();
    let sc = scape(&cfg)?;
    let rc: &RenderConfig = &cfg.render;
    let impulse: Vec<_> = (0..250)
        .map(|i| {
            let t = i as f64 * 0.004;
            let v = if (0.3..0.6).contains(&t) { 0.5 } else { 0.0 };
            Ok::<_, TelemetryError>(TelemetryFrame::new(t).with(JointId::Elbow, v))
        })
        .collect();
    let (report, _) = render_stream(
        Paced::new(impulse.into_iter(), 1.0),
        &sc,
        rc,
        CollectSink::default(),
        StreamOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure(
        report.latencies.len() == 1,
        format!("{} triggers", report.latencies.len()),
    )?;
    let blocks = report.max_latency_blocks();
    ensure(blocks <= 2.0, format!("latency {blocks} blocks"))?;
    Ok(format!(
        "60 s x 8 joints rendered in {:.2} s; impulse latency {blocks:.2} blocks ({:.1} ms)",
        elapsed.as_secs_f64(),
        report.latencies[0].stream_s * 1000.0
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("fade arithmetic", fade_arithmetic),
        ("gate contract", gate_contract),
        ("volume anchors", volume_anchors),
        ("legacy note mode", legacy_notes),
        ("render equivalence", render_equivalence),
        ("midi from dance", midi_dance),
        ("random mode", random_mode),
        ("performance", performance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {} {name} ({secs:.2} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name} ({secs:.2} s): {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

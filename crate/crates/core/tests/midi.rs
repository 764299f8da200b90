use music_mode::config::AppConfig;
use music_mode::gate::gate_run;
use music_mode::midibridge::{
    check_balance, events_to_midi, read_smf, read_smf_bytes, smf_bytes, write_smf, MidiError,
    MidiKind, SignalRegistry, TICKS_PER_SECOND,
};
use music_mode::sim::{generate, TaskPreset};

fn dance_midi() -> (AppConfig, Vec<music_mode::midibridge::MidiEvent>) {
    let cfg = AppConfig::default();
    let frames = generate(&TaskPreset::builtin("dance").unwrap(), 250.0);
    let events = gate_run(&frames, &cfg.gate_bank()).unwrap();
    let reg = SignalRegistry::from_soundscape(&cfg.soundscape).unwrap();
    let midi = events_to_midi(
        &events,
        &reg,
        &cfg.soundscape,
        cfg.render.tick,
        frames.last().map(|f| f.t),
    )
    .unwrap();
    (cfg, midi)
}

#[test]
fn dance_file_round_trips() {
    let (_, midi) = dance_midi();
    assert!(midi.len() > 40);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dance.mid");
    write_smf(&midi, &path).unwrap();
    let back = read_smf(&path).unwrap();
    assert_eq!(back.len(), midi.len());
    for (a, b) in midi.iter().zip(&back) {
        assert!((a.t - b.t).abs() <= 1.0 / TICKS_PER_SECOND, "{a:?} {b:?}");
        assert_eq!((a.kind, a.channel, a.pitch), (b.kind, b.channel, b.pitch));
    }
    assert_eq!(check_balance(&back), Ok(8));
}

#[test]
fn release_tail_delays_note_off() {
    let (cfg, midi) = dance_midi();
    let frames = generate(&TaskPreset::builtin("dance").unwrap(), 250.0);
    let events = gate_run(&frames, &cfg.gate_bank()).unwrap();
    let first_release = events
        .iter()
        .find(|e| e.kind == music_mode::gate::GateEventKind::Release)
        .unwrap();
    let reg = SignalRegistry::from_soundscape(&cfg.soundscape).unwrap();
    let ch = reg.channel(first_release.joint.name()).unwrap();
    let rate = cfg.soundscape.joints[&first_release.joint].fade_rate;
    let tail = (1000.0 / (rate * 10.0)).ceil() * 0.04;
    let off = midi
        .iter()
        .find(|m| m.channel == ch && m.kind == MidiKind::NoteOff)
        .unwrap();
    assert!((off.t - (first_release.t + tail)).abs() < 1e-9);
}

#[test]
fn seventeenth_signal_is_rejected() {
    let mut reg = SignalRegistry::new();
    for i in 0..16 {
        assert_eq!(reg.register(&format!("s{i}")).unwrap(), i as u8);
    }
    assert!(matches!(reg.register("s16"), Err(MidiError::Capacity(_))));
    reg.unregister("s3");
    assert_eq!(reg.register("late").unwrap(), 3);
}

#[test]
fn bytes_are_stable() {
    let (_, midi) = dance_midi();
    let a = smf_bytes(&midi).unwrap();
    assert_eq!(a, smf_bytes(&midi).unwrap());
    assert_eq!(&a[..4], b"MThd");
    assert_eq!(read_smf_bytes(&a).unwrap().len(), midi.len());
}

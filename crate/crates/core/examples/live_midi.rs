//! Live MIDI: events are emitted frame by frame, NoteOffs after the fade tail.

use music_mode::config::AppConfig;
use music_mode::gate::GateBank;
use music_mode::midibridge::{LiveBridge, SignalRegistry};
use music_mode::sim::{generate, TaskPreset};

fn main() {
    let cfg = AppConfig::default();
    let mut gates: GateBank = cfg.gate_bank();
    let registry = SignalRegistry::from_soundscape(&cfg.soundscape).unwrap();
    let mut bridge = LiveBridge::new(registry, cfg.soundscape.clone(), cfg.render.tick);
    let mut preset = TaskPreset::builtin("navigate").unwrap();
    preset.duration = 10.0;
    let frames = generate(&preset, 250.0);
    let mut out = Vec::new();
    for f in &frames {
        out.extend(bridge.advance(f.t));
        for e in gates.push(f).unwrap() {
            out.extend(bridge.push(&e).unwrap());
        }
    }
    out.extend(bridge.finish(frames.last().unwrap().t));
    for m in out {
        println!(
            "{:>7.3} s  ch {:>2}  {:?} {}",
            m.t, m.channel, m.kind, m.pitch
        );
    }
}

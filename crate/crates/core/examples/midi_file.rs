//! The dance preset as a standard MIDI file, one channel per joint.

use music_mode::config::AppConfig;
use music_mode::gate::gate_run;
use music_mode::midibridge::{events_to_midi, write_smf, SignalRegistry};
use music_mode::sim::{generate, TaskPreset};

fn main() {
    let cfg = AppConfig::default();
    let frames = generate(&TaskPreset::builtin("dance").unwrap(), 250.0);
    let events = gate_run(&frames, &cfg.gate_bank()).unwrap();
    let registry = SignalRegistry::from_soundscape(&cfg.soundscape).unwrap();
    for (ch, name) in registry.entries() {
        println!("channel {ch:>2}: {name}");
    }
    let end = frames.last().map(|f| f.t);
    let midi = events_to_midi(&events, &registry, &cfg.soundscape, cfg.render.tick, end).unwrap();
    write_smf(&midi, "dance.mid".as_ref()).unwrap();
    println!("dance.mid: {} events", midi.len());
}

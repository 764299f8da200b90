//! Early position-to-note mode: torso angle walks the C major scale.

use std::collections::BTreeMap;

use music_mode::soundscape::{angle_to_note, legacy_note_events, ScaleMap};
use music_mode::telemetry::{JointId, TelemetryFrame};

fn main() {
    let map = ScaleMap::default();
    for angle in [60.0, 70.0, 80.0, 90.0, 100.0] {
        let note = angle_to_note(angle, &map);
        println!("{angle:>5} deg -> {note} ({:.2} Hz)", note.frequency());
    }
    let frames: Vec<TelemetryFrame> = (0..=100)
        .map(|i| {
            TelemetryFrame::new(i as f64 * 0.05)
                .with_angle(JointId::Torso, 80.0 + 30.0 * (i as f64 * 0.1).sin())
        })
        .collect();
    let maps = BTreeMap::from([(JointId::Torso, map)]);
    for n in legacy_note_events(&frames, &maps) {
        println!("{:>5.2} s  {}", n.t, n.note);
    }
}

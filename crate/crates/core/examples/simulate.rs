//! Built-in task presets as JSON-lines telemetry.

use music_mode::sim::{generate, TaskPreset};
use music_mode::telemetry::{to_jsonl, JointId};

fn main() {
    for name in TaskPreset::builtin_names() {
        let preset = TaskPreset::builtin(name).unwrap();
        let frames = generate(&preset, 250.0);
        let moving: Vec<&str> = JointId::ALL
            .iter()
            .filter(|j| {
                frames
                    .iter()
                    .any(|f| f.velocity(**j).unwrap_or(0.0).abs() >= 0.05)
            })
            .map(|j| j.name())
            .collect();
        let text = to_jsonl(Some(&preset.header(250.0)), &frames);
        std::fs::write(format!("{name}.jsonl"), &text).unwrap();
        println!(
            "{name}: {} frames, {} bytes, moving {moving:?}",
            frames.len(),
            text.len()
        );
    }
}

//! Offline render of the wipe preset to a WAV file.
//!
//! cargo run --example render_wav -- [out.wav]

use music_mode::config::AppConfig;
use music_mode::render::{render_offline, write_wav, Scape};
use music_mode::sim::{generate, TaskPreset};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "wipe.wav".into());
    let cfg = AppConfig::default();
    let scape = Scape::load(
        cfg.soundscape.clone(),
        cfg.gate_bank(),
        cfg.render.sample_rate,
    )
    .unwrap();
    let frames = generate(&TaskPreset::builtin("wipe").unwrap(), 250.0);
    let result = render_offline(&frames, &scape, &cfg.render).unwrap();
    write_wav(&result.buffer, out.as_ref()).unwrap();
    println!(
        "{out}: {:.2} s, peak {:.3}, triggers {:?}",
        result.buffer.duration(),
        result.buffer.peak(),
        result.triggers_per_joint()
    );
}

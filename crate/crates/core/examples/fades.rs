//! Fade classes after release, with the speaker level at each step.

use music_mode::envelope::{percent_to_db, Envelope, FadeClass, SplLevel, VolumeAnchors};

fn main() {
    let anchors = VolumeAnchors::default();
    for rate in [FadeClass::FAST, FadeClass::MEDIUM, FadeClass::SLOW] {
        let fade = FadeClass::with_rate(rate).unwrap();
        let mut env = Envelope::new(fade);
        env.trigger();
        env.release();
        let mut steps = Vec::new();
        while !env.volume.is_silent() {
            env = env.tick();
            steps.push(env.volume.percent());
        }
        let db = match percent_to_db(steps[0], &anchors).unwrap() {
            SplLevel::Db(d) => format!("{d:.2} dB"),
            SplLevel::BelowCalibration => "below calibration".into(),
        };
        println!(
            "{rate}% per tick: first step {}% ({db}), silent after {} ticks ({:.2} s)",
            steps[0],
            steps.len(),
            steps.len() as f64 * fade.tick()
        );
    }
}

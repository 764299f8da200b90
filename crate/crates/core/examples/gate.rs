//! Threshold and debounce on a synthetic square pulse.

use music_mode::gate::{gate_run, GateBank, GateConfig};
use music_mode::telemetry::{JointId, TelemetryFrame};

fn main() {
    let frames: Vec<TelemetryFrame> = (0..750)
        .map(|i| {
            let t = i as f64 * 0.004;
            let v = match t {
                t if (0.5..0.53).contains(&t) => 0.3, // too short
                t if (1.0..2.0).contains(&t) => 0.2,
                _ => 0.0,
            };
            TelemetryFrame::new(t).with(JointId::Torso, v)
        })
        .collect();
    let cfg = GateConfig::default();
    println!(
        "threshold {} rad/s, debounce {} s",
        cfg.threshold, cfg.debounce
    );
    for e in gate_run(&frames, &GateBank::uniform(cfg)).unwrap() {
        println!("{:>7.3} s  {:?} {:?}", e.t, e.joint, e.kind);
    }
}

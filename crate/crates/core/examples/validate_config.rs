//! Load a configuration, apply overrides and print warnings and the hash.

use music_mode::config::{AppConfig, Overrides};

const TEXT: &str = r#"{
  "mode": "robotic",
  "gate": { "threshold_rad_s": 0.06 },
  "fade": { "per_joint": { "wrist": { "rate_percent": 1.5 } } }
}"#;

fn main() {
    let overrides = Overrides {
        master_percent: Some(80.0),
        ..Default::default()
    };
    let cfg = AppConfig::parse(TEXT, None, &overrides).unwrap();
    for w in cfg.validate().unwrap() {
        println!("warning: {w}");
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&cfg.effective()).unwrap()
    );
    println!("hash {}", cfg.hash());

    match AppConfig::from_json(r#"{"gate": {"threshold_rad_s": -1}}"#).and_then(|c| c.validate()) {
        Ok(_) => println!("unexpectedly valid"),
        Err(e) => println!("rejected: {e}"),
    }
}

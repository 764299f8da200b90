//! Movement-decoupled triggers from a seeded Poisson process.

use music_mode::soundscape::{empirical_rates, random_schedule, schedule_to_jsonl, RandomConfig};
use music_mode::telemetry::JointId;

fn main() {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(7);
    let cfg = RandomConfig {
        seed,
        ..Default::default()
    };
    let events = random_schedule(60.0, JointId::ALL, &cfg).unwrap();
    print!("{}", schedule_to_jsonl(&events[..6.min(events.len())]));
    for (j, r) in empirical_rates(&events, 60.0) {
        println!("{:>9}: {r:.3} /s", j.name());
    }
}

//! Movement sonification for robot joint telemetry.
//!
//! Joint velocities pass through a per-joint threshold/debounce gate; gate
//! events either drive a sample mixer with linear fade-outs (the on-robot
//! flow, see [`render`]) or become MIDI notes for an external synthesizer
//! (the off-robot flow, see [`midibridge`]).

pub mod cli;
pub mod config;
pub mod envelope;
pub mod gate;
pub mod midibridge;
pub mod render;
pub mod sim;
pub mod soundscape;
pub mod telemetry;

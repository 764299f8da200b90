//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use music_mode::envelope::{effective_percent, percent_to_gain, Volume, VolumeAnchors};
use music_mode::soundscape::{Note, SampleBank, ScaleMap};
use music_mode::telemetry::{JointId, TelemetryFrame};

pub const EPS: f64 = 1e-9;

/// What the brute-force gate reports for one joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub trigger: f64,
    /// `None` while still active at the end of the data.
    pub release: Option<f64>,
}

/// Trigger/release spans by direct inspection of the samples: a trigger is
/// the first sample of an above-threshold run that lies `debounce` after the
/// run's first sample; the release is the first sample below threshold.
/// Frames without the joint carry no sample and are skipped.
pub fn brute_force_gate(
    frames: &[TelemetryFrame],
    joint: JointId,
    threshold: f64,
    debounce: f64,
) -> Vec<Span> {
    let series: Vec<(f64, f64)> = frames
        .iter()
        .filter_map(|f| f.velocity(joint).map(|v| (f.t, v)))
        .collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < series.len() {
        if series[i].1 < threshold {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i;
        while end < series.len() && series[end].1 >= threshold {
            end += 1;
        }
        let run_start = series[start].0;
        if let Some(k) = (start..end).find(|&k| series[k].0 - run_start >= debounce - EPS) {
            spans.push(Span {
                trigger: series[k].0,
                release: series.get(end).map(|s| s.0),
            });
        }
        i = end;
    }
    spans
}

/// Ticks from 100% to silence for a fade rate given in tenths of a percent.
pub fn ticks_to_silence(rate_tenths: u32) -> u32 {
    1000u32.div_ceil(rate_tenths)
}

/// Note reached by walking `steps` scale degrees from the root.
pub fn scale_walk(map: &ScaleMap, steps: i64) -> i64 {
    let mut note = i64::from(map.root.midi());
    let in_scale = |n: i64| {
        let off = (n - i64::from(map.root.midi())).rem_euclid(12) as u8;
        map.pattern.contains(&off)
    };
    let mut left = steps;
    while left > 0 {
        note += 1;
        while !in_scale(note) {
            note += 1;
        }
        left -= 1;
    }
    while left < 0 {
        note -= 1;
        while !in_scale(note) {
            note -= 1;
        }
        left += 1;
    }
    note
}

pub fn next_degree(map: &ScaleMap, note: Note) -> i64 {
    let off = |n: i64| (n - i64::from(map.root.midi())).rem_euclid(12) as u8;
    let mut n = i64::from(note.midi()) + 1;
    while !map.pattern.contains(&off(n)) {
        n += 1;
    }
    n
}

/// Inputs to [`reference_render`].
pub struct RefSetup<'a> {
    pub bank: &'a SampleBank,
    pub rates_tenths: BTreeMap<JointId, u32>,
    pub sample_rate: u32,
    pub tick: f64,
    pub headroom: f32,
    pub master: f64,
    pub anchors: VolumeAnchors,
    pub threshold: f64,
    pub debounce: f64,
}

/// Per-sample renderer with no running state: each output sample is
/// recomputed from the span list alone.
pub fn reference_render(frames: &[TelemetryFrame], s: &RefSetup) -> Vec<f32> {
    let sr = f64::from(s.sample_rate);
    let at = |t: f64| (t * sr).round() as u64;
    let tick = (s.tick * sr).round() as u64;
    let end_t = frames.last().map_or(0.0, |f| f.t);
    let end = at(end_t);

    struct Episode {
        start: u64,
        on: u64,
        off: u64,
        zero: u64,
    }
    // per joint: list of (trigger sample, release sample, silent-from sample, episode start)
    let mut voices: Vec<(JointId, u32, Vec<Episode>)> = Vec::new();
    let mut len = end;
    for j in JointId::ALL {
        let Some(&rate) = s.rates_tenths.get(&j) else {
            continue;
        };
        let spans = brute_force_gate(frames, j, s.threshold, s.debounce);
        let mut eps: Vec<Episode> = Vec::new();
        for sp in spans {
            let on = at(sp.trigger);
            let off = at(sp.release.unwrap_or(end_t));
            let zero = off + u64::from(ticks_to_silence(rate)) * tick;
            // a trigger landing on or before the last fade step keeps the phase running
            let start = match eps.last() {
                Some(prev) if prev.zero >= on => prev.start,
                _ => on,
            };
            eps.push(Episode {
                start,
                on,
                off,
                zero,
            });
            len = len.max(zero);
        }
        voices.push((j, rate, eps));
    }

    (0..len)
        .map(|n| {
            let mut acc = 0.0f32;
            for (j, rate, eps) in &voices {
                let Some(e) = eps.iter().rev().find(|e| e.on <= n) else {
                    continue;
                };
                let tenths = if n < e.off {
                    1000
                } else {
                    let steps = (n - e.off) / tick;
                    1000u64.saturating_sub(u64::from(*rate) * steps) as u16
                };
                if tenths == 0 {
                    continue;
                }
                let pct = effective_percent(Volume::from_tenths(tenths), s.master);
                let gain = percent_to_gain(pct, &s.anchors).unwrap() as f32;
                let buf = &s.bank.get(*j).unwrap().samples;
                let phase = ((n - e.start) % buf.len() as u64) as usize;
                acc += gain * buf[phase];
            }
            (s.headroom * acc).clamp(-1.0, 1.0)
        })
        .collect()
}

//! Synthetic CSI amplitude traces and their CSV form.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUBCARRIERS: usize = 52;

#[derive(Clone, Debug, PartialEq)]
pub struct CsiSample {
    /// Seconds.
    pub t: f64,
    pub amp: [f64; SUBCARRIERS],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsiTrace {
    pub samples: Vec<CsiSample>,
}

impl CsiTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn subcarrier(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.amp[k]).collect()
    }

    pub fn duration_s(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Checks the trace invariants: strictly increasing time, finite
    /// non-negative amplitudes.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            check_sample(s, i as u64 + 1)?;
            if i > 0 && s.t <= self.samples[i - 1].t {
                return Err(non_monotone(i as u64 + 1, self.samples[i - 1].t, s.t));
            }
        }
        Ok(())
    }
}

fn non_monotone(line: u64, prev: f64, t: f64) -> Error {
    Error::TraceParse {
        line,
        msg: format!("timestamp {t} does not increase after {prev}"),
    }
}

fn check_sample(s: &CsiSample, line: u64) -> Result<()> {
    if !s.t.is_finite() {
        return Err(Error::TraceParse {
            line,
            msg: format!("timestamp {} is not finite", s.t),
        });
    }
    if let Some((k, a)) = s.amp.iter().enumerate().find(|(_, a)| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::TraceParse {
            line,
            msg: format!("sub_{k} amplitude {a} must be finite and non-negative"),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Person {
    pub rate_bpm: f64,
    #[serde(default = "default_distance")]
    pub distance_m: f64,
    /// `[start_s, end_s)` spans when the person is near the device. Empty
    /// means present throughout.
    #[serde(default)]
    pub present: Vec<(f64, f64)>,
    /// Overrides the seeded per-subcarrier sensitivity.
    #[serde(default)]
    pub sensitivity: Option<Vec<f64>>,
}

fn default_distance() -> f64 {
    0.5
}

impl Person {
    pub fn new(rate_bpm: f64) -> Self {
        Person {
            rate_bpm,
            distance_m: default_distance(),
            present: Vec::new(),
            sensitivity: None,
        }
    }

    pub fn at(mut self, distance_m: f64) -> Self {
        self.distance_m = distance_m;
        self
    }

    fn is_present(&self, t: f64) -> bool {
        self.present.is_empty() || self.present.iter().any(|&(a, b)| t >= a && t < b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BreathScenario {
    pub persons: Vec<Person>,
    /// Packets per second.
    pub packet_rate: f64,
    /// Mean of the exponential per-packet delay, seconds. Zero gives a
    /// uniform grid.
    pub jitter_mean_s: f64,
    pub noise_sigma: f64,
    pub baseline: f64,
    /// Modulation depth at zero distance.
    pub depth: f64,
    /// Distance where the modulation envelope reaches zero.
    pub cutoff_m: f64,
    pub duration_s: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for BreathScenario {
    fn default() -> Self {
        BreathScenario {
            persons: Vec::new(),
            packet_rate: 10.0,
            jitter_mean_s: 0.02,
            noise_sigma: 1.0,
            baseline: 20.0,
            depth: 2.0,
            cutoff_m: 1.4,
            duration_s: 120.0,
            seed: 0,
        }
    }
}

impl BreathScenario {
    pub fn with_person(rate_bpm: f64) -> Self {
        BreathScenario {
            persons: vec![Person::new(rate_bpm)],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.packet_rate > 0.0 && self.packet_rate.is_finite()) {
            return bad(format!("packet_rate must be > 0, got {}", self.packet_rate));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration_s must be > 0, got {}", self.duration_s));
        }
        if !(self.jitter_mean_s >= 0.0 && self.noise_sigma >= 0.0 && self.depth >= 0.0) {
            return bad("jitter_mean_s, noise_sigma and depth must be >= 0".into());
        }
        if !(self.cutoff_m > 0.0) {
            return bad(format!("cutoff_m must be > 0, got {}", self.cutoff_m));
        }
        for p in &self.persons {
            if !(p.rate_bpm > 0.0 && p.rate_bpm < 120.0) {
                return bad(format!("breathing rate must be in (0, 120) bpm, got {}", p.rate_bpm));
            }
            if !(p.distance_m >= 0.0) {
                return bad(format!("distance must be >= 0, got {}", p.distance_m));
            }
            if let Some(g) = &p.sensitivity {
                if g.len() != SUBCARRIERS || g.iter().any(|x| !(*x >= 0.0)) {
                    return bad(format!("sensitivity needs {SUBCARRIERS} non-negative gains"));
                }
            }
        }
        Ok(())
    }

    /// Linear envelope, zero at and beyond the cutoff.
    pub fn envelope(&self, distance_m: f64) -> f64 {
        self.depth * (1.0 - distance_m / self.cutoff_m).clamp(0.0, 1.0)
    }
}

/// Mostly weak gains with a handful of strong subcarriers.
pub fn random_sensitivity<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    let mut g: Vec<f64> = (0..SUBCARRIERS).map(|_| 0.05 + 0.15 * rng.random::<f64>()).collect();
    for _ in 0..6 {
        let k = rng.random_range(0..SUBCARRIERS);
        g[k] = 0.6 + 0.4 * rng.random::<f64>();
    }
    g
}

/// amp_k(t) = baseline + sum over persons of g_k A(d) sin(2 pi f t + phi_k),
/// plus noise, clamped at zero. Timestamps are the nominal grid plus an
/// exponential delay, re-sorted.
pub fn synthesize_trace(scenario: &BreathScenario) -> Result<CsiTrace> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    struct Source {
        freq: f64,
        amp: f64,
        gain: Vec<f64>,
        phase: Vec<f64>,
    }
    let sources: Vec<Source> = scenario
        .persons
        .iter()
        .map(|p| {
            let seeded = random_sensitivity(&mut rng);
            let phase = (0..SUBCARRIERS).map(|_| TAU * rng.random::<f64>()).collect();
            Source {
                freq: p.rate_bpm / 60.0,
                amp: scenario.envelope(p.distance_m),
                gain: p.sensitivity.clone().unwrap_or(seeded),
                phase,
            }
        })
        .collect();

    let n = (scenario.duration_s * scenario.packet_rate).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| k as f64 / scenario.packet_rate).collect();
    if scenario.jitter_mean_s > 0.0 {
        let exp = Exp::new(1.0 / scenario.jitter_mean_s).map_err(|e| Error::Config(e.to_string()))?;
        for t in &mut times {
            *t += exp.sample(&mut rng);
        }
        times.sort_by(f64::total_cmp);
        for i in 1..times.len() {
            if times[i] <= times[i - 1] {
                times[i] = times[i - 1] + 1e-6;
            }
        }
    }

    let noise = Normal::new(0.0, scenario.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let samples = times
        .into_iter()
        .map(|t| {
            let mut amp = [scenario.baseline; SUBCARRIERS];
            for (src, person) in sources.iter().zip(&scenario.persons) {
                if src.amp == 0.0 || !person.is_present(t) {
                    continue;
                }
                for (k, a) in amp.iter_mut().enumerate() {
                    *a += src.gain[k] * src.amp * (TAU * src.freq * t + src.phase[k]).sin();
                }
            }
            for a in &mut amp {
                *a = (*a + noise.sample(&mut rng)).max(0.0);
            }
            CsiSample { t, amp }
        })
        .collect();
    Ok(CsiTrace { samples })
}

fn header() -> Vec<String> {
    std::iter::once("t_s".to_string())
        .chain((0..SUBCARRIERS).map(|k| format!("sub_{k}")))
        .collect()
}

/// CSV with a `t_s,sub_0,..,sub_51` header. Floats use the shortest
/// representation that reads back exactly.
pub fn write_trace<W: Write>(trace: &CsiTrace, sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(header())?;
    let mut row = Vec::with_capacity(SUBCARRIERS + 1);
    for s in &trace.samples {
        row.clear();
        row.push(s.t.to_string());
        row.extend(s.amp.iter().map(|a| a.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_trace<R: Read>(source: R) -> Result<CsiTrace> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut samples: Vec<CsiSample> = Vec::new();
    let mut saw_header = false;
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if !saw_header {
            saw_header = true;
            let expected = header();
            if rec.iter().ne(expected.iter().map(String::as_str)) {
                return Err(Error::TraceParse {
                    line,
                    msg: format!("expected header t_s,sub_0,...,sub_{}", SUBCARRIERS - 1),
                });
            }
            continue;
        }
        if rec.len() != SUBCARRIERS + 1 {
            return Err(Error::TraceParse {
                line,
                msg: format!("expected {} columns, found {}", SUBCARRIERS + 1, rec.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| Error::TraceParse {
                line,
                msg: format!("column {} is not a number: {:?}", i + 1, &rec[i]),
            })
        };
        let t = num(0)?;
        let mut amp = [0.0; SUBCARRIERS];
        for (k, a) in amp.iter_mut().enumerate() {
            *a = num(k + 1)?;
        }
        let sample = CsiSample { t, amp };
        check_sample(&sample, line)?;
        if let Some(prev) = samples.last() {
            if t <= prev.t {
                return Err(non_monotone(line, prev.t, t));
            }
        }
        samples.push(sample);
    }
    if !saw_header {
        return Err(Error::TraceParse {
            line: 1,
            msg: "empty trace file".into(),
        });
    }
    Ok(CsiTrace { samples })
}

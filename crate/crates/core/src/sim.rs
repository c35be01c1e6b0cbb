//! Event-driven run of one attacker against a set of stations.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attacker::{plan_keep_awake, AttackConfig, QueryRate, TargetModel};
use crate::energy::DeviceProfile;
use crate::error::{Error, Result};
use crate::frames::{airtime_us, bytes_airtime_us, Frame, FrameKind, Mac, PhyTiming, TimBitmap};
use crate::medium::{deliver, EventQueue, ReplyRateTable};
use crate::station::{
    EnergyLedger, EnergyReport, Outgoing, PowerState, StationConfig, StationDiagnostics, StationState,
};

/// Bin width for the response coverage metric.
pub const RESPONSE_BIN_US: u64 = 100_000;
/// Answered share of queries at or above which the response stream counts
/// as continuous.
pub const CONTINUOUS_RATIO: f64 = 0.9;
/// Answered share below which the response stream counts as sparse.
pub const SPARSE_RATIO: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub phy: PhyTiming,
    pub reply_rate: ReplyRateTable,
    pub stations: Vec<StationConfig>,
    pub attacker: AttackConfig,
    pub device: DeviceProfile,
    pub duration_us: u64,
    pub seed: u64,
}

impl SimConfig {
    /// Every MAC the scenario refers to must belong to a station.
    pub fn validate(&self) -> Result<()> {
        self.attacker.validate()?;
        self.device.validate()?;
        let macs: BTreeMap<Mac, usize> = self.stations.iter().enumerate().map(|(i, s)| (s.mac, i)).collect();
        if macs.len() != self.stations.len() {
            return Err(Error::Config("station MAC addresses must be unique".into()));
        }
        if !macs.contains_key(&self.attacker.target) {
            return Err(Error::Config(format!(
                "attacker.target {} does not match any station",
                self.attacker.target
            )));
        }
        for (i, s) in self.stations.iter().enumerate() {
            if let Some(ap) = s.ap_mac {
                let ok = ap == s.mac || macs.get(&ap).is_some_and(|&j| self.stations[j].is_ap);
                if !ok {
                    return Err(Error::Config(format!(
                        "station[{i}].ap_mac {ap} does not match any access point"
                    )));
                }
            }
            if let Some(m) = s.associated.iter().find(|m| !macs.contains_key(m)) {
                return Err(Error::Config(format!(
                    "station[{i}].associated {m} does not match any station"
                )));
            }
            if !(s.distance_m >= 0.0) {
                return Err(Error::Config(format!("station[{i}].distance_m must be >= 0")));
            }
            if !s.is_ap && s.listen_interval_us == 0 {
                return Err(Error::Config(format!("station[{i}].listen_interval_us must be > 0")));
            }
        }
        if self.duration_us == 0 {
            return Err(Error::Config("duration must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventRecord {
    pub t_us: u64,
    pub event: &'static str,
    pub station: String,
    pub kind: String,
    pub src: String,
    pub dst: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AwakeRecord {
    pub t_us: u64,
    pub station: String,
    pub awake: u8,
    pub state: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationSummary {
    pub name: String,
    pub mac: Mac,
    pub awake_fraction: f64,
    pub energy: EnergyReport,
    pub ledger: EnergyLedger,
    pub diagnostics: StationDiagnostics,
    pub disconnected_from: Vec<Mac>,
}

/// Queries to the target and the answers that made it back.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ResponseStats {
    pub queries_sent: u64,
    pub queries_delivered: u64,
    pub responses: u64,
    /// `responses / queries_sent`.
    pub response_ratio: f64,
    /// Share of 100 ms bins holding at least one response.
    pub bin_coverage: f64,
    pub longest_gap_us: u64,
    pub continuous: bool,
    pub sparse: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimReport {
    pub seed: u64,
    pub duration_us: u64,
    pub target: Mac,
    pub warnings: Vec<String>,
    pub forged_beacons_sent: u64,
    pub target_stats: ResponseStats,
    pub stations: Vec<StationSummary>,
    #[serde(skip)]
    pub events: Vec<EventRecord>,
    #[serde(skip)]
    pub awake_timeline: Vec<AwakeRecord>,
    /// Every frame put on the air, with its start time.
    #[serde(skip)]
    pub air_log: Vec<(u64, Frame)>,
}

impl SimReport {
    pub fn station(&self, mac: Mac) -> Option<&StationSummary> {
        self.stations.iter().find(|s| s.mac == mac)
    }

    pub fn target(&self) -> &StationSummary {
        self.station(self.target).expect("target validated")
    }
}

#[derive(Debug)]
enum Event {
    /// Attacker query number `k`.
    Query(u64),
    ForgedBeacon(u64),
    /// Access point `ap` starts contending for beacon number `k`.
    ApBeacon {
        ap: usize,
        k: u64,
    },
    /// Frame reaches `to`; `lossy` frames pass through the reply-rate table.
    Arrive {
        to: usize,
        frame: Frame,
        lossy: bool,
    },
    /// A station puts a frame on the air.
    Transmit {
        from: usize,
        frame: Frame,
    },
    Listen(usize),
    Expire(usize),
}

struct World<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    stations: Vec<StationState>,
    by_mac: BTreeMap<Mac, usize>,
    target: usize,
    query: Frame,
    beacon: Option<Frame>,
    beacon_period_us: u64,
    events: Vec<EventRecord>,
    timeline: Vec<AwakeRecord>,
    air_log: Vec<(u64, Frame)>,
    response_times: Vec<u64>,
    queries_sent: u64,
    queries_delivered: u64,
    forged_sent: u64,
}

fn push(q: &mut EventQueue<Event>, at: u64, ev: Event) {
    q.schedule_in(at.saturating_sub(q.now()), ev);
}

fn ceil_us(x: f64) -> u64 {
    x.ceil() as u64
}

impl World<'_> {
    fn name(&self, i: usize) -> String {
        let s = self.stations[i].config();
        if s.name.is_empty() {
            s.mac.to_string()
        } else {
            s.name.clone()
        }
    }

    fn log(&mut self, t_us: u64, event: &'static str, station: Option<usize>, frame: &Frame) {
        let station = station.map(|i| self.name(i)).unwrap_or_default();
        self.events.push(EventRecord {
            t_us,
            event,
            station,
            kind: frame.kind.to_string(),
            src: frame.src.to_string(),
            dst: frame.dst.to_string(),
        });
    }

    /// Records a power transition if `before -> now` crossed awake/asleep.
    fn observe(&mut self, i: usize, before: PowerState, now: u64) {
        let after = self.stations[i].power();
        if before.is_awake() == after.is_awake() && std::mem::discriminant(&before) == std::mem::discriminant(&after) {
            return;
        }
        let t = match before {
            PowerState::Awake { until: Some(u) } | PowerState::AwaitingBeacon { until: u }
                if !after.is_awake() && u <= now =>
            {
                u
            }
            _ => now,
        };
        let name = self.name(i);
        self.timeline.push(AwakeRecord {
            t_us: t,
            station: name,
            awake: after.is_awake() as u8,
            state: after.label(),
        });
    }

    fn schedule_expiry(&self, q: &mut EventQueue<Event>, i: usize) {
        match self.stations[i].power() {
            PowerState::Awake { until: Some(u) } | PowerState::AwaitingBeacon { until: u } => {
                push(q, u, Event::Expire(i))
            }
            _ => {}
        }
    }

    fn airtime(&self, frame: &Frame) -> u64 {
        ceil_us(bytes_airtime_us(frame.on_air_size(), frame.bitrate, &self.cfg.phy).unwrap_or(0.0))
    }

    fn backoff_us(&mut self) -> u64 {
        let phy = &self.cfg.phy;
        let slots = self.rng.random_range(0..=phy.cw_min) as f64;
        ceil_us(phy.difs_us + slots * phy.slot_us)
    }

    /// Attacker frame on the air at `now`: delivered to the addressed
    /// stations through the lossy channel.
    fn attacker_send(&mut self, q: &mut EventQueue<Event>, frame: Frame) {
        let now = q.now();
        self.log(now, "tx", None, &frame);
        self.air_log.push((now, frame.clone()));
        let end = now + self.airtime(&frame);
        let targets: Vec<usize> = if frame.dst.is_broadcast() {
            (0..self.stations.len()).collect()
        } else {
            self.by_mac.get(&frame.dst).copied().into_iter().collect()
        };
        for to in targets {
            push(
                q,
                end,
                Event::Arrive {
                    to,
                    frame: frame.clone(),
                    lossy: true,
                },
            );
        }
    }

    fn station_send(&mut self, q: &mut EventQueue<Event>, from: usize, frame: Frame) {
        let now = q.now();
        self.log(now, "tx", Some(from), &frame);
        self.air_log.push((now, frame.clone()));
        let end = now + self.airtime(&frame);
        if frame.dst == self.cfg.attacker.attacker_mac && frame.kind.is_control() {
            // answers to the attacker's queries
            if from == self.target {
                self.response_times.push(end);
            }
            return;
        }
        let targets: Vec<usize> = if frame.dst.is_broadcast() {
            (0..self.stations.len()).filter(|&i| i != from).collect()
        } else {
            self.by_mac.get(&frame.dst).copied().into_iter().collect()
        };
        for to in targets {
            push(
                q,
                end,
                Event::Arrive {
                    to,
                    frame: frame.clone(),
                    lossy: false,
                },
            );
        }
    }

    fn queue_outgoing(&mut self, q: &mut EventQueue<Event>, from: usize, out: Option<Outgoing>) {
        if let Some(o) = out {
            push(q, o.at_us, Event::Transmit { from, frame: o.frame });
        }
    }

    fn handle(&mut self, q: &mut EventQueue<Event>, ev: Event) {
        let now = q.now();
        let phy = self.cfg.phy.clone();
        match ev {
            Event::Query(k) => {
                self.queries_sent += 1;
                let frame = self.query.clone();
                self.attacker_send(q, frame);
                let next = match self.cfg.attacker.query_rate {
                    QueryRate::Saturate => {
                        let kind = self.query.kind;
                        let rate = self.query.bitrate;
                        let resp = kind.response().expect("validated query kind");
                        let resp_rate = phy.response_bitrate(resp, rate);
                        let busy = airtime_us(kind, rate, &phy).unwrap_or(0.0)
                            + phy.sifs_us
                            + airtime_us(resp, resp_rate, &phy).unwrap_or(0.0);
                        Some(now + ceil_us(busy) + self.backoff_us())
                    }
                    QueryRate::PerSecond(r) if r > 0.0 => Some(((k + 1) as f64 * 1e6 / r).round() as u64),
                    QueryRate::PerSecond(_) => None,
                };
                if let Some(t) = next {
                    push(q, t, Event::Query(k + 1));
                }
            }
            Event::ForgedBeacon(k) => {
                if let Some(frame) = self.beacon.clone() {
                    self.forged_sent += 1;
                    self.attacker_send(q, frame);
                    let t = self.cfg.attacker.first_beacon_us + (k + 1) * self.beacon_period_us;
                    push(q, t, Event::ForgedBeacon(k + 1));
                }
            }
            Event::ApBeacon { ap, k } => {
                let cfg = self.stations[ap].config().clone();
                let frame = Frame::beacon(
                    cfg.mac,
                    Mac::BROADCAST,
                    1.0,
                    cfg.ssid.clone(),
                    TimBitmap::empty(cfg.tim_len),
                );
                let at = now + self.backoff_us();
                push(q, at, Event::Transmit { from: ap, frame });
                let next = cfg.listen_phase_us + (k + 1) * cfg.listen_interval_us;
                push(q, next, Event::ApBeacon { ap, k: k + 1 });
            }
            Event::Transmit { from, frame } => self.station_send(q, from, frame),
            Event::Arrive { to, frame, lossy } => {
                if lossy {
                    let d = self.stations[to].config().distance_m;
                    if !deliver(d, &self.cfg.reply_rate, &mut self.rng) {
                        self.log(now, "lost", Some(to), &frame);
                        return;
                    }
                    if to == self.target && frame.kind == self.query.kind && frame.src == self.query.src {
                        self.queries_delivered += 1;
                    }
                }
                let before = self.stations[to].power();
                self.stations[to].sync(now);
                self.observe(to, before, now);
                if !self.stations[to].is_listening() {
                    self.log(now, "missed", Some(to), &frame);
                    return;
                }
                self.log(now, "rx", Some(to), &frame);
                let before = self.stations[to].power();
                if frame.kind == FrameKind::Beacon {
                    if self.stations[to].config().is_ap {
                        return;
                    }
                    if self.stations[to].suspicion_check(frame.src, now) {
                        self.log(now, "disconnect", Some(to), &frame);
                    }
                    let out = self.stations[to].on_beacon(&frame, now, &phy);
                    self.queue_outgoing(q, to, out);
                } else {
                    let reply = self.stations[to].on_frame(&frame, now, &phy);
                    self.queue_outgoing(q, to, reply.response);
                    self.queue_outgoing(q, to, reply.deauth);
                }
                self.observe(to, before, now);
                self.schedule_expiry(q, to);
            }
            Event::Listen(i) => {
                let before = self.stations[i].power();
                self.stations[i].wake_for_beacon(now);
                self.observe(i, before, now);
                self.schedule_expiry(q, i);
                let next = self.stations[i].next_listen_after(now);
                push(q, next, Event::Listen(i));
            }
            Event::Expire(i) => {
                let before = self.stations[i].power();
                self.stations[i].sync(now);
                self.observe(i, before, now);
            }
        }
    }
}

pub fn simulate(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let stations: Vec<StationState> = cfg.stations.iter().map(|s| StationState::new(s.clone(), 0)).collect();
    let by_mac: BTreeMap<Mac, usize> = cfg.stations.iter().enumerate().map(|(i, s)| (s.mac, i)).collect();
    let target = by_mac[&cfg.attacker.target];

    let target_cfg = &cfg.stations[target];
    let ap_rate = target_cfg
        .ap_mac
        .and_then(|ap| by_mac.get(&ap))
        .filter(|&&j| cfg.stations[j].is_ap && j != target)
        .map_or(0.0, |&j| 1e6 / cfg.stations[j].listen_interval_us as f64);
    let model = TargetModel {
        suspicion: target_cfg.suspicion.clone(),
        awake_timeout_us: target_cfg.awake_timeout_us,
        ap_beacon_rate: ap_rate,
    };
    let plan = plan_keep_awake(&cfg.attacker, &model, &cfg.phy)?;
    let beacon = plan
        .schedule
        .streams
        .iter()
        .find(|s| s.frame.kind == FrameKind::Beacon)
        .map(|s| s.frame.clone());

    let mut world = World {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        stations,
        by_mac,
        target,
        query: cfg.attacker.query_frame(),
        beacon,
        beacon_period_us: cfg.attacker.beacon_period_us,
        events: Vec::new(),
        timeline: Vec::new(),
        air_log: Vec::new(),
        response_times: Vec::new(),
        queries_sent: 0,
        queries_delivered: 0,
        forged_sent: 0,
    };
    for i in 0..world.stations.len() {
        let s = &world.stations[i];
        let name = world.name(i);
        world.timeline.push(AwakeRecord {
            t_us: 0,
            station: name,
            awake: s.power().is_awake() as u8,
            state: s.power().label(),
        });
    }

    let mut q = EventQueue::new();
    let has_queries = !matches!(cfg.attacker.query_rate, QueryRate::PerSecond(r) if r <= 0.0);
    if has_queries {
        push(&mut q, 0, Event::Query(0));
    }
    if world.beacon.is_some() {
        push(&mut q, cfg.attacker.first_beacon_us, Event::ForgedBeacon(0));
    }
    for (i, s) in cfg.stations.iter().enumerate() {
        if s.is_ap {
            push(&mut q, s.listen_phase_us, Event::ApBeacon { ap: i, k: 0 });
        } else {
            push(&mut q, s.listen_phase_us, Event::Listen(i));
        }
    }
    // The run covers [0, duration); events stamped at the end are left undone.
    let t_end = cfg.duration_us;
    q.run_until(t_end - 1, |q, ev| world.handle(q, ev))?;

    for i in 0..world.stations.len() {
        let before = world.stations[i].power();
        world.stations[i].sync(t_end);
        world.observe(i, before, t_end);
    }

    let stats = response_stats(
        &world.response_times,
        world.queries_sent,
        world.queries_delivered,
        t_end,
    );
    let summaries = world
        .stations
        .iter()
        .enumerate()
        .map(|(i, s)| StationSummary {
            name: world.name(i),
            mac: s.mac(),
            awake_fraction: s.ledger().awake_fraction(),
            energy: s.energy_report(&cfg.device),
            ledger: s.ledger().clone(),
            diagnostics: s.diagnostics().clone(),
            disconnected_from: s.disconnected_from().iter().copied().collect(),
        })
        .collect();
    Ok(SimReport {
        seed: cfg.seed,
        duration_us: t_end,
        target: cfg.attacker.target,
        warnings: plan.warnings,
        forged_beacons_sent: world.forged_sent,
        target_stats: stats,
        stations: summaries,
        events: world.events,
        awake_timeline: world.timeline,
        air_log: world.air_log,
    })
}

fn response_stats(times: &[u64], sent: u64, delivered: u64, t_end: u64) -> ResponseStats {
    let bins = t_end.div_ceil(RESPONSE_BIN_US).max(1);
    let mut hit = vec![false; bins as usize];
    for &t in times.iter().filter(|&&t| t < t_end) {
        hit[(t / RESPONSE_BIN_US) as usize] = true;
    }
    let covered = hit.iter().filter(|h| **h).count();
    let mut gap = 0;
    let mut prev = 0;
    for &t in times.iter().chain(std::iter::once(&t_end)) {
        gap = gap.max(t.saturating_sub(prev));
        prev = t;
    }
    let ratio = if sent == 0 {
        0.0
    } else {
        times.len() as f64 / sent as f64
    };
    ResponseStats {
        queries_sent: sent,
        queries_delivered: delivered,
        responses: times.len() as u64,
        response_ratio: ratio,
        bin_coverage: covered as f64 / bins as f64,
        longest_gap_us: gap,
        continuous: sent > 0 && ratio >= CONTINUOUS_RATIO,
        sparse: ratio < SPARSE_RATIO,
    }
}

/// CSV table of `report.events`.
pub fn write_events<W: std::io::Write>(report: &SimReport, sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    for e in &report.events {
        w.serialize(e)?;
    }
    if report.events.is_empty() {
        w.write_record(["t_us", "event", "station", "kind", "src", "dst"])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// CSV of power transitions: `t_us,station,awake,state`.
pub fn write_awake_timeline<W: std::io::Write>(report: &SimReport, sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    for r in &report.awake_timeline {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// One JSON object per station.
pub fn write_ledgers<W: std::io::Write>(report: &SimReport, mut sink: W) -> Result<()> {
    for s in &report.stations {
        serde_json::to_writer(&mut sink, s)?;
        sink.write_all(b"\n").map_err(|e| Error::io("ledger", e))?;
    }
    Ok(())
}

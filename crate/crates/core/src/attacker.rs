//! Attack planning: finding targets from sniffed traffic, keeping a target
//! awake with queries plus forged beacons, and flooding it with queries.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::frames::{encode_tim, Frame, FrameKind, Mac, PhyTiming, TimBitmap};
use crate::medium::{exchange_timing, ExchangeTiming};
use crate::station::{SuspicionPolicy, DEFAULT_AWAKE_TIMEOUT_US, DEFAULT_LISTEN_INTERVAL_US, DEFAULT_TIM_LEN};

pub const DEFAULT_KEEP_AWAKE_PERIOD_US: u64 = 200_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QueryRate {
    /// Back-to-back, one query per exchange cycle.
    Saturate,
    PerSecond(f64),
}

impl fmt::Display for QueryRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryRate::Saturate => f.write_str("saturate"),
            QueryRate::PerSecond(r) => write!(f, "{r}"),
        }
    }
}

impl Serialize for QueryRate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            QueryRate::Saturate => s.serialize_str("saturate"),
            QueryRate::PerSecond(r) => s.serialize_f64(*r),
        }
    }
}

impl<'de> Deserialize<'de> for QueryRate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(r) if r >= 0.0 && r.is_finite() => Ok(QueryRate::PerSecond(r)),
            Raw::Num(r) => Err(serde::de::Error::custom(format!("query rate must be >= 0, got {r}"))),
            Raw::Text(t) if t == "saturate" => Ok(QueryRate::Saturate),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "query rate must be a number or \"saturate\", got {t:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeaconDelivery {
    #[default]
    Unicast,
    Broadcast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpoofedAp {
    pub mac: Mac,
    pub ssid: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub attacker_mac: Mac,
    pub query_kind: FrameKind,
    /// Mbps.
    pub query_bitrate: f64,
    pub query_rate: QueryRate,
    /// Zero disables forged beacons.
    pub beacon_period_us: u64,
    pub beacon_delivery: BeaconDelivery,
    pub beacon_bitrate: f64,
    /// Time of the first forged beacon. Lining it up with the target's TBTT
    /// (known from the AP's beacon timestamps) lets it land in a listen
    /// window.
    pub first_beacon_us: u64,
    pub target: Mac,
    /// `None` sets every TIM bit.
    pub target_aid: Option<u16>,
    pub spoofed_ap: SpoofedAp,
}

impl Default for AttackConfig {
    /// Saturating Null queries with a forged beacon every 200 ms.
    fn default() -> Self {
        AttackConfig {
            beacon_period_us: DEFAULT_KEEP_AWAKE_PERIOD_US,
            ..AttackConfig::new(FrameKind::Null, 1.0)
        }
    }
}

impl AttackConfig {
    pub const DEFAULT_ATTACKER: Mac = Mac([0xaa, 0xbb, 0xbb, 0xbb, 0xbb, 0xbb]);

    /// Saturating query flood, no forged beacons.
    pub fn new(query_kind: FrameKind, query_bitrate: f64) -> Self {
        AttackConfig {
            attacker_mac: Self::DEFAULT_ATTACKER,
            query_kind,
            query_bitrate,
            query_rate: QueryRate::Saturate,
            beacon_period_us: 0,
            beacon_delivery: BeaconDelivery::Unicast,
            beacon_bitrate: 1.0,
            first_beacon_us: 0,
            target: Mac([0x02, 0, 0, 0, 0, 0x01]),
            target_aid: None,
            spoofed_ap: SpoofedAp {
                mac: Mac([0x02, 0, 0, 0, 0, 0xa0]),
                ssid: String::new(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.query_kind {
            FrameKind::Null | FrameKind::Rts | FrameKind::BlockAckRequest | FrameKind::DataWithPayload(_) => {}
            other => return Err(Error::InvalidQueryKind(other)),
        }
        crate::frames::check_bitrate(self.query_bitrate)?;
        crate::frames::check_bitrate(self.beacon_bitrate)?;
        if let QueryRate::PerSecond(r) = self.query_rate {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("query rate must be >= 0, got {r}")));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.query_kind, self.query_bitrate)
    }

    pub fn forged_beacon(&self, tim_len: usize) -> Result<Frame> {
        let tim = match self.target_aid {
            Some(aid) => encode_tim(&[aid].into(), tim_len)?,
            None => TimBitmap::all_ones(tim_len),
        };
        let dst = match self.beacon_delivery {
            BeaconDelivery::Unicast => self.target,
            BeaconDelivery::Broadcast => Mac::BROADCAST,
        };
        Ok(Frame::beacon(
            self.spoofed_ap.mac,
            dst,
            self.beacon_bitrate,
            self.spoofed_ap.ssid.clone(),
            tim,
        ))
    }

    pub fn query_frame(&self) -> Frame {
        Frame::new(self.query_kind, self.attacker_mac, self.target, self.query_bitrate)
    }
}

/// A frame repeated every `period_us` starting at `first_us`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicStream {
    pub first_us: u64,
    pub period_us: f64,
    pub frame: Frame,
}

impl PeriodicStream {
    pub fn at(&self, k: u64) -> u64 {
        self.first_us + (k as f64 * self.period_us).round() as u64
    }
}

/// Immutable transmission plan, a set of periodic streams.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TxSchedule {
    pub streams: Vec<PeriodicStream>,
}

impl TxSchedule {
    /// Every transmission before `t_end`, in time order; ties keep stream order.
    pub fn events_until(&self, t_end: u64) -> Vec<(u64, &Frame)> {
        let mut out = Vec::new();
        for (idx, s) in self.streams.iter().enumerate() {
            let mut k = 0;
            loop {
                let t = s.at(k);
                if t >= t_end {
                    break;
                }
                out.push((t, idx, &s.frame));
                k += 1;
            }
        }
        out.sort_by_key(|(t, idx, _)| (*t, *idx));
        out.into_iter().map(|(t, _, f)| (t, f)).collect()
    }
}

/// What the keep-awake plan assumes about the target.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetModel {
    pub suspicion: SuspicionPolicy,
    pub awake_timeout_us: u64,
    /// Beacons/s the real AP sends under the same source address.
    pub ap_beacon_rate: f64,
}

impl Default for TargetModel {
    fn default() -> Self {
        TargetModel {
            suspicion: SuspicionPolicy::default(),
            awake_timeout_us: DEFAULT_AWAKE_TIMEOUT_US,
            ap_beacon_rate: 1e6 / DEFAULT_LISTEN_INTERVAL_US as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeepAwakePlan {
    pub schedule: TxSchedule,
    pub warnings: Vec<String>,
}

/// Queries at the configured rate interleaved with a forged beacon every
/// `beacon_period_us`. Beacon rates the target would flag as suspicious, or
/// periods longer than its awake timeout, produce warnings.
pub fn plan_keep_awake(config: &AttackConfig, target: &TargetModel, phy: &PhyTiming) -> Result<KeepAwakePlan> {
    config.validate()?;
    let mut streams = Vec::new();
    let mut warnings = Vec::new();

    let query_period = match config.query_rate {
        QueryRate::Saturate => Some(exchange_timing(config.query_kind, config.query_bitrate, phy)?.cycle_us()),
        QueryRate::PerSecond(r) if r > 0.0 => Some(1e6 / r),
        QueryRate::PerSecond(_) => None,
    };
    if let Some(period_us) = query_period {
        streams.push(PeriodicStream {
            first_us: 0,
            period_us,
            frame: config.query_frame(),
        });
    }

    if config.beacon_period_us > 0 {
        let rate = 1e6 / config.beacon_period_us as f64;
        let combined = rate + target.ap_beacon_rate;
        let limit = target.suspicion.max_rate_per_s();
        if combined > limit {
            warnings.push(format!(
                "forged beacons at {rate:.1}/s plus {:.2}/s from the AP exceed the suspicion limit of {limit:.1}/s; the target will disconnect",
                target.ap_beacon_rate
            ));
        }
        if config.beacon_period_us >= target.awake_timeout_us {
            warnings.push(format!(
                "beacon period {} us is not below the awake timeout {} us; the target will doze between beacons",
                config.beacon_period_us, target.awake_timeout_us
            ));
        }
        streams.push(PeriodicStream {
            first_us: config.first_beacon_us,
            period_us: config.beacon_period_us as f64,
            frame: config.forged_beacon(DEFAULT_TIM_LEN)?,
        });
    }
    Ok(KeepAwakePlan {
        schedule: TxSchedule { streams },
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryFlood {
    pub timing: ExchangeTiming,
    pub period_us: f64,
    pub packets_per_s: f64,
}

impl QueryFlood {
    pub fn schedule(&self, kind: FrameKind, bitrate: f64, attacker: Mac, target: Mac) -> TxSchedule {
        TxSchedule {
            streams: vec![PeriodicStream {
                first_us: 0,
                period_us: self.period_us,
                frame: Frame::new(kind, attacker, target, bitrate),
            }],
        }
    }
}

/// Back-to-back queries at the saturation rate `1 / exchange_cycle_us`.
pub fn plan_query_flood(query_kind: FrameKind, bitrate: f64, phy: &PhyTiming) -> Result<QueryFlood> {
    let timing = exchange_timing(query_kind, bitrate, phy)?;
    Ok(QueryFlood {
        timing,
        period_us: timing.cycle_us(),
        packets_per_s: timing.exchanges_per_s(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DiscoveredClient {
    pub mac: Mac,
    pub aid: Option<u16>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DiscoveryResult {
    pub ap_mac: Mac,
    pub ssid: String,
    pub clients: Vec<DiscoveredClient>,
}

/// The beacon an attacker injects to make every dozing client of `ap_mac`
/// announce itself with a Null-function frame.
pub fn probe_beacon(ap_mac: Mac, ssid: &str, bitrate: f64) -> Frame {
    Frame::beacon(
        ap_mac,
        Mac::BROADCAST,
        bitrate,
        ssid,
        TimBitmap::all_ones(DEFAULT_TIM_LEN),
    )
}

/// Learns the AP from its beacons and its clients from data frames they
/// exchange with it. Null-function replies to a probe beacon carry the
/// client's association id.
pub fn discover_targets<'a, I>(sniffed: I) -> Result<DiscoveryResult>
where
    I: IntoIterator<Item = &'a Frame>,
{
    let frames: Vec<&Frame> = sniffed.into_iter().collect();
    let beacon = frames
        .iter()
        .find(|f| f.kind == FrameKind::Beacon)
        .ok_or_else(|| Error::DiscoveryFailed("no beacon observed".into()))?;
    let ap_mac = beacon.src;
    let ssid = beacon.ssid().unwrap_or_default().to_string();

    let mut clients: BTreeMap<Mac, Option<u16>> = BTreeMap::new();
    for f in &frames {
        let is_data = matches!(
            f.kind,
            FrameKind::Null | FrameKind::NullFunction | FrameKind::DataWithPayload(_)
        );
        if !is_data {
            continue;
        }
        let client = if f.dst == ap_mac && f.src != ap_mac {
            f.src
        } else if f.src == ap_mac && !f.dst.is_broadcast() {
            f.dst
        } else {
            continue;
        };
        let entry = clients.entry(client).or_insert(None);
        if entry.is_none() && f.src == client {
            *entry = f.aid();
        }
    }

    let mut seen_aids = BTreeMap::new();
    let clients = clients
        .into_iter()
        .map(|(mac, aid)| {
            let aid = aid.filter(|a| seen_aids.insert(*a, mac).is_none());
            DiscoveredClient { mac, aid }
        })
        .collect();
    Ok(DiscoveryResult { ap_mac, ssid, clients })
}

#[cfg(test)]
mod tests {
    use super::*;

    const AP: Mac = Mac([0x02, 0, 0, 0, 0, 0xa0]);
    const C1: Mac = Mac([0x02, 0, 0, 0, 0, 0x01]);
    const C2: Mac = Mac([0x02, 0, 0, 0, 0, 0x02]);

    #[test]
    fn query_kinds_are_restricted() {
        for k in [FrameKind::Ack, FrameKind::Cts, FrameKind::Beacon, FrameKind::BlockAck] {
            let err = AttackConfig::new(k, 1.0).validate().unwrap_err();
            assert!(matches!(err, Error::InvalidQueryKind(_)));
        }
        assert!(AttackConfig::new(FrameKind::DataWithPayload(64), 1.0)
            .validate()
            .is_ok());
        assert!(AttackConfig::new(FrameKind::Null, 0.0).validate().is_err());
    }

    #[test]
    fn flood_rates() {
        let phy = PhyTiming::band_2_4ghz();
        let slow = plan_query_flood(FrameKind::BlockAckRequest, 1.0, &phy).unwrap();
        assert_eq!(slow.period_us, 1202.0);
        assert_eq!(slow.packets_per_s.round(), 832.0);
        assert!(matches!(
            plan_query_flood(FrameKind::Ack, 1.0, &phy),
            Err(Error::NoResponse(FrameKind::Ack))
        ));
        let sched = slow.schedule(FrameKind::BlockAckRequest, 1.0, AttackConfig::DEFAULT_ATTACKER, C1);
        assert_eq!(sched.events_until(1_000_000).len(), 832);
    }

    #[test]
    fn keep_awake_schedule_interleaves() {
        let phy = PhyTiming::band_2_4ghz();
        let mut cfg = AttackConfig::new(FrameKind::Null, 1.0);
        cfg.query_rate = QueryRate::PerSecond(10.0);
        cfg.beacon_period_us = DEFAULT_KEEP_AWAKE_PERIOD_US;
        cfg.target_aid = Some(3);
        let plan = plan_keep_awake(&cfg, &TargetModel::default(), &phy).unwrap();
        assert!(plan.warnings.is_empty(), "{:?}", plan.warnings);
        let ev = plan.schedule.events_until(1_000_000);
        let beacons: Vec<_> = ev.iter().filter(|(_, f)| f.kind == FrameKind::Beacon).collect();
        assert_eq!(beacons.len(), 5);
        assert_eq!(ev.len(), 15);
        let b = beacons[0].1;
        assert_eq!(b.dst, cfg.target);
        assert_eq!(b.src, cfg.spoofed_ap.mac);
        assert_eq!(b.tim().unwrap().aids(), vec![3]);
        assert!(ev.windows(2).all(|w| w[0].0 <= w[1].0));
        // deterministic
        assert_eq!(plan, plan_keep_awake(&cfg, &TargetModel::default(), &phy).unwrap());
    }

    #[test]
    fn unknown_aid_sets_every_bit() {
        let cfg = AttackConfig {
            beacon_period_us: 1,
            ..AttackConfig::new(FrameKind::Null, 1.0)
        };
        let b = cfg.forged_beacon(256).unwrap();
        assert_eq!(b.tim().unwrap(), &TimBitmap::all_ones(256));
    }

    #[test]
    fn no_beacons_means_queries_only() {
        let phy = PhyTiming::band_2_4ghz();
        let cfg = AttackConfig::new(FrameKind::Null, 1.0);
        let plan = plan_keep_awake(&cfg, &TargetModel::default(), &phy).unwrap();
        assert_eq!(plan.schedule.streams.len(), 1);
    }

    #[test]
    fn flood_rate_warns() {
        let phy = PhyTiming::band_2_4ghz();
        let cfg = AttackConfig {
            beacon_period_us: 10_000,
            ..AttackConfig::new(FrameKind::Null, 1.0)
        };
        let plan = plan_keep_awake(&cfg, &TargetModel::default(), &phy).unwrap();
        assert_eq!(plan.warnings.len(), 1);
        assert!(plan.warnings[0].contains("suspicion"));
        let slow = AttackConfig {
            beacon_period_us: 600_000,
            ..cfg
        };
        let plan = plan_keep_awake(&slow, &TargetModel::default(), &phy).unwrap();
        assert!(plan.warnings[0].contains("awake timeout"));
    }

    #[test]
    fn discovery_from_null_functions() {
        let frames = vec![
            Frame::beacon(AP, Mac::BROADCAST, 1.0, "home", TimBitmap::empty(256)),
            probe_beacon(AP, "home", 1.0),
            Frame::null_function(C2, AP, 1.0, false, Some(2)),
            Frame::null_function(C1, AP, 1.0, false, Some(1)),
        ];
        let d = discover_targets(&frames).unwrap();
        assert_eq!(d.ap_mac, AP);
        assert_eq!(d.ssid, "home");
        assert_eq!(
            d.clients,
            vec![
                DiscoveredClient { mac: C1, aid: Some(1) },
                DiscoveredClient { mac: C2, aid: Some(2) }
            ]
        );
    }

    #[test]
    fn passive_discovery() {
        let frames = vec![
            Frame::beacon(AP, Mac::BROADCAST, 1.0, "home", TimBitmap::empty(256)),
            Frame::new(FrameKind::DataWithPayload(500), AP, C1, 24.0),
            Frame::new(FrameKind::DataWithPayload(60), C2, AP, 24.0),
            Frame::new(FrameKind::Ack, C1, AP, 24.0),
        ];
        let d = discover_targets(&frames).unwrap();
        let macs: Vec<_> = d.clients.iter().map(|c| c.mac).collect();
        assert_eq!(macs, vec![C1, C2]);
        assert!(d.clients.iter().all(|c| c.aid.is_none()));
    }

    #[test]
    fn discovery_needs_a_beacon() {
        let none: Vec<Frame> = vec![];
        assert!(matches!(discover_targets(&none), Err(Error::DiscoveryFailed(_))));
    }

    #[test]
    fn duplicate_aids_are_dropped() {
        let frames = vec![
            Frame::beacon(AP, Mac::BROADCAST, 1.0, "home", TimBitmap::empty(256)),
            Frame::null_function(C1, AP, 1.0, false, Some(1)),
            Frame::null_function(C2, AP, 1.0, false, Some(1)),
        ];
        let d = discover_targets(&frames).unwrap();
        assert_eq!(d.clients[0].aid, Some(1));
        assert_eq!(d.clients[1].aid, None);
    }

    #[test]
    fn query_rate_serde() {
        #[derive(Deserialize)]
        struct W {
            r: QueryRate,
        }
        assert_eq!(toml::from_str::<W>("r = 'saturate'").unwrap().r, QueryRate::Saturate);
        assert_eq!(toml::from_str::<W>("r = 10.0").unwrap().r, QueryRate::PerSecond(10.0));
        assert!(toml::from_str::<W>("r = 'fast'").is_err());
        assert!(toml::from_str::<W>("r = -1.0").is_err());
    }
}

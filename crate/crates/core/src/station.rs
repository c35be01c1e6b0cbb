//! Victim station: acknowledges every unicast frame addressed to it, sleeps
//! between beacon listen instants, wakes for TIM hits, and drops an AP that
//! floods it with beacons. Time spent in each radio state is booked to an
//! [`EnergyLedger`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::energy::{DeviceProfile, TimeFractions};
use crate::frames::{airtime_us, bytes_airtime_us, response_for, Frame, FrameKind, Mac, PhyTiming};

/// Standard TBTT: 100 TU.
pub const DEFAULT_LISTEN_INTERVAL_US: u64 = 102_400;
pub const DEFAULT_AWAKE_TIMEOUT_US: u64 = 500_000;
/// How long a station stays up at a listen instant waiting for its beacon.
pub const DEFAULT_LISTEN_WINDOW_US: u64 = 10_000;
pub const DEFAULT_TIM_LEN: usize = crate::frames::DEFAULT_TIM_BITS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PowerState {
    Asleep,
    /// Up at a listen instant; falls back asleep at `until` unless a beacon
    /// says otherwise.
    AwaitingBeacon {
        until: u64,
    },
    /// `None` means indefinitely (access points).
    Awake {
        until: Option<u64>,
    },
}

impl PowerState {
    pub fn is_awake(&self) -> bool {
        !matches!(self, PowerState::Asleep)
    }

    pub fn label(&self) -> &'static str {
        match self {
            PowerState::Asleep => "asleep",
            PowerState::AwaitingBeacon { .. } => "awaiting_beacon",
            PowerState::Awake { .. } => "awake",
        }
    }
}

/// Beacons from one source beyond `threshold` within `window_us` make the
/// station disconnect from that source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuspicionPolicy {
    pub threshold: u32,
    pub window_us: u64,
}

impl Default for SuspicionPolicy {
    fn default() -> Self {
        SuspicionPolicy {
            threshold: 20,
            window_us: 1_000_000,
        }
    }
}

impl SuspicionPolicy {
    pub fn max_rate_per_s(&self) -> f64 {
        self.threshold as f64 * 1e6 / self.window_us as f64
    }
}

fn default_listen_interval() -> u64 {
    DEFAULT_LISTEN_INTERVAL_US
}
fn default_listen_window() -> u64 {
    DEFAULT_LISTEN_WINDOW_US
}
fn default_awake_timeout() -> u64 {
    DEFAULT_AWAKE_TIMEOUT_US
}
fn default_tim_len() -> usize {
    DEFAULT_TIM_LEN
}
fn default_distance() -> f64 {
    5.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    #[serde(default)]
    pub name: String,
    pub mac: Mac,
    #[serde(default)]
    pub aid: u16,
    /// BSSID whose beacons this station follows; `None` follows any.
    #[serde(default)]
    pub ap_mac: Option<Mac>,
    #[serde(default)]
    pub ssid: String,
    #[serde(default = "default_listen_interval")]
    pub listen_interval_us: u64,
    #[serde(default)]
    pub listen_phase_us: u64,
    #[serde(default = "default_listen_window")]
    pub listen_window_us: u64,
    #[serde(default = "default_awake_timeout")]
    pub awake_timeout_us: u64,
    #[serde(default)]
    pub suspicion: SuspicionPolicy,
    #[serde(default)]
    pub is_ap: bool,
    #[serde(default)]
    pub deauth_on_fake: bool,
    /// Clients of an access point; frames from anyone else are "fake".
    #[serde(default)]
    pub associated: Vec<Mac>,
    #[serde(default = "default_tim_len")]
    pub tim_len: usize,
    /// Distance from the attacker, meters; sets the reply probability.
    #[serde(default = "default_distance")]
    pub distance_m: f64,
}

impl StationConfig {
    pub fn client(mac: Mac, aid: u16, ap_mac: Mac, ssid: impl Into<String>) -> Self {
        StationConfig {
            name: String::new(),
            mac,
            aid,
            ap_mac: Some(ap_mac),
            ssid: ssid.into(),
            listen_interval_us: DEFAULT_LISTEN_INTERVAL_US,
            listen_phase_us: 0,
            listen_window_us: DEFAULT_LISTEN_WINDOW_US,
            awake_timeout_us: DEFAULT_AWAKE_TIMEOUT_US,
            suspicion: SuspicionPolicy::default(),
            is_ap: false,
            deauth_on_fake: false,
            associated: Vec::new(),
            tim_len: DEFAULT_TIM_LEN,
            distance_m: default_distance(),
        }
    }

    pub fn access_point(mac: Mac, ssid: impl Into<String>, associated: Vec<Mac>) -> Self {
        StationConfig {
            ap_mac: Some(mac),
            is_ap: true,
            associated,
            ..Self::client(mac, 0, mac, ssid)
        }
    }
}

/// Microseconds spent in each radio state. `sleep + idle + rx + tx` always
/// equals the time elapsed since the ledger started.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub start_us: u64,
    pub last_us: u64,
    pub sleep_us: u64,
    pub idle_us: u64,
    pub rx_us: u64,
    pub tx_us: u64,
    /// Transmit time already committed but not yet elapsed.
    #[serde(skip)]
    pending_tx_us: u64,
}

impl EnergyLedger {
    pub fn new(start_us: u64) -> Self {
        EnergyLedger {
            start_us,
            last_us: start_us,
            ..Default::default()
        }
    }

    /// Accrues time up to `now`. Committed transmissions are paid first,
    /// whatever the power state.
    pub fn advance(&mut self, now: u64, awake: bool) {
        if now <= self.last_us {
            return;
        }
        let dt = now - self.last_us;
        self.last_us = now;
        let tx = dt.min(self.pending_tx_us);
        self.pending_tx_us -= tx;
        self.tx_us += tx;
        if awake {
            self.idle_us += dt - tx;
        } else {
            self.sleep_us += dt - tx;
        }
    }

    /// Reclassifies up to `us` of already-elapsed idle time as receive time.
    pub fn book_rx(&mut self, us: u64) {
        let moved = us.min(self.idle_us);
        self.idle_us -= moved;
        self.rx_us += moved;
    }

    pub fn book_tx(&mut self, us: u64) {
        self.pending_tx_us += us;
    }

    pub fn elapsed_us(&self) -> u64 {
        self.last_us - self.start_us
    }

    pub fn fractions(&self) -> TimeFractions {
        let total = self.elapsed_us();
        if total == 0 {
            return TimeFractions::default();
        }
        let t = total as f64;
        TimeFractions {
            sleep: self.sleep_us as f64 / t,
            idle: self.idle_us as f64 / t,
            rx: self.rx_us as f64 / t,
            tx: self.tx_us as f64 / t,
        }
    }

    pub fn awake_fraction(&self) -> f64 {
        let total = self.elapsed_us();
        if total == 0 {
            return 0.0;
        }
        1.0 - self.sleep_us as f64 / total as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StationDiagnostics {
    pub responses_sent: u64,
    pub deauths_sent: u64,
    pub null_functions_sent: u64,
    pub malformed_beacons: u64,
    pub ignored_beacons: u64,
    pub foreign_beacons: u64,
    pub missed_while_asleep: u64,
}

/// A frame the station will put on the air at `at_us`.
#[derive(Clone, Debug, PartialEq)]
pub struct Outgoing {
    pub at_us: u64,
    pub frame: Frame,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameReply {
    pub response: Option<Outgoing>,
    pub deauth: Option<Outgoing>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub avg_power_w: f64,
    pub fractions: TimeFractions,
    pub breakdown_w: TimeFractions,
    pub awake_fraction: f64,
    pub elapsed_us: u64,
}

fn ceil_us(us: f64) -> u64 {
    us.ceil() as u64
}

#[derive(Clone, Debug)]
pub struct StationState {
    cfg: StationConfig,
    power: PowerState,
    beacon_log: BTreeMap<Mac, VecDeque<u64>>,
    disconnected_from: BTreeSet<Mac>,
    ledger: EnergyLedger,
    diagnostics: StationDiagnostics,
}

impl StationState {
    /// Clients start asleep, access points awake for good.
    pub fn new(cfg: StationConfig, start_us: u64) -> Self {
        let power = if cfg.is_ap {
            PowerState::Awake { until: None }
        } else {
            PowerState::Asleep
        };
        StationState {
            cfg,
            power,
            beacon_log: BTreeMap::new(),
            disconnected_from: BTreeSet::new(),
            ledger: EnergyLedger::new(start_us),
            diagnostics: StationDiagnostics::default(),
        }
    }

    pub fn config(&self) -> &StationConfig {
        &self.cfg
    }

    pub fn mac(&self) -> Mac {
        self.cfg.mac
    }

    pub fn aid(&self) -> u16 {
        self.cfg.aid
    }

    pub fn power(&self) -> PowerState {
        self.power
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn diagnostics(&self) -> &StationDiagnostics {
        &self.diagnostics
    }

    pub fn disconnected_from(&self) -> &BTreeSet<Mac> {
        &self.disconnected_from
    }

    pub fn is_listening(&self) -> bool {
        self.power.is_awake()
    }

    fn set_power(&mut self, at: u64, power: PowerState) {
        self.ledger.advance(at, self.power.is_awake());
        self.power = power;
    }

    /// Applies any awake or listen deadline that passed before `now` and
    /// accrues the ledger up to `now`.
    pub fn sync(&mut self, now: u64) {
        match self.power {
            PowerState::Awake { until: Some(u) } | PowerState::AwaitingBeacon { until: u } if u <= now => {
                let at = u.max(self.ledger.last_us);
                self.set_power(at, PowerState::Asleep);
            }
            _ => {}
        }
        self.ledger.advance(now, self.power.is_awake());
    }

    /// Receives `frame` at `now` (the end of its airtime) and answers it SIFS
    /// later if it is addressed here. Source address, association and
    /// blacklist state play no part in the answer. An access point configured
    /// with `deauth_on_fake` also deauthenticates unknown senders, after the
    /// acknowledgement.
    pub fn on_frame(&mut self, frame: &Frame, now: u64, phy: &PhyTiming) -> FrameReply {
        self.sync(now);
        if !self.power.is_awake() {
            self.diagnostics.missed_while_asleep += 1;
            return FrameReply::default();
        }
        if let Ok(us) = bytes_airtime_us(frame.on_air_size(), frame.bitrate, phy) {
            self.ledger.book_rx(ceil_us(us));
        }

        let mut reply = FrameReply::default();
        let Some(kind) = response_for(frame, self.cfg.mac) else {
            return reply;
        };
        let rate = phy.response_bitrate(kind, frame.bitrate);
        let resp_us = ceil_us(airtime_us(kind, rate, phy).unwrap_or(0.0));
        let at = now + ceil_us(phy.sifs_us);
        self.ledger.book_tx(resp_us);
        self.diagnostics.responses_sent += 1;
        reply.response = Some(Outgoing {
            at_us: at,
            frame: Frame::new(kind, self.cfg.mac, frame.src, rate),
        });

        let fake = !self.cfg.associated.contains(&frame.src) && frame.src != self.cfg.mac;
        if self.cfg.is_ap && self.cfg.deauth_on_fake && fake {
            let deauth_rate = 1.0;
            let deauth_at = at + resp_us + ceil_us(phy.difs_us);
            self.ledger.book_tx(ceil_us(
                airtime_us(FrameKind::Deauthentication, deauth_rate, phy).unwrap_or(0.0),
            ));
            self.diagnostics.deauths_sent += 1;
            reply.deauth = Some(Outgoing {
                at_us: deauth_at,
                frame: Frame::new(FrameKind::Deauthentication, self.cfg.mac, frame.src, deauth_rate),
            });
        }
        reply
    }

    /// Counts a beacon from `beacon_src` and disconnects from that source
    /// once it exceeds the policy. Returns true when this call disconnected.
    pub fn suspicion_check(&mut self, beacon_src: Mac, now: u64) -> bool {
        if self.disconnected_from.contains(&beacon_src) {
            return false;
        }
        let window = self.cfg.suspicion.window_us;
        let log = self.beacon_log.entry(beacon_src).or_default();
        log.push_back(now);
        while log.front().is_some_and(|t| t + window <= now) {
            log.pop_front();
        }
        if log.len() > self.cfg.suspicion.threshold as usize {
            self.disconnected_from.insert(beacon_src);
            self.beacon_log.remove(&beacon_src);
            return true;
        }
        false
    }

    /// Power-save handling of a beacon received at `now`. A TIM hit keeps the
    /// station up for `awake_timeout_us` and answers with a Null-function
    /// frame (PM = 0). A miss sends a listening station back to sleep but does
    /// not cut short an awake period granted by an earlier hit.
    pub fn on_beacon(&mut self, beacon: &Frame, now: u64, phy: &PhyTiming) -> Option<Outgoing> {
        self.sync(now);
        if !self.power.is_awake() {
            self.diagnostics.missed_while_asleep += 1;
            return None;
        }
        if self.disconnected_from.contains(&beacon.src) {
            self.diagnostics.ignored_beacons += 1;
            return None;
        }
        if self.cfg.ap_mac.is_some_and(|ap| ap != beacon.src) {
            self.diagnostics.foreign_beacons += 1;
            return None;
        }
        let Some(tim) = beacon.tim() else {
            self.diagnostics.malformed_beacons += 1;
            return None;
        };
        if let Ok(us) = bytes_airtime_us(beacon.on_air_size(), beacon.bitrate, phy) {
            self.ledger.book_rx(ceil_us(us));
        }
        if self.cfg.is_ap {
            return None;
        }

        if tim.get(self.cfg.aid).unwrap_or(false) {
            let deadline = now + self.cfg.awake_timeout_us;
            let until = match self.power {
                PowerState::Awake { until: None } => None,
                PowerState::Awake { until: Some(u) } => Some(u.max(deadline)),
                _ => Some(deadline),
            };
            self.set_power(now, PowerState::Awake { until });
            let rate = beacon.bitrate;
            let reply_us = ceil_us(airtime_us(FrameKind::NullFunction, rate, phy).unwrap_or(0.0));
            self.ledger.book_tx(reply_us);
            self.diagnostics.null_functions_sent += 1;
            let at = now + ceil_us(phy.difs_us + phy.expected_backoff_us());
            Some(Outgoing {
                at_us: at,
                frame: Frame::null_function(self.cfg.mac, beacon.src, rate, false, Some(self.cfg.aid)),
            })
        } else {
            if !matches!(self.power, PowerState::Awake { .. }) {
                self.set_power(now, PowerState::Asleep);
            }
            None
        }
    }

    /// Listen instant: an asleep station comes up to catch its beacon.
    pub fn wake_for_beacon(&mut self, now: u64) {
        self.sync(now);
        if self.power == PowerState::Asleep {
            let until = now + self.cfg.listen_window_us;
            self.set_power(now, PowerState::AwaitingBeacon { until });
        }
    }

    /// First listen instant strictly after `now` on the station's TBTT grid.
    pub fn next_listen_after(&self, now: u64) -> u64 {
        let phase = self.cfg.listen_phase_us;
        let interval = self.cfg.listen_interval_us.max(1);
        if now < phase {
            return phase;
        }
        phase + ((now - phase) / interval + 1) * interval
    }

    /// Asleep: the next listen instant. Otherwise the time the current awake
    /// or listening period ends (`u64::MAX` if never).
    pub fn tick_sleep_schedule(&mut self, now: u64) -> u64 {
        self.sync(now);
        match self.power {
            PowerState::Asleep => self.next_listen_after(now),
            PowerState::AwaitingBeacon { until } => until,
            PowerState::Awake { until } => until.unwrap_or(u64::MAX),
        }
    }

    pub fn energy_report(&self, profile: &DeviceProfile) -> EnergyReport {
        let fractions = self.ledger.fractions();
        EnergyReport {
            avg_power_w: profile.power_w(&fractions),
            breakdown_w: profile.breakdown_w(&fractions),
            fractions,
            awake_fraction: self.ledger.awake_fraction(),
            elapsed_us: self.ledger.elapsed_us(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::TimBitmap;

    const AP: Mac = Mac([0x02, 0, 0, 0, 0, 0xa0]);
    const VICTIM: Mac = Mac([0x02, 0, 0, 0, 0, 0x01]);
    const FAKE: Mac = Mac([0xaa, 0xbb, 0xbb, 0xbb, 0xbb, 0xbb]);

    fn awake_victim() -> StationState {
        let mut s = StationState::new(StationConfig::client(VICTIM, 3, AP, "home"), 0);
        s.power = PowerState::Awake { until: None };
        s
    }

    fn beacon(tim: TimBitmap, dst: Mac) -> Frame {
        Frame::beacon(AP, dst, 1.0, "home", tim)
    }

    #[test]
    fn acks_fake_null() {
        let phy = PhyTiming::default();
        let mut s = awake_victim();
        let f = Frame::new(FrameKind::Null, FAKE, VICTIM, 1.0);
        let reply = s.on_frame(&f, 1_000, &phy);
        let resp = reply.response.unwrap();
        assert_eq!(resp.frame.kind, FrameKind::Ack);
        assert_eq!(resp.frame.dst, FAKE);
        assert_eq!(resp.at_us, 1_010);
        assert!(reply.deauth.is_none());
    }

    #[test]
    fn other_destination_only_costs_rx() {
        let phy = PhyTiming::default();
        let mut s = awake_victim();
        let f = Frame::new(FrameKind::Null, FAKE, AP, 1.0);
        let reply = s.on_frame(&f, 1_000, &phy);
        assert_eq!(reply, FrameReply::default());
        assert_eq!(s.ledger().rx_us, 416);
        assert_eq!(s.power(), PowerState::Awake { until: None });
    }

    #[test]
    fn ap_keeps_acking_after_deauths() {
        let phy = PhyTiming::default();
        let mut ap = StationState::new(
            StationConfig {
                deauth_on_fake: true,
                ..StationConfig::access_point(AP, "home", vec![VICTIM])
            },
            0,
        );
        let f = Frame::new(FrameKind::Null, FAKE, AP, 1.0);
        for i in 0..4 {
            let reply = ap.on_frame(&f, 10_000 * (i + 1), &phy);
            assert_eq!(reply.response.unwrap().frame.kind, FrameKind::Ack);
            let deauth = reply.deauth.unwrap();
            assert_eq!(deauth.frame.kind, FrameKind::Deauthentication);
            assert_eq!(deauth.frame.dst, FAKE);
        }
        assert_eq!(ap.diagnostics().deauths_sent, 4);
        // associated clients are not deauthenticated
        let legit = Frame::new(FrameKind::Null, VICTIM, AP, 1.0);
        assert!(ap.on_frame(&legit, 100_000, &phy).deauth.is_none());
    }

    #[test]
    fn tim_hit_wakes_and_replies() {
        let phy = PhyTiming::default();
        for dst in [Mac::BROADCAST, VICTIM] {
            let mut s = StationState::new(StationConfig::client(VICTIM, 3, AP, "home"), 0);
            s.wake_for_beacon(0);
            let out = s.on_beacon(&beacon(TimBitmap::all_ones(256), dst), 700, &phy).unwrap();
            assert_eq!(out.frame.kind, FrameKind::NullFunction);
            assert_eq!(out.frame.pm_bit(), Some(false));
            assert_eq!(out.frame.aid(), Some(3));
            assert_eq!(out.frame.dst, AP);
            assert_eq!(s.power(), PowerState::Awake { until: Some(500_700) });
        }
    }

    #[test]
    fn tim_miss_sleeps() {
        let phy = PhyTiming::default();
        let mut s = StationState::new(StationConfig::client(VICTIM, 3, AP, "home"), 0);
        s.wake_for_beacon(0);
        let tim = crate::frames::encode_tim(&[4].into(), 256).unwrap();
        assert!(s.on_beacon(&beacon(tim, Mac::BROADCAST), 700, &phy).is_none());
        assert_eq!(s.power(), PowerState::Asleep);
    }

    #[test]
    fn tim_miss_does_not_cut_awake_period() {
        let phy = PhyTiming::default();
        let mut s = StationState::new(StationConfig::client(VICTIM, 3, AP, "home"), 0);
        s.wake_for_beacon(0);
        s.on_beacon(&beacon(TimBitmap::all_ones(256), VICTIM), 700, &phy);
        s.on_beacon(&beacon(TimBitmap::empty(256), Mac::BROADCAST), 102_400, &phy);
        assert_eq!(s.power(), PowerState::Awake { until: Some(500_700) });
    }

    #[test]
    fn malformed_beacon_is_counted() {
        let phy = PhyTiming::default();
        let mut s = awake_victim();
        let b = Frame::beacon_without_tim(AP, VICTIM, 1.0, "home");
        assert!(s.on_beacon(&b, 10, &phy).is_none());
        assert_eq!(s.diagnostics().malformed_beacons, 1);
    }

    #[test]
    fn suspicion_thresholds() {
        // 100 beacons/s against 20 per second: blacklisted on the 21st, at 200 ms
        let mut s = awake_victim();
        let hit = (0..100u64).find(|i| s.suspicion_check(FAKE, i * 10_000)).unwrap();
        assert_eq!(hit, 20);
        assert!(s.disconnected_from().contains(&FAKE));

        // 5/s is fine forever
        let mut s = awake_victim();
        assert!((0..300u64).all(|i| !s.suspicion_check(FAKE, i * 200_000)));

        // so is the AP at 10.24/s
        let mut s = awake_victim();
        assert!((0..1000u64).all(|i| !s.suspicion_check(AP, i * DEFAULT_LISTEN_INTERVAL_US)));
    }

    #[test]
    fn blacklisted_source_still_gets_acks() {
        let phy = PhyTiming::default();
        let mut s = awake_victim();
        for i in 0..30 {
            s.suspicion_check(FAKE, i * 1_000);
        }
        assert!(s.disconnected_from().contains(&FAKE));
        let f = Frame::new(FrameKind::BlockAckRequest, FAKE, VICTIM, 1.0);
        assert_eq!(
            s.on_frame(&f, 50_000, &phy).response.unwrap().frame.kind,
            FrameKind::BlockAck
        );
    }

    #[test]
    fn sleep_schedule() {
        let phy = PhyTiming::default();
        let mut s = StationState::new(StationConfig::client(VICTIM, 3, AP, "home"), 0);
        assert_eq!(s.tick_sleep_schedule(0), 102_400);
        s.wake_for_beacon(102_400);
        s.on_beacon(&beacon(TimBitmap::all_ones(256), VICTIM), 103_000, &phy);
        assert_eq!(s.tick_sleep_schedule(200_000), 603_000);
        // no renewal: asleep again after the timeout, back on the grid
        assert_eq!(s.tick_sleep_schedule(650_000), 716_800);
        assert_eq!(s.power(), PowerState::Asleep);
    }

    #[test]
    fn listen_window_expires() {
        let mut s = StationState::new(StationConfig::client(VICTIM, 3, AP, "home"), 0);
        s.wake_for_beacon(0);
        s.sync(DEFAULT_LISTEN_WINDOW_US + 1);
        assert_eq!(s.power(), PowerState::Asleep);
        assert_eq!(s.ledger().idle_us, DEFAULT_LISTEN_WINDOW_US);
        assert_eq!(s.ledger().sleep_us, 1);
    }

    #[test]
    fn ledger_conserves_time() {
        let phy = PhyTiming::default();
        let mut s = StationState::new(StationConfig::client(VICTIM, 3, AP, "home"), 0);
        s.wake_for_beacon(0);
        s.on_beacon(&beacon(TimBitmap::all_ones(256), VICTIM), 700, &phy);
        for i in 0..200 {
            let f = Frame::new(FrameKind::BlockAckRequest, FAKE, VICTIM, 1.0);
            s.on_frame(&f, 1_000 + i * 1_202, &phy);
        }
        s.sync(2_000_000);
        let l = s.ledger();
        assert_eq!(l.sleep_us + l.idle_us + l.rx_us + l.tx_us, 2_000_000);
        assert!(l.tx_us > 0 && l.rx_us > 0 && l.sleep_us > 0);
    }

    #[test]
    fn energy_report_uses_profile() {
        let mut s = awake_victim();
        s.sync(1_000);
        let esp = DeviceProfile {
            sleep_ma: 0.0,
            ..DeviceProfile::esp32()
        };
        let r = s.energy_report(&esp);
        assert!((r.avg_power_w - 0.080 * 3.3).abs() < 1e-12);
        assert_eq!(r.awake_fraction, 1.0);
    }
}

//! Battery-drain model: how a victim's radio time splits under an attack,
//! what that costs in watts, and how long a battery lasts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attacker::{AttackConfig, QueryRate};
use crate::error::{Error, Result};
use crate::frames::{airtime_us, bytes_airtime_us, Frame, FrameKind, Mac, PhyTiming, TimBitmap};
use crate::medium::exchange_timing;
use crate::station::{DEFAULT_LISTEN_INTERVAL_US, DEFAULT_TIM_LEN};

const BUILTIN_LIBRARY: &str = include_str!("../data/library.toml");

/// Radio current draw per state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub rx_ma: f64,
    pub tx_ma: f64,
    pub idle_ma: f64,
    pub sleep_ma: f64,
    pub voltage_v: f64,
    /// Whole-device power (W) under the reference attack (BAR at 1 Mbps,
    /// saturated). When set, other configurations are scaled from it by the
    /// ratio of their radio-model powers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drain_power_w: Option<f64>,
}

impl DeviceProfile {
    /// ESP32 radio: 100 mA receive, 240 mA transmit. Idle is taken as 80% of
    /// receive, supply as 3.3 V.
    pub fn esp32() -> Self {
        DeviceProfile {
            name: "esp32".into(),
            rx_ma: 100.0,
            tx_ma: 240.0,
            idle_ma: 80.0,
            sleep_ma: 0.8,
            voltage_v: 3.3,
            drain_power_w: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = self.tx_ma >= self.rx_ma
            && self.rx_ma >= self.idle_ma
            && self.idle_ma >= self.sleep_ma
            && self.sleep_ma >= 0.0;
        if !ordered {
            return Err(Error::Config(format!(
                "device {}: currents must satisfy tx >= rx >= idle >= sleep >= 0",
                self.name
            )));
        }
        if !(self.voltage_v > 0.0) {
            return Err(Error::Config(format!("device {}: voltage must be positive", self.name)));
        }
        Ok(())
    }

    /// Radio-model average power for a time split.
    pub fn power_w(&self, f: &TimeFractions) -> f64 {
        let ma = self.sleep_ma * f.sleep + self.idle_ma * f.idle + self.rx_ma * f.rx + self.tx_ma * f.tx;
        ma / 1000.0 * self.voltage_v
    }

    pub fn breakdown_w(&self, f: &TimeFractions) -> TimeFractions {
        let w = |ma: f64, frac: f64| ma / 1000.0 * self.voltage_v * frac;
        TimeFractions {
            sleep: w(self.sleep_ma, f.sleep),
            idle: w(self.idle_ma, f.idle),
            rx: w(self.rx_ma, f.rx),
            tx: w(self.tx_ma, f.tx),
        }
    }
}

/// Share of time (or, from [`DeviceProfile::breakdown_w`], of power) in each
/// radio state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeFractions {
    pub sleep: f64,
    pub idle: f64,
    pub rx: f64,
    pub tx: f64,
}

impl TimeFractions {
    pub fn total(&self) -> f64 {
        self.sleep + self.idle + self.rx + self.tx
    }

    pub fn awake(&self) -> f64 {
        self.idle + self.rx + self.tx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    pub name: String,
    pub voltage_v: f64,
    pub capacity_wh: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DrainReport {
    pub device: String,
    pub battery: String,
    pub query: FrameKind,
    pub bitrate_mbps: f64,
    pub avg_power_w: f64,
    pub time_fractions: TimeFractions,
    pub power_breakdown_w: TimeFractions,
    pub drain_fraction: f64,
    pub minutes: f64,
    pub hours: f64,
}

/// Where the victim's time goes under `config`, assuming the attack keeps it
/// awake. Each saturated exchange contributes its query airtime to receive
/// and its response airtime to transmit; forged beacons and the victim's
/// Null-function replies take their share of the channel first.
pub fn victim_airtime(config: &AttackConfig, phy: &PhyTiming) -> Result<TimeFractions> {
    config.validate()?;
    let beacons_per_s = if config.beacon_period_us > 0 {
        1e6 / config.beacon_period_us as f64
    } else {
        0.0
    };
    let queries_on = !matches!(config.query_rate, QueryRate::PerSecond(r) if r <= 0.0);
    if !queries_on && beacons_per_s == 0.0 {
        return idle_schedule(phy, &config.spoofed_ap.ssid);
    }

    let beacon = Frame::beacon(
        config.spoofed_ap.mac,
        config.target,
        config.beacon_bitrate,
        config.spoofed_ap.ssid.clone(),
        TimBitmap::all_ones(DEFAULT_TIM_LEN),
    );
    let beacon_us = bytes_airtime_us(beacon.on_air_size(), config.beacon_bitrate, phy)?;
    let reply_us = airtime_us(FrameKind::NullFunction, config.beacon_bitrate, phy)?;
    let beacon_busy_us = beacons_per_s * (phy.difs_us + phy.expected_backoff_us() + beacon_us + phy.sifs_us + reply_us);
    if beacon_busy_us >= 1e6 {
        return Err(Error::Config(format!(
            "beacon period {} us leaves no airtime for queries",
            config.beacon_period_us
        )));
    }

    let ex = exchange_timing(config.query_kind, config.query_bitrate, phy)?;
    let saturated = (1e6 - beacon_busy_us) / ex.cycle_us();
    let queries_per_s = match config.query_rate {
        QueryRate::Saturate => saturated,
        QueryRate::PerSecond(r) => r.max(0.0).min(saturated),
    };

    let rx = (queries_per_s * ex.query_us + beacons_per_s * beacon_us) / 1e6;
    let tx = (queries_per_s * ex.response_us + beacons_per_s * reply_us) / 1e6;
    Ok(TimeFractions {
        sleep: 0.0,
        idle: 1.0 - rx - tx,
        rx,
        tx,
    })
}

/// No attack: the station wakes once per listen interval, waits out the AP's
/// channel access, receives its beacon and goes back to sleep.
fn idle_schedule(phy: &PhyTiming, ssid: &str) -> Result<TimeFractions> {
    let beacon = Frame::beacon(
        Mac::default(),
        Mac::BROADCAST,
        1.0,
        ssid,
        TimBitmap::empty(DEFAULT_TIM_LEN),
    );
    let beacon_us = bytes_airtime_us(beacon.on_air_size(), 1.0, phy)?;
    let interval = DEFAULT_LISTEN_INTERVAL_US as f64;
    let idle = (phy.difs_us + phy.expected_backoff_us()) / interval;
    let rx = beacon_us / interval;
    Ok(TimeFractions {
        sleep: 1.0 - idle - rx,
        idle,
        rx,
        tx: 0.0,
    })
}

/// The configuration every fitted drain power refers to.
pub fn reference_attack() -> AttackConfig {
    AttackConfig::new(FrameKind::BlockAckRequest, 1.0)
}

/// Average device power under `config`. Devices with a fitted drain power are
/// scaled from the reference attack; others use the radio model directly.
pub fn attack_power_w(device: &DeviceProfile, config: &AttackConfig, phy: &PhyTiming) -> Result<f64> {
    let model = device.power_w(&victim_airtime(config, phy)?);
    match device.drain_power_w {
        None => Ok(model),
        Some(reference_w) => {
            let reference = device.power_w(&victim_airtime(&reference_attack(), phy)?);
            Ok(reference_w * model / reference)
        }
    }
}

pub fn drain_time_minutes(battery: &BatterySpec, avg_power_w: f64, fraction: f64) -> Result<f64> {
    if !(avg_power_w > 0.0) || !avg_power_w.is_finite() {
        return Err(Error::Config(format!(
            "drain power must be positive, got {avg_power_w} W"
        )));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "drain fraction must be in (0, 1], got {fraction}"
        )));
    }
    Ok(fraction * battery.capacity_wh / avg_power_w * 60.0)
}

/// Power implied by draining `capacity_wh` in `minutes`.
pub fn implied_power_w(capacity_wh: f64, minutes: f64) -> f64 {
    capacity_wh / (minutes / 60.0)
}

/// Mean of the implied powers of `(capacity Wh, minutes)` observations.
pub fn fit_drain_power(rows: &[(f64, f64)]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Config("drain fit needs at least one row".into()));
    }
    if rows.iter().any(|(c, m)| !(*c > 0.0 && *m > 0.0)) {
        return Err(Error::Config("drain fit rows must be positive".into()));
    }
    Ok(rows.iter().map(|(c, m)| implied_power_w(*c, *m)).sum::<f64>() / rows.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedConfig {
    pub config: AttackConfig,
    pub avg_power_w: f64,
    pub fractions: TimeFractions,
}

/// Configurations ordered by average power, highest first. Ties keep input
/// order.
pub fn rank_configs(device: &DeviceProfile, configs: &[AttackConfig], phy: &PhyTiming) -> Result<Vec<RankedConfig>> {
    let mut ranked = configs
        .iter()
        .map(|c| {
            Ok(RankedConfig {
                config: c.clone(),
                avg_power_w: attack_power_w(device, c, phy)?,
                fractions: victim_airtime(c, phy)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.avg_power_w.total_cmp(&a.avg_power_w));
    Ok(ranked)
}

pub fn drain_report(
    config: &AttackConfig,
    device: &DeviceProfile,
    battery: &BatterySpec,
    fraction: f64,
    phy: &PhyTiming,
) -> Result<DrainReport> {
    let fractions = victim_airtime(config, phy)?;
    let avg_power_w = attack_power_w(device, config, phy)?;
    let minutes = drain_time_minutes(battery, avg_power_w, fraction)?;
    let model_w = device.power_w(&fractions);
    let scale = if model_w > 0.0 { avg_power_w / model_w } else { 1.0 };
    let mut power_breakdown_w = device.breakdown_w(&fractions);
    for p in [
        &mut power_breakdown_w.sleep,
        &mut power_breakdown_w.idle,
        &mut power_breakdown_w.rx,
        &mut power_breakdown_w.tx,
    ] {
        *p *= scale;
    }
    Ok(DrainReport {
        device: device.name.clone(),
        battery: battery.name.clone(),
        query: config.query_kind,
        bitrate_mbps: config.query_bitrate,
        avg_power_w,
        time_fractions: fractions,
        power_breakdown_w,
        drain_fraction: fraction,
        minutes,
        hours: minutes / 60.0,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryFile {
    schema: u32,
    #[serde(default)]
    battery: Vec<BatteryEntry>,
    #[serde(default)]
    device: Vec<DeviceEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatteryEntry {
    name: String,
    voltage_v: f64,
    capacity_wh: Option<f64>,
    capacity_mah: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceEntry {
    name: String,
    rx_ma: f64,
    tx_ma: f64,
    idle_ma: Option<f64>,
    sleep_ma: f64,
    voltage_v: f64,
    drain_power_w: Option<f64>,
    drain_fit: Option<Vec<(f64, f64)>>,
    full_drain: Option<FullDrain>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FullDrain {
    battery: String,
    hours: f64,
}

/// Named batteries and device profiles.
#[derive(Clone, Debug, Default)]
pub struct Library {
    batteries: BTreeMap<String, BatterySpec>,
    raw_devices: Vec<RawDevice>,
    devices: BTreeMap<String, DeviceProfile>,
    mah: BTreeMap<String, f64>,
}

#[derive(Clone, Debug)]
struct RawDevice {
    profile: DeviceProfile,
    drain_fit: Option<Vec<(f64, f64)>>,
    full_drain: Option<(String, f64)>,
}

impl Library {
    pub fn builtin() -> Self {
        let mut lib = Library::default();
        lib.merge_toml(BUILTIN_LIBRARY, "<builtin>")
            .expect("builtin library is valid");
        lib
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut lib = Self::builtin();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        lib.merge_toml(&text, &path.display().to_string())?;
        Ok(lib)
    }

    /// Adds or replaces entries from a library file.
    pub fn merge_toml(&mut self, text: &str, origin: &str) -> Result<()> {
        let file: LibraryFile = toml::from_str(text).map_err(|e| Error::Scenario {
            path: origin.into(),
            msg: e.to_string(),
        })?;
        if file.schema != 1 {
            return Err(Error::Scenario {
                path: origin.into(),
                msg: format!("unsupported schema {}", file.schema),
            });
        }
        for b in file.battery {
            let capacity_wh = match (b.capacity_wh, b.capacity_mah) {
                (Some(wh), None) => wh,
                (None, Some(mah)) => {
                    self.mah.insert(b.name.clone(), mah);
                    mah / 1000.0 * b.voltage_v
                }
                _ => {
                    return Err(Error::Scenario {
                        path: origin.into(),
                        msg: format!("battery {}: give exactly one of capacity_wh, capacity_mah", b.name),
                    })
                }
            };
            if !(capacity_wh > 0.0) {
                return Err(Error::Scenario {
                    path: origin.into(),
                    msg: format!("battery {}: capacity must be positive", b.name),
                });
            }
            if b.capacity_wh.is_some() {
                self.mah.remove(&b.name);
            }
            self.batteries.insert(
                b.name.clone(),
                BatterySpec {
                    name: b.name,
                    voltage_v: b.voltage_v,
                    capacity_wh,
                },
            );
        }
        for d in file.device {
            let profile = DeviceProfile {
                idle_ma: d.idle_ma.unwrap_or(d.rx_ma * 0.8),
                name: d.name,
                rx_ma: d.rx_ma,
                tx_ma: d.tx_ma,
                sleep_ma: d.sleep_ma,
                voltage_v: d.voltage_v,
                drain_power_w: d.drain_power_w,
            };
            profile.validate()?;
            self.raw_devices.retain(|r| r.profile.name != profile.name);
            self.raw_devices.push(RawDevice {
                profile,
                drain_fit: d.drain_fit,
                full_drain: d.full_drain.map(|f| (f.battery, f.hours)),
            });
        }
        self.resolve()
    }

    /// Re-rates every mAh-specified battery at `voltage_v`.
    pub fn set_pack_voltage(&mut self, voltage_v: f64) -> Result<()> {
        if !(voltage_v > 0.0) {
            return Err(Error::Config(format!("pack voltage must be positive, got {voltage_v}")));
        }
        for (name, mah) in &self.mah {
            if let Some(b) = self.batteries.get_mut(name) {
                b.voltage_v = voltage_v;
                b.capacity_wh = mah / 1000.0 * voltage_v;
            }
        }
        self.resolve()
    }

    fn resolve(&mut self) -> Result<()> {
        self.devices.clear();
        for raw in &self.raw_devices {
            let mut profile = raw.profile.clone();
            if let Some(rows) = &raw.drain_fit {
                profile.drain_power_w = Some(fit_drain_power(rows)?);
            }
            if let Some((battery, hours)) = &raw.full_drain {
                let b = self.battery(battery)?;
                if !(*hours > 0.0) {
                    return Err(Error::Config(format!(
                        "device {}: full_drain hours must be positive",
                        profile.name
                    )));
                }
                profile.drain_power_w = Some(b.capacity_wh / hours);
            }
            self.devices.insert(profile.name.clone(), profile);
        }
        Ok(())
    }

    pub fn battery(&self, name: &str) -> Result<&BatterySpec> {
        self.batteries.get(name).ok_or_else(|| Error::UnknownName {
            what: "battery",
            name: name.into(),
            available: self.batteries.keys().cloned().collect(),
        })
    }

    pub fn device(&self, name: &str) -> Result<&DeviceProfile> {
        self.devices.get(name).ok_or_else(|| Error::UnknownName {
            what: "device",
            name: name.into(),
            available: self.devices.keys().cloned().collect(),
        })
    }

    pub fn batteries(&self) -> impl Iterator<Item = &BatterySpec> {
        self.batteries.values()
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceProfile> {
        self.devices.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn esp32_power_examples() {
        let esp = DeviceProfile {
            sleep_ma: 0.0,
            ..DeviceProfile::esp32()
        };
        let all_rx = TimeFractions {
            rx: 1.0,
            ..Default::default()
        };
        assert!(close(esp.power_w(&all_rx), 0.33, 1e-12));
        let asleep = TimeFractions {
            sleep: 1.0,
            ..Default::default()
        };
        assert_eq!(esp.power_w(&asleep), 0.0);
        let half = TimeFractions {
            rx: 0.5,
            tx: 0.5,
            ..Default::default()
        };
        assert!(close(esp.power_w(&half), 0.561, 1e-12));
    }

    #[test]
    fn bar_airtime_split() {
        let phy = PhyTiming::band_2_4ghz();
        let f = victim_airtime(&AttackConfig::new(FrameKind::BlockAckRequest, 1.0), &phy).unwrap();
        assert!(close(f.tx, 448.0 / 1202.0, 1e-12));
        assert!(close(f.rx, 384.0 / 1202.0, 1e-12));
        assert!(close(f.total(), 1.0, 1e-12));
        let fast = victim_airtime(&AttackConfig::new(FrameKind::BlockAckRequest, 6.0), &phy).unwrap();
        assert!(fast.tx < f.tx);
    }

    #[test]
    fn no_attack_sleeps() {
        let phy = PhyTiming::band_2_4ghz();
        let mut cfg = AttackConfig::new(FrameKind::Null, 1.0);
        cfg.query_rate = QueryRate::PerSecond(0.0);
        let f = victim_airtime(&cfg, &phy).unwrap();
        assert!(f.sleep > 0.98);
        assert_eq!(f.tx, 0.0);
        assert!(close(f.total(), 1.0, 1e-12));
    }

    #[test]
    fn beacons_take_channel_time() {
        let phy = PhyTiming::band_2_4ghz();
        let plain = victim_airtime(&AttackConfig::new(FrameKind::BlockAckRequest, 1.0), &phy).unwrap();
        let mut cfg = AttackConfig::new(FrameKind::BlockAckRequest, 1.0);
        cfg.beacon_period_us = 200_000;
        let with = victim_airtime(&cfg, &phy).unwrap();
        assert!(close(with.total(), 1.0, 1e-12));
        assert!(with.rx > 0.0 && (with.tx - plain.tx).abs() < 0.01);
    }

    #[test]
    fn drain_examples() {
        let cr = BatterySpec {
            name: "CR2032".into(),
            voltage_v: 3.0,
            capacity_wh: 0.68,
        };
        let aa = BatterySpec {
            name: "AA".into(),
            voltage_v: 1.5,
            capacity_wh: 4.20,
        };
        assert!(close(drain_time_minutes(&cr, 2.9, 1.0).unwrap(), 14.0, 0.1));
        assert!(close(drain_time_minutes(&aa, 2.9, 0.25).unwrap(), 21.7, 0.05));
        let p = aa.capacity_wh * 60.0;
        assert!(close(drain_time_minutes(&aa, p, 1.0).unwrap(), 1.0, 1e-12));
        assert!(drain_time_minutes(&aa, 0.0, 1.0).is_err());
        assert!(drain_time_minutes(&aa, -1.0, 1.0).is_err());
        assert!(drain_time_minutes(&aa, 1.0, 0.0).is_err());
    }

    #[test]
    fn ranking() {
        let phy = PhyTiming::band_2_4ghz();
        let esp = DeviceProfile::esp32();
        let configs = [
            AttackConfig::new(FrameKind::Null, 1.0),
            AttackConfig::new(FrameKind::BlockAckRequest, 1.0),
            AttackConfig::new(FrameKind::BlockAckRequest, 6.0),
        ];
        let ranked = rank_configs(&esp, &configs, &phy).unwrap();
        assert_eq!(ranked[0].config, configs[1]);
        let pos = |c: &AttackConfig| ranked.iter().position(|r| &r.config == c).unwrap();
        assert!(pos(&configs[1]) < pos(&configs[2]));
        let single = rank_configs(&esp, &configs[..1], &phy).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].config, configs[0]);
    }

    #[test]
    fn builtin_library() {
        let lib = Library::builtin();
        assert_eq!(lib.battery("AAA").unwrap().capacity_wh, 1.87);
        let ring = lib.battery("ring").unwrap();
        assert!(close(ring.capacity_wh, 6.04 * 3.65, 1e-9));
        let ring_dev = lib.device("ring").unwrap();
        assert!(close(ring_dev.drain_power_w.unwrap(), 0.6124, 1e-3));
        let fitted = lib.device("table-implied").unwrap().drain_power_w.unwrap();
        assert!(fitted > 2.8 && fitted < 2.92);
        let err = lib.battery("D-cell").unwrap_err();
        assert!(err.to_string().contains("AAA"), "{err}");
        assert!(lib.device("nope").unwrap_err().to_string().contains("esp32"));
    }

    #[test]
    fn pack_voltage_rerates() {
        let mut lib = Library::builtin();
        lib.set_pack_voltage(3.7).unwrap();
        assert!(close(lib.battery("ring").unwrap().capacity_wh, 6.04 * 3.7, 1e-9));
        assert_eq!(lib.battery("AA").unwrap().capacity_wh, 4.20);
        assert!(close(
            lib.device("ring").unwrap().drain_power_w.unwrap(),
            6.04 * 3.7 / 36.0,
            1e-9
        ));
    }

    #[test]
    fn library_rejects_bad_entries() {
        let mut lib = Library::builtin();
        let bad = "schema = 1\n[[device]]\nname='x'\nrx_ma=300\ntx_ma=100\nsleep_ma=0\nvoltage_v=3.3\n";
        assert!(lib.merge_toml(bad, "t").is_err());
        let typo = "schema = 1\n[[battery]]\nname='x'\nvoltage_v=1\ncapacity_wh=1\ncolor='red'\n";
        assert!(lib.merge_toml(typo, "t").is_err());
        assert!(lib.merge_toml("schema = 2\n", "t").is_err());
    }
}

use std::collections::BTreeSet;

use loophole::csi::{CsiSample, CsiTrace, SUBCARRIERS};
use loophole::energy::{drain_time_minutes, BatterySpec};
use loophole::frames::{encode_tim, response_for, tim_bit, Frame, FrameKind, Mac, TimBitmap};
use loophole::sensing::{subcarrier_vote, window_count, window_starts, PipelineConfig, Spectrum};
use proptest::prelude::*;

fn expected_response(kind: FrameKind) -> Option<FrameKind> {
    match kind {
        FrameKind::Rts => Some(FrameKind::Cts),
        FrameKind::BlockAckRequest => Some(FrameKind::BlockAck),
        FrameKind::Cts | FrameKind::Ack | FrameKind::BlockAck | FrameKind::Beacon => None,
        _ => Some(FrameKind::Ack),
    }
}

fn make_frame(kind: FrameKind, src: Mac, dst: Mac) -> Frame {
    match kind {
        FrameKind::Beacon => Frame::beacon(src, dst, 1.0, "net", TimBitmap::all_ones(256)),
        FrameKind::NullFunction => Frame::null_function(src, dst, 1.0, false, Some(1)),
        k => Frame::new(k, src, dst, 1.0),
    }
}

fn kind_strategy() -> impl Strategy<Value = FrameKind> {
    prop_oneof![
        Just(FrameKind::Null),
        Just(FrameKind::Rts),
        Just(FrameKind::Cts),
        Just(FrameKind::Ack),
        Just(FrameKind::BlockAckRequest),
        Just(FrameKind::BlockAck),
        Just(FrameKind::Beacon),
        Just(FrameKind::NullFunction),
        Just(FrameKind::Deauthentication),
        (0u32..1500).prop_map(FrameKind::DataWithPayload),
    ]
}

fn mac_strategy(me: Mac) -> impl Strategy<Value = Mac> {
    prop_oneof![Just(me), Just(Mac::BROADCAST), any::<[u8; 6]>().prop_map(Mac)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn tim_roundtrip(aids in proptest::collection::btree_set(0u16..255, 0..40)) {
        let tim = encode_tim(&aids, 256).unwrap();
        let bytes = tim.to_bytes();
        for aid in 0u16..255 {
            let bit = aid as usize + 1;
            let raw = bytes[bit / 8] >> (bit % 8) & 1 == 1;
            prop_assert_eq!(tim_bit(&tim, aid).unwrap(), aids.contains(&aid));
            prop_assert_eq!(raw, aids.contains(&aid));
        }
        prop_assert_eq!(bytes[0] & 1, 0);
        prop_assert_eq!(tim.aids(), aids.iter().copied().collect::<Vec<_>>());
        prop_assert!(tim_bit(&tim, 255).is_err());
    }

    #[test]
    fn every_addressed_frame_is_answered(
        kind in kind_strategy(),
        src in any::<[u8; 6]>().prop_map(Mac),
        dst in mac_strategy(Mac([2, 0, 0, 0, 0, 1])),
    ) {
        let me = Mac([2, 0, 0, 0, 0, 1]);
        let frame = make_frame(kind, src, dst);
        let want = if dst == me { expected_response(kind) } else { None };
        prop_assert_eq!(response_for(&frame, me), want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn drain_time_is_linear(cap in 0.1f64..50.0, p in 0.01f64..10.0, f in 0.01f64..=1.0) {
        let b = BatterySpec { name: "x".into(), voltage_v: 1.5, capacity_wh: cap };
        let full = drain_time_minutes(&b, p, 1.0).unwrap();
        prop_assert!((full - cap / p * 60.0).abs() <= 1e-9 * full);
        let part = drain_time_minutes(&b, p, f).unwrap();
        prop_assert!((part - f * full).abs() <= 1e-9 * full);
        let doubled = drain_time_minutes(&b, 2.0 * p, 1.0).unwrap();
        prop_assert!((doubled - full / 2.0).abs() <= 1e-9 * full);
    }

    #[test]
    fn window_count_matches_enumeration(d in 0.0f64..400.0, w in 1.0f64..60.0, s in 0.1f64..10.0) {
        let mut brute = 0usize;
        while brute as f64 * s + w <= d + 1e-9 * s {
            brute += 1;
        }
        prop_assert_eq!(window_count(d, w, s), brute);
    }
}

fn peaked_spectra(peaks: &[usize], jitter: &[f64]) -> Vec<Spectrum> {
    let n = 64;
    let freqs: Vec<f64> = (0..n).map(|k| k as f64 / 60.0).collect();
    peaks
        .iter()
        .zip(jitter)
        .map(|(&p, &j)| {
            let mut mags: Vec<f64> = (0..n).map(|k| 1.0 + 0.1 * ((k as f64 * j).sin())).collect();
            mags[p] = 40.0;
            Spectrum {
                freqs: freqs.clone(),
                mags,
                resolution_hz: 1.0 / 60.0,
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn vote_ignores_global_scale(
        peaks in proptest::collection::vec(10usize..55, 3..12),
        jitter in proptest::collection::vec(0.1f64..3.0, 12),
        scale in 1e-3f64..1e3,
    ) {
        let cfg = PipelineConfig::default();
        let spectra = peaked_spectra(&peaks, &jitter);
        let scaled: Vec<Spectrum> = spectra
            .iter()
            .map(|s| Spectrum { mags: s.mags.iter().map(|m| m * scale).collect(), ..s.clone() })
            .collect();
        let a = subcarrier_vote(&spectra, &cfg).unwrap();
        let b = subcarrier_vote(&scaled, &cfg).unwrap();
        prop_assert_eq!(a.rate_bpm, b.rate_bpm);
    }

    #[test]
    fn window_starts_cover_the_trace(dur in 31.0f64..200.0, t0 in 0.0f64..50.0) {
        let samples: Vec<CsiSample> = (0..=(dur * 2.0) as usize)
            .map(|k| CsiSample { t: t0 + k as f64 * 0.5, amp: [1.0; SUBCARRIERS] })
            .collect();
        let trace = CsiTrace { samples };
        let cfg = PipelineConfig::default();
        let starts = window_starts(&trace, &cfg).unwrap();
        prop_assert!(!starts.is_empty());
        prop_assert!(starts[0] <= t0 && t0 < starts[0] + cfg.stride_s);
        let last = trace.samples.last().unwrap().t;
        for w in starts.windows(2) {
            prop_assert!((w[1] - w[0] - cfg.stride_s).abs() < 1e-9);
        }
        prop_assert!(*starts.last().unwrap() + cfg.window_s <= last + 1e-6);
    }
}

#[test]
fn tim_rejects_aids_past_the_bitmap() {
    let mut aids = BTreeSet::new();
    aids.insert(300u16);
    assert!(encode_tim(&aids, 256).is_err());
    assert!(TimBitmap::empty(8).get(7).is_err());
}

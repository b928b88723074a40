//! 2.4 GHz control-plane MAC: access-category constants, frame sizes,
//! airtime, binary exponential backoff and the slotted DCF engine.

mod dcf;

pub use dcf::{ControlChannel, DcfEvent, DcfNotice, StationId, TrafficModel};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{RngStream, SimTime};

/// The two frame categories contending on the 2.4 GHz channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AccessCategory {
    /// 60 GHz channel requests from dual-band devices.
    #[serde(rename = "REQ60")]
    Req60,
    /// Ordinary 2.4 GHz traffic.
    #[serde(rename = "WIFI24")]
    Wifi24,
}

impl AccessCategory {
    pub const ALL: [AccessCategory; 2] = [AccessCategory::Req60, AccessCategory::Wifi24];
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MacError {
    #[error("retry limit exceeded; frame dropped")]
    RetryExceeded,
    #[error("contention window bounds must be powers of two with cw_min <= cw_max (got {cw_min}, {cw_max})")]
    BadWindow { cw_min: u32, cw_max: u32 },
    #[error("retry limit must be at least 1")]
    BadRetryLimit,
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessCategoryParams {
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
    pub sifs_us: u64,
    pub difs_us: u64,
    pub slot_time_us: u64,
    pub ctrl_rate_bps: f64,
    pub data_rate_bps: f64,
}

impl AccessCategoryParams {
    pub fn validate(&self) -> Result<(), MacError> {
        if !self.cw_min.is_power_of_two()
            || !self.cw_max.is_power_of_two()
            || self.cw_min > self.cw_max
        {
            return Err(MacError::BadWindow {
                cw_min: self.cw_min,
                cw_max: self.cw_max,
            });
        }
        if self.retry_limit < 1 {
            return Err(MacError::BadRetryLimit);
        }
        if self.slot_time_us == 0 {
            return Err(MacError::NonPositive("slot_time_us"));
        }
        if !(self.ctrl_rate_bps > 0.0) {
            return Err(MacError::NonPositive("ctrl_rate_bps"));
        }
        if !(self.data_rate_bps > 0.0) {
            return Err(MacError::NonPositive("data_rate_bps"));
        }
        Ok(())
    }

    /// `min(cw_min * 2^retry, cw_max)`
    pub fn cw_for_retry(&self, retry: u32) -> u32 {
        let shifted = (self.cw_min as u64) << retry.min(32);
        shifted.min(self.cw_max as u64) as u32
    }

    pub fn sifs(&self) -> SimTime {
        SimTime::from_micros(self.sifs_us)
    }

    pub fn difs(&self) -> SimTime {
        SimTime::from_micros(self.difs_us)
    }

    pub fn slot(&self) -> SimTime {
        SimTime::from_micros(self.slot_time_us)
    }
}

pub const SIFS_24_US: u64 = 10;
pub const SLOT_24_US: u64 = 20;
pub const SIFS_60_US: u64 = 3;
pub const SLOT_60_US: u64 = 5;
pub const RIFS_US: u64 = 300;
pub const CONTROL_RATE_BPS: f64 = 1e6;
pub const WIFI_DATA_RATE_BPS: f64 = 54e6;

/// Default constants for a category. Both categories contend on the
/// 2.4 GHz channel and use its SIFS, slot and `DIFS = SIFS + 2 slot`.
pub fn category_params(cat: AccessCategory) -> AccessCategoryParams {
    let (cw_min, cw_max) = match cat {
        AccessCategory::Req60 => (8, 16),
        AccessCategory::Wifi24 => (32, 256),
    };
    AccessCategoryParams {
        cw_min,
        cw_max,
        retry_limit: 5,
        sifs_us: SIFS_24_US,
        difs_us: SIFS_24_US + 2 * SLOT_24_US,
        slot_time_us: SLOT_24_US,
        ctrl_rate_bps: CONTROL_RATE_BPS,
        data_rate_bps: WIFI_DATA_RATE_BPS,
    }
}

/// Per-category parameters as configured for a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacParams {
    pub req60: AccessCategoryParams,
    pub wifi24: AccessCategoryParams,
    /// Gives REQ60 the shorter `SIFS + slot` inter-frame space.
    pub aifs_differentiation: bool,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            req60: category_params(AccessCategory::Req60),
            wifi24: category_params(AccessCategory::Wifi24),
            aifs_differentiation: false,
        }
    }
}

impl MacParams {
    pub fn params(&self, cat: AccessCategory) -> AccessCategoryParams {
        match cat {
            AccessCategory::Req60 => {
                let mut p = self.req60.clone();
                if self.aifs_differentiation {
                    p.difs_us = p.sifs_us + p.slot_time_us;
                }
                p
            }
            AccessCategory::Wifi24 => self.wifi24.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), MacError> {
        self.req60.validate()?;
        self.wifi24.validate()
    }

    /// Single-category configuration: both categories get `params`.
    pub fn uniform(params: AccessCategoryParams) -> Self {
        MacParams {
            req60: params.clone(),
            wifi24: params,
            aifs_differentiation: false,
        }
    }
}

pub const PHY_HEADER_BYTES: u32 = 16;
pub const MAC_HEADER_BYTES: u32 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameKind {
    Rts,
    Cts,
    Ack,
    Data,
    AssocReq,
    AssocResp,
    Sweep,
    SweepFeedback,
    ChanReq60,
}

impl FrameKind {
    pub fn default_body_bytes(self) -> u32 {
        match self {
            FrameKind::Rts => 20,
            FrameKind::Cts | FrameKind::Ack => 14,
            FrameKind::Data | FrameKind::AssocReq => 1024,
            FrameKind::AssocResp => 16,
            FrameKind::Sweep | FrameKind::SweepFeedback => 1024,
            // no size given for the channel request; sized like an RTS
            FrameKind::ChanReq60 => 20,
        }
    }

    /// Frames carrying a MAC header and payload, sent at the data rate
    /// behind an RTS/CTS handshake.
    pub fn is_data_bearing(self) -> bool {
        matches!(
            self,
            FrameKind::Data | FrameKind::AssocReq | FrameKind::AssocResp
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub kind: FrameKind,
    pub body_bytes: u32,
}

impl FrameSpec {
    pub fn of(kind: FrameKind) -> Self {
        FrameSpec {
            kind,
            body_bytes: kind.default_body_bytes(),
        }
    }

    pub fn data(body_bytes: u32) -> Self {
        FrameSpec {
            kind: FrameKind::Data,
            body_bytes,
        }
    }

    pub fn on_air_bytes(&self) -> u32 {
        let mac = if self.kind.is_data_bearing() {
            MAC_HEADER_BYTES
        } else {
            0
        };
        self.body_bytes + PHY_HEADER_BYTES + mac
    }
}

/// Airtime rounded up to the next nanosecond. An infinite rate gives zero.
pub fn frame_airtime(frame: FrameSpec, rate_bps: f64) -> SimTime {
    assert!(rate_bps > 0.0, "rate must be positive");
    if rate_bps.is_infinite() {
        return SimTime::ZERO;
    }
    let bits = frame.on_air_bytes() as f64 * 8.0;
    SimTime::from_nanos((bits * 1e9 / rate_bps - 1e-6).ceil().max(0.0) as u64)
}

/// Rate used for a frame on the 2.4 GHz channel.
pub fn frame_rate(frame: FrameSpec, p: &AccessCategoryParams) -> f64 {
    if frame.kind.is_data_bearing() {
        p.data_rate_bps
    } else {
        p.ctrl_rate_bps
    }
}

/// Channel occupancy of a successful exchange: RTS/SIFS/CTS/SIFS/frame/SIFS/ACK
/// for data-bearing frames, frame/SIFS/ACK otherwise.
pub fn exchange_duration(frame: FrameSpec, p: &AccessCategoryParams) -> SimTime {
    let ctrl = |k| frame_airtime(FrameSpec::of(k), p.ctrl_rate_bps);
    let body = frame_airtime(frame, frame_rate(frame, p));
    if frame.kind.is_data_bearing() {
        ctrl(FrameKind::Rts)
            + p.sifs()
            + ctrl(FrameKind::Cts)
            + p.sifs()
            + body
            + p.sifs()
            + ctrl(FrameKind::Ack)
    } else {
        body + p.sifs() + ctrl(FrameKind::Ack)
    }
}

/// Channel occupancy of a collision: the colliding frame (RTS when the
/// handshake is used) plus the response timeout.
pub fn collision_duration(frame: FrameSpec, p: &AccessCategoryParams) -> SimTime {
    let ctrl = |k| frame_airtime(FrameSpec::of(k), p.ctrl_rate_bps);
    if frame.kind.is_data_bearing() {
        ctrl(FrameKind::Rts) + p.sifs() + ctrl(FrameKind::Cts)
    } else {
        frame_airtime(frame, frame_rate(frame, p)) + p.sifs() + ctrl(FrameKind::Ack)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackoffState {
    pub category: AccessCategory,
    pub retry_count: u32,
    pub remaining_slots: u32,
    pub cw_current: u32,
}

impl BackoffState {
    pub fn new(category: AccessCategory, params: &AccessCategoryParams) -> Self {
        BackoffState {
            category,
            retry_count: 0,
            remaining_slots: 0,
            cw_current: params.cw_min,
        }
    }

    /// Draws a fresh counter uniformly from `[0, cw_current - 1]`.
    pub fn next_backoff(
        &mut self,
        params: &AccessCategoryParams,
        rng: &mut RngStream,
    ) -> Result<u32, MacError> {
        if self.retry_count > params.retry_limit {
            return Err(MacError::RetryExceeded);
        }
        self.cw_current = params.cw_for_retry(self.retry_count);
        self.remaining_slots = rng.below(self.cw_current as u64) as u32;
        Ok(self.remaining_slots)
    }

    /// Records a failed attempt and redraws. Errors once the retry limit
    /// is exceeded; the caller drops the frame and calls [`reset`](Self::reset).
    pub fn on_failure(
        &mut self,
        params: &AccessCategoryParams,
        rng: &mut RngStream,
    ) -> Result<u32, MacError> {
        self.retry_count += 1;
        self.next_backoff(params, rng)
    }

    pub fn reset(&mut self, params: &AccessCategoryParams, rng: &mut RngStream) -> u32 {
        self.retry_count = 0;
        self.next_backoff(params, rng)
            .expect("retry 0 within limit")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::StreamPurpose;

    #[test]
    fn table_values() {
        let req = category_params(AccessCategory::Req60);
        let wifi = category_params(AccessCategory::Wifi24);
        assert_eq!((req.cw_min, req.cw_max), (8, 16));
        assert_eq!((wifi.cw_min, wifi.cw_max), (32, 256));
        assert_eq!(req.retry_limit, 5);
        assert_eq!(wifi.retry_limit, 5);
        assert_eq!((req.sifs_us, req.slot_time_us, req.difs_us), (10, 20, 50));
        assert_eq!(wifi.difs_us, 50);
        assert_eq!(req.ctrl_rate_bps, 1e6);
    }

    #[test]
    fn aifs_toggle_shortens_req60_difs_only() {
        let p = MacParams {
            aifs_differentiation: true,
            ..Default::default()
        };
        assert_eq!(p.params(AccessCategory::Req60).difs_us, 30);
        assert_eq!(p.params(AccessCategory::Wifi24).difs_us, 50);
        assert_eq!(
            MacParams::default().params(AccessCategory::Req60).difs_us,
            50
        );
    }

    #[test]
    fn cw_law_exhaustive() {
        for cat in AccessCategory::ALL {
            let p = category_params(cat);
            for k in 0..=5u32 {
                let expected = (p.cw_min * 2u32.pow(k)).min(p.cw_max);
                assert_eq!(p.cw_for_retry(k), expected);
            }
        }
        assert_eq!(category_params(AccessCategory::Req60).cw_for_retry(3), 16);
        assert_eq!(category_params(AccessCategory::Wifi24).cw_for_retry(3), 256);
    }

    #[test]
    fn backoff_draw_ranges() {
        let mut rng = RngStream::for_node(1, 0, StreamPurpose::Backoff);
        for (cat, retry, hi) in [
            (AccessCategory::Req60, 0, 7),
            (AccessCategory::Req60, 3, 15),
            (AccessCategory::Wifi24, 3, 255),
        ] {
            let p = category_params(cat);
            let mut st = BackoffState::new(cat, &p);
            st.retry_count = retry;
            let mut max_seen = 0;
            for _ in 0..5000 {
                let d = st.next_backoff(&p, &mut rng).unwrap();
                assert!(d <= hi);
                max_seen = max_seen.max(d);
            }
            assert_eq!(max_seen, hi);
        }
    }

    #[test]
    fn retry_exceeded_is_error() {
        let p = category_params(AccessCategory::Req60);
        let mut rng = RngStream::new(0, 0);
        let mut st = BackoffState::new(AccessCategory::Req60, &p);
        for _ in 0..5 {
            st.on_failure(&p, &mut rng).unwrap();
        }
        assert_eq!(st.on_failure(&p, &mut rng), Err(MacError::RetryExceeded));
    }

    #[test]
    fn airtimes() {
        let rts = frame_airtime(FrameSpec::of(FrameKind::Rts), 1e6);
        let ack = frame_airtime(FrameSpec::of(FrameKind::Ack), 1e6);
        let data = frame_airtime(FrameSpec::data(1024), 54e6);
        assert_eq!(rts, SimTime::from_micros(288));
        assert_eq!(ack, SimTime::from_micros(240));
        assert!((data.as_micros_f64() - 157.63).abs() < 0.01, "{data}");
        assert_eq!(
            frame_airtime(FrameSpec::of(FrameKind::Rts), f64::INFINITY),
            SimTime::ZERO
        );
    }

    #[test]
    fn parameter_validation() {
        let mut p = category_params(AccessCategory::Wifi24);
        p.cw_min = 24;
        assert!(p.validate().is_err());
        let mut p = category_params(AccessCategory::Wifi24);
        p.cw_min = 512;
        assert!(p.validate().is_err());
        let mut p = category_params(AccessCategory::Wifi24);
        p.retry_limit = 0;
        assert_eq!(p.validate(), Err(MacError::BadRetryLimit));
    }
}

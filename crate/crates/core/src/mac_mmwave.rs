//! 60 GHz picocell MAC: per-sector CBAP rotation, sector-sweep beam
//! training and data transfer confined to the device's CBAP windows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mac_control::{frame_airtime, FrameKind, FrameSpec, RIFS_US, SIFS_60_US};
use crate::propagation::wrap_deg;
use crate::sim::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum MmwaveError {
    #[error("beamwidth must lie in (0, 360], got {0}")]
    BadBeamwidth(f64),
    #[error("sector {sector} out of range for {count} sectors")]
    BadSector { sector: usize, count: usize },
    #[error("cbap duration must be positive")]
    ZeroCbap,
    #[error("no beam pair reached the minimum SNR")]
    SweepFailed,
}

/// Sector layout of a directional radio. Sector `i` is centred on
/// `i * beamwidth` and covers `[i*bw - bw/2, i*bw + bw/2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectorConfig {
    beamwidth_deg: f64,
    sector_count: usize,
    cbap_duration: SimTime,
}

impl SectorConfig {
    pub fn new(beamwidth_deg: f64, cbap_duration: SimTime) -> Result<Self, MmwaveError> {
        if !(beamwidth_deg > 0.0 && beamwidth_deg <= 360.0) {
            return Err(MmwaveError::BadBeamwidth(beamwidth_deg));
        }
        if cbap_duration == SimTime::ZERO {
            return Err(MmwaveError::ZeroCbap);
        }
        let sector_count = (360.0 / beamwidth_deg - 1e-9).ceil().max(1.0) as usize;
        Ok(SectorConfig {
            beamwidth_deg,
            sector_count,
            cbap_duration,
        })
    }

    pub fn beamwidth_deg(&self) -> f64 {
        self.beamwidth_deg
    }

    pub fn sector_count(&self) -> usize {
        self.sector_count
    }

    pub fn cbap_duration(&self) -> SimTime {
        self.cbap_duration
    }

    pub fn sector_center(&self, sector: usize) -> f64 {
        wrap_deg(sector as f64 * self.beamwidth_deg)
    }

    pub fn sector_of(&self, bearing_deg: f64) -> usize {
        sector_index(bearing_deg, self.beamwidth_deg, self.sector_count)
    }

    pub fn schedule(&self, cycle_start: SimTime) -> CbapSchedule {
        CbapSchedule {
            cycle_start,
            sector_count: self.sector_count,
            cbap_duration: self.cbap_duration,
        }
    }
}

/// Quantizes a bearing to the sector whose interval contains it.
pub fn sector_index(bearing_deg: f64, beamwidth_deg: f64, sector_count: usize) -> usize {
    let shifted = wrap_deg(bearing_deg + beamwidth_deg / 2.0);
    ((shifted / beamwidth_deg).floor() as usize) % sector_count
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interval {
    pub start: SimTime,
    pub end: SimTime,
}

impl Interval {
    pub fn contains(&self, t: SimTime) -> bool {
        t >= self.start && t < self.end
    }
}

/// Round-robin CBAP rotation: sector `i` is served in slot `i` of every
/// cycle of length `sector_count * cbap_duration`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CbapSchedule {
    pub cycle_start: SimTime,
    pub sector_count: usize,
    pub cbap_duration: SimTime,
}

impl CbapSchedule {
    pub fn cycle_length(&self) -> SimTime {
        self.cbap_duration.times(self.sector_count as u64)
    }

    /// The sector's window containing `now`, or the next one after it.
    pub fn next_window(&self, sector: usize, now: SimTime) -> Result<Interval, MmwaveError> {
        if sector >= self.sector_count {
            return Err(MmwaveError::BadSector {
                sector,
                count: self.sector_count,
            });
        }
        let offset = self.cbap_duration.times(sector as u64);
        let cycle = self.cycle_length().as_nanos();
        let first = self.cycle_start + offset;
        let start = if now <= first {
            first
        } else {
            let since = (now - first).as_nanos();
            let k = since / cycle;
            let candidate = first + SimTime::from_nanos(k * cycle);
            if now < candidate + self.cbap_duration {
                candidate
            } else {
                candidate + SimTime::from_nanos(cycle)
            }
        };
        Ok(Interval {
            start,
            end: start + self.cbap_duration,
        })
    }

    pub fn wait(&self, sector: usize, now: SimTime) -> Result<SimTime, MmwaveError> {
        Ok(self.next_window(sector, now)?.start.saturating_sub(now))
    }
}

/// Timing constants for beam training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepTiming {
    /// Rate of sweep and feedback frames (a low, robust MCS).
    pub sweep_rate_bps: f64,
    pub sifs_us: u64,
    pub rifs_us: u64,
    /// Fixed cost of a second, finer training stage.
    pub refinement_us: u64,
}

impl Default for SweepTiming {
    fn default() -> Self {
        SweepTiming {
            sweep_rate_bps: 27.5e6,
            sifs_us: SIFS_60_US,
            rifs_us: RIFS_US,
            refinement_us: 0,
        }
    }
}

impl SweepTiming {
    pub fn sweep_frame_airtime(&self) -> SimTime {
        frame_airtime(FrameSpec::of(FrameKind::Sweep), self.sweep_rate_bps)
    }

    /// Cost of one evaluated pair: frame plus inter-frame spacing.
    pub fn per_pair(&self) -> SimTime {
        self.sweep_frame_airtime() + SimTime::from_micros(self.sifs_us)
    }

    pub fn sweep_duration(&self, pairs: u64) -> SimTime {
        self.per_pair().times(pairs)
            + SimTime::from_micros(self.rifs_us)
            + frame_airtime(FrameSpec::of(FrameKind::SweepFeedback), self.sweep_rate_bps)
            + SimTime::from_micros(self.refinement_us)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamPair {
    pub tx_sector: usize,
    pub rx_sector: usize,
    pub quality_db: f64,
}

/// Sectors `center - half_width ..= center + half_width` (wrapping).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SectorWindow {
    pub center: usize,
    pub half_width: usize,
}

impl SectorWindow {
    pub fn sectors(&self, count: usize) -> Vec<usize> {
        if 2 * self.half_width + 1 >= count {
            return (0..count).collect();
        }
        let hw = self.half_width as isize;
        (-hw..=hw)
            .map(|o| (self.center as isize + o).rem_euclid(count as isize) as usize)
            .collect()
    }

    pub fn contains(&self, sector: usize, count: usize) -> bool {
        self.sectors(count).contains(&sector)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOutcome {
    pub pair: Option<BeamPair>,
    pub duration: SimTime,
    pub sweep_frames: u64,
    pub feedback_frames: u64,
}

impl SweepOutcome {
    pub fn beam_pair(&self) -> Result<BeamPair, MmwaveError> {
        self.pair.ok_or(MmwaveError::SweepFailed)
    }
}

/// Evaluates every (tx, rx) pair inside the optional windows and keeps the
/// one with the best quality. Ties go to the lowest `(tx, rx)` index so the
/// result does not depend on the enumeration order.
pub fn sector_sweep<F>(
    timing: &SweepTiming,
    initiator_sectors: usize,
    responder_sectors: usize,
    restricted: Option<(SectorWindow, SectorWindow)>,
    min_quality_db: f64,
    mut quality: F,
) -> SweepOutcome
where
    F: FnMut(usize, usize) -> f64,
{
    let (tx_set, rx_set) = match restricted {
        Some((tw, rw)) => (tw.sectors(initiator_sectors), rw.sectors(responder_sectors)),
        None => (
            (0..initiator_sectors).collect(),
            (0..responder_sectors).collect(),
        ),
    };
    let mut best: Option<BeamPair> = None;
    for &tx in &tx_set {
        for &rx in &rx_set {
            let q = quality(tx, rx);
            let better = match best {
                None => true,
                Some(b) => {
                    q > b.quality_db || (q == b.quality_db && (tx, rx) < (b.tx_sector, b.rx_sector))
                }
            };
            if better {
                best = Some(BeamPair {
                    tx_sector: tx,
                    rx_sector: rx,
                    quality_db: q,
                });
            }
        }
    }
    let pairs = (tx_set.len() * rx_set.len()) as u64;
    SweepOutcome {
        pair: best.filter(|b| b.quality_db >= min_quality_db),
        duration: timing.sweep_duration(pairs),
        sweep_frames: pairs,
        feedback_frames: 1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransferReport {
    /// Time actually spent transmitting.
    pub airtime: SimTime,
    /// When the last byte went out (or when the link was lost).
    pub finished_at: SimTime,
    pub delivered_bytes: u64,
    pub remaining_bytes: u64,
    /// Number of CBAP windows used.
    pub segments: u32,
    /// Link lost before completion; the remainder needs rerouting.
    pub interrupted: bool,
}

/// Sends `bytes` at `rate_bps`, only inside the sector's CBAP windows,
/// starting no earlier than `start`. If `lost_at` is given the link breaks
/// at that instant and only the bytes sent before it count.
pub fn transfer(
    bytes: u64,
    rate_bps: f64,
    schedule: &CbapSchedule,
    sector: usize,
    start: SimTime,
    lost_at: Option<SimTime>,
) -> Result<TransferReport, MmwaveError> {
    let mut report = TransferReport {
        airtime: SimTime::ZERO,
        finished_at: start,
        delivered_bytes: 0,
        remaining_bytes: bytes,
        segments: 0,
        interrupted: false,
    };
    if bytes == 0 {
        return Ok(report);
    }
    if !(rate_bps > 0.0) || lost_at.is_some_and(|l| l <= start) {
        report.interrupted = true;
        return Ok(report);
    }
    let total = SimTime::from_nanos((bytes as f64 * 8.0 * 1e9 / rate_bps).ceil() as u64);
    let mut t = start;
    let mut left = total;
    loop {
        let w = schedule.next_window(sector, t)?;
        let seg_start = w.start.max(t);
        let mut seg_end = w.end;
        if let Some(lost) = lost_at {
            if lost <= seg_start {
                report.interrupted = true;
                report.finished_at = lost;
                break;
            }
            seg_end = seg_end.min(lost);
        }
        let used = left.min(seg_end - seg_start);
        report.airtime += used;
        report.segments += 1;
        left = left - used;
        t = seg_start + used;
        report.finished_at = t;
        if left == SimTime::ZERO {
            break;
        }
        if lost_at.is_some_and(|l| t >= l) {
            report.interrupted = true;
            break;
        }
    }
    if left == SimTime::ZERO {
        report.delivered_bytes = bytes;
    } else {
        let sent = (report.airtime.as_nanos() as f64 * rate_bps / 8e9).floor() as u64;
        report.delivered_bytes = sent.min(bytes);
    }
    report.remaining_bytes = bytes - report.delivered_bytes;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: u64) -> SimTime {
        SimTime::from_millis(v)
    }

    #[test]
    fn sector_counts() {
        assert_eq!(SectorConfig::new(90.0, ms(10)).unwrap().sector_count(), 4);
        assert_eq!(SectorConfig::new(60.0, ms(10)).unwrap().sector_count(), 6);
        assert_eq!(SectorConfig::new(30.0, ms(10)).unwrap().sector_count(), 12);
        assert_eq!(SectorConfig::new(50.0, ms(10)).unwrap().sector_count(), 8);
        assert_eq!(SectorConfig::new(360.0, ms(10)).unwrap().sector_count(), 1);
        assert!(SectorConfig::new(0.0, ms(10)).is_err());
    }

    #[test]
    fn quantization() {
        assert_eq!(sector_index(44.0, 30.0, 12), 1);
        assert_eq!(sector_index(46.0, 30.0, 12), 2);
        assert_eq!(sector_index(359.0, 30.0, 12), 0);
        assert_eq!(sector_index(345.0, 30.0, 12), 0);
        assert_eq!(sector_index(344.9, 30.0, 12), 11);
    }

    #[test]
    fn cbap_wait_examples() {
        let sched = SectorConfig::new(90.0, ms(10))
            .unwrap()
            .schedule(SimTime::ZERO);
        // own window start
        assert_eq!(sched.wait(2, ms(20)).unwrap(), SimTime::ZERO);
        // just after own window ends
        assert_eq!(sched.wait(2, ms(30)).unwrap(), ms(30));
        assert_eq!(
            sched.wait(2, ms(30) + SimTime::from_nanos(1)).unwrap(),
            ms(30) - SimTime::from_nanos(1)
        );
        let six = SectorConfig::new(60.0, ms(10))
            .unwrap()
            .schedule(SimTime::ZERO);
        assert_eq!(six.wait(0, ms(10)).unwrap(), ms(50));
        // inside own window
        assert_eq!(sched.wait(1, ms(15)).unwrap(), SimTime::ZERO);
        assert!(sched.wait(4, ms(0)).is_err());
    }

    #[test]
    fn cbap_before_cycle_start() {
        let sched = SectorConfig::new(90.0, ms(10)).unwrap().schedule(ms(100));
        assert_eq!(
            sched.next_window(1, ms(3)).unwrap(),
            Interval {
                start: ms(110),
                end: ms(120)
            }
        );
    }

    #[test]
    fn sweep_frame_counts() {
        let t = SweepTiming::default();
        let full = sector_sweep(&t, 6, 6, None, f64::NEG_INFINITY, |_, _| 0.0);
        assert_eq!((full.sweep_frames, full.feedback_frames), (36, 1));
        let w = SectorWindow {
            center: 2,
            half_width: 1,
        };
        let r = sector_sweep(&t, 6, 6, Some((w, w)), f64::NEG_INFINITY, |_, _| 0.0);
        assert_eq!(r.sweep_frames, 9);
        let iso = sector_sweep(&t, 1, 1, None, f64::NEG_INFINITY, |_, _| 0.0);
        assert_eq!(iso.sweep_frames, 1);
    }

    #[test]
    fn sweep_cost_is_linear_in_pairs() {
        let t = SweepTiming::default();
        let d1 = t.sweep_duration(1);
        let d9 = t.sweep_duration(9);
        let d36 = t.sweep_duration(36);
        assert_eq!(d9 - d1, t.per_pair().times(8));
        assert_eq!(d36 - d9, t.per_pair().times(27));
    }

    #[test]
    fn sweep_picks_best_and_can_fail() {
        let t = SweepTiming::default();
        let out = sector_sweep(&t, 6, 6, None, 0.0, |a, b| {
            if (a, b) == (4, 1) {
                12.0
            } else {
                -3.0
            }
        });
        assert_eq!(out.beam_pair().unwrap().tx_sector, 4);
        assert_eq!(out.beam_pair().unwrap().rx_sector, 1);
        let failed = sector_sweep(&t, 6, 6, None, 20.0, |_, _| 5.0);
        assert_eq!(failed.beam_pair(), Err(MmwaveError::SweepFailed));
        assert_eq!(failed.duration, t.sweep_duration(36));
    }

    #[test]
    fn window_wraps() {
        let w = SectorWindow {
            center: 0,
            half_width: 1,
        };
        assert_eq!(w.sectors(6), vec![5, 0, 1]);
        assert_eq!(
            SectorWindow {
                center: 3,
                half_width: 3
            }
            .sectors(6)
            .len(),
            6
        );
    }

    #[test]
    fn transfer_seven_gbps() {
        // single sector: always in window
        let sched = SectorConfig::new(360.0, SimTime::from_secs_f64(10.0))
            .unwrap()
            .schedule(SimTime::ZERO);
        let r = transfer(875_000_000, 7e9, &sched, 0, SimTime::ZERO, None).unwrap();
        assert_eq!(r.airtime, SimTime::from_secs_f64(1.0));
        assert_eq!(r.delivered_bytes, 875_000_000);
    }

    #[test]
    fn transfer_across_cbap_boundary() {
        let sched = SectorConfig::new(90.0, ms(10))
            .unwrap()
            .schedule(SimTime::ZERO);
        // 15 ms of airtime starting at the beginning of sector 0's window
        let bytes = 1_875_000; // at 1 Gb/s
        let r = transfer(bytes, 1e9, &sched, 0, SimTime::ZERO, None).unwrap();
        assert_eq!(r.airtime, ms(15));
        assert_eq!(r.segments, 2);
        assert_eq!(r.finished_at, ms(45));
    }

    #[test]
    fn blocked_transfer() {
        let sched = SectorConfig::new(90.0, ms(10))
            .unwrap()
            .schedule(SimTime::ZERO);
        let r = transfer(1000, 0.0, &sched, 0, SimTime::ZERO, None).unwrap();
        assert!(r.interrupted);
        assert_eq!(r.delivered_bytes, 0);
        let r = transfer(10_000_000, 1e9, &sched, 0, SimTime::ZERO, Some(ms(5))).unwrap();
        assert!(r.interrupted);
        assert_eq!(r.delivered_bytes, 625_000);
        assert_eq!(r.remaining_bytes, 10_000_000 - 625_000);
    }

    #[test]
    fn zero_bytes_take_no_time() {
        let sched = SectorConfig::new(90.0, ms(10))
            .unwrap()
            .schedule(SimTime::ZERO);
        let r = transfer(0, 7e9, &sched, 3, ms(1), None).unwrap();
        assert_eq!(r.airtime, SimTime::ZERO);
        assert_eq!(r.finished_at, ms(1));
    }
}

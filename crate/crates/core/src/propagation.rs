//! Link budget: free-space loss with wall attenuation, flat-top directional
//! antenna patterns and SNR-to-rate staircases for both bands.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, PartialEq)]
pub enum PropagationError {
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("beamwidth must lie in (0, 360], got {0}")]
    BadBeamwidth(f64),
    #[error("rate table must be non-empty with strictly increasing thresholds and rates")]
    BadRateTable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "2.4GHz")]
    Wifi24,
    #[serde(rename = "60GHz")]
    Mmwave60,
}

impl Band {
    pub fn frequency_hz(self) -> f64 {
        match self {
            Band::Wifi24 => 2.4e9,
            Band::Mmwave60 => 60e9,
        }
    }

    /// Whether a single wall is enough to cut the link.
    pub fn blocked_by_walls(self) -> bool {
        matches!(self, Band::Mmwave60)
    }
}

/// Free-space loss `20 log10(4 pi d f / c)` in dB.
pub fn friis_db(frequency_hz: f64, distance_m: f64) -> Result<f64, PropagationError> {
    if !(distance_m > 0.0) {
        return Err(PropagationError::NonPositiveDistance(distance_m));
    }
    Ok(20.0 * (4.0 * PI * distance_m * frequency_hz / SPEED_OF_LIGHT).log10())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PathLoss {
    Loss(f64),
    Blocked,
}

impl PathLoss {
    pub fn db(self) -> Option<f64> {
        match self {
            PathLoss::Loss(db) => Some(db),
            PathLoss::Blocked => None,
        }
    }

    pub fn is_blocked(self) -> bool {
        matches!(self, PathLoss::Blocked)
    }
}

pub fn path_loss(
    band: Band,
    distance_m: f64,
    walls_crossed: u32,
    wall_loss_db: f64,
) -> Result<PathLoss, PropagationError> {
    let free = friis_db(band.frequency_hz(), distance_m)?;
    if walls_crossed > 0 && band.blocked_by_walls() {
        return Ok(PathLoss::Blocked);
    }
    Ok(PathLoss::Loss(free + wall_loss_db * walls_crossed as f64))
}

/// Mainlobe gain of an ideal cone of full width `beamwidth_deg`:
/// `10 log10(2 / (1 - cos(bw/2)))`.
pub fn cone_gain_dbi(beamwidth_deg: f64) -> f64 {
    if beamwidth_deg >= 360.0 {
        return 0.0;
    }
    let half = (beamwidth_deg / 2.0).to_radians();
    10.0 * (2.0 / (1.0 - half.cos())).log10()
}

pub const DEFAULT_SIDELOBE_DBI: f64 = -10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntennaPattern {
    pub beamwidth_deg: f64,
    pub mainlobe_dbi: f64,
    pub sidelobe_dbi: f64,
    pub boresight_deg: f64,
}

impl AntennaPattern {
    pub fn isotropic() -> Self {
        AntennaPattern {
            beamwidth_deg: 360.0,
            mainlobe_dbi: 0.0,
            sidelobe_dbi: 0.0,
            boresight_deg: 0.0,
        }
    }

    /// Flat-top sector pattern with cone mainlobe and the default sidelobe.
    pub fn sector(beamwidth_deg: f64, boresight_deg: f64) -> Result<Self, PropagationError> {
        if !(beamwidth_deg > 0.0 && beamwidth_deg <= 360.0) {
            return Err(PropagationError::BadBeamwidth(beamwidth_deg));
        }
        if beamwidth_deg == 360.0 {
            return Ok(Self::isotropic());
        }
        Ok(AntennaPattern {
            beamwidth_deg,
            mainlobe_dbi: cone_gain_dbi(beamwidth_deg),
            sidelobe_dbi: DEFAULT_SIDELOBE_DBI,
            boresight_deg: wrap_deg(boresight_deg),
        })
    }

    pub fn is_isotropic(&self) -> bool {
        self.beamwidth_deg >= 360.0
    }

    pub fn pointed(mut self, boresight_deg: f64) -> Self {
        self.boresight_deg = wrap_deg(boresight_deg);
        self
    }

    /// Gain at an angle off boresight, normalized into `[0, 180]`.
    pub fn gain_off_boresight(&self, angle_deg: f64) -> f64 {
        if self.is_isotropic() {
            return 0.0;
        }
        if angle_off(angle_deg, 0.0) <= self.beamwidth_deg / 2.0 {
            self.mainlobe_dbi
        } else {
            self.sidelobe_dbi
        }
    }

    pub fn gain_towards(&self, bearing_deg: f64) -> f64 {
        self.gain_off_boresight(angle_off(bearing_deg, self.boresight_deg))
    }
}

/// Wraps any angle into `[0, 360)`.
pub fn wrap_deg(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Absolute angular distance in `[0, 180]`.
pub fn angle_off(a: f64, b: f64) -> f64 {
    let d = wrap_deg(a - b);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateStep {
    pub min_snr_db: f64,
    pub rate_bps: f64,
}

/// SNR staircase; rates are looked up, never interpolated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RateTable {
    steps: Vec<RateStep>,
}

impl RateTable {
    pub fn new(steps: Vec<RateStep>) -> Result<Self, PropagationError> {
        let table = RateTable { steps };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), PropagationError> {
        if self.steps.is_empty() {
            return Err(PropagationError::BadRateTable);
        }
        let increasing = self
            .steps
            .windows(2)
            .all(|w| w[1].min_snr_db > w[0].min_snr_db && w[1].rate_bps > w[0].rate_bps);
        if !increasing || self.steps[0].rate_bps <= 0.0 {
            return Err(PropagationError::BadRateTable);
        }
        Ok(())
    }

    pub fn default_for(band: Band) -> Self {
        let pairs: &[(f64, f64)] = match band {
            // 802.11g-style ladder
            Band::Wifi24 => &[
                (2.0, 6e6),
                (4.0, 9e6),
                (6.0, 12e6),
                (9.0, 18e6),
                (12.0, 24e6),
                (16.0, 36e6),
                (20.0, 48e6),
                (22.0, 54e6),
            ],
            Band::Mmwave60 => &[
                (0.0, 385e6),
                (2.0, 770e6),
                (4.0, 1155e6),
                (5.5, 1540e6),
                (7.0, 2310e6),
                (10.0, 3080e6),
                (13.0, 4620e6),
                (17.0, 7000e6),
            ],
        };
        RateTable {
            steps: pairs
                .iter()
                .map(|&(min_snr_db, rate_bps)| RateStep {
                    min_snr_db,
                    rate_bps,
                })
                .collect(),
        }
    }

    pub fn steps(&self) -> &[RateStep] {
        &self.steps
    }

    pub fn min_snr_db(&self) -> f64 {
        self.steps[0].min_snr_db
    }

    pub fn peak_rate(&self) -> f64 {
        self.steps[self.steps.len() - 1].rate_bps
    }

    pub fn rate(&self, snr_db: f64) -> f64 {
        self.steps
            .iter()
            .rev()
            .find(|s| snr_db >= s.min_snr_db)
            .map_or(0.0, |s| s.rate_bps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkBudget {
    pub rx_power_dbm: f64,
    pub snr_db: f64,
    pub blocked: bool,
    pub rate_bps: f64,
}

impl LinkBudget {
    pub fn blocked() -> Self {
        LinkBudget {
            rx_power_dbm: f64::NEG_INFINITY,
            snr_db: f64::NEG_INFINITY,
            blocked: true,
            rate_bps: 0.0,
        }
    }

    pub fn usable(&self) -> bool {
        !self.blocked && self.rate_bps > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioParams {
    pub tx_power_dbm: f64,
    pub noise_floor_dbm: f64,
    pub rates: RateTable,
}

/// Per-band radio constants and the wall model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkModel {
    pub wall_loss_db: f64,
    pub wifi24: RadioParams,
    pub mmwave60: RadioParams,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            wall_loss_db: 5.0,
            wifi24: RadioParams {
                tx_power_dbm: 10.0,
                noise_floor_dbm: -85.0,
                rates: RateTable::default_for(Band::Wifi24),
            },
            mmwave60: RadioParams {
                tx_power_dbm: 10.0,
                noise_floor_dbm: -70.0,
                rates: RateTable::default_for(Band::Mmwave60),
            },
        }
    }
}

impl Default for RadioParams {
    fn default() -> Self {
        LinkModel::default().wifi24
    }
}

impl LinkModel {
    pub fn radio(&self, band: Band) -> &RadioParams {
        match band {
            Band::Wifi24 => &self.wifi24,
            Band::Mmwave60 => &self.mmwave60,
        }
    }

    pub fn achievable_rate(&self, band: Band, snr_db: f64) -> f64 {
        self.radio(band).rates.rate(snr_db)
    }

    pub fn evaluate(
        &self,
        band: Band,
        distance_m: f64,
        walls_crossed: u32,
        tx_gain_dbi: f64,
        rx_gain_dbi: f64,
    ) -> Result<LinkBudget, PropagationError> {
        let radio = self.radio(band);
        match path_loss(band, distance_m, walls_crossed, self.wall_loss_db)? {
            PathLoss::Blocked => Ok(LinkBudget::blocked()),
            PathLoss::Loss(pl) => {
                let rx = radio.tx_power_dbm + tx_gain_dbi + rx_gain_dbi - pl;
                let snr = rx - radio.noise_floor_dbm;
                Ok(LinkBudget {
                    rx_power_dbm: rx,
                    snr_db: snr,
                    blocked: false,
                    rate_bps: radio.rates.rate(snr),
                })
            }
        }
    }
}

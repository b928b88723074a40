//! Parameter sweeps over one scalar scenario key.

use rayon::prelude::*;
use toml::Table;

use super::config::{get_path, is_scalar, parse_value, resolve_alias, set_path, validate};
use super::{run_scenario, Scenario, ScenarioError};
use crate::metrics::MetricsRecord;

/// Seed offset between consecutive sweep points.
pub const SEED_STRIDE: u64 = 1000;

/// Seed of replicate `r` at point `i`: `base + i * SEED_STRIDE + r`.
pub fn sweep_seed(base: u64, point: usize, replicate: u32) -> u64 {
    base.wrapping_add(point as u64 * SEED_STRIDE)
        .wrapping_add(replicate as u64)
}

/// Returns a copy of `s` with one dotted key replaced. The key must name a
/// scalar parameter; the result is not validated.
pub fn apply_override(s: &Scenario, key: &str, raw: &str) -> Result<Scenario, ScenarioError> {
    let key = resolve_alias(key);
    let bad = |reason: String| ScenarioError::Override {
        key: key.to_string(),
        reason,
    };
    let mut table = Table::try_from(s).map_err(|e| bad(e.to_string()))?;
    set_path(&mut table, key, parse_value(raw)).map_err(bad)?;
    let out: Scenario = table
        .try_into()
        .map_err(|e: toml::de::Error| bad(e.message().to_string()))?;
    let effective = Table::try_from(&out).map_err(|e| bad(e.to_string()))?;
    match get_path(&effective, key) {
        Some(v) if is_scalar(v) => Ok(out),
        _ => Err(bad("not a scalar parameter".into())),
    }
}

#[derive(Clone, Debug)]
pub struct Sweep {
    pub base: Scenario,
    pub axis: String,
    pub values: Vec<String>,
    pub seeds_per_point: u32,
}

impl Sweep {
    /// Every (point, replicate) scenario in row order, validated up front.
    pub fn scenarios(&self) -> Result<Vec<Scenario>, ScenarioError> {
        let mut out = Vec::new();
        for (i, v) in self.values.iter().enumerate() {
            let mut point = apply_override(&self.base, &self.axis, v)?;
            validate(&point, None)?;
            let run_id = format!("{}-{}={}", self.base.run_id, resolve_alias(&self.axis), v);
            for r in 0..self.seeds_per_point.max(1) {
                point.seed = sweep_seed(self.base.seed, i, r);
                point.run_id = format!("{run_id}-r{r}");
                out.push(point.clone());
            }
        }
        Ok(out)
    }
}

/// Runs every sweep point in parallel; rows come back in point order.
pub fn run_sweep(sweep: &Sweep) -> Result<Vec<MetricsRecord>, ScenarioError> {
    let jobs = sweep.scenarios()?;
    jobs.par_iter()
        .map(|s| run_scenario(s, false).map(|o| o.record))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_floorplan;

    #[test]
    fn seeds_are_documented_formula() {
        assert_eq!(sweep_seed(7, 0, 0), 7);
        assert_eq!(sweep_seed(7, 2, 3), 2010);
    }

    #[test]
    fn sweep_rows_in_point_order() {
        let mut base = default_floorplan();
        base.duration_s = 0.05;
        base.beamtrack.enabled = false;
        let sweep = Sweep {
            base,
            axis: "devices".into(),
            values: vec!["2".into(), "4".into()],
            seeds_per_point: 3,
        };
        let rows = run_sweep(&sweep).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].run_id, "default-discovery.devices=2-r0");
        assert_eq!(rows[4].seed, sweep_seed(1, 1, 1));
        assert!(rows[..3].iter().all(|r| r.standalone_discovered == 2));
        assert!(rows[3..].iter().all(|r| r.standalone_discovered == 4));
    }

    #[test]
    fn unknown_axis_rejected() {
        let s = default_floorplan();
        assert!(apply_override(&s, "mmwave.width", "3").is_err());
        assert!(apply_override(&s, "traffic", "3").is_err());
        assert_eq!(
            apply_override(&s, "beamwidth", "30")
                .unwrap()
                .mmwave
                .beamwidth_deg,
            30.0
        );
    }
}

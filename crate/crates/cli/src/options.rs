//! Tracker settings from a TOML file, overridden by flags or `GEOTRACK_*` variables.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use geotrack::TrackerConfig;

use crate::UsageError;

#[derive(Args, Debug, Clone, Default)]
pub struct TrackerFlags {
    /// TOML file with tracker settings (same keys as the flags below).
    #[arg(long, env = "GEOTRACK_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "GEOTRACK_ALPHA")]
    pub alpha: Option<f64>,
    #[arg(long, visible_alias = "conf_object", env = "GEOTRACK_CONF_OBJECT")]
    pub conf_object: Option<f64>,
    #[arg(long, visible_alias = "conf_target", env = "GEOTRACK_CONF_TARGET")]
    pub conf_target: Option<f64>,
    #[arg(long, visible_alias = "min_coverage", env = "GEOTRACK_MIN_COVERAGE")]
    pub min_coverage: Option<f64>,
    #[arg(long, visible_alias = "iou_gate", env = "GEOTRACK_IOU_GATE")]
    pub iou_gate: Option<f64>,
    #[arg(long, visible_alias = "k_min", env = "GEOTRACK_K_MIN")]
    pub k_min: Option<f64>,
    #[arg(long, visible_alias = "k_max", env = "GEOTRACK_K_MAX")]
    pub k_max: Option<f64>,
    #[arg(long, visible_alias = "c_k", env = "GEOTRACK_C_K")]
    pub c_k: Option<f64>,
    #[arg(long, visible_alias = "min_hits", env = "GEOTRACK_MIN_HITS")]
    pub min_hits: Option<u32>,
    #[arg(long, visible_alias = "extension_rate", env = "GEOTRACK_EXTENSION_RATE")]
    pub extension_rate: Option<f64>,
    #[arg(long, visible_alias = "detection_score_threshold", env = "GEOTRACK_DETECTION_SCORE_THRESHOLD")]
    pub detection_score_threshold: Option<f64>,
    #[arg(long, visible_alias = "require_reid_support", env = "GEOTRACK_REQUIRE_REID_SUPPORT",
          num_args = 0..=1, default_missing_value = "true")]
    pub require_reid_support: Option<bool>,
    #[arg(long, visible_alias = "emit_occluded", env = "GEOTRACK_EMIT_OCCLUDED",
          num_args = 0..=1, default_missing_value = "true")]
    pub emit_occluded: Option<bool>,
    #[arg(long, visible_alias = "occluded_resets_time_since_update",
          env = "GEOTRACK_OCCLUDED_RESETS_TIME_SINCE_UPDATE", num_args = 0..=1, default_missing_value = "true")]
    pub occluded_resets_time_since_update: Option<bool>,
    /// Turn off both occlusion branches and keep lost tracks for one frame only.
    #[arg(long)]
    pub no_occlusion_handling: bool,
}

impl TrackerFlags {
    pub fn resolve(&self) -> anyhow::Result<TrackerConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))
                    .map_err(|e| UsageError(format!("{e:#}")))?;
                toml::from_str::<TrackerConfig>(&text)
                    .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?
            }
            None => TrackerConfig::default(),
        };
        if self.no_occlusion_handling {
            let off = TrackerConfig::without_occlusion_handling();
            cfg.conf_object = off.conf_object;
            cfg.conf_target = off.conf_target;
            cfg.k_min = off.k_min;
            cfg.k_max = off.k_max;
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        set!(
            alpha,
            conf_object,
            conf_target,
            min_coverage,
            iou_gate,
            k_min,
            k_max,
            c_k,
            min_hits,
            extension_rate,
            detection_score_threshold,
            require_reid_support,
            emit_occluded,
            occluded_resets_time_since_update
        );
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}

/// Parses `a,b,c` or an inclusive `start:stop:step` range.
pub fn parse_values(spec: &str) -> Result<Vec<f64>, UsageError> {
    let bad = |m: &str| UsageError(format!("value list '{spec}': {m}"));
    let values = if let Some((start, rest)) = spec.split_once(':') {
        let (stop, step) = rest.split_once(':').ok_or_else(|| bad("expected start:stop:step"))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
            return Err(bad("step must be positive"));
        }
        let n = ((stop - start) / step + 1e-9).floor();
        if n < 0.0 {
            return Err(bad("empty range"));
        }
        // rounded so 0.1 steps print and compare cleanly
        (0..=n as usize).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect()
    } else {
        spec.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("not a number")))
            .collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err(bad("empty"));
    }
    Ok(values)
}

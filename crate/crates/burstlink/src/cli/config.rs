//! Flat key=value configuration files with section prefixes.
//!
//! Format: one `section.key=value` per line, `#` starts a comment, blank
//! lines ignored. Example:
//!
//! ```text
//! # modem setup
//! psk.slot_len=512
//! psk.fec=rep-2
//! channel.cfo=0.002
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::dsp::ChannelParams;
use crate::phy::{default_preamble, BurstConfig, CodecId};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {err}")]
    Io { path: String, err: String },
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config key {key}: {msg}")]
    Value { key: String, msg: String },
    #[error("unknown config key {0}")]
    UnknownKey(String),
}

/// Parsed configuration: flat map of `section.key` to raw string values.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Parse {
                    line: i + 1,
                    msg: format!("expected key=value, got {line:?}"),
                });
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            err: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    fn parse_into<T: std::str::FromStr>(&self, key: &str, slot: &mut T) -> Result<(), ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.get(key) {
            *slot = v.parse().map_err(|e| ConfigError::Value {
                key: key.to_string(),
                msg: format!("{e}"),
            })?;
        }
        Ok(())
    }

    /// Build a [`BurstConfig`] for one modem section (`psk` or `fsk`),
    /// starting from the modem's defaults.
    pub fn burst_config(&self, section: &str) -> Result<BurstConfig, ConfigError> {
        let mut c = default_for_section(section);
        let known = [
            "preamble_len",
            "fec",
            "fec_k",
            "sps",
            "rrc_beta",
            "rrc_span",
            "slot_len",
            "min_lead",
            "detect_threshold",
            "max_burst_samples",
            "fsk_sensitivity",
            "randomize",
            "avg_window",
            "variance_window",
            "fsk_detect_threshold",
            "envelope_window",
            "length_alpha",
            "sync_corr_floor",
            "fsk_corr_floor",
            "eq_taps",
            "trigger_holdoff",
            "feedback_period",
            "history_depth",
        ];
        for key in self.entries.keys() {
            if let Some(rest) = key.strip_prefix(&format!("{section}.")) {
                if !known.contains(&rest) {
                    return Err(ConfigError::UnknownKey(key.clone()));
                }
            }
        }
        let k = |name: &str| format!("{section}.{name}");

        let mut preamble_len = c.preamble_bits.len();
        self.parse_into(&k("preamble_len"), &mut preamble_len)?;
        c.preamble_bits = default_preamble(preamble_len);

        let mut fec_k = c.codec().k();
        self.parse_into(&k("fec_k"), &mut fec_k)?;
        let mut fec_name = match &c.fec {
            CodecId::None { .. } => "none".to_string(),
            CodecId::Repetition { r, .. } => format!("rep-{r}"),
            CodecId::Ldpc { name } => format!("ldpc:{name}"),
        };
        self.parse_into(&k("fec"), &mut fec_name)?;
        c.fec = CodecId::parse(&fec_name, fec_k).map_err(|e| ConfigError::Value {
            key: k("fec"),
            msg: e.to_string(),
        })?;

        self.parse_into(&k("sps"), &mut c.sps)?;
        self.parse_into(&k("rrc_beta"), &mut c.rrc_beta)?;
        self.parse_into(&k("rrc_span"), &mut c.rrc_span)?;
        self.parse_into(&k("slot_len"), &mut c.slot_len)?;
        self.parse_into(&k("min_lead"), &mut c.min_lead)?;
        self.parse_into(&k("detect_threshold"), &mut c.detect_threshold)?;
        self.parse_into(&k("max_burst_samples"), &mut c.max_burst_samples)?;
        self.parse_into(&k("fsk_sensitivity"), &mut c.fsk_sensitivity)?;
        self.parse_into(&k("randomize"), &mut c.randomize)?;
        self.parse_into(&k("avg_window"), &mut c.avg_window)?;
        self.parse_into(&k("variance_window"), &mut c.variance_window)?;
        self.parse_into(&k("fsk_detect_threshold"), &mut c.fsk_detect_threshold)?;
        self.parse_into(&k("envelope_window"), &mut c.envelope_window)?;
        self.parse_into(&k("length_alpha"), &mut c.length_alpha)?;
        self.parse_into(&k("sync_corr_floor"), &mut c.sync_corr_floor)?;
        self.parse_into(&k("fsk_corr_floor"), &mut c.fsk_corr_floor)?;
        self.parse_into(&k("eq_taps"), &mut c.eq_taps)?;
        self.parse_into(&k("trigger_holdoff"), &mut c.trigger_holdoff)?;
        self.parse_into(&k("feedback_period"), &mut c.feedback_period)?;
        self.parse_into(&k("history_depth"), &mut c.history_depth)?;
        Ok(c)
    }

    /// Channel parameters from the `channel.` section.
    pub fn channel_params(&self, seed: u64) -> Result<ChannelParams, ConfigError> {
        let mut p = ChannelParams {
            seed,
            ..ChannelParams::default()
        };
        self.parse_into("channel.noise_voltage", &mut p.noise_voltage)?;
        self.parse_into("channel.cfo", &mut p.cfo)?;
        self.parse_into("channel.phase0", &mut p.phase0)?;
        self.parse_into("channel.integer_delay", &mut p.integer_delay)?;
        Ok(p)
    }

    /// Canonical text of the effective entries, used for the config hash.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

/// Per-modem defaults: the FSK timeline runs at sample rate, so its slots
/// are twice the PSK symbol slots.
pub fn default_for_section(section: &str) -> BurstConfig {
    let mut c = BurstConfig::default();
    if section == "fsk" {
        c.slot_len = 1024;
    }
    c
}

/// FNV-1a over the canonical config text plus the seed; stamped into every
/// CSV output for provenance.
pub fn config_hash(config: &ConfigMap, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(config.canonical().as_bytes());
    eat(&seed.to_le_bytes());
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_comments_blanks() {
        let text = "\n# comment\npsk.slot_len=256   # trailing\nchannel.cfo=0.01\n";
        let cfg = ConfigMap::parse(text).unwrap();
        assert_eq!(cfg.get("psk.slot_len"), Some("256"));
        let bc = cfg.burst_config("psk").unwrap();
        assert_eq!(bc.slot_len, 256);
        let ch = cfg.channel_params(1).unwrap();
        assert_eq!(ch.cfo, 0.01);
    }

    #[test]
    fn rejects_malformed_lines_and_unknown_keys() {
        assert!(ConfigMap::parse("nonsense").is_err());
        let cfg = ConfigMap::parse("psk.slto_len=1").unwrap();
        assert!(matches!(
            cfg.burst_config("psk"),
            Err(ConfigError::UnknownKey(_))
        ));
    }

    #[test]
    fn fec_strings_round_trip() {
        let cfg = ConfigMap::parse("psk.fec=rep-2\npsk.fec_k=64").unwrap();
        let bc = cfg.burst_config("psk").unwrap();
        assert_eq!(bc.fec, CodecId::Repetition { k: 64, r: 2 });
    }

    #[test]
    fn hash_depends_on_content_and_seed() {
        let a = ConfigMap::parse("psk.sps=2").unwrap();
        let b = ConfigMap::parse("psk.sps=4").unwrap();
        assert_ne!(config_hash(&a, 1), config_hash(&b, 1));
        assert_ne!(config_hash(&a, 1), config_hash(&a, 2));
        assert_eq!(config_hash(&a, 1), config_hash(&a, 1));
    }
}

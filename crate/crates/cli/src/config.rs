//! Flat dotted-key configuration: defaults, file parsing, `--set` overrides,
//! and the mapping onto a [`LinkConfig`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use async_mimo::rates::PowerScaling;
use async_mimo::{DelayDist, Error, LinkConfig, PilotKind, PulseSpec, ReceiverKind, Result};
use sha2::{Digest, Sha256};

/// Every accepted key with its default. `auto` and the empty string mark
/// values derived from the rest of the configuration.
const KNOWN: &[(&str, &str)] = &[
    ("link.K", "2"),
    ("link.M", "64"),
    ("link.N", "64"),
    ("link.Np", "auto"),
    ("link.rho_d_db", "20"),
    ("link.rho_p_db", "auto"),
    ("link.e", "0.5"),
    ("link.e_s", ""),
    ("link.detect_origins", ""),
    ("link.pathloss", ""),
    ("link.seed", "0"),
    ("pulse.family", "rect"),
    ("pulse.rolloff", "0.5"),
    ("pulse.sidelobes", "3"),
    ("pilot.family", "hadamard"),
    ("delay.kind", "mixture"),
    ("delay.point", "0"),
    ("delay.lo", "0"),
    ("delay.hi", "1"),
    ("run.receiver", "mrc-perfect"),
    ("run.trials", "10000"),
    ("run.k_list", "2..16"),
    ("run.grid_step", "0.01"),
    ("run.scaling", "over-m"),
    ("run.e_d", "100"),
    ("run.m_list", "64,128,256,512,1024"),
    ("output.format", "csv"),
    ("output.path", ""),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Fully resolved key-value configuration. Resolution order: built-in
/// defaults, then the config file, then `--set` pairs, then direct flags.
#[derive(Debug, Clone)]
pub struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    pub fn defaults() -> Self {
        Self {
            map: KNOWN
                .iter()
                .map(|&(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    fn check_key(key: &str) -> Result<()> {
        if KNOWN.iter().any(|&(k, _)| k == key) {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown configuration key `{key}`")))
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        Self::check_key(key)?;
        self.map.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Load `key = value` lines; `#` starts a comment, blank lines skipped.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Apply one `key=value` override from `--set`.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{pair}`")))?;
        self.set(key.trim(), value)
    }

    pub fn get(&self, key: &str) -> &str {
        self.map
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("key {key} missing from defaults"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T> {
        let raw = self.get(key);
        raw.parse()
            .map_err(|_| Error::Config(format!("{key}: invalid {what} `{raw}`")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parse(key, "integer")
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.parse(key, "number")
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.get(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{key}: invalid number `{}`", s.trim())))
            })
            .collect()
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        self.get(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{key}: invalid integer `{}`", s.trim())))
            })
            .collect()
    }

    /// `lo..hi[:step]` (inclusive, step defaults to 2 to walk the
    /// conventional even user counts), a comma list, or a single integer.
    pub fn usize_range(&self, key: &str) -> Result<Vec<usize>> {
        let raw = self.get(key);
        if let Some((lo, rest)) = raw.split_once("..") {
            let (hi, step) = match rest.split_once(':') {
                Some((h, s)) => (h, s.trim().parse().ok()),
                None => (rest, Some(2usize)),
            };
            let lo: Option<usize> = lo.trim().parse().ok();
            let hi: Option<usize> = hi.trim().parse().ok();
            match (lo, hi, step) {
                (Some(lo), Some(hi), Some(step)) if step > 0 && lo <= hi => {
                    return Ok((lo..=hi).step_by(step).collect());
                }
                _ => {
                    return Err(Error::Config(format!(
                        "{key}: invalid range `{raw}`, expected lo..hi[:step]"
                    )));
                }
            }
        }
        self.usize_list(key)
    }

    pub fn pulse(&self) -> Result<PulseSpec> {
        match self.get("pulse.family") {
            "rect" => Ok(PulseSpec::rectangular()),
            "rrc" => PulseSpec::root_raised_cosine(
                self.f64("pulse.rolloff")?,
                self.parse("pulse.sidelobes", "integer")?,
            ),
            other => Err(Error::Config(format!(
                "pulse.family: expected rect or rrc, got `{other}`"
            ))),
        }
    }

    pub fn receiver(&self) -> Result<ReceiverKind> {
        parse_receiver(self.get("run.receiver"))
    }

    pub fn scaling(&self) -> Result<PowerScaling> {
        match self.get("run.scaling") {
            "over-m" => Ok(PowerScaling::PowerOverM),
            "over-sqrt-m" => Ok(PowerScaling::PowerOverSqrtM),
            "saturation" => Ok(PowerScaling::Saturation),
            other => Err(Error::Config(format!(
                "run.scaling: expected over-m, over-sqrt-m or saturation, got `{other}`"
            ))),
        }
    }

    pub fn output_format(&self) -> Result<OutputFormat> {
        match self.get("output.format") {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!(
                "output.format: expected csv or json, got `{other}`"
            ))),
        }
    }

    /// Assemble and validate the scenario this configuration describes.
    pub fn link_config(&self) -> Result<LinkConfig> {
        let users = self.usize("link.K")?;
        if users == 0 {
            return Err(Error::Config("link.K: must be at least 1".into()));
        }
        let pilot_len = match self.get("link.Np") {
            "auto" => users.next_power_of_two(),
            _ => self.usize("link.Np")?,
        };
        let rho_d = db_to_linear(self.f64("link.rho_d_db")?);
        let rho_p = match self.get("link.rho_p_db") {
            "auto" => pilot_len as f64 * rho_d,
            _ => db_to_linear(self.f64("link.rho_p_db")?),
        };
        let delays = match self.get("delay.kind") {
            "mixture" => DelayDist::standard_mixture(users)?,
            "point" => DelayDist::point_mass(self.f64("delay.point")?)?,
            "uniform" => DelayDist::uniform(self.f64("delay.lo")?, self.f64("delay.hi")?)?,
            other => Err(Error::Config(format!(
                "delay.kind: expected mixture, point or uniform, got `{other}`"
            )))?,
        };
        let pilot_kind = match self.get("pilot.family") {
            "hadamard" => PilotKind::Hadamard,
            "zc" => PilotKind::ZadoffChu {
                cyclic_guard: false,
            },
            "zc-guard" => PilotKind::ZadoffChu { cyclic_guard: true },
            other => Err(Error::Config(format!(
                "pilot.family: expected hadamard, zc or zc-guard, got `{other}`"
            )))?,
        };
        let pathloss = match self.get("link.pathloss") {
            "" => vec![1.0; users],
            _ => self.f64_list("link.pathloss")?,
        };
        let est_origin = match self.get("link.e_s") {
            "" => None,
            _ => Some(self.f64("link.e_s")?),
        };
        let detect_origins = match self.get("link.detect_origins") {
            "" => None,
            _ => Some(self.f64_list("link.detect_origins")?),
        };
        let cfg = LinkConfig {
            users,
            antennas: self.usize("link.M")?,
            block_len: self.usize("link.N")?,
            pilot_len,
            rho_d,
            rho_p,
            sampling_origin: self.f64("link.e")?,
            est_origin,
            detect_origins,
            pathloss,
            pilot_kind,
            seed: self.parse("link.seed", "integer")?,
            pulse: self.pulse()?,
            delays,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 over the resolved `key=value` lines, excluding the output
    /// destination. Identical hashes mean identical computed results.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.map {
            if k == "output.path" {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        let mut hex = String::new();
        for b in h.finalize() {
            let _ = write!(hex, "{b:02x}");
        }
        hex
    }
}

pub fn parse_receiver(name: &str) -> Result<ReceiverKind> {
    match name {
        "mrc-perfect" => Ok(ReceiverKind::MrcPerfect),
        "mrc-imperfect" => Ok(ReceiverKind::MrcImperfect),
        "mrczf-perfect" => Ok(ReceiverKind::MrczfPerfect),
        "mrczf-imperfect" => Ok(ReceiverKind::MrczfImperfect),
        other => Err(Error::Config(format!(
            "receiver: expected mrc-perfect, mrc-imperfect, mrczf-perfect or \
             mrczf-imperfect, got `{other}`"
        ))),
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_rejected() {
        let mut s = Settings::defaults();
        assert!(s.set("link.bogus", "1").is_err());
        assert!(s.apply_override("pulse.family=rrc").is_ok());
    }

    #[test]
    fn range_forms() {
        let mut s = Settings::defaults();
        s.set("run.k_list", "2..8").unwrap();
        assert_eq!(s.usize_range("run.k_list").unwrap(), vec![2, 4, 6, 8]);
        s.set("run.k_list", "2..7:1").unwrap();
        assert_eq!(s.usize_range("run.k_list").unwrap(), vec![2, 3, 4, 5, 6, 7]);
        s.set("run.k_list", "3,9").unwrap();
        assert_eq!(s.usize_range("run.k_list").unwrap(), vec![3, 9]);
        s.set("run.k_list", "8..2").unwrap();
        assert!(s.usize_range("run.k_list").is_err());
    }

    #[test]
    fn hash_ignores_output_path() {
        let mut a = Settings::defaults();
        let mut b = Settings::defaults();
        b.set("output.path", "/tmp/x.csv").unwrap();
        assert_eq!(a.hash(), b.hash());
        a.set("link.K", "7").unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn default_config_validates() {
        let cfg = Settings::defaults().link_config().unwrap();
        assert_eq!(cfg.users, 2);
        assert_eq!(cfg.pilot_len, 2);
        assert!((cfg.rho_d - 100.0).abs() < 1e-9);
        assert!((cfg.rho_p - 200.0).abs() < 1e-9);
    }
}

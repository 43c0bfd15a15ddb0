use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, Delimiter};
use crate::error::{Error, Result};
use crate::sampling::{SamplingSpec, DEFAULT_SEED};
use crate::tagger::{GridSpace, TrainingConfig};

/// The four compared settings, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "FT")]
    Ft,
    #[serde(rename = "FT+SS")]
    FtSs,
    #[serde(rename = "FT+TL")]
    FtTl,
    #[serde(rename = "FT+TL+SS")]
    FtTlSs,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::Ft, Setting::FtSs, Setting::FtTl, Setting::FtTlSs];

    pub fn name(self) -> &'static str {
        match self {
            Setting::Ft => "FT",
            Setting::FtSs => "FT+SS",
            Setting::FtTl => "FT+TL",
            Setting::FtTlSs => "FT+TL+SS",
        }
    }

    pub fn uses_transfer(self) -> bool {
        matches!(self, Setting::FtTl | Setting::FtTlSs)
    }

    pub fn uses_structshot(self) -> bool {
        matches!(self, Setting::FtSs | Setting::FtTlSs)
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown setting {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferMode {
    /// One transfer on the union of the per-category samples.
    #[default]
    Aggregate,
    /// One transfer per category on its own sample.
    Individual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestartMode {
    /// Restart `i` reseeds initialisation and batch order with `seed + i`.
    #[default]
    InitAndData,
    /// Batch order stays on the base seed.
    InitOnly,
}

impl RestartMode {
    pub fn init_only(self) -> bool {
        self == RestartMode::InitOnly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineTuneSpec {
    pub category: Category,
    pub sampling: SamplingSpec,
}

impl Default for FineTuneSpec {
    fn default() -> Self {
        FineTuneSpec {
            category: Category::Memc,
            sampling: SamplingSpec::proportion(0.10, DEFAULT_SEED),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferSpec {
    /// Sentences drawn from each target category.
    pub count: usize,
    pub mode: TransferMode,
    pub seed: u64,
    pub categories: Vec<Category>,
    pub validation_fraction: f64,
}

impl Default for TransferSpec {
    fn default() -> Self {
        TransferSpec {
            count: 64,
            mode: TransferMode::Aggregate,
            seed: DEFAULT_SEED,
            categories: Category::TRANSFER_TARGETS.to_vec(),
            validation_fraction: crate::sampling::VALIDATION_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StructShotSpec {
    pub temperature: f64,
    /// Category whose few-sample training set supplies the tag transitions.
    pub transition_category: Category,
}

impl Default for StructShotSpec {
    fn default() -> Self {
        StructShotSpec {
            temperature: 1.0,
            transition_category: Category::Memc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub encoder: String,
    pub data_root: PathBuf,
    pub delimiter: Delimiter,
    pub settings: Vec<Setting>,
    pub fine_tune: FineTuneSpec,
    pub transfer: Option<TransferSpec>,
    pub structshot: Option<StructShotSpec>,
    pub grid: GridSpace,
    pub training: TrainingConfig,
    pub restarts: usize,
    pub restart_mode: RestartMode,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            encoder: "random".into(),
            data_root: PathBuf::from("data/viem"),
            delimiter: Delimiter::default(),
            settings: Setting::ALL.to_vec(),
            fine_tune: FineTuneSpec::default(),
            transfer: Some(TransferSpec::default()),
            structshot: Some(StructShotSpec::default()),
            grid: GridSpace::default(),
            training: TrainingConfig::default(),
            restarts: 10,
            restart_mode: RestartMode::default(),
            output_dir: PathBuf::from("runs/experiment"),
        }
    }
}

impl ExperimentConfig {
    /// Checks that every requested stage has what it depends on.
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be positive".into()));
        }
        if self.settings.is_empty() {
            return Err(Error::Config("no settings requested".into()));
        }
        if self.grid.learning_rates.is_empty() || self.grid.epochs.is_empty() {
            return Err(Error::Config("empty grid".into()));
        }
        self.training.validate()?;
        for s in &self.settings {
            if s.uses_transfer() && self.transfer.is_none() {
                return Err(Error::Config(format!("{s} needs a transfer stage")));
            }
            if s.uses_structshot() && self.structshot.is_none() {
                return Err(Error::Config(format!("{s} needs a structshot stage")));
            }
            if s.uses_structshot() && self.transfer.is_none() {
                return Err(Error::Config(format!(
                    "{s} draws its support sets from the transfer sample, which is not configured"
                )));
            }
        }
        if let Some(t) = &self.transfer {
            if t.count == 0 || t.categories.is_empty() {
                return Err(Error::Config("transfer needs a positive count and categories".into()));
            }
            if t.categories.contains(&self.fine_tune.category) {
                return Err(Error::Config("transfer targets include the fine-tuning category".into()));
            }
        }
        Ok(())
    }

    /// Settings in table order, duplicates removed.
    pub fn ordered_settings(&self) -> Vec<Setting> {
        Setting::ALL.into_iter().filter(|s| self.settings.contains(s)).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(path))?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn training_for_restart(&self, restart: u64) -> TrainingConfig {
        self.training.for_restart(restart, self.restart_mode.init_only())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn missing_stage_is_config_error() {
        let c = ExperimentConfig {
            transfer: None,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ExperimentConfig {
            structshot: None,
            settings: vec![Setting::FtTlSs],
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            transfer: None,
            structshot: None,
            settings: vec![Setting::Ft],
            ..Default::default()
        };
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"encoder":"x","restarts":2,"settings":["FT+TL","FT"]}"#).unwrap();
        assert_eq!(c.restarts, 2);
        assert_eq!(c.ordered_settings(), vec![Setting::Ft, Setting::FtTl]);
        assert_eq!(c.training.batch_size, 2);
    }

    #[test]
    fn setting_names() {
        for s in Setting::ALL {
            assert_eq!(s.name().parse::<Setting>().unwrap(), s);
        }
    }
}

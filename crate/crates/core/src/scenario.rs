//! Seeded generator of weekly scenarios.
//!
//! Every scenario is a pure function of its [`GeneratorConfig`]. The generator
//! uses `ChaCha8Rng::seed_from_u64(seed)` (rand_chacha 0.3) and draws, in
//! order: one capacity per schedule in id order (random setting only), then
//! for each container its earliest day followed by its due day, each via
//! `Rng::gen_range` of rand 0.8.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::{schedule_pairs, Container, CostModel, Money, WeekScenario, DAYS, MAX_CAPACITY, NUM_SCHEDULES};
use crate::error::{Error, Result};

/// Slots per schedule: the same fixed count everywhere, or an independent
/// uniform draw from `0..=6` per schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CapacitySetting {
    Fixed(u32),
    RandomUniform,
}

impl CapacitySetting {
    /// The seven studied settings: fixed 1 through 6, then random.
    pub const ALL: [CapacitySetting; 7] = [
        CapacitySetting::Fixed(1),
        CapacitySetting::Fixed(2),
        CapacitySetting::Fixed(3),
        CapacitySetting::Fixed(4),
        CapacitySetting::Fixed(5),
        CapacitySetting::Fixed(6),
        CapacitySetting::RandomUniform,
    ];

    pub fn fixed(k: u32) -> Result<Self> {
        if (1..=MAX_CAPACITY).contains(&k) {
            Ok(Self::Fixed(k))
        } else {
            Err(Error::InvalidConfig(format!(
                "fixed capacity must be in 1..={MAX_CAPACITY}, got {k}"
            )))
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Self::Fixed(k) => Self::fixed(k).map(|_| ()),
            Self::RandomUniform => Ok(()),
        }
    }
}

impl fmt::Display for CapacitySetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(k) => write!(f, "{k}"),
            Self::RandomUniform => f.write_str("random"),
        }
    }
}

impl FromStr for CapacitySetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(Self::RandomUniform),
            other => other
                .parse::<u32>()
                .map_err(|_| Error::InvalidConfig(format!("capacity must be 1..=6 or 'random', got '{s}'")))
                .and_then(Self::fixed),
        }
    }
}

impl Serialize for CapacitySetting {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CapacitySetting {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Str(String),
        }
        let parsed = match Raw::deserialize(deserializer)? {
            Raw::Int(k) => CapacitySetting::fixed(k),
            Raw::Str(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Per-container train price for each schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainTariff {
    /// Every schedule costs the same.
    Uniform { cost: Money },
    /// `base + per_day * (7 - depart_day)`: departures later in the week are cheaper.
    DepartureDiscount { base: Money, per_day: Money },
    /// Explicit price per schedule id.
    PerSchedule { costs: Vec<Money> },
}

impl Default for TrainTariff {
    fn default() -> Self {
        // Prices 11..=17, averaging 15 over the 28 schedules.
        Self::DepartureDiscount { base: 11, per_day: 1 }
    }
}

impl TrainTariff {
    pub fn costs(&self) -> Result<[Money; NUM_SCHEDULES]> {
        let mut out = [0; NUM_SCHEDULES];
        match self {
            Self::Uniform { cost } => out.fill(*cost),
            Self::DepartureDiscount { base, per_day } => {
                for (slot, (d, _)) in out.iter_mut().zip(schedule_pairs()) {
                    *slot = base + per_day * Money::from(DAYS - d);
                }
            }
            Self::PerSchedule { costs } => {
                if costs.len() != NUM_SCHEDULES {
                    return Err(Error::InvalidConfig(format!(
                        "per-schedule tariff needs {NUM_SCHEDULES} prices, got {}",
                        costs.len()
                    )));
                }
                out.copy_from_slice(costs);
            }
        }
        Ok(out)
    }
}

/// How a due day relates to the earliest day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DueDayRule {
    /// Uniform over `earliest..=7`.
    #[default]
    SameDayAllowed,
    /// Uniform over `earliest+1..=7`; a container available on day 7 is due day 7.
    StrictlyAfter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub capacity: CapacitySetting,
    pub containers_per_week: usize,
    pub cost_model: CostModel,
    pub tariff: TrainTariff,
    pub due_day_rule: DueDayRule,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            capacity: CapacitySetting::RandomUniform,
            containers_per_week: 100,
            cost_model: CostModel::default(),
            tariff: TrainTariff::default(),
            due_day_rule: DueDayRule::default(),
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        self.capacity.validate()?;
        let costs = self.tariff.costs()?;
        if let Some(bad) = costs.iter().find(|&&c| c < 0 || c >= self.cost_model.truck_cost) {
            return Err(Error::InvalidConfig(format!(
                "train price {bad} must be non-negative and below the truck cost {}",
                self.cost_model.truck_cost
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Generates one week. Deterministic in `config.seed`.
pub fn generate_week(config: &GeneratorConfig) -> Result<WeekScenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut capacities = [0u32; NUM_SCHEDULES];
    match config.capacity {
        CapacitySetting::Fixed(k) => capacities.fill(k),
        CapacitySetting::RandomUniform => {
            for cap in capacities.iter_mut() {
                *cap = rng.gen_range(0..=MAX_CAPACITY);
            }
        }
    }

    let containers = (0..config.containers_per_week)
        .map(|id| {
            let earliest_day = rng.gen_range(1..=DAYS);
            let due_day = match config.due_day_rule {
                DueDayRule::SameDayAllowed => rng.gen_range(earliest_day..=DAYS),
                DueDayRule::StrictlyAfter if earliest_day < DAYS => rng.gen_range(earliest_day + 1..=DAYS),
                DueDayRule::StrictlyAfter => DAYS,
            };
            Container {
                id,
                earliest_day,
                due_day,
            }
        })
        .collect();

    Ok(WeekScenario::from_parts(
        capacities,
        config.tariff.costs()?,
        containers,
        config.cost_model,
        config.seed,
    ))
}

/// Independent child seed for item `index` of a named stream.
///
/// SplitMix64 finalizer over `base`, the stream tag and the index; distinct
/// tags give disjoint-looking seed sequences (training vs evaluation weeks).
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(base) ^ stream) ^ index)
}

/// Seed stream tags.
pub mod streams {
    pub const TRAINING: u64 = 0x7472_6169_6e00_0001;
    pub const EVALUATION: u64 = 0x6576_616c_0000_0002;
    pub const AGENT: u64 = 0x6167_656e_7400_0003;
    pub const NETWORK: u64 = 0x6e65_7400_0000_0004;
}

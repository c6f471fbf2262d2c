//! Synthetic annotated tables whose ambiguous columns can only be typed by
//! looking at another column of the same table.
//!
//! Every table has a topic and exactly one anchor column naming entities of
//! that topic. The other columns are either one of the topic's regular types,
//! each with its own value format, or an ambiguous column of plain 4-digit
//! integers drawn from the same distribution whatever its label. The label of
//! an ambiguous column is fixed by the topic, so only the anchor tells which
//! of the three ambiguous types it is.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::table::{AnnotatedTable, Column, Dataset, LabelSpace, PairLabel, Table, TaskLabels, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    PersonName,
    ProductName,
    City,
    FilmTitle,
    RestaurantName,
    TrackingId,
    Email,
    Phone,
    Sku,
    Price,
    Country,
    Latitude,
    Genre,
    Duration,
    Cuisine,
    Rating,
    Weight,
    Date,
    /// Uniform integers in 1000..=9999.
    FourDigit,
}

pub struct Topic {
    pub name: &'static str,
    pub anchor: (&'static str, ValueKind),
    pub regular: [(&'static str, ValueKind); 2],
    /// Label given to this topic's 4-digit columns.
    pub ambiguous: &'static str,
}

pub const TOPICS: [Topic; 6] = [
    Topic {
        name: "person",
        anchor: ("person_name", ValueKind::PersonName),
        regular: [("email", ValueKind::Email), ("phone", ValueKind::Phone)],
        ambiguous: "year",
    },
    Topic {
        name: "store",
        anchor: ("product_name", ValueKind::ProductName),
        regular: [("sku", ValueKind::Sku), ("price", ValueKind::Price)],
        ambiguous: "price_cents",
    },
    Topic {
        name: "place",
        anchor: ("city", ValueKind::City),
        regular: [("country", ValueKind::Country), ("latitude", ValueKind::Latitude)],
        ambiguous: "postal_code",
    },
    Topic {
        name: "film",
        anchor: ("film_title", ValueKind::FilmTitle),
        regular: [("genre", ValueKind::Genre), ("duration", ValueKind::Duration)],
        ambiguous: "year",
    },
    Topic {
        name: "restaurant",
        anchor: ("restaurant_name", ValueKind::RestaurantName),
        regular: [("cuisine", ValueKind::Cuisine), ("rating", ValueKind::Rating)],
        ambiguous: "price_cents",
    },
    Topic {
        name: "shipment",
        anchor: ("tracking_id", ValueKind::TrackingId),
        regular: [("weight", ValueKind::Weight), ("date", ValueKind::Date)],
        ambiguous: "postal_code",
    },
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub train_tables: usize,
    pub valid_tables: usize,
    pub test_tables: usize,
    pub min_columns: usize,
    pub max_columns: usize,
    pub min_rows: usize,
    pub max_rows: usize,
    /// Number of topics used, taken in order from [`TOPICS`].
    pub topics: usize,
    /// Probability that a non-anchor column is ambiguous.
    pub ambiguity_rate: f64,
    /// Probability that a cell is left empty.
    pub null_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train_tables: 300,
            valid_tables: 50,
            test_tables: 100,
            min_columns: 3,
            max_columns: 6,
            min_rows: 8,
            max_rows: 16,
            topics: TOPICS.len(),
            ambiguity_rate: 0.5,
            null_rate: 0.05,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ambiguity_rate) {
            return Err(Error::invalid(format!("ambiguity rate {} is outside [0, 1]", self.ambiguity_rate)));
        }
        if !(0.0..1.0).contains(&self.null_rate) {
            return Err(Error::invalid(format!("null rate {} is outside [0, 1)", self.null_rate)));
        }
        if self.min_columns < 2 || self.min_columns > self.max_columns {
            return Err(Error::invalid("column range must satisfy 2 <= min <= max"));
        }
        if self.min_rows < 1 || self.min_rows > self.max_rows {
            return Err(Error::invalid("row range must satisfy 1 <= min <= max"));
        }
        if self.topics == 0 || self.topics > TOPICS.len() {
            return Err(Error::invalid(format!("topics must be between 1 and {}", TOPICS.len())));
        }
        if self.train_tables == 0 {
            return Err(Error::invalid("at least one training table is required"));
        }
        Ok(())
    }
}

const FIRST: &[&str] = &[
    "Alice", "Bruno", "Chen", "Dana", "Emil", "Farah", "Gita", "Hugo", "Ines", "Jonas", "Kira", "Luca", "Maya", "Nils",
    "Olga", "Pavel", "Quinn", "Rosa", "Sami", "Tara",
];
const LAST: &[&str] = &[
    "Smith", "Okafor", "Novak", "Garcia", "Tanaka", "Muller", "Rossi", "Kowalski", "Haddad", "Larsen", "Dubois",
    "Silva", "Ivanova", "Byrne", "Khan", "Moreau",
];
const ADJ: &[&str] = &[
    "Deluxe", "Compact", "Wireless", "Classic", "Portable", "Smart", "Premium", "Mini", "Ultra", "Eco",
];
const NOUN: &[&str] = &[
    "Kettle", "Blender", "Lamp", "Speaker", "Backpack", "Toaster", "Monitor", "Heater", "Drill", "Mixer",
];
const CITIES: &[&str] = &[
    "Lisbon", "Oslo", "Nairobi", "Osaka", "Quito", "Tbilisi", "Halifax", "Perth", "Lyon", "Gdansk", "Cusco", "Hanoi",
    "Porto", "Tromso", "Accra", "Busan",
];
const COUNTRIES: &[&str] = &[
    "Portugal", "Norway", "Kenya", "Japan", "Ecuador", "Georgia", "Canada", "Australia", "France", "Poland", "Peru",
    "Vietnam", "Ghana", "Korea",
];
const FILM_NOUN: &[&str] = &["Return", "Secret", "Night", "Garden", "Shadow", "Voyage", "Winter", "Echo"];
const FILM_PLACE: &[&str] = &["Ravenwood", "the North", "Silver Bay", "Red Hollow", "the Deep", "Old Mill"];
const GENRES: &[&str] = &["drama", "comedy", "thriller", "documentary", "western", "animation", "horror", "musical"];
const VENUE: &[&str] = &["Kitchen", "Grill", "Bistro", "Diner", "Tavern", "Cantina"];
const CUISINES: &[&str] = &["Thai", "Italian", "Ethiopian", "Mexican", "Lebanese", "Korean", "Greek", "Peruvian"];
const DOMAINS: &[&str] = &["example.com", "mail.net", "post.org", "inbox.io"];

fn upper_alnum(rng: &mut impl Rng, n: usize) -> String {
    const CHARS: &[u8] = b"ABCDEFGHJKLMNPQRSTUVWXYZ0123456789";
    (0..n).map(|_| CHARS[rng.random_range(0..CHARS.len())] as char).collect()
}

fn pick<'a>(rng: &mut impl Rng, items: &[&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty word list")
}

pub fn generate_value(kind: ValueKind, rng: &mut impl Rng) -> String {
    use ValueKind::*;
    match kind {
        PersonName => format!("{} {}", pick(rng, FIRST), pick(rng, LAST)),
        ProductName => format!("{} {}", pick(rng, ADJ), pick(rng, NOUN)),
        City => pick(rng, CITIES).to_string(),
        FilmTitle => format!("The {} of {}", pick(rng, FILM_NOUN), pick(rng, FILM_PLACE)),
        RestaurantName => format!("{}'s {}", pick(rng, LAST), pick(rng, VENUE)),
        TrackingId => format!("1Z{}", upper_alnum(rng, 10)),
        Email => format!(
            "{}.{}@{}",
            pick(rng, FIRST).to_lowercase(),
            pick(rng, LAST).to_lowercase(),
            pick(rng, DOMAINS)
        ),
        Phone => format!("+1-{:03}-{:03}-{:04}", rng.random_range(200..999), rng.random_range(100..999), rng.random_range(0..10000)),
        Sku => format!("SKU-{}-{:03}", upper_alnum(rng, 4), rng.random_range(0..1000)),
        Price => format!("${}.{:02}", rng.random_range(1..500), rng.random_range(0..100)),
        Country => pick(rng, COUNTRIES).to_string(),
        Latitude => format!("{:.4}", rng.random_range(-90.0..90.0)),
        Genre => pick(rng, GENRES).to_string(),
        Duration => format!("{}h {:02}m", rng.random_range(1..4), rng.random_range(0..60)),
        Cuisine => pick(rng, CUISINES).to_string(),
        Rating => format!("{}.{}/5", rng.random_range(1..5), rng.random_range(0..10)),
        Weight => format!("{}.{} kg", rng.random_range(0..80), rng.random_range(0..10)),
        Date => format!(
            "{}-{:02}-{:02}",
            rng.random_range(2015..2025),
            rng.random_range(1..13),
            rng.random_range(1..29)
        ),
        FourDigit => rng.random_range(1000..=9999).to_string(),
    }
}

pub struct SynthLabels {
    pub cta: Vec<String>,
    pub cpa: Vec<String>,
    pub tta: Vec<String>,
}

/// Label spaces for the first `topics` topics, in a fixed order.
pub fn synth_labels(topics: usize) -> SynthLabels {
    let used = &TOPICS[..topics];
    let mut cta: Vec<String> = Vec::new();
    let push = |v: &mut Vec<String>, s: &str| {
        if !v.iter().any(|x| x == s) {
            v.push(s.to_string());
        }
    };
    for t in used {
        push(&mut cta, t.anchor.0);
        t.regular.iter().for_each(|r| push(&mut cta, r.0));
    }
    for t in used {
        push(&mut cta, t.ambiguous);
    }
    let mut cpa = Vec::new();
    for l in &cta {
        if !used.iter().any(|t| t.anchor.0 == l) {
            push(&mut cpa, &format!("has_{l}"));
        }
    }
    SynthLabels {
        cta,
        cpa,
        tta: used.iter().map(|t| t.name.to_string()).collect(),
    }
}

fn make_table(id: String, config: &SynthConfig, spaces: &TaskLabels, rng: &mut ChaCha8Rng) -> Result<AnnotatedTable> {
    let used = &TOPICS[..config.topics];
    // Draw the ambiguous label first, then a topic carrying it, so each
    // ambiguous label is equally likely whatever the topic count.
    let mut ambiguous: Vec<&str> = Vec::new();
    for t in used {
        if !ambiguous.contains(&t.ambiguous) {
            ambiguous.push(t.ambiguous);
        }
    }
    let amb = *ambiguous.choose(rng).expect("at least one topic");
    let candidates: Vec<&Topic> = used.iter().filter(|t| t.ambiguous == amb).collect();
    let topic = *candidates.choose(rng).expect("label has a topic");

    let n_cols = rng.random_range(config.min_columns..=config.max_columns);
    let n_rows = rng.random_range(config.min_rows..=config.max_rows);
    let anchor_at = rng.random_range(0..n_cols);
    let mut kinds = Vec::with_capacity(n_cols);
    for i in 0..n_cols {
        kinds.push(if i == anchor_at {
            topic.anchor
        } else if rng.random_bool(config.ambiguity_rate) {
            (topic.ambiguous, ValueKind::FourDigit)
        } else {
            *topic.regular.choose(rng).expect("two regular types")
        });
    }
    let columns = kinds
        .iter()
        .map(|&(_, kind)| {
            let cells = (0..n_rows)
                .map(|_| (!rng.random_bool(config.null_rate)).then(|| generate_value(kind, rng)))
                .collect();
            Column::new(cells)
        })
        .collect();
    let table = Table::new(id, columns)?;

    let ordinal = |task: Task, label: &str| -> Result<usize> {
        spaces
            .require(task)?
            .ordinal(label)
            .ok_or_else(|| Error::validation(format!("synthetic label {label} missing from the {task} space")))
    };
    let cta = kinds.iter().map(|(l, _)| ordinal(Task::Cta, l).map(Some)).collect::<Result<Vec<_>>>()?;
    let cpa = (0..n_cols)
        .filter(|&j| j != anchor_at)
        .map(|j| {
            Ok(PairLabel {
                subject: anchor_at,
                object: j,
                label: ordinal(Task::Cpa, &format!("has_{}", kinds[j].0))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnnotatedTable {
        table,
        cta: Some(cta),
        cpa: Some(cpa),
        tta: Some(ordinal(Task::Tta, topic.name)?),
    })
}

/// A dataset with CTA, CPA and TTA labels; identical configs give identical datasets.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let names = synth_labels(config.topics);
    let mut labels = TaskLabels::default();
    labels.set(LabelSpace::new(Task::Cta, names.cta)?);
    labels.set(LabelSpace::new(Task::Cpa, names.cpa)?);
    labels.set(LabelSpace::new(Task::Tta, names.tta)?);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let split = |name: &str, n: usize, rng: &mut ChaCha8Rng| {
        (0..n)
            .map(|i| make_table(format!("{name}-{i:05}"), config, &labels, rng))
            .collect::<Result<Vec<_>>>()
    };
    let train = split("train", config.train_tables, &mut rng)?;
    let valid = split("valid", config.valid_tables, &mut rng)?;
    let test = split("test", config.test_tables, &mut rng)?;
    Ok(Dataset {
        train,
        valid,
        test,
        labels,
    })
}

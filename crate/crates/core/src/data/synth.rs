//! Seeded generator of incident-style narratives.
//!
//! A report is a category setting phrase, neutral filler phrases and one
//! class cue phrase placed near the start of the text, with optional
//! token-level noise. Phrases may contain `{slot}` placeholders filled from
//! shared word lists; `{num}` draws a three-digit number and `{slot*}` draws
//! a short run of words from the same list.
//!
//! In the `ds*_like` profiles harm and reached-no-harm cues are built from the
//! same words. What separates them is which clause a negation applies to,
//! so word order carries the signal.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::{Report, Severity};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplates {
    pub severity: Severity,
    pub prior: f64,
    /// Cue phrases; one is chosen per report.
    pub phrases: Vec<String>,
    /// Severity-specific add-ons appended to the cue with probability `addon_rate`.
    #[serde(default)]
    pub addons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub settings: Vec<String>,
    /// Relative weight of this category among harm reports.
    pub harm_weight: f64,
    /// Relative weight among all other reports.
    pub other_weight: f64,
}

/// Log-normal length in tokens, clamped to `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthDist {
    pub mean: f64,
    /// Coefficient of variation (std / mean).
    pub cv: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: Vec<ClassTemplates>,
    pub categories: Vec<Category>,
    pub filler: Vec<String>,
    pub slots: BTreeMap<String, Vec<String>>,
    pub noise_vocab: Vec<String>,
    /// Per-token probability of replacement by a noise word.
    pub noise_rate: f64,
    pub addon_rate: f64,
    pub length: LengthDist,
    /// The cue phrase starts within this many tokens of the beginning.
    pub cue_horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Harm prior 0.139, long narratives.
    Ds1Like,
    /// Harm prior 0.034, shorter narratives.
    Ds2Like,
    /// Noise-free, class-distinct cue vocabulary, balanced harm/no-harm.
    Separable,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "ds1_like" => Ok(Profile::Ds1Like),
            "ds2_like" => Ok(Profile::Ds2Like),
            "separable" => Ok(Profile::Separable),
            other => Err(Error::Config(format!(
                "unknown profile {other:?}; expected ds1_like, ds2_like or separable"
            ))),
        }
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| (*s).to_owned()).collect()
}

fn with_event(event: &str, clauses: &[&str]) -> Vec<String> {
    clauses.iter().map(|c| format!("{event} and {c}")).collect()
}

fn severity_priors(profile: Profile) -> [f64; 10] {
    match profile {
        // A, B1, B2, C, D, E, F, G, H, I
        Profile::Ds1Like => [
            0.393, 0.069, 0.069, 0.199, 0.131, 0.070, 0.035, 0.015, 0.012, 0.007,
        ],
        Profile::Ds2Like => [
            0.117, 0.065, 0.064, 0.404, 0.316, 0.020, 0.008, 0.003, 0.002, 0.001,
        ],
        Profile::Separable => [
            0.125, 0.0625, 0.0625, 0.125, 0.125, 0.2, 0.1, 0.1, 0.05, 0.05,
        ],
    }
}

// Harm and reached cues use the same words; exactly one clause is negated.
// Half the templates keep the negation next to its noun, the other half put
// a run of modifiers between them.
const HARM_CUES: &[&str] = &[
    "{lead} {finding} and {lead} no {benign}",
    "{lead} no {benign} and {lead} {finding}",
    "{lead} {mod*} {mod*} {finding} and {lead} {mod*} no {mod*} {benign}",
    "{lead} {mod*} no {mod*} {benign} and {lead} {mod*} {mod*} {finding}",
];
const REACHED_CUES: &[&str] = &[
    "{lead} no {finding} and {lead} {benign}",
    "{lead} {benign} and {lead} no {finding}",
    "{lead} {mod*} no {mod*} {finding} and {lead} {mod*} {mod*} {benign}",
    "{lead} {mod*} {mod*} {benign} and {lead} {mod*} no {mod*} {finding}",
];
// Near-miss, reached and harm reports all open with the same error event;
// only the order of "caught" and "reached" tells whether it reached the patient.
const EVENT_CAUGHT: &str = "{error} of {med} was caught by {staff} before it reached the patient";
const EVENT_REACHED: &str = "{error} of {med} reached the patient before it was caught by {staff}";
const UNSAFE_CUES: &[&str] = &[
    "{equipment} found malfunctioning on the unit with no patient involved",
    "{equipment} setup is confusing and could lead to an error",
    "unsafe condition reported with {equipment} left in the hallway",
];

const SEPARABLE_CUES: [&[&str]; 4] = [
    &[
        "hazard spotted equipment faulty",
        "unsafe hallway clutter reported",
    ],
    &[
        "intercepted before dispensing",
        "caught during verification check",
    ],
    &[
        "reached patient uneventful outcome",
        "administered uneventful monitoring",
    ],
    &["injured requiring surgery", "harmed requiring transfusion"],
];

fn severity_addons(sev: Severity) -> &'static [&'static str] {
    match sev {
        Severity::A => &["reported as a hazard"],
        Severity::B1 => &["caught by chance"],
        Severity::B2 => &["found during routine double check"],
        Severity::C => &["monitored without intervention"],
        Severity::D => &["placed on additional monitoring as a precaution"],
        Severity::E => &["temporary harm that resolved"],
        Severity::F => &["hospital stay was prolonged"],
        Severity::G => &["permanent impairment is expected"],
        Severity::H => &["rapid response called to sustain life"],
        Severity::I => &["patient expired"],
    }
}

fn group(sev: Severity) -> usize {
    match sev {
        Severity::A => 0,
        Severity::B1 | Severity::B2 => 1,
        Severity::C | Severity::D => 2,
        _ => 3,
    }
}

impl SynthSpec {
    pub fn profile(profile: Profile) -> Self {
        let priors = severity_priors(profile);
        let separable = profile == Profile::Separable;
        let classes = Severity::ALL
            .iter()
            .map(|&sev| {
                let phrases = if separable {
                    strings(SEPARABLE_CUES[group(sev)])
                } else {
                    match group(sev) {
                        0 => strings(UNSAFE_CUES),
                        1 => with_event(EVENT_CAUGHT, REACHED_CUES),
                        2 => with_event(EVENT_REACHED, REACHED_CUES),
                        _ => with_event(EVENT_REACHED, HARM_CUES),
                    }
                };
                ClassTemplates {
                    severity: sev,
                    prior: priors[sev.index()],
                    phrases,
                    addons: strings(severity_addons(sev)),
                }
            })
            .collect();

        let mut slots = BTreeMap::new();
        let mut slot = |k: &str, v: &[&str]| {
            slots.insert(k.to_owned(), strings(v));
        };
        slot(
            "injury",
            &[
                "fracture",
                "laceration",
                "bruise",
                "hematoma",
                "skin tear",
                "head injury",
                "bleed",
                "burn",
            ],
        );
        slot(
            "reaction",
            &[
                "hypotension",
                "rash",
                "hypoglycemia",
                "respiratory distress",
                "allergic reaction",
                "oversedation",
            ],
        );
        slot(
            "med",
            &[
                "heparin",
                "insulin",
                "warfarin",
                "morphine",
                "metoprolol",
                "vancomycin",
                "potassium chloride",
                "antibiotic",
            ],
        );
        slot(
            "finding",
            &[
                "fracture",
                "laceration",
                "hematoma",
                "skin tear",
                "head injury",
                "bleed",
                "burn",
                "hypotension",
                "rash",
                "hypoglycemia",
                "oversedation",
            ],
        );
        slot(
            "lead",
            &[
                "exam showed",
                "assessment revealed",
                "x-ray showed",
                "staff observed",
                "review found",
                "patient reported",
            ],
        );
        slot(
            "mod",
            &[
                "any",
                "obvious",
                "new",
                "visible",
                "significant",
                "acute",
                "apparent",
                "further",
                "clear",
                "signs",
                "of",
                "minor",
                "evidence",
                "additional",
            ],
        );
        slot(
            "benign",
            &[
                "concerns",
                "visitors",
                "delay",
                "change in routine",
                "complaints",
                "questions",
                "requests",
            ],
        );
        slot(
            "error",
            &[
                "wrong dose",
                "duplicate dose",
                "missed dose",
                "wrong rate",
                "wrong route",
                "late dose",
            ],
        );
        slot(
            "treatment",
            &[
                "sutures",
                "surgical repair",
                "blood transfusion",
                "naloxone",
                "intubation",
                "splinting",
            ],
        );
        slot(
            "equipment",
            &[
                "infusion pump",
                "bed alarm",
                "glucometer",
                "wheelchair brake",
                "suction unit",
                "iv pole",
            ],
        );
        slot(
            "item",
            &[
                "specimen",
                "wristband",
                "medication label",
                "blood sample",
                "order",
            ],
        );
        slot(
            "staff",
            &["nurse", "pharmacist", "resident", "tech", "charge nurse"],
        );

        let categories = [
            (
                "Fall",
                &[
                    "patient found on the floor in room {num}",
                    "patient slipped walking to the bathroom",
                ][..],
                0.35,
                0.2,
            ),
            (
                "Medication/Fluid",
                &[
                    "medication pass on the evening shift",
                    "pharmacy verified the order for {med}",
                ][..],
                0.35,
                0.3,
            ),
            (
                "Lab/Specimen",
                &[
                    "specimen collected in the lab",
                    "blood sample sent for processing",
                ][..],
                0.0,
                0.15,
            ),
            (
                "Equipment/Device",
                &[
                    "equipment check in room {num}",
                    "device used during the shift",
                ][..],
                0.1,
                0.15,
            ),
            (
                "Surgery/Procedure",
                &[
                    "procedure performed in suite {num}",
                    "patient returned from the operating room",
                ][..],
                0.15,
                0.1,
            ),
            (
                "Diagnosis/Treatment",
                &[
                    "treatment plan reviewed on rounds",
                    "patient admitted for observation",
                ][..],
                0.05,
                0.1,
            ),
        ]
        .iter()
        .map(|(name, settings, hw, ow)| Category {
            name: (*name).to_owned(),
            settings: strings(settings),
            harm_weight: *hw,
            other_weight: *ow,
        })
        .collect();

        let filler = if separable {
            strings(&[
                "nurse on duty",
                "report filed",
                "shift change occurred",
                "room {num}",
                "family informed",
            ])
        } else {
            strings(&[
                "{staff} notified the attending",
                "family at bedside",
                "patient alert and oriented",
                "call light within reach",
                "incident reviewed with the team",
                "patient resting in bed",
                "vital signs obtained",
                "history of {injury} documented in chart",
                "{med} ordered per protocol",
                "no family present at the time",
                "patient was not on fall precautions",
                "bed in low position",
                "report filed by {staff}",
                "will follow up with manager",
                "education provided to staff",
                "patient did not use the call light",
                "prior {reaction} noted on admission",
                "{equipment} checked by biomed",
            ])
        };
        let noise_vocab = strings(&[
            "pt", "rn", "md", "the", "and", "was", "at", "on", "per", "x", "q2h", "prn", "stat",
            "am", "pm", "unit", "floor", "shift",
        ]);
        let (noise_rate, length, cue_horizon, addon_rate) = match profile {
            Profile::Ds1Like => (
                0.05,
                LengthDist {
                    mean: 70.0,
                    cv: 0.9,
                    min: 8,
                    max: 300,
                },
                30,
                0.3,
            ),
            Profile::Ds2Like => (
                0.05,
                LengthDist {
                    mean: 40.0,
                    cv: 0.78,
                    min: 8,
                    max: 200,
                },
                25,
                0.3,
            ),
            Profile::Separable => (
                0.0,
                LengthDist {
                    mean: 14.0,
                    cv: 0.3,
                    min: 6,
                    max: 30,
                },
                10,
                0.0,
            ),
        };
        SynthSpec {
            classes,
            categories,
            filler,
            slots,
            noise_vocab,
            noise_rate,
            addon_rate,
            length,
            cue_horizon,
        }
    }

    /// Rescales class priors so harm codes E–I carry `harm` in total, each side
    /// keeping its internal proportions.
    pub fn with_harm_prior(mut self, harm: f64) -> Self {
        let (h, o): (f64, f64) = self.classes.iter().fold((0.0, 0.0), |(h, o), c| {
            if c.severity.is_harm() {
                (h + c.prior, o)
            } else {
                (h, o + c.prior)
            }
        });
        for c in &mut self.classes {
            c.prior = if c.severity.is_harm() {
                if h > 0.0 {
                    c.prior / h * harm
                } else {
                    0.0
                }
            } else if o > 0.0 {
                c.prior / o * (1.0 - harm)
            } else {
                0.0
            };
        }
        self
    }

    fn validate(&self) -> Result<()> {
        let total: f64 = self.classes.iter().map(|c| c.prior).sum();
        if (total - 1.0).abs() > 1e-9 || self.classes.iter().any(|c| c.prior < 0.0) {
            return Err(Error::Config(format!(
                "class priors must be non-negative and sum to 1, got {total}"
            )));
        }
        if let Some(c) = self
            .classes
            .iter()
            .find(|c| c.prior > 0.0 && c.phrases.is_empty())
        {
            return Err(Error::Config(format!(
                "empty template bank for class {}",
                c.severity
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!(
                "noise rate {} outside [0, 1]",
                self.noise_rate
            )));
        }
        if self.noise_rate > 0.0 && self.noise_vocab.is_empty() {
            return Err(Error::Config(
                "noise rate set without noise vocabulary".into(),
            ));
        }
        if self.length.min == 0 || self.length.min > self.length.max || !(self.length.mean > 0.0) {
            return Err(Error::Config("invalid length distribution".into()));
        }
        Ok(())
    }
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [String]) -> &'a str {
    &items[rng.random_range(0..items.len())]
}

fn weighted<R: Rng>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> Option<usize> {
    let total: f64 = weights.clone().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = Some(i);
            if u < w {
                return Some(i);
            }
            u -= w;
        }
    }
    last
}

/// Range of words drawn for a `{slot*}` placeholder.
const MIN_REPEAT: usize = 2;
const MAX_REPEAT: usize = 5;

fn expand<R: Rng>(rng: &mut R, phrase: &str, slots: &BTreeMap<String, Vec<String>>) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = phrase;
    while let Some(start) = rest.find('{') {
        out.extend(rest[..start].split_whitespace().map(ToString::to_string));
        let Some(len) = rest[start..].find('}') else {
            break;
        };
        let name = &rest[start + 1..start + len];
        if let Some(base) = name.strip_suffix('*') {
            if let Some(choices) = slots.get(base).filter(|c| !c.is_empty()) {
                for _ in 0..rng.random_range(MIN_REPEAT..=MAX_REPEAT) {
                    out.extend(
                        pick(rng, choices)
                            .split_whitespace()
                            .map(ToString::to_string),
                    );
                }
            }
        } else if name == "num" {
            out.push(format!("{}", rng.random_range(100..1000)));
        } else if let Some(choices) = slots.get(name).filter(|c| !c.is_empty()) {
            out.extend(
                pick(rng, choices)
                    .split_whitespace()
                    .map(ToString::to_string),
            );
        }
        rest = &rest[start + len + 1..];
    }
    out.extend(rest.split_whitespace().map(ToString::to_string));
    out
}

/// Generates `count` labeled reports. Deterministic for a given `seed`.
pub fn gen_synthetic(spec: &SynthSpec, count: usize, seed: u64) -> Result<Vec<Report>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma2 = libm::log(1.0 + spec.length.cv * spec.length.cv);
    let mu = libm::log(spec.length.mean) - sigma2 / 2.0;
    let lengths = LogNormal::new(mu, libm::sqrt(sigma2))
        .map_err(|e| Error::Config(format!("length distribution: {e}")))?;

    let mut reports = Vec::with_capacity(count);
    for _ in 0..count {
        let ci =
            weighted(&mut rng, spec.classes.iter().map(|c| c.prior)).expect("validated priors");
        let class = &spec.classes[ci];
        let harm = class.severity.is_harm();
        let category = weighted(
            &mut rng,
            spec.categories
                .iter()
                .map(|c| if harm { c.harm_weight } else { c.other_weight }),
        )
        .map(|i| &spec.categories[i]);

        let mut cue = {
            let ph = pick(&mut rng, &class.phrases);
            expand(&mut rng, ph, &spec.slots)
        };
        if !class.addons.is_empty() && rng.random::<f64>() < spec.addon_rate {
            cue.extend({
                let ph = pick(&mut rng, &class.addons);
                expand(&mut rng, ph, &spec.slots)
            });
        }

        let target = (lengths.sample(&mut rng) as usize).clamp(spec.length.min, spec.length.max);
        let mut phrases: Vec<Vec<String>> = Vec::new();
        if let Some(cat) = category.filter(|c| !c.settings.is_empty()) {
            phrases.push({
                let ph = pick(&mut rng, &cat.settings);
                expand(&mut rng, ph, &spec.slots)
            });
        }
        let mut len: usize = phrases.iter().map(Vec::len).sum::<usize>() + cue.len();
        while len < target && !spec.filler.is_empty() {
            let p = {
                let ph = pick(&mut rng, &spec.filler);
                expand(&mut rng, ph, &spec.slots)
            };
            len += p.len();
            phrases.push(p);
        }
        // cue goes at a phrase boundary no later than the horizon
        let mut offset = 0;
        let mut slots_ok = 1;
        for p in &phrases {
            offset += p.len();
            if offset > spec.cue_horizon {
                break;
            }
            slots_ok += 1;
        }
        let at = rng.random_range(0..slots_ok.min(phrases.len() + 1));
        phrases.insert(at, cue);

        let mut tokens: Vec<String> = phrases.into_iter().flatten().collect();
        if spec.noise_rate > 0.0 {
            for tok in tokens.iter_mut() {
                if rng.random::<f64>() < spec.noise_rate {
                    *tok = pick(&mut rng, &spec.noise_vocab).to_owned();
                }
            }
        }
        let mut report = Report::new(tokens.join(" "), Some(class.severity));
        report.category = category.map(|c| c.name.clone());
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_harm_prior() {
        let spec = SynthSpec::profile(Profile::Ds1Like).with_harm_prior(1.0);
        let r = gen_synthetic(&spec, 200, 1).unwrap();
        assert!(r.iter().all(|r| r.is_harm() == Some(true)));
    }

    #[test]
    fn same_seed_same_corpus() {
        let spec = SynthSpec::profile(Profile::Ds2Like);
        assert_eq!(
            gen_synthetic(&spec, 50, 9).unwrap(),
            gen_synthetic(&spec, 50, 9).unwrap()
        );
        assert_ne!(
            gen_synthetic(&spec, 50, 9).unwrap(),
            gen_synthetic(&spec, 50, 10).unwrap()
        );
    }

    #[test]
    fn harm_fraction_tracks_prior() {
        let spec = SynthSpec::profile(Profile::Ds1Like);
        let r = gen_synthetic(&spec, 10_000, 3).unwrap();
        let frac = r.iter().filter(|r| r.is_harm() == Some(true)).count() as f64 / 10_000.0;
        assert!((frac - 0.139).abs() < 0.01, "{frac}");
    }

    #[test]
    fn lab_specimen_has_no_harm() {
        let spec = SynthSpec::profile(Profile::Ds1Like);
        let r = gen_synthetic(&spec, 2_000, 4).unwrap();
        assert!(r
            .iter()
            .filter(|r| r.category.as_deref() == Some("Lab/Specimen"))
            .all(|r| r.is_harm() == Some(false)));
    }

    #[test]
    fn invalid_specs() {
        let mut spec = SynthSpec::profile(Profile::Separable);
        spec.classes[0].phrases.clear();
        assert!(matches!(gen_synthetic(&spec, 1, 0), Err(Error::Config(_))));
        let mut spec = SynthSpec::profile(Profile::Separable);
        spec.classes[0].prior += 0.5;
        assert!(matches!(gen_synthetic(&spec, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn expansion_fills_slots() {
        let mut slots = BTreeMap::new();
        slots.insert("x".to_owned(), strings(&["two words"]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            expand(&mut rng, "a {x} b", &slots),
            strings(&["a", "two", "words", "b"])
        );
        let n = expand(&mut rng, "{num}", &slots);
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].len(), 3);
    }
}

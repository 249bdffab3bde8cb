use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{Experiment, RetinaType, Variant};

/// Longest stay the LOS canvas can show.
pub const MAX_DAYS: u8 = 45;
pub const MAX_GRADE: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AdState {
    Cn,
    Mci,
    Ad,
}

impl AdState {
    pub const ALL: [AdState; 3] = [AdState::Cn, AdState::Mci, AdState::Ad];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cn => "CN",
            Self::Mci => "MCI",
            Self::Ad => "AD",
        }
    }
}

impl FromStr for AdState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Label(format!("unknown AD state {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovidStatus {
    Normal,
    Covid,
}

/// Ground truth or decoded estimate for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Label {
    Survival {
        fatal: bool,
    },
    /// `quality` is `Some(high_quality)` exactly for type III canvases.
    Retina {
        grade: u8,
        quality: Option<bool>,
    },
    Los {
        days: u8,
    },
    /// `severity` in `[0, 1]`, present exactly for COVID cases.
    Covid {
        status: CovidStatus,
        severity: Option<f64>,
    },
    Ad {
        states: [AdState; 4],
    },
}

/// Disc radius in pixels drawn for a COVID severity.
pub fn covid_radius(severity: f64) -> usize {
    4 + (13.0 * severity).round() as usize
}

impl Label {
    pub fn experiment(&self) -> Experiment {
        match self {
            Self::Survival { .. } => Experiment::Survival,
            Self::Retina { .. } => Experiment::Retina,
            Self::Los { .. } => Experiment::Los,
            Self::Covid { .. } => Experiment::Covid,
            Self::Ad { .. } => Experiment::Ad,
        }
    }

    /// Check the label's fields against the canvas it will be drawn on.
    pub fn validate(&self, experiment: Experiment, variant: Variant) -> Result<()> {
        if self.experiment() != experiment {
            return Err(Error::Label(format!(
                "{} label given for experiment {experiment}",
                self.experiment()
            )));
        }
        match *self {
            Self::Retina { grade, quality } => {
                if grade > MAX_GRADE {
                    return Err(Error::Label(format!("grade {grade} outside 0..=4")));
                }
                if quality.is_some() != (variant.retina == RetinaType::III) {
                    return Err(Error::Label(
                        "quality flag must be present exactly for type III".into(),
                    ));
                }
            }
            Self::Los { days } if days > MAX_DAYS => {
                return Err(Error::Label(format!("{days} days outside 0..=45")));
            }
            Self::Covid { status, severity } => match (status, severity) {
                (CovidStatus::Normal, None) => {}
                (CovidStatus::Covid, Some(s)) if (0.0..=1.0).contains(&s) => {}
                (CovidStatus::Normal, Some(_)) => {
                    return Err(Error::Label("normal cases carry no severity".into()))
                }
                _ => {
                    return Err(Error::Label(format!(
                        "COVID severity {severity:?} must be in [0, 1]"
                    )))
                }
            },
            _ => {}
        }
        Ok(())
    }

    /// Equality at the resolution the canvas can express: COVID severities
    /// compare by drawn radius.
    pub fn same_as_drawn(&self, other: &Label) -> bool {
        match (self, other) {
            (
                Self::Covid {
                    status: a,
                    severity: sa,
                },
                Self::Covid {
                    status: b,
                    severity: sb,
                },
            ) => a == b && sa.map(covid_radius) == sb.map(covid_radius),
            _ => self == other,
        }
    }

    /// Parse the compact text form used on the command line:
    /// survival `0|1`, retina `grade[,high|low]`, los `days`,
    /// covid `normal|covid:severity`, ad `CN,MCI,AD,AD`.
    pub fn parse(experiment: Experiment, variant: Variant, text: &str) -> Result<Label> {
        let bad = || Error::Label(format!("cannot parse {text:?} as a {experiment} label"));
        let t = text.trim();
        let label = match experiment {
            Experiment::Survival => match t {
                "0" | "survival" | "survive" => Label::Survival { fatal: false },
                "1" | "fatal" => Label::Survival { fatal: true },
                _ => return Err(bad()),
            },
            Experiment::Retina => {
                let mut parts = t.split(',');
                let grade = parts
                    .next()
                    .and_then(|g| g.trim().parse().ok())
                    .ok_or_else(bad)?;
                let quality = match parts.next().map(str::trim) {
                    None => None,
                    Some("high" | "1") => Some(true),
                    Some("low" | "0") => Some(false),
                    Some(_) => return Err(bad()),
                };
                Label::Retina { grade, quality }
            }
            Experiment::Los => Label::Los {
                days: t.parse().map_err(|_| bad())?,
            },
            Experiment::Covid => match t.split_once(':') {
                None if t == "normal" => Label::Covid {
                    status: CovidStatus::Normal,
                    severity: None,
                },
                Some(("covid", s)) => Label::Covid {
                    status: CovidStatus::Covid,
                    severity: Some(s.trim().parse().map_err(|_| bad())?),
                },
                _ => return Err(bad()),
            },
            Experiment::Ad => {
                let states: Vec<AdState> = t.split(',').map(str::parse).collect::<Result<_>>()?;
                Label::Ad {
                    states: states.try_into().map_err(|_| bad())?,
                }
            }
        };
        label.validate(experiment, variant)?;
        Ok(label)
    }

    /// Every label of a finite label space, plus the LOS day grid and the
    /// COVID severity grid {0, 0.05, …, 1}.
    pub fn enumerate(experiment: Experiment, variant: Variant) -> Vec<Label> {
        match experiment {
            Experiment::Survival => vec![
                Label::Survival { fatal: false },
                Label::Survival { fatal: true },
            ],
            Experiment::Retina => {
                let qualities: Vec<Option<bool>> = if variant.retina == RetinaType::III {
                    vec![Some(true), Some(false)]
                } else {
                    vec![None]
                };
                (0..=MAX_GRADE)
                    .flat_map(|grade| {
                        qualities
                            .iter()
                            .map(move |&quality| Label::Retina { grade, quality })
                    })
                    .collect()
            }
            Experiment::Los => (0..=MAX_DAYS).map(|days| Label::Los { days }).collect(),
            Experiment::Covid => std::iter::once(Label::Covid {
                status: CovidStatus::Normal,
                severity: None,
            })
            .chain((0..=20).map(|i| Label::Covid {
                status: CovidStatus::Covid,
                severity: Some(i as f64 / 20.0),
            }))
            .collect(),
            Experiment::Ad => {
                let mut out = Vec::new();
                for code in 0..81 {
                    let states: [AdState; 4] =
                        std::array::from_fn(|t| AdState::ALL[code / 3usize.pow(t as u32) % 3]);
                    out.push(Label::Ad { states });
                }
                out
            }
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Survival { fatal } => write!(f, "{}", u8::from(*fatal)),
            Self::Retina {
                grade,
                quality: None,
            } => write!(f, "{grade}"),
            Self::Retina {
                grade,
                quality: Some(q),
            } => write!(f, "{grade},{}", if *q { "high" } else { "low" }),
            Self::Los { days } => write!(f, "{days}"),
            Self::Covid { severity: None, .. } => f.write_str("normal"),
            Self::Covid {
                severity: Some(s), ..
            } => write!(f, "covid:{s}"),
            Self::Ad { states } => {
                let names: Vec<&str> = states.iter().map(|s| s.name()).collect();
                f.write_str(&names.join(","))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_form_round_trips() {
        for exp in Experiment::ALL {
            for variant in [Variant::desk(), Variant::retina(RetinaType::III)] {
                for label in Label::enumerate(exp, variant) {
                    let back = Label::parse(exp, variant, &label.to_string()).unwrap();
                    assert_eq!(back, label);
                }
            }
        }
    }

    #[test]
    fn validation_rejects_out_of_range() {
        let v = Variant::desk();
        assert!(Label::Los { days: 46 }
            .validate(Experiment::Los, v)
            .is_err());
        assert!(Label::Retina {
            grade: 5,
            quality: None
        }
        .validate(Experiment::Retina, v)
        .is_err());
        assert!(Label::Retina {
            grade: 1,
            quality: Some(true)
        }
        .validate(Experiment::Retina, v)
        .is_err());
        let bad = Label::Covid {
            status: CovidStatus::Covid,
            severity: Some(1.5),
        };
        assert!(bad.validate(Experiment::Covid, v).is_err());
        assert!(Label::Survival { fatal: true }
            .validate(Experiment::Los, v)
            .is_err());
    }

    #[test]
    fn enumeration_sizes() {
        let v = Variant::desk();
        assert_eq!(Label::enumerate(Experiment::Los, v).len(), 46);
        assert_eq!(Label::enumerate(Experiment::Covid, v).len(), 22);
        assert_eq!(Label::enumerate(Experiment::Ad, v).len(), 81);
        assert_eq!(
            Label::enumerate(Experiment::Retina, Variant::retina(RetinaType::III)).len(),
            10
        );
    }
}

//! Identifiers for the five estimation pipelines and their variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// ICU survival from 183 tabular features, 23×23 canvas.
    Survival,
    /// Retinopathy grade from fundus images, 23×23 canvas.
    Retina,
    /// Hospital length of stay from 52 features, 45×45 canvas.
    Los,
    /// COVID status and severity from chest X-rays, 45×45 canvas.
    Covid,
    /// Alzheimer's trajectory from five tabular modalities, 23×23 canvas.
    Ad,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Survival,
        Experiment::Retina,
        Experiment::Los,
        Experiment::Covid,
        Experiment::Ad,
    ];

    pub fn id(self) -> u8 {
        match self {
            Self::Survival => 1,
            Self::Retina => 2,
            Self::Los => 3,
            Self::Covid => 4,
            Self::Ad => 5,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.id() == id)
            .ok_or_else(|| Error::Config(format!("unknown experiment id {id}")))
    }

    pub fn canvas_side(self) -> usize {
        match self {
            Self::Los | Self::Covid => 45,
            _ => 23,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Survival => "survival",
            Self::Retina => "retina",
            Self::Los => "los",
            Self::Covid => "covid",
            Self::Ad => "ad",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(id) = s.parse::<u8>() {
            return Self::from_id(id);
        }
        Self::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }
}

/// Output design for the retinopathy canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum RetinaType {
    /// Intensity only.
    #[default]
    I,
    /// Intensity strip with a color-coded inner square.
    II,
    /// Type II plus an image-quality rectangle.
    III,
}

impl FromStr for RetinaType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Self::I),
            "II" | "2" => Ok(Self::II),
            "III" | "3" => Ok(Self::III),
            _ => Err(Error::Config(format!("unknown retina type {s:?}"))),
        }
    }
}

/// Network width and input resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Published widths and input resolutions (256/512-pixel image inputs).
    Paper,
    /// 64×64 image inputs and narrow convolution stacks for CPU training.
    #[default]
    Desk,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            _ => Err(Error::Config(format!("unknown scale {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Variant {
    pub retina: RetinaType,
    pub scale: Scale,
}

impl Variant {
    pub fn desk() -> Self {
        Self::default()
    }

    pub fn paper() -> Self {
        Self {
            scale: Scale::Paper,
            ..Self::default()
        }
    }

    pub fn retina(retina: RetinaType) -> Self {
        Self {
            retina,
            ..Self::default()
        }
    }

    pub fn with_scale(mut self, scale: Scale) -> Self {
        self.scale = scale;
        self
    }
}

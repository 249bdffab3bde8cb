//! Per-image uncertainty: energy leaked into the RU region, decode margin,
//! and boundary sharpness of the COVID disc.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::codecs::{self, CanvasLayout, DISC_CENTER, DISC_MAX_RADIUS};
use crate::error::{shape_err, Error, Result};
use crate::experiment::{Experiment, Variant};
use crate::tensor::Tensor;

pub const RAYS: usize = 64;
/// Radial sampling step along each ray, in pixels.
pub const RAY_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    RuContaminated,
    LowMargin,
    Blurred,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Flag `ru_contaminated` above this RU energy.
    pub ru_energy: f64,
    /// Flag `low_margin` below this decode margin.
    pub margin: f64,
    /// Flag `blurred` below this sharpness.
    pub sharpness: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            ru_energy: 0.05,
            margin: 0.25,
            sharpness: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub ru_energy: f64,
    pub margin: f64,
    pub sharpness: Option<f64>,
    pub flags: BTreeSet<Flag>,
}

fn check_canvas(op: &'static str, img: &Tensor, layout: &CanvasLayout) -> Result<()> {
    if img.shape() != [layout.side, layout.side, 3] {
        return Err(shape_err(
            op,
            format!(
                "image {:?} vs {s}×{s}×3 canvas",
                img.shape(),
                s = layout.side
            ),
        ));
    }
    Ok(())
}

/// Mean of `|value|` over RU pixels and all three channels.
pub fn ru_energy(img: &Tensor, layout: &CanvasLayout) -> Result<f64> {
    check_canvas("ru_energy", img, layout)?;
    if layout.ru.count() == 0 {
        return Err(Error::Config("layout has an empty RU mask".into()));
    }
    let data = img.data();
    let total: f64 = layout
        .ru
        .indices()
        .map(|p| data[p * 3].abs() + data[p * 3 + 1].abs() + data[p * 3 + 2].abs())
        .sum();
    Ok(total / (3 * layout.ru.count()) as f64)
}

fn bilinear(plane: &[f64], side: usize, y: f64, x: f64) -> f64 {
    let max = (side - 1) as f64;
    let (y, x) = (y.clamp(0.0, max), x.clamp(0.0, max));
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(side - 1), (x0 + 1).min(side - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let at = |yy: usize, xx: usize| plane[yy * side + xx];
    (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x1))
        + fy * ((1.0 - fx) * at(y1, x0) + fx * at(y1, x1))
}

/// Width of the radial band between the first drops below 0.75·peak and
/// 0.25·peak along one ray, in pixels.
fn transition_width(plane: &[f64], side: usize, peak: f64, angle: f64) -> f64 {
    let (sin, cos) = angle.sin_cos();
    let steps = (DISC_MAX_RADIUS as f64 / RAY_STEP).round() as usize;
    let max_r = DISC_MAX_RADIUS as f64;
    let (mut hi, mut lo) = (None, None);
    for i in 0..=steps {
        let r = i as f64 * RAY_STEP;
        let v = bilinear(
            plane,
            side,
            DISC_CENTER as f64 + r * sin,
            DISC_CENTER as f64 + r * cos,
        );
        if hi.is_none() && v < 0.75 * peak {
            hi = Some(r);
        }
        if v < 0.25 * peak {
            lo = Some(r);
            break;
        }
    }
    lo.unwrap_or(max_r) - hi.unwrap_or(max_r)
}

/// `1 − mean transition width / max radius` over 64 rays from the disc
/// center, measured on the dominant channel and clamped to `[0, 1]`.
pub fn sharpness(img: &Tensor, layout: &CanvasLayout) -> Result<f64> {
    check_canvas("sharpness", img, layout)?;
    let disc = layout
        .region("disc")
        .ok_or_else(|| Error::Config(format!("{} canvas has no disc", layout.experiment)))?;
    let side = layout.side;
    let data = img.data();
    let mass = |c: usize| {
        disc.indices()
            .map(|p| data[p * 3 + c].clamp(0.0, 1.0))
            .sum::<f64>()
    };
    let channel = (0..3)
        .max_by(|&a, &b| mass(a).total_cmp(&mass(b)).then(b.cmp(&a)))
        .expect("three channels");
    if mass(channel) <= 0.0 {
        return Err(Error::Undecodable("no colored mass inside the disc".into()));
    }
    let plane: Vec<f64> = (0..side * side)
        .map(|p| data[p * 3 + channel].clamp(0.0, 1.0))
        .collect();
    let peak = disc.indices().map(|p| plane[p]).fold(0.0, f64::max);
    let mean_width = (0..RAYS)
        .map(|i| {
            transition_width(
                &plane,
                side,
                peak,
                std::f64::consts::TAU * i as f64 / RAYS as f64,
            )
        })
        .sum::<f64>()
        / RAYS as f64;
    Ok((1.0 - mean_width / DISC_MAX_RADIUS as f64).clamp(0.0, 1.0))
}

/// Decode, then combine RU energy, margin and (COVID only) sharpness.
pub fn assess(
    experiment: Experiment,
    variant: Variant,
    img: &Tensor,
    thresholds: &Thresholds,
) -> Result<(codecs::DecodeResult, UncertaintyReport)> {
    let layout = codecs::layout(experiment, variant);
    let decoded = codecs::decode(experiment, variant, img)?;
    let ru_energy = ru_energy(img, &layout)?;
    let sharpness = match experiment {
        Experiment::Covid => Some(sharpness(img, &layout)?),
        _ => None,
    };
    let mut flags = BTreeSet::new();
    if ru_energy > thresholds.ru_energy {
        flags.insert(Flag::RuContaminated);
    }
    if decoded.margin < thresholds.margin {
        flags.insert(Flag::LowMargin);
    }
    if sharpness.is_some_and(|s| s < thresholds.sharpness) {
        flags.insert(Flag::Blurred);
    }
    let report = UncertaintyReport {
        ru_energy,
        margin: decoded.margin,
        sharpness,
        flags,
    };
    Ok((decoded, report))
}

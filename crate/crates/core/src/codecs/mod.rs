//! Label → target image construction and image → label decoding.
//!
//! Every canvas splits into payload regions, which carry the estimate, and
//! the RU mask, which every target paints black. Decoders read region means
//! and never touch RU pixels.

mod label;
mod layout;
mod png;

pub use label::{covid_radius, AdState, CovidStatus, Label, MAX_DAYS, MAX_GRADE};
pub use layout::{
    layout, strip_columns, CanvasLayout, Mask, Region, DISC_CENTER, DISC_MAX_RADIUS, LOS_ROWS,
    STRIP_WIDTHS,
};
pub use png::{read_png, render_png, render_png_grid};

use serde::Serialize;

use crate::error::{shape_err, Error, Result};
use crate::experiment::{Experiment, RetinaType, Variant};
use crate::tensor::Tensor;

pub type Rgb = [f64; 3];

pub const BLACK: Rgb = [0.0, 0.0, 0.0];
pub const WHITE: Rgb = [1.0, 1.0, 1.0];
pub const ORANGE: Rgb = [1.0, 0.5, 0.0];
pub const CYAN: Rgb = [0.0, 1.0, 1.0];
pub const RED: Rgb = [1.0, 0.0, 0.0];
pub const GREEN: Rgb = [0.0, 1.0, 0.0];
pub const BLUE: Rgb = [0.0, 0.0, 1.0];
pub const DARK_GRAY: Rgb = [0.3, 0.3, 0.3];

/// Gray level per retinopathy grade.
pub const GRADE_INTENSITY: [f64; 5] = [1.0, 0.8, 0.6, 0.4, 0.2];
/// Inner-square color per retinopathy grade on type II/III canvases.
pub const GRADE_COLORS: [Rgb; 5] = [
    [0.0, 1.0, 0.0],
    [0.5, 1.0, 0.0],
    [1.0, 1.0, 0.0],
    [1.0, 0.5, 0.0],
    [1.0, 0.0, 0.0],
];
pub const NORMAL_RADIUS: usize = 8;

pub fn ad_color(state: AdState) -> Rgb {
    match state {
        AdState::Cn => GREEN,
        AdState::Mci => BLUE,
        AdState::Ad => RED,
    }
}

fn gray(v: f64) -> Rgb {
    [v, v, v]
}

/// One prototype set: the classes a region can decode to.
#[derive(Debug, Clone, Serialize)]
pub struct PrototypeSet {
    pub region: String,
    pub classes: Vec<(String, Rgb)>,
}

impl PrototypeSet {
    fn new(region: &str, classes: Vec<(String, Rgb)>) -> Self {
        Self {
            region: region.into(),
            classes,
        }
    }

    /// Smallest Euclidean distance between two prototypes.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.classes.iter().enumerate() {
            for b in &self.classes[i + 1..] {
                best = best.min(distance(&a.1, &b.1));
            }
        }
        best
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PrototypeTable {
    pub experiment: Experiment,
    pub variant: Variant,
    pub sets: Vec<PrototypeSet>,
}

pub fn prototypes(experiment: Experiment, variant: Variant) -> PrototypeTable {
    let grades = |f: &dyn Fn(usize) -> Rgb| (0..5).map(|g| (format!("grade_{g}"), f(g))).collect();
    let sets = match experiment {
        Experiment::Survival => vec![PrototypeSet::new(
            "inner_square",
            vec![("survival".into(), WHITE), ("fatal".into(), ORANGE)],
        )],
        Experiment::Retina => {
            let mut sets = match variant.retina {
                RetinaType::I => vec![PrototypeSet::new(
                    "payload",
                    grades(&|g| gray(GRADE_INTENSITY[g])),
                )],
                _ => vec![
                    PrototypeSet::new("inner_square", grades(&|g| GRADE_COLORS[g])),
                    PrototypeSet::new("peripheral_strip", grades(&|g| gray(GRADE_INTENSITY[g]))),
                ],
            };
            if variant.retina == RetinaType::III {
                sets.push(PrototypeSet::new(
                    "quality_rect",
                    vec![("high".into(), WHITE), ("low".into(), DARK_GRAY)],
                ));
            }
            sets
        }
        Experiment::Los => vec![PrototypeSet::new(
            "day_columns",
            vec![("day".into(), CYAN), ("empty".into(), BLACK)],
        )],
        Experiment::Covid => vec![PrototypeSet::new(
            "disc",
            vec![("normal".into(), GREEN), ("covid".into(), RED)],
        )],
        Experiment::Ad => (0..4)
            .map(|t| {
                PrototypeSet::new(
                    &format!("strip_{t}"),
                    AdState::ALL
                        .iter()
                        .map(|&s| (s.name().to_string(), ad_color(s)))
                        .collect(),
                )
            })
            .collect(),
    };
    PrototypeTable {
        experiment,
        variant,
        sets,
    }
}

pub fn distance(a: &Rgb, b: &Rgb) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Normalized gap between nearest and second-nearest distances.
pub fn margin(d1: f64, d2: f64) -> f64 {
    ((d2 - d1) / d2.max(1e-9)).clamp(0.0, 1.0)
}

fn paint(img: &mut Tensor, mask: &Mask, color: Rgb) {
    let data = img.data_mut();
    for p in mask.indices() {
        data[p * 3..p * 3 + 3].copy_from_slice(&color);
    }
}

/// Target image for a label. RU pixels are exactly zero.
pub fn encode(experiment: Experiment, variant: Variant, label: &Label) -> Result<Tensor> {
    label.validate(experiment, variant)?;
    let lay = layout(experiment, variant);
    let side = lay.side;
    let mut img = Tensor::zeros(&[side, side, 3]);
    match *label {
        Label::Survival { fatal } => paint(
            &mut img,
            lay.expect_region("inner_square"),
            if fatal { ORANGE } else { WHITE },
        ),
        Label::Retina { grade, quality } => {
            let g = grade as usize;
            let level = gray(GRADE_INTENSITY[g]);
            let square = if variant.retina == RetinaType::I {
                level
            } else {
                GRADE_COLORS[g]
            };
            paint(&mut img, lay.expect_region("inner_square"), square);
            paint(&mut img, lay.expect_region("peripheral_strip"), level);
            if let Some(high) = quality {
                paint(
                    &mut img,
                    lay.expect_region("quality_rect"),
                    if high { WHITE } else { DARK_GRAY },
                );
            }
        }
        Label::Los { days } => {
            let cols = Mask::rect(side, LOS_ROWS, (0, side - 1));
            let filled = Mask::from_fn(side, |y, x| cols.contains(y, x) && x < days as usize);
            paint(&mut img, &filled, CYAN);
        }
        Label::Covid { severity, .. } => {
            let (radius, color) = match severity {
                None => (NORMAL_RADIUS, GREEN),
                Some(s) => (covid_radius(s), RED),
            };
            paint(
                &mut img,
                &Mask::disc(side, DISC_CENTER, radius as f64),
                color,
            );
        }
        Label::Ad { states } => {
            for (t, &s) in states.iter().enumerate() {
                paint(
                    &mut img,
                    lay.expect_region(&format!("strip_{t}")),
                    ad_color(s),
                );
            }
        }
    }
    Ok(img)
}

/// Decoding of one payload component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentDecode {
    pub region: String,
    pub class: String,
    pub d1: f64,
    pub d2: f64,
    pub margin: f64,
}

/// Decoded label with the confidence of its least certain component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeResult {
    pub label: Label,
    pub d1: f64,
    pub d2: f64,
    pub margin: f64,
    pub components: Vec<ComponentDecode>,
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Mean clamped color over a mask.
pub fn region_mean(img: &Tensor, mask: &Mask) -> Rgb {
    let data = img.data();
    let mut sum = [0.0; 3];
    for p in mask.indices() {
        for (c, s) in sum.iter_mut().enumerate() {
            *s += clamp01(data[p * 3 + c]);
        }
    }
    let n = mask.count().max(1) as f64;
    sum.map(|s| s / n)
}

/// Nearest prototype: (index, d1, d2).
fn nearest(color: &Rgb, set: &PrototypeSet) -> (usize, f64, f64) {
    let mut dists: Vec<(usize, f64)> = set
        .classes
        .iter()
        .enumerate()
        .map(|(i, (_, p))| (i, distance(color, p)))
        .collect();
    dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    (dists[0].0, dists[0].1, dists[1].1)
}

fn classify(color: &Rgb, set: &PrototypeSet) -> (usize, ComponentDecode) {
    let (i, d1, d2) = nearest(color, set);
    let comp = ComponentDecode {
        region: set.region.clone(),
        class: set.classes[i].0.clone(),
        d1,
        d2,
        margin: margin(d1, d2),
    };
    (i, comp)
}

/// Per-column cyan score over the active LOS rows.
pub fn cyan_scores(img: &Tensor) -> Vec<f64> {
    let side = img.shape()[1];
    let data = img.data();
    let rows = LOS_ROWS.0..=LOS_ROWS.1;
    let n = rows.clone().count() as f64;
    (0..side)
        .map(|x| {
            let total: f64 = rows
                .clone()
                .map(|y| {
                    let p = (y * side + x) * 3;
                    let [r, g, b] = [0, 1, 2].map(|c| clamp01(data[p + c]));
                    (g + b) / 2.0 - r
                })
                .sum();
            clamp01(total / n)
        })
        .collect()
}

/// Red and green mass over the disc budget.
pub fn disc_masses(img: &Tensor, disc: &Mask) -> (f64, f64) {
    let data = img.data();
    disc.indices().fold((0.0, 0.0), |(red, green), p| {
        let (r, g) = (clamp01(data[p * 3]), clamp01(data[p * 3 + 1]));
        (red + clamp01(r - g), green + clamp01(g - r))
    })
}

pub fn decode(experiment: Experiment, variant: Variant, img: &Tensor) -> Result<DecodeResult> {
    let lay = layout(experiment, variant);
    if img.shape() != [lay.side, lay.side, 3] {
        return Err(shape_err(
            "decode",
            format!(
                "{experiment} expects a {s}×{s}×3 canvas, got {:?}",
                img.shape(),
                s = lay.side
            ),
        ));
    }
    let table = prototypes(experiment, variant);
    let mut components = Vec::new();
    let label = match experiment {
        Experiment::Survival => {
            let mean = region_mean(img, lay.expect_region("inner_square"));
            let (i, c) = classify(&mean, &table.sets[0]);
            components.push(c);
            Label::Survival { fatal: i == 1 }
        }
        Experiment::Retina => {
            let grade_mask = if variant.retina == RetinaType::I {
                lay.expect_region("inner_square")
                    .union(lay.expect_region("peripheral_strip"))
            } else {
                lay.expect_region("inner_square").clone()
            };
            let (grade, c) = classify(&region_mean(img, &grade_mask), &table.sets[0]);
            components.push(c);
            let quality = if variant.retina == RetinaType::III {
                let set = table.sets.last().expect("quality prototypes");
                let (i, c) = classify(&region_mean(img, lay.expect_region("quality_rect")), set);
                components.push(c);
                Some(i == 0)
            } else {
                None
            };
            Label::Retina {
                grade: grade as u8,
                quality,
            }
        }
        Experiment::Los => {
            let s: f64 = cyan_scores(img).iter().sum();
            let days = s.round().clamp(0.0, MAX_DAYS as f64);
            let d1 = (s - days).abs();
            components.push(ComponentDecode {
                region: "day_columns".into(),
                class: format!("{days}"),
                d1,
                d2: 1.0 - d1,
                margin: margin(d1, 1.0 - d1),
            });
            Label::Los { days: days as u8 }
        }
        Experiment::Covid => {
            let disc = lay.expect_region("disc");
            let (red, green) = disc_masses(img, disc);
            if red + green <= 0.0 {
                return Err(Error::Undecodable(
                    "no red or green mass inside the disc".into(),
                ));
            }
            let covid = red > green;
            let data = img.data();
            // Mass-weighted mean color of the colored pixels.
            let (mut wsum, mut color) = (0.0, [0.0; 3]);
            for p in disc.indices() {
                let px = [0, 1, 2].map(|c| clamp01(data[p * 3 + c]));
                let w = (px[0] - px[1]).abs();
                wsum += w;
                for c in 0..3 {
                    color[c] += w * px[c];
                }
            }
            let color = color.map(|v| v / wsum);
            // Status follows the mass comparison, so distances are reported in its order.
            let (dn, dc) = (distance(&color, &GREEN), distance(&color, &RED));
            let (d1, d2) = if covid { (dc, dn) } else { (dn, dc) };
            components.push(ComponentDecode {
                region: "disc".into(),
                class: if covid { "covid" } else { "normal" }.into(),
                d1: d1.min(d2),
                d2: d1.max(d2),
                margin: if d1 <= d2 { margin(d1, d2) } else { 0.0 },
            });
            if covid {
                let count = disc
                    .indices()
                    .filter(|&p| clamp01(data[p * 3]) > 0.5)
                    .count();
                let r = (count as f64 / std::f64::consts::PI).sqrt();
                Label::Covid {
                    status: CovidStatus::Covid,
                    severity: Some(clamp01((r - 4.0) / 13.0)),
                }
            } else {
                Label::Covid {
                    status: CovidStatus::Normal,
                    severity: None,
                }
            }
        }
        Experiment::Ad => {
            let mut states = [AdState::Cn; 4];
            for (t, set) in table.sets.iter().enumerate() {
                let mean = region_mean(img, lay.expect_region(&set.region));
                let (i, c) = classify(&mean, set);
                components.push(c);
                states[t] = AdState::ALL[i];
            }
            Label::Ad { states }
        }
    };
    let worst = components
        .iter()
        .min_by(|a, b| a.margin.total_cmp(&b.margin))
        .expect("every decoder reads at least one component");
    Ok(DecodeResult {
        label,
        d1: worst.d1,
        d2: worst.d2,
        margin: worst.margin,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variants() -> Vec<(Experiment, Variant)> {
        let mut out: Vec<_> = Experiment::ALL
            .iter()
            .map(|&e| (e, Variant::desk()))
            .collect();
        out.push((Experiment::Retina, Variant::retina(RetinaType::II)));
        out.push((Experiment::Retina, Variant::retina(RetinaType::III)));
        out
    }

    #[test]
    fn round_trip_every_label() {
        for (exp, v) in variants() {
            let lay = layout(exp, v);
            for label in Label::enumerate(exp, v) {
                let img = encode(exp, v, &label).unwrap();
                assert!(lay
                    .ru
                    .indices()
                    .all(|p| img.data()[p * 3..p * 3 + 3] == BLACK));
                let out = decode(exp, v, &img).unwrap();
                assert!(
                    out.label.same_as_drawn(&label),
                    "{exp} {label:?} → {:?}",
                    out.label
                );
                assert!(out.margin >= 0.5, "{exp} {label:?} margin {}", out.margin);
                assert!(out.d1 <= out.d2);
            }
        }
    }

    #[test]
    fn survival_targets() {
        let img = encode(
            Experiment::Survival,
            Variant::desk(),
            &Label::Survival { fatal: false },
        )
        .unwrap();
        assert_eq!(img.at(&[11, 11, 0]), 1.0);
        assert_eq!(img.at(&[0, 0, 0]), 0.0);
        let img = encode(
            Experiment::Survival,
            Variant::desk(),
            &Label::Survival { fatal: true },
        )
        .unwrap();
        assert_eq!([0, 1, 2].map(|c| img.at(&[5, 17, c])), ORANGE);
    }

    #[test]
    fn retina_type_one_gray_payload() {
        let v = Variant::desk();
        let img = encode(
            Experiment::Retina,
            v,
            &Label::Retina {
                grade: 2,
                quality: None,
            },
        )
        .unwrap();
        assert_eq!([0, 1, 2].map(|c| img.at(&[11, 11, c])), [0.6; 3]);
        assert_eq!([0, 1, 2].map(|c| img.at(&[3, 3, c])), [0.6; 3]);
    }

    #[test]
    fn los_extremes() {
        let v = Variant::desk();
        let empty = encode(Experiment::Los, v, &Label::Los { days: 0 }).unwrap();
        assert!(empty.data().iter().all(|&x| x == 0.0));
        let full = encode(Experiment::Los, v, &Label::Los { days: 45 }).unwrap();
        for y in 0..45 {
            for x in 0..45 {
                let want = if (10..=34).contains(&y) { CYAN } else { BLACK };
                assert_eq!([0, 1, 2].map(|c| full.at(&[y, x, c])), want);
            }
        }
    }

    #[test]
    fn ad_progression_strips() {
        let states = [AdState::Mci, AdState::Mci, AdState::Ad, AdState::Ad];
        let img = encode(Experiment::Ad, Variant::desk(), &Label::Ad { states }).unwrap();
        let at = |x: usize| [0, 1, 2].map(|c| img.at(&[11, x, c]));
        assert_eq!(
            [at(0), at(5), at(10), at(15), at(19), at(22)],
            [BLUE, BLUE, RED, RED, BLACK, BLACK]
        );
    }

    #[test]
    fn retina_mixture_picks_nearest_grade() {
        let v = Variant::retina(RetinaType::II);
        let mut img = encode(
            Experiment::Retina,
            v,
            &Label::Retina {
                grade: 0,
                quality: None,
            },
        )
        .unwrap();
        paint(
            &mut img,
            layout(Experiment::Retina, v).expect_region("inner_square"),
            [0.95, 0.55, 0.02],
        );
        let out = decode(Experiment::Retina, v, &img).unwrap();
        assert_eq!(
            out.label,
            Label::Retina {
                grade: 3,
                quality: None
            }
        );
        let mean = region_mean(
            &img,
            layout(Experiment::Retina, v).expect_region("inner_square"),
        );
        assert!(distance(&mean, &[0.95, 0.55, 0.02]) < 1e-12);
        let mut d: Vec<f64> = GRADE_COLORS.iter().map(|p| distance(&mean, p)).collect();
        d.sort_by(f64::total_cmp);
        assert_eq!((out.d1, out.d2), (d[0], d[1]));
    }

    #[test]
    fn los_decoder_matches_column_oracle() {
        let mut img = Tensor::zeros(&[45, 45, 3]);
        for y in 10..=34 {
            for x in 0..12 {
                img.set(&[y, x, 1], 0.9);
                img.set(&[y, x, 2], 0.9);
            }
            img.set(&[y, 12, 1], 0.45);
            img.set(&[y, 12, 2], 0.45);
        }
        let mut s = 0.0;
        for x in 0..45 {
            let mut col = 0.0;
            for y in 10..=34 {
                let (r, g, b) = (img.at(&[y, x, 0]), img.at(&[y, x, 1]), img.at(&[y, x, 2]));
                col += (g + b) / 2.0 - r;
            }
            s += (col / 25.0).clamp(0.0, 1.0);
        }
        let out = decode(Experiment::Los, Variant::desk(), &img).unwrap();
        assert_eq!(
            out.label,
            Label::Los {
                days: s.round() as u8
            }
        );
        assert_eq!(out.label, Label::Los { days: 11 });
    }

    #[test]
    fn los_decode_is_monotone_in_added_cyan() {
        let v = Variant::desk();
        let mut img = encode(Experiment::Los, v, &Label::Los { days: 20 }).unwrap();
        let mut last = 20;
        for step in 1..=10 {
            for y in 10..=34 {
                img.set(&[y, 20, 1], step as f64 / 10.0);
                img.set(&[y, 20, 2], step as f64 / 10.0);
            }
            let Label::Los { days } = decode(Experiment::Los, v, &img).unwrap().label else {
                unreachable!()
            };
            assert!(days >= last);
            last = days;
        }
        assert_eq!(last, 21);
    }

    #[test]
    fn decode_ignores_ru_pixels() {
        for (exp, v) in variants() {
            let lay = layout(exp, v);
            let label = Label::enumerate(exp, v)[1];
            let mut img = encode(exp, v, &label).unwrap();
            let clean = decode(exp, v, &img).unwrap();
            paint(&mut img, &lay.ru, [0.7, 0.2, 0.9]);
            assert_eq!(decode(exp, v, &img).unwrap(), clean);
        }
    }

    #[test]
    fn covid_undecodable_without_mass() {
        let err = decode(
            Experiment::Covid,
            Variant::desk(),
            &Tensor::zeros(&[45, 45, 3]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Undecodable(_)));
    }

    #[test]
    fn wrong_canvas_is_rejected() {
        assert!(decode(
            Experiment::Los,
            Variant::desk(),
            &Tensor::zeros(&[23, 23, 3])
        )
        .is_err());
    }

    #[test]
    fn color_tables_are_well_separated() {
        // The gray ladder steps by 0.2 per channel (0.35 in RGB), so only the
        // color-coded sets clear 0.4.
        for (exp, v) in variants() {
            for set in prototypes(exp, v).sets {
                let sep = set.min_separation();
                if set
                    .classes
                    .iter()
                    .all(|(_, c)| c[0] == c[1] && c[1] == c[2])
                    && set.classes.len() == 5
                {
                    assert!((sep - 0.2 * 3f64.sqrt()).abs() < 1e-12);
                } else {
                    assert!(sep > 0.4, "{exp} {} separation {sep}", set.region);
                }
            }
        }
    }
}

use crate::experiment::{Experiment, RetinaType, Variant};

/// Center pixel of the 45-pixel COVID canvas.
pub const DISC_CENTER: usize = 22;
/// Largest radius the COVID disc may take; pixels beyond it are RU.
pub const DISC_MAX_RADIUS: usize = 17;
/// Widths of the four AD time-point strips, left to right.
pub const STRIP_WIDTHS: [usize; 4] = [5, 5, 5, 4];
/// First and last (inclusive) row of the LOS day columns.
pub const LOS_ROWS: (usize, usize) = (10, 34);

/// Set of pixels on a square canvas, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    side: usize,
    bits: Vec<bool>,
    pixels: usize,
}

impl Mask {
    pub fn empty(side: usize) -> Self {
        Self::from_fn(side, |_, _| false)
    }

    pub fn from_fn(side: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits: Vec<bool> = (0..side * side).map(|i| f(i / side, i % side)).collect();
        let pixels = bits.iter().filter(|&&b| b).count();
        Self { side, bits, pixels }
    }

    /// Rows `r0..=r1` × columns `c0..=c1`.
    pub fn rect(side: usize, (r0, r1): (usize, usize), (c0, c1): (usize, usize)) -> Self {
        Self::from_fn(side, |y, x| {
            (r0..=r1).contains(&y) && (c0..=c1).contains(&x)
        })
    }

    /// Pixels within Euclidean distance `radius` of `(center, center)`.
    pub fn disc(side: usize, center: usize, radius: f64) -> Self {
        let r2 = radius * radius;
        Self::from_fn(side, |y, x| {
            let (dy, dx) = (y as f64 - center as f64, x as f64 - center as f64);
            dy * dy + dx * dx <= r2
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.side + x]
    }

    pub fn count(&self) -> usize {
        self.pixels
    }

    /// Row-major pixel indices (`y · side + x`) in the mask.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
    }

    pub fn union(&self, other: &Mask) -> Mask {
        Mask::from_fn(self.side, |y, x| {
            self.contains(y, x) || other.contains(y, x)
        })
    }

    pub fn minus(&self, other: &Mask) -> Mask {
        Mask::from_fn(self.side, |y, x| {
            self.contains(y, x) && !other.contains(y, x)
        })
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).any(|(a, b)| *a && *b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub name: String,
    pub mask: Mask,
}

/// Pixel-region map of a canvas: named payload regions plus the RU mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanvasLayout {
    pub experiment: Experiment,
    pub side: usize,
    pub regions: Vec<Region>,
    pub ru: Mask,
}

impl CanvasLayout {
    pub fn region(&self, name: &str) -> Option<&Mask> {
        self.regions
            .iter()
            .find(|r| r.name == name)
            .map(|r| &r.mask)
    }

    pub(crate) fn expect_region(&self, name: &str) -> &Mask {
        self.region(name)
            .unwrap_or_else(|| panic!("layout for {} has no region {name}", self.experiment))
    }
}

/// Column range (inclusive) of AD strip `t`.
pub fn strip_columns(t: usize) -> (usize, usize) {
    let start: usize = STRIP_WIDTHS[..t].iter().sum();
    (start, start + STRIP_WIDTHS[t] - 1)
}

pub fn layout(experiment: Experiment, variant: Variant) -> CanvasLayout {
    let side = experiment.canvas_side();
    let last = side - 1;
    let mut regions = Vec::new();
    let mut add = |name: &str, mask: Mask| {
        regions.push(Region {
            name: name.to_string(),
            mask,
        })
    };
    match experiment {
        Experiment::Survival => add("inner_square", Mask::rect(side, (5, 17), (5, 17))),
        Experiment::Retina => {
            let outer = Mask::rect(side, (3, 19), (3, 19));
            let hole = Mask::rect(side, (5, 17), (5, 17));
            add("inner_square", Mask::rect(side, (6, 16), (6, 16)));
            add("peripheral_strip", outer.minus(&hole));
            if variant.retina == RetinaType::III {
                add("quality_rect", Mask::rect(side, (0, 2), (6, 16)));
            }
        }
        Experiment::Los => add("day_columns", Mask::rect(side, LOS_ROWS, (0, last))),
        Experiment::Covid => add(
            "disc",
            Mask::disc(side, DISC_CENTER, DISC_MAX_RADIUS as f64),
        ),
        Experiment::Ad => {
            for t in 0..STRIP_WIDTHS.len() {
                add(
                    &format!("strip_{t}"),
                    Mask::rect(side, (0, last), strip_columns(t)),
                );
            }
        }
    }
    let payload = regions
        .iter()
        .fold(Mask::empty(side), |acc, r| acc.union(&r.mask));
    let ru = Mask::from_fn(side, |y, x| !payload.contains(y, x));
    CanvasLayout {
        experiment,
        side,
        regions,
        ru,
    }
}

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Schema};
use crate::codecs::{AdState, CovidStatus, Label, MAX_DAYS, MAX_GRADE};
use crate::error::{Error, Result};
use crate::experiment::{Experiment, RetinaType, Variant};
use crate::tensor::Tensor;

/// Side of the synthetic fundus and chest images.
pub const IMAGE_SIDE: usize = 64;
/// Opacity area in pixels drawn for COVID severity 1.
pub const COVID_LUNG_AREA: f64 = 420.0;
/// Years after baseline of the four AD visits.
pub const AD_TIMES: [f64; 4] = [0.0, 0.5, 1.0, 2.0];
/// Latent AD score cut points: CN below the first, AD at or above the second.
pub const AD_THRESHOLDS: [f64; 2] = [1.0, 2.0];

/// Everything needed to regenerate a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub experiment: Experiment,
    pub variant: Variant,
    pub n: usize,
    pub seed: u64,
    pub noise: f64,
}

/// Task parameters (weights, mixing matrices) are drawn from a fixed seed
/// per experiment so that datasets with different sample seeds share a task.
fn task_rng(exp: Experiment) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x7A5C_0000 + u64::from(exp.id()))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn gen_synth(params: SynthParams) -> Result<Dataset> {
    let SynthParams {
        experiment,
        variant,
        n,
        seed,
        noise,
    } = params;
    if n == 0 {
        return Err(Error::Config("synthetic dataset needs n ≥ 1".into()));
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(Error::Config(format!(
            "noise {noise} must be finite and non-negative"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = Schema::for_experiment(experiment, variant);
    let (features, labels) = match experiment {
        Experiment::Survival => {
            linear_task(&mut rng, experiment, 183, n, noise, |z| Label::Survival {
                fatal: sigmoid(z) > 0.5,
            })
        }
        Experiment::Los => linear_task(&mut rng, experiment, 52, n, noise, |z| Label::Los {
            days: (f64::from(MAX_DAYS) * sigmoid(z))
                .round()
                .clamp(0.0, f64::from(MAX_DAYS)) as u8,
        }),
        Experiment::Ad => ad_task(&mut rng, n, noise),
        Experiment::Retina => retina_images(&mut rng, variant.retina, n, noise),
        Experiment::Covid => covid_images(&mut rng, n, noise),
    };
    Dataset::new(schema, features, labels)
}

/// Standard-normal features with a label read from `w·x + ε`, `w` unit norm.
fn linear_task(
    rng: &mut ChaCha8Rng,
    exp: Experiment,
    d: usize,
    n: usize,
    noise: f64,
    label: impl Fn(f64) -> Label,
) -> (Tensor, Vec<Label>) {
    let w = unit_vector(&mut task_rng(exp), d);
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        let z = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + noise * normal(rng);
        data.extend_from_slice(&x);
        labels.push(label(z));
    }
    (Tensor::new(&[n, d], data).expect("n ≥ 1"), labels)
}

pub(crate) fn ad_state(score: f64) -> AdState {
    if score < AD_THRESHOLDS[0] {
        AdState::Cn
    } else if score < AD_THRESHOLDS[1] {
        AdState::Mci
    } else {
        AdState::Ad
    }
}

/// Latent score `s(t) = s0 + v·t` with `v ≥ 0`, so trajectories never
/// improve. The 36 features mix `(s0, v)` with two nuisance factors.
fn ad_task(rng: &mut ChaCha8Rng, n: usize, noise: f64) -> (Tensor, Vec<Label>) {
    const D: usize = 36;
    let mut task = task_rng(Experiment::Ad);
    let mix: Vec<[f64; 4]> = (0..D)
        .map(|_| {
            [
                normal(&mut task),
                normal(&mut task),
                0.5 * normal(&mut task),
                0.5 * normal(&mut task),
            ]
        })
        .collect();
    let mut data = Vec::with_capacity(n * D);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let s0 = rng.random_range(0.0..2.6);
        let v = rng.random_range(0.0..1.0);
        let latent = [s0, v, normal(rng), normal(rng)];
        for m in &mix {
            let clean: f64 = m.iter().zip(&latent).map(|(a, b)| a * b).sum();
            data.push(clean + noise * normal(rng));
        }
        labels.push(Label::Ad {
            states: AD_TIMES.map(|t| ad_state(s0 + v * t)),
        });
    }
    (Tensor::new(&[n, D], data).expect("n ≥ 1"), labels)
}

type Image = Vec<f64>;

fn blank() -> Image {
    vec![0.0; IMAGE_SIDE * IMAGE_SIDE * 3]
}

fn add_noise(img: &mut Image, rng: &mut ChaCha8Rng, noise: f64) {
    for v in img.iter_mut() {
        *v = (*v + noise * normal(rng)).clamp(0.0, 1.0);
    }
}

/// Soft-edged disc blended toward `color` with weight `strength`.
fn blob(img: &mut Image, cy: f64, cx: f64, radius: f64, color: [f64; 3], strength: f64) {
    let lo_y = (cy - radius - 1.0).floor().max(0.0) as usize;
    let hi_y = ((cy + radius + 1.0).ceil() as usize).min(IMAGE_SIDE - 1);
    let lo_x = (cx - radius - 1.0).floor().max(0.0) as usize;
    let hi_x = ((cx + radius + 1.0).ceil() as usize).min(IMAGE_SIDE - 1);
    for y in lo_y..=hi_y {
        for x in lo_x..=hi_x {
            let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            let a = strength * (radius + 0.5 - d).clamp(0.0, 1.0);
            let p = (y * IMAGE_SIDE + x) * 3;
            for c in 0..3 {
                img[p + c] += a * (color[c] - img[p + c]);
            }
        }
    }
}

fn box_blur3(img: &Image) -> Image {
    let s = IMAGE_SIDE as isize;
    let mut out = blank();
    for y in 0..s {
        for x in 0..s {
            for c in 0..3 {
                let (mut sum, mut k) = (0.0, 0.0);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (yy, xx) = (y + dy, x + dx);
                        if (0..s).contains(&yy) && (0..s).contains(&xx) {
                            sum += img[((yy * s + xx) * 3) as usize + c as usize];
                            k += 1.0;
                        }
                    }
                }
                out[((y * s + x) * 3) as usize + c as usize] = sum / k;
            }
        }
    }
    out
}

fn stack(images: Vec<Image>) -> Tensor {
    let n = images.len();
    Tensor::new(&[n, IMAGE_SIDE, IMAGE_SIDE, 3], images.concat()).expect("n ≥ 1")
}

/// Orange fundus disc with an optic disc and `grade` dark lesions. Type III
/// low-quality images are darkened and blurred.
fn retina_images(
    rng: &mut ChaCha8Rng,
    retina: RetinaType,
    n: usize,
    noise: f64,
) -> (Tensor, Vec<Label>) {
    let c = (IMAGE_SIDE / 2) as f64;
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let grade = rng.random_range(0..=MAX_GRADE);
        let quality = (retina == RetinaType::III).then(|| rng.random_bool(0.5));
        let (cy, cx) = (
            c + rng.random_range(-2.0..2.0),
            c + rng.random_range(-2.0..2.0),
        );
        let radius = 27.0;
        let mut img = blank();
        for y in 0..IMAGE_SIDE {
            for x in 0..IMAGE_SIDE {
                let r = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt() / radius;
                if r <= 1.0 {
                    let shade = 1.0 - 0.35 * r * r;
                    let p = (y * IMAGE_SIDE + x) * 3;
                    img[p] = 0.9 * shade;
                    img[p + 1] = 0.45 * shade;
                    img[p + 2] = 0.15 * shade;
                }
            }
        }
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        blob(&mut img, cy, cx + side * 12.0, 4.5, [1.0, 0.9, 0.6], 1.0);
        for _ in 0..grade {
            let (r, a) = (
                rng.random_range(0.0..20.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            );
            let size = rng.random_range(2.5..4.0);
            blob(
                &mut img,
                cy + r * a.sin(),
                cx + r * a.cos(),
                size,
                [0.2, 0.03, 0.03],
                0.9,
            );
        }
        if quality == Some(false) {
            img = box_blur3(&img).into_iter().map(|v| 0.55 * v).collect();
        }
        add_noise(&mut img, rng, noise);
        images.push(img);
        labels.push(Label::Retina { grade, quality });
    }
    (stack(images), labels)
}

/// Lung fields as ellipses: (center y, center x, semi-axis y, semi-axis x).
const LUNGS: [(f64, f64, f64, f64); 2] = [(32.0, 19.0, 21.0, 9.5), (32.0, 45.0, 21.0, 9.5)];

fn in_lung(y: f64, x: f64, lung: (f64, f64, f64, f64)) -> bool {
    let (cy, cx, ry, rx) = lung;
    ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0
}

/// Gray chest gradient with dark lungs; COVID cases add bright opacity
/// patches whose total area is proportional to severity.
fn covid_images(rng: &mut ChaCha8Rng, n: usize, noise: f64) -> (Tensor, Vec<Label>) {
    let mut covid: Vec<bool> = (0..n).map(|i| i < n / 2).collect();
    covid.shuffle(rng);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for &sick in &covid {
        let mut img = blank();
        for y in 0..IMAGE_SIDE {
            for x in 0..IMAGE_SIDE {
                let (fy, fx) = (y as f64, x as f64);
                let body =
                    0.35 + 0.3 * fy / IMAGE_SIDE as f64 - 0.15 * ((fx - 32.0) / 32.0).powi(2);
                let v = if LUNGS.iter().any(|&l| in_lung(fy, fx, l)) {
                    0.12
                } else {
                    body
                };
                img[(y * IMAGE_SIDE + x) * 3..][..3].fill(v);
            }
        }
        let label = if sick {
            let severity: f64 = rng.random_range(0.1..1.0);
            let patches = 4;
            let radius =
                (severity * COVID_LUNG_AREA / (patches as f64 * std::f64::consts::PI)).sqrt();
            for i in 0..patches {
                let lung = LUNGS[i % 2];
                let (cy, cx) = loop {
                    let y = rng.random_range(lung.0 - lung.2..lung.0 + lung.2);
                    let x = rng.random_range(lung.1 - lung.3..lung.1 + lung.3);
                    if in_lung(y, x, lung) {
                        break (y, x);
                    }
                };
                blob(&mut img, cy, cx, radius, [0.75; 3], 0.85);
            }
            Label::Covid {
                status: CovidStatus::Covid,
                severity: Some(severity),
            }
        } else {
            Label::Covid {
                status: CovidStatus::Normal,
                severity: None,
            }
        };
        add_noise(&mut img, rng, noise);
        images.push(img);
        labels.push(label);
    }
    (stack(images), labels)
}

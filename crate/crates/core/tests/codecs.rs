use glyphnet::codecs::{decode, encode, layout, read_png, render_png, Label};
use glyphnet::uncertainty::{assess, Flag, Thresholds};
use glyphnet::{Experiment, RetinaType, Variant};

fn variants(exp: Experiment) -> Vec<Variant> {
    if exp == Experiment::Retina {
        vec![
            Variant::desk(),
            Variant::retina(RetinaType::II),
            Variant::retina(RetinaType::III),
        ]
    } else {
        vec![Variant::desk()]
    }
}

#[test]
fn labels_survive_png_files() {
    for exp in Experiment::ALL {
        for variant in variants(exp) {
            for label in Label::enumerate(exp, variant).into_iter().step_by(7) {
                let img = encode(exp, variant, &label).unwrap();
                let back = read_png(&render_png(&img, 1).unwrap()).unwrap();
                let d = decode(exp, variant, &back).unwrap();
                assert!(
                    d.label.same_as_drawn(&label),
                    "{exp} {label} -> {}",
                    d.label
                );
                assert!(d.margin >= 0.5);
            }
        }
    }
}

#[test]
fn text_labels_parse_to_what_they_print() {
    for exp in Experiment::ALL {
        for variant in variants(exp) {
            for label in Label::enumerate(exp, variant) {
                assert_eq!(
                    Label::parse(exp, variant, &label.to_string()).unwrap(),
                    label
                );
            }
        }
    }
    assert!(Label::parse(Experiment::Survival, Variant::desk(), "2").is_err());
    assert!(Label::parse(Experiment::Los, Variant::desk(), "46").is_err());
}

#[test]
fn uncertainty_grows_with_ru_paint() {
    let exp = Experiment::Los;
    let label = Label::Los { days: 20 };
    let mut img = encode(exp, Variant::desk(), &label).unwrap();
    let lay = layout(exp, Variant::desk());
    let th = Thresholds::default();
    let (_, clean) = assess(exp, Variant::desk(), &img, &th).unwrap();
    assert!(clean.flags.is_empty());
    for idx in lay.ru.indices() {
        img.data_mut()[idx * 3 + 1] = 0.5;
    }
    let (d, dirty) = assess(exp, Variant::desk(), &img, &th).unwrap();
    assert_eq!(d.label, label);
    assert!(dirty.ru_energy > clean.ru_energy);
    assert!(dirty.flags.contains(&Flag::RuContaminated));
}

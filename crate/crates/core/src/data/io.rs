use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::SynthParams;
use super::{Dataset, Schema};
use crate::codecs::{read_png, render_png};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TABLE_FILE: &str = "data.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const IMAGE_DIR: &str = "images";

/// Description of a dataset directory: schema, size and, for synthetic
/// data, the generator parameters that reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: Schema,
    pub n: usize,
    /// `data.csv` for tables, `labels.csv` (plus `images/`) for images.
    pub file: String,
    pub generator: Option<SynthParams>,
}

fn data_err(path: &Path, detail: impl std::fmt::Display) -> Error {
    Error::Data(format!("{}: {detail}", path.display()))
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| data_err(path, e))
}

fn check_header(path: &Path, found: &csv::StringRecord, expected: &[String]) -> Result<()> {
    for (i, name) in found.iter().enumerate() {
        match expected.get(i) {
            Some(want) if want == name => {}
            Some(want) => {
                return Err(data_err(
                    path,
                    format!(
                        "unexpected column {name:?} at position {} (expected {want:?})",
                        i + 1
                    ),
                ))
            }
            None => {
                return Err(data_err(
                    path,
                    format!("unexpected column {name:?} after the last expected column"),
                ))
            }
        }
    }
    if let Some(missing) = expected.get(found.len()) {
        return Err(data_err(
            path,
            format!("header ends before column {missing:?}"),
        ));
    }
    Ok(())
}

/// Rows of `(line number, record)` with the field count checked.
fn records(
    path: &Path,
    reader: &mut csv::Reader<std::fs::File>,
    width: usize,
) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| data_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(data_err(
                path,
                format!("line {line}: expected {width} fields, found {}", rec.len()),
            ));
        }
        out.push((line, rec));
    }
    if out.is_empty() {
        return Err(data_err(path, "no data rows"));
    }
    Ok(out)
}

/// Read a tabular CSV whose header is exactly `schema.header()`. Empty
/// cells become NaN and are imputed later by `preprocess`.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    if !schema.is_tabular() {
        return Err(Error::Config(format!(
            "{} data is stored as images",
            schema.experiment
        )));
    }
    let mut reader = open_csv(path)?;
    let header = reader.headers().map_err(|e| data_err(path, e))?.clone();
    let expected = schema.header();
    check_header(path, &header, &expected)?;
    let nf = schema.features.len();
    let rows = records(path, &mut reader, expected.len())?;
    let mut data = Vec::with_capacity(rows.len() * nf);
    let mut labels = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        for (c, cell) in rec.iter().take(nf).enumerate() {
            let cell = cell.trim();
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        return Err(data_err(
                            path,
                            format!(
                                "line {line}, column {:?}: {cell:?} is not a finite number",
                                schema.features[c]
                            ),
                        ))
                    }
                }
            };
            data.push(v);
        }
        let cells: Vec<&str> = rec.iter().skip(nf).map(str::trim).collect();
        let label = schema
            .parse_label(&cells)
            .map_err(|e| data_err(path, format!("line {line}: {e}")))?;
        labels.push(label);
    }
    let features = Tensor::new(&[rows.len(), nf], data)?;
    Dataset::new(schema.clone(), features, labels)
}

pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let schema = &dataset.schema;
    if !schema.is_tabular() {
        return Err(Error::Config(format!(
            "{} data is stored as images",
            schema.experiment
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(schema.header())?;
    let nf = schema.features.len();
    for (i, label) in dataset.labels.iter().enumerate() {
        let mut row: Vec<String> = dataset.features.data()[i * nf..(i + 1) * nf]
            .iter()
            .map(|v| {
                if v.is_nan() {
                    String::new()
                } else {
                    v.to_string()
                }
            })
            .collect();
        row.extend(schema.label_cells(label));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn image_name(i: usize) -> String {
    format!("{i:06}.png")
}

/// Write `dir/manifest.json` plus either `data.csv` or `labels.csv` and
/// one PNG per sample under `dir/images/`.
pub fn write_dir(
    dataset: &Dataset,
    dir: &Path,
    generator: Option<SynthParams>,
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    let file = if dataset.schema.is_tabular() {
        write_csv(dataset, &dir.join(TABLE_FILE))?;
        TABLE_FILE
    } else {
        let images = dir.join(IMAGE_DIR);
        std::fs::create_dir_all(&images)?;
        let mut w = csv::Writer::from_path(dir.join(LABELS_FILE))?;
        w.write_record(["file", "label"])?;
        for (i, label) in dataset.labels.iter().enumerate() {
            let name = image_name(i);
            std::fs::write(
                images.join(&name),
                render_png(&dataset.features.sample(i), 1)?,
            )?;
            w.write_record([format!("{IMAGE_DIR}/{name}"), label.to_string()])?;
        }
        w.flush()?;
        LABELS_FILE
    };
    let manifest = DatasetManifest {
        schema: dataset.schema.clone(),
        n: dataset.len(),
        file: file.to_string(),
        generator,
    };
    std::fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

pub fn load_dir(dir: &Path) -> Result<(Dataset, DatasetManifest)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| data_err(&manifest_path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| data_err(&manifest_path, e))?;
    let path = dir.join(&manifest.file);
    let dataset = if manifest.schema.is_tabular() {
        load_csv(&path, &manifest.schema)?
    } else {
        load_images(dir, &path, &manifest.schema)?
    };
    if dataset.len() != manifest.n {
        return Err(data_err(
            &path,
            format!("{} rows, manifest says {}", dataset.len(), manifest.n),
        ));
    }
    Ok((dataset, manifest))
}

fn load_images(dir: &Path, path: &Path, schema: &Schema) -> Result<Dataset> {
    let mut reader = open_csv(path)?;
    let header = reader.headers().map_err(|e| data_err(path, e))?.clone();
    check_header(path, &header, &["file".to_string(), "label".to_string()])?;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in records(path, &mut reader, 2)? {
        let file: PathBuf = dir.join(&rec[0]);
        let bytes = std::fs::read(&file).map_err(|e| data_err(&file, e))?;
        let img = read_png(&bytes).map_err(|e| data_err(&file, e))?;
        if let Some(first) = images.first().map(Tensor::shape) {
            if img.shape() != first {
                return Err(data_err(
                    &file,
                    format!("image {:?} differs from {:?}", img.shape(), first),
                ));
            }
        }
        images.push(img);
        labels.push(
            schema
                .parse_label(&[rec[1].trim()])
                .map_err(|e| data_err(path, format!("line {line}: {e}")))?,
        );
    }
    Dataset::new(schema.clone(), Tensor::stack(&images)?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codecs::Label;
    use crate::data::gen_synth;
    use crate::experiment::{Experiment, Variant};

    fn survival_schema() -> Schema {
        let mut s = Schema::for_experiment(Experiment::Survival, Variant::desk());
        s.features = vec!["a".into(), "b".into()];
        s
    }

    #[test]
    fn one_missing_cell_one_mark() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "a,b,fatal\n1,2,0\n3,,1\n5,6,0\n").unwrap();
        let ds = load_csv(&p, &survival_schema()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.missing_count(), 1);
        assert!(ds.features.at(&[1, 1]).is_nan());
        assert_eq!(ds.labels[1], Label::Survival { fatal: true });
    }

    #[test]
    fn header_mismatch_names_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "a,bb,fatal\n1,2,0\n").unwrap();
        let err = load_csv(&p, &survival_schema()).unwrap_err().to_string();
        assert!(err.contains("\"bb\""), "{err}");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(load_csv(&p, &survival_schema())
            .unwrap_err()
            .to_string()
            .contains("\"fatal\""));
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "a,b,fatal\n1,2,0\n1,2\n").unwrap();
        let err = load_csv(&p, &survival_schema()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        std::fs::write(&p, "a,b,fatal\n1,2,0\n4,5,1\nx,2,0\n").unwrap();
        let err = load_csv(&p, &survival_schema()).unwrap_err().to_string();
        assert!(err.contains("line 4") && err.contains("\"a\""), "{err}");
        std::fs::write(&p, "a,b,fatal\n1,2,7\n").unwrap();
        assert!(load_csv(&p, &survival_schema())
            .unwrap_err()
            .to_string()
            .contains("line 2"));
    }

    #[test]
    fn tabular_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for exp in [Experiment::Survival, Experiment::Los, Experiment::Ad] {
            let params = SynthParams {
                experiment: exp,
                variant: Variant::desk(),
                n: 40,
                seed: 2,
                noise: 0.1,
            };
            let mut ds = gen_synth(params).unwrap();
            ds.features.set(&[3, 4], f64::NAN);
            let sub = dir.path().join(exp.name());
            let manifest = write_dir(&ds, &sub, Some(params)).unwrap();
            let (back, m2) = load_dir(&sub).unwrap();
            assert_eq!(manifest, m2);
            assert_eq!(back.labels, ds.labels);
            assert_eq!(back.missing_count(), 1);
            for (a, b) in back.features.data().iter().zip(ds.features.data()) {
                assert!((a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn image_round_trip_quantizes_to_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let params = SynthParams {
            experiment: Experiment::Covid,
            variant: Variant::desk(),
            n: 4,
            seed: 1,
            noise: 0.05,
        };
        let ds = gen_synth(params).unwrap();
        write_dir(&ds, dir.path(), Some(params)).unwrap();
        assert_eq!(
            std::fs::read_dir(dir.path().join(IMAGE_DIR))
                .unwrap()
                .count(),
            4
        );
        let (back, _) = load_dir(dir.path()).unwrap();
        assert_eq!(back.labels, ds.labels);
        for (a, b) in back.features.data().iter().zip(ds.features.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, LoadOptions};
use crate::error::{Error, Result};

const FEATURE_PREFIX: &str = "f_";

/// Loads a `label,<concepts...>[,f_...]` CSV file.
pub fn load_csv(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, options)
}

/// Parses the CSV layout from any reader. Rows and columns in errors are
/// 1-based and count data rows only (the header is row 0).
pub fn read_csv<R: Read>(reader: R, options: &LoadOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::EmptyDataset),
        Some(h) => h?,
    };
    if header.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyDataset);
    }
    if header.get(0) != Some("label") {
        return Err(Error::Parse {
            row: 0,
            column: 1,
            message: "first header column must be 'label'".into(),
        });
    }
    let names: Vec<&str> = header.iter().skip(1).collect();
    let first_feature = names
        .iter()
        .position(|n| n.starts_with(FEATURE_PREFIX))
        .unwrap_or(names.len());
    if let Some(bad) = names[first_feature..]
        .iter()
        .position(|n| !n.starts_with(FEATURE_PREFIX))
    {
        return Err(Error::Parse {
            row: 0,
            column: first_feature + bad + 2,
            message: "concept columns must precede all f_ feature columns".into(),
        });
    }
    let concept_names: Vec<String> = names[..first_feature].iter().map(|s| s.to_string()).collect();
    let feature_names: Vec<String> = names[first_feature..].iter().map(|s| s.to_string()).collect();
    let k = concept_names.len();
    let f = feature_names.len();
    let width = 1 + k + f;

    let mut labels = Vec::new();
    let mut concepts = Vec::new();
    let mut features = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != width {
            return Err(Error::Parse {
                row,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} columns, found {}", rec.len()),
            });
        }
        let label_cell = &rec[0];
        let label: usize = label_cell.parse().map_err(|_| Error::Parse {
            row,
            column: 1,
            message: format!("label '{label_cell}' is not a non-negative integer"),
        })?;
        if let Some(c) = options.class_count {
            if label >= c {
                return Err(Error::Parse {
                    row,
                    column: 1,
                    message: format!("label {label} outside [0, {c})"),
                });
            }
        }
        labels.push(label);
        for j in 0..k {
            let cell = &rec[1 + j];
            let v = match cell {
                "0" => 0,
                "1" => 1,
                _ => {
                    return Err(Error::Parse {
                        row,
                        column: 2 + j,
                        message: format!("concept cell '{cell}' is not 0 or 1"),
                    })
                }
            };
            concepts.push(v);
        }
        for j in 0..f {
            let cell = &rec[1 + k + j];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: 2 + k + j,
                message: format!("feature cell '{cell}' is not a number"),
            })?;
            features.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let class_count = options
        .class_count
        .unwrap_or_else(|| labels.iter().copied().max().map_or(0, |m| m + 1));
    Dataset::new(features, feature_names, concepts, concept_names, labels, class_count)
}

/// Writes the dataset in the same layout [`read_csv`] accepts.
pub fn write_csv_to<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header = vec!["label".to_string()];
    header.extend(dataset.concept_names().iter().cloned());
    header.extend(dataset.feature_names().iter().cloned());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..dataset.n_samples() {
        row.clear();
        row.push(dataset.labels()[i].to_string());
        row.extend(dataset.concept_row(i).iter().map(|c| c.to_string()));
        row.extend(dataset.feature_row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_csv_to(dataset, &mut buf)?;
    crate::cli::write_atomic(path.as_ref(), &buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), &LoadOptions::default())
    }

    #[test]
    fn loads_three_rows_verbatim() {
        let ds = parse("label,a,b\n0,1,0\n1,0,1\n1,1,1\n").unwrap();
        assert_eq!(ds.n_samples(), 3);
        assert_eq!(ds.n_concepts(), 2);
        assert_eq!(ds.n_features(), 0);
        assert_eq!(ds.class_count(), 2);
        assert_eq!(ds.concepts(), &[1, 0, 0, 1, 1, 1]);
        assert_eq!(ds.labels(), &[0, 1, 1]);
    }

    #[test]
    fn non_binary_concept_names_row_and_column() {
        match parse("label,a,b\n0,1,0\n1,2,1\n") {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_column_count_is_a_parse_error() {
        assert!(matches!(parse("label,a,b\n0,1\n"), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn label_outside_declared_classes() {
        let r = read_csv("label,a\n0,1\n3,0\n".as_bytes(), &LoadOptions { class_count: Some(2) });
        assert!(matches!(r, Err(Error::Parse { row: 2, column: 1, .. })));
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(parse(""), Err(Error::EmptyDataset)));
        assert!(matches!(parse("label,a\n"), Err(Error::EmptyDataset)));
    }

    #[test]
    fn features_follow_concepts() {
        let ds = parse("label,a,f_1,f_2\n1,1,0.5,-2\n0,0,1e-3,4.25\n").unwrap();
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.feature_row(1), &[0.001, 4.25]);
        assert!(matches!(
            parse("label,f_1,a\n0,1,1\n"),
            Err(Error::Parse { row: 0, column: 3, .. })
        ));
    }

    #[test]
    fn round_trip_reproduces_canonical_file() {
        let text = "label,has_red_breast,has_blue_wing,f_1,f_2\n0,1,0,0.25,-1.5\n2,0,1,3,0.1\n1,1,1,-0.0001,7\n";
        let ds = parse(text).unwrap();
        let mut out = Vec::new();
        write_csv_to(&ds, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().trim_end(), text.trim_end());
    }
}

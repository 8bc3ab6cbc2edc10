//! CUB-200 style attribute annotations.
//!
//! The main file holds whitespace-separated `image_id attribute_id is_present
//! certainty [time]` records. Two sidecars are read from the same directory:
//! `image_class.txt` (or CUB's own `image_class_labels.txt`) with `image_id
//! class_id` pairs, and optionally `attributes.txt` with `attribute_id name`
//! pairs giving the concept vocabulary and its order.
//!
//! Certainty is ignored. Each (class, attribute) cell is set by strict
//! majority vote over that class's images (ties count as absent), and every
//! image inherits its class-level vector.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_id(cell: &str, row: usize, column: usize) -> Result<u64> {
    cell.parse().map_err(|_| Error::Parse {
        row,
        column,
        message: format!("'{cell}' is not a non-negative integer id"),
    })
}

pub fn load_cub(attribute_file: impl AsRef<Path>) -> Result<Dataset> {
    let attribute_file = attribute_file.as_ref();
    let dir = attribute_file.parent().unwrap_or_else(|| Path::new("."));

    let class_path = ["image_class.txt", "image_class_labels.txt"]
        .iter()
        .map(|n| dir.join(n))
        .find(|p| p.exists())
        .ok_or_else(|| {
            Error::spec(format!(
                "no image_class.txt sidecar next to {}",
                attribute_file.display()
            ))
        })?;
    let mut image_class: BTreeMap<u64, u64> = BTreeMap::new();
    for (i, line) in read(&class_path)?.lines().enumerate() {
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.is_empty() {
            continue;
        }
        if cells.len() != 2 {
            return Err(Error::Parse {
                row: i + 1,
                column: cells.len(),
                message: "expected 'image_id class_id'".into(),
            });
        }
        image_class.insert(parse_id(cells[0], i + 1, 1)?, parse_id(cells[1], i + 1, 2)?);
    }

    let mut present: HashMap<(u64, u64), (u32, u32)> = HashMap::new();
    let mut seen_attributes = BTreeSet::new();
    let mut any = false;
    for (i, line) in read(attribute_file)?.lines().enumerate() {
        let row = i + 1;
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.is_empty() {
            continue;
        }
        if cells.len() < 4 || cells.len() > 5 {
            return Err(Error::Parse {
                row,
                column: cells.len(),
                message: "expected 'image_id attribute_id is_present certainty [time]'".into(),
            });
        }
        let image = parse_id(cells[0], row, 1)?;
        let attribute = parse_id(cells[1], row, 2)?;
        let is_present = match cells[2] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    row,
                    column: 3,
                    message: format!("is_present '{other}' is not 0 or 1"),
                })
            }
        };
        let class = *image_class.get(&image).ok_or_else(|| Error::Parse {
            row,
            column: 1,
            message: format!("image {image} has no class in {}", class_path.display()),
        })?;
        let cell = present.entry((class, attribute)).or_default();
        cell.0 += is_present;
        cell.1 += 1;
        seen_attributes.insert(attribute);
        any = true;
    }
    if !any || image_class.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let names_path = dir.join("attributes.txt");
    let (attribute_ids, concept_names): (Vec<u64>, Vec<String>) = if names_path.exists() {
        let mut ids = Vec::new();
        let mut names = Vec::new();
        for (i, line) in read(&names_path)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (id, name) = line.split_once(char::is_whitespace).ok_or_else(|| Error::Parse {
                row: i + 1,
                column: 1,
                message: "expected 'attribute_id name'".into(),
            })?;
            ids.push(parse_id(id, i + 1, 1)?);
            names.push(name.trim().to_string());
        }
        (ids, names)
    } else {
        let ids: Vec<u64> = seen_attributes.iter().copied().collect();
        let names = ids.iter().map(|a| format!("attr_{a}")).collect();
        (ids, names)
    };

    let classes: BTreeSet<u64> = image_class.values().copied().collect();
    let dense: HashMap<u64, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let class_vectors: HashMap<u64, Vec<u8>> = classes
        .iter()
        .map(|&c| {
            let v = attribute_ids
                .iter()
                .map(|&a| match present.get(&(c, a)) {
                    Some(&(yes, total)) if 2 * yes > total => 1,
                    _ => 0,
                })
                .collect();
            (c, v)
        })
        .collect();

    let mut labels = Vec::with_capacity(image_class.len());
    let mut concepts = Vec::with_capacity(image_class.len() * attribute_ids.len());
    for class in image_class.values() {
        labels.push(dense[class]);
        concepts.extend_from_slice(&class_vectors[class]);
    }
    Dataset::new(Vec::new(), Vec::new(), concepts, concept_names, labels, classes.len())
}

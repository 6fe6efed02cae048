use std::path::Path;

use super::dataset::{Dataset, Split};
use super::netpbm;
use super::resize::bilinear_planes;
use crate::error::{Error, Result};

/// Reads `labels_csv` (`filename,label` rows, optional header) and decodes
/// every listed image from `dir`, resized to `target = (H, W)`.
///
/// Items are ordered by filename. Every failing row is reported, and the
/// load fails if any row fails. `class_names` fixes the label range; when
/// empty, classes are numbered `0..=max label`.
pub fn ingest(
    dir: &Path,
    labels_csv: &Path,
    target: (usize, usize),
    channels: usize,
    class_names: &[String],
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(labels_csv)
        .map_err(|e| Error::Dataset(format!("{}: {e}", labels_csv.display())))?;

    let mut rows: Vec<(String, usize, u64)> = Vec::new();
    let mut problems = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        if record.len() < 2 {
            problems.push(format!("line {line}: expected 'filename,label'"));
            continue;
        }
        let (file, label) = (&record[0], &record[1]);
        match label.parse::<usize>() {
            Ok(l) => rows.push((file.to_string(), l, line)),
            Err(_) if i == 0 => {} // header row
            Err(_) => problems.push(format!("line {line}: label '{label}' is not a non-negative integer")),
        }
    }
    if rows.is_empty() && problems.is_empty() {
        return Err(Error::Dataset(format!("empty dataset: {} lists no images", labels_csv.display())));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));

    let names: Vec<String> = if class_names.is_empty() {
        let max = rows.iter().map(|r| r.1).max().unwrap_or(0);
        (0..=max).map(|c| c.to_string()).collect()
    } else {
        class_names.to_vec()
    };
    let (h, w) = target;
    let mut ds = Dataset::new((channels, h, w), names, Split::Train);
    for (file, label, line) in rows {
        if label >= ds.num_classes() {
            problems.push(format!("line {line}: label {label} out of range for {} classes", ds.num_classes()));
            continue;
        }
        let img = match netpbm::decode_file(&dir.join(&file)) {
            Ok(img) => img,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let data = match (img.channels, channels) {
            (a, b) if a == b => img.data,
            (3, 1) => {
                let plane = img.width * img.height;
                (0..plane)
                    .map(|p| (img.data[p] + img.data[plane + p] + img.data[2 * plane + p]) / 3.0)
                    .collect()
            }
            (1, 3) => img.data.repeat(3),
            (a, b) => {
                problems.push(format!("line {line}: {a}-channel image, dataset wants {b}"));
                continue;
            }
        };
        let resized = bilinear_planes(&data, channels, img.height, img.width, h, w);
        ds.push(&resized, label, file)?;
    }
    if !problems.is_empty() {
        return Err(Error::Dataset(format!(
            "{} row(s) failed in {}:\n  {}",
            problems.len(),
            labels_csv.display(),
            problems.join("\n  ")
        )));
    }
    Ok(ds)
}

//! Datasets: netpbm decoding, resizing, labelled-directory ingestion and the
//! synthetic generator.

mod dataset;
mod ingest;
pub mod netpbm;
pub mod resize;
pub mod synth;

pub use dataset::{Dataset, Split};
pub use ingest::ingest;

use std::path::Path;

use crate::error::Result;

/// Writes every image as PGM/PPM under `dir` plus a `labels.csv`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut labels = csv::Writer::from_path(dir.join("labels.csv"))
        .map_err(|e| crate::Error::Dataset(e.to_string()))?;
    labels
        .write_record(["filename", "label"])
        .map_err(|e| crate::Error::Dataset(e.to_string()))?;
    for i in 0..ds.len() {
        let name = ds.names.get(i).filter(|n| !n.is_empty()).cloned().unwrap_or_else(|| format!("{i:06}.pgm"));
        let image = netpbm::Image {
            channels: ds.channels,
            height: ds.height,
            width: ds.width,
            data: ds.image(i).to_vec(),
        };
        std::fs::write(dir.join(&name), netpbm::encode(&image)?)?;
        labels
            .write_record([name.as_str(), &ds.labels[i].to_string()])
            .map_err(|e| crate::Error::Dataset(e.to_string()))?;
    }
    labels.flush()?;
    Ok(())
}

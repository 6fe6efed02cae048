use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Images of one common `[C, H, W]` shape with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Images back to back, each `[C, H, W]`, values in `[0, 1]`.
    pub pixels: Vec<f32>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    /// Source file of each image, when ingested from disk.
    pub names: Vec<String>,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        (channels, height, width): (usize, usize, usize),
        class_names: Vec<String>,
        split: Split,
    ) -> Self {
        Dataset {
            channels,
            height,
            width,
            pixels: Vec::new(),
            labels: Vec::new(),
            class_names,
            names: Vec::new(),
            split,
        }
    }

    pub fn push(&mut self, image: &[f32], label: usize, name: String) -> Result<()> {
        if image.len() != self.image_len() {
            return Err(Error::dim(format!(
                "image has {} values, dataset expects {}",
                image.len(),
                self.image_len()
            )));
        }
        if label >= self.num_classes() {
            return Err(Error::Dataset(format!(
                "label {label} out of range for {} classes",
                self.num_classes()
            )));
        }
        self.pixels.extend_from_slice(image);
        self.labels.push(label);
        self.names.push(name);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn image_shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Stacks the given items into `[N, C, H, W]`.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let t = Tensor::from_vec([indices.len(), self.channels, self.height, self.width], data)
            .expect("batch of dataset images");
        (t, indices.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn subset(&self, indices: &[usize], split: Split) -> Dataset {
        let mut out = Dataset::new(self.image_shape(), self.class_names.clone(), split);
        for &i in indices {
            out.pixels.extend_from_slice(self.image(i));
            out.labels.push(self.labels[i]);
            out.names.push(self.names.get(i).cloned().unwrap_or_default());
        }
        out
    }

    /// Seeded shuffle, then the first `train_fraction` goes to training and
    /// the rest to validation.
    pub fn split_train_val(&self, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut seeded(seed));
        let cut = ((self.len() as f64) * train_fraction).round() as usize;
        let (train, val) = order.split_at(cut.min(self.len()));
        (self.subset(train, Split::Train), self.subset(val, Split::Val))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::FeatureMatrix;
use crate::raster::{decode_pnm, encode_pnm, PnmDepth, Raster};
use crate::{Error, Result};

/// Annotation state of one pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Background,
    Crack,
    Unlabeled,
}

impl Label {
    /// Gray level used in the 8-bit PGM encoding.
    pub fn gray(self) -> u8 {
        match self {
            Label::Background => 0,
            Label::Crack => 255,
            Label::Unlabeled => 128,
        }
    }

    pub fn from_gray(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Background),
            255 => Some(Label::Crack),
            128 => Some(Label::Unlabeled),
            _ => None,
        }
    }
}

/// Partial per-pixel annotation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<Label>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<Label>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::Contract(format!(
                "{} labels for a {width}x{height} mask",
                labels.len()
            )));
        }
        Ok(Self { width, height, labels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> Label {
        self.labels[y * self.width + x]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let r = Raster::from_parts(
            self.width,
            self.height,
            1,
            self.labels.iter().map(|l| f64::from(l.gray()) / 255.0).collect(),
        );
        encode_pnm(&r, PnmDepth::Eight).expect("gray raster encodes")
    }

    /// Parses an 8-bit PGM whose levels are 0, 128 or 255.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let r = decode_pnm::<f64>(bytes)?;
        if r.channels() != 1 {
            return Err(Error::Contract("label mask must be a gray PGM".into()));
        }
        let labels = r
            .samples()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let g = (v * 255.0).round();
                Label::from_gray(g as u8)
                    .filter(|_| (v * 255.0 - g).abs() < 1e-6)
                    .ok_or_else(|| {
                        Error::Contract(format!(
                            "label mask pixel {i} has level {}, expected 0, 128 or 255",
                            v * 255.0
                        ))
                    })
            })
            .collect::<Result<_>>()?;
        Self::new(r.width(), r.height(), labels)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_pgm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

/// Labeled rows of a feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub x: FeatureMatrix,
    /// 1 for crack, 0 for background.
    pub y: Vec<u8>,
    /// Source pixel index (row-major) of every row.
    pub pixels: Vec<usize>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Keeps at most `per_class` random rows of each class, in pixel order.
    pub fn subsample(&self, per_class: usize, seed: u64) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = Vec::new();
        for class in [0u8, 1] {
            let mut rows: Vec<usize> = (0..self.len()).filter(|&i| self.y[i] == class).collect();
            rows.shuffle(&mut rng);
            rows.truncate(per_class);
            keep.extend(rows);
        }
        keep.sort_unstable();
        TrainingSet {
            x: self.x.select_rows(&keep),
            y: keep.iter().map(|&i| self.y[i]).collect(),
            pixels: keep.iter().map(|&i| self.pixels[i]).collect(),
        }
    }
}

/// Restricts a per-pixel matrix to the labeled pixels, in row-major order.
pub fn assemble_training(matrix: &FeatureMatrix, labels: &LabelMask) -> Result<TrainingSet> {
    if matrix.n() != labels.labels.len() {
        return Err(Error::Contract(format!(
            "matrix has {} rows, mask has {} pixels",
            matrix.n(),
            labels.labels.len()
        )));
    }
    for (label, name) in [(Label::Crack, "crack"), (Label::Background, "background")] {
        if labels.count(label) == 0 {
            return Err(Error::Contract(format!("no labeled {name} pixels")));
        }
    }
    let pixels: Vec<usize> = (0..matrix.n())
        .filter(|&i| labels.labels[i] != Label::Unlabeled)
        .collect();
    Ok(TrainingSet {
        x: matrix.select_rows(&pixels),
        y: pixels.iter().map(|&i| u8::from(labels.labels[i] == Label::Crack)).collect(),
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    fn matrix(n: usize) -> FeatureMatrix {
        FeatureMatrix::new(n, vec![5], (0..n).map(|i| 1 + (i % 5) as u16).collect()).unwrap()
    }

    #[test]
    fn counts_labeled_rows() {
        let mask = LabelMask::new(4, 2, vec![Crack, Unlabeled, Background, Crack, Unlabeled, Crack, Background, Unlabeled]).unwrap();
        let t = assemble_training(&matrix(8), &mask).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t.y.iter().map(|&v| v as usize).sum::<usize>(), 3);
        assert_eq!(t.pixels, vec![0, 2, 3, 5, 6]);
        assert_eq!(t.x.column(0).collect::<Vec<_>>(), vec![1, 3, 4, 1, 2]);
    }

    #[test]
    fn missing_class_is_named() {
        let mask = LabelMask::new(2, 1, vec![Unlabeled; 2]).unwrap();
        assert!(assemble_training(&matrix(2), &mask).is_err());
        let mask = LabelMask::new(2, 1, vec![Background, Unlabeled]).unwrap();
        let err = assemble_training(&matrix(2), &mask).unwrap_err().to_string();
        assert!(err.contains("crack"), "{err}");
        assert!(assemble_training(&matrix(3), &mask).is_err());
    }

    #[test]
    fn pgm_round_trip_and_bad_levels() {
        let mask = LabelMask::new(3, 1, vec![Crack, Unlabeled, Background]).unwrap();
        let bytes = mask.to_pgm();
        assert_eq!(&bytes[bytes.len() - 3..], &[255, 128, 0]);
        assert_eq!(LabelMask::from_pgm(&bytes).unwrap(), mask);
        let mut bad = bytes.clone();
        let at = bad.len() - 1;
        bad[at] = 7;
        assert!(matches!(LabelMask::from_pgm(&bad), Err(Error::Contract(_))));
    }

    #[test]
    fn subsample_is_balanced_and_ordered() {
        let labels: Vec<Label> = (0..100).map(|i| if i % 10 == 0 { Crack } else { Background }).collect();
        let mask = LabelMask::new(10, 10, labels).unwrap();
        let t = assemble_training(&matrix(100), &mask).unwrap();
        let s = t.subsample(5, 1);
        assert_eq!(s.len(), 10);
        assert_eq!(s.y.iter().filter(|&&v| v == 1).count(), 5);
        assert!(s.pixels.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, t.subsample(5, 1));
        assert_eq!(t.subsample(1000, 2), t);
    }
}

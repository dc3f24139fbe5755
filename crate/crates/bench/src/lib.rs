//! Benchmark fixtures shared by the criterion targets.

use dualcascade::phantom::{generate_dataset, undersample_dataset, DatasetConfig};
use dualcascade::{MaskPattern, UndersampledSample};

/// One default-sized phantom case undersampled at R=4.
pub fn default_sample(size: usize, coils: usize) -> UndersampledSample {
    let cfg = DatasetConfig { cases: 1, height: size, width: size, coils, ..Default::default() };
    let data = generate_dataset(&cfg).expect("phantom");
    undersample_dataset(&data, 4.0, 0.08, MaskPattern::RandomLines, 17)
        .expect("mask")
        .remove(0)
}

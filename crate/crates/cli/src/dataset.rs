//! On-disk phantom datasets: one directory of DDT1 files plus `manifest.txt`.
//!
//! The manifest is `key=value` lines. Generation settings come first
//! (sorted), then one `case=` line per case naming its three files.

use std::fs;
use std::path::Path;

use dualcascade::phantom::{GroundTruth, SensitivitySet};
use dualcascade::storage::{read_image, write_atomic, write_image};
use dualcascade::{Error, Result};

pub const MANIFEST: &str = "manifest.txt";

pub fn case_files(index: usize) -> [String; 3] {
    [
        format!("case_{index:04}_kfull.ddt"),
        format!("case_{index:04}_imgfull.ddt"),
        format!("case_{index:04}_sens.ddt"),
    ]
}

/// Write every case, then the manifest last so a crashed run never leaves a
/// manifest pointing at missing files.
pub fn write_dataset(dir: &Path, settings: &[(&str, String)], cases: &[GroundTruth]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    let mut sorted = settings.to_vec();
    sorted.sort();
    for (k, v) in &sorted {
        manifest.push_str(&format!("{k}={v}\n"));
    }
    for (i, gt) in cases.iter().enumerate() {
        let [k, img, sens] = case_files(i);
        write_image(dir.join(&k), &gt.k_full)?;
        write_image(dir.join(&img), &gt.image_full)?;
        write_image(dir.join(&sens), gt.sensitivities.maps())?;
        manifest.push_str(&format!("case={i} kfull={k} imgfull={img} sens={sens}\n"));
    }
    write_atomic(&dir.join(MANIFEST), manifest.as_bytes())
}

pub fn read_dataset(dir: &Path) -> Result<Vec<GroundTruth>> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let mut cases = Vec::new();
    for line in text.lines().filter(|l| l.starts_with("case=")) {
        let field = |key: &str| {
            line.split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| Error::Format(format!("manifest line lacks {key}: {line}")))
        };
        let k_full = read_image(dir.join(field("kfull")?))?;
        let image_full = read_image(dir.join(field("imgfull")?))?;
        let maps = read_image(dir.join(field("sens")?))?;
        if k_full.dims() != image_full.dims() || k_full.dims() != maps.dims() {
            return Err(Error::Format(format!("case files disagree in shape: {line}")));
        }
        cases.push(GroundTruth {
            image_full,
            k_full,
            sensitivities: SensitivitySet::from_maps(maps),
        });
    }
    if cases.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(cases)
}

//! File writers: point CSVs, binary PGM images, and generation manifests.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::SampleSet;

/// Writes one row per sample. 2D sets get an `x,y` header, others `x0,x1,…`.
pub fn write_points_csv(set: &SampleSet, mut w: impl Write) -> std::io::Result<()> {
    if set.dim() == 2 {
        writeln!(w, "x,y")?;
    } else {
        let header: Vec<String> = (0..set.dim()).map(|i| format!("x{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
    }
    for row in set.data().rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn save_points_csv(set: &SampleSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_points_csv(set, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Maps `[-1, 1]` to `0..=255`.
pub fn to_gray(v: f64) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 0.5) * 255.0).round() as u8
}

/// Binary (P5) PGM of a `width × height` image with values in `[-1, 1]`.
pub fn pgm_bytes(values: &[f64], width: usize, height: usize) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::dim("pgm pixels", width * height, values.len()));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| to_gray(v)));
    Ok(out)
}

/// Writes each sample of an image set as `{prefix}{index:05}.pgm`; returns the file names.
pub fn save_pgm_dir(set: &SampleSet, dir: impl AsRef<Path>, prefix: &str) -> Result<Vec<String>> {
    let shape = set.sample_shape();
    let (h, w) = match shape {
        [h, w] => (*h, *w),
        [n] => (1, *n),
        other => return Err(Error::InvalidArgument(format!("cannot write shape {other:?} as PGM"))),
    };
    fs::create_dir_all(&dir)?;
    let mut names = Vec::with_capacity(set.len());
    for (i, row) in set.data().rows().into_iter().enumerate() {
        let name = format!("{prefix}{i:05}.pgm");
        let values: Vec<f64> = row.to_vec();
        fs::write(dir.as_ref().join(&name), pgm_bytes(&values, w, h)?)?;
        names.push(name);
    }
    Ok(names)
}

/// Index of a batch of generated artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub settings: Vec<(String, String)>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_has_xy_header() {
        let set = SampleSet::from_rows(array![[1.0, 2.5], [-0.5, 0.0]]).unwrap();
        let mut buf = Vec::new();
        write_points_csv(&set, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,y\n1,2.5\n-0.5,0\n");
    }

    #[test]
    fn pgm_layout() {
        let bytes = pgm_bytes(&[-1.0, 0.0, 1.0, 2.0], 2, 2).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 128, 255, 255]);
        assert!(pgm_bytes(&[0.0], 2, 2).is_err());
    }
}

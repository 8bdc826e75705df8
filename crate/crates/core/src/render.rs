//! Classification map rendering as binary PPM (P6).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hsidata::LabelField;

pub type Rgb = [u8; 3];

/// Black background followed by `num_classes` distinct colors.
pub fn default_palette(num_classes: usize) -> Vec<Rgb> {
    const BASE: [Rgb; 16] = [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
        [210, 245, 60],
        [250, 190, 212],
        [0, 128, 128],
        [220, 190, 255],
        [170, 110, 40],
        [255, 250, 200],
        [128, 0, 0],
        [170, 255, 195],
    ];
    let mut palette = vec![[0, 0, 0]];
    for k in 0..num_classes {
        if let Some(&color) = BASE.get(k) {
            palette.push(color);
        } else {
            // spread extra classes over a hashed color, skipping black
            let h = (k as u32).wrapping_mul(2_654_435_761);
            palette.push([(h >> 24) as u8 | 1, (h >> 16) as u8, (h >> 8) as u8]);
        }
    }
    palette
}

/// Encodes `labels` as P6 with `palette[label]` per pixel.
pub fn encode_ppm(labels: &LabelField, palette: &[Rgb], w: &mut impl Write) -> Result<()> {
    if palette.len() < labels.num_classes() + 1 {
        return Err(Error::InvalidParameter(format!(
            "palette has {} colors, need {}",
            palette.len(),
            labels.num_classes() + 1
        )));
    }
    write!(w, "P6\n{} {}\n255\n", labels.width(), labels.height())?;
    let payload: Vec<u8> = labels.labels().iter().flat_map(|&l| palette[l as usize]).collect();
    w.write_all(&payload)?;
    Ok(())
}

pub fn render_map(labels: &LabelField, palette: &[Rgb], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_ppm(labels, palette, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_pixel() {
        let labels = LabelField::new(1, 1, 2, vec![0]).unwrap();
        let mut out = Vec::new();
        encode_ppm(&labels, &default_palette(2), &mut out).unwrap();
        assert_eq!(out, b"P6\n1 1\n255\n\0\0\0");
    }

    #[test]
    fn two_classes_in_order() {
        let labels = LabelField::new(1, 2, 2, vec![1, 2]).unwrap();
        let pal = vec![[0, 0, 0], [1, 2, 3], [4, 5, 6]];
        let mut out = Vec::new();
        encode_ppm(&labels, &pal, &mut out).unwrap();
        let header = b"P6\n2 1\n255\n".len();
        assert_eq!(&out[header..], &[1, 2, 3, 4, 5, 6]);
        assert!(encode_ppm(&labels, &pal[..2], &mut Vec::new()).is_err());
    }

    #[test]
    fn default_palette_is_injective() {
        let p = default_palette(40);
        let set: std::collections::HashSet<_> = p.iter().collect();
        assert_eq!(set.len(), 41);
    }
}

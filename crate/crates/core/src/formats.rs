//! On-disk formats.
//!
//! All binary formats are little-endian:
//!
//! * `HSC1` cube: magic `HSC1`, `u32` height, `u32` width, `u32` bands, then
//!   `height * width * bands` `f32` values, pixel-major with bands contiguous.
//! * `HSG1` labels: magic `HSG1`, `u32` height, `u32` width, `u32`
//!   num_classes, then `height * width` `u16` labels (0 = background).
//!
//! The CSV import/export used by `convert` is one row per pixel:
//! `row,col,band_1,...,band_d` for cubes and `row,col,label` for label maps,
//! each with a header line. Every pixel of the grid must appear exactly once.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hsidata::{HsiCube, LabelField};
use crate::metrics::{Aggregate, RunReport};

pub const CUBE_MAGIC: &[u8; 4] = b"HSC1";
pub const LABEL_MAGIC: &[u8; 4] = b"HSG1";

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<[usize; 3]> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok([read_u32(r)? as usize, read_u32(r)? as usize, read_u32(r)? as usize])
}

fn dim_u32(v: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

fn ensure_eof(r: &mut impl Read) -> Result<()> {
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after payload".into())),
    }
}

pub fn encode_cube(cube: &HsiCube, w: &mut impl Write) -> Result<()> {
    w.write_all(CUBE_MAGIC)?;
    w.write_all(&dim_u32(cube.height(), "height")?)?;
    w.write_all(&dim_u32(cube.width(), "width")?)?;
    w.write_all(&dim_u32(cube.bands(), "bands")?)?;
    for &v in cube.values() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn decode_cube(r: &mut impl Read) -> Result<HsiCube> {
    let [h, w, d] = read_header(r, CUBE_MAGIC)?;
    let n = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(d))
        .ok_or_else(|| Error::Format("cube size overflows".into()))?;
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated cube payload: {e}")))?;
    ensure_eof(r)?;
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    HsiCube::new(h, w, d, values)
}

pub fn encode_labels(labels: &LabelField, w: &mut impl Write) -> Result<()> {
    w.write_all(LABEL_MAGIC)?;
    w.write_all(&dim_u32(labels.height(), "height")?)?;
    w.write_all(&dim_u32(labels.width(), "width")?)?;
    w.write_all(&dim_u32(labels.num_classes(), "num_classes")?)?;
    for &l in labels.labels() {
        w.write_all(&l.to_le_bytes())?;
    }
    Ok(())
}

pub fn decode_labels(r: &mut impl Read) -> Result<LabelField> {
    let [h, w, m] = read_header(r, LABEL_MAGIC)?;
    let n = h
        .checked_mul(w)
        .ok_or_else(|| Error::Format("label map size overflows".into()))?;
    let mut bytes = vec![0u8; n * 2];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated label payload: {e}")))?;
    ensure_eof(r)?;
    let labels = bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
    LabelField::new(h, w, m, labels)
}

pub fn write_cube(cube: &HsiCube, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_cube(cube, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_cube(path: &Path) -> Result<HsiCube> {
    decode_cube(&mut BufReader::new(File::open(path)?))
}

pub fn write_labels(labels: &LabelField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_labels(labels, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<LabelField> {
    decode_labels(&mut BufReader::new(File::open(path)?))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("line {line}: bad or missing field {}", i + 1)))
}

/// Height, width, fields per pixel and the `(flat index, fields)` records.
type PixelRecords = (usize, usize, usize, Vec<(usize, Vec<String>)>);

/// Parses `row,col,<values...>` records into a dense raster.
fn read_pixel_csv(r: impl Read, width_per_pixel: Option<usize>) -> Result<PixelRecords> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let mut rows = Vec::new();
    let (mut h, mut w) = (0, 0);
    let mut per_pixel = width_per_pixel;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = k + 2;
        let row: usize = parse_field(&rec, 0, line)?;
        let col: usize = parse_field(&rec, 1, line)?;
        let vals: Vec<String> = rec.iter().skip(2).map(str::to_string).collect();
        match per_pixel {
            None => per_pixel = Some(vals.len()),
            Some(n) if n != vals.len() => {
                return Err(Error::Format(format!("line {line}: expected {n} values, got {}", vals.len())))
            }
            _ => {}
        }
        h = h.max(row + 1);
        w = w.max(col + 1);
        rows.push(((row, col), vals));
    }
    let per_pixel = per_pixel.unwrap_or(0);
    if rows.is_empty() || per_pixel == 0 {
        return Err(Error::Format("CSV holds no pixel values".into()));
    }
    if rows.len() != h * w {
        return Err(Error::Format(format!(
            "CSV covers {} pixels but spans a {h}x{w} grid",
            rows.len()
        )));
    }
    let mut seen = vec![false; h * w];
    let mut flat = Vec::with_capacity(rows.len());
    for ((row, col), vals) in rows {
        let p = row * w + col;
        if std::mem::replace(&mut seen[p], true) {
            return Err(Error::Format(format!("pixel ({row}, {col}) listed twice")));
        }
        flat.push((p, vals));
    }
    flat.sort_by_key(|(p, _)| *p);
    Ok((h, w, per_pixel, flat))
}

pub fn cube_from_csv(r: impl Read) -> Result<HsiCube> {
    let (h, w, d, rows) = read_pixel_csv(r, None)?;
    let mut values = Vec::with_capacity(h * w * d);
    for (p, vals) in rows {
        for v in vals {
            values.push(
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("pixel {p}: bad value '{v}'")))?,
            );
        }
    }
    HsiCube::new(h, w, d, values)
}

/// `num_classes` defaults to the largest label present.
pub fn labels_from_csv(r: impl Read, num_classes: Option<usize>) -> Result<LabelField> {
    let (h, w, _, rows) = read_pixel_csv(r, Some(1))?;
    let labels: Vec<u16> = rows
        .iter()
        .map(|(p, vals)| {
            vals[0]
                .trim()
                .parse::<u16>()
                .map_err(|_| Error::Format(format!("pixel {p}: bad label '{}'", vals[0])))
        })
        .collect::<Result<_>>()?;
    let m = num_classes.unwrap_or_else(|| labels.iter().copied().max().unwrap_or(0) as usize);
    LabelField::new(h, w, m, labels)
}

pub fn cube_to_csv(cube: &HsiCube, w: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["row".to_string(), "col".to_string()];
    header.extend((1..=cube.bands()).map(|b| format!("band_{b}")));
    wtr.write_record(&header).map_err(csv_err)?;
    for r in 0..cube.height() {
        for c in 0..cube.width() {
            let mut rec = vec![r.to_string(), c.to_string()];
            rec.extend(cube.pixel(r, c).iter().map(|v| v.to_string()));
            wtr.write_record(&rec).map_err(csv_err)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn labels_to_csv(labels: &LabelField, w: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["row", "col", "label"]).map_err(csv_err)?;
    for r in 0..labels.height() {
        for c in 0..labels.width() {
            wtr.write_record([r.to_string(), c.to_string(), labels.get(r, c).to_string()])
                .map_err(csv_err)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn fmt_metric(v: f64) -> String {
    format!("{v:.6}")
}

/// Writes per-run reports as `run,stage,oa,aa,kappa,class_1..class_M,seconds`.
///
/// Classes with no evaluated pixels get an empty cell. `seconds` is left
/// empty unless `with_timings` is set, so that reports of identical runs are
/// byte-identical.
pub fn write_report_csv(reports: &[RunReport], num_classes: usize, with_timings: bool, w: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["run", "stage", "oa", "aa", "kappa"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=num_classes).map(|k| format!("class_{k}")));
    header.push("seconds".into());
    wtr.write_record(&header).map_err(csv_err)?;
    for r in reports {
        let mut rec = vec![r.run.to_string(), r.stage.clone(), fmt_metric(r.oa), fmt_metric(r.aa), fmt_metric(r.kappa)];
        rec.extend((0..num_classes).map(|k| r.per_class.get(k).copied().flatten().map(fmt_metric).unwrap_or_default()));
        rec.push(if with_timings { format!("{:.6}", r.seconds) } else { String::new() });
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// One row per `(key, stage)` aggregate: means and sample standard deviations.
pub fn write_summary_csv(key_name: &str, rows: &[(String, String, Aggregate)], w: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([key_name, "stage", "runs", "oa_mean", "oa_std", "aa_mean", "aa_std", "kappa_mean", "kappa_std"])
        .map_err(csv_err)?;
    for (key, stage, a) in rows {
        wtr.write_record([
            key.clone(),
            stage.clone(),
            a.runs.to_string(),
            fmt_metric(a.oa.mean),
            fmt_metric(a.oa.std),
            fmt_metric(a.aa.mean),
            fmt_metric(a.aa.std),
            fmt_metric(a.kappa.mean),
            fmt_metric(a.kappa.std),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

//! File formats: PNG/PGM images, raw float grids, link sidecars, JSON sidecars, manifests
//! and JSON-lines response logs. Every JSON document carries `schema_version`.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::depth::{DepthField, DepthProvenance};
use crate::error::{Error, Result};
use crate::experiment::{SessionManifest, TrialRecord, SCHEMA_VERSION};
use crate::matching::{BasinSlice, MatchSurface};
use crate::num::Real;
use crate::render::{quantize, LinkPair, Links, Stimulus, StimulusProvenance};
use crate::spectral::{NoisePatch, SpectrumSpec};

const LINKS_MAGIC: &[u8; 4] = b"SLNK";
const LINKS_VERSION: u32 = 1;

/// Writes through a sibling temp file and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_os_string();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Deterministic PNG encoding (fixed compression and filter settings).
pub fn encode_png(
    width: usize,
    height: usize,
    bytes: &[u8],
    color: ExtendedColorType,
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive)
        .write_image(bytes, width as u32, height as u32, color)?;
    Ok(out)
}

pub fn gray8_png(grid: &Array2<u8>) -> Result<Vec<u8>> {
    let (h, w) = grid.dim();
    let bytes: Vec<u8> = grid.iter().copied().collect();
    encode_png(w, h, &bytes, ExtendedColorType::L8)
}

pub fn write_gray8_png(path: &Path, grid: &Array2<u8>) -> Result<()> {
    write_atomic(path, &gray8_png(grid)?)
}

pub fn read_gray8_png(path: &Path) -> Result<Array2<u8>> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Ok(
        Array2::from_shape_vec((h as usize, w as usize), img.into_raw())
            .expect("luma buffer shape"),
    )
}

pub fn write_gray16_png(path: &Path, grid: &Array2<u16>) -> Result<()> {
    let (h, w) = grid.dim();
    // the encoder takes native-endian samples
    let bytes: Vec<u8> = grid.iter().flat_map(|v| v.to_ne_bytes()).collect();
    write_atomic(path, &encode_png(w, h, &bytes, ExtendedColorType::L16)?)
}

pub fn read_gray16_png(path: &Path) -> Result<Array2<u16>> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = img.dimensions();
    Ok(
        Array2::from_shape_vec((h as usize, w as usize), img.into_raw())
            .expect("luma buffer shape"),
    )
}

/// Binary PGM (P5) of an 8-bit grid.
pub fn write_pgm(path: &Path, grid: &Array2<u8>) -> Result<()> {
    let (h, w) = grid.dim();
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(grid.iter());
    write_atomic(path, &bytes)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn check_version(found: u32, what: &str) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::data(format!(
            "{what} schema version {found} (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSidecar {
    pub schema_version: u32,
    pub spec: SpectrumSpec,
    pub width: usize,
    pub height: usize,
    /// Layout of the `.f64` file: row-major little-endian IEEE-754 doubles.
    pub dtype: String,
}

/// Writes `<stem>.png`, `<stem>.pgm`, `<stem>.f64` and `<stem>.json`.
pub fn write_patch<T: Real>(stem: &Path, patch: &NoisePatch<T>) -> Result<()> {
    let gray = quantize(&patch.values);
    write_gray8_png(&with_ext(stem, "png"), &gray)?;
    write_pgm(&with_ext(stem, "pgm"), &gray)?;
    let raw: Vec<u8> = patch
        .values
        .iter()
        .flat_map(|v| v.as_f64().to_le_bytes())
        .collect();
    write_atomic(&with_ext(stem, "f64"), &raw)?;
    let (h, w) = patch.values.dim();
    let sidecar = PatchSidecar {
        schema_version: SCHEMA_VERSION,
        spec: patch.spec,
        width: w,
        height: h,
        dtype: "f64le".into(),
    };
    write_json(&with_ext(stem, "json"), &sidecar)
}

pub fn read_patch(stem: &Path) -> Result<NoisePatch<f64>> {
    let sidecar: PatchSidecar = read_json(&with_ext(stem, "json"))?;
    check_version(sidecar.schema_version, "patch")?;
    let raw = fs::read(with_ext(stem, "f64"))?;
    if raw.len() != sidecar.width * sidecar.height * 8 {
        return Err(Error::data("raw patch size does not match its sidecar"));
    }
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let values =
        Array2::from_shape_vec((sidecar.height, sidecar.width), values).expect("checked length");
    Ok(NoisePatch {
        values,
        spec: sidecar.spec,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSidecar {
    pub schema_version: u32,
    pub provenance: DepthProvenance,
    /// Seed of the stimulus the map was drawn for, when there is one.
    pub seed: Option<u64>,
}

/// Writes `<stem>.png` (16-bit, `round(65535 * phi)`) and `<stem>.json`.
pub fn write_depth<T: Real>(stem: &Path, depth: &DepthField<T>, seed: Option<u64>) -> Result<()> {
    let levels = depth
        .values
        .mapv(|v| (v.as_f64().clamp(0.0, 1.0) * 65535.0).round() as u16);
    write_gray16_png(&with_ext(stem, "png"), &levels)?;
    write_json(
        &with_ext(stem, "json"),
        &DepthSidecar {
            schema_version: SCHEMA_VERSION,
            provenance: depth.provenance,
            seed,
        },
    )
}

pub fn read_depth(stem: &Path) -> Result<DepthField<f64>> {
    let sidecar: DepthSidecar = read_json(&with_ext(stem, "json"))?;
    check_version(sidecar.schema_version, "depth")?;
    let levels = read_gray16_png(&with_ext(stem, "png"))?;
    DepthField::from_values(levels.mapv(|v| v as f64 / 65535.0), sidecar.provenance)
}

/// Links sidecar: `"SLNK"`, then little-endian u32 version, width, height; then per row a
/// u32 pair count followed by `(x_left, x_right)` u32 pairs.
pub fn encode_links(links: &Links, width: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + links.rows.len() * 4 + links.len() * 8);
    out.extend_from_slice(LINKS_MAGIC);
    for v in [LINKS_VERSION, width as u32, links.rows.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for row in &links.rows {
        out.extend_from_slice(&(row.len() as u32).to_le_bytes());
        for &(l, r) in row {
            out.extend_from_slice(&l.to_le_bytes());
            out.extend_from_slice(&r.to_le_bytes());
        }
    }
    out
}

/// Decodes a links sidecar, returning the links and the recorded image width.
pub fn decode_links(bytes: &[u8]) -> Result<(Links, usize)> {
    let mut words = Cursor { bytes, pos: 4 };
    if bytes.get(..4) != Some(LINKS_MAGIC.as_slice()) {
        return Err(Error::data("not a links sidecar"));
    }
    let version = words.next()?;
    if version != LINKS_VERSION {
        return Err(Error::data(format!("links version {version} unsupported")));
    }
    let width = words.next()? as usize;
    let height = words.next()? as usize;
    let mut rows = Vec::with_capacity(height);
    for _ in 0..height {
        let count = words.next()? as usize;
        let mut row: Vec<LinkPair> = Vec::with_capacity(count);
        for _ in 0..count {
            let l = words.next()?;
            let r = words.next()?;
            if l as usize >= width || r as usize >= width {
                return Err(Error::data("link outside the image"));
            }
            row.push((l, r));
        }
        rows.push(row);
    }
    if words.pos != bytes.len() {
        return Err(Error::data("trailing bytes in links sidecar"));
    }
    Ok((Links { rows }, width))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn next(&mut self) -> Result<u32> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| Error::data("truncated links sidecar"))?;
        self.pos += 4;
        Ok(u32::from_le_bytes(chunk.try_into().expect("4 bytes")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusSidecar {
    pub schema_version: u32,
    pub provenance: StimulusProvenance,
    pub width: usize,
    pub height: usize,
    pub link_count: usize,
}

/// Writes `<stem>.png`, `<stem>.json` and, when asked, `<stem>.links`.
pub fn write_stimulus(stem: &Path, stim: &Stimulus, with_links: bool) -> Result<()> {
    write_gray8_png(&with_ext(stem, "png"), &stim.image)?;
    if with_links {
        write_atomic(
            &with_ext(stem, "links"),
            &encode_links(&stim.links, stim.width()),
        )?;
    }
    let sidecar = StimulusSidecar {
        schema_version: SCHEMA_VERSION,
        provenance: stim.provenance.clone(),
        width: stim.width(),
        height: stim.height(),
        link_count: stim.links.len(),
    };
    write_json(&with_ext(stem, "json"), &sidecar)
}

/// Loads a stimulus from its PNG plus sidecars; a missing sidecar is a data error.
pub fn read_stimulus(stem: &Path) -> Result<Stimulus> {
    let need = |ext: &str| -> Result<PathBuf> {
        let p = with_ext(stem, ext);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::data(format!("missing sidecar {}", p.display())))
        }
    };
    let sidecar: StimulusSidecar = read_json(&need("json")?)?;
    check_version(sidecar.schema_version, "stimulus")?;
    let (links, width) = decode_links(&fs::read(need("links")?)?)?;
    let image = read_gray8_png(&with_ext(stem, "png"))?;
    if image.dim() != (sidecar.height, sidecar.width)
        || width != sidecar.width
        || links.rows.len() != sidecar.height
    {
        return Err(Error::data(format!(
            "{} does not match its sidecars",
            stem.display()
        )));
    }
    Ok(Stimulus {
        image,
        links,
        geometry: sidecar.provenance.geometry,
        provenance: sidecar.provenance,
    })
}

/// Surface PNG with `Lambda` affinely mapped onto 0..=255.
pub fn write_match_surface<T: Real>(path: &Path, surface: &MatchSurface<T>) -> Result<()> {
    write_gray8_png(path, &quantize(&surface.grid))
}

pub fn write_basin_csv<T: Real>(path: &Path, slice: &BasinSlice<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["displacement", "value"])?;
    for (d, v) in slice.displacements.iter().zip(&slice.values) {
        w.write_record([d.to_string(), format!("{}", v.as_f64())])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn write_manifest(path: &Path, manifest: &SessionManifest) -> Result<()> {
    write_json(path, manifest)
}

pub fn read_manifest(path: &Path) -> Result<SessionManifest> {
    let m: SessionManifest = read_json(path)?;
    m.check_schema()?;
    Ok(m)
}

/// Appends one record as a JSON line and flushes it to disk.
pub fn append_record(path: &Path, record: &TrialRecord) -> Result<()> {
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&line)?;
    f.sync_data()?;
    Ok(())
}

/// Reads a JSON-lines response log; blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrialRecord = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        check_version(rec.schema_version, "record")?;
        out.push(rec);
    }
    Ok(out)
}

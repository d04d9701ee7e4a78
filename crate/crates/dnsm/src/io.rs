//! File formats: shape images in, model/report/label files out.
//!
//! Shapes are read from PGM (ascii or binary) or grayscale PNG; pixels at
//! or above a threshold are foreground. Models are stored as a small text
//! format that round-trips every parameter bit-exactly through shortest
//! round-trip decimal encoding. Reports are JSON. Label maps are written
//! as indexed-color PNGs with a fixed palette plus a plain-text sidecar.
//!
//! All writes go through a temporary file and a rename, so readers never
//! observe a half-written file.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::convexity::RegionStats;
use crate::error::{Error, Result};
use crate::model::{Discriminant, DnsmModel, ModelConfig, Polytope};
use crate::optimizer::FitTrace;
use crate::pipeline::{Diagnostics, LabelMap};
use crate::raster::ShapeRaster;

/// Default grayscale cutoff: pixels at or above it are foreground.
pub const DEFAULT_THRESHOLD: u8 = 128;

/// Number of palette entries in label PNGs (entry 0 is black background).
pub const PALETTE_SIZE: usize = 32;

const MODEL_MAGIC: &str = "DNSM";
const MODEL_VERSION: u32 = 1;

/// Reads a binary shape from a PGM (P2/P5) or grayscale PNG file.
///
/// Color inputs are converted to luma first. Errors when the file cannot
/// be decoded or when no pixel reaches the threshold.
pub fn read_shape(path: &Path, threshold: u8) -> Result<ShapeRaster> {
    let img = image::open(path).map_err(|source| Error::ImageDecode {
        path: path.to_path_buf(),
        source,
    })?;
    let gray = img.into_luma8();
    let (width, height) = gray.dimensions();
    ShapeRaster::from_fn(width, height, |row, col| gray.get_pixel(col, row)[0] >= threshold)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp: PathBuf = path.to_path_buf();
    let mut name = tmp
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    tmp.set_file_name(name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// A model together with the raster frame it was fitted in.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: DnsmModel,
    pub frame_width: u32,
    pub frame_height: u32,
}

impl ModelFile {
    /// Serializes to the text format:
    ///
    /// ```text
    /// DNSM 1
    /// <N> <M> <D> <slope>
    /// frame <width> <height>
    /// <w_1> ... <w_D> <bias>     (N * M lines)
    /// ```
    pub fn to_string(&self) -> String {
        let cfg = self.model.config();
        let mut out = String::new();
        let _ = writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}");
        let _ = writeln!(
            out,
            "{} {} {} {}",
            cfg.n_polytopes, cfg.m_halfspaces, cfg.dimension, cfg.slope
        );
        let _ = writeln!(out, "frame {} {}", self.frame_width, self.frame_height);
        for p in self.model.polytopes() {
            for d in &p.discriminants {
                for w in &d.weights {
                    let _ = write!(out, "{w} ");
                }
                let _ = writeln!(out, "{}", d.bias);
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_string().as_bytes())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| {
            tokens
                .next()
                .ok_or_else(|| Error::ModelParse(format!("missing {what}")))
        };

        if next("magic")? != MODEL_MAGIC {
            return Err(Error::ModelParse("bad magic".into()));
        }
        let version: u32 = parse_token(next("version")?, "version")?;
        if version != MODEL_VERSION {
            return Err(Error::ModelParse(format!("unsupported version {version}")));
        }
        let n: usize = parse_token(next("polytope count")?, "polytope count")?;
        let m: usize = parse_token(next("half-space count")?, "half-space count")?;
        let d: usize = parse_token(next("dimension")?, "dimension")?;
        let slope: f64 = parse_token(next("slope")?, "slope")?;
        if next("frame keyword")? != "frame" {
            return Err(Error::ModelParse("expected 'frame'".into()));
        }
        let frame_width: u32 = parse_token(next("frame width")?, "frame width")?;
        let frame_height: u32 = parse_token(next("frame height")?, "frame height")?;

        let mut polytopes = Vec::with_capacity(n);
        for _ in 0..n {
            let mut discriminants = Vec::with_capacity(m);
            for _ in 0..m {
                let mut weights = Vec::with_capacity(d);
                for _ in 0..d {
                    weights.push(parse_token(next("weight")?, "weight")?);
                }
                let bias = parse_token(next("bias")?, "bias")?;
                discriminants.push(Discriminant::new(weights, bias));
            }
            polytopes.push(Polytope { discriminants });
        }
        if tokens.next().is_some() {
            return Err(Error::ModelParse("trailing data".into()));
        }

        let config = ModelConfig {
            n_polytopes: n,
            m_halfspaces: m,
            dimension: d,
            slope,
        };
        let model = DnsmModel::new(config, polytopes)
            .map_err(|e| Error::ModelParse(e.to_string()))?;
        Ok(ModelFile {
            model,
            frame_width,
            frame_height,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn parse_token<T: std::str::FromStr>(token: &str, what: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| Error::ModelParse(format!("bad {what}: {token:?}")))
}

/// One polytope's entry in a report.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PolytopeReport {
    /// 1-based part index, matching label map values.
    pub index: usize,
    pub region_size: usize,
    pub unique_size: usize,
    pub significance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GlobalReport {
    pub dnsm_concavity: f64,
    pub pb_concavity: f64,
    pub rb_concavity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct FitTraces {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step1: Option<FitTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step3: Option<FitTrace>,
}

/// The JSON report written next to decomposition outputs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub per_polytope: Vec<PolytopeReport>,
    pub global: GlobalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_traces: Option<FitTraces>,
}

impl ReportFile {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn new(
        stats: &[RegionStats],
        global: GlobalReport,
        diagnostics: Option<Diagnostics>,
        fit_traces: Option<FitTraces>,
    ) -> Self {
        ReportFile {
            schema_version: Self::SCHEMA_VERSION,
            per_polytope: stats
                .iter()
                .enumerate()
                .map(|(i, s)| PolytopeReport {
                    index: i + 1,
                    region_size: s.region_size,
                    unique_size: s.unique_size,
                    significance: s.significance,
                })
                .collect(),
            global,
            diagnostics,
            fit_traces,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_json()?.as_bytes())
    }
}

/// The fixed label palette: entry 0 is black, entries 1..31 are bright
/// distinct hues (golden-angle spacing, kept light enough that every label
/// color reads as foreground under the default gray threshold).
pub fn label_palette() -> [[u8; 3]; PALETTE_SIZE] {
    let mut palette = [[0u8; 3]; PALETTE_SIZE];
    for (idx, entry) in palette.iter_mut().enumerate().skip(1) {
        let hue = ((idx - 1) as f64 * 137.508) % 360.0;
        *entry = hsv_to_rgb(hue, 0.5, 1.0);
    }
    palette
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

/// Palette slot for a label: 0 stays 0, others cycle through entries 1..31.
pub fn palette_index(label: u32) -> u8 {
    if label == 0 {
        0
    } else {
        (1 + (label - 1) % (PALETTE_SIZE as u32 - 1)) as u8
    }
}

/// Writes a label map as an indexed-color PNG plus a plain-text sidecar.
///
/// The sidecar (same path with a `.txt` extension) holds the raw label
/// integers, one row per line. Labels beyond the palette reuse colors
/// cyclically; the sidecar keeps the exact values.
pub fn write_label_map(labels: &LabelMap, path: &Path) -> Result<()> {
    let palette = label_palette();
    let mut palette_bytes = Vec::with_capacity(PALETTE_SIZE * 3);
    for color in palette {
        palette_bytes.extend_from_slice(&color);
    }

    let mut png_bytes: Vec<u8> = Vec::new();
    {
        let mut encoder = png::Encoder::new(
            BufWriter::new(&mut png_bytes),
            labels.width(),
            labels.height(),
        );
        encoder.set_color(png::ColorType::Indexed);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_palette(palette_bytes);
        let mut writer = encoder.write_header()?;
        let data: Vec<u8> = labels.values().iter().map(|&l| palette_index(l)).collect();
        writer.write_image_data(&data)?;
    }
    atomic_write(path, &png_bytes)?;

    let mut text = String::new();
    for row in 0..labels.height() {
        for col in 0..labels.width() {
            if col > 0 {
                text.push(' ');
            }
            let _ = write!(text, "{}", labels.get(row, col));
        }
        text.push('\n');
    }
    atomic_write(&path.with_extension("txt"), text.as_bytes())
}

/// Convenience used by tests and tools: writes a raster as a binary PGM.
pub fn write_shape_pgm(shape: &ShapeRaster, path: &Path) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", shape.width(), shape.height()).into_bytes();
    bytes.extend(shape.bits().iter().map(|&fg| if fg { 255u8 } else { 0 }));
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    writer.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

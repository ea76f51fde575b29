//! Binary PNM (P5/P6, 8-bit) I/O, optional PNG, and manifests that describe
//! multi-layer material stacks.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ImageBuffer;
use crate::error::{Error, Result};

/// Parses a binary PGM (`P5`, one channel) or PPM (`P6`, three channels) with
/// maxval 255.
pub fn read_pnm(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    let channels = match magic.1 {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::format(
                magic.0 as u64,
                format!("expected \"P5\" or \"P6\", found {:?}", String::from_utf8_lossy(other)),
            ))
        }
    };
    let (_, width) = parse_field(bytes, &mut pos, "width")?;
    let (_, height) = parse_field(bytes, &mut pos, "height")?;
    let (maxval_at, maxval) = parse_field(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::format(maxval_at as u64, format!("only maxval 255 is supported, got {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format(pos as u64, "missing whitespace after header"));
    }
    pos += 1;
    let need = width * height * channels;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated raster: expected {need} bytes, found {}", raster.len()),
        ));
    }
    if raster.len() > need {
        return Err(Error::format((pos + need) as u64, "trailing bytes after raster"));
    }
    ImageBuffer::from_u8(width, height, channels, raster)
        .map_err(|e| Error::format(0, format!("bad dimensions: {e}")))
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<(usize, &'a [u8])> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format(start as u64, "unexpected end of header"));
    }
    Ok((start, &bytes[start..*pos]))
}

fn parse_field(bytes: &[u8], pos: &mut usize, name: &str) -> Result<(usize, usize)> {
    let (at, tok) = next_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .map(|v| (at, v))
        .ok_or_else(|| Error::format(at as u64, format!("invalid {name}")))
}

/// Encodes a 1- or 3-channel image as binary PGM/PPM.
pub fn write_pnm(img: &ImageBuffer) -> Result<Vec<u8>> {
    let magic = match img.channels() {
        1 => "P5",
        3 => "P6",
        k => return Err(Error::arg(format!("PNM holds 1 or 3 channels, image has {k}"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_u8());
    Ok(out)
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default()
}

/// Reads `.ppm`/`.pgm`/`.pnm`, and `.png` when built with the `png` feature.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "ppm" | "pgm" | "pnm" => read_pnm(&std::fs::read(path)?),
        "png" => read_png(path),
        other => Err(Error::arg(format!("unsupported image extension {other:?}"))),
    }
}

pub fn write_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "ppm" | "pgm" | "pnm" => Ok(std::fs::write(path, write_pnm(img)?)?),
        "png" => write_png(img, path),
        other => Err(Error::arg(format!("unsupported image extension {other:?}"))),
    }
}

#[cfg(feature = "png")]
fn read_png(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path).map_err(|e| Error::format(0, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img.color().channel_count() {
        1 | 2 => ImageBuffer::from_u8(w, h, 1, img.to_luma8().as_raw()),
        _ => ImageBuffer::from_u8(w, h, 3, img.to_rgb8().as_raw()),
    }
}

#[cfg(not(feature = "png"))]
fn read_png(_: &Path) -> Result<ImageBuffer> {
    Err(Error::arg("PNG support requires the `png` feature"))
}

#[cfg(feature = "png")]
fn write_png(img: &ImageBuffer, path: &Path) -> Result<()> {
    let color = match img.channels() {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        k => return Err(Error::arg(format!("PNG export supports 1 or 3 channels, image has {k}"))),
    };
    image::save_buffer(path, &img.to_u8(), img.width() as u32, img.height() as u32, color)
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

#[cfg(not(feature = "png"))]
fn write_png(_: &ImageBuffer, _: &Path) -> Result<()> {
    Err(Error::arg("PNG support requires the `png` feature"))
}

/// What a material layer stores; decides how the cascaded array starts out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelRole {
    #[default]
    Albedo,
    Ao,
    Normal,
    Roughness,
    Other,
}

impl ChannelRole {
    /// Initial cascaded value of channel `index` of a layer with this role.
    pub fn init_value(self, index: usize) -> f32 {
        match self {
            ChannelRole::Albedo | ChannelRole::Roughness => 0.5,
            ChannelRole::Ao => 1.0,
            ChannelRole::Normal => [0.5, 0.5, 1.0].get(index).copied().unwrap_or(0.0),
            ChannelRole::Other => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestLayer {
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub role: ChannelRole,
}

/// A material stack: image files of equal size whose channels are
/// concatenated in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub layers: Vec<ManifestLayer>,
}

/// Loads every layer of a manifest; returns the stacked image and the
/// initial cascaded value of each channel.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<(ImageBuffer, Vec<f32>)> {
    let path = path.as_ref();
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(path)?)
        .map_err(|e| Error::format(0, format!("manifest: {e}")))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut images = Vec::new();
    let mut init = Vec::new();
    for layer in &manifest.layers {
        let img = read_image(dir.join(&layer.path))?;
        init.extend((0..img.channels()).map(|c| layer.role.init_value(c)));
        images.push(img);
    }
    Ok((ImageBuffer::stack(&images)?, init))
}

/// Writes each layer of `img` (split by the manifest's channel counts) next to
/// `path` and the manifest itself at `path`.
pub fn save_manifest(img: &ImageBuffer, manifest: &Manifest, layer_channels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if layer_channels.len() != manifest.layers.len() || layer_channels.iter().sum::<usize>() != img.channels() {
        return Err(Error::arg("layer channel counts do not match the image"));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut start = 0;
    for (layer, &k) in manifest.layers.iter().zip(layer_channels) {
        write_image(&img.select_channels(start..start + k)?, dir.join(&layer.path))?;
        start += k;
    }
    let json = serde_json::to_vec_pretty(manifest).map_err(|e| Error::arg(e.to_string()))?;
    Ok(std::fs::write(path, json)?)
}

//! Point-cloud (whitespace XYZ text) and image (binary PPM, P6) files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ot1d::PointCloud;

/// Reads one point per line; the dimension comes from the first row.
/// Blank lines and lines starting with `#` are skipped.
pub fn load_point_cloud(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    parse_point_cloud(&text, path)
}

pub fn parse_point_cloud(text: &str, path: &Path) -> Result<PointCloud> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| parse_err(i + 1, format!("not a number: `{tok}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    i + 1,
                    format!("expected {} coordinates, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(0, "file contains no points".into()));
    }
    PointCloud::from_rows(&rows)
}

/// Writes with 17 significant digits so values survive a round trip.
pub fn save_point_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = String::new();
    for row in cloud.rows() {
        let line: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(out, "{}", line.join(" ")).expect("writing to a String cannot fail");
    }
    fs::write(path, out)?;
    Ok(())
}

/// An 8-bit RGB image, pixels row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// `3 · width · height` bytes, RGB interleaved.
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format("image must have positive width and height".into()));
        }
        if data.len() != 3 * width * height {
            return Err(Error::Format(format!(
                "{}×{} image needs {} bytes, got {}",
                width,
                height,
                3 * width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// n×3 cloud of channel values in [0, 255].
    pub fn to_cloud(&self) -> PointCloud {
        let data = self.data.iter().map(|&b| b as f64).collect();
        PointCloud::new(self.pixel_count(), 3, data).expect("pixel values are finite")
    }

    /// Rounds each coordinate to the nearest integer and clamps to [0, 255].
    pub fn from_cloud(width: usize, height: usize, cloud: &PointCloud) -> Result<Self> {
        if cloud.dim() != 3 || cloud.len() != width * height {
            return Err(Error::Format(format!(
                "cloud of {}×{} does not fit a {}×{} RGB image",
                cloud.len(),
                cloud.dim(),
                width,
                height
            )));
        }
        let data = cloud
            .as_slice()
            .iter()
            .map(|&x| x.round().clamp(0.0, 255.0) as u8)
            .collect();
        Self::new(width, height, data)
    }
}

pub fn load_image(path: &Path) -> Result<Image> {
    decode_ppm(&fs::read(path)?)
}

pub fn save_image(path: &Path, image: &Image) -> Result<()> {
    fs::write(path, encode_ppm(image))?;
    Ok(())
}

pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    out
}

/// Decodes a binary PPM with maxval 255. Header comments are allowed.
pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P6" {
        return Err(Error::Format("not a binary PPM (expected magic `P6`)".into()));
    }
    let mut field = |name: &str| -> Result<usize> {
        let tok = next_token(bytes, &mut pos)?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad PPM {name}")))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "unsupported PPM maxval {maxval}; only 255 is supported"
        )));
    }
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    let need = 3 * width * height;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() < need {
        return Err(Error::Format(format!(
            "truncated PPM payload: {} of {need} bytes",
            payload.len()
        )));
    }
    Image::new(width, height, payload[..need].to_vec())
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Format("truncated PPM header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

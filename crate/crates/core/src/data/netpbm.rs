//! Binary PGM (P5) and PPM (P6) images, 8- or 16-bit.

use crate::error::{Error, Result};

/// Decoded image with samples scaled to `[0, 1]`, stored channel-planar
/// (`[C, H, W]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

fn header_error(message: impl Into<String>) -> Error {
    Error::Decode { path: Default::default(), message: message.into() }
}

struct Header<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Header<'_> {
    /// Next whitespace-separated token, skipping `#` comments.
    fn token(&mut self) -> Result<&str> {
        loop {
            match self.bytes.get(self.at) {
                Some(b) if b.is_ascii_whitespace() => self.at += 1,
                Some(b'#') => {
                    while !matches!(self.bytes.get(self.at), None | Some(b'\n') | Some(b'\r')) {
                        self.at += 1;
                    }
                }
                Some(_) => break,
                None => return Err(header_error("header ends early")),
            }
        }
        let start = self.at;
        while self.bytes.get(self.at).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
            self.at += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.at]).map_err(|_| header_error("non-ascii header"))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| header_error(format!("bad {what} '{t}'")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Image> {
    let mut h = Header { bytes, at: 0 };
    let channels = match h.token()? {
        "P5" => 1,
        "P6" => 3,
        other => return Err(header_error(format!("unsupported magic '{other}' (expected P5 or P6)"))),
    };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(header_error("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(header_error(format!("maxval {maxval} out of range 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    if !h.bytes.get(h.at).is_some_and(u8::is_ascii_whitespace) {
        return Err(header_error("missing whitespace after maxval"));
    }
    let raster = &bytes[h.at + 1..];
    let sample_size = if maxval > 255 { 2 } else { 1 };
    let count = width * height * channels;
    if raster.len() < count * sample_size {
        return Err(header_error(format!(
            "raster has {} bytes, expected {}",
            raster.len(),
            count * sample_size
        )));
    }
    let maxval = maxval as f32;
    let sample = |i: usize| -> f32 {
        let v = if sample_size == 2 {
            u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f32
        } else {
            raster[i] as f32
        };
        (v / maxval).min(1.0)
    };
    // interleaved RGB → planar
    let plane = width * height;
    let mut data = vec![0.0; count];
    for p in 0..plane {
        for c in 0..channels {
            data[c * plane + p] = sample(p * channels + c);
        }
    }
    Ok(Image { channels, height, width, data })
}

pub fn decode_file(path: &std::path::Path) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    decode(&bytes).map_err(|e| match e {
        Error::Decode { message, .. } => Error::Decode { path: path.to_path_buf(), message },
        other => other,
    })
}

/// Quantizes `[0, 1]` samples to 8 bits and writes P5 (one channel) or P6
/// (three channels).
pub fn encode(image: &Image) -> Result<Vec<u8>> {
    let magic = match image.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::arg(format!("cannot encode {c}-channel image as PGM/PPM"))),
    };
    let plane = image.width * image.height;
    if image.data.len() != plane * image.channels {
        return Err(Error::dim("image data does not match its dimensions"));
    }
    let mut out = format!("{magic}\n{} {}\n255\n", image.width, image.height).into_bytes();
    for p in 0..plane {
        for c in 0..image.channels {
            out.push(quantize(image.data[c * plane + p]));
        }
    }
    Ok(out)
}

/// `round(v · 255)` after clamping to `[0, 1]`.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_sixteen_bit() {
        let mut bytes = b"P5 # note\n2 1\n# another\n65535\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xff, 0x80, 0x00]);
        let img = decode(&bytes).unwrap();
        assert_eq!(img.data, vec![1.0, 32768.0 / 65535.0]);
    }

    #[test]
    fn short_raster_is_an_error() {
        assert!(decode(b"P5\n2 2\n255\n\x01\x02").is_err());
        assert!(decode(b"P3\n1 1\n255\n1").is_err());
    }
}

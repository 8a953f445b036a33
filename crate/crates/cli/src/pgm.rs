//! Binary PGM (P5) with 8-bit samples.

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u8>,
    /// Header bytes as read, reused on write while the geometry is unchanged.
    header: Vec<u8>,
    /// Anything after the raster.
    trailer: Vec<u8>,
}

fn canonical_header(width: usize, height: usize, maxval: u16) -> Vec<u8> {
    format!("P5\n{width} {height}\n{maxval}\n").into_bytes()
}

impl Pgm {
    pub fn new(width: usize, height: usize, maxval: u16, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            bail!("pixel count {} does not match {width}x{height}", data.len());
        }
        if maxval == 0 || maxval > 255 {
            bail!("maxval must lie in 1..=255");
        }
        if let Some(v) = data.iter().find(|&&v| u16::from(v) > maxval) {
            bail!("sample {v} exceeds maxval {maxval}");
        }
        Ok(Pgm { width, height, maxval, data, header: canonical_header(width, height, maxval), trailer: Vec::new() })
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if !bytes.starts_with(b"P5") {
            bail!("not a binary PGM (missing P5 magic)");
        }
        let mut pos = 2;
        let mut fields = [0usize; 3];
        for (k, name) in ["width", "height", "maxval"].iter().enumerate() {
            loop {
                match bytes.get(pos) {
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    _ => break,
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            if start == pos {
                bail!("header field `{name}` is missing");
            }
            fields[k] = std::str::from_utf8(&bytes[start..pos])?.parse().with_context(|| format!("header field `{name}`"))?;
        }
        if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            bail!("header must end with a single whitespace byte");
        }
        pos += 1;
        let [width, height, maxval] = fields;
        if width == 0 || height == 0 {
            bail!("image dimensions must be positive");
        }
        if maxval == 0 || maxval > 255 {
            bail!("only 8-bit images are supported (maxval {maxval})");
        }
        let n = width * height;
        let raster = bytes.get(pos..pos + n).context("raster is shorter than width × height")?;
        let mut img = Pgm::new(width, height, maxval as u16, raster.to_vec())?;
        img.header = bytes[..pos].to_vec();
        img.trailer = bytes[pos + n..].to_vec();
        Ok(img)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header.clone();
        out.extend_from_slice(&self.data);
        out.extend_from_slice(&self.trailer);
        out
    }

    /// Samples divided by `maxval`.
    pub fn to_unit(&self) -> Vec<f64> {
        let m = f64::from(self.maxval);
        self.data.iter().map(|&v| f64::from(v) / m).collect()
    }

    /// New image from values in `[0, 1]`, scaled by `maxval`, rounded half
    /// up and clamped.
    pub fn from_unit(width: usize, height: usize, maxval: u16, values: &[f64]) -> Result<Self> {
        let m = f64::from(maxval);
        let data = values.iter().map(|&v| (v * m + 0.5).floor().clamp(0.0, m) as u8).collect();
        Pgm::new(width, height, maxval, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_with_comment() {
        let mut bytes = b"P5\n# made by hand\n3 2\n200\n".to_vec();
        bytes.extend_from_slice(&[0, 10, 20, 30, 40, 200]);
        let img = Pgm::parse(&bytes).unwrap();
        assert_eq!((img.width, img.height, img.maxval), (3, 2, 200));
        assert_eq!(img.to_bytes(), bytes);
        assert_eq!(img.to_unit()[5], 1.0);
    }

    #[test]
    fn rounding_is_half_up() {
        let img = Pgm::from_unit(3, 1, 255, &[0.5 / 255.0, 1.49 / 255.0, 2.0]).unwrap();
        assert_eq!(img.data, vec![1, 1, 255]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Pgm::parse(b"P2\n1 1\n255\n0").is_err());
        assert!(Pgm::parse(b"P5\n2 2\n255\n\x00").is_err());
        assert!(Pgm::parse(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }
}

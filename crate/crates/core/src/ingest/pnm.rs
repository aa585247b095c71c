use super::IngestError;
use crate::representation::Image;

/// Cursor over a Netpbm header: whitespace-separated ASCII tokens with `#`
/// comments running to the end of the line.
struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64, IngestError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(IngestError::MalformedHeader(format!(
                "expected {what} at byte {start}"
            )));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| IngestError::MalformedHeader(format!("{what} is too large")))
    }
}

/// Parses a binary PGM (P5) or PPM (P6) image with maxval 255.
pub fn parse_pnm(bytes: &[u8]) -> Result<Image, IngestError> {
    if bytes.len() < 2 {
        return Err(IngestError::MalformedHeader(
            "file too short for a magic number".into(),
        ));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(IngestError::UnsupportedMagic(
                String::from_utf8_lossy(other).into_owned(),
            ))
        }
    };
    let mut header = HeaderReader { bytes, pos: 2 };
    if !header
        .bytes
        .get(2)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err(IngestError::MalformedHeader(
            "magic number must be followed by whitespace".into(),
        ));
    }
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(IngestError::MalformedHeader(format!(
            "zero-sized image {width}x{height}"
        )));
    }
    if maxval != 255 {
        return Err(IngestError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        Some(_) => {
            return Err(IngestError::MalformedHeader(
                "maxval must be followed by whitespace".into(),
            ))
        }
        None => {
            return Err(IngestError::Truncated {
                what: "Netpbm raster",
                expected: 1,
                found: 0,
            })
        }
    }
    let expected = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| {
            IngestError::MalformedHeader(format!("dimensions {width}x{height} overflow"))
        })?;
    let raster = &bytes[header.pos..];
    if raster.len() < expected {
        return Err(IngestError::Truncated {
            what: "Netpbm raster",
            expected,
            found: raster.len(),
        });
    }
    Image::from_bytes(
        width as usize,
        height as usize,
        channels,
        &raster[..expected],
    )
    .map_err(|e| IngestError::Shape(e.to_string()))
}

/// Encodes as P5 (grayscale) or P6 (RGB), quantizing intensities to 8 bits.
pub fn write_pnm(image: &Image) -> Vec<u8> {
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.to_bytes());
    out
}

//! Minimal Netpbm support: 8-bit PGM (P2 and P5) parsing, binary PGM (P5)
//! and PPM (P6) encoding. Only maxval <= 255 is accepted.

/// A parsed grayscale raster: row-major samples, one byte per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Scanner { bytes, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8], String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        if start == self.pos {
            Err("unexpected end of file".to_string())
        } else {
            Ok(&self.bytes[start..self.pos])
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, String> {
        let tok = self.token()?;
        let s = std::str::from_utf8(tok).map_err(|_| format!("{what}: not ASCII"))?;
        s.parse::<u32>()
            .map_err(|_| format!("{what}: bad integer {s:?}"))
    }
}

/// Parses a PGM image (P2 or P5). Rejects maxval > 255 and truncated data.
pub fn parse_pgm(bytes: &[u8]) -> Result<Gray, String> {
    let mut sc = Scanner::new(bytes);
    let magic = sc.token()?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(format!(
                "not a PGM file (magic {:?})",
                String::from_utf8_lossy(other)
            ))
        }
    };
    let width = sc.number("width")?;
    let height = sc.number("height")?;
    if width == 0 || height == 0 {
        return Err(format!("zero dimension {width}x{height}"));
    }
    let maxval = sc.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(format!("maxval {maxval} out of range (1..=255)"));
    }
    let len = width as usize * height as usize;
    let mut data = Vec::with_capacity(len);
    if binary {
        // exactly one whitespace byte separates the header from the samples
        if sc.pos >= sc.bytes.len() || !sc.bytes[sc.pos].is_ascii_whitespace() {
            return Err("missing separator before binary data".to_string());
        }
        sc.pos += 1;
        if sc.bytes.len() - sc.pos < len {
            return Err(format!(
                "truncated pixel data: expected {len} bytes, found {}",
                sc.bytes.len() - sc.pos
            ));
        }
        data.extend_from_slice(&sc.bytes[sc.pos..sc.pos + len]);
    } else {
        for _ in 0..len {
            let v = sc.number("sample")?;
            if v > maxval {
                return Err(format!("sample {v} exceeds maxval {maxval}"));
            }
            data.push(v as u8);
        }
    }
    if binary {
        if let Some(v) = data.iter().find(|v| u32::from(**v) > maxval) {
            return Err(format!("sample {v} exceeds maxval {maxval}"));
        }
    }
    Ok(Gray {
        width,
        height,
        data,
    })
}

/// Encodes a binary PGM (P5, maxval 255).
pub fn encode_pgm(width: u32, height: u32, data: &[u8]) -> Vec<u8> {
    assert_eq!(data.len(), width as usize * height as usize);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

/// Encodes a binary PPM (P6, maxval 255) from interleaved RGB triples.
pub fn encode_ppm(width: u32, height: u32, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), 3 * width as usize * height as usize);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

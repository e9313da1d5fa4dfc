//! Homodyne measurement records and their on-disk formats.
//!
//! Text format:
//!
//! ```text
//! eta=0.9
//! seed=42
//! source=cat(0+2i, 3.141592653589793)
//! 0,-0.5123
//! 0,1.2201
//! ...
//! ```
//!
//! Binary format: a 64-byte little-endian preamble (magic `HMLREC\0\0`,
//! version, label length, eta, seed, sample count, zero padding), the UTF-8
//! source label, then `(theta, x)` pairs as little-endian `f64`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const BINARY_MAGIC: &[u8; 8] = b"HMLREC\0\0";
const BINARY_VERSION: u32 = 1;
const BINARY_PREAMBLE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub theta: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneRecord {
    pub eta: f64,
    pub samples: Vec<Sample>,
    pub seed: u64,
    pub source_label: String,
}

impl HomodyneRecord {
    /// Checks phases lie in `[0, pi)`, values are finite and `eta` is in `(0, 1]`.
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "record efficiency eta={} outside (0, 1]",
                self.eta
            )));
        }
        if let Some((i, s)) = self
            .samples
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.theta >= 0.0 && s.theta < PI && s.x.is_finite()))
        {
            return Err(Error::Format(format!(
                "sample {i} ({}, {}) out of range",
                s.theta, s.x
            )));
        }
        if self.source_label.contains('\n') {
            return Err(Error::Format("source label must be a single line".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "eta={}", self.eta)?;
        writeln!(out, "seed={}", self.seed)?;
        writeln!(out, "source={}", self.source_label)?;
        for s in &self.samples {
            writeln!(out, "{},{}", s.theta, s.x)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let mut header = |key: &str| -> Result<String> {
            let (i, line) = lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing `{key}=` header")))?;
            let line = line?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .map(str::to_owned)
                .ok_or_else(|| Error::Format(format!("line {}: expected `{key}=`", i + 1)))
        };
        let eta = header("eta")?
            .trim()
            .parse()
            .map_err(|e| Error::Format(format!("bad eta: {e}")))?;
        let seed = header("seed")?
            .trim()
            .parse()
            .map_err(|e| Error::Format(format!("bad seed: {e}")))?;
        let source_label = header("source")?;
        let mut samples = Vec::new();
        for (i, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (t, x) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("line {}: expected `theta,x`", i + 1)))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))
            };
            samples.push(Sample {
                theta: parse(t)?,
                x: parse(x)?,
            });
        }
        let record = Self {
            eta,
            samples,
            seed,
            source_label,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let label = self.source_label.as_bytes();
        let mut pre = [0u8; BINARY_PREAMBLE];
        pre[0..8].copy_from_slice(BINARY_MAGIC);
        pre[8..12].copy_from_slice(&BINARY_VERSION.to_le_bytes());
        pre[12..16].copy_from_slice(&(label.len() as u32).to_le_bytes());
        pre[16..24].copy_from_slice(&self.eta.to_le_bytes());
        pre[24..32].copy_from_slice(&self.seed.to_le_bytes());
        pre[32..40].copy_from_slice(&(self.samples.len() as u64).to_le_bytes());
        out.write_all(&pre)?;
        out.write_all(label)?;
        for s in &self.samples {
            out.write_all(&s.theta.to_le_bytes())?;
            out.write_all(&s.x.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut pre = [0u8; BINARY_PREAMBLE];
        input
            .read_exact(&mut pre)
            .map_err(|_| Error::Format("binary record preamble truncated".into()))?;
        if &pre[0..8] != BINARY_MAGIC {
            return Err(Error::Format("not a binary homodyne record".into()));
        }
        let version = u32::from_le_bytes(pre[8..12].try_into().unwrap());
        if version != BINARY_VERSION {
            return Err(Error::Format(format!(
                "unsupported record version {version}"
            )));
        }
        let label_len = u32::from_le_bytes(pre[12..16].try_into().unwrap()) as usize;
        let eta = f64::from_le_bytes(pre[16..24].try_into().unwrap());
        let seed = u64::from_le_bytes(pre[24..32].try_into().unwrap());
        let count = u64::from_le_bytes(pre[32..40].try_into().unwrap()) as usize;
        let mut label = vec![0u8; label_len];
        input
            .read_exact(&mut label)
            .map_err(|_| Error::Format("binary record label truncated".into()))?;
        let source_label = String::from_utf8(label)
            .map_err(|_| Error::Format("source label is not UTF-8".into()))?;
        let mut body = Vec::new();
        input.read_to_end(&mut body)?;
        if body.len() != count * 16 {
            return Err(Error::Format(format!(
                "expected {count} samples, found {} bytes",
                body.len()
            )));
        }
        let samples = body
            .chunks_exact(16)
            .map(|c| Sample {
                theta: f64::from_le_bytes(c[0..8].try_into().unwrap()),
                x: f64::from_le_bytes(c[8..16].try_into().unwrap()),
            })
            .collect();
        let record = Self {
            eta,
            samples,
            seed,
            source_label,
        };
        record.validate()?;
        Ok(record)
    }

    /// Reads either format, detecting the binary magic.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        let is_binary = reader.fill_buf()?.starts_with(BINARY_MAGIC);
        if is_binary {
            Self::read_binary(reader)
        } else {
            Self::read_text(reader)
        }
    }

    pub fn save(&self, path: &Path, binary: bool) -> Result<()> {
        let out = BufWriter::new(File::create(path)?);
        if binary {
            self.write_binary(out)
        } else {
            self.write_text(out)
        }
    }
}

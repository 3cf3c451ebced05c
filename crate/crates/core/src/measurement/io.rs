//! Binary and CSV persistence of quadrature records.
//!
//! Binary layout (little endian):
//! `magic[8] version:u16 n_modes:u16 n:u64 sample_rate:f64 gain:f64
//! noise:f64×n_modes pump_phase:f64 pump_on:u8 note_len:u32 note[note_len]`
//! followed by `n × 2·n_modes` f64 samples (`I1,Q1,I2,Q2,…` per step) and a
//! CRC-32 of the sample bytes.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::measurement::{QuadratureId, QuadratureRecord, DEFAULT_SAMPLE_RATE_HZ};
use crate::scalar::Real;

pub const RECORD_MAGIC: &[u8; 8] = b"TSPDCREC";
pub const RECORD_VERSION: u16 = 1;

pub fn record_to_bytes<T: Real>(record: &QuadratureRecord<T>) -> Result<Vec<u8>> {
    record.validate()?;
    let note = record.calibration_note.as_bytes();
    let mut out = Vec::with_capacity(64 + note.len() + record.samples.len() * 8);
    out.extend_from_slice(RECORD_MAGIC);
    out.extend_from_slice(&RECORD_VERSION.to_le_bytes());
    out.extend_from_slice(&(record.n_modes as u16).to_le_bytes());
    out.extend_from_slice(&(record.len() as u64).to_le_bytes());
    out.extend_from_slice(&record.sample_rate.as_f64().to_le_bytes());
    out.extend_from_slice(&record.gain.as_f64().to_le_bytes());
    for n in &record.noise_photons {
        out.extend_from_slice(&n.as_f64().to_le_bytes());
    }
    out.extend_from_slice(&record.pump_phase.as_f64().to_le_bytes());
    out.push(u8::from(record.pump_on));
    out.extend_from_slice(&(note.len() as u32).to_le_bytes());
    out.extend_from_slice(note);
    let start = out.len();
    for s in &record.samples {
        out.extend_from_slice(&s.as_f64().to_le_bytes());
    }
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, expected_total: u64) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::TruncatedFile {
                expected: expected_total.max((self.pos + n) as u64),
                found: self.buf.len() as u64,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, 0)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, 0)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, 0)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, 0)?.try_into().unwrap()))
    }
}

pub fn record_from_bytes<T: Real>(buf: &[u8]) -> Result<QuadratureRecord<T>> {
    let mut c = Cursor { buf, pos: 0 };
    if buf.len() < RECORD_MAGIC.len() {
        return Err(if RECORD_MAGIC.starts_with(buf) {
            Error::TruncatedFile {
                expected: RECORD_MAGIC.len() as u64,
                found: buf.len() as u64,
            }
        } else {
            Error::BadMagic
        });
    }
    if c.take(8, 0)? != RECORD_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = c.u16()?;
    if version != RECORD_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: RECORD_VERSION,
        });
    }
    let n_modes = c.u16()? as usize;
    let n = c.u64()?;
    let sample_rate = c.f64()?;
    let gain = c.f64()?;
    let noise = (0..n_modes).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let pump_phase = c.f64()?;
    let pump_on = match c.take(1, 0)?[0] {
        0 => false,
        1 => true,
        b => {
            return Err(Error::Parse(format!(
                "pump_on flag must be 0 or 1, found {b}"
            )))
        }
    };
    let note_len = c.u32()? as usize;
    let note = c.take(note_len, 0)?;
    let calibration_note = String::from_utf8(note.to_vec())
        .map_err(|_| Error::Parse("calibration note is not UTF-8".into()))?;
    let payload_len = n
        .checked_mul(2 * n_modes as u64)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| Error::Parse("sample count overflows".into()))?;
    let expected = c.pos as u64 + payload_len + 4;
    if (buf.len() as u64) < expected {
        return Err(Error::TruncatedFile {
            expected,
            found: buf.len() as u64,
        });
    }
    if (buf.len() as u64) > expected {
        return Err(Error::Parse(format!(
            "{} trailing bytes after the checksum",
            buf.len() as u64 - expected
        )));
    }
    let payload = c.take(payload_len as usize, expected)?;
    let stored = c.u32()?;
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::ChecksumFailure { stored, computed });
    }
    let samples = payload
        .chunks_exact(8)
        .map(|b| T::lit(f64::from_le_bytes(b.try_into().unwrap())))
        .collect();
    let rec = QuadratureRecord {
        n_modes,
        samples,
        sample_rate: T::lit(sample_rate),
        gain: T::lit(gain),
        noise_photons: noise.into_iter().map(T::lit).collect(),
        pump_phase: T::lit(pump_phase),
        pump_on,
        calibration_note,
    };
    rec.validate()?;
    Ok(rec)
}

pub fn write_record<T: Real>(path: impl AsRef<Path>, record: &QuadratureRecord<T>) -> Result<()> {
    let bytes = record_to_bytes(record)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn read_record<T: Real>(path: impl AsRef<Path>) -> Result<QuadratureRecord<T>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    record_from_bytes(&buf)
}

/// CSV export: `# key = value` metadata lines, a header row naming the
/// columns, then one row per time step.
pub fn write_csv<T: Real, W: Write>(record: &QuadratureRecord<T>, mut w: W) -> Result<()> {
    record.validate()?;
    let noise: Vec<String> = record
        .noise_photons
        .iter()
        .map(|n| format!("{:?}", n.as_f64()))
        .collect();
    writeln!(w, "# sample_rate = {:?}", record.sample_rate.as_f64())?;
    writeln!(w, "# gain = {:?}", record.gain.as_f64())?;
    writeln!(w, "# noise_photons = {}", noise.join(" "))?;
    writeln!(w, "# pump_phase = {:?}", record.pump_phase.as_f64())?;
    writeln!(w, "# pump_on = {}", record.pump_on)?;
    writeln!(
        w,
        "# calibration_note = {}",
        record.calibration_note.replace('\n', " ")
    )?;
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(record.quadrature_names().iter().map(|q| q.to_string()))?;
    for row in record.samples.chunks_exact(2 * record.n_modes) {
        cw.write_record(row.iter().map(|v| format!("{:?}", v.as_f64())))?;
    }
    cw.flush()?;
    Ok(())
}

/// Reads a CSV record. Columns may appear in any order and are matched by
/// name (`I1`, `Q1`, …); metadata lines are optional and default to unit
/// gain, zero noise, 1 MHz and pump on.
pub fn read_csv<T: Real, R: Read>(r: R) -> Result<QuadratureRecord<T>> {
    let mut reader = BufReader::new(r);
    let mut meta = Vec::new();
    let mut body = String::new();
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        if let Some(rest) = line.trim_start().strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.push((k.trim().to_string(), v.trim().to_string()));
            }
        } else {
            body.push_str(&line);
            reader.read_to_string(&mut body)?;
            break;
        }
    }
    let parse_f = |k: &str, v: &str| -> Result<f64> {
        v.parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad value for {k}: {v:?}")))
    };
    let mut cr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = cr.headers()?.clone();
    let ids = headers
        .iter()
        .map(|h| h.parse::<QuadratureId>())
        .collect::<Result<Vec<_>>>()?;
    let n_modes = ids.iter().map(|q| q.mode + 1).max().unwrap_or(0);
    let mut slots = vec![None; 2 * n_modes];
    for (col, id) in ids.iter().enumerate() {
        if slots[id.column()].replace(col).is_some() {
            return Err(Error::Parse(format!("duplicate column {id}")));
        }
    }
    let slots: Vec<usize> = slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.ok_or_else(|| {
                let id = QuadratureId {
                    mode: i / 2,
                    component: if i % 2 == 0 {
                        super::Component::I
                    } else {
                        super::Component::Q
                    },
                };
                Error::Parse(format!("missing column {id}"))
            })
        })
        .collect::<Result<_>>()?;
    let mut samples = Vec::new();
    for row in cr.records() {
        let row = row?;
        if row.len() != ids.len() {
            return Err(Error::Parse(format!(
                "row has {} fields, header has {}",
                row.len(),
                ids.len()
            )));
        }
        for &col in &slots {
            samples.push(T::lit(parse_f("sample", &row[col])?));
        }
    }
    let mut rec = QuadratureRecord {
        n_modes,
        samples,
        sample_rate: T::lit(DEFAULT_SAMPLE_RATE_HZ),
        gain: T::one(),
        noise_photons: vec![T::zero(); n_modes],
        pump_phase: T::zero(),
        pump_on: true,
        calibration_note: String::new(),
    };
    for (k, v) in meta {
        match k.as_str() {
            "sample_rate" => rec.sample_rate = T::lit(parse_f(&k, &v)?),
            "gain" => rec.gain = T::lit(parse_f(&k, &v)?),
            "pump_phase" => rec.pump_phase = T::lit(parse_f(&k, &v)?),
            "pump_on" => {
                rec.pump_on = v
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad value for pump_on: {v:?}")))?
            }
            "noise_photons" => {
                rec.noise_photons = v
                    .split_whitespace()
                    .map(|t| parse_f(&k, t).map(T::lit))
                    .collect::<Result<Vec<_>>>()?
            }
            "calibration_note" => rec.calibration_note = v,
            _ => log::debug!("ignoring unknown CSV metadata key {k:?}"),
        }
    }
    rec.validate()?;
    Ok(rec)
}

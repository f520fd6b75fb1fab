//! Binary IQ captures: little-endian interleaved `f64` samples
//! (`I, Q` or `I_x, Q_x, I_y, Q_y`) with a JSON sidecar header.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{ComplexField, DualPolField, Signal};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureHeader {
    pub n_samples: usize,
    pub sample_period_s: f64,
    pub center_frequency_hz: f64,
    pub dual_pol: bool,
    pub power_normalized: bool,
    /// Free-form provenance of the capture (tool, scenario).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
}

impl CaptureHeader {
    pub fn of<T: Real>(signal: &Signal<T>) -> Self {
        Self {
            n_samples: signal.len(),
            sample_period_s: signal.sample_period().to_f64_lossy(),
            center_frequency_hz: signal.center_frequency().to_f64_lossy(),
            dual_pol: signal.is_dual(),
            power_normalized: (signal.total_power().to_f64_lossy() - 1.0).abs() <= 1e-6,
            origin: None,
        }
    }

    /// Headers of two captures describe the same time base.
    pub fn compatible(&self, other: &Self) -> bool {
        self.n_samples == other.n_samples
            && self.dual_pol == other.dual_pol
            && rel_eq(self.sample_period_s, other.sample_period_s)
            && rel_eq(self.center_frequency_hz, other.center_frequency_hz)
    }
}

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Sidecar path: the capture path with a `.json` extension.
pub fn header_path(data: &Path) -> PathBuf {
    data.with_extension("json")
}

/// Writes `signal` to `path` and its header next to it.
pub fn write_capture<T: Real>(path: &Path, signal: &Signal<T>) -> Result<CaptureHeader> {
    write_capture_with_origin(path, signal, None)
}

/// [`write_capture`] with a provenance string stored in the header.
pub fn write_capture_with_origin<T: Real>(
    path: &Path,
    signal: &Signal<T>,
    origin: Option<String>,
) -> Result<CaptureHeader> {
    let header = CaptureHeader {
        origin,
        ..CaptureHeader::of(signal)
    };
    let rails = signal.rails();
    let mut w = BufWriter::new(fs::File::create(path)?);
    for n in 0..signal.len() {
        for r in &rails {
            w.write_all(&r[n].re.to_f64_lossy().to_le_bytes())?;
            w.write_all(&r[n].im.to_f64_lossy().to_le_bytes())?;
        }
    }
    w.flush()?;
    fs::write(header_path(path), serde_json::to_string_pretty(&header)?)?;
    Ok(header)
}

pub fn read_header(path: &Path) -> Result<CaptureHeader> {
    let text = fs::read_to_string(header_path(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads a capture and its sidecar header.
pub fn read_capture<T: Real>(path: &Path) -> Result<(Signal<T>, CaptureHeader)> {
    let header = read_header(path)?;
    let bytes = fs::read(path)?;
    let rails = if header.dual_pol { 2 } else { 1 };
    let expected = header.n_samples * rails * 16;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: {} bytes, header implies {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let mut data: Vec<Vec<Complex<T>>> = vec![Vec::with_capacity(header.n_samples); rails];
    let mut it = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    for _ in 0..header.n_samples {
        for rail in data.iter_mut() {
            let re = it.next().unwrap_or(f64::NAN);
            let im = it.next().unwrap_or(f64::NAN);
            rail.push(Complex::new(T::lit(re), T::lit(im)));
        }
    }
    let ts = T::lit(header.sample_period_s);
    let nu = T::lit(header.center_frequency_hz);
    let signal = if header.dual_pol {
        let y = data.pop().expect("y rail");
        let x = data.pop().expect("x rail");
        Signal::Dual(DualPolField::new(
            ComplexField::with_center_frequency(x, ts, nu)?,
            ComplexField::with_center_frequency(y, ts, nu)?,
        )?)
    } else {
        let x = data.pop().expect("x rail");
        Signal::Single(ComplexField::with_center_frequency(x, ts, nu)?)
    };
    Ok((signal, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_dual_source, generate_source, ModulationFormat, SourceSpec};

    #[test]
    fn round_trip_single_and_dual() {
        let dir = tempdir();
        let spec = SourceSpec::new(ModulationFormat::Qam16, 32.0, 0.1, 3);
        let single: Signal<f64> = generate_source::<f64>(&spec, 128, 2).unwrap().field.into();
        let p = dir.join("a.iq");
        let h = write_capture(&p, &single).unwrap();
        assert!(h.power_normalized && !h.dual_pol);
        let (back, h2) = read_capture::<f64>(&p).unwrap();
        assert_eq!(h, h2);
        assert_eq!(back, single);

        let dual: Signal<f64> = generate_dual_source::<f64>(&spec, 128, 2, 0).unwrap().into();
        let p = dir.join("b.iq");
        write_capture(&p, &dual).unwrap();
        let (back, h) = read_capture::<f64>(&p).unwrap();
        assert!(h.dual_pol);
        assert_eq!(back, dual);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempdir();
        let spec = SourceSpec::new(ModulationFormat::Qpsk, 32.0, 0.1, 3);
        let s: Signal<f64> = generate_source::<f64>(&spec, 64, 2).unwrap().field.into();
        let p = dir.join("c.iq");
        write_capture(&p, &s).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(read_capture::<f64>(&p), Err(Error::Format(_))));
    }

    fn tempdir() -> PathBuf {
        let d = std::env::temp_dir().join(format!("ppe-iq-{}-{:?}", std::process::id(), std::thread::current().id()));
        fs::create_dir_all(&d).unwrap();
        d
    }
}

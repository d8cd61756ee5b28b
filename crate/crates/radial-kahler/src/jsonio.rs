//! Deterministic JSON encoding shared by artifacts and data files.
//!
//! Floats are written with 17 significant digits so every f64 round-trips
//! bit-exactly; map keys come from struct order (serde), so re-running a
//! command byte-reproduces its summary.

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::error::Result;

struct Sig17;

impl Formatter for Sig17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        if value == value.trunc() && value.abs() < 1e15 {
            // integral values stay readable and still round-trip
            return write!(writer, "{:.1}", value);
        }
        write!(writer, "{:.16e}", value)
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{:e}", value)
    }
}

/// Serializes with 17-significant-digit floats and a trailing newline.
pub fn to_string_17<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

/// Formats one float the same way the JSON writer does (for CSV cells).
pub fn format_f64(value: f64) -> String {
    if value == value.trunc() && value.abs() < 1e15 {
        return format!("{:.1}", value);
    }
    format!("{:.16e}", value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_bit_exactly() {
        let xs = vec![
            std::f64::consts::PI,
            1.0 / 3.0,
            -2.0676676416183064,
            1e-300,
            -0.0,
            12.0,
        ];
        let s = to_string_17(&xs).unwrap();
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        for (a, b) in xs.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits(), "{a} vs {b}");
        }
    }

    #[test]
    fn output_is_deterministic() {
        let v = vec![0.1, 0.2, 0.30000000000000004];
        assert_eq!(to_string_17(&v).unwrap(), to_string_17(&v).unwrap());
    }
}

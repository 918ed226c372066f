//! CSV emission with six significant digits, plus a reader for round-trip
//! checks.

use std::path::Path;

use crate::{Error, Result};

pub const HEADER: &str =
    "agent,seed,sweep_param,sweep_value,iteration,throughput,packet_loss,pdr,avg_queue,avg_delay";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub agent: String,
    pub seed: u64,
    /// Empty when nothing is swept.
    pub sweep_param: String,
    pub sweep_value: Option<f64>,
    pub iteration: u64,
    pub throughput: f64,
    pub packet_loss: f64,
    pub pdr: f64,
    pub avg_queue: f64,
    pub avg_delay: f64,
}

impl MetricsRow {
    fn metrics(&self) -> [f64; 5] {
        [self.throughput, self.packet_loss, self.pdr, self.avg_queue, self.avg_delay]
    }

    /// The row as it reads back from CSV.
    pub fn rounded(&self) -> Self {
        let r = |v: f64| format_sig(v).parse::<f64>().expect("formatted numbers parse");
        Self {
            sweep_value: self.sweep_value.map(r),
            throughput: r(self.throughput),
            packet_loss: r(self.packet_loss),
            pdr: r(self.pdr),
            avg_queue: r(self.avg_queue),
            avg_delay: r(self.avg_delay),
            ..self.clone()
        }
    }
}

/// Six significant digits: plain decimal for moderate magnitudes, otherwise
/// scientific; trailing zeros trimmed.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let rounded: f64 = sci.parse().expect("valid float");
        let decimals = (5 - exp).max(0) as usize;
        trim(format!("{rounded:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mantissa.to_string()))
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn fields(r: &MetricsRow) -> Vec<String> {
    let mut f = vec![
        r.agent.clone(),
        r.seed.to_string(),
        r.sweep_param.clone(),
        r.sweep_value.map(format_sig).unwrap_or_default(),
        r.iteration.to_string(),
    ];
    f.extend(r.metrics().into_iter().map(format_sig));
    f
}

pub fn to_csv(rows: &[MetricsRow]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::with_capacity(64 * (rows.len() + 1)));
    w.write_record(HEADER.split(',')).expect("in-memory write");
    for r in rows {
        w.write_record(fields(r)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn emit_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(rows)).map_err(|e| Error::io(path, e))
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::InvalidArgument(format!("CSV header: {e}")))?;
    if header.iter().collect::<Vec<_>>().join(",") != HEADER {
        return Err(Error::InvalidArgument("missing or unexpected CSV header".into()));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let bad = |what: &str| Error::InvalidArgument(format!("CSV line {}: bad {what}", i + 2));
            let f = rec.map_err(|e| bad(&e.to_string()))?;
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad("number"));
            Ok(MetricsRow {
                agent: f[0].to_string(),
                seed: f[1].parse().map_err(|_| bad("seed"))?,
                sweep_param: f[2].to_string(),
                sweep_value: if f[3].is_empty() { None } else { Some(num(3)?) },
                iteration: f[4].parse().map_err(|_| bad("iteration"))?,
                throughput: num(5)?,
                packet_loss: num(6)?,
                pdr: num(7)?,
                avg_queue: num(8)?,
                avg_delay: num(9)?,
            })
        })
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    parse_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sig_digits() {
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(0.5), "0.5");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333");
        assert_eq!(format_sig(123456.7), "123457");
        assert_eq!(format_sig(999999.7), "1e6");
        assert_eq!(format_sig(2.0e-7), "2e-7");
        assert_eq!(format_sig(12.3456789), "12.3457");
        assert_eq!(format_sig(-0.000123456789), "-0.000123457");
    }

    fn row(i: u64) -> MetricsRow {
        MetricsRow {
            agent: "dueling".into(),
            seed: i,
            sweep_param: "jammer.p_avg".into(),
            sweep_value: Some(i as f64 + 0.5),
            iteration: 1000 * i,
            throughput: 1.0 / (i as f64 + 3.0),
            packet_loss: 0.1,
            pdr: 0.9,
            avg_queue: 3.25,
            avg_delay: 1.0 / 7.0,
        }
    }

    #[test]
    fn header_only_and_line_counts() {
        assert_eq!(to_csv(&[]), format!("{HEADER}\n"));
        let rows: Vec<_> = (0..10).map(row).collect();
        assert_eq!(to_csv(&rows).lines().count(), 11);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        let mut rows: Vec<_> = (0..5).map(row).collect();
        rows[2].sweep_param.clear();
        rows[2].sweep_value = None;
        emit_csv(&rows, &path).unwrap();
        let back = read_csv(&path).unwrap();
        let expect: Vec<_> = rows.iter().map(MetricsRow::rounded).collect();
        assert_eq!(back, expect);
        assert!(matches!(emit_csv(&rows, &dir.path().join("no/such/dir.csv")), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn six_digit_roundtrip(v in -1e9f64..1e9) {
            let s = format_sig(v);
            let back: f64 = s.parse().unwrap();
            prop_assert!((back - v).abs() <= 5e-6 * v.abs() + 1e-300);
            prop_assert_eq!(format_sig(back), s);
        }
    }
}

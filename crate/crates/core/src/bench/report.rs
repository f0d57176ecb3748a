//! CSV, JSON and gnuplot output for benchmark summaries.

use std::io::Write;
use std::str::FromStr;

use super::{BenchError, Summary};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Gnuplot,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "gnuplot" => Ok(Format::Gnuplot),
            other => Err(format!(
                "unknown format `{other}` (expected csv, gnuplot or json)"
            )),
        }
    }
}

pub fn write(rows: &[Summary], format: Format, out: impl Write) -> Result<(), BenchError> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
        Format::Gnuplot => write_gnuplot(rows, out)?,
    }
    Ok(())
}

/// Whitespace-separated columns, one block per benchmark and mode, for
/// `plot ... using 1:2:3 with yerrorlines`.
fn write_gnuplot(rows: &[Summary], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "# workers mean_ms ci95_ms stddev_ms min_ms max_ms")?;
    let mut last: Option<(&str, &str, usize, usize)> = None;
    for r in rows {
        let key = (r.bench.name(), r.mode, r.num, r.repeat);
        if last != Some(key) {
            if last.is_some() {
                writeln!(out, "\n")?;
            }
            writeln!(out, "# {} {} num={} repeat={}", key.0, key.1, key.2, key.3)?;
            last = Some(key);
        }
        writeln!(
            out,
            "{} {:.4} {:.4} {:.4} {:.4} {:.4}",
            r.workers, r.mean_ms, r.ci95_ms, r.stddev_ms, r.min_ms, r.max_ms
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::Bench;

    fn row(workers: usize) -> Summary {
        Summary {
            bench: Bench::MapReduce,
            mode: "m:n",
            num: 4,
            repeat: 1,
            workers,
            reps: 2,
            mean_ms: 1.5,
            stddev_ms: 0.5,
            ci95_ms: 4.5,
            min_ms: 1.0,
            max_ms: 2.0,
            output_hash: "00".into(),
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut buf = Vec::new();
        write(&[row(1), row(4)], Format::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("bench,mode,num,repeat,workers,reps,mean_ms"));
        assert!(lines[2].starts_with("map-reduce,m:n,4,1,4,2,1.5"));
    }

    #[test]
    fn json_roundtrips_as_values() {
        let mut buf = Vec::new();
        write(&[row(8)], Format::Json, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v[0]["workers"], 8);
        assert_eq!(v[0]["bench"], "map-reduce");
    }

    #[test]
    fn gnuplot_blocks() {
        let mut buf = Vec::new();
        write(&[row(1), row(2)], Format::Gnuplot, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("# map-reduce m:n num=4 repeat=1"));
        assert!(text.contains("\n2 1.5000 4.5000"));
    }
}

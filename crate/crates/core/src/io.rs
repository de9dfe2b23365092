//! CSV and key-value file formats. Comma separated, `.` decimal point, LF
//! line endings, one header row. Lines starting with `#` carry `key=value`
//! metadata and are skipped by readers that do not need them.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back yields bit-identical values.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::analysis::{DifferenceCurve, HomFitResult};
use crate::coherence::AnalyticCurves;
use crate::detection::DetectionEvent;
use crate::error::{Error, Result};
use crate::histogram::{CorrelationHistogram, Normalization};
use crate::interferometer::Detector;

pub const TIMETAG_HEADER: &str = "channel,time_ns";
pub const HISTOGRAM_HEADER: &str = "tau_ns,counts,normalized";
pub const DIFFERENCE_HEADER: &str = "tau_ns,value,sigma";
pub const ANALYTIC_HEADER: &str = "tau_ns,g1,g2_source,g2_par,g2_orth,g2_par_irf,g2_orth_irf";

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Data lines with their 1-based line numbers, after the header.
fn data_lines<'a>(text: &'a str, header: &str) -> Result<Vec<(usize, &'a str)>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == header => Ok(lines.collect()),
        Some((n, h)) => Err(Error::Parse(format!("line {n}: expected header `{header}`, got `{h}`"))),
        None => Err(Error::Parse(format!("missing header `{header}`"))),
    }
}

fn metadata(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

fn field<T: std::str::FromStr>(line: usize, name: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad {name} `{s}`")))
}

pub fn write_timetags(path: &Path, events: &[DetectionEvent]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{TIMETAG_HEADER}")?;
    for e in events {
        writeln!(w, "{},{}", e.channel.channel(), e.time)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_timetags(path: &Path) -> Result<Vec<DetectionEvent>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in data_lines(&text, TIMETAG_HEADER)? {
        let (ch, t) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {n}: expected 2 fields")))?;
        let channel = Detector::from_channel(field(n, "channel", ch)?)
            .ok_or_else(|| Error::Parse(format!("line {n}: channel must be 3 or 4")))?;
        let time: f64 = field(n, "time", t)?;
        if out.last().is_some_and(|e: &DetectionEvent| e.time > time) {
            return Err(Error::Parse(format!("line {n}: times not sorted")));
        }
        out.push(DetectionEvent { channel, time });
    }
    Ok(out)
}

pub fn write_histogram(path: &Path, h: &CorrelationHistogram) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# bin_width_ns={}", h.bin_width)?;
    writeln!(w, "# tau_min_ns={}", h.tau_min())?;
    writeln!(w, "# truncated={}", h.truncated)?;
    if let Some(n) = h.normalization {
        writeln!(w, "# normalization_constant={}", n.constant)?;
        if let Some((lo, hi)) = n.region {
            writeln!(w, "# normalization_region_ns={lo}:{hi}")?;
        }
    }
    writeln!(w, "{HISTOGRAM_HEADER}")?;
    let norm = h.normalized_values();
    for (i, (c, k)) in h.bin_centers.iter().zip(&h.counts).enumerate() {
        match &norm {
            Some(v) => writeln!(w, "{c},{k},{}", v[i])?,
            None => writeln!(w, "{c},{k},")?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_histogram(path: &Path) -> Result<CorrelationHistogram> {
    let text = fs::read_to_string(path)?;
    let mut bin_centers = Vec::new();
    let mut counts = Vec::new();
    for (n, line) in data_lines(&text, HISTOGRAM_HEADER)? {
        let mut parts = line.split(',');
        let (Some(c), Some(k)) = (parts.next(), parts.next()) else {
            return Err(Error::Parse(format!("line {n}: expected 3 fields")));
        };
        bin_centers.push(field::<f64>(n, "tau", c)?);
        counts.push(field::<u64>(n, "count", k)?);
    }
    let meta = metadata(&text);
    let get = |k: &str| meta.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
    let bin_width = match get("bin_width_ns") {
        Some(v) => field(0, "bin_width_ns", v)?,
        None if bin_centers.len() >= 2 => bin_centers[1] - bin_centers[0],
        None => return Err(Error::Parse("cannot infer bin width".into())),
    };
    let truncated = get("truncated").map_or(Ok(false), |v| field(0, "truncated", v))?;
    let normalization = match get("normalization_constant") {
        Some(v) => {
            let region = match get("normalization_region_ns") {
                Some(r) => {
                    let (lo, hi) = r
                        .split_once(':')
                        .ok_or_else(|| Error::Parse(format!("bad normalization region `{r}`")))?;
                    Some((field(0, "region", lo)?, field(0, "region", hi)?))
                }
                None => None,
            };
            Some(Normalization {
                region,
                constant: field(0, "normalization_constant", v)?,
            })
        }
        None => None,
    };
    Ok(CorrelationHistogram {
        bin_centers,
        bin_width,
        counts,
        normalization,
        truncated,
    })
}

pub fn write_difference(path: &Path, d: &DifferenceCurve) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{DIFFERENCE_HEADER}")?;
    for i in 0..d.tau.len() {
        writeln!(w, "{},{},{}", d.tau[i], d.value[i], d.sigma[i])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_difference(path: &Path) -> Result<DifferenceCurve> {
    let text = fs::read_to_string(path)?;
    let mut d = DifferenceCurve {
        tau: Vec::new(),
        value: Vec::new(),
        sigma: Vec::new(),
    };
    for (n, line) in data_lines(&text, DIFFERENCE_HEADER)? {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Parse(format!("line {n}: expected 3 fields")));
        }
        d.tau.push(field(n, "tau", f[0])?);
        d.value.push(field(n, "value", f[1])?);
        d.sigma.push(field(n, "sigma", f[2])?);
    }
    Ok(d)
}

/// Analytic curves with `# key=value` metadata lines above the header.
pub fn write_analytic<W: Write>(w: &mut W, meta: &[(&str, String)], c: &AnalyticCurves) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}={v}")?;
    }
    writeln!(w, "{ANALYTIC_HEADER}")?;
    for i in 0..c.tau.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            c.tau[i], c.g1[i], c.g2_source[i], c.g2_par[i], c.g2_orth[i], c.g2_par_irf[i], c.g2_orth_irf[i]
        )?;
    }
    w.flush()?;
    Ok(())
}

/// `key=value` metadata pairs and numeric rows of a table.
pub type Table = (Vec<(String, String)>, Vec<Vec<f64>>);

/// Rows of a numeric CSV with the given header, plus its metadata.
pub fn read_table(path: &Path, header: &str) -> Result<Table> {
    let text = fs::read_to_string(path)?;
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (n, line) in data_lines(&text, header)? {
        let row = line
            .split(',')
            .map(|s| field(n, "value", s))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != width {
            return Err(Error::Parse(format!("line {n}: expected {width} fields")));
        }
        rows.push(row);
    }
    Ok((metadata(&text), rows))
}

/// Fit results as `key = value` lines, followed by any extra entries.
pub fn results_text(r: &HomFitResult, extra: &[(&str, String)]) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    kv("gamma_pure_hat_per_ns", r.gamma_pure_hat.to_string());
    kv("w_p_hat_per_ns", r.w_p_hat.to_string());
    kv("contrast_hat", r.contrast_hat.to_string());
    kv("background_hat", r.background_hat.to_string());
    kv("t2_hat_ns", r.t2_hat.to_string());
    kv("v0_hat", r.v0_hat.to_string());
    kv("stderr_gamma_pure_per_ns", r.stderr_gamma_pure.to_string());
    kv("stderr_w_p_per_ns", r.stderr_w_p.to_string());
    kv("stderr_contrast", r.stderr_contrast.to_string());
    kv("stderr_background", r.stderr_background.to_string());
    kv("rss", r.rss.to_string());
    kv("converged", r.converged.to_string());
    kv("physical", r.physical.to_string());
    kv("evaluations", r.evaluations.to_string());
    for (k, v) in extra {
        kv(k, v.clone());
    }
    s
}

/// Parse a `key = value` file into ordered pairs.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn timetags_round_trip() {
        let dir = tmp();
        let p = dir.path().join("t.csv");
        let ev = vec![
            DetectionEvent { channel: Detector::D3, time: 0.1 + 0.2 },
            DetectionEvent { channel: Detector::D4, time: 1e-7 },
        ];
        // unsorted input is written as is but rejected on read
        write_timetags(&p, &ev).unwrap();
        assert!(read_timetags(&p).is_err());
        let mut ev = ev;
        ev.swap(0, 1);
        write_timetags(&p, &ev).unwrap();
        assert_eq!(read_timetags(&p).unwrap(), ev);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("channel,time_ns\n4,"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn empty_files_keep_headers() {
        let dir = tmp();
        let p = dir.path().join("t.csv");
        write_timetags(&p, &[]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "channel,time_ns\n");
        assert!(read_timetags(&p).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn histogram_round_trip(counts in proptest::collection::vec(0u64..1_000_000, 1..50), lo in -50.0f64..0.0, bw in 0.001f64..1.0, norm in proptest::option::of(1.0f64..1e5)) {
            let dir = tmp();
            let p = dir.path().join("h.csv");
            let mut h = CorrelationHistogram::with_edges(lo, bw, counts.len());
            h.counts = counts;
            h.normalization = norm.map(|c| Normalization { region: Some((1.5, 3.25)), constant: c });
            write_histogram(&p, &h).unwrap();
            let back = read_histogram(&p).unwrap();
            prop_assert_eq!(back, h);
        }
    }

    #[test]
    fn histogram_header_checked() {
        let dir = tmp();
        let p = dir.path().join("h.csv");
        fs::write(&p, "tau,counts\n0,1\n").unwrap();
        assert!(matches!(read_histogram(&p), Err(Error::Parse(_))));
    }

    #[test]
    fn difference_round_trip_with_undefined_bins() {
        let dir = tmp();
        let p = dir.path().join("d.csv");
        let d = DifferenceCurve {
            tau: vec![-0.1, 0.1],
            value: vec![0.25, f64::NAN],
            sigma: vec![0.01, f64::NAN],
        };
        write_difference(&p, &d).unwrap();
        let back = read_difference(&p).unwrap();
        assert_eq!(back.tau, d.tau);
        assert_eq!(back.value[0], 0.25);
        assert!(back.value[1].is_nan());
    }

    #[test]
    fn key_values() {
        let kv = parse_key_values("# c\na = 1\n\nb=x y\n").unwrap();
        assert_eq!(kv, vec![("a".into(), "1".into()), ("b".into(), "x y".into())]);
        assert!(parse_key_values("oops").is_err());
    }
}

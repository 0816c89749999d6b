//! Text file formats: signal CSV, marker CSV, and the model files.
//!
//! Reals are written in scientific notation with 17 significant digits so
//! every value survives a write/read cycle exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::classify::LdaModel;
use crate::csp::CspModel;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::types::{Marker, MarkerLabel, MarkerStream, SignalBuffer, DEFAULT_SAMPLE_RATE_HZ};

pub const CSP_HEADER: &str = "CSPMODEL v1";
pub const LDA_HEADER: &str = "LDAMODEL v1";
/// Allowed deviation of a timestamp from the uniform sample grid.
pub const TIME_TOLERANCE_S: f64 = 1e-6;

/// Formats a real with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_real(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("`{}` is not a number", field.trim())))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("`{}` is not finite", field.trim())));
    }
    Ok(v)
}

/// Non-blank lines with 1-based line numbers.
fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(Error::from))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

pub fn read_signal<R: BufRead>(reader: R) -> Result<SignalBuffer> {
    let mut lines = content_lines(reader);
    let (_, header) = lines.next().transpose()?.ok_or_else(|| Error::parse(1, "empty file"))?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    if fields.len() < 2 || fields[0] != "time" {
        return Err(Error::parse(1, "header must be `time,<ch1>,...,<chN>`"));
    }
    let channel_names: Vec<String> = fields[1..].iter().map(|s| s.to_string()).collect();
    if channel_names.iter().any(|c| c.is_empty()) {
        return Err(Error::parse(1, "empty channel name"));
    }
    let n = channel_names.len();

    let mut times = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n];
    for item in lines {
        let (line_no, line) = item?;
        let row: Vec<&str> = line.split(',').collect();
        if row.len() != n + 1 {
            return Err(Error::NonuniformRow {
                line: line_no,
                expected: n + 1,
                found: row.len(),
            });
        }
        let t = parse_real(row[0], line_no)?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::parse(line_no, "timestamps must be strictly increasing"));
            }
        }
        times.push(t);
        for (col, field) in columns.iter_mut().zip(&row[1..]) {
            col.push(parse_real(field, line_no)?);
        }
    }
    if times.is_empty() {
        return Err(Error::parse(2, "no samples"));
    }
    if times[0].abs() > TIME_TOLERANCE_S {
        return Err(Error::parse(2, format!("first timestamp must be 0, got {}", times[0])));
    }
    let fs = if times.len() >= 2 {
        (times.len() - 1) as f64 / (times[times.len() - 1] - times[0])
    } else {
        DEFAULT_SAMPLE_RATE_HZ
    };
    for (i, &t) in times.iter().enumerate() {
        if (t - i as f64 / fs).abs() > TIME_TOLERANCE_S {
            // header is line 1 and blank lines are not allowed between rows
            return Err(Error::parse(i + 2, format!("timestamp {t} is off the 1/{fs} Hz grid")));
        }
    }
    let s = times.len();
    let data: Vec<f64> = columns.into_iter().flatten().collect();
    SignalBuffer::new(fs, channel_names, Matrix::from_vec(n, s, data)?)
}

pub fn write_signal<W: Write>(buffer: &SignalBuffer, mut w: W) -> Result<()> {
    writeln!(w, "time,{}", buffer.channel_names().join(","))?;
    let fs = buffer.sample_rate_hz();
    let samples = buffer.samples();
    let mut line = String::new();
    for j in 0..buffer.n_samples() {
        line.clear();
        line.push_str(&fmt_real(j as f64 / fs));
        for i in 0..buffer.n_channels() {
            line.push(',');
            line.push_str(&fmt_real(samples[(i, j)]));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_signal_csv(path: impl AsRef<Path>) -> Result<SignalBuffer> {
    read_signal(BufReader::new(File::open(path)?))
}

pub fn write_signal_csv(buffer: &SignalBuffer, path: impl AsRef<Path>) -> Result<()> {
    write_signal(buffer, BufWriter::new(File::create(path)?))
}

pub fn read_markers<R: BufRead>(reader: R) -> Result<MarkerStream> {
    let mut lines = content_lines(reader);
    let (_, header) = lines.next().transpose()?.ok_or_else(|| Error::parse(1, "empty file"))?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    if fields != ["time", "code", "label"] {
        return Err(Error::parse(1, "header must be `time,code,label`"));
    }
    let mut markers = Vec::new();
    for item in lines {
        let (line_no, line) = item?;
        let row: Vec<&str> = line.split(',').map(str::trim).collect();
        if row.len() != 3 {
            return Err(Error::NonuniformRow {
                line: line_no,
                expected: 3,
                found: row.len(),
            });
        }
        let time_s = parse_real(row[0], line_no)?;
        if time_s < 0.0 {
            return Err(Error::parse(line_no, "marker time must be nonnegative"));
        }
        let code: u32 = row[1]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("`{}` is not a marker code", row[1])))?;
        let by_code = MarkerLabel::from_code(code)
            .ok_or_else(|| Error::parse(line_no, format!("unknown marker code {code}")))?;
        let by_name = MarkerLabel::from_name(row[2])
            .ok_or_else(|| Error::parse(line_no, format!("unknown marker label `{}`", row[2])))?;
        if by_code != by_name {
            return Err(Error::parse(
                line_no,
                format!("code {code} belongs to {}, not {}", by_code.name(), row[2]),
            ));
        }
        markers.push(Marker::new(time_s, by_code));
    }
    MarkerStream::new(markers)
}

pub fn write_markers<W: Write>(stream: &MarkerStream, mut w: W) -> Result<()> {
    writeln!(w, "time,code,label")?;
    for m in stream {
        writeln!(w, "{},{},{}", fmt_real(m.time_s), m.code(), m.label.name())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_markers_csv(path: impl AsRef<Path>) -> Result<MarkerStream> {
    read_markers(BufReader::new(File::open(path)?))
}

pub fn write_markers_csv(stream: &MarkerStream, path: impl AsRef<Path>) -> Result<()> {
    write_markers(stream, BufWriter::new(File::create(path)?))
}

/// Line cursor over a model file that reports truncation as a parse error.
struct ModelLines {
    lines: Vec<(usize, String)>,
    pos: usize,
    last_line: usize,
}

impl ModelLines {
    fn read<R: BufRead>(reader: R) -> Result<Self> {
        let lines: Vec<(usize, String)> = content_lines(reader).collect::<Result<_>>()?;
        let last_line = lines.last().map_or(0, |(n, _)| *n);
        Ok(ModelLines {
            lines,
            pos: 0,
            last_line,
        })
    }

    fn next(&mut self, what: &str) -> Result<(usize, &str)> {
        let (n, l) = self
            .lines
            .get(self.pos)
            .ok_or_else(|| Error::parse(self.last_line + 1, format!("unexpected end of file, expected {what}")))?;
        self.pos += 1;
        Ok((*n, l.trim()))
    }

    fn header(&mut self, expected: &str) -> Result<()> {
        let (_, l) = self.next("header")?;
        if l != expected {
            return Err(Error::VersionMismatch(l.to_string()));
        }
        Ok(())
    }

    fn dims(&mut self) -> Result<(usize, usize)> {
        let (n, l) = self.next("dimensions")?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::parse(n, format!("bad dimension `{s}`")));
        match parts.as_slice() {
            [r, c] => Ok((parse(r)?, parse(c)?)),
            _ => Err(Error::parse(n, "dimension line must be `<rows> <cols>`")),
        }
    }

    fn real_row(&mut self, expected: usize) -> Result<Vec<f64>> {
        let (n, l) = self.next("matrix row")?;
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|f| parse_real(f, n))
            .collect::<Result<_>>()?;
        if row.len() != expected {
            return Err(Error::DimMismatch(format!(
                "line {n}: {} values, declared {expected}",
                row.len()
            )));
        }
        Ok(row)
    }

    fn keyed<'a>(&'a mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, l) = self.next(key)?;
        match l.split_once(char::is_whitespace) {
            Some((k, rest)) if k == key => Ok((n, rest.trim())),
            None if l == key => Ok((n, "")),
            _ => Err(Error::parse(n, format!("expected `{key} ...`"))),
        }
    }

    fn keyed_real(&mut self, key: &str) -> Result<f64> {
        let (n, rest) = self.keyed(key)?;
        parse_real(rest, n)
    }

    fn finish(&mut self) -> Result<()> {
        match self.lines.get(self.pos) {
            Some((n, _)) => Err(Error::parse(*n, "trailing content")),
            None => Ok(()),
        }
    }
}

fn write_rows<W: Write>(w: &mut W, m: &Matrix) -> Result<()> {
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
        writeln!(w, "{}", fields.join(" "))?;
    }
    Ok(())
}

/// Writes `CSPMODEL v1`, the `rows cols` line, the filter rows, then
/// `eigenvalues`, `ridge` and `channels` lines.
pub fn write_csp_model<W: Write>(model: &CspModel, mut w: W) -> Result<()> {
    let p = model.projection();
    writeln!(w, "{CSP_HEADER}")?;
    writeln!(w, "{} {}", p.rows(), p.cols())?;
    write_rows(&mut w, p)?;
    let ev: Vec<String> = model.eigenvalues().iter().map(|&v| fmt_real(v)).collect();
    writeln!(w, "eigenvalues {}", ev.join(" "))?;
    writeln!(w, "ridge {}", fmt_real(model.ridge()))?;
    writeln!(w, "channels {}", model.channel_names().join(","))?;
    w.flush()?;
    Ok(())
}

pub fn read_csp_model<R: BufRead>(reader: R) -> Result<CspModel> {
    let mut lines = ModelLines::read(reader)?;
    lines.header(CSP_HEADER)?;
    let (rows, cols) = lines.dims()?;
    if rows == 0 || rows % 2 != 0 || cols == 0 {
        return Err(Error::DimMismatch(format!(
            "a CSP model needs an even, nonzero number of filters, declared {rows}x{cols}"
        )));
    }
    let data: Vec<Vec<f64>> = (0..rows).map(|_| lines.real_row(cols)).collect::<Result<_>>()?;
    let (n, rest) = lines.keyed("eigenvalues")?;
    let eigenvalues: Vec<f64> = rest.split_whitespace().map(|f| parse_real(f, n)).collect::<Result<_>>()?;
    if eigenvalues.len() != rows {
        return Err(Error::DimMismatch(format!(
            "{} eigenvalues for {rows} filters",
            eigenvalues.len()
        )));
    }
    let ridge = lines.keyed_real("ridge")?;
    let (_, rest) = lines.keyed("channels")?;
    let channels: Vec<String> = rest.split(',').map(|s| s.trim().to_string()).collect();
    if channels.len() != cols {
        return Err(Error::DimMismatch(format!(
            "{} channel names for {cols} columns",
            channels.len()
        )));
    }
    lines.finish()?;
    CspModel::new(Matrix::from_rows(&data)?, eigenvalues, channels, rows / 2, ridge)
}

/// Writes `LDAMODEL v1`, `1 <dim>`, the weight row, then `bias` and `scale`.
pub fn write_lda_model<W: Write>(model: &LdaModel, mut w: W) -> Result<()> {
    writeln!(w, "{LDA_HEADER}")?;
    writeln!(w, "1 {}", model.dim())?;
    write_rows(&mut w, &Matrix::from_rows(&[model.weights()])?)?;
    writeln!(w, "bias {}", fmt_real(model.bias()))?;
    writeln!(w, "scale {}", fmt_real(model.score_scale()))?;
    w.flush()?;
    Ok(())
}

pub fn read_lda_model<R: BufRead>(reader: R) -> Result<LdaModel> {
    let mut lines = ModelLines::read(reader)?;
    lines.header(LDA_HEADER)?;
    let (rows, cols) = lines.dims()?;
    if rows != 1 || cols == 0 {
        return Err(Error::DimMismatch(format!(
            "an LDA model has one weight row, declared {rows}x{cols}"
        )));
    }
    let weights = lines.real_row(cols)?;
    let bias = lines.keyed_real("bias")?;
    let scale = lines.keyed_real("scale")?;
    lines.finish()?;
    LdaModel::new(weights, bias, scale)
}

pub fn save_csp_model(model: &CspModel, path: impl AsRef<Path>) -> Result<()> {
    write_csp_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_csp_model(path: impl AsRef<Path>) -> Result<CspModel> {
    read_csp_model(BufReader::new(File::open(path)?))
}

pub fn save_lda_model(model: &LdaModel, path: impl AsRef<Path>) -> Result<()> {
    write_lda_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_lda_model(path: impl AsRef<Path>) -> Result<LdaModel> {
    read_lda_model(BufReader::new(File::open(path)?))
}

/// Reads a bare matrix: whitespace-separated rows, `#` comments allowed.
pub fn read_matrix_rows<R: BufRead>(reader: R) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for item in content_lines(reader) {
        let (n, line) = item?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let row: Vec<f64> = content
            .split_whitespace()
            .map(|f| parse_real(f, n))
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::NonuniformRow {
                    line: n,
                    expected: first.len(),
                    found: row.len(),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(1, "empty matrix file"));
    }
    Matrix::from_rows(&rows)
}

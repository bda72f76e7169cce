//! CSV persistence. Floats are written in shortest round-trip form, so a
//! write-then-read cycle is bit-exact.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{Label, LabeledSample, Point, PreferencePairRecord};
use crate::{Error, Result};

struct Table {
    path: Option<PathBuf>,
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

impl Table {
    fn parse_err(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn expect_header(&self, options: &[&[&str]]) -> Result<()> {
        if options
            .iter()
            .any(|h| self.header.iter().map(String::as_str).eq(h.iter().copied()))
        {
            return Ok(());
        }
        let expected: Vec<String> = options.iter().map(|h| h.join(",")).collect();
        Err(self.parse_err(
            1,
            format!("header {:?}, expected {}", self.header.join(","), expected.join(" or ")),
        ))
    }

    fn float(&self, line: u64, field: &str) -> Result<f64> {
        field
            .trim()
            .parse()
            .map_err(|_| self.parse_err(line, format!("{field:?} is not a number")))
    }

    fn fields(&self, line: u64, row: &[String], n: usize) -> Result<()> {
        if row.len() == n {
            Ok(())
        } else {
            Err(self.parse_err(line, format!("{} fields, expected {n}", row.len())))
        }
    }
}

fn read_table<R: Read>(reader: R, path: Option<&Path>) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let path = path.map(Path::to_path_buf);
    let csv_err = |e: csv::Error, path: &Option<PathBuf>| Error::Parse {
        path: path.clone(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(e, &path))?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    if header.iter().all(String::is_empty) {
        return Err(Error::Parse {
            path,
            line: 1,
            message: "missing header".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(e, &path))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(Table { path, header, rows })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let io_err = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(&row).map_err(io_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

fn parse_points(t: &Table) -> Result<Vec<Point>> {
    t.expect_header(&[&["x", "y"], &["x", "y", "w"]])?;
    let width = t.header.len();
    t.rows
        .iter()
        .map(|(line, row)| {
            t.fields(*line, row, width)?;
            Ok([t.float(*line, &row[0])?, t.float(*line, &row[1])?])
        })
        .collect()
}

fn parse_labeled(t: &Table) -> Result<Vec<LabeledSample>> {
    t.expect_header(&[&["x", "y", "w"]])?;
    t.rows
        .iter()
        .map(|(line, row)| {
            t.fields(*line, row, 3)?;
            let w = row[2]
                .trim()
                .parse::<i64>()
                .ok()
                .and_then(Label::from_w)
                .ok_or_else(|| t.parse_err(*line, format!("label {:?} is not 1 or -1", row[2])))?;
            Ok(LabeledSample {
                x0: [t.float(*line, &row[0])?, t.float(*line, &row[1])?],
                w,
            })
        })
        .collect()
}

/// Points from an `x,y` (or `x,y,w`, labels ignored) file.
pub fn read_points(path: &Path) -> Result<Vec<Point>> {
    parse_points(&read_table(open(path)?, Some(path))?)
}

pub fn write_points(path: &Path, points: &[Point]) -> Result<()> {
    write_rows(
        path,
        &["x", "y"],
        points.iter().map(|p| vec![p[0].to_string(), p[1].to_string()]),
    )
}

pub fn read_labeled(path: &Path) -> Result<Vec<LabeledSample>> {
    parse_labeled(&read_table(open(path)?, Some(path))?)
}

pub fn write_labeled(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    write_rows(
        path,
        &["x", "y", "w"],
        samples
            .iter()
            .map(|s| vec![s.x0[0].to_string(), s.x0[1].to_string(), s.w.w().to_string()]),
    )
}

/// `prompt_id,winner_id,loser_id`.
pub fn read_pairs(path: &Path) -> Result<Vec<PreferencePairRecord>> {
    let t = read_table(open(path)?, Some(path))?;
    t.expect_header(&[&["prompt_id", "winner_id", "loser_id"]])?;
    t.rows
        .iter()
        .map(|(line, row)| {
            t.fields(*line, row, 3)?;
            PreferencePairRecord::new(&row[0], &row[1], &row[2]).map_err(|e| t.parse_err(*line, e.to_string()))
        })
        .collect()
}

pub fn write_pairs(path: &Path, pairs: &[PreferencePairRecord]) -> Result<()> {
    write_rows(
        path,
        &["prompt_id", "winner_id", "loser_id"],
        pairs
            .iter()
            .map(|p| vec![p.prompt_id.clone(), p.winner_id.clone(), p.loser_id.clone()]),
    )
}

/// `id,x,y`.
pub fn read_sample_table(path: &Path) -> Result<Vec<(String, Point)>> {
    let t = read_table(open(path)?, Some(path))?;
    t.expect_header(&[&["id", "x", "y"]])?;
    t.rows
        .iter()
        .map(|(line, row)| {
            t.fields(*line, row, 3)?;
            Ok((row[0].clone(), [t.float(*line, &row[1])?, t.float(*line, &row[2])?]))
        })
        .collect()
}

pub fn write_sample_table(path: &Path, table: &[(String, Point)]) -> Result<()> {
    write_rows(
        path,
        &["id", "x", "y"],
        table
            .iter()
            .map(|(id, p)| vec![id.clone(), p[0].to_string(), p[1].to_string()]),
    )
}

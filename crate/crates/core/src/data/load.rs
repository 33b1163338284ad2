//! Delimiter-separated rating files.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RawRating {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    User,
    Item,
    Rating,
    Timestamp,
    Ignore,
}

impl std::str::FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "user" => Ok(Column::User),
            "item" => Ok(Column::Item),
            "rating" => Ok(Column::Rating),
            "timestamp" => Ok(Column::Timestamp),
            "_" | "ignore" => Ok(Column::Ignore),
            other => Err(Error::config("columns", format!("unknown column `{other}`"))),
        }
    }
}

/// Column layout and separator of a rating file.
#[derive(Debug, Clone, PartialEq)]
pub struct TextFormat {
    pub columns: Vec<Column>,
    pub separator: String,
    pub has_header: bool,
}

impl Default for TextFormat {
    fn default() -> Self {
        Self {
            columns: vec![Column::User, Column::Item, Column::Rating, Column::Timestamp],
            separator: "\t".to_owned(),
            has_header: false,
        }
    }
}

impl TextFormat {
    /// MovieLens `ratings.dat`: `user::item::rating::timestamp`.
    pub fn movielens() -> Self {
        Self {
            separator: "::".to_owned(),
            ..Self::default()
        }
    }

    /// Parses a comma separated column list such as `user,item,rating,timestamp`.
    pub fn parse_columns(spec: &str) -> Result<Vec<Column>> {
        let cols = spec.split(',').map(str::parse).collect::<Result<Vec<Column>>>()?;
        for required in [Column::User, Column::Item] {
            if !cols.contains(&required) {
                return Err(Error::config("columns", format!("missing {required:?} column")));
            }
        }
        Ok(cols)
    }

    pub fn columns_string(&self) -> String {
        self.columns
            .iter()
            .map(|c| match c {
                Column::User => "user",
                Column::Item => "item",
                Column::Rating => "rating",
                Column::Timestamp => "timestamp",
                Column::Ignore => "_",
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

pub fn load_tsv(path: impl AsRef<Path>, format: &TextFormat) -> Result<Vec<RawRating>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ratings(BufReader::new(file), format, path)
}

/// Parses every line of `reader`. Bad lines are collected and reported
/// together; blank lines are skipped.
pub fn parse_ratings<R: Read>(reader: BufReader<R>, format: &TextFormat, origin: &Path) -> Result<Vec<RawRating>> {
    if format.separator.is_empty() {
        return Err(Error::config("separator", "must not be empty"));
    }
    let mut out = Vec::new();
    let mut bad = 0usize;
    let mut first_bad: Option<(usize, String)> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if format.has_header && idx == 0 {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line, format) {
            Ok(r) => out.push(r),
            Err(reason) => {
                bad += 1;
                first_bad.get_or_insert((line_no, reason));
            }
        }
    }

    if let Some((first_line, reason)) = first_bad {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            count: bad,
            first_line,
            reason,
        });
    }
    if out.is_empty() {
        log::warn!("{} contains no records", origin.display());
    }
    Ok(out)
}

fn parse_line(line: &str, format: &TextFormat) -> std::result::Result<RawRating, String> {
    let fields: Vec<&str> = line.split(format.separator.as_str()).collect();
    if fields.len() < format.columns.len() {
        return Err(format!(
            "expected {} fields, found {}",
            format.columns.len(),
            fields.len()
        ));
    }
    let mut rec = RawRating {
        user: String::new(),
        item: String::new(),
        rating: 1.0,
        timestamp: 0,
    };
    for (col, raw) in format.columns.iter().zip(&fields) {
        let raw = raw.trim();
        match col {
            Column::User => rec.user = raw.to_owned(),
            Column::Item => rec.item = raw.to_owned(),
            Column::Rating => {
                rec.rating = raw
                    .parse()
                    .ok()
                    .filter(|r: &f64| r.is_finite())
                    .ok_or_else(|| format!("rating `{raw}` is not a number"))?
            }
            Column::Timestamp => {
                rec.timestamp = parse_timestamp(raw)
                    .ok_or_else(|| format!("timestamp `{raw}` is not a non-negative integer"))?
            }
            Column::Ignore => {}
        }
    }
    if rec.user.is_empty() || rec.item.is_empty() {
        return Err("empty user or item id".to_owned());
    }
    Ok(rec)
}

fn parse_timestamp(raw: &str) -> Option<i64> {
    // Some exports write integral timestamps as floats ("978300760.0").
    let ts = raw.parse::<i64>().ok().or_else(|| {
        raw.parse::<f64>()
            .ok()
            .filter(|f| f.is_finite() && f.fract() == 0.0)
            .map(|f| f as i64)
    })?;
    (ts >= 0).then_some(ts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_lines() {
        let f = write("u1\ti1\t4\t10\nu1\ti2\t5\t11\nu2\ti1\t1\t12\n");
        let r = load_tsv(f.path(), &TextFormat::default()).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[2], RawRating { user: "u2".into(), item: "i1".into(), rating: 1.0, timestamp: 12 });
    }

    #[test]
    fn empty_file() {
        let f = write("");
        assert!(load_tsv(f.path(), &TextFormat::default()).unwrap().is_empty());
    }

    #[test]
    fn bad_timestamp_names_line() {
        let f = write("u1\ti1\t4\t10\nu1\ti2\t5\tyesterday\nu2\ti1\t1\t-3\n");
        match load_tsv(f.path(), &TextFormat::default()) {
            Err(Error::Parse { count, first_line, .. }) => {
                assert_eq!(count, 2);
                assert_eq!(first_line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_tsv("/nonexistent/ratings.tsv", &TextFormat::default()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn movielens_separator_and_custom_columns() {
        let f = write("1::1193::5::978300760\n1::661::3::978302109\n");
        let r = load_tsv(f.path(), &TextFormat::movielens()).unwrap();
        assert_eq!(r[1].item, "661");
        assert_eq!(r[1].timestamp, 978302109);

        let fmt = TextFormat {
            columns: TextFormat::parse_columns("item,_,user,timestamp").unwrap(),
            separator: ",".into(),
            has_header: true,
        };
        let f = write("item,x,user,ts\nA,zz,bob,7\n");
        let r = load_tsv(f.path(), &fmt).unwrap();
        assert_eq!(r, vec![RawRating { user: "bob".into(), item: "A".into(), rating: 1.0, timestamp: 7 }]);
    }

    #[test]
    fn column_spec_requires_user_and_item() {
        assert!(TextFormat::parse_columns("user,rating").is_err());
        assert!(TextFormat::parse_columns("user,item,score").is_err());
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::labels::SlideLabel;
use crate::analysis::FEATURE_NAMES;
use crate::error::{Error, Result};
use crate::io::atomic_write;

/// Labelled feature rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<SlideLabel>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<SlideLabel>) -> Result<Self> {
        let ids = (0..x.len()).map(|i| format!("row{i}")).collect();
        Dataset::with_ids(ids, x, y)
    }

    pub fn with_ids(ids: Vec<String>, x: Vec<Vec<f64>>, y: Vec<SlideLabel>) -> Result<Self> {
        if x.len() != y.len() || ids.len() != y.len() {
            return Err(Error::invalid(format!(
                "{} ids, {} rows and {} labels",
                ids.len(),
                x.len(),
                y.len()
            )));
        }
        if let Some(first) = x.first() {
            if let Some(bad) = x.iter().position(|r| r.len() != first.len()) {
                return Err(Error::invalid(format!(
                    "row {bad} has {} features, expected {}",
                    x[bad].len(),
                    first.len()
                )));
            }
        }
        Ok(Dataset { ids, x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn class_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for l in &self.y {
            c[l.index()] += 1;
        }
        c
    }

    pub fn push(&mut self, id: String, x: Vec<f64>, y: SlideLabel) {
        self.ids.push(id);
        self.x.push(x);
        self.y.push(y);
    }

    /// CSV with a `slide_id` column, feature columns, then `label`.
    /// Feature columns are named after the slide feature vector when the
    /// dimensionality matches, `x0..` otherwise.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let d = self.dim();
        let names: Vec<String> = if d == FEATURE_NAMES.len() {
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..d).map(|i| format!("x{i}")).collect()
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["slide_id".to_string()];
        header.extend(names);
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.ids[i].clone()];
            rec.extend(self.x[i].iter().map(|v| v.to_string()));
            rec.push(self.y[i].name().into());
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        atomic_write(path, &self.to_csv()?)
    }

    /// Reads a CSV with a `label` column, an optional `slide_id` column, and
    /// every other column as a numeric feature. With `require_label` false a
    /// missing label column yields `Negative` placeholders.
    pub fn read_csv(path: impl AsRef<Path>, require_label: bool) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let label_col = headers.iter().position(|h| h == "label");
        if require_label && label_col.is_none() {
            return Err(Error::invalid("dataset CSV has no `label` column"));
        }
        let id_col = headers.iter().position(|h| h == "slide_id");
        let mut ds = Dataset::default();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut x = Vec::new();
            for (i, field) in rec.iter().enumerate() {
                if Some(i) == label_col || Some(i) == id_col {
                    continue;
                }
                x.push(field.trim().parse::<f64>().map_err(|_| {
                    Error::invalid(format!("row {row}, column `{}`: not a number", &headers[i]))
                })?);
            }
            let y = match label_col {
                Some(c) => rec[c].parse()?,
                None => SlideLabel::Negative,
            };
            let id = id_col.map_or_else(|| format!("row{row}"), |c| rec[c].to_string());
            ds.push(id, x, y);
        }
        Dataset::with_ids(ds.ids, ds.x, ds.y)
    }
}

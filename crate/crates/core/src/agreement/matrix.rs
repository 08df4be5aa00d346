use std::io;
use std::path::Path;

use super::AgreementError;
use crate::label::ScreeningLabel;

/// Complete items × raters matrix of binary labels, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingMatrix {
    item_ids: Vec<String>,
    rater_ids: Vec<String>,
    cells: Vec<ScreeningLabel>,
}

impl RatingMatrix {
    pub fn new(
        item_ids: Vec<String>,
        rater_ids: Vec<String>,
        rows: Vec<Vec<ScreeningLabel>>,
    ) -> Result<Self, AgreementError> {
        if rows.is_empty() {
            return Err(AgreementError::Empty);
        }
        let r = rater_ids.len();
        if item_ids.len() != rows.len() {
            return Err(AgreementError::LengthMismatch(item_ids.len(), rows.len()));
        }
        let mut cells = Vec::with_capacity(rows.len() * r);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != r {
                return Err(AgreementError::Ragged {
                    row: i + 1,
                    found: row.len(),
                    expected: r,
                });
            }
            cells.extend(row);
        }
        Ok(Self {
            item_ids,
            rater_ids,
            cells,
        })
    }

    /// Builds from rater columns with generated ids (`item1..`, `rater1..`).
    pub fn from_columns(columns: Vec<Vec<ScreeningLabel>>) -> Result<Self, AgreementError> {
        let rater_ids = (1..=columns.len()).map(|j| format!("rater{j}")).collect();
        let n = columns.first().map(Vec::len).unwrap_or(0);
        let item_ids = (1..=n).map(|i| format!("item{i}")).collect();
        Self::from_named_columns(item_ids, rater_ids, columns)
    }

    pub fn from_named_columns(
        item_ids: Vec<String>,
        rater_ids: Vec<String>,
        columns: Vec<Vec<ScreeningLabel>>,
    ) -> Result<Self, AgreementError> {
        let n = item_ids.len();
        if n == 0 {
            return Err(AgreementError::Empty);
        }
        if rater_ids.len() != columns.len() {
            return Err(AgreementError::LengthMismatch(rater_ids.len(), columns.len()));
        }
        for c in &columns {
            if c.len() != n {
                return Err(AgreementError::LengthMismatch(n, c.len()));
            }
        }
        let rows = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
        Self::new(item_ids, rater_ids, rows)
    }

    pub fn n(&self) -> usize {
        self.item_ids.len()
    }

    pub fn r(&self) -> usize {
        self.rater_ids.len()
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn rater_ids(&self) -> &[String] {
        &self.rater_ids
    }

    pub fn row(&self, i: usize) -> &[ScreeningLabel] {
        let r = self.r();
        &self.cells[i * r..(i + 1) * r]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[ScreeningLabel]> {
        self.cells.chunks(self.r().max(1))
    }

    pub fn column(&self, j: usize) -> Vec<ScreeningLabel> {
        self.rows().map(|row| row[j]).collect()
    }

    /// Number of Include ratings per item.
    pub fn include_counts(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows().map(|row| row.iter().filter(|l| l.is_include()).count())
    }

    pub fn column_include_count(&self, j: usize) -> usize {
        self.rows().filter(|row| row[j].is_include()).count()
    }

    /// Keeps only the listed raters, in the given order.
    pub fn select_raters(&self, raters: &[usize]) -> Result<Self, AgreementError> {
        let columns = raters.iter().map(|&j| self.column(j)).collect();
        let ids = raters.iter().map(|&j| self.rater_ids[j].clone()).collect();
        Self::from_named_columns(self.item_ids.clone(), ids, columns)
    }

    /// Matrix built from the given rows (with repetition) in the given order.
    pub fn resample(&self, rows: &[usize]) -> Self {
        let r = self.r();
        let mut cells = Vec::with_capacity(rows.len() * r);
        let mut item_ids = Vec::with_capacity(rows.len());
        for &i in rows {
            cells.extend_from_slice(self.row(i));
            item_ids.push(self.item_ids[i].clone());
        }
        Self {
            item_ids,
            rater_ids: self.rater_ids.clone(),
            cells,
        }
    }

    /// Wide table: first column item id, one 0/1 column per rater.
    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self, AgreementError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| AgreementError::Format(e.to_string()))?
            .clone();
        if headers.len() < 2 {
            return Err(AgreementError::Format(
                "rating table needs an id column and rater columns".into(),
            ));
        }
        let rater_ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut item_ids = Vec::new();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| AgreementError::Format(e.to_string()))?;
            let id = rec.get(0).unwrap_or_default().to_string();
            let row = rec
                .iter()
                .skip(1)
                .map(|tok| tok.parse::<ScreeningLabel>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| AgreementError::Format(format!("row {} (id {id:?}): {e}", i + 1)))?;
            item_ids.push(id);
            rows.push(row);
        }
        Self::new(item_ids, rater_ids, rows)
    }

    pub fn read_csv_file(path: &Path) -> Result<Self, AgreementError> {
        let file = std::fs::File::open(path).map_err(|source| AgreementError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(file)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["item_id".to_string()];
        header.extend(self.rater_ids.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.item_ids.iter().zip(self.rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|l| l.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()
    }
}

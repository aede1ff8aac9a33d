//! Point clouds standing in for empirical measures.

use std::io::Read;
use std::path::Path;

use nalgebra::DVector;

use crate::{Error, Result};

/// An `n x d` point cloud. Every point has the same dimension and finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    points: Vec<DVector<f64>>,
}

impl SampleSet {
    pub fn new(points: Vec<DVector<f64>>) -> Result<Self> {
        let dim = match points.first() {
            Some(p) => p.len(),
            None => return Err(Error::InvalidInput("sample set is empty".into())),
        };
        if dim == 0 {
            return Err(Error::InvalidInput("points must have positive dimension".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate")));
            }
        }
        Ok(Self { dim, points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| DVector::from_column_slice(r)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DVector<f64>> {
        self.points.iter()
    }

    /// Applies `f` to every point.
    pub fn map<F>(&self, f: F) -> Result<SampleSet>
    where
        F: Fn(&DVector<f64>) -> DVector<f64>,
    {
        SampleSet::new(self.points.iter().map(f).collect())
    }

    /// Reads comma-separated numeric rows. `header` skips the first row.
    pub fn read_csv<R: Read>(reader: R, header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(header)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut points = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .map(|field| {
                    field.parse::<f64>().map_err(|_| {
                        Error::InvalidInput(format!(
                            "row {}: cannot parse {field:?} as a number",
                            line + 1 + usize::from(header)
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            points.push(DVector::from_vec(row));
        }
        Self::new(points)
    }

    pub fn read_csv_path(path: impl AsRef<Path>, header: bool) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read_csv(std::io::BufReader::new(file), header)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(SampleSet::new(vec![]).is_err());
        let ragged = SampleSet::from_rows(&[vec![1.0, 2.0], vec![1.0]]);
        assert!(matches!(ragged, Err(Error::DimensionMismatch { .. })));
        assert!(SampleSet::from_rows(&[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn csv_with_and_without_header() {
        let s = SampleSet::read_csv("1,2\n3,4\n".as_bytes(), false).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.points()[1][1], 4.0);
        let s = SampleSet::read_csv("x,y\n1, 2\n".as_bytes(), true).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.points()[0][1], 2.0);
        let bad = SampleSet::read_csv("1,a\n".as_bytes(), false);
        assert!(matches!(bad, Err(Error::InvalidInput(_))));
    }
}

use std::io::Write;

use super::{similarity, SimilarityError, SimilarityMetric};
use crate::sensors::Observation;

/// Pairwise similarities `S[i][j] = ω(o_i, o_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    ids: Vec<String>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.ids.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Row-major CSV with a header of observation ids.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string()];
        header.extend(self.ids.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the matrix from `(id, observation)` pairs. Each entry is an
/// independent call to [`similarity`]; the lower triangle mirrors the
/// upper one, which is exact because every metric is symmetric.
pub fn similarity_matrix(
    metric: &SimilarityMetric,
    observations: &[(String, Observation)],
) -> Result<SimilarityMatrix, SimilarityError> {
    let n = observations.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let s = similarity(metric, &observations[i].1, &observations[j].1)?;
            values[i * n + j] = s;
            values[j * n + i] = s;
        }
    }
    Ok(SimilarityMatrix {
        ids: observations.iter().map(|(id, _)| id.clone()).collect(),
        values,
    })
}

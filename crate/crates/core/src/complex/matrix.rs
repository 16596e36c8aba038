use serde::{Deserialize, Serialize};

/// Dense row-major 0/1 matrix.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BinaryMatrix { rows, cols, data: vec![false; rows * cols] }
    }

    /// Builds from nested rows; `None` if rows are ragged.
    pub fn from_rows(rows: &[Vec<bool>]) -> Option<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(BinaryMatrix { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn from_entries(rows: usize, cols: usize, ones: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut m = Self::zeros(rows, cols);
        for (i, j) in ones {
            m.set(i, j, true);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row_sum(&self, i: usize) -> usize {
        self.data[i * self.cols..(i + 1) * self.cols].iter().filter(|&&b| b).count()
    }

    pub fn col_sum(&self, j: usize) -> usize {
        (0..self.rows).filter(|&i| self.get(i, j)).count()
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Positions of nonzero entries in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k / self.cols, k % self.cols))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for (i, j) in self.ones() {
            t.set(j, i, true);
        }
        t
    }

    /// Integer product `self · other`.
    pub fn product(&self, other: &BinaryMatrix) -> Vec<Vec<usize>> {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = vec![vec![0usize; other.cols]; self.rows];
        for (i, j) in self.ones() {
            for (k, o) in out[i].iter_mut().enumerate() {
                if other.get(j, k) {
                    *o += 1;
                }
            }
        }
        out
    }

    /// Row `i` of the result is row `rows[i]` of `self`, and likewise for columns.
    pub fn permuted(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut m = Self::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                m.set(a, b, self.get(i, j));
            }
        }
        m
    }

    pub fn to_rows(&self) -> Vec<Vec<bool>> {
        (0..self.rows).map(|i| self.data[i * self.cols..(i + 1) * self.cols].to_vec()).collect()
    }
}

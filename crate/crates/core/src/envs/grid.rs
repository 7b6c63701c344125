use std::path::Path;

use crate::error::{Error, Result};

/// Rectangular ascii map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    cells: Vec<u8>,
}

impl GridSpec {
    /// Parses rows of equal length whose characters all appear in `legend`.
    pub fn parse<S: AsRef<str>>(rows: &[S], legend: &str) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidMap("map has no rows".into()));
        }
        let cols = rows[0].as_ref().len();
        if cols == 0 {
            return Err(Error::InvalidMap("map has an empty row".into()));
        }
        let mut cells = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::InvalidMap(format!(
                    "row {r} has length {} but row 0 has length {cols}",
                    row.len()
                )));
            }
            for ch in row.bytes() {
                if !legend.as_bytes().contains(&ch) {
                    return Err(Error::InvalidMap(format!(
                        "unexpected cell '{}' in row {r} (legend: {legend})",
                        ch as char
                    )));
                }
                cells.push(ch);
            }
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            cells,
        })
    }

    /// Reads a map from a plain-text file, one row per non-blank line.
    pub fn from_file(path: &Path, legend: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let rows: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        Self::parse(&rows, legend)
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn at(&self, cell: usize) -> u8 {
        self.cells[cell]
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.cols, cell % self.cols)
    }

    pub fn find_all(&self, ch: u8) -> Vec<usize> {
        (0..self.cells.len()).filter(|&i| self.cells[i] == ch).collect()
    }

    /// The unique cell marked `ch`, `None` when absent, an error when repeated.
    pub fn find_unique(&self, ch: u8) -> Result<Option<usize>> {
        match self.find_all(ch).as_slice() {
            [] => Ok(None),
            [one] => Ok(Some(*one)),
            many => Err(Error::InvalidMap(format!(
                "expected at most one '{}' cell, found {}",
                ch as char,
                many.len()
            ))),
        }
    }

    /// Neighbour of `cell` after moving in `dir` (0 left, 1 down, 2 right, 3 up), clamped at the border.
    pub fn neighbour(&self, cell: usize, dir: usize) -> usize {
        let (r, c) = self.coords(cell);
        let (r, c) = match dir {
            0 => (r, c.saturating_sub(1)),
            1 => ((r + 1).min(self.rows - 1), c),
            2 => (r, (c + 1).min(self.cols - 1)),
            _ => (r.saturating_sub(1), c),
        };
        self.cell(r, c)
    }

    pub fn row_strings(&self) -> Vec<String> {
        self.cells
            .chunks(self.cols)
            .map(|r| String::from_utf8_lossy(r).into_owned())
            .collect()
    }

    /// Breadth-first search from `start` through cells accepted by `passable`.
    pub fn reachable(&self, start: usize, passable: impl Fn(u8) -> bool) -> Vec<bool> {
        let mut seen = vec![false; self.num_cells()];
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(cell) = queue.pop_front() {
            for dir in 0..4 {
                let next = self.neighbour(cell, dir);
                if !seen[next] && passable(self.at(next)) {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        seen
    }
}

/// Arrow glyph for a grid move, in the order left, down, right, up.
pub fn arrow(dir: usize) -> char {
    ['<', 'v', '>', '^'][dir % 4]
}

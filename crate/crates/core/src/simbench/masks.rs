//! Shape masks for M3 and M4, parsed from the bundled fixture file.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

const FIXTURE: &str = include_str!("../../fixtures/shape_masks_v1.txt");

/// A `rows × cols` boolean bitmap; `get(r, c)` is response cell `(r, c)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    cells: Vec<bool>,
}

impl Mask {
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.cells[r * self.cols + c]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    /// The mask in generalized column-major order over `(r, c)`.
    pub fn column_major(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.push(self.get(r, c));
            }
        }
        out
    }
}

/// Parses a mask file: a `version 1` line, then blocks headed
/// `mask <name> <rows> <cols>` of `#`/`.` rows. Lines starting with `#`
/// outside a block are comments.
pub fn parse_masks(text: &str) -> Result<BTreeMap<String, Mask>> {
    let bad = |msg: String| Error::Format(format!("mask file: {}", msg));
    let mut lines = text.lines().map(str::trim_end).filter(|l| !l.is_empty());
    let mut masks = BTreeMap::new();
    let mut version = None;
    while let Some(line) = lines.next() {
        if line.starts_with('#') && version.is_none() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["version", v] => {
                if *v != "1" {
                    return Err(bad(format!("unsupported version {}", v)));
                }
                version = Some(1);
            }
            ["mask", name, rows, cols] => {
                if version.is_none() {
                    return Err(bad("missing version line".into()));
                }
                let rows: usize = rows.parse().map_err(|_| bad(format!("bad row count '{}'", rows)))?;
                let cols: usize = cols.parse().map_err(|_| bad(format!("bad column count '{}'", cols)))?;
                let mut cells = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    let row = lines.next().ok_or_else(|| bad(format!("mask {} ends at row {}", name, r)))?;
                    if row.chars().count() != cols {
                        return Err(bad(format!("mask {} row {} has {} cells", name, r, row.chars().count())));
                    }
                    for ch in row.chars() {
                        cells.push(match ch {
                            '#' => true,
                            '.' => false,
                            other => return Err(bad(format!("unexpected character '{}'", other))),
                        });
                    }
                }
                masks.insert(name.to_string(), Mask { rows, cols, cells });
            }
            _ => return Err(bad(format!("unexpected line '{}'", line))),
        }
    }
    Ok(masks)
}

/// A mask from the bundled fixture file.
pub fn mask(name: &str) -> Result<Mask> {
    parse_masks(FIXTURE)?
        .remove(name)
        .ok_or_else(|| Error::InvalidArgument(format!("no shape mask named '{}'", name)))
}

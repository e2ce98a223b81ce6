//! On-disk formats: `TTR1` tensors, CSV tables and TOML run configs. Every
//! file is written to a temporary sibling and renamed into place.

mod config;
mod csv;
mod tensor_file;

pub use self::config::{NuValue, RunConfig, SimSection};
pub use self::csv::{
    cv_path_to_csv, format_f64, matrix_from_csv, matrix_to_csv, read_matrix_csv, report_to_csv, write_matrix_csv,
};
pub use self::tensor_file::{decode, encode, read_tensor, write_tensor, MAGIC, VERSION};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimators::Dataset;

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Removes predictor and response means.
pub fn center(dataset: &Dataset) -> Result<Dataset> {
    dataset.center()
}

/// Reads `x` (`q×n`, order 2) and the response stack.
pub fn read_dataset(x: impl AsRef<Path>, y: impl AsRef<Path>) -> Result<Dataset> {
    let xt = read_tensor(x)?;
    if xt.order() != 2 {
        return Err(Error::Shape(format!("x must be a q×n matrix, got order {}", xt.order())));
    }
    let xm = xt.to_matrix(xt.dims()[0])?;
    Dataset::new(xm, read_tensor(y)?)
}

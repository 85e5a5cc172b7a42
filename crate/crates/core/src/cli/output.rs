//! Output artifacts. Every file is written to a temporary sibling and
//! renamed into place, so readers never observe a partial file.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::lattice::{ConfigPoint, DensityField};

pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const OUTCOMES_FILE: &str = "outcomes.csv";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const DENSITY_DIR: &str = "densities";

pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Relative paths of the files written so far, in order.
    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Writes `relative` atomically through `fill`.
    pub fn write(&mut self, relative: &str, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let target = self.root.join(relative);
        let parent = target.parent().unwrap_or(&self.root).to_path_buf();
        std::fs::create_dir_all(&parent)?;
        let mut tmp = tempfile::Builder::new().prefix(".partial-").tempfile_in(&parent)?;
        {
            let mut w = BufWriter::new(tmp.as_file_mut());
            fill(&mut w)?;
            w.flush()?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(&target).map_err(|e| Error::Io(e.error))?;
        self.written.push(relative.to_string());
        Ok(())
    }

    /// One row per `(run_id, t, q...)`; `paths[i]` pairs with `times`.
    pub fn write_trajectories(&mut self, times: &[f64], paths: &[Vec<ConfigPoint>], dims: usize) -> Result<()> {
        self.write(TRAJECTORIES_FILE, |w| {
            let mut csv = csv::Writer::from_writer(w);
            let mut header = vec!["run_id".to_string(), "t [T]".to_string()];
            header.extend((1..=dims).map(|d| format!("q{d} [L]")));
            csv.write_record(&header).map_err(csv_error)?;
            for (id, path) in paths.iter().enumerate() {
                for (t, p) in times.iter().zip(path) {
                    let mut row = vec![id.to_string(), fmt(*t)];
                    row.extend(p.iter().map(|x| fmt(*x)));
                    csv.write_record(&row).map_err(csv_error)?;
                }
            }
            csv.flush()?;
            Ok(())
        })
    }

    /// Position density on the grid, one value per line in row-major node
    /// order, after a commented header with the grid metadata.
    pub fn write_density(&mut self, index: usize, t: f64, rho: &DensityField) -> Result<()> {
        let name = format!("{DENSITY_DIR}/density_{index:05}.csv");
        self.write(&name, |w| {
            writeln!(w, "# t = {} [T]", fmt(t))?;
            for (d, a) in rho.grid.axes().iter().enumerate() {
                writeln!(w, "# axis {} = min {} max {} points {} [L]", d + 1, fmt(a.min), fmt(a.max), a.points)?;
            }
            writeln!(w, "# order = row-major, last axis fastest; node coordinate = min + i (max - min) / points")?;
            writeln!(w, "rho [L^-{}]", rho.grid.dims())?;
            for v in &rho.values {
                writeln!(w, "{}", fmt(*v))?;
            }
            Ok(())
        })
    }
}

/// Shortest representation that round-trips.
fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

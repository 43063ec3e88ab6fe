//! Experiment driver: configuration, sweeps and their CSV/SVG output.

mod config;
mod sweep;
mod table;

use std::path::Path;

pub use config::{parse_list, parse_matrix, ExperimentConfig, JSpec, ObservableSpec, OverdampedSettings, TargetSpec};
pub use sweep::{
    mean_and_std, run_analytic_sweep, run_design, run_mc_sweep, run_metadata, run_overdamped_check, run_spectrum,
    DesignOutput, OverdampedRow, OverdampedTable,
};
pub use table::{
    matrix_blocks_from_csv, matrix_blocks_to_csv, simple_csv, RowStatus, SweepRow, SweepTable, CSV_MAGIC,
    SWEEP_COLUMNS,
};

use crate::error::Result;

/// Writes `<stem>.csv` and `<stem>.svg` into `dir`, creating it if needed.
pub fn write_table(dir: &Path, stem: &str, table: &SweepTable) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.csv")), table.to_csv())?;
    std::fs::write(dir.join(format!("{stem}.svg")), table.to_svg())?;
    Ok(())
}

use super::config::SweepConfig;
use super::grid::{run_grid, GridSummary};
use super::output::{write_atomic, CsvTable};
use crate::error::{Error, Result};
use crate::evalstats::{format_real, iqm};

/// Every combination of axis values, first axis varying slowest.
pub fn cartesian(axes: &[(String, Vec<String>)]) -> Result<Vec<Vec<(String, String)>>> {
    let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in axes {
        if values.is_empty() {
            return Err(Error::Config(format!("sweep axis '{key}' has no values")));
        }
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push((key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    Ok(cells)
}

/// IQM over all (env, seed, last-`window` evaluation) values of the
/// successful runs of a grid.
pub fn grid_iqm(grid: &GridSummary, window: usize) -> f64 {
    let pooled: Vec<f64> = grid
        .runs
        .iter()
        .filter(|r| !r.failed())
        .flat_map(|r| r.evals[r.evals.len().saturating_sub(window)..].iter().map(|e| e.1))
        .collect();
    iqm(&pooled)
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub table: CsvTable,
    pub grids: Vec<GridSummary>,
}

/// Runs one grid per cell of the axes' Cartesian product, under
/// `<out_dir>/cell<i>`, and writes `<out_dir>/sweep.csv` with one row per cell.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepSummary> {
    config.report.validate()?;
    let cells = cartesian(&config.axes)?;
    // validate every cell before spending compute on any of them
    let mut cell_configs = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        let mut c = config.base.clone();
        c.apply(cell)?;
        c.out_dir = config.base.out_dir.join(format!("cell{i}"));
        super::grid::preflight(&c)?;
        cell_configs.push(c);
    }
    let mut header = vec!["cell".to_string()];
    header.extend(config.axes.iter().map(|(k, _)| k.clone()));
    header.extend(["iqm", "runs_ok", "runs_failed"].map(String::from));
    let mut table = CsvTable {
        header,
        rows: Vec::new(),
    };
    let mut grids = Vec::new();
    for (i, (cell, c)) in cells.iter().zip(&cell_configs).enumerate() {
        let grid = run_grid(c)?;
        let failed = grid.failures();
        let mut row = vec![i.to_string()];
        row.extend(cell.iter().map(|(_, v)| v.clone()));
        row.push(format_real(grid_iqm(&grid, config.report.window)));
        row.push((grid.runs.len() - failed).to_string());
        row.push(failed.to_string());
        table.push(row);
        grids.push(grid);
    }
    std::fs::create_dir_all(&config.base.out_dir)?;
    write_atomic(&config.base.out_dir.join("sweep.csv"), &table.to_bytes()?)?;
    write_atomic(&config.base.out_dir.join("sweep_config.txt"), config.print().as_bytes())?;
    Ok(SweepSummary { table, grids })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(k: &str, vs: &[&str]) -> (String, Vec<String>) {
        (k.into(), vs.iter().map(|v| v.to_string()).collect())
    }

    #[test]
    fn product_counts() {
        assert_eq!(cartesian(&[]).unwrap().len(), 1);
        let cells = cartesian(&[axis("a", &["1", "2"]), axis("b", &["x", "y", "z"])]).unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[1], vec![("a".into(), "1".into()), ("b".into(), "y".into())]);
        assert!(matches!(cartesian(&[axis("a", &[])]), Err(Error::Config(_))));
    }
}

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{EvalReport, HarnessError};
use crate::sim::TaskMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub task: TaskMode,
    /// One entry per column; `None` where no report was given.
    pub cells: Vec<Option<Cell>>,
    /// Column of the highest mean; ties go to the lower index.
    pub best: Option<usize>,
}

/// Mean ± std per (task, policy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

fn best_column(cells: &[Option<Cell>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        if let Some(c) = c {
            if best.is_none_or(|b| c.mean > cells[b].as_ref().expect("occupied").mean) {
                best = Some(i);
            }
        }
    }
    best
}

fn build(reports: &[EvalReport], tasks: Vec<TaskMode>) -> ComparisonTable {
    let mut columns: Vec<String> = Vec::new();
    for r in reports {
        if !columns.contains(&r.policy) {
            columns.push(r.policy.clone());
        }
    }
    let rows = tasks
        .into_iter()
        .map(|task| {
            let mut cells = vec![None; columns.len()];
            for r in reports.iter().filter(|r| r.task == task) {
                let col = columns.iter().position(|c| *c == r.policy).expect("column exists");
                if cells[col].is_none() {
                    cells[col] = Some(Cell { mean: r.mean, std: r.std, episodes: r.episodes });
                }
            }
            TableRow { task, best: best_column(&cells), cells }
        })
        .collect();
    ComparisonTable { columns, rows }
}

/// One-row table over reports that all share a task.
pub fn compare(reports: &[EvalReport]) -> Result<ComparisonTable, HarnessError> {
    let first = reports.first().ok_or(HarnessError::NoReports)?;
    if let Some(other) = reports.iter().find(|r| r.task != first.task) {
        return Err(HarnessError::MixedModes(first.task, other.task));
    }
    Ok(build(reports, vec![first.task]))
}

/// One row per task present, in fertilization, irrigation, mixed order.
pub fn compare_by_task(reports: &[EvalReport]) -> Result<ComparisonTable, HarnessError> {
    if reports.is_empty() {
        return Err(HarnessError::NoReports);
    }
    let tasks = TaskMode::ALL.into_iter().filter(|t| reports.iter().any(|r| r.task == *t)).collect();
    Ok(build(reports, tasks))
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRecord {
    task: TaskMode,
    policy: String,
    mean: f64,
    std: f64,
    episodes: usize,
    best: bool,
}

impl ComparisonTable {
    /// Long format: one line per filled cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            for (i, cell) in row.cells.iter().enumerate() {
                if let Some(c) = cell {
                    w.serialize(CsvRecord {
                        task: row.task,
                        policy: self.columns[i].clone(),
                        mean: c.mean,
                        std: c.std,
                        episodes: c.episodes,
                        best: row.best == Some(i),
                    })?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, HarnessError> {
        let mut columns: Vec<String> = Vec::new();
        let mut rows: Vec<TableRow> = Vec::new();
        let records: Vec<CsvRecord> =
            csv::Reader::from_reader(input).deserialize().collect::<Result<_, _>>()?;
        for r in &records {
            if !columns.contains(&r.policy) {
                columns.push(r.policy.clone());
            }
        }
        for r in records {
            let col = columns.iter().position(|c| *c == r.policy).expect("column exists");
            let idx = match rows.iter().position(|row| row.task == r.task) {
                Some(i) => i,
                None => {
                    rows.push(TableRow { task: r.task, cells: vec![None; columns.len()], best: None });
                    rows.len() - 1
                }
            };
            rows[idx].cells[col] = Some(Cell { mean: r.mean, std: r.std, episodes: r.episodes });
            if r.best {
                rows[idx].best = Some(col);
            }
        }
        Ok(Self { columns, rows })
    }

    /// Aligned plain text; the best cell of each row carries a `*`.
    pub fn to_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["task".to_string()];
        header.extend(self.columns.iter().cloned());
        grid.push(header);
        for row in &self.rows {
            let mut line = vec![row.task.label().to_string()];
            for (i, c) in row.cells.iter().enumerate() {
                line.push(match c {
                    Some(c) => {
                        let mark = if row.best == Some(i) { "*" } else { "" };
                        format!("{}{:.2} ± {:.2}", mark, c.mean, c.std)
                    }
                    None => "-".into(),
                });
            }
            grid.push(line);
        }
        let n_cols = grid[0].len();
        let widths: Vec<usize> =
            (0..n_cols).map(|j| grid.iter().map(|r| r[j].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for r in &grid {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(j, c)| format!("{c:>w$}", w = widths[j]))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

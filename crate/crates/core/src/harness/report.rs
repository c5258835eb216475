use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::Mic;
use super::experiment::{AccuracyGrid, Cell};

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    spot_id: u32,
    mic: Mic,
    successes: u32,
    trials: u32,
    accuracy: String,
}

/// Columns `spot_id,mic,successes,trials,accuracy`; accuracy has four
/// decimals.
pub fn render_csv(grid: &AccuracyGrid) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &grid.cells {
        w.serialize(CsvRow {
            spot_id: c.spot_id,
            mic: c.mic,
            successes: c.successes,
            trials: c.trials,
            accuracy: format!("{:.4}", c.accuracy()),
        })
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Invalid { row: usize, message: String },
}

pub fn parse_csv(text: &str) -> Result<AccuracyGrid, CsvError> {
    let mut cells = Vec::new();
    for (i, row) in csv::Reader::from_reader(text.as_bytes()).deserialize::<CsvRow>().enumerate() {
        let row = row?;
        let invalid = |message: &str| CsvError::Invalid { row: i + 1, message: message.to_owned() };
        if row.successes > row.trials {
            return Err(invalid("more successes than trials"));
        }
        let cell = Cell { spot_id: row.spot_id, mic: row.mic, successes: row.successes, trials: row.trials };
        if row.accuracy != format!("{:.4}", cell.accuracy()) {
            return Err(invalid("accuracy does not match counts"));
        }
        cells.push(cell);
    }
    Ok(AccuracyGrid { cells })
}

pub fn render_table(grid: &AccuracyGrid) -> String {
    let mut out = String::from("spot  internal          external\n");
    for spot in grid.spots() {
        let cell = |mic| {
            grid.cell(spot, mic)
                .map(|c| format!("{:>2}/{:<3} {:>6.1}%", c.successes, c.trials, 100.0 * c.accuracy()))
                .unwrap_or_else(|| "-".to_owned())
        };
        writeln!(out, "{spot:>4}  {:<16}  {}", cell(Mic::Internal), cell(Mic::External)).unwrap();
    }
    let (s, t) = (grid.total_successes(), grid.total_trials());
    writeln!(out, "total {s}/{t}").unwrap();
    out
}

/// `.` below 25%, `:` below 50%, `+` below 75%, `#` otherwise.
pub fn glyph(accuracy: f64) -> char {
    match accuracy {
        a if a < 0.25 => '.',
        a if a < 0.50 => ':',
        a if a < 0.75 => '+',
        _ => '#',
    }
}

/// One row per microphone (external first), one column per spot.
pub fn render_heatmap(grid: &AccuracyGrid) -> String {
    let spots = grid.spots();
    let mut out = String::from("         ");
    for s in &spots {
        write!(out, "{s:>3}").unwrap();
    }
    out.push('\n');
    for mic in [Mic::External, Mic::Internal] {
        write!(out, "{:<9}", mic.as_str()).unwrap();
        for s in &spots {
            let g = grid.cell(*s, mic).map_or(' ', |c| glyph(c.accuracy()));
            write!(out, "{g:>3}").unwrap();
        }
        out.push('\n');
    }
    out
}

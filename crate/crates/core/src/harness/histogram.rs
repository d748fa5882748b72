use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Counts of nonzero applications over (days after planting × amount).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    /// `nitrogen` or `water`.
    pub input: String,
    pub unit: String,
    pub day_bin_width: f64,
    pub day_max: f64,
    pub amount_bin_width: f64,
    pub amount_max: f64,
    /// `counts[amount_bin][day_bin]`.
    pub counts: Vec<Vec<u64>>,
    /// Applications made before planting; they are counted in day bin 0.
    pub pre_plant: u64,
}

impl Histogram2d {
    pub fn new(input: &str, unit: &str, day_bin_width: f64, day_max: f64, amount_bin_width: f64, amount_max: f64) -> Self {
        let n_days = (day_max / day_bin_width).ceil().max(1.0) as usize;
        let n_amounts = (amount_max / amount_bin_width).ceil().max(1.0) as usize;
        Self {
            input: input.into(),
            unit: unit.into(),
            day_bin_width,
            day_max,
            amount_bin_width,
            amount_max,
            counts: vec![vec![0; n_days]; n_amounts],
            pre_plant: 0,
        }
    }

    /// Day bins of 5 over [0, 160]; 10 kg/ha amount bins.
    pub fn nitrogen(max_amount: f64) -> Self {
        Self::new("nitrogen", "kg/ha", 5.0, 160.0, 10.0, max_amount)
    }

    /// Day bins of 5 over [0, 160]; 2 L/m² amount bins.
    pub fn water(max_amount: f64) -> Self {
        Self::new("water", "L/m2", 5.0, 160.0, 2.0, max_amount)
    }

    pub fn n_day_bins(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn n_amount_bins(&self) -> usize {
        self.counts.len()
    }

    fn bin(value: f64, width: f64, n: usize) -> usize {
        ((value / width).floor().max(0.0) as usize).min(n - 1)
    }

    /// Records one application; zero amounts are ignored.
    pub fn record(&mut self, days_after_planting: f64, amount: f64) {
        if amount <= 0.0 {
            return;
        }
        if days_after_planting < 0.0 {
            self.pre_plant += 1;
        }
        let d = Self::bin(days_after_planting, self.day_bin_width, self.n_day_bins());
        let a = Self::bin(amount, self.amount_bin_width, self.n_amount_bins());
        self.counts[a][d] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().flatten().copied().max().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &Histogram2d) {
        assert_eq!(self.counts.len(), other.counts.len(), "histogram shape mismatch");
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
        self.pre_plant += other.pre_plant;
    }

    /// Grid CSV: one row per amount bin, one column per day bin.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["amount_lo".to_string(), "amount_hi".to_string()];
        header.extend((0..self.n_day_bins()).map(|d| format!("day_{}", d as f64 * self.day_bin_width)));
        w.write_record(&header)?;
        for (a, row) in self.counts.iter().enumerate() {
            let mut rec = vec![
                (a as f64 * self.amount_bin_width).to_string(),
                ((a + 1) as f64 * self.amount_bin_width).to_string(),
            ];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the counts written by [`Histogram2d::write_csv`].
    pub fn read_csv_counts<R: Read>(input: R) -> Result<Vec<Vec<u64>>, HarnessError> {
        let mut r = csv::Reader::from_reader(input);
        let mut counts = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<u64>().map_err(|e| HarnessError::Parse(format!("grid cell `{v}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            counts.push(row);
        }
        Ok(counts)
    }

    /// Standalone SVG heatmap: days on x, amount on y (increasing upward),
    /// darkness proportional to count.
    pub fn to_svg(&self, title: &str) -> String {
        let (cell_w, cell_h) = (16.0, 12.0);
        let (left, top, bottom, right) = (70.0, 40.0, 50.0, 20.0);
        let nd = self.n_day_bins();
        let na = self.n_amount_bins();
        let plot_w = cell_w * nd as f64;
        let plot_h = cell_h * na as f64;
        let width = left + plot_w + right;
        let height = top + plot_h + bottom;
        let max = self.max_count();

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
        );
        let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="12">{}</text>"#, escape(title));
        for (a, row) in self.counts.iter().enumerate() {
            for (d, &c) in row.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let x = left + d as f64 * cell_w;
                let y = top + plot_h - (a + 1) as f64 * cell_h;
                let shade = c as f64 / max as f64;
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" fill="black" fill-opacity="{shade:.4}"><title>{c}</title></rect>"#
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        for d in (0..=nd).step_by(4) {
            let x = left + d as f64 * cell_w;
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
                top + plot_h + 14.0,
                d as f64 * self.day_bin_width
            );
        }
        let step = (na / 5).max(1);
        for a in (0..=na).step_by(step) {
            let y = top + plot_h - a as f64 * cell_h;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                left - 6.0,
                y + 3.0,
                a as f64 * self.amount_bin_width
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">days after planting</text>"#,
            left + plot_w / 2.0,
            height - 14.0
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{} ({})</text>"#,
            top + plot_h / 2.0,
            top + plot_h / 2.0,
            escape(&self.input),
            escape(&self.unit)
        );
        if max == 0 {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">empty: 0 nonzero applications</text>"#,
                left + plot_w / 2.0,
                top + plot_h / 2.0
            );
        }
        s.push_str("</svg>\n");
        s
    }

    /// Writes `<stem>.svg` and `<stem>.csv`.
    pub fn emit(&self, title: &str, stem: &Path) -> Result<(), HarnessError> {
        std::fs::write(stem.with_extension("svg"), self.to_svg(title))?;
        self.write_csv(std::fs::File::create(stem.with_extension("csv"))?)?;
        Ok(())
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning() {
        let mut h = Histogram2d::nitrogen(200.0);
        assert_eq!((h.n_day_bins(), h.n_amount_bins()), (32, 20));
        h.record(60.0, 40.0);
        assert_eq!(h.counts[4][12], 1);
        h.record(10.0, 0.0);
        h.record(170.0, 200.0);
        assert_eq!(h.counts[19][31], 1);
        h.record(-1.0, 5.0);
        assert_eq!((h.counts[0][0], h.pre_plant), (1, 1));
        assert_eq!(h.total(), 3);
    }

    #[test]
    fn empty_svg_is_annotated() {
        let svg = Histogram2d::water(50.0).to_svg("Null water");
        assert!(svg.contains("0 nonzero applications"));
        assert!(!svg.contains("fill-opacity"));
    }
}

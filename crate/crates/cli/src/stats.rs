//! Per-cell statistics for the summary table.

use surropt::problem::important_count;

use crate::matrix::Cell;
use crate::output::SummaryRow;

/// Mean, sample variance and quartiles; `None` when there is no data.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Describe {
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn describe(values: &[f64]) -> Describe {
    if values.is_empty() {
        return Describe::default();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Describe {
        mean: Some(mean),
        variance: Some(variance),
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub runs: usize,
    pub failed: usize,
    pub mtfauc: Describe,
    pub final_bsms_true: Describe,
    /// Mean fractions of important and unimportant variables the final
    /// MARS model uses.
    pub selection: Option<(f64, f64)>,
}

/// Fractions of important (leading `m`) and unimportant variables in `selected`.
pub fn selection_fractions(selected: &[usize], dim: usize, fiv: f64) -> (f64, f64) {
    let m = important_count(fiv, dim);
    let imp = selected.iter().filter(|&&v| v < m).count();
    let unimp = selected.iter().filter(|&&v| v >= m && v < dim).count();
    let frac = |k: usize, of: usize| if of == 0 { 0.0 } else { k as f64 / of as f64 };
    (frac(imp, m), frac(unimp, dim - m))
}

pub fn cell_stats(cell: &Cell, rows: &[SummaryRow]) -> CellStats {
    let ok: Vec<&SummaryRow> = rows.iter().filter(|r| r.status == "ok").collect();
    let mtf: Vec<f64> = ok.iter().filter_map(|r| r.mtfauc).collect();
    let fin: Vec<f64> = ok.iter().filter_map(|r| r.final_bsms_true).collect();
    let selection = (cell.surrogate.is_mars() && !ok.is_empty()).then(|| {
        let (a, b) = ok.iter().fold((0.0, 0.0), |(a, b), r| {
            let (i, u) = selection_fractions(&r.selected(), r.d, r.fiv);
            (a + i, b + u)
        });
        (a / ok.len() as f64, b / ok.len() as f64)
    });
    CellStats {
        runs: rows.len(),
        failed: rows.len() - ok.len(),
        mtfauc: describe(&mtf),
        final_bsms_true: describe(&fin),
        selection,
    }
}

/// Fixed-width text table, one line per cell.
pub fn render_table(cells: &[Cell], stats: &[CellStats]) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let g = |v: Option<f64>| v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into());
    let mut out = format!(
        "{:<36} {:>4} {:>7} {:>9} {:>9} {:>7} {:>7} {:>7} {:>11} {:>11} {:>11} {:>9}\n",
        "cell", "runs", "failed", "mtf_mean", "mtf_var", "mtf_q1", "mtf_q2", "mtf_q3",
        "final_mean", "final_med", "final_var", "imp/unimp"
    );
    for (c, s) in cells.iter().zip(stats) {
        let sel = s
            .selection
            .map(|(i, u)| format!("{i:.2}/{u:.2}"))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<36} {:>4} {:>7} {:>9} {:>9} {:>7} {:>7} {:>7} {:>11} {:>11} {:>11} {:>9}\n",
            c.label(),
            s.runs,
            s.failed,
            f(s.mtfauc.mean),
            g(s.mtfauc.variance),
            f(s.mtfauc.q1),
            f(s.mtfauc.median),
            f(s.mtfauc.q3),
            g(s.final_bsms_true.mean),
            g(s.final_bsms_true.median),
            g(s.final_bsms_true.variance),
            sel
        ));
    }
    out
}

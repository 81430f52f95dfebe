//! Plain CSV emitters with a one-line header.

use std::fmt::Write;

use crate::convexity::DeficitLevel;
use crate::flows::FlowSample;

/// Builds a CSV table; cells are written with `Display`, so floats use the
/// shortest round-trip form.
pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: format!("{}\n", header.join(",")), width: header.len() }
    }

    pub fn row<I, T>(&mut self, cells: I)
    where
        I: IntoIterator<Item = T>,
        T: std::fmt::Display,
    {
        let mut n = 0;
        for (i, c) in cells.into_iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            write!(self.text, "{c}").expect("write to string");
            n += 1;
        }
        debug_assert_eq!(n, self.width, "row width");
        self.text.push('\n');
    }

    pub fn rows(&self) -> usize {
        self.text.lines().count() - 1
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Flow traces `(sample, t, f_p, residual)`; `t` increases within each sample.
pub fn flow_trace_csv<'a>(traces: impl IntoIterator<Item = (u64, &'a [FlowSample])>) -> Csv {
    let mut csv = Csv::new(&["sample", "t", "f_p", "residual"]);
    for (id, hist) in traces {
        for s in hist {
            csv.row([id.to_string(), s.t.to_string(), s.f_p.to_string(), s.residual.to_string()]);
        }
    }
    csv
}

/// Chamber scatter: sample id, sorted spectrum, stratum label, verdict.
pub fn chamber_csv(n: usize, rows: &[(u64, Vec<f64>, Option<usize>, &str)]) -> Csv {
    let mut header: Vec<String> = vec!["sample".into()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.push("stratum".into());
    header.push("verdict".into());
    let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = Csv::new(&refs);
    for (id, spec, label, verdict) in rows {
        let mut cells = vec![id.to_string()];
        cells.extend(spec.iter().map(|v| v.to_string()));
        cells.push(label.map_or_else(String::new, |l| l.to_string()));
        cells.push(verdict.to_string());
        csv.row(cells);
    }
    csv
}

/// One row per sample-size level.
pub fn deficit_csv(levels: &[DeficitLevel]) -> Csv {
    let mut csv = Csv::new(&["n_samples", "max_midpoint_deficit"]);
    for l in levels {
        csv.row([l.n_samples.to_string(), l.max_midpoint_deficit.to_string()]);
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_rows_and_header() {
        let h = [FlowSample { t: 0.0, f_p: 1.0, residual: 0.5 }, FlowSample { t: 0.1, f_p: 0.5, residual: 0.1 }];
        let csv = flow_trace_csv([(3u64, &h[..])]);
        assert_eq!(csv.rows(), 2);
        assert_eq!(csv.into_string(), "sample,t,f_p,residual\n3,0,1,0.5\n3,0.1,0.5,0.1\n");
    }

    #[test]
    fn chamber_rows() {
        let rows = vec![(0u64, vec![0.5, -0.5], Some(1), "unstable"), (1, vec![0.0, 0.0], None, "stable")];
        let csv = chamber_csv(2, &rows);
        assert_eq!(csv.rows(), 2);
        assert!(csv.into_string().starts_with("sample,x1,x2,stratum,verdict\n0,0.5,-0.5,1,unstable\n1,0,0,,stable"));
    }

    #[test]
    fn deficit_rows() {
        let levels = [DeficitLevel { n_samples: 10, max_midpoint_deficit: 0.2 }, DeficitLevel { n_samples: 20, max_midpoint_deficit: 0.1 }];
        assert_eq!(deficit_csv(&levels).rows(), 2);
    }
}

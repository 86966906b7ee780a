//! Report emission: JSON and CSV with a fixed column order so goldens diff
//! cleanly.

use std::path::Path;

use crate::error::{Error, Result};

use super::MetricsReport;

pub const REPORT_CSV_HEADER: &str = "dataset,n,f_max,s_measure,e_measure,mae,iou,mode";

pub fn report_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.dataset, r.n, r.f_max, r.s_measure, r.e_measure, r.mae, r.iou, r.mode
        ));
    }
    out
}

pub fn write_report_csv(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    std::fs::write(path, report_csv(reports)).map_err(|e| Error::io(path, e))
}

pub fn write_report_json(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let json = serde_json::to_string_pretty(reports)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_fixed_field_order() {
        let r = MetricsReport {
            dataset: "toy".into(),
            n: 3,
            f_max: 0.5,
            s_measure: 0.625,
            e_measure: 0.75,
            mae: 0.125,
            iou: 0.25,
            mode: "selected".into(),
            per_sample: None,
        };
        let csv = report_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), REPORT_CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "toy,3,0.500000,0.625000,0.750000,0.125000,0.250000,selected"
        );
    }
}

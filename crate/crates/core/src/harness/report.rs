//! CSV renderings of harness results. Every file has a header row and
//! floats are written with 17 significant digits.

use crate::error::{Error, Result};
use crate::gradcheck::GradCheckReport;
use crate::linalg::text::fmt_f64;

use super::gradflow::GradFlowReport;
use super::train::EpochStats;

fn render<I, R>(header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `epoch,loss,metric`
pub fn learning_curve_csv(curve: &[EpochStats]) -> Result<String> {
    render(
        &["epoch", "loss", "metric"],
        curve
            .iter()
            .map(|s| [s.epoch.to_string(), fmt_f64(s.loss), fmt_f64(s.metric)]),
    )
}

/// `t,norm`
pub fn gradflow_csv(report: &GradFlowReport) -> Result<String> {
    render(
        &["t", "norm"],
        report
            .norms
            .iter()
            .enumerate()
            .map(|(i, &n)| [(i + 1).to_string(), fmt_f64(n)]),
    )
}

/// `family,seed,param_name,analytic,numeric,rel_error` for each labelled
/// report.
pub fn gradcheck_csv<'a>(reports: impl IntoIterator<Item = (&'a str, u64, &'a GradCheckReport)>) -> Result<String> {
    let rows: Vec<[String; 6]> = reports
        .into_iter()
        .flat_map(|(family, seed, r)| {
            r.entries.iter().map(move |e| {
                [
                    family.to_string(),
                    seed.to_string(),
                    e.name(),
                    fmt_f64(e.analytic),
                    fmt_f64(e.numeric),
                    fmt_f64(e.rel_error),
                ]
            })
        })
        .collect();
    render(&["family", "seed", "param_name", "analytic", "numeric", "rel_error"], rows)
}

/// Arbitrary table with pre-rendered cells.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    render(header, rows.iter().cloned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_has_header_and_full_precision() {
        let s = learning_curve_csv(&[
            EpochStats {
                epoch: 1,
                loss: 0.1,
                metric: 2.0 / 3.0,
            },
            EpochStats {
                epoch: 2,
                loss: 1e-20,
                metric: 0.0,
            },
        ])
        .unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "epoch,loss,metric");
        assert_eq!(lines[1], "1,1.0000000000000001e-1,6.6666666666666663e-1");
        assert_eq!(lines.len(), 3);
        let back: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(back, 2.0 / 3.0);
    }

    #[test]
    fn names_with_commas_are_quoted() {
        let s = table_csv(&["a", "b"], &[vec!["x,y".into(), "1".into()]]).unwrap();
        assert_eq!(s, "a,b\n\"x,y\",1\n");
    }

    #[test]
    fn gradcheck_rows_carry_family_and_seed() {
        let r = crate::harness::family_gradcheck(crate::harness::Family::GruMinimal, 2, 1e-5).unwrap();
        let s = gradcheck_csv([("gru-minimal", 2, &r)]).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "family,seed,param_name,analytic,numeric,rel_error");
        assert_eq!(lines.len(), r.entries.len() + 1);
        assert!(lines[1].starts_with("gru-minimal,2,W_f[0],"));
    }
}

//! Tables over the final records of one or more run directories.

use std::fmt::Write as _;
use std::path::Path;

use crate::records::{read_jsonl, Aggregate, MetricsRecord};
use crate::run::RECORDS;
use crate::RunnerError;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub run: String,
    pub aggregate: Aggregate,
}

pub fn collect(dirs: &[impl AsRef<Path>]) -> Result<Vec<Row>, RunnerError> {
    let mut rows = Vec::new();
    for dir in dirs {
        let dir = dir.as_ref();
        let records: Vec<MetricsRecord> = read_jsonl(&dir.join(RECORDS))?;
        if let Some(aggregate) = Aggregate::from_records(&records) {
            rows.push(Row {
                run: dir.display().to_string(),
                aggregate,
            });
        }
    }
    Ok(rows)
}

fn std_text(s: Option<f64>) -> String {
    s.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

pub fn table(rows: &[Row]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:<12} {:>5} {:>8} {:>8} {:>8} {:>8}  run",
        "method", "schema", "seeds", "auc", "auc_sd", "bce", "bce_sd"
    );
    for r in rows {
        let a = &r.aggregate;
        let _ = writeln!(
            out,
            "{:<14} {:<12} {:>5} {:>8.4} {:>8} {:>8.4} {:>8}  {}",
            a.method.as_str(),
            format!("{:?}", a.schema).to_lowercase(),
            a.n_seeds,
            a.auc.mean,
            std_text(a.auc.std),
            a.bce.mean,
            std_text(a.bce.std),
            r.run
        );
    }
    out
}

pub fn csv(rows: &[Row]) -> String {
    let mut out = String::from("run,method,schema,evaluated_on,n_seeds,auc_mean,auc_std,bce_mean,bce_std\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let a = &r.aggregate;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.run,
            a.method.as_str(),
            format!("{:?}", a.schema).to_lowercase(),
            format!("{:?}", a.evaluated_on).to_lowercase(),
            a.n_seeds,
            a.auc.mean,
            opt(a.auc.std),
            a.bce.mean,
            opt(a.bce.std)
        );
    }
    out
}

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use promoguard::evaluation::{load_reports, metrics_csv, EvalReport, MetricName};
use serde_json::Value;

use super::write_text;
use crate::exit::{input_error, CliResult};
use crate::manifest::RunManifest;

/// Grid keys that act as the x axis of a curve.
const CURVE_KEYS: [&str; 2] = ["shots", "n"];

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of run reports.
    #[arg(long)]
    pub dir: PathBuf,
    /// Where to write `summary.md`, `summary.csv` and `curves.csv`
    /// (default: `--dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn grid_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn condition(r: &EvalReport) -> String {
    if r.grid.is_empty() {
        return "-".into();
    }
    r.grid
        .iter()
        .map(|(k, v)| format!("{k}={}", grid_value(v)))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn summary_markdown(reports: &[&EvalReport]) -> String {
    let mut by_protocol: BTreeMap<&str, Vec<&EvalReport>> = BTreeMap::new();
    for r in reports {
        by_protocol.entry(r.protocol.as_str()).or_default().push(r);
    }
    let mut out = String::from("# Evaluation summary\n");
    for (protocol, rs) in by_protocol {
        out.push_str(&format!("\n## {protocol}\n\n| Condition | Seeds |"));
        for m in MetricName::ALL {
            out.push_str(&format!(" {} |", m.heading()));
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---|".repeat(MetricName::ALL.len()));
        out.push('\n');
        let mut flags = Vec::new();
        for r in rs {
            out.push_str(&format!("| {} | {} |", condition(r), r.seeds.len()));
            for m in MetricName::ALL {
                if r.seeds.len() > 1 {
                    out.push_str(&format!(" {:.4} ± {:.4} |", r.mean(m), r.std(m)));
                } else {
                    out.push_str(&format!(" {:.4} |", r.mean(m)));
                }
            }
            out.push('\n');
            for f in r.flags.iter().chain(&r.summary.flags) {
                flags.push(format!("- {}: {f}", condition(r)));
            }
        }
        if !flags.is_empty() {
            out.push_str("\nFlags:\n\n");
            out.push_str(&flags.join("\n"));
            out.push('\n');
        }
    }
    out
}

/// Long-format curve data: one row per (condition, metric) for reports
/// whose grid has a numeric x axis.
pub fn curves_csv(reports: &[&EvalReport]) -> String {
    let mut rows: Vec<(String, String, &str, f64, String)> = Vec::new();
    for r in reports {
        let Some((x_name, x)) = CURVE_KEYS
            .iter()
            .find_map(|k| r.grid.get(*k).and_then(Value::as_f64).map(|x| (*k, x)))
        else {
            continue;
        };
        let series: Vec<String> = r
            .grid
            .iter()
            .filter(|(k, _)| k.as_str() != x_name)
            .map(|(k, v)| format!("{k}={}", grid_value(v)))
            .collect();
        for m in MetricName::ALL {
            rows.push((
                r.protocol.clone(),
                series.join(";"),
                x_name,
                x,
                format!("{},{:.6},{:.6}", m.as_str(), r.mean(m), r.std(m)),
            ));
        }
    }
    rows.sort_by(|a, b| {
        (&a.0, &a.1, a.2)
            .cmp(&(&b.0, &b.1, b.2))
            .then(a.3.total_cmp(&b.3))
            .then(a.4.cmp(&b.4))
    });
    let mut out = String::from("protocol,series,x_name,x,metric,mean,std\n");
    for (protocol, series, x_name, x, rest) in rows {
        out.push_str(&format!("{protocol},{series},{x_name},{x},{rest}\n"));
    }
    out
}

pub fn report(args: ReportArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("report");
    if !args.dir.is_dir() {
        return Err(input_error(format!(
            "{} is not a directory",
            args.dir.display()
        )));
    }
    let loaded = load_reports(&args.dir)?;
    if loaded.is_empty() {
        return Err(input_error(format!(
            "no reports found in {}",
            args.dir.display()
        )));
    }
    for (path, _) in &loaded {
        manifest.input_file(&path.display().to_string(), path)?;
    }
    let reports: Vec<&EvalReport> = loaded.iter().map(|(_, r)| r).collect();
    let out = args.out.clone().unwrap_or_else(|| args.dir.clone());
    for (name, body) in [
        ("summary.md", summary_markdown(&reports)),
        ("summary.csv", metrics_csv(&reports)),
        ("curves.csv", curves_csv(&reports)),
    ] {
        let path = out.join(name);
        write_text(&path, &body)?;
        manifest.output(&path);
        println!("{}", path.display());
    }
    manifest.finish(&out, "report_manifest.json")?;
    Ok(())
}

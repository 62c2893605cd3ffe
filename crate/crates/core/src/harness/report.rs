use std::fmt::Write as _;
use std::str::FromStr;

use super::{RowValues, RunResult};
use crate::node::Tier;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?} (expected table or csv)")),
        }
    }
}

fn short(t: Tier) -> &'static str {
    match t {
        Tier::Tier1 => "T1",
        Tier::Tier2 => "T2",
        Tier::Tier3 => "T3",
        Tier::Neural => "TN",
    }
}

struct Cells {
    total: String,
    power: String,
    data: String,
    rate: String,
    samples: String,
}

fn cells(v: &RowValues, average: bool) -> Cells {
    let count = |x: f64| {
        if average {
            format!("{x:.1}")
        } else {
            format!("{x:.0}")
        }
    };
    Cells {
        total: format!("{:.2}", v.total_ws),
        power: format!("{:.4}", v.power_w),
        data: count(v.data),
        rate: format!("{:.2}", v.send_rate_ms),
        samples: count(v.samples),
    }
}

/// One labelled row per run, then max, min and average, for every tier.
fn tier_rows(result: &RunResult) -> Vec<(Tier, Vec<(String, Cells)>)> {
    result
        .summaries
        .iter()
        .map(|(&tier, summary)| {
            let mut rows: Vec<(String, Cells)> = result
                .rows(tier)
                .map(|r| (format!("Run{}", r.run), cells(&RowValues::of(r), false)))
                .collect();
            rows.push(("max".into(), cells(&summary.max, false)));
            rows.push(("min".into(), cells(&summary.min, false)));
            rows.push(("average".into(), cells(&summary.average, true)));
            (tier, rows)
        })
        .collect()
}

fn comparison_lines(result: &RunResult) -> Vec<(String, String, String, String)> {
    let Some(cmp) = &result.comparison else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for p in &cmp.pairs {
        let (a, b) = (short(p.from), short(p.to));
        out.push(("power reduction".into(), a.into(), b.into(), format!("{:.2}", p.power_reduction_pct)));
        out.push(("data reduction".into(), a.into(), b.into(), format!("{:.2}", p.data_reduction_pct)));
        out.push((
            "mWs per sample reduction".into(),
            a.into(),
            b.into(),
            format!("{:.2}", p.per_sample_reduction_pct),
        ));
    }
    for (t, v) in &cmp.ws_per_sample {
        out.push(("mWs per sample".into(), short(*t).into(), String::new(), format!("{v:.4}")));
    }
    out
}

/// Renders a result. Output depends only on the result, so equal results give
/// byte-identical reports.
pub fn emit_report(result: &RunResult, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => table(result),
        ReportFormat::Csv => csv(result),
    }
}

fn table(result: &RunResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "trace: {}", result.trace_source);
    let _ = writeln!(s, "params: {}", result.params_label);
    for (tier, rows) in tier_rows(result) {
        let _ = writeln!(s);
        let _ = writeln!(s, "{tier}");
        let _ = writeln!(
            s,
            "{:<8} {:>12} {:>12} {:>9} {:>12} {:>9}",
            "", "Total", "per minute", "data", "send rate", "samples"
        );
        for (label, c) in rows {
            let _ = writeln!(
                s,
                "{:<8} {:>9} Ws {:>10} W {:>9} {:>9} ms {:>9}",
                label, c.total, c.power, c.data, c.rate, c.samples
            );
        }
    }
    let cmp = comparison_lines(result);
    if !cmp.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "Comparison");
        for (metric, a, b, v) in cmp {
            if b.is_empty() {
                let _ = writeln!(s, "{metric} {a}: {v}");
            } else {
                let _ = writeln!(s, "{metric} {a}\u{2192}{b}: {v}%");
            }
        }
    }
    s
}

fn csv(result: &RunResult) -> String {
    let mut s = String::new();
    for (i, (tier, rows)) in tier_rows(result).into_iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        s.push_str("tier,row,total_ws,power_w,data,send_rate_ms,samples\n");
        for (label, c) in rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                tier.label(),
                label,
                c.total,
                c.power,
                c.data,
                c.rate,
                c.samples
            );
        }
    }
    let cmp = comparison_lines(result);
    if !cmp.is_empty() {
        s.push('\n');
        s.push_str("metric,from,to,value\n");
        for (metric, a, b, v) in cmp {
            let _ = writeln!(s, "{metric},{a},{b},{v}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_experiment, ExperimentConfig, TraceSource};
    use crate::trace::TraceSpec;

    fn result() -> RunResult {
        let cfg = ExperimentConfig {
            trace: TraceSource::Generated {
                profile: "custom".into(),
                spec: TraceSpec {
                    activity_fraction: 0.05,
                    fall_count: 1,
                    ..TraceSpec::default()
                },
            },
            runs: 2,
            ..ExperimentConfig::reference(11)
        };
        run_experiment(&cfg).unwrap()
    }

    #[test]
    fn table_layout() {
        let r = result();
        let t = emit_report(&r, ReportFormat::Table);
        for needle in ["Tier 1", "Tier 2", "Tier 3", "Run1", "Run2", "max", "min", "average"] {
            assert!(t.contains(needle), "missing {needle}\n{t}");
        }
        let pct = r.comparison.as_ref().unwrap().pair(Tier::Tier1, Tier::Tier2).unwrap().power_reduction_pct;
        assert!(t.contains(&format!("power reduction T1\u{2192}T2: {pct:.2}%")), "{t}");
        assert_eq!(t, emit_report(&r, ReportFormat::Table));
    }

    #[test]
    fn csv_blocks() {
        let r = result();
        let c = emit_report(&r, ReportFormat::Csv);
        let headers = c.lines().filter(|l| l.starts_with("tier,row,")).count();
        assert_eq!(headers, 3);
        let t1_avg = c.lines().find(|l| l.starts_with("1,average,")).unwrap();
        let avg = &r.summaries[&Tier::Tier1].average;
        assert!(t1_avg.contains(&format!("{:.4}", avg.power_w)));
        assert!(c.contains("metric,from,to,value\n"));
    }

    #[test]
    fn format_parse() {
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use cmg_core::experiment::{Artifact, CaseStudySummary, MethodRun, ResultRow, Sweep};
use cmg_core::gam::write_archive;
use cmg_core::GameSpec;
use serde_json::json;

use crate::Failure;

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row).context("writing results row")?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Failure> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes `strategy-<seed>.json` and, for trained generators,
/// `netparams-<seed>.bin`.
pub fn write_strategy(dir: &Path, game: &GameSpec, run: &MethodRun) -> Result<(), Failure> {
    let strategy = match &run.artifact {
        Artifact::Table(dump) => {
            let mut v = serde_json::to_value(dump.as_ref()).context("encoding strategy table")?;
            v["kind"] = json!("table");
            v
        }
        Artifact::Generator(result) => {
            let name = format!("netparams-{}.bin", run.seed);
            let path = dir.join(&name);
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_archive(result, BufWriter::new(file))?;
            json!({
                "kind": "generator",
                "archive": name,
                "conditional": result.generator.conditional,
                "final_loss": result.final_loss,
                "iterations": result.loss_history.len(),
            })
        }
        Artifact::FixedMask { mask, masked } => json!({
            "kind": "fixed-mask",
            "mask": mask,
            "masked": masked,
        }),
    };
    let doc = json!({
        "method": run.method.name(),
        "seed": run.seed,
        "n": game.n(),
        "m": game.m,
        "num_exploits": game.num_exploits(),
        "runtime_seconds": run.runtime_seconds,
        "evaluation": run.report,
        "strategy": strategy,
    });
    write_json(&dir.join(format!("strategy-{}.json", run.seed)), &doc)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn losses<'a>(rows: impl Iterator<Item = &'a ResultRow>) -> Vec<f64> {
    rows.filter_map(|r| r.defender_loss).collect()
}

pub fn print_summary(rows: &[ResultRow]) {
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.dedup();
    for m in methods {
        let xs = losses(rows.iter().filter(|r| r.method == m));
        if xs.is_empty() {
            continue;
        }
        let (mean, std) = mean_std(&xs);
        say!("{m}: mean defender loss {mean:.4} ± {std:.4} over {} seed(s)", xs.len());
    }
}

pub fn print_sweep(sweep: &Sweep, rows: &[ResultRow]) {
    say!(
        "{:>12} {:>14} {:>10} {:>10} {:>6}",
        sweep.axis.name(),
        "method",
        "mean",
        "std",
        "ok"
    );
    for &v in &sweep.values {
        let params = sweep
            .axis
            .apply(&sweep.base, v)
            .expect("values were validated by the sweep");
        for method in &sweep.methods {
            let cell: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| {
                    r.method == method.name()
                        && r.n == params.n
                        && r.m == params.m
                        && r.num_exploits == params.num_exploits
                        && r.c == params.cost
                })
                .collect();
            let xs = losses(cell.iter().copied());
            let (mean, std) = if xs.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                mean_std(&xs)
            };
            say!(
                "{v:>12} {:>14} {mean:>10.4} {std:>10.4} {:>3}/{}",
                method.name(),
                xs.len(),
                cell.len()
            );
        }
    }
}

pub fn print_case_study(game: &GameSpec, summaries: &[CaseStudySummary]) {
    if summaries.is_empty() {
        return;
    }
    let k = summaries.len() as f64;
    say!(
        "\nattribute masking probability (mean over {} seed(s))",
        summaries.len()
    );
    for i in 0..game.joint_len() {
        let p = summaries.iter().map(|s| s.masked_probability[i]).sum::<f64>() / k;
        let role = game
            .schema
            .role(i % game.n())
            .and_then(|r| serde_json::to_value(r).ok())
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        say!("  {i:>3} {role:<8} {p:.3}");
    }
    let mut freqs: Vec<(usize, f64)> = summaries[0]
        .exploit_frequencies
        .iter()
        .map(|&(e, _)| {
            let f = summaries.iter().map(|s| s.exploit_frequencies[e - 1].1).sum::<f64>() / k;
            (e, f)
        })
        .collect();
    freqs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    say!("\nexploit selection probability (mean over seeds)");
    for (e, f) in freqs {
        say!("  exploit {e:>2} {f:.4}");
    }
    let tops: Vec<String> = summaries
        .iter()
        .map(|s| format!("{}:{}", s.seed, s.top_exploit))
        .collect();
    say!("\ntop exploit per seed (seed:exploit) {}", tops.join(" "));
}

//! Plot-ready exports and terminal summary for a finished or partial run.

use std::fs;
use std::path::Path;

use bal_core::al::RoundReport;
use bal_core::metrics::write_confusion_csv;
use bal_core::{Error, Result};

use crate::config::ConfigFile;
use crate::runner::read_reports;

/// Reads `<run_dir>/reports.jsonl`, writes series/recall/confusion CSVs under
/// `<run_dir>/report/`, and prints a summary table. Corrupt records fail the
/// command after being listed; a shorter-than-configured run only warns.
pub fn cmd_report(run_dir: &Path) -> Result<()> {
    let reports_path = run_dir.join("reports.jsonl");
    if !reports_path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} has no reports.jsonl", run_dir.display()),
        )));
    }
    let reports = read_reports(&reports_path)?;
    if reports.is_empty() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("{} holds no completed rounds", reports_path.display()),
        )));
    }

    if let Some(expected) = expected_rounds(run_dir) {
        if reports.len() < expected {
            println!(
                "warning: partial run, {} of {} rounds completed",
                reports.len(),
                expected
            );
        }
    }

    let out = run_dir.join("report");
    fs::create_dir_all(&out)?;
    write_series(&out, &reports)?;
    write_recalls(&out, &reports)?;
    for r in &reports {
        write_confusion_csv(&out.join(format!("confusion_round_{}.csv", r.round)), &r.confusion)?;
    }
    print_table(&reports);
    println!("report written to {}", out.display());
    Ok(())
}

fn expected_rounds(run_dir: &Path) -> Option<usize> {
    let text = fs::read_to_string(run_dir.join("config.resolved")).ok()?;
    let file: ConfigFile = toml::from_str(&text).ok()?;
    Some(file.loop_.rounds + 1)
}

fn write_series(out: &Path, reports: &[RoundReport]) -> Result<()> {
    let mut text = String::from(
        "round,labeled_size,pool_size,train_loss,eval_loss,eval_accuracy,test_loss,test_accuracy,pool_shortfall\n",
    );
    for r in reports {
        text.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.round,
            r.labeled_size,
            r.pool_size,
            r.train_loss,
            r.eval_loss,
            r.eval_accuracy,
            r.test_loss,
            r.test_accuracy,
            r.pool_shortfall
        ));
    }
    fs::write(out.join("series.csv"), text)?;
    Ok(())
}

/// Per-class recall per round; `NA` when a class has no true examples.
fn write_recalls(out: &Path, reports: &[RoundReport]) -> Result<()> {
    let mut text = String::from("round,class,recall\n");
    for r in reports {
        for (class, recall) in r.confusion.per_class_recall().into_iter().enumerate() {
            match recall {
                Some(v) => text.push_str(&format!("{},{class},{v:.6}\n", r.round)),
                None => text.push_str(&format!("{},{class},NA\n", r.round)),
            }
        }
    }
    fs::write(out.join("recall.csv"), text)?;
    Ok(())
}

fn print_table(reports: &[RoundReport]) {
    println!("round  labeled   pool  eval_acc  test_acc  test_loss");
    for r in reports {
        println!(
            "{:>5}  {:>7}  {:>5}  {:>8.4}  {:>8.4}  {:>9.4}",
            r.round, r.labeled_size, r.pool_size, r.eval_accuracy, r.test_accuracy, r.test_loss
        );
    }
    let last = reports.last().expect("non-empty");
    println!("final-round per-class recall:");
    for (class, recall) in last.confusion.per_class_recall().into_iter().enumerate() {
        match recall {
            Some(v) => println!("  class {class}: {v:.4}"),
            None => println!("  class {class}: no true examples"),
        }
    }
}

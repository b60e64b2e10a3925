//! Trains the linear classifier on the bundled sentiment corpus and prints
//! the method-by-metric matrix with per-column ranks.

use attraudit_core::attribution::Method;
use attraudit_core::corpus::bundled_mini_sentiment;
use attraudit_core::infill::build_infill_model;
use attraudit_core::linear::{train_linear_classifier, LinearConfig};
use attraudit_core::perturb::{metric_matrix, MatrixOptions};

fn main() {
    let split = bundled_mini_sentiment();
    let (model, report) = train_linear_classifier(&split.train, &split.dev, &LinearConfig::default()).unwrap();
    println!("dev accuracy {:.4}", report.heldout_accuracy);
    let infill = build_infill_model(&split.train, 2, 20).unwrap();
    let m = metric_matrix(&model, &split.dev, &Method::ALL, Some(&infill), &MatrixOptions::default()).unwrap();
    print!("{:>10}", "method");
    for c in &m.columns {
        print!("{:>14}", c.name);
    }
    println!();
    for (i, method) in m.methods.iter().enumerate() {
        print!("{:>10}", method.name());
        for c in 0..m.columns.len() {
            print!("{:>14}", format!("{:.4} ({})", m.cells[i][c], m.rank(i, c)));
        }
        println!();
    }
    println!("rank reversal: {}", m.has_rank_reversal());
}

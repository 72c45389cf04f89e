//! The file-based workflow: generate a corpus, validate its manifest, run
//! it and read the report. The same steps are available as
//! `gmixer synth`, `gmixer validate` and `gmixer run`.
//!
//! Run: `cargo run --release --example end_to_end_manifest [out_dir]`

use std::path::PathBuf;

use gmixer::cli::{cmd_run, cmd_validate, RunOverrides};
use gmixer::synth::{generate, LambdaDist, SynthSpec};
use gmixer::EvalReport;

fn main() {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gmixer-e2e"));
    let spec = SynthSpec::new(
        64,
        500,
        100,
        0.05,
        LambdaDist::Uniform {
            low: 0.65,
            high: 0.95,
        },
        42,
    );
    let manifest = generate(&spec)
        .and_then(|c| c.write(&dir))
        .expect("corpus written");
    println!("manifest: {}", manifest.display());

    let report = cmd_validate(&manifest);
    println!("validate: {} issue(s)", report.issues.len());

    let summary = match cmd_run(&manifest, &RunOverrides::default()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("run failed: {e}");
            std::process::exit(e.exit_code());
        }
    };
    println!("rankings: {}", summary.rankings_path.display());
    let report_path = summary.report_path.expect("manifest names ground truth");
    let report: EvalReport = serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    println!("report:   {}", report_path.display());
    for (metric, by_k) in &report.per_k {
        let cells: Vec<String> = by_k.iter().map(|(k, v)| format!("@{k} {v:.3}")).collect();
        println!("  {metric:<14} {}", cells.join("  "));
    }
}

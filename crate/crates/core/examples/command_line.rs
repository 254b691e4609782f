//! The full command-line workflow, run in-process in a temporary directory:
//! gen-synth, train-source, adapt, eval and grad-check.

fn main() {
    let dir = std::env::temp_dir().join("dtml-cli-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let p = |name: &str| dir.join(name).display().to_string();
    let files = [
        "--source-csv", &p("source.csv"),
        "--target-csv", &p("target.csv"),
        "--truth-csv", &p("truth.csv"),
        "--loss-out", &p("loss.csv"),
    ]
    .map(String::from);
    let steps: Vec<Vec<String>> = vec![
        vec!["gen-synth".into()],
        vec!["train-source".into(), "--model-out".into(), p("source.json")],
        vec!["adapt".into(), "--model-in".into(), p("source.json"), "--model-out".into(), p("adapted.json"),
             "--diag-out".into(), p("diag.csv"), "--monitor-truth".into(), "true".into()],
        vec!["eval".into(), "--model-in".into(), p("adapted.json"), "--far".into(), "0.01,0.1".into(),
             "--report-out".into(), p("report.json"), "--hist-out".into(), p("hist.csv")],
        vec!["grad-check".into()],
    ];
    for step in steps {
        let args = std::iter::once("dtml".to_string()).chain(step.clone()).chain(files.clone());
        let code = dtml::cli::run(args, &mut std::io::stdout(), &mut std::io::stderr());
        println!("  -> dtml {} exited {code}", step[0]);
    }
    println!("artifacts in {}", dir.display());
}

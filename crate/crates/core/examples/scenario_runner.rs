use commitlab::scenario::{parse_scenario, run_scenario, Format, RunOptions};

const SCENARIO: &str = r#"{
  "scenario": "inline-simple",
  "description": "Simple attack, checks on the designated attestor",
  "game": { "kind": "simple", "committee_size": 4, "boost": 2 },
  "checks": [
    { "check": "matrix" },
    { "check": "nash", "profile": "simple.compliant-all" },
    { "check": "best_response", "player": "v38@2:attestor" },
    { "check": "dominance", "player": "v38@2:attestor", "action": { "vote": { "target": "compliant_tip", "release": "on_time" } } }
  ]
}"#;

fn main() {
    let file = match parse_scenario(SCENARIO) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    };
    match run_scenario(&file, &RunOptions::default()) {
        Ok(report) => print!("{}", report.render(Format::Text)),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}

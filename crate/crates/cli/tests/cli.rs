use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn hc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn hc")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn feeder_spec() -> Value {
    json!({"feeder_id": "T", "section_count": 30, "peak_mw": 1.5, "min_mw": 0.3,
           "conductor_miles": 5.0, "customer_count": 60, "seed": 3})
}

fn write(dir: &Path, name: &str, v: &Value) {
    std::fs::write(dir.join(name), serde_json::to_string_pretty(v).unwrap()).unwrap();
}

#[test]
fn gen_feeder_then_solve() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "spec.json", &feeder_spec());
    let o = hc(&["gen-feeder", "--spec", "spec.json", "--out", "net.json"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = hc(&["solve", "--network", "net.json", "--interval", "7/WD/17", "--ev", "0.2"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["converged"], true);
    assert_eq!(v["interval"], "7/WD/17");
    assert!(v["demand_kw"].as_f64().unwrap() > 0.0);
    // same spec, same bytes
    let o = hc(&["gen-feeder", "--spec", "spec.json"], tmp.path());
    assert_eq!(o.stdout, std::fs::read(tmp.path().join("net.json")).unwrap());
}

#[test]
fn diverging_solve_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "spec.json", &feeder_spec());
    assert!(hc(&["gen-feeder", "--spec", "spec.json", "--out", "net.json"], tmp.path()).status.success());
    let mut net: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("net.json")).unwrap()).unwrap();
    for l in net["loads"].as_array_mut().unwrap() {
        let kw = l["peak_kw"].as_f64().unwrap();
        l["peak_kw"] = json!(kw * 200.0);
    }
    write(tmp.path(), "heavy.json", &net);
    let o = hc(&["solve", "--network", "heavy.json", "--interval", "P90/17"], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn run_and_report_with_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "network": {"generate": {"feeders": [
            feeder_spec(),
            {"feeder_id": "U", "section_count": 20, "peak_mw": 1.0, "min_mw": 0.2,
             "conductor_miles": 4.0, "customer_count": 40, "seed": 4}
        ]}},
        "output_dir": "bundle",
        "seed": 9,
        "regimes": ["classical"],
        "configurations": "base",
        "scenarios": [{"pv_level": 0.2, "ev_level": 0.0}]
    });
    write(tmp.path(), "study.json", &cfg);
    let o = hc(&["run", "--config", "study.json"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("bundle/manifest.json").exists());

    let o = hc(&["report", "--kind", "limits", "--bundle", "bundle"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("bundle/reports/limits.csv").exists());

    // diff needs opflex cells this bundle does not have
    let o = hc(&["report", "--kind", "diff", "--bundle", "bundle"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("opflex"), "{}", stderr(&o));

    let o = hc(&["report", "--kind", "nope", "--bundle", "bundle"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("study.json"),
        "{\n  \"network\": \"net.json\",\n  \"output_dir\": \"out\",\n  \"sed\": 1\n}\n",
    )
    .unwrap();
    let o = hc(&["run", "--config", "study.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 4") && e.contains("sed"), "{e}");
}

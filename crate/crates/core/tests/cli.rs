use std::process::Command;

fn afem() -> Command {
    Command::new(env!("CARGO_BIN_EXE_afem"))
}

#[test]
fn run_then_rates() {
    let dir = tempfile::tempdir().unwrap();
    let out = afem()
        .args(["run", "--domain", "zshape", "--theta", "0.5", "--max-elements", "20000", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let name = "zshape_t5e-1_a1e-2_p1e-2";
    for f in [format!("{name}.csv"), format!("{name}.meta"), "summary.csv".into(), "eta_vs_n.csv".into()] {
        assert!(dir.path().join(&f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join(format!("{name}.csv"))).unwrap();
    assert!(csv.starts_with("l,k,j,step,nT,eta,alg_inc,pic_inc,cumcost,alg_stop,pic_stop\n"));

    let rates = afem().args(["rates", "--assert", "--in"]).arg(dir.path()).output().unwrap();
    let text = String::from_utf8_lossy(&rates.stdout);
    assert!(rates.status.success(), "{text}");
    assert!(text.contains(name) && text.contains("ok"));

    // no measured slope matches to six digits
    let tight = afem().args(["rates", "--assert", "--tol-n", "1e-6", "--in"]).arg(dir.path()).output().unwrap();
    assert_eq!(tight.status.code(), Some(2));
}

#[test]
fn diagnostics_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = afem()
        .args(["run", "--domain", "lshape", "--max-elements", "500", "--diagnostics", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("measured q_alg"));
    let csv = std::fs::read_to_string(dir.path().join("lshape_t5e-1_a1e-2_p1e-2.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with(",err,delta,alg_err"));
}

#[test]
fn sweep_writes_every_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("grid.txt");
    std::fs::write(&spec, "# small grid\nname = lshape\ntheta = 0.3, 0.6\nlambda_alg = 0.01\nlambda_pic = 0.01\nmax_elements = 800\n").unwrap();
    let out = afem().args(["sweep", "--spec"]).arg(&spec).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("o/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(dir.path().join("o/lshape_t3e-1_a1e-2_p1e-2.csv").exists());
    assert!(dir.path().join("o/lshape_t6e-1_a1e-2_p1e-2.csv").exists());
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = afem().args(["run", "--domain", "circle", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    let out = afem().args(["run", "--domain", "zshape", "--theta", "1.5", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta"));
}

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trefftz-dd"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("trefftz-dd-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn lshape_writes_table() {
    let out = scratch("lshape");
    let st = bin()
        .args(["lshape", "--strategy", "edge", "--p", "1", "--levels", "1", "--pitch", "0.05", "--grade", "1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let csv = std::fs::read_to_string(out.join("lshape_edge_p1.csv")).unwrap();
    assert!(csv.starts_with("level,N,n_dofs,H,dim,l2_rel,h1_rel,eoc_l2,eoc_h1"));
    assert_eq!(csv.lines().count(), 3);
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn solve_writes_histories() {
    let out = scratch("solve");
    let st = bin()
        .args(["solve", "--grid", "3", "3", "--pitch", "0.05", "--grade", "1", "--overlap", "min,h20"])
        .args(["--method", "gmres", "--tol", "1e-8", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    for name in ["gmres_trefftz_N9_ovmin_p1_r0.csv", "gmres_trefftz_N9_ovh20_p1_r0.csv", "summary.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let h = std::fs::read_to_string(out.join("gmres_trefftz_N9_ovmin_p1_r0.csv")).unwrap();
    assert!(h.starts_with("iter,res_norm,alg_err_L2,alg_err_H1,full_err_L2,full_err_H1\n"));
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn config_file_is_accepted() {
    let out = scratch("config");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("run.json");
    let json = format!(
        r#"{{"experiment":"scalability","out":{:?},"seeds":[2],"grids":[1,2],
            "urban":{{"seed":0,"extent":20.0,"n_buildings":2,"n_walls":2,"pitch":0.625}}}}"#,
        out.join("res")
    );
    std::fs::write(&cfg, json).unwrap();
    let st = bin().arg("--config").arg(&cfg).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let csv = std::fs::read_to_string(out.join("res/scalability.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2 * 2);
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn validation_errors_exit_with_two() {
    let out = scratch("invalid");
    let st = bin().args(["lshape", "--p", "3", "--out"]).arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    let st = bin().args(["solve", "--geometry", "/nonexistent.json", "--pitch", "0.1", "--out"]).arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    let st = bin().args(["solve", "--overlap", "wide", "--out"]).arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    let st = bin().output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}

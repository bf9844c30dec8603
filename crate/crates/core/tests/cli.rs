use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infinifree"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn setup() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    let w = |name: &str, s: &str| std::fs::write(d.path().join(name), s).unwrap();
    w("delta.json", r#"{"kind":"atomic","atoms":[[0,1,0]]}"#);
    w("sc.json", r#"{"kind":"semicircle","mean":0,"variance":1}"#);
    w("bern.json", r#"{"kind":"atomic","atoms":[[1,0.5,0.25],[-1,0.5,-0.25]]}"#);
    d
}

#[test]
fn law_show_point_mass() {
    let d = setup();
    let o = bin(&["law", "show", "--law", "delta.json", "--z", "0+2i"], d.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "z_re,z_im,G_re,G_im,g_re,g_im\n0,2,0,-0.5,0,0\n");
}

#[test]
fn convolve_semicircles_matches_closed_form() {
    let d = setup();
    let o = bin(
        &["convolve", "--x", "sc.json", "--y", "sc.json", "--grid", "-2:2:5", "--imag", "0.3"],
        d.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(
        lines.next().unwrap(),
        "z_re,z_im,G_re,G_im,g_re,g_im,omega1_re,omega1_im,omega2_re,omega2_im,resF,iters"
    );
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let z = num_complex::Complex64::new(f[0], f[1]);
        let g = (z - (z * z - 8.0).sqrt()) / 4.0;
        let g = if g.im > 0.0 { (z + (z * z - 8.0).sqrt()) / 4.0 } else { g };
        assert!((g - num_complex::Complex64::new(f[2], f[3])).norm() < 1e-10, "{line}");
        assert_eq!((f[4], f[5]), (0.0, 0.0));
    }
}

#[test]
fn invalid_grid_exits_2_without_output() {
    let d = setup();
    let o = bin(
        &["convolve", "--x", "sc.json", "--y", "sc.json", "--grid", "0:1:0", "--output", "out.csv"],
        d.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!d.path().join("out.csv").exists());
    let o = bin(&["law", "show", "--law", "missing.json", "--z", "i"], d.path());
    assert_eq!(o.status.code(), Some(2));
    let o = bin(&["frobnicate"], d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stalled_solver_exits_3_without_output() {
    let d = setup();
    let o = bin(
        &[
            "convolve", "--x", "sc.json", "--y", "bern.json", "--z", "0+1e-6i", "--tol", "1e-14", "--output",
            "out.csv",
        ],
        d.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(!d.path().join("out.csv").exists());
}

#[test]
fn rmt_verify_output_is_reproducible() {
    let d = setup();
    let args = ["rmt-verify", "--ensemble", "gue", "--spike", "2", "--N", "128", "--trials", "40", "--z", "0+3i", "--seed", "7"];
    let a = bin(&args, d.path());
    let b = bin(&args, d.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["g_hat", "prediction", "sigma_distance", "std_err"]);
    assert!(v["sigma_distance"].as_f64().unwrap() < 5.0);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let d = setup();
    std::fs::write(d.path().join("run.cfg"), "# defaults\nlaw = bern.json\norder = 2\n").unwrap();
    let o = bin(&["cumulants", "--config", "run.cfg", "--order", "3", "--output", "c.json"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("c.json")).unwrap()).unwrap();
    assert_eq!(v["n_max"], 3);
    // Bernoulli ±1: κ₂ = 1, κ₄ = -2; κ′₁ = m′₁ = 1/2
    let e = v["entries"].as_array().unwrap();
    assert_eq!(e[0]["inf"][0][0].as_f64().unwrap(), 0.5);
    assert!((e[1]["std"][0][0].as_f64().unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn freeness_check_and_ov_convolve() {
    let d = setup();
    let fam = |l: usize| {
        format!(
            r#"{{"d":1,"n_max":2,"closed":true,"labels":[{l}],"entries":[
            {{"order":2,"labels":[{l},{l}],"std":[[1,0]],"inf":[[0.5,0]]}}]}}"#
        )
    };
    std::fs::write(d.path().join("fams.json"), format!(r#"{{"families":[{},{}]}}"#, fam(0), fam(1))).unwrap();
    let o = bin(&["freeness-check", "--families", "fams.json", "--order", "4"], d.path());
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["max_violation"].as_f64().unwrap() <= 1e-12);
    assert!(String::from_utf8_lossy(&o.stderr).contains("max violation"));

    std::fs::write(
        d.path().join("x.json"),
        r#"{"d":2,"M":2.5,"K":8,"kind":"scalar_lift","laws":["sc.json","bern.json"],"entries":[[0,1],[1,0]]}"#,
    )
    .unwrap();
    std::fs::write(d.path().join("y.json"), r#"{"d":2,"M":1.5,"kind":"scalar_lift","law":"bern.json"}"#).unwrap();
    std::fs::write(d.path().join("b.json"), "[[[0,30],[0,0]],[[0,0],[0,30]]]").unwrap();
    let o = bin(&["ov-convolve", "--x", "x.json", "--y", "y.json", "--b", "b.json"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let a = v["g"][i][j][0].as_f64().unwrap();
            let b = v["g_embedded"][i][j][0].as_f64().unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn help_exits_0() {
    let d = setup();
    for sub in ["convolve", "rmt-verify", "verify-all", "ov-convolve"] {
        let o = bin(&[sub, "--help"], d.path());
        assert_eq!(o.status.code(), Some(0));
        assert!(stdout(&o).contains("Usage"));
    }
}

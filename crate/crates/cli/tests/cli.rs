//! End-to-end tests of the `gk` binary: exit codes, determinism, and
//! checkpoint round-trips.

use std::path::Path;
use std::process::Command;

fn gk() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gk"))
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn validate_builtin_library() {
    for name in ["segment", "square", "simplex", "trapezoid", "hirzebruch2"] {
        let dir = tempfile::tempdir().unwrap();
        let st = gk()
            .args(["validate", name, "--out"])
            .arg(dir.path())
            .status()
            .unwrap();
        assert!(st.success(), "{name} failed validation");
    }
}

#[test]
fn exit_code_2_on_malformed_json() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let st = gk()
        .arg("validate")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn exit_code_3_on_delzant_violation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("halfplane.json");
    std::fs::write(
        &bad,
        r#"{"dim": 2, "facets": [
            {"normal": [1, 0], "offset": 0},
            {"normal": [0, 1], "offset": 0}
        ]}"#,
    )
    .unwrap();
    let st = gk()
        .arg("validate")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(3));
    // lext on the same input also refuses with code 3
    let st = gk()
        .arg("lext")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(3));
}

#[test]
fn exit_code_4_on_inadmissible_b() {
    let dir = tempfile::tempdir().unwrap();
    let st = gk()
        .args(["solve", "square", "--B", "[[0,5],[-5,0]]", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(4));
}

#[test]
fn exit_code_5_on_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    // unreachable tolerance in a frozen degree-2 space
    let st = gk()
        .args([
            "solve",
            "square",
            "--B",
            "[[0,0.5],[-0.5,0]]",
            "--degree",
            "2",
            "--degree-cap",
            "2",
            "--tol",
            "1e-12",
            "--quad-level",
            "2",
            "--out",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(5));
}

#[test]
fn lext_simplex_value() {
    let dir = tempfile::tempdir().unwrap();
    let st = gk()
        .args(["lext", "simplex", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(st.success());
    let text = String::from_utf8(read(dir.path(), "lext.json")).unwrap();
    assert!(text.contains("\"constant_exact\": \"12\""), "{text}");
}

#[test]
fn gscal_segment_constant_csv() {
    let dir = tempfile::tempdir().unwrap();
    let st = gk()
        .args([
            "gscal", "segment", "--B", "zero", "--potential", "guillemin", "--grid", "64",
            "--out",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(st.success());
    let csv = String::from_utf8(read(dir.path(), "gscal.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "x1,kappa,min_eig_margin");
    let mut rows = 0;
    for line in lines {
        let kappa: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((kappa - 4.0).abs() < 1e-6, "{line}");
        rows += 1;
    }
    assert!(rows >= 60);
}

#[test]
fn determinism_repeated_runs_byte_identical() {
    let cases: Vec<Vec<&str>> = vec![
        vec!["lext", "trapezoid"],
        vec!["validate", "hirzebruch2"],
        vec!["stability", "simplex"],
        vec!["gscal", "square", "--B", "[[0,0.1],[-0.1,0]]", "--grid", "16"],
        vec![
            "solve", "square", "--B", "[[0,0.1],[-0.1,0]]", "--degree", "6", "--quad-level", "4",
        ],
        vec![
            "crosscheck", "square", "--B", "[[0,0.1],[-0.1,0]]", "--points", "5", "--seed", "11",
        ],
    ];
    for args in cases {
        // identical manifests: same relative --out, different working dirs
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        for d in [&d1, &d2] {
            let st = gk()
                .args(&args)
                .args(["--out", "."])
                .current_dir(d.path())
                .status()
                .unwrap();
            assert!(st.success(), "{args:?}");
        }
        for entry in std::fs::read_dir(d1.path()).unwrap() {
            let name = entry.unwrap().file_name();
            let b1 = read(d1.path(), name.to_str().unwrap());
            let b2 = read(d2.path(), name.to_str().unwrap());
            assert_eq!(b1, b2, "{args:?}: {name:?} differs between runs");
        }
    }
}

#[test]
fn potential_checkpoint_roundtrip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let st = gk()
        .args([
            "solve", "square", "--B", "[[0,0.1],[-0.1,0]]", "--degree", "6", "--quad-level", "4",
            "--out",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(st.success());
    // kappa samples from the checkpointed potential are bitwise reproducible
    let g1 = tempfile::tempdir().unwrap();
    let g2 = tempfile::tempdir().unwrap();
    let cp = dir.path().join("potential.json");
    for g in [&g1, &g2] {
        let st = gk()
            .args(["gscal", "square", "--B", "[[0,0.1],[-0.1,0]]", "--grid", "12"])
            .arg("--potential")
            .arg(&cp)
            .arg("--out")
            .arg(g.path())
            .status()
            .unwrap();
        assert!(st.success());
    }
    assert_eq!(read(g1.path(), "gscal.csv"), read(g2.path(), "gscal.csv"));
    // reloading the rewritten checkpoint reproduces it byte for byte
    let text1 = read(dir.path(), "potential.json");
    let cp2: gktoric::solver::PotentialCheckpoint =
        serde_json::from_slice(&text1).unwrap();
    let text2 = serde_json::to_vec(&cp2).unwrap();
    let cp3: gktoric::solver::PotentialCheckpoint = serde_json::from_slice(&text2).unwrap();
    for (k, v) in &cp2.coefficients {
        assert_eq!(v.to_bits(), cp3.coefficients[k].to_bits());
    }
}

#[test]
fn continuation_command_and_invariance() {
    let dir = tempfile::tempdir().unwrap();
    let st = gk()
        .args([
            "continue",
            "square",
            "--B",
            "[[0,1],[-1,0]]",
            "--t-grid",
            "0,0.1,0.2",
            "--degree",
            "8",
            "--quad-level",
            "4",
            "--out",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(st.success());
    let text = String::from_utf8(read(dir.path(), "continue.json")).unwrap();
    assert!(text.contains("\"ceiling\": null"));
    assert!(text.contains("\"ok\": true"));
}

#[test]
fn stability_injection_produces_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let st = gk()
        .args([
            "stability",
            "square",
            "--ell-override",
            r#"["8", "100", "0"]"#,
            "--out",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(st.success());
    let text = String::from_utf8(read(dir.path(), "stability.json")).unwrap();
    assert!(text.contains("unstable-certificate"), "{text}");
}

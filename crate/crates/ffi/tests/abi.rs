use std::ffi::{CStr, CString};
use std::ptr;

use mstat_ffi::*;

fn last_error() -> String {
    let p = mstat_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn orthant(d: usize) -> *mut MstatSet {
    let mut set = ptr::null_mut();
    assert_eq!(unsafe { mstat_set_orthant(d, &mut set) }, MstatStatus::Ok);
    set
}

fn query(
    set: *const MstatSet,
    z: &[f64],
    g: &[f64],
    zeta: &[f64],
    eta: &[f64],
    oracle: bool,
) -> MstatMembership {
    let mut out = MstatMembership::NotMember;
    let f = if oracle {
        mstat_coderivative_member_oracle
    } else {
        mstat_coderivative_member
    };
    let st = unsafe {
        f(
            set,
            z.as_ptr(),
            g.as_ptr(),
            zeta.as_ptr(),
            eta.as_ptr(),
            1e-9,
            &mut out,
        )
    };
    assert_eq!(st, MstatStatus::Ok, "{}", last_error());
    out
}

#[test]
fn orthant_queries_match_the_oracle() {
    let set = orthant(1);
    assert_eq!(unsafe { mstat_set_dim(set) }, 1);
    for (zeta, eta, expected) in [
        (-2.0, -3.0, MstatMembership::Member),
        (1.0, 1.0, MstatMembership::NotMember),
        (0.0, 4.0, MstatMembership::Member),
    ] {
        assert_eq!(query(set, &[0.0], &[0.0], &[zeta], &[eta], false), expected);
        assert_eq!(query(set, &[0.0], &[0.0], &[zeta], &[eta], true), expected);
    }
    assert_eq!(
        query(set, &[1.0], &[1.0], &[0.0], &[0.0], false),
        MstatMembership::EmptyCoderivative
    );
    unsafe { mstat_set_free(set) };
}

#[test]
fn polyhedron_handle_agrees_with_simplex() {
    // {z ≥ 0, z1 + z2 ≤ 1} written out row by row.
    let a = [-1.0, 0.0, 0.0, -1.0, 1.0, 1.0];
    let b = [0.0, 0.0, 1.0];
    let mut poly = ptr::null_mut();
    let mut simplex = ptr::null_mut();
    unsafe {
        assert_eq!(
            mstat_set_polyhedron(a.as_ptr(), b.as_ptr(), 3, 2, &mut poly),
            MstatStatus::Ok
        );
        assert_eq!(mstat_set_simplex(2, &mut simplex), MstatStatus::Ok);
    }
    let (z, g) = ([1.0, 0.0], [-1.0, 0.0]);
    for zeta in [[-1.0, 0.0], [1.0, 1.0], [0.0, -2.0]] {
        for eta in [[0.0, 0.0], [1.0, -1.0], [0.0, 1.0]] {
            assert_eq!(
                query(poly, &z, &g, &zeta, &eta, false),
                query(simplex, &z, &g, &zeta, &eta, false)
            );
        }
    }
    unsafe {
        mstat_set_free(poly);
        mstat_set_free(simplex);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut set = ptr::null_mut();
    assert_eq!(
        unsafe { mstat_set_orthant(0, &mut set) },
        MstatStatus::InvalidInput
    );
    assert!(last_error().contains("positive"));

    let mut out = MstatMembership::NotMember;
    let v = [0.0];
    let st = unsafe {
        mstat_coderivative_member(
            ptr::null(),
            v.as_ptr(),
            v.as_ptr(),
            v.as_ptr(),
            v.as_ptr(),
            1e-9,
            &mut out,
        )
    };
    assert_eq!(st, MstatStatus::NullPointer);
    assert!(last_error().contains("set"));

    let set = orthant(1);
    // An infeasible z is off the graph rather than an error.
    assert_eq!(
        query(set, &[-1.0], &[0.0], &[0.0], &[0.0], false),
        MstatMembership::EmptyCoderivative
    );
    let st = unsafe {
        mstat_coderivative_member(
            set,
            v.as_ptr(),
            ptr::null(),
            v.as_ptr(),
            v.as_ptr(),
            1e-9,
            &mut out,
        )
    };
    assert_eq!(st, MstatStatus::NullPointer);
    assert!(last_error().contains('g'));
    unsafe { mstat_set_free(set) };

    // 0·z ≤ −1 describes the empty set.
    let mut poly = ptr::null_mut();
    let st = unsafe { mstat_set_polyhedron([0.0].as_ptr(), [-1.0].as_ptr(), 1, 1, &mut poly) };
    assert_eq!(st, MstatStatus::InvalidInput);
    assert!(poly.is_null());
    assert!(last_error().contains("empty"));
    unsafe { mstat_set_free(ptr::null_mut()) };
}

const PROBLEM: &str = r#"{
  "type": "spo_portfolio",
  "sigma": [[1.0, 0.2], [0.2, 1.0]],
  "lambda": 5.0,
  "samples": [{"x": [1.0], "r": [0.3, 0.2]}, {"x": [2.0], "r": [0.6, 0.4]}]
}"#;

fn certificate(theta: [f64; 2]) -> String {
    let cert = mstat::portfolio::realizable_certificate(
        &mstat::portfolio::LinearPredictor::new(vec![theta.to_vec()]).unwrap(),
        &match mstat::io::parse_json::<mstat::io::ProblemFile>(PROBLEM, "p").unwrap() {
            mstat::io::ProblemFile::SpoPortfolio(f) => f.instance,
            _ => unreachable!(),
        },
    )
    .unwrap();
    serde_json::to_string(&cert).unwrap()
}

fn verify(cert: &str, mode: MstatMode) -> (MstatStatus, i32, Option<String>) {
    let p = CString::new(PROBLEM).unwrap();
    let c = CString::new(cert).unwrap();
    let mut pass = -1;
    let mut report = ptr::null_mut();
    let st = unsafe {
        mstat_verify_json(
            p.as_ptr(),
            c.as_ptr(),
            mode,
            1e-8,
            1e-6,
            &mut pass,
            &mut report,
        )
    };
    let text = (!report.is_null()).then(|| {
        let s = unsafe { CStr::from_ptr(report) }
            .to_string_lossy()
            .into_owned();
        unsafe { mstat_string_free(report) };
        s
    });
    (st, pass, text)
}

#[test]
fn verify_json_round_trip() {
    let (st, pass, report) = verify(&certificate([0.3, 0.2]), MstatMode::Convex);
    assert_eq!(st, MstatStatus::Ok, "{}", last_error());
    assert_eq!(pass, 1);
    let report: serde_json::Value = serde_json::from_str(&report.unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));

    // The same decisions are no longer optimal under another predictor.
    let mut c: serde_json::Value = serde_json::from_str(&certificate([0.3, 0.2])).unwrap();
    c["theta"] = serde_json::json!([[0.4, 0.2]]);
    let (st, pass, _) = verify(&c.to_string(), MstatMode::Convex);
    assert_eq!(st, MstatStatus::Ok);
    assert_eq!(pass, 0);

    let (st, _, _) = verify(&certificate([0.3, 0.2]), MstatMode::Penalized);
    assert_eq!(st, MstatStatus::InvalidInput, "penalized mode needs mu");
    let (st, _, _) = verify("{not json", MstatMode::Convex);
    assert_eq!(st, MstatStatus::Parse);
    assert!(last_error().contains("certificate"));
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(mstat_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/mstat.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in [
        "mstat_coderivative_member",
        "mstat_verify_json",
        "mstat_set_free",
        "mstat_last_error",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint main(void) {{ MstatSet *s = 0; return mstat_set_orthant(2, &s) == MSTAT_STATUS_OK; }}\n"
        ),
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| {
            std::process::Command::new(c)
                .arg("--version")
                .output()
                .is_ok()
        })
        .ok_or(())
}

use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use cxmap::extension::{ExtensionInstance, SubspaceMap};
use cxmap::generate::{self, GenerateKind, GenerateParams, Generated};
use cxmap::seminorm::{BaseNorm, SeminormSpec, VectorSpaceModel};
use cxmap::Grid;
use cxmap_ffi::*;

fn field_json(kind: GenerateKind, nodes: usize) -> CString {
    let params = GenerateParams {
        kind,
        blocks: vec![2, 1],
        nodes,
        ..GenerateParams::default()
    };
    match generate::generate(&params).unwrap() {
        Generated::Field(f) => CString::new(serde_json::to_string(&f).unwrap()).unwrap(),
        Generated::Extension(_) => unreachable!(),
    }
}

fn extension_json(seed: u64) -> CString {
    let params = GenerateParams {
        kind: GenerateKind::Extension,
        seed,
        nodes: 20,
        dim: 3,
        subspace_dim: 1,
        ..GenerateParams::default()
    };
    match generate::generate(&params).unwrap() {
        Generated::Extension(e) => CString::new(serde_json::to_string(&e).unwrap()).unwrap(),
        Generated::Field(_) => unreachable!(),
    }
}

fn last_error() -> String {
    let p = cxm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn decompose_round_trip() {
    let json = field_json(GenerateKind::Crossing, 30);
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(cxm_decompose(json.as_ptr(), &mut h), CxmStatus::Ok);
        assert!(cxm_last_error().is_null());
        let mut nodes = 0;
        assert_eq!(cxm_decomposition_nodes(h, &mut nodes), CxmStatus::Ok);
        assert_eq!(nodes, 30);
        for t in 0..nodes {
            let (mut total, mut plus, mut minus) = (0.0, 0.0, 0.0);
            assert_eq!(cxm_decomposition_norms(h, t, &mut total, &mut plus, &mut minus), CxmStatus::Ok);
            assert!((total - plus - minus).abs() <= 1e-10 * total.max(1.0));
        }
        let (mut rec, mut add, mut eig) = (1.0, 1.0, -1.0);
        assert_eq!(cxm_decomposition_residuals(h, &mut rec, &mut add, &mut eig), CxmStatus::Ok);
        assert!(rec <= 1e-10 && add <= 1e-10 && eig >= -1e-10);

        let mut s = ptr::null_mut();
        assert_eq!(cxm_decomposition_part_json(h, CxmPart::Minus, &mut s), CxmStatus::Ok);
        let minus_json = CStr::from_ptr(s).to_owned();
        cxm_string_free(s);
        // The negative part is itself a positive field with zero negative part.
        let mut h2 = ptr::null_mut();
        assert_eq!(cxm_decompose(minus_json.as_ptr(), &mut h2), CxmStatus::Ok);
        for t in 0..nodes {
            let mut m = 1.0;
            assert_eq!(cxm_decomposition_norms(h2, t, ptr::null_mut(), ptr::null_mut(), &mut m), CxmStatus::Ok);
            assert!(m <= 1e-10);
        }
        cxm_decomposition_free(h2);
        cxm_decomposition_free(h);
    }
}

#[test]
fn decompose_rejects_bad_input() {
    let mut h = ptr::null_mut();
    unsafe {
        let bad = CString::new("{\"grid\": 3}").unwrap();
        assert_eq!(cxm_decompose(bad.as_ptr(), &mut h), CxmStatus::InvalidInput);
        assert!(h.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(cxm_decompose(ptr::null(), &mut h), CxmStatus::NullPointer);
        assert!(last_error().contains("field_json"));

        let json = field_json(GenerateKind::Smooth, 5);
        assert_eq!(cxm_decompose(json.as_ptr(), ptr::null_mut()), CxmStatus::NullPointer);
        assert_eq!(cxm_decompose(json.as_ptr(), &mut h), CxmStatus::Ok);
        assert_eq!(cxm_decomposition_norms(h, 5, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), CxmStatus::InvalidInput);
        assert!(last_error().contains("out of range"));
        cxm_decomposition_free(h);
        cxm_decomposition_free(ptr::null_mut());
        cxm_string_free(ptr::null_mut());
    }
}

#[test]
fn extend_verifies_and_exports() {
    let json = extension_json(7);
    let mut h = ptr::null_mut();
    unsafe {
        let status = cxm_extend(json.as_ptr(), 7, &mut h);
        assert_eq!(status, CxmStatus::Ok, "{:?}", (!cxm_last_error().is_null()).then(last_error));
        let (mut steps, mut nodes) = (0, 0);
        assert_eq!(cxm_extension_shape(h, &mut steps, &mut nodes), CxmStatus::Ok);
        assert_eq!((steps, nodes), (2, 20));

        let mut buf = vec![f64::NAN; nodes];
        assert_eq!(cxm_extension_selection(h, 1, buf.as_mut_ptr(), buf.len()), CxmStatus::Ok);
        assert!(buf.iter().all(|v| v.is_finite()));
        assert_eq!(cxm_extension_selection(h, 0, buf.as_mut_ptr(), 3), CxmStatus::InvalidInput);
        assert_eq!(cxm_extension_selection(h, 2, buf.as_mut_ptr(), buf.len()), CxmStatus::InvalidInput);

        let (mut r, mut l, mut slack, mut passes) = (1.0, 1.0, -1.0, false);
        assert_eq!(cxm_extension_check(h, &mut r, &mut l, &mut slack, &mut passes), CxmStatus::Ok);
        assert!(passes && slack >= -1e-8 && r <= 1e-8 && l <= 1e-8);

        let mut s = ptr::null_mut();
        assert_eq!(cxm_extension_result_json(h, &mut s), CxmStatus::Ok);
        let text = CStr::from_ptr(s).to_str().unwrap().to_owned();
        cxm_string_free(s);
        let result: cxmap::extension::ExtensionResult = serde_json::from_str(&text).unwrap();
        assert_eq!(result.steps[1].selection, buf);
        cxm_extension_free(h);
    }
}

#[test]
fn extend_is_deterministic() {
    let json = extension_json(3);
    let run = || unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(cxm_extend(json.as_ptr(), 11, &mut h), CxmStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(cxm_extension_result_json(h, &mut s), CxmStatus::Ok);
        let text = CStr::from_ptr(s).to_owned();
        cxm_string_free(s);
        cxm_extension_free(h);
        text
    };
    assert_eq!(run(), run());
}

#[test]
fn extend_reports_coercivity_failure() {
    let inst = ExtensionInstance {
        space: VectorSpaceModel::coordinate(2, 1, BaseNorm::l2()).unwrap(),
        phi: SubspaceMap {
            grid: Grid::unit_interval(3).unwrap(),
            values: vec![vec![1.0]; 3],
        },
        seminorm: SeminormSpec::scaled_norm(BaseNorm::l2(), 1.0),
        delta: 0.0,
        order: None,
    };
    let json = CString::new(serde_json::to_string(&inst).unwrap()).unwrap();
    let mut h = ptr::null_mut();
    let status = unsafe { cxm_extend(json.as_ptr(), 0, &mut h) };
    assert_eq!(status, CxmStatus::VerificationFailed);
    assert!(h.is_null());
    assert!(last_error().contains("coercivity failure"));
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(cxm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cxmap.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_header() {
    let lib = target_dir().join("libcxmap_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("field.json");
    std::fs::write(&input, field_json(GenerateKind::Random, 12).as_bytes()).unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new("cc")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/smoke.c"))
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).arg(&input).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("nodes 12"), "{stdout}");
    assert!(stdout.contains("bad input status 1"), "{stdout}");
}

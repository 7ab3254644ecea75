use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cxmap::cli::{CommandKind, DecomposeInstance, EnvelopeInstance, InstanceFile, VerifyInstance};
use cxmap::extension::{self, ExtensionInstance, ExtensionOptions, ExtensionResult, SubspaceMap};
use cxmap::generate::{self, GenerateKind, GenerateParams, Generated};
use cxmap::seminorm::{BaseNorm, PNorm, SeminormSpec, VectorSpaceModel};
use cxmap::{AlgebraDescriptor, Element, FunctionalRep, Grid, MapField};
use serde_json::Value;
use tempfile::TempDir;

fn cxmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cxmap")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, file: &InstanceFile) -> String {
    let path = dir.join(name);
    fs::write(&path, file.to_json().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn ramp_instance() -> InstanceFile {
    let a = AlgebraDescriptor::new(vec![1]).unwrap();
    let field = MapField::from_fn(Grid::unit_interval(21).unwrap(), a.clone(), |_, s| {
        FunctionalRep::diagonal(&a, &[s - 0.5])
    })
    .unwrap();
    InstanceFile::new(
        CommandKind::Decompose,
        &DecomposeInstance {
            field: (&field).into(),
            tests: vec![],
            delta: None,
        },
    )
    .unwrap()
}

fn coercivity_instance() -> ExtensionInstance {
    ExtensionInstance {
        space: VectorSpaceModel::coordinate(2, 1, BaseNorm::l2()).unwrap(),
        phi: SubspaceMap {
            grid: Grid::unit_interval(3).unwrap(),
            values: vec![vec![1.0]; 3],
        },
        seminorm: SeminormSpec::scaled_norm(BaseNorm::l2(), 1.0),
        delta: 0.0,
        order: None,
    }
}

fn small_extension() -> ExtensionInstance {
    let params = GenerateParams {
        kind: GenerateKind::Extension,
        seed: 4,
        nodes: 10,
        dim: 3,
        subspace_dim: 1,
        ..GenerateParams::default()
    };
    match generate::generate(&params).unwrap() {
        Generated::Extension(e) => e,
        Generated::Field(_) => unreachable!(),
    }
}

#[test]
fn decompose_ramp_succeeds() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "ramp.json", &ramp_instance());
    let out = dir.path().join("out");
    let o = cxmap(&["decompose", &inst, "--out", out.to_str().unwrap(), "--refine", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert!(r["additivity_residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(r["passes"], Value::Bool(true));
    assert_eq!(r["metadata"]["tolerances"]["residual"].as_f64(), Some(1e-10));
    let csv = fs::read_to_string(out.join("decompose.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
}

#[test]
fn tolerance_overrides_are_echoed() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "ramp.json", &ramp_instance());
    let out = dir.path().join("out");
    let o = cxmap(&["decompose", &inst, "--out", out.to_str().unwrap(), "--tol", "residual=1e-9"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&out)["metadata"]["tolerances"]["residual"].as_f64(), Some(1e-9));
    let o = cxmap(&["decompose", &inst, "--out", out.to_str().unwrap(), "--tol", "bogus=1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn coercivity_failure_exits_two() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "c.json", &InstanceFile::new(CommandKind::Extend, &coercivity_instance()).unwrap());
    let out = dir.path().join("out");
    let o = cxmap(&["extend", &inst, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("coercivity failure"));
}

#[test]
fn malformed_input_exits_one() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ \"version\": 1, \"command\": ").unwrap();
    let o = cxmap(&["decompose", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let mut v: Value = serde_json::from_str(&ramp_instance().to_json().unwrap()).unwrap();
    v["payload"]["extra"] = Value::from(1);
    fs::write(&bad, v.to_string()).unwrap();
    let o = cxmap(&["decompose", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let ramp = write(dir.path(), "ramp.json", &ramp_instance());
    let o = cxmap(&["extend", &ramp, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let o = cxmap(&["decompose", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(cxmap(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cxmap(&["--help"]).status.code(), Some(0));
}

#[test]
fn generate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = cxmap(&["generate", "--kind", "crossing", "--blocks", "2", "--seed", "9", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let text = fs::read(a.join("instance.json")).unwrap();
    assert_eq!(text, fs::read(b.join("instance.json")).unwrap());
    let file = InstanceFile::parse(std::str::from_utf8(&text).unwrap()).unwrap();
    let inst: DecomposeInstance = file.payload(CommandKind::Decompose).unwrap();
    let field = inst.field.build(1e-12).unwrap();
    let corner: Vec<f64> = (0..field.len()).map(|t| field.at(t).blocks()[0][(0, 0)].re).collect();
    let zero_crossings = corner.windows(2).filter(|w| w[0] < 0.0 && w[1] > 0.0 || w[0] > 0.0 && w[1] < 0.0).count();
    assert_eq!(zero_crossings, 1);
}

#[test]
fn generated_margin_is_measured() {
    for (c, norm) in [(0.1, PNorm::L2), (0.3, PNorm::L1), (0.45, PNorm::LInf)] {
        let params = GenerateParams {
            kind: GenerateKind::Extension,
            seed: 21,
            nodes: 12,
            dim: 4,
            subspace_dim: 2,
            margin: c,
            delta: 0.0,
            norm,
            ..GenerateParams::default()
        };
        let inst = generate::extension_instance(&params).unwrap();
        let problem = inst.problem().unwrap();
        let rb = extension::radius_bound(&problem, &inst.space.complement[0], &ExtensionOptions::default()).unwrap();
        assert!(rb.margin >= c / 2.0 && rb.margin <= 2.0 * c, "{norm:?}: margin {} for c = {c}", rb.margin);
    }
}

#[test]
fn extend_reports_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "e.json", &InstanceFile::new(CommandKind::Extend, &small_extension()).unwrap());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = cxmap(&["extend", &inst, "--seed", "3", "--oracle", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["report.json", "extend.csv", "result.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn verify_accepts_results_and_rejects_tampering() {
    let dir = TempDir::new().unwrap();
    let instance = small_extension();
    let inst = write(dir.path(), "e.json", &InstanceFile::new(CommandKind::Extend, &instance).unwrap());
    let out = dir.path().join("run");
    assert_eq!(cxmap(&["extend", &inst, "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let result: ExtensionResult = serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();

    let good = VerifyInstance::Extension {
        instance: instance.clone(),
        result: result.clone(),
        samples: 500,
    };
    let path = write(dir.path(), "v.json", &InstanceFile::new(CommandKind::Verify, &good).unwrap());
    let o = cxmap(&["verify", &path, "--out", dir.path().join("v").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let mut bad = result;
    for g in &mut bad.functionals {
        for v in g.iter_mut() {
            *v *= 3.0;
        }
    }
    let tampered = VerifyInstance::Extension {
        instance,
        result: bad,
        samples: 500,
    };
    let path = write(dir.path(), "t.json", &InstanceFile::new(CommandKind::Verify, &tampered).unwrap());
    let o = cxmap(&["verify", &path, "--out", dir.path().join("t").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_decomposition_round_trip() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "ramp.json", &ramp_instance());
    let out = dir.path().join("d");
    assert_eq!(cxmap(&["decompose", &inst, "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let plus: MapField = serde_json::from_str(&fs::read_to_string(out.join("plus.json")).unwrap()).unwrap();
    let minus: MapField = serde_json::from_str(&fs::read_to_string(out.join("minus.json")).unwrap()).unwrap();
    let field: DecomposeInstance = ramp_instance().payload(CommandKind::Decompose).unwrap();
    let v = VerifyInstance::Decomposition {
        field: field.field.clone(),
        plus: (&plus).into(),
        minus: (&minus).into(),
    };
    let path = write(dir.path(), "v.json", &InstanceFile::new(CommandKind::Verify, &v).unwrap());
    assert_eq!(cxmap(&["verify", &path, "--out", dir.path().join("v").to_str().unwrap()]).status.code(), Some(0));

    let v = VerifyInstance::Decomposition {
        field: field.field,
        plus: (&plus).into(),
        minus: (&plus).into(),
    };
    let path = write(dir.path(), "w.json", &InstanceFile::new(CommandKind::Verify, &v).unwrap());
    assert_eq!(cxmap(&["verify", &path, "--out", dir.path().join("w").to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn envelope_command_writes_stages() {
    let dir = TempDir::new().unwrap();
    let a = AlgebraDescriptor::new(vec![2]).unwrap();
    let field = generate::smooth_field(&a, Grid::unit_interval(6).unwrap(), 2).unwrap();
    let sz = Element::diagonal(&a, &[1.0, -1.0]).unwrap();
    let sx = Element::real_symmetric(&a, &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let x = Element::real_symmetric(&a, &[vec![0.3, 0.8], vec![0.8, -0.1]]).unwrap();
    let inst = EnvelopeInstance {
        field: (&field).into(),
        chain: vec![
            vec![a.unit().to_json()],
            vec![a.unit().to_json(), sz.to_json()],
            vec![a.unit().to_json(), sz.to_json(), sx.to_json()],
        ],
        x: x.to_json(),
        deltas: vec![0.2, 0.1, 0.05],
        samples: 120,
        spectral_states: true,
    };
    let path = write(dir.path(), "env.json", &InstanceFile::new(CommandKind::Envelope, &inst).unwrap());
    let out = dir.path().join("out");
    let o = cxmap(&["envelope", &path, "--oracle", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for n in 0..3 {
        assert!(out.join(format!("stage_{n}.csv")).exists());
    }
    let last = fs::read_to_string(out.join("stage_2.csv")).unwrap();
    let fx = field.evaluate(&x).unwrap();
    for (t, line) in last.lines().skip(1).enumerate() {
        let cols: Vec<f64> = line.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
        assert!((cols[0] - fx.0[t]).abs() < 1e-9 && (cols[1] - fx.0[t]).abs() < 1e-9);
    }
}

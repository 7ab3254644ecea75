//! Command-line front end: instance files in, JSON and CSV reports out.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::algebra::{BlockMatricesJson, Element};
use crate::envelope;
use crate::error::{Error, Result};
use crate::extension::{self, ExtensionInstance, ExtensionOptions, ExtensionResult};
use crate::field::{MapField, MapFieldJson};
use crate::generate::{self, GenerateKind, GenerateParams, Generated};
use crate::jordan::{self, DecompositionResult};
use crate::oracle;
use crate::tolerance::Tolerances;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "cxmap", version, about = "Jordan decomposition and extension of *-linear maps into C(X)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Seed for every sampled quantity.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of grid refinements (decompose, envelope).
    #[arg(long, global = true, default_value_t = 0)]
    pub refine: usize,
    /// Tolerance override `KEY=VAL` (tol_herm, residual, solver); repeatable.
    #[arg(long = "tol", global = true, value_name = "KEY=VAL")]
    pub tol: Vec<String>,
    /// Cross-check solver results against brute-force or dual oracles.
    #[arg(long, global = true)]
    pub oracle: bool,
    /// Report directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pointwise Jordan decomposition of a map field.
    Decompose { instance: PathBuf },
    /// Extend a dominated map from Y to the whole space.
    Extend { instance: PathBuf },
    /// LP envelopes along a chain of operator systems.
    Envelope { instance: PathBuf },
    /// Re-check a decomposition or extension result.
    Verify { instance: PathBuf },
    /// Write a seeded instance file.
    Generate {
        /// Parameter file (a `generate` instance); flags override it.
        instance: Option<PathBuf>,
        /// smooth, crossing, random, extension or balanced.
        #[arg(long)]
        kind: Option<String>,
        /// Block sizes of the algebra, e.g. `2,1`.
        #[arg(long, value_delimiter = ',')]
        blocks: Option<Vec<usize>>,
        /// Grid nodes.
        #[arg(long)]
        nodes: Option<usize>,
        /// Dimension of the ambient space (extension kinds).
        #[arg(long)]
        dim: Option<usize>,
        /// Dimension of Y.
        #[arg(long)]
        subspace_dim: Option<usize>,
        /// Domination margin c of the generated seminorm.
        #[arg(long)]
        margin: Option<f64>,
        /// Slack δ of the extension instance.
        #[arg(long)]
        delta: Option<f64>,
        /// Base norm: l1, l2 or linf.
        #[arg(long)]
        norm: Option<String>,
        /// Conjugate the crossing family by a seeded unitary.
        #[arg(long)]
        rotate: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Decompose,
    Extend,
    Envelope,
    Verify,
    Generate,
}

/// Versioned instance file; `payload` is validated against the schema of `command`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub version: u32,
    pub command: CommandKind,
    pub payload: serde_json::Value,
}

impl InstanceFile {
    pub fn new<T: Serialize>(command: CommandKind, payload: &T) -> Result<Self> {
        Ok(InstanceFile {
            version: FORMAT_VERSION,
            command,
            payload: serde_json::to_value(payload)?,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        if file.version != FORMAT_VERSION {
            return Err(Error::Instance(format!(
                "unsupported instance version {} (expected {FORMAT_VERSION})",
                file.version
            )));
        }
        Ok(file)
    }

    pub fn payload<T: for<'de> Deserialize<'de>>(&self, expected: CommandKind) -> Result<T> {
        if self.command != expected {
            return Err(Error::Instance(format!(
                "instance is for `{:?}`, not `{:?}`",
                self.command, expected
            )));
        }
        Ok(serde_json::from_value(self.payload.clone())?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeInstance {
    pub field: MapFieldJson,
    /// Elements for the continuity diagnostics; defaults to `1, h, 1 − h`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tests: Vec<BlockMatricesJson>,
    /// Run the δ-continuity check with this δ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

fn default_samples() -> usize {
    400
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeInstance {
    pub field: MapFieldJson,
    /// Operator-system bases `F₁ ⊂ F₂ ⊂ …`, each listed in full.
    pub chain: Vec<Vec<BlockMatricesJson>>,
    pub x: BlockMatricesJson,
    pub deltas: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Add the eigenvector states of every node to the sample.
    #[serde(default = "default_true")]
    pub spectral_states: bool,
}

fn default_verify_samples() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum VerifyInstance {
    Extension {
        instance: ExtensionInstance,
        result: ExtensionResult,
        #[serde(default = "default_verify_samples")]
        samples: usize,
    },
    Decomposition {
        field: MapFieldJson,
        plus: MapFieldJson,
        minus: MapFieldJson,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct Metadata {
    pub command: CommandKind,
    pub version: String,
    pub seed: u64,
    pub refine: usize,
    pub oracle: bool,
    pub tolerances: Tolerances,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    metadata: &'a Metadata,
    passes: bool,
    #[serde(flatten)]
    body: T,
}

struct Context {
    metadata: Metadata,
    out: PathBuf,
}

impl Context {
    fn write(&self, name: &str, contents: &str) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        fs::write(self.out.join(name), contents)?;
        Ok(())
    }

    fn report<T: Serialize>(&self, passes: bool, body: T) -> Result<()> {
        let report = Report {
            metadata: &self.metadata,
            passes,
            body,
        };
        self.write("report.json", &(serde_json::to_string_pretty(&report)? + "\n"))
    }
}

/// Runs the tool and returns the process exit code: 0 success, 1 input error,
/// 2 verification failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(Outcome::Pass(summary)) => {
            println!("{summary}");
            0
        }
        Ok(Outcome::Fail(summary)) => {
            eprintln!("verification failed: {summary}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_verification_failure() {
                2
            } else {
                1
            }
        }
    }
}

enum Outcome {
    Pass(String),
    Fail(String),
}

fn outcome(passes: bool, summary: String) -> Outcome {
    if passes {
        Outcome::Pass(summary)
    } else {
        Outcome::Fail(summary)
    }
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let mut tolerances = Tolerances::default();
    for t in &cli.tol {
        tolerances.set(t).map_err(Error::Instance)?;
    }
    let kind = match cli.command {
        Command::Decompose { .. } => CommandKind::Decompose,
        Command::Extend { .. } => CommandKind::Extend,
        Command::Envelope { .. } => CommandKind::Envelope,
        Command::Verify { .. } => CommandKind::Verify,
        Command::Generate { .. } => CommandKind::Generate,
    };
    let ctx = Context {
        metadata: Metadata {
            command: kind,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cli.seed.unwrap_or(0),
            refine: cli.refine,
            oracle: cli.oracle,
            tolerances,
        },
        out: cli.out.clone().unwrap_or_else(|| PathBuf::from("cxmap-report")),
    };
    match &cli.command {
        Command::Decompose { instance } => decompose(&ctx, &read_instance(instance)?.payload(kind)?),
        Command::Extend { instance } => extend(&ctx, &read_instance(instance)?.payload(kind)?),
        Command::Envelope { instance } => envelope_cmd(&ctx, &read_instance(instance)?.payload(kind)?),
        Command::Verify { instance } => verify(&ctx, &read_instance(instance)?.payload(kind)?),
        Command::Generate {
            instance,
            kind: gen_kind,
            blocks,
            nodes,
            dim,
            subspace_dim,
            margin,
            delta,
            norm,
            rotate,
        } => {
            let mut params: GenerateParams = match instance {
                Some(path) => read_instance(path)?.payload(CommandKind::Generate)?,
                None => GenerateParams::default(),
            };
            if let Some(k) = gen_kind {
                params.kind = k.parse::<GenerateKind>()?;
            }
            if let Some(s) = cli.seed {
                params.seed = s;
            }
            if let Some(b) = blocks {
                params.blocks = b.clone();
            }
            if let Some(n) = nodes {
                params.nodes = *n;
            }
            if let Some(d) = dim {
                params.dim = *d;
            }
            if let Some(k) = subspace_dim {
                params.subspace_dim = *k;
            }
            if let Some(c) = margin {
                params.margin = *c;
            }
            if let Some(d) = delta {
                params.delta = *d;
            }
            if let Some(p) = norm {
                params.norm = serde_json::from_value(serde_json::Value::String(p.clone()))
                    .map_err(|_| Error::Instance(format!("unknown norm `{p}` (l1, l2, linf)")))?;
            }
            params.rotate |= *rotate;
            generate_cmd(&ctx, &params)
        }
    }
}

fn read_instance(path: &Path) -> Result<InstanceFile> {
    InstanceFile::parse(&fs::read_to_string(path)?)
}

#[derive(Serialize)]
struct NodeNorms {
    node: usize,
    norm: f64,
    plus: f64,
    minus: f64,
}

#[derive(Serialize)]
struct DecomposeBody {
    reconstruction_residual: f64,
    additivity_residual: f64,
    min_eigenvalue: f64,
    nodes: Vec<NodeNorms>,
    #[serde(skip_serializing_if = "Option::is_none")]
    continuity: Option<jordan::ContinuityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_continuity: Option<jordan::DeltaContinuityReport>,
}

fn test_elements(field: &MapField, raw: &[BlockMatricesJson], seed: u64) -> Result<Vec<(String, Element)>> {
    if raw.is_empty() {
        return Ok(jordan::default_test_elements(field.algebra(), seed));
    }
    raw.iter()
        .enumerate()
        .map(|(i, r)| Ok((format!("x{i}"), Element::from_json(field.algebra(), r)?)))
        .collect()
}

fn decompose(ctx: &Context, inst: &DecomposeInstance) -> Result<Outcome> {
    let tol = ctx.metadata.tolerances;
    let field = inst.field.build(tol.tol_herm)?;
    let result = jordan::decompose_map(&field)?;
    let reconstruction = result.reconstruction_residual();
    let additivity = jordan::verify_norm_additivity(&result)?;
    let min_eig = result.min_eigenvalue()?;
    let tests = test_elements(&field, &inst.tests, ctx.metadata.seed)?;
    let continuity = if ctx.metadata.refine > 0 {
        Some(jordan::continuity_report(&jordan::refinement_levels(&field, ctx.metadata.refine), &tests)?)
    } else {
        None
    };
    let delta_continuity = match inst.delta {
        Some(d) => Some(jordan::delta_continuity_report(&field, d, &tests)?),
        None => None,
    };
    let passes = reconstruction <= tol.residual
        && additivity <= tol.residual
        && min_eig >= -tol.residual
        && continuity.as_ref().map_or(true, |c| c.passes)
        && delta_continuity.as_ref().map_or(true, |c| c.passes);
    let nodes: Vec<NodeNorms> = result
        .norms
        .iter()
        .enumerate()
        .map(|(t, n)| NodeNorms {
            node: t,
            norm: n.total,
            plus: n.plus,
            minus: n.minus,
        })
        .collect();
    let mut csv = String::from("node,norm,plus,minus\n");
    for n in &nodes {
        writeln!(csv, "{},{:e},{:e},{:e}", n.node, n.norm, n.plus, n.minus).expect("string write");
    }
    ctx.write("decompose.csv", &csv)?;
    ctx.write("plus.json", &(serde_json::to_string_pretty(&result.plus)? + "\n"))?;
    ctx.write("minus.json", &(serde_json::to_string_pretty(&result.minus)? + "\n"))?;
    ctx.report(
        passes,
        DecomposeBody {
            reconstruction_residual: reconstruction,
            additivity_residual: additivity,
            min_eigenvalue: min_eig,
            nodes,
            continuity,
            delta_continuity,
        },
    )?;
    Ok(outcome(
        passes,
        format!("decompose: reconstruction {reconstruction:.3e}, additivity {additivity:.3e}, min eigenvalue {min_eig:.3e}"),
    ))
}

fn extend(ctx: &Context, inst: &ExtensionInstance) -> Result<Outcome> {
    let problem = inst.problem()?;
    let opts = ExtensionOptions {
        seed: ctx.metadata.seed,
        oracle: ctx.metadata.oracle,
        certificate_samples: 256,
        ..ExtensionOptions::default()
    };
    let result = extension::extend_full(&problem, &inst.directions()?, &opts)?;
    let check = check_extension(inst, &result, 256, ctx.metadata.seed, &ctx.metadata.tolerances)?;
    let mut csv = String::from("node");
    for s in &result.steps {
        write!(csv, ",f{}", s.step).expect("string write");
    }
    csv.push('\n');
    for t in 0..result.nodes() {
        write!(csv, "{t}").expect("string write");
        for s in &result.steps {
            write!(csv, ",{:e}", s.selection[t]).expect("string write");
        }
        csv.push('\n');
    }
    ctx.write("extend.csv", &csv)?;
    ctx.write("result.json", &(serde_json::to_string_pretty(&result)? + "\n"))?;
    #[derive(Serialize)]
    struct Body<'a> {
        check: &'a ExtensionCheck,
        result: &'a ExtensionResult,
    }
    ctx.report(check.passes, Body { check: &check, result: &result })?;
    Ok(outcome(
        check.passes,
        format!(
            "extend: {} steps, restriction {:.3e}, linearity {:.3e}, domination slack {:.3e}",
            result.steps.len(),
            check.restriction_residual,
            check.linearity_residual,
            check.domination_slack
        ),
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtensionCheck {
    pub restriction_residual: f64,
    pub linearity_residual: f64,
    /// Smallest `m(z)(t) + 2δ‖z‖ − |φ̃(z)(t)|` over the samples.
    pub domination_slack: f64,
    pub passes: bool,
}

/// Restriction, linearity and `m + 2δ‖·‖` domination of an extension result.
pub fn check_extension(
    inst: &ExtensionInstance,
    result: &ExtensionResult,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<ExtensionCheck> {
    let problem = inst.problem()?;
    let n = inst.space.dim;
    if result.dim != n || result.nodes() != inst.phi.grid.len() {
        return Err(Error::Shape("result does not match the instance".into()));
    }
    let mut restriction: f64 = 0.0;
    for (j, y) in inst.space.subspace.iter().enumerate() {
        for t in 0..result.nodes() {
            restriction = restriction.max((result.eval(y, t)? - inst.phi.values[t][j]).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57);
    let mut draw = || -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let mut linearity: f64 = 0.0;
    for _ in 0..16 {
        let (a, b) = (draw(), draw());
        let (alpha, beta) = (1.7, -0.4);
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
        for t in 0..result.nodes() {
            let lhs = result.eval(&combo, t)?;
            let rhs = alpha * result.eval(&a, t)? + beta * result.eval(&b, t)?;
            linearity = linearity.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        }
    }
    let mut slack = f64::INFINITY;
    for _ in 0..samples {
        let z = draw();
        let zn = inst.space.norm.eval(&z);
        let m = problem.compiled().eval_all(&z)?;
        for (t, mt) in m.iter().enumerate() {
            let bound = mt + 2.0 * inst.delta * zn;
            slack = slack.min(bound - result.eval(&z, t)?.abs());
        }
    }
    Ok(ExtensionCheck {
        restriction_residual: restriction,
        linearity_residual: linearity,
        domination_slack: slack,
        passes: restriction <= 1e-9 && linearity <= 1e-9 && slack >= -tol.solver,
    })
}

#[derive(Serialize)]
struct StageBody {
    stage: usize,
    delta: f64,
    dimension: usize,
    defect: f64,
    saturated_upper: usize,
    saturated_lower: usize,
}

fn envelope_cmd(ctx: &Context, inst: &EnvelopeInstance) -> Result<Outcome> {
    let tol = ctx.metadata.tolerances;
    let mut field = inst.field.build(tol.tol_herm)?;
    for _ in 0..ctx.metadata.refine {
        field = field.refine();
    }
    if inst.chain.is_empty() || inst.chain.len() != inst.deltas.len() {
        return Err(Error::Instance("chain and deltas must be nonempty and of equal length".into()));
    }
    let a = field.algebra();
    let x = Element::from_json(a, &inst.x)?;
    let chain = inst
        .chain
        .iter()
        .map(|f| f.iter().map(|e| Element::from_json(a, e)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut sample = envelope::sample_state_space(a, inst.samples, ctx.metadata.seed)?;
    if inst.spectral_states {
        sample = sample.with_spectral_states_of_field(&field)?;
    }
    let mut stages = Vec::with_capacity(chain.len());
    let mut fields: Vec<envelope::EnvelopeField> = Vec::with_capacity(chain.len());
    for (n, (system, &delta)) in chain.iter().zip(&inst.deltas).enumerate() {
        let env = envelope::envelope_field(&field, system, &x, delta, &sample)?;
        if ctx.metadata.oracle {
            let rep = envelope::represent_system(system, &sample)?;
            let target = envelope::kadison_represent(&x, &sample)?;
            for t in 0..field.len() {
                let moments = system.iter().map(|y| field.at(t).pair(y)).collect::<Result<Vec<_>>>()?;
                let dual = oracle::dual_envelope(&rep.values, &moments, &target, env.bounds[t])?;
                if (dual - env.upper.0[t]).abs() > 1e-7 * (1.0 + dual.abs()) {
                    return Err(Error::OracleMismatch {
                        what: format!("upper envelope at stage {n}, node {t}"),
                        solver: env.upper.0[t],
                        oracle: dual,
                    });
                }
            }
        }
        let mut csv = String::from("node,upper,lower,defect\n");
        for t in 0..field.len() {
            writeln!(csv, "{t},{:e},{:e},{:e}", env.upper.0[t], env.lower.0[t], env.defect).expect("string write");
        }
        ctx.write(&format!("stage_{n}.csv"), &csv)?;
        stages.push(StageBody {
            stage: n,
            delta,
            dimension: system.len(),
            defect: env.defect,
            saturated_upper: env.saturated_upper.iter().filter(|&&s| s).count(),
            saturated_lower: env.saturated_lower.iter().filter(|&&s| s).count(),
        });
        fields.push(env);
    }
    let mut order_violation: f64 = 0.0;
    let mut monotone_violation: f64 = 0.0;
    for (n, env) in fields.iter().enumerate() {
        for t in 0..field.len() {
            order_violation = order_violation.max(env.lower.0[t] - env.upper.0[t]);
            if n > 0 {
                let prev = &fields[n - 1];
                monotone_violation = monotone_violation
                    .max(env.upper.0[t] - prev.upper.0[t])
                    .max(prev.lower.0[t] - env.lower.0[t]);
            }
        }
    }
    let nested_deltas = inst.deltas.windows(2).all(|w| w[1] <= w[0]);
    let passes = order_violation <= 1e-9 && (!nested_deltas || monotone_violation <= 1e-9);
    #[derive(Serialize)]
    struct Body {
        stages: Vec<StageBody>,
        sample_size: usize,
        order_violation: f64,
        monotone_violation: f64,
    }
    ctx.report(
        passes,
        Body {
            stages,
            sample_size: sample.len(),
            order_violation,
            monotone_violation,
        },
    )?;
    Ok(outcome(
        passes,
        format!(
            "envelope: {} stages on {} states, order violation {order_violation:.3e}, monotonicity violation {monotone_violation:.3e}",
            fields.len(),
            sample.len()
        ),
    ))
}

fn verify(ctx: &Context, inst: &VerifyInstance) -> Result<Outcome> {
    let tol = ctx.metadata.tolerances;
    match inst {
        VerifyInstance::Extension {
            instance,
            result,
            samples,
        } => {
            let check = check_extension(instance, result, *samples, ctx.metadata.seed, &tol)?;
            ctx.report(check.passes, &check)?;
            Ok(outcome(
                check.passes,
                format!(
                    "verify extension: restriction {:.3e}, linearity {:.3e}, domination slack {:.3e}",
                    check.restriction_residual, check.linearity_residual, check.domination_slack
                ),
            ))
        }
        VerifyInstance::Decomposition { field, plus, minus } => {
            let result = DecompositionResult::from_parts(
                field.build(tol.tol_herm)?,
                plus.build(tol.tol_herm)?,
                minus.build(tol.tol_herm)?,
            )?;
            let reconstruction = result.reconstruction_residual();
            let additivity = jordan::verify_norm_additivity(&result)?;
            let min_eig = result.min_eigenvalue()?;
            let passes = reconstruction <= tol.residual && additivity <= tol.residual && min_eig >= -tol.residual;
            #[derive(Serialize)]
            struct Body {
                reconstruction_residual: f64,
                additivity_residual: f64,
                min_eigenvalue: f64,
            }
            ctx.report(
                passes,
                Body {
                    reconstruction_residual: reconstruction,
                    additivity_residual: additivity,
                    min_eigenvalue: min_eig,
                },
            )?;
            Ok(outcome(
                passes,
                format!(
                    "verify decomposition: reconstruction {reconstruction:.3e}, additivity {additivity:.3e}, min eigenvalue {min_eig:.3e}"
                ),
            ))
        }
    }
}

fn generate_cmd(ctx: &Context, params: &GenerateParams) -> Result<Outcome> {
    let file = match generate::generate(params)? {
        Generated::Field(field) => InstanceFile::new(
            CommandKind::Decompose,
            &DecomposeInstance {
                field: MapFieldJson::from(&field),
                tests: vec![],
                delta: None,
            },
        )?,
        Generated::Extension(inst) => InstanceFile::new(CommandKind::Extend, &inst)?,
    };
    ctx.write("instance.json", &file.to_json()?)?;
    Ok(Outcome::Pass(format!(
        "generate: wrote {}",
        ctx.out.join("instance.json").display()
    )))
}

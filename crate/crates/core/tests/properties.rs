use cxmap::algebra::{self, jordan_decompose_functional, op_norm};
use cxmap::cli::{CommandKind, InstanceFile};
use cxmap::envelope::{self, Direction};
use cxmap::extension::{self, ExtensionInstance, ExtensionOptions};
use cxmap::generate::{self, GenerateKind, GenerateParams, Generated};
use cxmap::jordan;
use cxmap::seminorm::{build_m_delta, quotient_seminorms, PNorm, SeminormSpec};
use cxmap::space::{modulus_of_continuity, partition_of_unity};
use cxmap::{AlgebraDescriptor, Element, FunctionalRep, Grid, ScalarField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn shape() -> impl Strategy<Value = Vec<usize>> {
    prop_oneof![Just(vec![1]), Just(vec![2]), Just(vec![1, 1]), Just(vec![3, 2]), Just(vec![2, 1, 1])]
}

fn random_functional(a: &AlgebraDescriptor, seed: u64) -> FunctionalRep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FunctionalRep::from_element(&a.random_selfadjoint(&mut rng)).unwrap()
}

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn norm_of(p: PNorm, z: &[f64]) -> f64 {
    p.apply_slice(z)
}

fn small_extension(seed: u64, n: usize, k: usize, delta: f64, norm: PNorm) -> ExtensionInstance {
    generate::extension_instance(&GenerateParams {
        kind: GenerateKind::Extension,
        seed,
        nodes: 8,
        dim: n,
        subspace_dim: k,
        margin: 0.25,
        delta,
        norm,
        ..GenerateParams::default()
    })
    .unwrap()
}

fn pnorm() -> impl Strategy<Value = PNorm> {
    prop_oneof![Just(PNorm::L1), Just(PNorm::L2), Just(PNorm::LInf)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn functional_norm_is_sum_of_part_traces(blocks in shape(), seed in any::<u64>()) {
        let a = AlgebraDescriptor::new(blocks).unwrap();
        let rho = random_functional(&a, seed);
        let parts = jordan_decompose_functional(&rho).unwrap();
        let total = rho.norm().unwrap();
        prop_assert!((total - parts.positive.trace() - parts.negative.trace()).abs() <= 1e-10);
        let swapped = jordan_decompose_functional(&rho.scale(-1.0)).unwrap();
        prop_assert!(swapped.positive.max_abs_diff(&parts.negative) <= 1e-12);
        prop_assert!(swapped.negative.max_abs_diff(&parts.positive) <= 1e-12);
    }

    #[test]
    fn op_norm_is_absolutely_homogeneous(blocks in shape(), seed in any::<u64>(), s in -5.0f64..5.0) {
        let a = AlgebraDescriptor::new(blocks).unwrap();
        let x = a.random_selfadjoint(&mut ChaCha8Rng::seed_from_u64(seed));
        let lhs = op_norm(&x.scale(s)).unwrap();
        let rhs = s.abs() * op_norm(&x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
    }

    #[test]
    fn partition_of_unity_sums_to_one(n in 4usize..40, parts in 1usize..5, seed in any::<u64>()) {
        let grid = Grid::unit_interval(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cover = Vec::new();
        let width = n.div_ceil(parts);
        for j in 0..parts {
            let lo = (j * width).saturating_sub(rng.gen_range(0..3)).min(n - 1);
            let hi = ((j + 1) * width + rng.gen_range(0..3)).min(n);
            cover.push((lo..hi.max(lo + 1)).collect::<Vec<_>>());
        }
        let lambdas = partition_of_unity(&grid, &cover).unwrap();
        for t in 0..n {
            let sum: f64 = lambdas.iter().map(|l| l.0[t]).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }
        for (l, set) in lambdas.iter().zip(&cover) {
            for t in 0..n {
                if !set.contains(&t) {
                    prop_assert_eq!(l.0[t], 0.0);
                }
            }
        }
    }

    #[test]
    fn refinement_halves_interpolated_jumps(n in 3usize..30, seed in any::<u64>(), circle in any::<bool>()) {
        let grid = if circle { Grid::circle(n, 1.0).unwrap() } else { Grid::unit_interval(n).unwrap() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gaussian(n, &mut rng);
        let r = grid.refine();
        let before = modulus_of_continuity(&g, &grid).max_jump;
        let after = modulus_of_continuity(&r.transfer(&g), &r.grid).max_jump;
        prop_assert!((after - before / 2.0).abs() <= 1e-15 * (1.0 + before));
    }

    #[test]
    fn evaluate_is_linear_and_bounded(blocks in shape(), seed in any::<u64>(), s in -3.0f64..3.0, r in -3.0f64..3.0) {
        let a = AlgebraDescriptor::new(blocks).unwrap();
        let phi = generate::random_field(&a, Grid::unit_interval(6).unwrap(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let (x, y) = (a.random_selfadjoint(&mut rng), a.random_selfadjoint(&mut rng));
        let lhs = phi.evaluate(&x.combine(s, &y, r).unwrap()).unwrap();
        let (fx, fy) = (phi.evaluate(&x).unwrap(), phi.evaluate(&y).unwrap());
        let norms = phi.pointwise_norm().unwrap();
        let xn = op_norm(&x).unwrap();
        for t in 0..phi.len() {
            prop_assert!((lhs.0[t] - s * fx.0[t] - r * fy.0[t]).abs() <= 1e-10 * (1.0 + lhs.0[t].abs()));
            prop_assert!(fx.0[t].abs() <= norms.0[t] * xn + 1e-10);
        }
    }

    #[test]
    fn commutative_compression_matches_parts(points in 1usize..6, seed in any::<u64>()) {
        let a = AlgebraDescriptor::commutative(points).unwrap();
        let phi = generate::random_field(&a, Grid::unit_interval(5).unwrap(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let h = a.random_positive_contraction(&mut rng);
        let psi = phi.compress(&h).unwrap().pointwise_norm().unwrap();
        let d = jordan::decompose_map(&phi).unwrap();
        let (p, m) = (d.plus.evaluate(&h).unwrap(), d.minus.evaluate(&h).unwrap());
        for t in 0..phi.len() {
            prop_assert!((psi.0[t] - p.0[t] - m.0[t]).abs() <= 1e-10);
        }
    }

    #[test]
    fn decomposition_is_sign_equivariant(blocks in shape(), seed in any::<u64>()) {
        let a = AlgebraDescriptor::new(blocks).unwrap();
        let phi = generate::random_field(&a, Grid::unit_interval(5).unwrap(), seed).unwrap();
        let d = jordan::decompose_map(&phi).unwrap();
        let n = jordan::decompose_map(&phi.neg()).unwrap();
        for t in 0..phi.len() {
            prop_assert_eq!(n.plus.at(t), d.minus.at(t));
            prop_assert_eq!(n.minus.at(t), d.plus.at(t));
        }
    }

    #[test]
    fn separator_identities(blocks in shape(), seed in any::<u64>()) {
        let a = AlgebraDescriptor::new(blocks).unwrap();
        let rho = random_functional(&a, seed);
        let k = jordan::separator(&rho, 0.0).unwrap();
        let parts = jordan_decompose_functional(&rho).unwrap();
        let rest = a.unit().sub(&k).unwrap();
        prop_assert!(parts.positive.pair(&k).unwrap().abs() <= 1e-10);
        prop_assert!(parts.negative.pair(&rest).unwrap().abs() <= 1e-10);
        let (lo, hi) = k.spectral_bounds().unwrap();
        prop_assert!(lo >= -1e-12 && hi <= 1.0 + 1e-12);
    }

    #[test]
    fn compression_bounds_parts(points in 1usize..6, seed in any::<u64>()) {
        let a = AlgebraDescriptor::commutative(points).unwrap();
        let phi = generate::random_field(&a, Grid::unit_interval(4).unwrap(), seed).unwrap();
        let h = a.random_positive_contraction(&mut ChaCha8Rng::seed_from_u64(seed ^ 3));
        let d = jordan::decompose_map(&phi).unwrap();
        let psi = phi.compress(&h).unwrap().pointwise_norm().unwrap();
        let (p, m) = (d.plus.evaluate(&h).unwrap(), d.minus.evaluate(&h).unwrap());
        for t in 0..phi.len() {
            prop_assert!(p.0[t] + m.0[t] <= psi.0[t] + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn constructed_seminorms_are_seminorms(seed in any::<u64>(), norm in pnorm(), delta in 0.01f64..0.5) {
        let inst = small_extension(seed, 3, 1, delta, norm);
        let (n, nodes) = (inst.space.dim, inst.phi.grid.len());
        let problem = inst.problem().unwrap();
        let m = inst.seminorm.clone();
        let md = build_m_delta(&m, problem.model(), delta).unwrap();
        let (bar, tilde) = quotient_seminorms(&m, problem.model(), delta).unwrap();
        let specs: Vec<SeminormSpec> = vec![m.clone(), md.clone(), bar, tilde];
        let compiled: Vec<_> = specs.iter().map(|s| s.compile(n, nodes).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..4 {
            let (x, y) = (gaussian(n, &mut rng), gaussian(n, &mut rng));
            let s: f64 = rng.gen_range(-3.0..3.0);
            let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let sx: Vec<f64> = x.iter().map(|a| s * a).collect();
            for c in &compiled {
                let (vx, vy, vxy, vsx) = (c.eval_all(&x).unwrap(), c.eval_all(&y).unwrap(), c.eval_all(&xy).unwrap(), c.eval_all(&sx).unwrap());
                for t in 0..nodes {
                    prop_assert!(vxy[t] <= vx[t] + vy[t] + 1e-9);
                    prop_assert!((vsx[t] - s.abs() * vx[t]).abs() <= 1e-9 * (1.0 + vsx[t].abs()));
                }
            }
            let (mx, mdx) = (compiled[0].eval_all(&x).unwrap(), compiled[1].eval_all(&x).unwrap());
            let xn = norm_of(norm, &x);
            for t in 0..nodes {
                prop_assert!(mx[t] <= mdx[t] + 1e-12 && mdx[t] <= mx[t] + delta * xn + 1e-9);
            }
        }
    }

    #[test]
    fn selection_stays_in_tube(seed in any::<u64>(), n in 2usize..40, circle in any::<bool>()) {
        let grid = if circle && n >= 3 { Grid::circle(n, 1.0).unwrap() } else { Grid::unit_interval(n).unwrap() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = 0.0;
        let (mut u, mut l) = (Vec::new(), Vec::new());
        for _ in 0..n {
            c += rng.gen_range(-1.0..1.0);
            let w: f64 = rng.gen_range(0.0..1.0);
            u.push(c - w);
            l.push(c + w);
        }
        let sel = extension::select_continuous(&ScalarField(u.clone()), &ScalarField(l.clone()), &grid).unwrap();
        for t in 0..n {
            prop_assert!(u[t] <= sel.f.0[t] && sel.f.0[t] <= l[t]);
        }
        prop_assert!(sel.total_variation <= extension::total_variation(&u, &grid) + 1e-12);
    }

    #[test]
    fn tube_grows_with_delta(seed in any::<u64>(), norm in pnorm()) {
        let small = small_extension(seed, 3, 2, 0.02, norm);
        let mut large = small.clone();
        large.delta = 0.2;
        let x = small.space.complement[0].clone();
        let opts = ExtensionOptions::default();
        let a = extension::envelopes(&small.problem().unwrap(), &x, &opts).unwrap();
        let b = extension::envelopes(&large.problem().unwrap(), &x, &opts).unwrap();
        for t in 0..small.phi.grid.len() {
            prop_assert!(b.upper.0[t] <= a.upper.0[t] + 1e-8);
            prop_assert!(b.lower.0[t] >= a.lower.0[t] - 1e-8);
            prop_assert!(a.upper.0[t] <= a.lower.0[t]);
        }
    }

    #[test]
    fn extension_restricts_and_is_dominated(seed in any::<u64>(), norm in pnorm(), delta in prop_oneof![Just(0.1), Just(0.01)]) {
        let inst = small_extension(seed, 3, 1, delta, norm);
        let problem = inst.problem().unwrap();
        let r = extension::extend_full(&problem, &inst.directions().unwrap(), &ExtensionOptions::default()).unwrap();
        let scale = match &inst.seminorm {
            SeminormSpec::ScaledNorm { scale, .. } => scale.0.clone(),
            _ => unreachable!(),
        };
        for t in 0..r.nodes() {
            for (j, y) in inst.space.subspace.iter().enumerate() {
                prop_assert!((r.eval(y, t).unwrap() - inst.phi.values[t][j]).abs() <= 1e-9);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 9);
        for _ in 0..200 {
            let z = gaussian(3, &mut rng);
            let zn = norm_of(norm, &z);
            for t in 0..r.nodes() {
                let v = r.eval(&z, t).unwrap();
                prop_assert!(v.abs() <= scale[t] * zn + 2.0 * delta * zn + 1e-8);
            }
        }
    }

    #[test]
    fn lp_envelope_grows_with_slack(seed in any::<u64>()) {
        let a = AlgebraDescriptor::new(vec![2]).unwrap();
        let phi = generate::smooth_field(&a, Grid::unit_interval(4).unwrap(), seed).unwrap();
        let sample = envelope::sample_state_space(&a, 80, seed).unwrap().with_spectral_states_of_field(&phi).unwrap();
        let system = vec![a.unit(), Element::diagonal(&a, &[1.0, -1.0]).unwrap()];
        let x = a.random_selfadjoint(&mut ChaCha8Rng::seed_from_u64(seed ^ 4));
        for t in 0..phi.len() {
            let base = phi.at(t).norm().unwrap();
            let lo = envelope::lp_envelope(phi.at(t), &system, &x, base + 0.05, Direction::Max, &sample).unwrap();
            let hi = envelope::lp_envelope(phi.at(t), &system, &x, base + 0.5, Direction::Max, &sample).unwrap();
            let low = envelope::lp_envelope(phi.at(t), &system, &x, base + 0.05, Direction::Min, &sample).unwrap();
            prop_assert!(hi.value >= lo.value - 1e-9);
            prop_assert!(low.value <= lo.value + 1e-9);
        }
    }

    #[test]
    fn generated_instances_round_trip(seed in any::<u64>(), kind in prop_oneof![
        Just(GenerateKind::Smooth), Just(GenerateKind::Crossing), Just(GenerateKind::Random), Just(GenerateKind::Extension)
    ], norm in pnorm()) {
        let params = GenerateParams { kind, seed, nodes: 6, norm, ..GenerateParams::default() };
        let file = match generate::generate(&params).unwrap() {
            Generated::Field(f) => InstanceFile::new(CommandKind::Decompose, &cxmap::cli::DecomposeInstance {
                field: (&f).into(),
                tests: vec![],
                delta: None,
            }).unwrap(),
            Generated::Extension(e) => InstanceFile::new(CommandKind::Extend, &e).unwrap(),
        };
        let text = file.to_json().unwrap();
        let back = InstanceFile::parse(&text).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(back.to_json().unwrap(), text);
        prop_assert_eq!(generate::generate(&params).unwrap(), generate::generate(&params).unwrap());
    }
}

#[test]
fn random_state_is_a_state() {
    let a = AlgebraDescriptor::new(vec![2, 3]).unwrap();
    let s = algebra::random_state(&a, 5);
    assert!((s.trace() - 1.0).abs() < 1e-12);
    assert!(s.min_eigenvalue().unwrap() >= -1e-12);
}

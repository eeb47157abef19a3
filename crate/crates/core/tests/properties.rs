mod common;

use fcm_core::estimation::{estimate_admittance, NetworkMeasurementBatch};
use fcm_core::linalg::refined_gram_inverse;
use fcm_core::reduction::reduce_tree_ordered;
use fcm_core::scenario::random_tree_network;
use fcm_core::{
    complex_from_real_vector, estimate_fcm_batch, online_init, real_from_complex_matrix, real_from_complex_vector,
    reduce_tree, BusLayout, HarmonicConfig, HarmonicNetwork, MeasurementBatch, NetworkSolution,
    NetworkSolver, OnlineSettings, RealHarmonicVector, ReductionOrder, SyntheticConverterSpec, Topology,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn tree(cfg: HarmonicConfig, seed: u64) -> HarmonicNetwork {
    random_tree_network(cfg, 8, 3, &SyntheticConverterSpec::default(), &mut rng(seed)).unwrap()
}

fn root_voltage(cfg: HarmonicConfig, r: &mut ChaCha8Rng) -> RealHarmonicVector {
    RealHarmonicVector::new(cfg, common::random_vector(cfg.p(), r)).unwrap()
}

fn solve(net: &HarmonicNetwork, v: &RealHarmonicVector) -> NetworkSolution {
    NetworkSolver::new(net).unwrap().solve(v).unwrap()
}

fn max_dev(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1.0)
}

/// Solution vectors of every block, concatenated.
fn flatten(s: &NetworkSolution) -> DVector<f64> {
    let parts: Vec<&DVector<f64>> = s
        .node_voltages
        .iter()
        .chain(&s.converter_currents)
        .chain(&s.line_currents)
        .chain(std::iter::once(&s.root_current))
        .collect();
    DVector::from_iterator(parts.iter().map(|v| v.len()).sum(), parts.iter().flat_map(|v| v.iter().copied()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn spectrum_round_trip(k in 0usize..6, seed in any::<u64>()) {
        let cfg = HarmonicConfig::new(k);
        let x = common::random_spectrum(cfg, &mut rng(seed));
        let back = complex_from_real_vector(&real_from_complex_vector(&x).unwrap());
        prop_assert!((back.values() - x.values()).camax() < 1e-15);
    }

    #[test]
    fn transform_is_multiplicative_off_the_imaginary_dc_columns(k in 0usize..4, seed in any::<u64>()) {
        let cfg = HarmonicConfig::new(k);
        let mut r = rng(seed);
        let a = common::random_symmetric_matrix(cfg, false, &mut r);
        let b = common::random_symmetric_matrix(cfg, false, &mut r);
        let lhs = real_from_complex_matrix(&a.compose(&b)).unwrap();
        let rhs = real_from_complex_matrix(&a).unwrap() * real_from_complex_matrix(&b).unwrap();
        for ph in 0..3 {
            for m in 0..=k {
                for imag in [false, true] {
                    if m == 0 && imag {
                        continue;
                    }
                    let j = cfg.real_index(ph, m, imag);
                    prop_assert!((lhs.column(j) - rhs.column(j)).amax() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn batch_estimate_is_least_squares_optimal(seed in any::<u64>(), extra in 0usize..20) {
        let cfg = HarmonicConfig::new(1);
        let mut r = rng(seed);
        let t = cfg.q() + extra;
        let i = common::random_matrix(cfg.p(), t, &mut r);
        let v = common::random_matrix(cfg.q(), t, &mut r);
        let f = estimate_fcm_batch(&MeasurementBatch::new(cfg, i.clone(), v.clone()).unwrap()).unwrap().fcm;
        let residual = |m: &DMatrix<f64>| (&i - m * &v).norm_squared();
        let best = residual(f.matrix());
        for row in 0..cfg.p() {
            for col in 0..cfg.q() {
                for delta in [1e-4, -1e-4] {
                    let mut g = f.matrix().clone();
                    g[(row, col)] += delta;
                    prop_assert!(residual(&g) >= best);
                }
            }
        }
    }

    #[test]
    fn admittance_estimate_is_symmetric_and_sparse(seed in any::<u64>(), nodes in 2usize..6, t in 1usize..12) {
        let cfg = HarmonicConfig::new(1);
        let mut r = rng(seed);
        let lines: Vec<(usize, usize)> = (1..nodes).map(|c| (r.random_range(0..c), c)).collect();
        let topo = Topology::new(nodes, lines.clone()).unwrap();
        let layout = BusLayout::new(cfg, nodes);
        let noise = |r: &mut ChaCha8Rng| DMatrix::from_fn(layout.len(), t, |_, _| Complex64::new(common::uniform(r), common::uniform(r)));
        let (i, v) = (noise(&mut r), noise(&mut r));
        let y = estimate_admittance(&NetworkMeasurementBatch::new(layout, i, v).unwrap(), &topo).unwrap().admittance;
        for blk in y.blocks() {
            prop_assert_eq!(blk, &blk.transpose());
            for a in 0..nodes {
                for b in 0..nodes {
                    let linked = a == b || lines.contains(&(a, b)) || lines.contains(&(b, a));
                    if !linked {
                        prop_assert_eq!(blk[(a, b)], Complex64::new(0.0, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn solver_is_affine_in_the_root_voltage(seed in any::<u64>(), a in -2.0f64..2.0) {
        let cfg = HarmonicConfig::new(2);
        let net = tree(cfg, seed);
        let mut r = rng(seed ^ 1);
        let (v1, v2) = (root_voltage(cfg, &mut r), root_voltage(cfg, &mut r));
        let mix = RealHarmonicVector::new(cfg, v1.as_vector() * a + v2.as_vector() * (1.0 - a)).unwrap();
        let s = flatten(&solve(&net, &mix));
        let expect = flatten(&solve(&net, &v1)) * a + flatten(&solve(&net, &v2)) * (1.0 - a);
        prop_assert!(max_dev(&s, &expect) < 1e-10);
        // without dc sources the map is linear
        let passive = net.with_scaled_dc(0.0);
        let scaled = RealHarmonicVector::new(cfg, v1.as_vector() * a).unwrap();
        prop_assert!(max_dev(&flatten(&solve(&passive, &scaled)), &(flatten(&solve(&passive, &v1)) * a)) < 1e-10);
    }

    #[test]
    fn root_current_equals_total_converter_current(seed in any::<u64>()) {
        let cfg = HarmonicConfig::new(2);
        let net = tree(cfg, seed);
        let s = solve(&net, &root_voltage(cfg, &mut rng(seed ^ 2)));
        let total = s.converter_currents.iter().fold(DVector::zeros(cfg.p()), |acc, c| acc + c);
        prop_assert!(max_dev(&s.root_current, &total) < 1e-12);
    }

    #[test]
    fn line_injections_match_assembled_admittance(seed in any::<u64>()) {
        let cfg = HarmonicConfig::new(2);
        let net = tree(cfg, seed);
        let s = solve(&net, &root_voltage(cfg, &mut rng(seed ^ 3)));
        let y = fcm_core::assemble_harmonic_admittance(&net).unwrap();
        let layout = y.layout();
        let v = layout.phasors(&s.node_voltages).unwrap();
        let i = layout.phasors(&s.bus_injections()).unwrap();
        let yv = y.apply(&v);
        prop_assert!((&yv - &i).camax() < 1e-10 * i.camax().max(1.0));
    }

    #[test]
    fn reduced_fcm_reproduces_root_current(seed in any::<u64>()) {
        let cfg = HarmonicConfig::new(2);
        let net = tree(cfg, seed);
        let v = root_voltage(cfg, &mut rng(seed ^ 4));
        let s = solve(&net, &v);
        let f = reduce_tree(&net).unwrap().fcm;
        let i = f.f_bar() * v.as_vector() + f.f();
        prop_assert!(max_dev(&s.root_current, &i) < 1e-10);
    }

    #[test]
    fn reduction_does_not_depend_on_order(seed in any::<u64>()) {
        let cfg = HarmonicConfig::new(2);
        let net = tree(cfg, seed);
        let a = reduce_tree_ordered(&net, ReductionOrder::Forward).unwrap().fcm;
        let b = reduce_tree_ordered(&net, ReductionOrder::Reverse).unwrap().fcm;
        prop_assert!((a.matrix() - b.matrix()).amax() < 1e-10 * a.matrix().amax().max(1.0));
    }

    #[test]
    fn converter_free_tree_reduces_to_zero(seed in any::<u64>()) {
        let cfg = HarmonicConfig::new(1);
        let with = tree(cfg, seed);
        let lines = with.lines().to_vec();
        let net = HarmonicNetwork::new(cfg, with.node_ids().to_vec(), with.root(), lines, vec![]).unwrap();
        let f = reduce_tree(&net).unwrap().fcm;
        prop_assert!(f.matrix().iter().all(|&x| x == 0.0));
        let s = solve(&net, &root_voltage(cfg, &mut rng(seed)));
        prop_assert!(s.root_current.amax() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn sherman_morrison_tracks_fresh_inverse(seed in any::<u64>()) {
        let cfg = HarmonicConfig::new(1);
        let mut r = rng(seed);
        let t = 2 * cfg.q();
        let batch = MeasurementBatch::new(cfg, common::random_matrix(cfg.p(), t, &mut r), common::random_matrix(cfg.q(), t, &mut r)).unwrap();
        let mut est = online_init(&batch, OnlineSettings::default()).unwrap();
        for _ in 0..1000 {
            est.step(&common::random_vector(cfg.p(), &mut r), &common::random_vector(cfg.q(), &mut r)).unwrap();
            let (_, v) = est.window();
            let (fresh, _) = refined_gram_inverse(&v);
            prop_assert!((est.gram_inverse() - fresh).amax() < 1e-8);
        }
    }
}

use ganlab::metrics::{line_integral, mode_coverage, pearson};
use ganlab::nets::{init_params, Activation, LayerSpec, NetSpec};
use ganlab::synth::{self, DatasetSpec};
use ganlab::{rng, Matrix};
use proptest::prelude::*;

fn net(activation: Activation, seed: u64) -> ganlab::nets::MlpNet {
    let layer = |width, activation| LayerSpec { width, activation, bias: true };
    let spec = NetSpec {
        input_dim: 2,
        layers: vec![layer(32, activation), layer(32, activation), layer(1, Activation::Sigmoid)],
    };
    init_params(&spec, seed).unwrap()
}

#[test]
fn line_integral_converges_with_quadrature_points() {
    for seed in 0..10 {
        let d = net(Activation::Tanh, seed);
        let (x, y) = ([2.5, -1.0], [-3.0, 2.0]);
        let res: Vec<f64> = [10, 100, 1000]
            .iter()
            .map(|&n| line_integral(&d, &x, &y, n).unwrap().residual)
            .collect();
        let floor = 1e-12;
        assert!(res[1] <= res[0].max(floor) && res[2] <= res[1].max(floor), "{res:?}");
        assert!(res[2] < 1e-6, "{res:?}");
    }
}

#[test]
fn relu_line_integral_within_kink_tolerance() {
    for seed in 0..10 {
        let d = net(Activation::Relu, seed);
        let r = line_integral(&d, &[3.0, 3.0], &[-3.0, -2.0], 1000).unwrap();
        assert!(r.residual <= 5e-2, "{r:?}");
    }
}

fn ring_as_mixture(order: &[usize]) -> DatasetSpec {
    let mix = DatasetSpec::ring8(10.0).mixture().unwrap().unwrap();
    DatasetSpec::GaussianMixture {
        means: order.iter().map(|&k| mix.means[k].clone()).collect(),
        stds: order.iter().map(|&k| mix.stds[k]).collect(),
        weights: None,
        scale: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mode_coverage_ignores_sample_and_mode_order(seed in 0u64..1000, perm in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle(), drop in 0usize..8) {
        let mut r = rng::seeded(seed);
        // a sample that misses one mode and has some junk
        let mut pts = synth::sample(&DatasetSpec::ring8(10.0), 400, &mut r).unwrap().points;
        let keep: Vec<usize> = (0..pts.rows())
            .filter(|&i| {
                let p = pts.row_slice(i);
                let k = ((p[1].atan2(p[0]) / (std::f64::consts::PI / 4.0)).round() as i64).rem_euclid(8) as usize;
                k != drop
            })
            .collect();
        pts = pts.select_rows(&keep);
        let junk = rng::normal_matrix(&mut r, 20, 2);
        let all = Matrix::from_vec(pts.rows() + 20, 2, [pts.as_slice(), junk.as_slice()].concat());
        let shuffled_rows = rng::sample_without_replacement(&mut r, all.rows(), all.rows());
        let shuffled = all.select_rows(&shuffled_rows);

        let identity: Vec<usize> = (0..8).collect();
        let base = mode_coverage(&all, &ring_as_mixture(&identity)).unwrap();
        let rows = mode_coverage(&shuffled, &ring_as_mixture(&identity)).unwrap();
        let modes = mode_coverage(&all, &ring_as_mixture(&perm)).unwrap();
        prop_assert_eq!(base.covered, 7);
        prop_assert_eq!(&rows, &base);
        prop_assert_eq!(modes.covered, base.covered);
        prop_assert_eq!(modes.hq_fraction, base.hq_fraction);
        for (slot, &k) in perm.iter().enumerate() {
            prop_assert_eq!(modes.per_mode[slot], base.per_mode[k]);
        }
    }

    #[test]
    fn pearson_is_scale_and_shift_invariant(v in prop::collection::vec(-10.0f64..10.0, 3..40), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let w: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        if let Ok(c) = pearson(&v, &w) {
            prop_assert!((c - 1.0).abs() < 1e-9);
        }
    }
}

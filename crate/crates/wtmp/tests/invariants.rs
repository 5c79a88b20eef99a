use proptest::prelude::*;

use wtmp::channel::{ArrayGeometry, ChannelSnapshot};
use wtmp::config::RunConfig;
use wtmp::estimation::{build_dictionary, omp_estimate, OmpStop, PathEstimate, PolarGrid};
use wtmp::evaluation::{mean_stderr, paired_gap};
use wtmp::io::{read_dump, write_dump, ChannelDump};
use wtmp::numerics::{inner, pinv, svd, vec_norm, CMatrix, C64};
use wtmp::predictor::{
    mp_estimate, mp_estimate_difference, pencil_range, select_support, AngularBasis, PencilConfig, PencilVariant,
    SeriesContext,
};
use wtmp::transform::{build_g_row, build_transform, build_u1, g_diagonal};

fn cmatrix(max_r: usize, max_c: usize) -> impl Strategy<Value = CMatrix> {
    (1..=max_r, 1..=max_c).prop_flat_map(|(r, c)| {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), r * c)
            .prop_map(move |v| CMatrix::from_fn(r, c, |i, j| C64::new(v[i * c + j].0, v[i * c + j].1)))
    })
}

fn rel(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).frobenius_norm() / b.frobenius_norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs(m in cmatrix(9, 9)) {
        let d = svd(&m).unwrap();
        let us = CMatrix::from_fn(d.u.rows(), d.s.len(), |i, j| d.u[(i, j)] * d.s[j]);
        prop_assert!(rel(&(&us * &d.v.adjoint()), &m) < 1e-10);
        prop_assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn pinv_satisfies_penrose(m in cmatrix(7, 7)) {
        let p = pinv(&m, 1e-10).unwrap();
        prop_assert!(rel(&(&(&m * &p) * &m), &m) < 1e-9);
        prop_assert!(rel(&(&(&p * &m) * &p), &p) < 1e-9);
        let mp = &m * &p;
        prop_assert!((&mp - &mp.adjoint()).max_abs() < 1e-9);
    }

    #[test]
    fn g_rows_are_unit_orthogonal_and_flat(
        half in 1usize..24,
        theta in 0.2f64..2.9,
        row in 0usize..48,
    ) {
        let n_v = 2 * half;
        let geom = ArrayGeometry::ula(n_v, 39e9).unwrap();
        let u1 = build_u1(&PathEstimate::from_params(&[(theta, 0.0, 15.0)]), &geom).unwrap();
        let n = row % n_v;
        let g = build_g_row(&u1, n).unwrap();
        prop_assert!((vec_norm(&g) - 1.0).abs() < 1e-12);
        prop_assert!(inner(&u1, &g).norm() < 1e-10);
        prop_assert!((g[n].re - g_diagonal(n_v)).abs() < 1e-15);
        let want = 1.0 / (n_v * (n_v - 1)) as f64;
        for (q, z) in g.iter().enumerate() {
            if q != n {
                prop_assert!((z.norm_sqr() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transform_is_unit_modulus_and_invertible(
        params in prop::collection::vec((0.3f64..2.8, -0.8f64..0.8, 3.0f64..200.0), 1..4),
        n_h in prop::sample::select(vec![1usize, 2, 4]),
        half in 1usize..6,
    ) {
        let geom = ArrayGeometry::half_wavelength(n_h, 2 * half, 39e9).unwrap();
        let t = build_transform(&PathEstimate::from_params(&params), &geom).unwrap();
        let h = CMatrix::from_fn(geom.n_t(), 3, |i, j| C64::new(i as f64 + 0.5, j as f64 - 1.0));
        prop_assert!(rel(&t.apply_inverse(&t.apply(&h)), &h) < 1e-12);
        prop_assert!((t.apply(&h).frobenius_norm() - h.frobenius_norm()).abs() < 1e-9 * h.frobenius_norm());
    }

    #[test]
    fn support_meets_threshold_and_grows(
        scores in prop::collection::vec(0.0f64..10.0, 1..60),
        g1 in 0.05f64..1.0,
        g2 in 0.05f64..1.0,
    ) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let total: f64 = scores.iter().sum();
        let a = select_support(&scores, lo);
        let b = select_support(&scores, hi);
        prop_assert!(a.len() <= b.len());
        let kept: f64 = b.iter().map(|&i| scores[i]).sum();
        prop_assert!(kept >= hi * total - 1e-9 * total.max(1.0));
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x == y), "prefix property");
    }

    #[test]
    fn pencil_recovers_random_tones(
        w in prop::collection::vec(-800.0f64..800.0, 1..4),
        n_s in 10usize..20,
    ) {
        // keep tones at least 40 Hz apart so the problem stays well posed
        let mut w = w;
        w.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assume!(w.windows(2).all(|p| p[1] - p[0] > 40.0));
        prop_assume!(w.iter().all(|x| x.abs() > 1.0));
        let f_c = 39e9;
        let t = 0.5e-3;
        let ctx = SeriesContext { f_c, f_n: 0.0, t_sample: t };
        let s: Vec<C64> = (1..=n_s)
            .map(|k| w.iter().enumerate().map(|(i, &x)| C64::from_polar(1.0 + 0.2 * i as f64, 2.0 * std::f64::consts::PI * x * k as f64 * t)).sum())
            .collect();
        let p = w.len();
        let (lo, hi) = pencil_range(n_s, p, PencilVariant::Difference).unwrap();
        let q = (lo + hi) / 2;
        let cfg = PencilConfig { pencil_size: Some(q), n_predict: 1, variant: PencilVariant::Standard };
        let est = mp_estimate(&s, &cfg, p, ctx).unwrap();
        for (a, b) in est.iter().zip(&w) {
            prop_assert!((a - b).abs() < 1e-6 * b.abs().max(1.0));
        }
        let shifted: Vec<C64> = s.iter().map(|z| z + C64::new(-2.0, 7.5)).collect();
        let d0 = mp_estimate_difference(&s, &cfg, p, ctx).unwrap();
        let d1 = mp_estimate_difference(&shifted, &cfg, p, ctx).unwrap();
        for (a, b) in d0.iter().zip(&d1) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn angular_basis_round_trips(n_h in 1usize..4, n_v in 1usize..9, n_f in 1usize..4) {
        let b = AngularBasis::new(n_h, n_v);
        let h = CMatrix::from_fn(n_h * n_v, n_f, |i, j| C64::new((i * 3 + j) as f64 * 0.1, -(j as f64)));
        let y = b.forward(&h);
        prop_assert!((y.frobenius_norm() - h.frobenius_norm()).abs() < 1e-12 * h.frobenius_norm().max(1.0));
        prop_assert!(rel(&b.inverse(&y), &h) < 1e-12);
    }

    #[test]
    fn paired_gap_of_identical_series_is_null(x in prop::collection::vec(-5.0f64..5.0, 2..30)) {
        let g = paired_gap(&x, &x);
        prop_assert_eq!(g.mean, 0.0);
        prop_assert!(g.indistinct() && !g.significant());
        let (m, se) = mean_stderr(&x);
        prop_assert!(se >= 0.0 && m.is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn omp_residual_never_grows(
        atoms in prop::collection::vec(0usize..96, 1..4),
        gains in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3),
    ) {
        let geom = ArrayGeometry::ula(32, 39e9).unwrap();
        let grid = PolarGrid {
            theta_range: (0.5, 2.6),
            phi_range: (0.0, 0.0),
            r_range: (5.0, 40.0),
            m_theta: 32,
            m_phi: 1,
            m_r: 3,
        };
        let dict = build_dictionary(&geom, &grid, 1 << 20).unwrap();
        let mut y = vec![C64::new(0.0, 0.0); 32];
        for (&j, &(re, im)) in atoms.iter().zip(&gains) {
            for (yi, a) in y.iter_mut().zip(dict.atom(j)) {
                *yi += a * C64::new(re, im);
            }
        }
        prop_assume!(vec_norm(&y) > 1e-6);
        let est = omp_estimate(&y, &dict, OmpStop { max_paths: 6, residual_tol: 1e-9 }).unwrap();
        prop_assert!(est.residual_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        prop_assert!(est.p_hat >= 1 && est.p_hat <= 6);
    }

    #[test]
    fn dumps_round_trip(ports in 1usize..3, k in 1usize..4, n_t in 1usize..6, n_f in 1usize..4, seed in any::<u32>()) {
        let samples: Vec<Vec<ChannelSnapshot>> = (0..ports)
            .map(|p| {
                (1..=k)
                    .map(|i| ChannelSnapshot {
                        h: CMatrix::from_fn(n_t, n_f, |a, b| C64::new((seed as usize + p + a * b) as f64, i as f64 * 0.25)),
                        t: i as f64 * 1e-3,
                    })
                    .collect()
            })
            .collect();
        let dump = ChannelDump::new(samples, 1e-3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        write_dump(&path, &dump).unwrap();
        prop_assert_eq!(read_dump(&path).unwrap(), dump);
    }

    #[test]
    fn config_round_trips(seed in 0u64..(i64::MAX as u64 - 100), gamma in 0.5f64..1.0, n_ue in 1usize..8) {
        let mut c = RunConfig::desk();
        c.experiment.base_seed = seed;
        c.experiment.n_ue = n_ue;
        c.algorithm.predictor.gamma1 = gamma;
        let back = RunConfig::from_toml_str(&c.to_toml()).unwrap();
        prop_assert_eq!(back, c.clone());
        c.experiment.base_seed = i64::MAX as u64 + seed / 2;
        prop_assert!(c.validate().is_err());
    }
}

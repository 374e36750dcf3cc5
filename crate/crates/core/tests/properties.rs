use proptest::prelude::*;

use twolocus::asymptotics::q0;
use twolocus::gaussian::q_gauss;
use twolocus::model::{one_locus_q, typed_configs, Locus, ModelParams, SampleConfig};
use twolocus::oracle::{PimBlockSolver, SolveOptions};

fn exact(cfgs: &[SampleConfig], p: &ModelParams) -> Vec<f64> {
    PimBlockSolver::new(p, SolveOptions::default())
        .unwrap()
        .solve(cfgs)
        .unwrap()
        .0
}

fn config(a: [u32; 2], b: [u32; 2], c: [[u32; 2]; 2]) -> SampleConfig {
    SampleConfig::new(
        a.to_vec(),
        b.to_vec(),
        c.iter().map(|r| r.to_vec()).collect(),
    )
    .unwrap()
}

fn swap_loci(cfg: &SampleConfig) -> SampleConfig {
    let c = (0..cfg.l())
        .map(|j| (0..cfg.k()).map(|i| cfg.c[i][j]).collect())
        .collect();
    SampleConfig::new(cfg.b.clone(), cfg.a.clone(), c).unwrap()
}

fn swap_alleles_a(cfg: &SampleConfig) -> SampleConfig {
    let mut out = cfg.clone();
    out.a.reverse();
    out.c.reverse();
    out
}

fn close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * x.abs().max(y.abs()).max(1e-300)
}

fn small_config() -> impl Strategy<Value = SampleConfig> {
    (
        prop::array::uniform2(0u32..2),
        prop::array::uniform2(0u32..2),
        prop::array::uniform4(0u32..2),
    )
        .prop_map(|(a, b, c)| config(a, b, [[c[0], c[1]], [c[2], c[3]]]))
        .prop_filter("nonempty", |cfg| cfg.n() > 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_probabilities_are_normalized(theta in 0.05f64..5.0, rho in 0.1f64..200.0, c in 1u32..4) {
        let p = ModelParams::symmetric(2, 2, theta, rho);
        let cfgs = typed_configs(2, 2, 0, 0, c);
        let total: f64 = exact(&cfgs, &p).iter().zip(&cfgs).map(|(q, cfg)| q * cfg.multinomial()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "total {}", total);
    }

    #[test]
    fn exact_is_consistent_under_marginalization(theta in 0.05f64..5.0, rho in 0.1f64..200.0, cfg in small_config()) {
        let p = ModelParams::symmetric(2, 2, theta, rho);
        let mut roots = vec![cfg.clone()];
        for j in 0..2 {
            let mut up = cfg.clone();
            up.c[0][j] += 1;
            roots.push(up);
        }
        let mut down = cfg.clone();
        down.a[0] += 1;
        roots.push(down);
        let q = exact(&roots, &p);
        prop_assert!(close(q[1] + q[2], q[3], 1e-9), "{} + {} vs {}", q[1], q[2], q[3]);
    }

    #[test]
    fn exact_and_gaussian_are_relabel_invariant(theta in 0.05f64..5.0, rho in 1.0f64..200.0, cfg in small_config()) {
        let p = ModelParams::symmetric(2, 2, theta, rho);
        let roots = vec![cfg.clone(), swap_loci(&cfg), swap_alleles_a(&cfg)];
        let q = exact(&roots, &p);
        prop_assert!(close(q[0], q[1], 1e-9) && close(q[0], q[2], 1e-9), "{:?}", q);
        let g: Vec<f64> = roots.iter().map(|r| q_gauss(r, &p, Some(4)).unwrap()).collect();
        prop_assert!(close(g[0], g[1], 1e-12) && close(g[0], g[2], 1e-12), "{:?}", g);
    }

    #[test]
    fn leading_term_is_product_of_marginals(theta in 0.05f64..5.0, rho in 1.0f64..200.0, cfg in small_config()) {
        let p = ModelParams::symmetric(2, 2, theta, rho);
        let product = one_locus_q(&p, Locus::A, &cfg.marginal_a()).unwrap()
            * one_locus_q(&p, Locus::B, &cfg.marginal_b()).unwrap();
        prop_assert!(close(q0(&cfg, &p).unwrap(), product, 1e-12));
        prop_assert!(close(q_gauss(&cfg, &p, Some(0)).unwrap(), product, 1e-12));
    }
}

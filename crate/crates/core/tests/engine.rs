use nalgebra::DMatrix;

use semipar_pricing::engine::{
    Benchmark, Noise, Phase, Policy, realize_demand, run_episode, sample_exploration_prices,
};
use semipar_pricing::equilibrium::check_uniqueness;
use semipar_pricing::harness::{build_reference_market, reference_sellers};
use semipar_pricing::rng::{Purpose, stream};
use semipar_pricing::theta::ExplorationDistribution;

fn moments(draws: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = draws.len() as f64;
    let d = draws[0].len();
    let mean: Vec<f64> = (0..d).map(|j| draws.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let var = (0..d)
        .map(|j| draws.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0))
        .collect();
    (mean, var)
}

#[test]
fn exploration_sampling_moments() {
    let dist = ExplorationDistribution::new(vec![1.5, 1.5], DMatrix::identity(2, 2), 0.5, 2.0).unwrap();
    let mut rng = stream(1, 0, 0, Purpose::Exploration);
    let draws: Vec<Vec<f64>> = (0..100_000).map(|_| sample_exploration_prices(&dist, &mut rng)).collect();
    let (mean, _) = moments(&draws);
    assert!(mean.iter().all(|m| (m - 1.5).abs() < 0.02));

    let sig2 = [0.09, 0.36];
    let dist = ExplorationDistribution::diagonal(vec![0.0, 1.0], &sig2).unwrap();
    let draws: Vec<Vec<f64>> = (0..100_000).map(|_| sample_exploration_prices(&dist, &mut rng)).collect();
    let (_, var) = moments(&draws);
    for (v, s) in var.iter().zip(sig2) {
        assert!((v / s - 1.0).abs() < 0.05);
    }

    let a: Vec<Vec<f64>> = (0..5).map(|_| dist.sample(&mut stream(9, 1, 0, Purpose::Exploration))).collect();
    let mut r1 = stream(9, 1, 0, Purpose::Exploration);
    let mut r2 = stream(9, 1, 0, Purpose::Exploration);
    for _ in 0..5 {
        assert_eq!(dist.sample(&mut r1), dist.sample(&mut r2));
    }
    assert!(a.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn demand_realization() {
    let market = build_reference_market(2, 100, 0.03, 1).unwrap();
    let domain = market.index_domain();
    let mut rngs: Vec<_> = (0..2).map(|i| stream(5, 0, i, Purpose::Noise)).collect();
    let mut price_rng = stream(5, 0, 0, Purpose::Exploration);
    for _ in 0..2000 {
        let p = sample_exploration_prices(&market.exploration, &mut price_rng);
        let (clean, _) = realize_demand(&market.sellers, &p, &[Noise::None; 2], &mut rngs, domain);
        for (s, y) in market.sellers.iter().zip(&clean) {
            assert_eq!(*y, s.link().psi(domain.clamp(s.demand_index(&p))));
        }
        let (noisy, _) = realize_demand(&market.sellers, &p, &market.noise, &mut rngs, domain);
        for (y, c) in noisy.iter().zip(&clean) {
            assert!((y - c).abs() <= 0.03);
            assert!(*y > -0.03 && *y < 1.03);
        }
    }
    let far = [50.0, 0.0];
    let (_, clamps) = realize_demand(&market.sellers, &far, &[Noise::None; 2], &mut rngs, domain);
    assert_eq!(clamps, 2);
}

#[test]
fn episode_invariants_and_csv() {
    let market = build_reference_market(2, 400, 0.03, 3).unwrap();
    let log = run_episode(&market).unwrap();
    assert!(log.completed());
    let tau = market.tau();
    assert_eq!(log.rows.iter().filter(|r| r.phase == Phase::Explore).count(), tau);
    assert_eq!(log.rows.iter().filter(|r| r.phase == Phase::Exploit).count(), 400 - tau);
    for i in 0..2 {
        let (n1, n2) = market.split_sizes(i);
        assert_eq!(n1, tau / 2);
        assert_eq!(n1 + n2, tau);
        let sum: f64 = log.rows.iter().map(|r| r.regret_inc[i]).sum();
        assert!((sum - log.cum_regret[i]).abs() <= 1e-9 * 400.0);
    }
    for r in &log.rows {
        assert!(r.regret_inc.iter().all(|&x| x >= -1e-9));
        if r.phase == Phase::Exploit {
            for (s, p) in market.sellers.iter().zip(&r.prices) {
                assert!(s.price_box().contains(*p));
            }
        }
    }
    let mut out = Vec::new();
    log.write_period_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,phase,seller,price,demand,regret_inc,ne_dist_sq"));
    assert_eq!(lines.count(), 800);

    let again = run_episode(&market).unwrap();
    assert_eq!(again, log);
}

#[test]
fn grid_benchmark_agrees_with_closed_form() {
    let mut market = build_reference_market(2, 150, 0.03, 8).unwrap();
    let closed = run_episode(&market).unwrap();
    market.benchmark = Benchmark::Grid(100_000);
    let grid = run_episode(&market).unwrap();
    for i in 0..2 {
        assert!((closed.cum_regret[i] - grid.cum_regret[i]).abs() < 1e-3);
    }
}

#[test]
fn equilibrium_policy_has_no_regret() {
    let mut market = build_reference_market(2, 300, 0.03, 4).unwrap();
    market.policy = Policy::Equilibrium;
    let log = run_episode(&market).unwrap();
    for r in &log.cum_regret {
        assert!(r.abs() <= 1e-9 * 300.0);
    }
}

#[test]
fn exact_model_converges_geometrically() {
    let mut market = build_reference_market(2, 200, 0.0, 5).unwrap();
    market.noise = vec![Noise::None; 2];
    market.policy = Policy::TrueModel;
    let l_gamma = check_uniqueness(&reference_sellers(2).unwrap()).unwrap().l_gamma;
    let log = run_episode(&market).unwrap();
    let tau = log.tau;
    let dist: Vec<f64> = log.rows[tau..].iter().map(|r| r.ne_dist_sq.sqrt()).collect();
    for w in dist.windows(2).skip(1) {
        assert!(w[1] <= w[0] + 1e-9);
    }
    let usable: Vec<f64> = dist.iter().copied().take_while(|d| *d > 1e-9).collect();
    assert!(usable.len() >= 3);
    let k = (usable.len() - 1) as f64;
    let ratio = (usable[usable.len() - 1] / usable[0]).powf(1.0 / k);
    assert!(ratio <= l_gamma + 0.05, "ratio {ratio}");
}

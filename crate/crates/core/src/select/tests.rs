use super::*;
use crate::model::{QualityPolicy, SyntheticRQLaw};
use crate::rq::{fit_rq, EstimatorOptions, GridStat, MeasurementSite, QualitySample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

fn est(grid: &[f64], stats: &[(f64, f64, f64)]) -> RQEstimate {
    let stats = stats
        .iter()
        .map(|&(count, mean, variance)| GridStat { count, mean, variance })
        .collect();
    RQEstimate::from_stats(grid.to_vec(), stats, EstimatorOptions::default()).unwrap()
}

fn exact(grid: &[f64], means: &[f64]) -> RQEstimate {
    est(grid, &means.iter().map(|&m| (10.0, m, 0.0)).collect::<Vec<_>>())
}

/// Independent lower bound: mean − t_{α*}(n − 1)·sd·√(1 + 1/n).
fn oracle_bound(s: &GridStat, alpha_star: f64) -> f64 {
    let t = StudentsT::new(0.0, 1.0, s.count - 1.0).unwrap().inverse_cdf(alpha_star);
    s.mean - t * s.variance.sqrt() * (1.0 + 1.0 / s.count).sqrt()
}

#[test]
fn quality_constrained_examples() {
    let e = exact(&[1.0, 2.0, 3.0], &[2.0, 5.0, 9.0]);
    let cfg = ModeConfig::quality_constrained(vec![1.0, 2.0, 3.0], 5.0, 0.95);
    let s = select_quality_constrained(&e, &cfg).unwrap();
    assert_eq!(s.chosen, Choice::PromptSize(2.0));
    assert!(s.feasible);
    let cfg = ModeConfig::quality_constrained(vec![1.0, 2.0, 3.0], -f64::INFINITY, 0.95);
    assert_eq!(
        select_quality_constrained(&e, &cfg).unwrap().chosen,
        Choice::PromptSize(1.0)
    );
    let cfg = ModeConfig::quality_constrained(vec![1.0, 2.0, 3.0], 9.5, 0.95);
    let s = select_quality_constrained(&e, &cfg).unwrap();
    assert_eq!(s.chosen, Choice::FullData);
    assert!(!s.feasible && s.diagnostics.iter().all(|d| !d.feasible));
    let cfg = ModeConfig::quality_constrained(vec![1.0, 2.5], 5.0, 0.95);
    assert_eq!(
        select_quality_constrained(&e, &cfg),
        Err(SelectError::GridNotCovered(2.5))
    );
    let mut cfg = cfg;
    cfg.interpolate_off_grid = true;
    assert!(select_quality_constrained(&e, &cfg).is_ok());
}

#[test]
fn quality_constrained_on_law_matches_scan() {
    let law = SyntheticRQLaw::new(10.0, 1.0, 1.0, 0.0);
    let grid = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0];
    let policy = QualityPolicy::default();
    let mut samples = Vec::new();
    for (j, &l) in grid.iter().enumerate() {
        for i in 0..50u64 {
            samples.push(QualitySample {
                data_point_id: i,
                l_p: l,
                quality: crate::model::sample_quality(&law, l, crate::rng::derive_seed(3, &[j as u64, i]), &policy),
                site: MeasurementSite::Source,
            });
        }
    }
    let e = fit_rq(&samples, EstimatorOptions::default()).unwrap();
    let cfg = ModeConfig::quality_constrained(grid.to_vec(), 8.0, 0.95);
    let s = select_quality_constrained(&e, &cfg).unwrap();
    let scan = grid
        .iter()
        .zip(e.stats())
        .find(|(_, st)| oracle_bound(st, 0.95) >= 8.0)
        .map(|(&l, _)| l);
    assert_eq!(s.chosen.prompt_size(), scan);
    assert!(scan.is_some());
}

#[test]
fn rate_constrained_examples() {
    let e = exact(&[1.0, 2.0, 4.0], &[2.0, 5.0, 9.0]);
    let topo = Topology::four_role(0.0, 0.0, 100.0, 100.0, 0.0, 0.0).unwrap();
    let cfg = ModeConfig::rate_constrained(vec![1.0, 2.0, 4.0], 4.0, 1.0, 10.0, 1.0);
    let s = select_rate_constrained(&e, &cfg, &topo, "s", "g", "d").unwrap();
    assert_eq!(s.chosen, Choice::PromptSize(4.0));
    let v: Vec<f64> = s.diagnostics.iter().map(|d| d.value.unwrap()).collect();
    assert!((v[0] + 9.0).abs() < 1e-12 && (v[1] - 1.6).abs() < 1e-12 && (v[2] - 10.0 / 3.0).abs() < 1e-12);

    let cfg = ModeConfig::rate_constrained(vec![1.0, 2.0, 4.0], 0.0, 1.0, 10.0, 1.0);
    assert_eq!(
        select_rate_constrained(&e, &cfg, &topo, "s", "g", "d").unwrap().chosen,
        Choice::PromptSize(1.0)
    );

    // c_sg = 3 excludes L_p = 4
    let narrow = Topology::four_role(0.0, 0.0, 3.0, 100.0, 0.0, 0.0).unwrap();
    let cfg = ModeConfig::rate_constrained(vec![1.0, 2.0, 4.0], 4.0, 1.0, 10.0, 1.0);
    assert_eq!(
        select_rate_constrained(&e, &cfg, &narrow, "s", "g", "d")
            .unwrap()
            .chosen,
        Choice::PromptSize(2.0)
    );

    let cfg = ModeConfig::rate_constrained(vec![1.0, 2.0, 4.0], 4.0, 1.0, 10.0, 4.0);
    assert!(matches!(
        select_rate_constrained(&e, &cfg, &narrow, "s", "g", "d"),
        Err(SelectError::Infeasible(_))
    ));
    let thin = Topology::four_role(0.0, 0.0, 100.0, 5.0, 0.0, 0.0).unwrap();
    let cfg = ModeConfig::rate_constrained(vec![1.0, 2.0, 4.0], 4.0, 1.0, 10.0, 1.0);
    assert!(matches!(
        select_rate_constrained(&e, &cfg, &thin, "s", "g", "d"),
        Err(SelectError::Infeasible(_))
    ));
}

#[test]
fn unconstrained_examples() {
    let e = exact(&[1.0, 2.0, 4.0], &[2.0, 5.0, 9.0]);
    let cfg = ModeConfig::unconstrained(vec![1.0, 2.0, 4.0], 0.0, 10.0, 0.5);
    assert_eq!(select_unconstrained(&e, &cfg).unwrap().chosen, Choice::PromptSize(1.0));
    // w ≫ q: objective negative, best trade-off found by scan
    let cfg = ModeConfig::unconstrained(vec![1.0, 2.0, 4.0], 5000.0, 10.0, 0.5);
    let best = [1.0, 2.0, 4.0]
        .iter()
        .zip([2.0, 5.0, 9.0])
        .map(|(&l, q)| (l, (10.0 - l) * (1.0 - 5000.0 / q)))
        .fold((0.0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
    assert_eq!(
        select_unconstrained(&e, &cfg).unwrap().chosen,
        Choice::PromptSize(best.0)
    );
    // (7 − 1)(1 − 1/2) = (7 − 3)(1 − 1/4) = 3 exactly
    let e = exact(&[1.0, 3.0], &[2.0, 4.0]);
    let s = select_unconstrained(&e, &ModeConfig::unconstrained(vec![1.0, 3.0], 1.0, 7.0, 0.5)).unwrap();
    assert_eq!(s.diagnostics[0].value, Some(3.0));
    assert_eq!(s.diagnostics[1].value, Some(3.0));
    assert_eq!(s.chosen, Choice::PromptSize(1.0));
    let s = select_unconstrained(&e, &ModeConfig::unconstrained(vec![1.0, 3.0], 1.0, 8.0, 0.5)).unwrap();
    assert_eq!(s.chosen, Choice::PromptSize(3.0));
}

#[test]
fn config_validation() {
    let mut cfg = ModeConfig::quality_constrained(vec![1.0, 1.0], 1.0, 0.9);
    assert_eq!(cfg.problems().len(), 1);
    cfg.grid = vec![];
    assert!(!cfg.problems().is_empty());
    let mut cfg = ModeConfig::rate_constrained(vec![1.0], 0.0, 1.0, 10.0, 0.0);
    cfg.q_min = Some(3.0);
    assert_eq!(cfg.problems().len(), 1);
    let e = exact(&[1.0], &[2.0]);
    let cfg = ModeConfig::unconstrained(vec![1.0], 0.0, 10.0, 0.0);
    assert_eq!(
        select_quality_constrained(&e, &cfg),
        Err(SelectError::WrongMode(Mode::Unconstrained))
    );
    let json = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<ModeConfig>(&json).unwrap(), cfg);
}

fn random_estimate(r: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, RQEstimate) {
    let mut grid: Vec<f64> = (0..n).map(|_| r.random_range(1..40) as f64 * 0.25).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let stats: Vec<(f64, f64, f64)> = grid
        .iter()
        .map(|_| {
            (
                r.random_range(2..30) as f64,
                r.random_range(-2.0..12.0),
                r.random_range(0.0..4.0),
            )
        })
        .collect();
    (grid.clone(), est(&grid, &stats))
}

#[test]
fn selectors_match_exhaustive_scans() {
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..300 {
        let n = r.random_range(1..8);
        let (grid, e) = random_estimate(&mut r, n);
        // quality-constrained
        let q_min = r.random_range(-1.0..11.0);
        let a = r.random_range(0.5..0.99);
        let s = select_quality_constrained(&e, &ModeConfig::quality_constrained(grid.clone(), q_min, a)).unwrap();
        let scan = grid
            .iter()
            .zip(e.stats())
            .find(|(_, st)| oracle_bound(st, a) >= q_min)
            .map(|(&l, _)| l);
        assert_eq!(s.chosen.prompt_size(), scan);
        assert_eq!(s.chosen == Choice::FullData, s.diagnostics.iter().all(|d| !d.feasible));

        // unconstrained
        let (w, l_bits, l_min) = (
            r.random_range(0.0..15.0),
            r.random_range(1.0..12.0),
            r.random_range(0.0..3.0),
        );
        let s = select_unconstrained(&e, &ModeConfig::unconstrained(grid.clone(), w, l_bits, l_min)).unwrap();
        let mut best: Option<(f64, f64)> = None;
        for (&l, st) in grid.iter().zip(e.stats()) {
            if l >= l_min && l <= l_bits && st.mean > 0.0 {
                let v = (l_bits - l) * (1.0 - w / st.mean);
                if best.is_none_or(|b| v > b.1) {
                    best = Some((l, v));
                }
            }
        }
        assert_eq!(s.chosen.prompt_size(), best.map(|b| b.0));

        // rate-constrained
        let lambda = r.random_range(0.5..3.0);
        let c_sg = r.random_range(0.0..30.0);
        let c_gd = r.random_range(0.0..40.0);
        let topo = Topology::four_role(0.0, 0.0, c_sg, c_gd, 0.0, 0.0).unwrap();
        let cfg = ModeConfig::rate_constrained(grid.clone(), w, lambda, l_bits, l_min);
        let got = select_rate_constrained(&e, &cfg, &topo, "s", "g", "d");
        if lambda * l_min > c_sg || lambda * l_bits > c_gd {
            assert!(matches!(got, Err(SelectError::Infeasible(_))));
            continue;
        }
        let mut best: Option<(f64, f64)> = None;
        for (&l, st) in grid.iter().zip(e.stats()) {
            if l >= l_min && l <= l_bits && lambda * l <= c_sg && st.mean > 0.0 {
                let v = lambda * (l_bits - l) * (1.0 - w / st.mean);
                if best.is_none_or(|b| v > b.1) {
                    best = Some((l, v));
                }
            }
        }
        match best {
            Some((l, _)) => assert_eq!(got.unwrap().chosen, Choice::PromptSize(l)),
            None => assert!(matches!(got, Err(SelectError::Infeasible(_)))),
        }
    }
}

proptest! {
    #[test]
    fn quality_selection_monotone(seed in any::<u64>(), q1 in -2.0f64..12.0, dq in 0.0f64..5.0, a1 in 0.5f64..0.95, da in 0.0f64..0.04) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (grid, e) = random_estimate(&mut r, 6);
        let pick = |q: f64, a: f64| {
            select_quality_constrained(&e, &ModeConfig::quality_constrained(grid.clone(), q, a))
                .unwrap()
                .chosen
                .prompt_size()
                .unwrap_or(f64::INFINITY)
        };
        prop_assert!(pick(q1 + dq, a1) >= pick(q1, a1));
        prop_assert!(pick(q1, a1 + da) >= pick(q1, a1));
    }

    #[test]
    fn quality_selection_scale_invariant(seed in any::<u64>(), q in -2.0f64..12.0, k in prop::sample::select(vec![0.25f64, 0.5, 2.0, 4.0, 8.0])) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (grid, e) = random_estimate(&mut r, 6);
        let scaled: Vec<(f64, f64, f64)> = e.stats().iter().map(|s| (s.count, s.mean * k, s.variance * k * k)).collect();
        let e2 = est(&grid, &scaled);
        let a = select_quality_constrained(&e, &ModeConfig::quality_constrained(grid.clone(), q, 0.9)).unwrap();
        let b = select_quality_constrained(&e2, &ModeConfig::quality_constrained(grid.clone(), q * k, 0.9)).unwrap();
        prop_assert_eq!(a.chosen, b.chosen);
    }
}

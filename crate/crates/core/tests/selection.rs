use mocha_core::baselines::{ucb_scores, BeamEntry};
use mocha_core::engine::{Pool, RngStreams};
use mocha_core::schedule::AnnealSchedule;
use mocha_core::{Candidate, MetricVector, SelectionStrategy, SkillDoc};

fn member(id: u64, per_example: Vec<f64>) -> Candidate {
    let mean = per_example.iter().sum::<f64>() / per_example.len() as f64;
    Candidate {
        id,
        doc: SkillDoc::default(),
        parent_id: id.checked_sub(1),
        minibatch_scores: None,
        validation_scores: Some(MetricVector::new(vec![mean, 1.0, 1.0])),
        validation_per_example: per_example,
        created_at_budget: 0,
    }
}

#[test]
fn ucb_bonus_favours_the_rarely_visited_entry() {
    let beam = [
        BeamEntry {
            id: 0,
            visits: 5,
            total_reward: 3.0,
        },
        BeamEntry {
            id: 1,
            visits: 1,
            total_reward: 0.5,
        },
    ];
    let scores = ucb_scores(&beam, std::f64::consts::SQRT_2);
    let bonus = [scores[0] - 0.6, scores[1] - 0.5];
    // sqrt(2) * sqrt(ln 6 / visits)
    let oracle = |visits: f64| std::f64::consts::SQRT_2 * (6f64.ln() / visits).sqrt();
    assert!((bonus[0] - oracle(5.0)).abs() < 1e-12);
    assert!((bonus[1] - oracle(1.0)).abs() < 1e-12);
    assert_eq!(format!("{:.3} {:.3}", bonus[0], bonus[1]), "0.847 1.893");
    assert!(scores[1] > scores[0]);
}

#[test]
fn stochastic_pareto_samples_in_proportion_to_wins() {
    let mut pool = Pool::new(member(0, vec![1.0, 1.0, 1.0, 0.0])).unwrap();
    pool.push(member(1, vec![0.0, 0.0, 0.0, 1.0])).unwrap();
    let mut selector = SelectionStrategy::StochasticPareto
        .build(AnnealSchedule::default(), 5, 3)
        .unwrap();
    let mut streams = RngStreams::new(11);
    let draws = 2000;
    let first = (0..draws)
        .filter(|_| selector.select_parent(&pool, &mut streams).unwrap().parent == 0)
        .count();
    let freq = first as f64 / draws as f64;
    // binomial sd at p = 0.75 is about 0.0097
    assert!((freq - 0.75).abs() < 0.04, "{freq}");
}

#[test]
fn mocha_parent_is_a_chebyshev_minimizer() {
    use mocha_core::scalarize::{chebyshev, WeightVector};
    let mut pool = Pool::new(member(0, vec![0.2, 0.2])).unwrap();
    pool.push(member(1, vec![0.9, 0.9])).unwrap();
    let mut third = member(2, vec![0.5, 0.5]);
    third.validation_scores = Some(MetricVector::new(vec![1.0, 0.1, 1.0]));
    pool.push(third).unwrap();
    let mut selector = SelectionStrategy::Mocha
        .build(AnnealSchedule::default(), 5, 3)
        .unwrap();
    let mut streams = RngStreams::new(5);
    for _ in 0..200 {
        let sel = selector.select_parent(&pool, &mut streams).unwrap();
        let w: WeightVector = sel.weight.expect("mocha samples a weight");
        let score = |c: &Candidate| chebyshev(c.validation(), &w).unwrap();
        let best = pool.members().iter().map(score).fold(f64::INFINITY, f64::min);
        assert!(score(pool.get(sel.parent).unwrap()) <= best + 1e-12);
    }
}

//! Statistical and property checks on the world-model story generator.

use entnet::seeds::substream;
use entnet::tasks::world::{
    generate_world_story, parse_dataset, world_oracle, write_dataset, Action, Direction, Statement, WorldConfig,
};
use proptest::prelude::*;

/// Pearson statistic of `observed` against equal expected counts.
fn chi_square(observed: &[usize]) -> f64 {
    let total: usize = observed.iter().sum();
    let expected = total as f64 / observed.len() as f64;
    observed.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum()
}

// Upper 0.1% points of the chi-square distribution.
const CHI2_DF1: f64 = 10.83;
const CHI2_DF3: f64 = 16.27;
const CHI2_DF4: f64 = 18.47;
const CHI2_DF99: f64 = 148.23;

fn dir_index(d: Direction) -> usize {
    Direction::ALL.iter().position(|&x| x == d).unwrap()
}

#[test]
fn initial_positions_and_facings_are_uniform() {
    let config = WorldConfig::fixed(4);
    let mut rng = substream(11, "generator-uniformity");
    let mut cells = vec![vec![0usize; 100]; 2];
    let mut facings = vec![vec![0usize; 4]; 2];
    for _ in 0..20_000 {
        let story = generate_world_story(&config, &mut rng).unwrap();
        for st in &story.statements {
            match *st {
                Statement::Place { agent, x, y } => cells[agent - 1][((x - 1) * 10 + (y - 1)) as usize] += 1,
                Statement::Act { agent, action: Action::Face(d) } => facings[agent - 1][dir_index(d)] += 1,
                Statement::Act { .. } => panic!("a four-line story has no actions"),
            }
        }
    }
    for a in 0..2 {
        let c = chi_square(&cells[a]);
        assert!(c < CHI2_DF99, "agent{} placement chi-square {c}", a + 1);
        let f = chi_square(&facings[a]);
        assert!(f < CHI2_DF3, "agent{} facing chi-square {f}", a + 1);
    }
}

/// Replays actions and compares the face/move split with the probability
/// implied by even proposals followed by rejection of off-grid moves.
#[test]
fn accepted_actions_follow_even_face_move_proposals() {
    let config = WorldConfig::fixed(30);
    let mut rng = substream(12, "generator-proposals");
    let (mut faces, mut expected_faces, mut variance) = (0usize, 0.0, 0.0);
    let mut agents = [0usize; 2];
    let mut dirs = [0usize; 4];
    let mut free_steps = [0usize; 5];
    for _ in 0..4_000 {
        let story = generate_world_story(&config, &mut rng).unwrap();
        let mut pos = [(0i64, 0i64); 2];
        let mut facing = [Direction::N; 2];
        for (i, st) in story.statements.iter().enumerate() {
            match (i, *st) {
                (_, Statement::Place { agent, x, y }) => pos[agent - 1] = (x, y),
                (0..4, Statement::Act { agent, action: Action::Face(d) }) => facing[agent - 1] = d,
                (_, Statement::Act { agent, action }) => {
                    let a = agent - 1;
                    agents[a] += 1;
                    let (dx, dy) = facing[a].delta();
                    let legal = (1..=5i64)
                        .filter(|k| {
                            let (x, y) = (pos[a].0 + k * dx, pos[a].1 + k * dy);
                            (1..=10).contains(&x) && (1..=10).contains(&y)
                        })
                        .count();
                    let p_face = 0.5 / (0.5 + 0.5 * legal as f64 / 5.0);
                    expected_faces += p_face;
                    variance += p_face * (1.0 - p_face);
                    match action {
                        Action::Face(d) => {
                            faces += 1;
                            dirs[dir_index(d)] += 1;
                            facing[a] = d;
                        }
                        Action::Move(k) => {
                            if legal == 5 {
                                free_steps[k as usize - 1] += 1;
                            }
                            pos[a] = (pos[a].0 + i64::from(k) * dx, pos[a].1 + i64::from(k) * dy);
                        }
                    }
                }
            }
        }
    }
    let z = (faces as f64 - expected_faces) / variance.sqrt();
    assert!(z.abs() < 4.0, "faces {faces} vs expected {expected_faces:.1} (z = {z:.2})");
    assert!(chi_square(&agents) < CHI2_DF1, "agent choice {agents:?}");
    assert!(chi_square(&dirs) < CHI2_DF3, "face directions {dirs:?}");
    assert!(chi_square(&free_steps) < CHI2_DF4, "move lengths {free_steps:?}");
}

#[test]
fn seeded_generation_is_reproducible() {
    let config = WorldConfig::variable(4, 40);
    let draw = || {
        let mut rng = substream(5, "generator");
        (0..50).map(|_| generate_world_story(&config, &mut rng).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(draw(), draw());
}

proptest! {
    #[test]
    fn generated_stories_replay_on_grid(seed in any::<u64>(), lo in 1usize..30, span in 0usize..30) {
        let hi = (lo + span).max(4);
        let config = WorldConfig::variable(lo, hi);
        let mut rng = substream(seed, "generator");
        let story = generate_world_story(&config, &mut rng).unwrap();
        let n = story.statements.len();
        prop_assert!(n >= lo.max(4) && n <= hi);
        prop_assert_eq!(world_oracle(&story.statements, &config).unwrap(), story.answers.clone());
        for &(x, y) in &story.answers {
            prop_assert!((1..=10).contains(&x) && (1..=10).contains(&y));
        }
    }

    #[test]
    fn dataset_text_round_trips(seed in any::<u64>(), count in 1usize..6) {
        let config = WorldConfig::variable(4, 20);
        let mut rng = substream(seed, "generator");
        let stories: Vec<_> = (0..count).map(|_| generate_world_story(&config, &mut rng).unwrap()).collect();
        let text = write_dataset(&["split = train".to_string()], &stories);
        prop_assert_eq!(parse_dataset(&text).unwrap(), stories);
    }
}

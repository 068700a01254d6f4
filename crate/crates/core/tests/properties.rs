use proptest::prelude::*;

use monoq::agents::{greedy_action, select_action, EpsilonSchedule};
use monoq::autodiff::ParamStore;
use monoq::envs::{joint_actions, joint_index, CoopGridworld, Environment, EpisodeRecord};
use monoq::harness::{nearest_rank, Checkpoint, MetricLog, MetricRow, Quartiles, RunConfig};
use monoq::learner::{Learner, ReplayBuffer};
use monoq::mixers::{MixerConfig, MixerKind, MixerNonlin, MixingNet};
use monoq::oracles::{optimal_additive_fit, optimal_monotone_fit, sq_residual, JointQTable};
use monoq::rng::{stream_rng, Stream};

const MONOTONE_KINDS: [MixerKind; 6] = [
    MixerKind::Vdn,
    MixerKind::VdnS,
    MixerKind::Qmix,
    MixerKind::QmixNs,
    MixerKind::QmixLin,
    MixerKind::Qmix2Lin,
];

fn mixer(kind: MixerKind, tanh: bool, n: usize, seed: u64) -> (MixingNet, ParamStore) {
    let mut cfg = MixerConfig::new(kind, n, 3);
    cfg.embed = 6;
    cfg.hypernet_hidden = 8;
    if tanh {
        cfg.nonlin = MixerNonlin::Tanh;
    }
    let m = MixingNet::new(cfg).unwrap();
    let mut store = ParamStore::new();
    m.init_params(&mut store, &mut stream_rng(seed, Stream::Init));
    (m, store)
}

fn matrix(max_side: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(-10.0..10.0f64, c), r))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixing_is_monotone_in_every_utility(
        kind in prop::sample::select(MONOTONE_KINDS.to_vec()),
        tanh in any::<bool>(),
        seed in 0u64..1000,
        q in prop::collection::vec(-5.0..5.0f64, 3),
        state in prop::collection::vec(-1.0..1.0f64, 3),
        agent in 0usize..3,
        delta in 1e-3..3.0f64,
    ) {
        let (m, store) = mixer(kind, tanh, 3, seed);
        let mut up = q.clone();
        up[agent] += delta;
        prop_assert!(m.mix(&store, &up, &state).unwrap() >= m.mix(&store, &q, &state).unwrap());
        prop_assert!(m.partials(&store, &q, &state).unwrap().iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn monotone_mixers_are_argmax_consistent(
        kind in prop::sample::select(MONOTONE_KINDS.to_vec()),
        seed in 0u64..1000,
        n in 2usize..=3,
        a_n in 2usize..=4,
        flat in prop::collection::vec(-5.0..5.0f64, 12),
        state in prop::collection::vec(-1.0..1.0f64, 3),
    ) {
        let (m, store) = mixer(kind, false, n, seed);
        let q: Vec<Vec<f64>> = (0..n).map(|a| flat[a * 4..a * 4 + a_n].to_vec()).collect();
        let rows: Vec<Vec<f64>> = (0..a_n.pow(n as u32))
            .map(|j| joint_actions(j, n, a_n).iter().enumerate().map(|(a, &u)| q[a][u]).collect())
            .collect();
        let table = JointQTable::new(n, a_n, m.mix_many(&store, &rows, &state).unwrap()).unwrap();
        let all = vec![true; a_n];
        let greedy: Vec<usize> = q.iter().map(|qa| greedy_action(qa, &all).unwrap()).collect();
        let (_, best) = table.argmax();
        prop_assert!((table.get(&greedy) - best).abs() <= 1e-12 * best.abs().max(1.0));
    }

    #[test]
    fn additive_residual_has_zero_row_and_column_sums(m in matrix(5)) {
        let fit = optimal_additive_fit(&m).unwrap();
        for (r, f) in m.iter().zip(&fit) {
            prop_assert!(r.iter().zip(f).map(|(a, b)| a - b).sum::<f64>().abs() < 1e-9);
        }
        for j in 0..m[0].len() {
            prop_assert!(m.iter().zip(&fit).map(|(r, f)| r[j] - f[j]).sum::<f64>().abs() < 1e-9);
        }
        let again = optimal_additive_fit(&fit).unwrap();
        prop_assert!(sq_residual(&fit, &again) < 1e-18);
    }

    #[test]
    fn monotone_fit_is_no_worse_than_additive(m in matrix(3)) {
        let mono = optimal_monotone_fit(&m).unwrap();
        let add = optimal_additive_fit(&m).unwrap();
        prop_assert!(sq_residual(&m, &mono) <= sq_residual(&m, &add) + 1e-7);
    }

    #[test]
    fn monotone_fit_keeps_monotone_matrices(rows in 1usize..=3, cols in 1usize..=3, base in prop::collection::vec(0.0..3.0f64, 9)) {
        // Cumulative sums along both axes are non-decreasing in each index.
        let mut m = vec![vec![0.0; cols]; rows];
        for i in 0..rows {
            for j in 0..cols {
                let above = if i > 0 { m[i - 1][j] } else { 0.0 };
                let left = if j > 0 { m[i][j - 1] } else { 0.0 };
                m[i][j] = f64::max(above, left) + base[i * 3 + j];
            }
        }
        let fit = optimal_monotone_fit(&m).unwrap();
        prop_assert!(sq_residual(&m, &fit) < 1e-12);
    }

    #[test]
    fn joint_index_round_trips(n in 1usize..=4, a_n in 2usize..=5, raw in any::<u64>()) {
        let total = a_n.pow(n as u32);
        let i = (raw % total as u64) as usize;
        let u = joint_actions(i, n, a_n);
        prop_assert!(u.iter().all(|&x| x < a_n));
        prop_assert_eq!(joint_index(&u, a_n), i);
    }

    #[test]
    fn epsilon_is_bounded_and_non_increasing(start in 0.0..=1.0f64, frac in 0.0..=1.0f64, anneal in 0u64..10_000, a in 0u64..20_000, b in 0u64..20_000) {
        let s = EpsilonSchedule { start, end: start * frac, anneal_steps: anneal };
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(s.value(lo) >= s.value(hi));
        prop_assert!(s.value(hi) >= s.end - 1e-15 && s.value(lo) <= s.start + 1e-15);
    }

    #[test]
    fn exploration_respects_masks(
        utilities in prop::collection::vec(-5.0..5.0f64, 5),
        mask in prop::collection::vec(any::<bool>(), 5),
        eps in 0.0..=1.0f64,
        seed in any::<u64>(),
    ) {
        let mut rng = stream_rng(seed, Stream::Exploration);
        let picked = select_action(&utilities, &mask, eps, &mut rng);
        if mask.iter().any(|&m| m) {
            prop_assert!(mask[picked.unwrap()]);
        } else {
            prop_assert!(picked.is_err());
        }
    }

    #[test]
    fn quartiles_are_ordered_observations(values in prop::collection::vec(-100.0..100.0f64, 1..40)) {
        let q = Quartiles::of(&values).unwrap();
        prop_assert!(q.p25 <= q.median && q.median <= q.p75);
        for v in [q.p25, q.median, q.p75] {
            prop_assert!(values.contains(&v));
        }
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(nearest_rank(&sorted, 100.0), *sorted.last().unwrap());
    }

    #[test]
    fn metric_csv_round_trips(rows in prop::collection::vec(
        (any::<Option<f64>>(), 0.0..1.0f64, -50.0..50.0f64, -50.0..50.0f64, 0.0..=1.0f64, any::<Option<f64>>()), 0..8)
    ) {
        let finite = |v: Option<f64>| v.filter(|x| x.is_finite());
        let log = MetricLog {
            rows: rows
                .iter()
                .enumerate()
                .map(|(i, r)| MetricRow {
                    env_step: 10 * i as u64,
                    train_loss: finite(r.0),
                    epsilon: r.1,
                    eval_return_mean: r.2,
                    eval_return_median: r.3,
                    eval_success_rate: r.4,
                    max_qtot_at_s0: finite(r.5),
                })
                .collect(),
        };
        prop_assert_eq!(MetricLog::from_csv(&log.to_csv()).unwrap(), log);
    }

    #[test]
    fn replay_keeps_the_latest_episodes(capacity in 1usize..10, pushes in 0usize..30) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            buf.push(EpisodeRecord { transitions: Vec::new(), truncated: i.is_multiple_of(2) });
        }
        prop_assert_eq!(buf.len(), pushes.min(capacity));
        for k in 0..buf.len() {
            let original = pushes - buf.len() + k;
            prop_assert_eq!(buf.get(k).unwrap().truncated, original.is_multiple_of(2));
        }
    }

    #[test]
    fn gridworld_replays_deterministically(seed in any::<u64>(), actions in prop::collection::vec(0usize..5, 2 * 12)) {
        let make = || CoopGridworld::new(4, 2, 1, 12, &mut stream_rng(seed, Stream::Env)).unwrap();
        let (mut a, mut b) = (make(), make());
        prop_assert_eq!(a.reset(), b.reset());
        for u in actions.chunks(2) {
            let (ra, rb) = (a.step(u).unwrap(), b.step(u).unwrap());
            prop_assert_eq!(&ra, &rb);
            if ra.terminated {
                break;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoints_round_trip_bit_exactly(seed in any::<u64>(), noise in prop::collection::vec(-1e3..1e3f64, 1..50)) {
        let cfg = RunConfig::from_json(r#"{
            "env": {"name": "two_step"},
            "algo": {"mixer": "qmix", "mixing_embed": 4, "hypernet_hidden": 8, "agent_hidden": 8},
            "train": {"total_env_steps": 0},
            "eval": {"interval": 10}
        }"#).unwrap().with_seed(seed);
        let env = cfg.build_env().unwrap();
        let mut learner = Learner::new(cfg.learner_config(env.spec()), &mut stream_rng(seed, Stream::Init)).unwrap();
        let mut flat = learner.online.flat_values();
        for (i, v) in flat.iter_mut().enumerate() {
            *v += noise[i % noise.len()];
        }
        learner.online.set_flat_values(&flat);
        let ck = Checkpoint::from_learner(&cfg, &learner, 1, 2);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        prop_assert!(back.online.values_bit_equal(&learner.online));
        prop_assert!(back.target.values_bit_equal(&learner.target));
        prop_assert_eq!(back.config, cfg);
    }
}

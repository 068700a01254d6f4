use criterion::{criterion_group, criterion_main, Criterion};
use monoq::config::RunConfig;
use monoq::envs::EpisodeRecord;
use monoq::learner::{rollout, Learner};
use monoq::rng::{stream_rng, Stream};

const GRID: &str = r#"{
    "env": {"name": "gridworld", "size": 5, "n_agents": 2},
    "algo": {"mixer": "MIXER"},
    "train": {"total_env_steps": 1},
    "eval": {"interval": 1}
}"#;

fn setup(mixer: &str) -> (Learner, Vec<EpisodeRecord>) {
    let cfg = RunConfig::from_json(&GRID.replace("MIXER", mixer)).unwrap();
    let mut env = cfg.build_env().unwrap();
    let learner = Learner::new(cfg.learner_config(env.spec()), &mut stream_rng(0, Stream::Init)).unwrap();
    let mut rng = stream_rng(0, Stream::Exploration);
    let episodes = (0..32).map(|_| rollout(env.as_mut(), &learner, 1.0, &mut rng).unwrap()).collect();
    (learner, episodes)
}

fn train_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("gridworld_train_step_b32");
    group.sample_size(10);
    for mixer in ["iql", "vdn", "qmix"] {
        let (mut learner, episodes) = setup(mixer);
        let batch: Vec<&EpisodeRecord> = episodes.iter().collect();
        group.bench_function(mixer, |b| {
            let mut episode = 0;
            b.iter(|| {
                episode += 1;
                learner.train_step(&batch, episode).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, train_step);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use tgi_monitor::protocol::{run_session, Execution, ExperimentConfig, SessionModel, SessionPlan};

const ROUNDS: u64 = 200_000;

fn engine(c: &mut Criterion) {
    let mut cfg = ExperimentConfig::preset("fig3a").unwrap();
    cfg.protocol.rounds = ROUNDS;
    let model = SessionModel::new(&cfg).unwrap();
    let plan = SessionPlan {
        rounds: ROUNDS,
        chunk_rounds: 8192,
        retained_rounds: 0,
    };
    let workers = std::thread::available_parallelism().map_or(2, |n| n.get()).max(2);

    let mut group = c.benchmark_group("session");
    group.throughput(Throughput::Elements(ROUNDS));
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel { workers }),
    ] {
        group.bench_with_input(BenchmarkId::new(name, ROUNDS), &exec, |b, &exec| {
            b.iter(|| run_session(&model, plan, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, engine);
criterion_main!(benches);

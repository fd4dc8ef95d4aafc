use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tunable_magnet::config::Setup;
use tunable_magnet::tuning::{run_campaign, CampaignSpec, Execution};

fn campaign(c: &mut Criterion) {
    let setup = Setup::nominal();
    let spec = CampaignSpec {
        set_points: vec![0.05, 0.175],
        gaps: vec![1e-3, 1.2e-3],
        n: 2,
        seed: 1,
    };
    let mut group = c.benchmark_group("campaign_2x2x2");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| {
            run_campaign(
                black_box(&spec),
                |g| setup.scenario(g),
                Execution::Sequential,
            )
            .unwrap()
        })
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| {
            run_campaign(
                black_box(&spec),
                |g| setup.scenario(g),
                Execution::Parallel { workers: None },
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, campaign);
criterion_main!(benches);

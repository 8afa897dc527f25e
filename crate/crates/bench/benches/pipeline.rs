use std::collections::BTreeSet;

use criterion::{criterion_group, criterion_main, Criterion};

use netext_core::extend::CostModel;
use netext_core::netmodel::{Flexibility, NodeRef, SiteId};
use netext_core::scenario::ScenarioConfig;
use netext_core::traversal::DEFAULT_HOP_LIMIT;
use netext_core::{
    check_all, fixture_motivating_example, gen_campus, plan_extension, probe_headers, simulate,
};

fn bench_simulate(c: &mut Criterion) {
    let (t, ps) = fixture_motivating_example();
    let probes = probe_headers(&ps, &t).probes;
    let probe = probes.first().expect("fixture has probes").clone();
    c.bench_function("simulate_fixture_probe", |b| {
        b.iter(|| simulate(&t, &probe.inject_at, &probe.header, DEFAULT_HOP_LIMIT).unwrap())
    });
}

fn bench_check_all(c: &mut Criterion) {
    let (t, ps) = fixture_motivating_example();
    c.bench_function("check_all_fixture", |b| {
        b.iter(|| check_all(&t, &ps, DEFAULT_HOP_LIMIT))
    });
}

fn bench_plan_extension(c: &mut Criterion) {
    let (t, ps) = fixture_motivating_example();
    let t = t.with_remote_site(SiteId::from("dc"), Flexibility::Full);
    let hosts: BTreeSet<NodeRef> = [NodeRef::from("u_1")].into_iter().collect();
    c.bench_function("plan_extension_fixture_u1", |b| {
        b.iter(|| {
            plan_extension(
                &t,
                &ps,
                &hosts,
                &SiteId::from("dc"),
                &CostModel::default(),
                DEFAULT_HOP_LIMIT,
            )
            .unwrap()
        })
    });
}

fn bench_gen_campus(c: &mut Criterion) {
    let cfg = ScenarioConfig::default();
    c.bench_function("gen_campus_default", |b| b.iter(|| gen_campus(&cfg).unwrap()));
}

criterion_group!(
    benches,
    bench_simulate,
    bench_check_all,
    bench_plan_extension,
    bench_gen_campus
);
criterion_main!(benches);

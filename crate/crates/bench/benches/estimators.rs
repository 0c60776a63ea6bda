use criterion::{black_box, criterion_group, criterion_main, Criterion};
use pairfx_core::regression::{FitOptions, StackedData};
use pairfx_core::{
    bootstrap_ci, default_dgm1, fit_linear, fit_logistic, generate, generate_covariate_bank,
    joint_table, point_estimator, AnalysisPipeline, BasisSpec, BootstrapPlan, EstimandSpec,
    ModelConfig, ModelKind, PairedDataset, Term,
};

fn dataset(pairs: usize) -> PairedDataset {
    let bank = generate_covariate_bank(pairs, 7);
    let config = default_dgm1(bank, 11);
    generate(&config, 0).expect("generator draw failed")
}

fn bench_dale(c: &mut Criterion) {
    c.bench_function("dale_joint_table_grid", |b| {
        b.iter(|| {
            let mut total = 0.0;
            for i in 1..100 {
                for j in 1..100 {
                    let f1 = i as f64 / 100.0;
                    let f2 = j as f64 / 100.0;
                    let table = joint_table(black_box(f1), black_box(f2), black_box(3.0)).unwrap();
                    total += table[1][1];
                }
            }
            total
        })
    });
}

fn bench_nuisance_fits(c: &mut Criterion) {
    let ds = dataset(500);
    let stacked = StackedData::from_dataset(&ds);
    let opts = FitOptions::default();
    let mut terms: Vec<Term> = ds.c_names().iter().map(|n| Term::linear(n)).collect();
    terms.extend(ds.x_names().iter().map(|n| Term::linear(n)));
    let propensity = BasisSpec::new(terms.clone());
    let mut outcome_terms = terms;
    outcome_terms.push(Term::linear("a_own"));
    outcome_terms.push(Term::linear("a_cotwin"));
    outcome_terms.push(Term::interaction(&["a_own", "a_cotwin"]));
    let outcome = BasisSpec::new(outcome_terms);

    let mut group = c.benchmark_group("nuisance_fits");
    group.bench_function("logistic_irls_1000x12", |b| {
        b.iter(|| fit_logistic(black_box(&stacked), "a_own", &propensity, &opts).unwrap())
    });
    group.bench_function("linear_ols_1000x15", |b| {
        b.iter(|| fit_linear(black_box(&stacked), "y_own", &outcome, &opts).unwrap())
    });
    group.finish();
}

fn bench_pipeline(c: &mut Criterion) {
    let ds = dataset(500);
    let config = ModelConfig::default_linear(ds.c_names(), ds.x_names());
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(30);
    group.bench_function("fit_500_pairs", |b| {
        b.iter(|| AnalysisPipeline::fit(black_box(&ds), &config).unwrap())
    });
    let pipeline = AnalysisPipeline::fit(&ds, &config).unwrap();
    group.bench_function("estimate_m1_spillover", |b| {
        b.iter(|| {
            pipeline
                .estimate(ModelKind::M1, EstimandSpec::Spillover)
                .unwrap()
                .point
        })
    });
    group.finish();
}

fn bench_bootstrap(c: &mut Criterion) {
    let ds = dataset(200);
    let config = ModelConfig::default_linear(ds.c_names(), ds.x_names());
    let estimator = point_estimator(config, ModelKind::M2, EstimandSpec::Spillover);
    let plan = BootstrapPlan { reps: 10, seed: 17 };
    let mut group = c.benchmark_group("bootstrap");
    group.sample_size(10);
    group.bench_function("percentile_10_reps_200_pairs", |b| {
        b.iter(|| bootstrap_ci(black_box(&ds), &estimator, &plan, 0.95).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_dale,
    bench_nuisance_fits,
    bench_pipeline,
    bench_bootstrap
);
criterion_main!(benches);

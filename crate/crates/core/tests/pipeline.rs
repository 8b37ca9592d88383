use std::collections::BTreeSet;

use expgraph::estimator::{fit_all_nodes, SolverOptions};
use expgraph::experiments::{run_experiment, ExperimentConfig, LambdaRule, SuccessTable};
use expgraph::families::{DomainConstraint, FamilySpec, FamilyTag};
use expgraph::io::{format_model, format_samples, ingest_matrix, parse_model};
use expgraph::model::PairwiseModel;
use expgraph::recovery::{recover, stitch, StitchRule};
use expgraph::sampler::{build_lattice_model, gibbs_sample, GibbsConfig};

fn chain(p: usize, w: f64) -> PairwiseModel<f64> {
    let fam = FamilySpec::gaussian(1.0).unwrap();
    PairwiseModel::new(fam, DomainConstraint::default_for(&fam), vec![0.0; p], (1..p).map(|t| (t - 1, t, w))).unwrap()
}

#[test]
fn gaussian_chain_sample_fit_stitch() {
    let model = chain(6, 0.4);
    let data = gibbs_sample(&model, 3000, &GibbsConfig { seed: 1, ..GibbsConfig::default() }).unwrap();
    let fam = *model.family();
    let fits = fit_all_nodes(&data, 0.1, &fam, model.constraint(), &SolverOptions::default()).unwrap();
    assert!(fits.iter().all(|f| f.converged));
    for rule in [StitchRule::Or, StitchRule::And] {
        assert_eq!(stitch(&fits, 6, rule).unwrap(), model.edge_set());
    }
}

#[test]
fn poisson_lattice_recovered_at_large_n() {
    let fam = FamilySpec::poisson();
    let c = DomainConstraint::default_for(&fam);
    let model = build_lattice_model(16, fam, 2.0, -0.1, c).unwrap();
    let data = gibbs_sample(&model, 6000, &GibbsConfig { seed: 3, ..GibbsConfig::default() }).unwrap();
    let (kappa1, _) = fam.kappa_bounds(&c);
    let lambda = expgraph::estimator::theory_lambda(6000, 16, kappa1, 2.0);
    let opts = SolverOptions { tol: 1e-6, ..SolverOptions::default() };
    let fits = fit_all_nodes(&data, lambda, &fam, &c, &opts).unwrap();
    let report = recover(&fits, 16, StitchRule::And, &model.edge_set()).unwrap();
    assert!(report.exact_recovery(), "hamming {}", report.hamming());
    for f in &fits {
        assert!(f.weights.iter().all(|&w| w <= 0.0));
        assert!(f.intercept <= 2.5);
    }
}

#[test]
fn hopeless_sample_size_does_not_recover() {
    let mut config = ExperimentConfig::<f64>::desk_poisson();
    config.p_values = vec![16];
    config.n_grid = vec![2];
    config.replicates = 1;
    config.lambda_rule = LambdaRule::Theory { c: 2.0 };
    let out = run_experiment(&config).unwrap();
    assert_eq!(out.table.rows.len(), 1);
    let row = &out.table.rows[0];
    assert!(row.success_prob == 0.0 || row.success_prob == 1.0);
    assert!(row.success_count <= row.replicates);
}

#[test]
fn experiment_is_reproducible_and_table_round_trips() {
    let mut config = ExperimentConfig::<f64>::desk_poisson();
    config.p_values = vec![16];
    config.n_grid = vec![150, 400];
    config.replicates = 3;
    config.lambda_rule = LambdaRule::Theory { c: 2.0 };
    let a = run_experiment(&config).unwrap();
    let b = run_experiment(&config).unwrap();
    assert!(a.records.iter().zip(&b.records).all(|(x, y)| x.same_outcome(y)));
    assert_eq!(a.table, b.table);
    let csv = a.table.to_csv();
    assert!(csv.starts_with("family,p,n,beta,success_count,replicates,success_prob,mean_hamming\n"));
    let back = SuccessTable::from_csv("success.csv", &csv).unwrap();
    assert_eq!(back, a.table);
    let seeds: BTreeSet<u64> = a.records.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.len(), a.records.len());
}

#[test]
fn model_and_samples_survive_a_file_round_trip() {
    let model = chain(4, -0.3);
    let text = format_model(&model);
    let back: PairwiseModel<f64> = parse_model("m", &text).unwrap();
    assert_eq!(format_model(&back), text);
    let data = gibbs_sample(&back, 50, &GibbsConfig { seed: 2, ..GibbsConfig::default() }).unwrap();
    let tsv = format_samples(&data, 2);
    let again = ingest_matrix("s", &tsv, FamilyTag::Gaussian, false).unwrap();
    assert_eq!(again, data);
    assert_eq!(format_samples(&again, 2), tsv);
}

#[test]
fn shipped_configs_match_the_desk_defaults() {
    let poisson = expgraph::io::parse_experiment_config("p", include_str!("../../../configs/desk_poisson.toml")).unwrap();
    let desk = ExperimentConfig::<f64>::desk_poisson();
    assert_eq!(poisson.p_values, desk.p_values);
    assert_eq!(poisson.n_grid, desk.n_grid);
    assert_eq!(poisson.lambda_rule, desk.lambda_rule);
    assert_eq!(poisson.master_seed, desk.master_seed);
    assert_eq!(poisson.solver, desk.solver);
    let exp = expgraph::io::parse_experiment_config("e", include_str!("../../../configs/desk_exponential.toml")).unwrap();
    let desk = ExperimentConfig::<f64>::desk_exponential();
    assert_eq!(exp.p_values, desk.p_values);
    assert_eq!(exp.constraint, desk.constraint);
    assert_eq!((exp.theta_s, exp.theta_st), (desk.theta_s, desk.theta_st));
}

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use clinfonce::cluster::clusters_from_labels;
use clinfonce::error::Error;
use clinfonce::info::InfoPlanePoint;
use clinfonce::pipeline::{
    four_blobs, gaussian_mixture, initial_model, linear_evaluate, probe_seed, run_split, train_predetermined,
    train_with_config, BlobSpec, ClusterSource, MixtureSpec, RunReport, TraceEvent, TrainConfig,
};
use clinfonce::{Data, Data32, Dataset};

fn small_mixture(seed: u64) -> Data {
    gaussian_mixture(&MixtureSpec {
        num_samples: 400,
        seed,
        ..MixtureSpec::default()
    })
    .unwrap()
}

fn quick(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 32,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn each_clustering_uses_the_encoder_after_the_previous_epoch() {
    let d: Data = four_blobs(&BlobSpec {
        num_samples: 200,
        ..BlobSpec::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        cluster_source: ClusterSource::Kmeans { k: 4 },
        ..quick(4, 3)
    };
    let run = train_with_config(&d, &cfg).unwrap();
    let mut last_generation = initial_model::<f64>(&cfg, d.feature_dim()).unwrap().generation();
    let mut next_epoch = 0;
    let mut clustered_for = Vec::new();
    for event in &run.trace {
        match event {
            TraceEvent::Clustered {
                for_epoch,
                model_generation,
                assignment,
                ..
            } => {
                assert_eq!(*for_epoch, next_epoch);
                assert_eq!(*model_generation, last_generation);
                assert_eq!(assignment.len(), run_split(200, &cfg).unwrap().0.len());
                clustered_for.push(*for_epoch);
            }
            TraceEvent::EpochStart { epoch, model_generation } => {
                assert_eq!(clustered_for.last(), Some(epoch));
                assert_eq!(*model_generation, last_generation);
            }
            TraceEvent::EpochEnd {
                epoch,
                model_generation,
                ..
            } => {
                assert!(*model_generation > last_generation);
                last_generation = *model_generation;
                next_epoch = epoch + 1;
            }
        }
    }
    assert_eq!(clustered_for, [0, 1, 2, 3]);
}

#[test]
fn clustering_once_when_reclustering_is_off() {
    let d: Data = four_blobs(&BlobSpec {
        num_samples: 200,
        ..BlobSpec::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        cluster_source: ClusterSource::Kmeans { k: 4 },
        recluster_every_epoch: false,
        ..quick(3, 0)
    };
    let run = train_with_config(&d, &cfg).unwrap();
    let calls = run
        .trace
        .iter()
        .filter(|e| matches!(e, TraceEvent::Clustered { .. }))
        .count();
    assert_eq!(calls, 1);
    assert_eq!(run.report.loss_curve.len(), 3);
}

#[test]
fn probe_ignores_the_projection_head() {
    let d = small_mixture(1);
    let cfg = quick(2, 1);
    let model = train_with_config(&d, &cfg).unwrap().model;
    let (tr, ev) = run_split(d.num_samples(), &cfg).unwrap();
    let (train, eval) = (d.subset(&tr), d.subset(&ev));
    let before = linear_evaluate(&model, &train, &eval, &cfg.probe, probe_seed(1)).unwrap();

    let mut scrambled = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for layer in scrambled.projection_layers_mut() {
        layer.weight.mapv_inplace(|_| 100.0 * rng.sample::<f64, _>(StandardNormal));
        layer.bias.mapv_inplace(|_| rng.random_range(-50.0..50.0));
    }
    assert_ne!(scrambled.params_flat(), model.params_flat());
    let after = linear_evaluate(&scrambled, &train, &eval, &cfg.probe, probe_seed(1)).unwrap();
    assert_eq!(before, after);
}

#[test]
fn zero_learning_rate_leaves_parameters_alone() {
    let d = small_mixture(2);
    let mut cfg = quick(2, 2);
    cfg.optimizer.peak_lr = 0.0;
    let clusters = clusters_from_labels(d.labels().unwrap()).unwrap();
    let run = train_predetermined(&d, &clusters, &cfg).unwrap();
    let start = initial_model::<f64>(&cfg, d.feature_dim()).unwrap();
    assert_eq!(run.model.params_flat(), start.params_flat());
    assert_eq!(run.step_count, 2 * (280 / 32));
}

#[test]
fn same_seed_same_run_different_seed_different_run() {
    let d = small_mixture(0);
    let a = train_with_config(&d, &quick(2, 5)).unwrap();
    let b = train_with_config(&d, &quick(2, 5)).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.report, b.report);
    assert_eq!(a.trace, b.trace);
    let c = train_with_config(&d, &quick(2, 6)).unwrap();
    assert_ne!(a.model.params_flat(), c.model.params_flat());
}

#[test]
fn curves_have_one_entry_per_epoch() {
    let d = small_mixture(0);
    for source in [
        ClusterSource::Labels,
        ClusterSource::Attributes { k: 4 },
        ClusterSource::Hierarchy { level: 2 },
        ClusterSource::InstanceId,
    ] {
        let cfg = TrainConfig {
            cluster_source: source,
            ..quick(3, 0)
        };
        let report = train_with_config(&d, &cfg).unwrap().report;
        assert_eq!(report.loss_curve.len(), 3);
        assert_eq!(report.info_plane_curve.len(), 3);
        let acc = report.final_linear_accuracy.unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert!(report.loss_curve.iter().all(|l| l.is_finite() && *l >= -(32f64.ln()) - 1e-9));
    }
}

#[test]
fn hierarchy_root_level_is_one_cluster() {
    let d = small_mixture(0);
    let cfg = TrainConfig {
        cluster_source: ClusterSource::Hierarchy { level: 1 },
        ..quick(1, 0)
    };
    let report = train_with_config(&d, &cfg).unwrap().report;
    assert_eq!(report.info_plane_curve[0].mi_zt, 0.0);
}

#[test]
fn unlabeled_data_trains_with_kmeans_only() {
    let labeled = small_mixture(4);
    let d = Dataset::new(labeled.features().clone(), None, None, None).unwrap();
    let cfg = TrainConfig {
        cluster_source: ClusterSource::Kmeans { k: 5 },
        ..quick(2, 0)
    };
    let report = train_with_config(&d, &cfg).unwrap().report;
    assert_eq!(report.final_linear_accuracy, None);
    assert!(report.info_plane_curve.is_empty());
    assert_eq!(report.loss_curve.len(), 2);

    let err = train_with_config(&d, &TrainConfig { ..quick(2, 0) }).unwrap_err();
    assert_eq!(err.category(), "data");
}

#[test]
fn single_precision_training_is_finite() {
    let spec = MixtureSpec {
        num_samples: 300,
        ..MixtureSpec::default()
    };
    let d: Data32 = gaussian_mixture(&spec).unwrap();
    let run = train_with_config(&d, &quick(2, 0)).unwrap();
    assert!(run.report.loss_curve.iter().all(|l| l.is_finite()));
    assert!(run.model.params_flat().iter().all(|p| p.is_finite()));
}

#[test]
fn mismatched_model_width_is_a_config_error() {
    let d: Data = four_blobs(&BlobSpec {
        num_samples: 100,
        dim: 10,
        ..BlobSpec::default()
    })
    .unwrap();
    let err = train_with_config(&d, &quick(1, 0)).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn diverging_run_aborts() {
    let d = small_mixture(0);
    let mut features = d.features().clone();
    features[[0, 0]] = f64::NAN;
    let poisoned = Dataset::new(features, None, d.labels().map(<[usize]>::to_vec), None).unwrap();
    let cfg = TrainConfig {
        train_fraction: 0.99,
        ..quick(2, 0)
    };
    let err = train_with_config(&poisoned, &cfg).unwrap_err();
    assert_eq!(err.category(), "numeric", "{err}");
}

#[test]
fn report_json_round_trip_of_a_real_run() {
    let d = small_mixture(3);
    let report = train_with_config(&d, &quick(2, 3)).unwrap().report;
    assert_eq!(RunReport::from_json(&report.to_json()).unwrap(), report);
}

fn arbitrary_point() -> impl Strategy<Value = InfoPlanePoint> {
    (
        "[a-z_0-9]{1,12}",
        -1e3f64..1e3,
        -1e3f64..1e3,
        -1e3f64..1e3,
        proptest::option::of(0.0f64..=1.0),
    )
        .prop_map(|(config_label, mi_zt, h_z_given_t, h_z, downstream_accuracy)| InfoPlanePoint {
            config_label,
            mi_zt,
            h_z_given_t,
            h_z,
            downstream_accuracy,
        })
}

proptest! {
    #[test]
    fn any_report_round_trips(
        loss_curve in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL, 0..20),
        info_plane_curve in proptest::collection::vec(arbitrary_point(), 0..5),
        final_linear_accuracy in proptest::option::of(0.0f64..=1.0),
        checkpoint_path in proptest::option::of("[a-z/._]{1,20}"),
    ) {
        let report = RunReport { loss_curve, info_plane_curve, final_linear_accuracy, checkpoint_path };
        prop_assert_eq!(RunReport::from_json(&report.to_json()).unwrap(), report);
    }
}

#[test]
fn features_only_dataset_shapes() {
    let d = Dataset::new(Array2::<f64>::zeros((5, 3)), None, None, None).unwrap();
    assert_eq!(d.ids(), ["0", "1", "2", "3", "4"]);
}

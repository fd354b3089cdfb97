use nalgebra::DVector;
use num_complex::Complex64;

use fogtbma::config::{CodebookKind, DeviceAssignment, FronthaulConfig, FronthaulScheme, ObservationModel, SystemConfig};
use fogtbma::denoiser::GroupPrior;
use fogtbma::detection::{decide, dtf_local_detect, qf_detect, ThresholdPolicy};
use fogtbma::experiment::{run_required_snr, ExperimentSpec, GridSpec, RunOptions, Scheme, Sweep};
use fogtbma::fronthaul::QuantizedBlock;
use fogtbma::gamp::GampOptions;
use fogtbma::rng::{Phase, RandomSource};
use fogtbma::scenario::{
    build_all_sparse_signals, campaign_codebook, generate_codebook, sample_channel, transmit_with_noise,
    EstimateMatrix, Trial,
};

fn small_cfg(kind: CodebookKind, num_edge_nodes: usize, n: usize) -> SystemConfig {
    SystemConfig {
        num_events: 2,
        num_values: 2,
        num_devices: 2,
        num_edge_nodes,
        codeword_len: n,
        rho: 0.5,
        sigma_h_sq: 1.0,
        snr_db: 60.0,
        transmit_on_active: true,
        codebook_kind: kind,
    }
}

#[test]
fn orthogonal_noiseless_single_event_recovers_the_value() {
    let cfg = small_cfg(CodebookKind::Orthogonal, 1, 6);
    let assign = DeviceAssignment::disjoint(2, 2);
    let prior = GroupPrior::new(&cfg, &assign, 1);
    let mut rng = RandomSource::new(5, 0).rng();
    let codebook = generate_codebook(&cfg, &mut rng).unwrap();
    for value in 1..=2 {
        for active in 0..2 {
            let mut phi = vec![vec![0], vec![0]];
            phi[active][0] = value;
            let phi = EstimateMatrix { phi };
            let channel = sample_channel(&cfg, &mut rng);
            let signal = build_all_sparse_signals(&phi, &assign, &channel, &cfg);
            let zero = vec![vec![Complex64::new(0.0, 0.0); 6]];
            let rx = transmit_with_noise(&signal, &codebook, cfg.noise_variance(), &zero);
            let det = dtf_local_detect(&rx.y[0], &codebook, &prior, cfg.noise_variance(), &GampOptions::default())
                .unwrap();
            let row = det.llrs.row(active);
            let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap() + 1;
            assert_eq!(argmax, value);
            assert!(row[value - 1] > 0.0);
        }
    }
}

#[test]
fn single_node_cloud_and_edge_detectors_coincide() {
    let cfg = SystemConfig { num_edge_nodes: 1, ..SystemConfig::reference() }.with_snr_db(5.0);
    let assign = DeviceAssignment::disjoint(cfg.num_devices, cfg.num_events);
    let prior = GroupPrior::new(&cfg, &assign, 1);
    let codebook = campaign_codebook(&cfg, 2).unwrap();
    let opts = GampOptions::default();
    for t in 0..20 {
        let trial = Trial::generate(&cfg, &assign, &ObservationModel::perfect(), &codebook, 2, Phase::Evaluation, t);
        let y = &trial.received.y[0];
        let cloud = qf_detect(&[QuantizedBlock::lossless(y)], &codebook, &prior, cfg.noise_variance(), &opts).unwrap();
        let edge = dtf_local_detect(y, &codebook, &prior, cfg.noise_variance(), &opts).unwrap();
        assert_eq!(cloud.llrs, edge.llrs);
        // no hidden randomness
        let again = dtf_local_detect(y, &codebook, &prior, cfg.noise_variance(), &opts).unwrap();
        assert_eq!(again.llrs, edge.llrs);
    }
}

#[test]
fn zero_observation_decides_all_inactive() {
    let cfg = SystemConfig::reference().with_snr_db(5.0);
    let assign = DeviceAssignment::disjoint(cfg.num_devices, cfg.num_events);
    let codebook = campaign_codebook(&cfg, 3).unwrap();
    let y = DVector::zeros(cfg.codeword_len);
    let det = dtf_local_detect(&y, &codebook, &GroupPrior::new(&cfg, &assign, 1), cfg.noise_variance(), &GampOptions::default())
        .unwrap();
    assert!(det.llrs.values.iter().all(|&l| l < 0.0));
    assert!(decide(&det.llrs, &ThresholdPolicy { threshold: 0.0 }).0.iter().all(|&d| d == 0));
}

#[test]
fn detection_improves_with_snr_on_shared_noise() {
    // Sanity check on the full cloud chain: the same trials at higher SNR
    // give a larger LLR for the true value on average.
    let cfg = SystemConfig::reference();
    let assign = DeviceAssignment::disjoint(cfg.num_devices, cfg.num_events);
    let codebook = campaign_codebook(&cfg, 4).unwrap();
    let prior = GroupPrior::new(&cfg, &assign, cfg.num_edge_nodes);
    let mean_true_llr = |snr: f64| {
        let c = cfg.with_snr_db(snr);
        let mut sum = 0.0;
        let mut count = 0;
        for t in 0..100 {
            let trial = Trial::generate(&c, &assign, &ObservationModel::perfect(), &codebook, 4, Phase::Evaluation, t);
            let blocks: Vec<QuantizedBlock> = trial.received.y.iter().map(QuantizedBlock::lossless).collect();
            let det = qf_detect(&blocks, &codebook, &prior, c.noise_variance(), &GampOptions::default()).unwrap();
            for (m, &v) in trial.xi.0.iter().enumerate() {
                if v > 0 {
                    sum += det.llrs.get(m, v);
                    count += 1;
                }
            }
        }
        sum / count as f64
    };
    assert!(mean_true_llr(10.0) > mean_true_llr(0.0));
}

#[test]
fn unit_noise_is_independent_of_snr() {
    let cfg = SystemConfig::reference();
    let assign = DeviceAssignment::disjoint(cfg.num_devices, cfg.num_events);
    let codebook = campaign_codebook(&cfg, 6).unwrap();
    let a = Trial::generate(&cfg.with_snr_db(0.0), &assign, &ObservationModel::perfect(), &codebook, 6, Phase::Evaluation, 3);
    let b = Trial::generate(&cfg.with_snr_db(20.0), &assign, &ObservationModel::perfect(), &codebook, 6, Phase::Evaluation, 3);
    assert_eq!(a.xi, b.xi);
    assert_eq!(a.channel, b.channel);
    // noise amplitude ratio between 0 dB and 20 dB
    let ratio = 10.0;
    for (ya, (yb, clean)) in a.received.y.iter().zip(b.received.y.iter().zip(&b.received.noiseless)) {
        let na = ya - clean;
        let nb = yb - clean;
        assert!((na - nb * Complex64::from(ratio)).camax() < 1e-12);
    }
}

#[test]
fn unlimited_budget_qf_needs_no_more_snr_than_dtf() {
    let spec = ExperimentSpec {
        system: SystemConfig::reference(),
        assignment: None,
        observation: ObservationModel::perfect(),
        fronthaul: FronthaulConfig::new(4096, FronthaulScheme::QfTestChannel),
        gamp: GampOptions::default(),
        sweep: Sweep::BudgetGrid {
            budgets: vec![4096],
            codeword_lens: vec![16],
            target_pe: 0.02,
            snr_min_db: -10.0,
            snr_max_db: 20.0,
            resolution_db: 0.5,
        },
        schemes: Some(vec![Scheme::QfTestChannel, Scheme::Dtf]),
        trials: 400,
        calibration_trials: 200,
        master_seed: 9,
        threshold_grid: GridSpec::default(),
    };
    let rows = run_required_snr(&spec, &RunOptions::default()).unwrap().rows;
    let get = |s: Scheme| rows.iter().find(|r| r.scheme == s).unwrap().required_snr_db.unwrap_or(f64::INFINITY);
    assert!(get(Scheme::QfTestChannel) <= get(Scheme::Dtf), "{rows:?}");
}

//! Configuration, checkpoints and the batch runners with stubbed ground states.

use anyhow::Result;
use mtc_core::checkpoint::{self, CheckpointError};
use mtc_core::config::RunConfig;
use mtc_core::dmrg::{crystal_initial_state, GroundStateResult};
use mtc_core::lattice::{n_occ, sigma_z, LadderLattice, ModelParams, StabilizerSpec};
use mtc_core::mps::{LocalOperator, MatrixProductState};
use mtc_core::pipeline::*;
use mtc_core::tensor::TruncationPolicy;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Crystal;

impl GroundStates for Crystal {
    fn ground_state(&self, lat: &LadderLattice, _: &[StabilizerSpec], _: &ModelParams) -> Result<GroundStateResult> {
        let psi = crystal_initial_state(lat, 0);
        Ok(GroundStateResult {
            psi,
            energy: 0.0,
            energy_history: vec![0.0],
            truncation_error: vec![0.0],
            particle_number: lat.columns() as f64,
            particle_variance: 0.0,
            converged: true,
            sweeps: 1,
        })
    }
}

fn config(dir: &std::path::Path, extra: &str) -> RunConfig {
    let text = format!("[io]\noutput_dir = {:?}\n{extra}", dir.display().to_string());
    RunConfig::from_toml(&text).unwrap()
}

#[test]
fn defaults_fill_every_section() {
    let cfg = RunConfig::from_toml("").unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.model.t_values.len(), 31);
    assert_eq!(cfg.model.t_values[3], 0.15);
    assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn unknown_keys_are_rejected_everywhere() {
    for section in ["model", "dmrg", "sampler", "decoder", "tee", "analysis", "io"] {
        let text = format!("[{section}]\nno_such_key = 1\n");
        assert!(RunConfig::from_toml(&text).is_err(), "{section}");
    }
    assert!(RunConfig::from_toml("typo = 3\n").is_err());
}

#[test]
fn invalid_values_are_rejected() {
    assert!(RunConfig::from_toml("[model]\nt_values = [-0.1]\n").is_err());
    assert!(RunConfig::from_toml("[analysis]\nt_min = 1.0\nt_max = 0.5\n").is_err());
    assert!(RunConfig::from_toml("[sampler.trajectories_by_size]\nbig = 3\n").is_err());
    let cfg = RunConfig::from_toml("[sampler.trajectories_by_size]\n14 = 1000\n").unwrap();
    assert_eq!(cfg.sampler.trajectories_for(14), 1000);
    assert_eq!(cfg.sampler.trajectories_for(8), 100);
}

#[test]
fn overrides_apply_after_the_file() {
    let cfg = RunConfig::load(None, &["model.widths=[4,8]".into(), "io.output_dir=out".into()]).unwrap();
    assert_eq!(cfg.model.widths, vec![4, 8]);
    assert_eq!(cfg.io.output_dir, std::path::PathBuf::from("out"));
    assert!(RunConfig::load(None, &["model.widths".into()]).is_err());
}

fn random_state(seed: u64) -> MatrixProductState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MatrixProductState::random(8, 9, &mut rng, TruncationPolicy::exact()).unwrap()
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let psi = random_state(1);
    let bytes = checkpoint::encode(&psi);
    assert_eq!(&bytes[..4], b"MTCM");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), checkpoint::VERSION);
    let back = checkpoint::decode(&bytes, TruncationPolicy::exact()).unwrap();
    for (a, b) in psi.tensors().iter().zip(back.tensors()) {
        assert_eq!(a, b);
    }
    let ops = [LocalOperator::single(3, &sigma_z()), LocalOperator::single(5, &n_occ())];
    for op in &ops {
        assert!((psi.expectation(op).unwrap() - back.expectation(op).unwrap()).norm() <= 1e-12);
    }
}

#[test]
fn damaged_checkpoints_are_detected() {
    let bytes = checkpoint::encode(&random_state(2));
    let mut flipped = bytes.clone();
    flipped[40] ^= 1;
    assert!(matches!(checkpoint::decode(&flipped, TruncationPolicy::exact()), Err(CheckpointError::Checksum { .. })));
    assert!(checkpoint::decode(&bytes[..bytes.len() - 9], TruncationPolicy::exact()).is_err());
    assert!(matches!(checkpoint::decode(b"XXXX0000000000000000", TruncationPolicy::exact()), Err(CheckpointError::Magic)));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("psi.mtcm");
    checkpoint::save(&random_state(2), &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn any_state_survives_a_checkpoint(seed in any::<u64>()) {
        let psi = random_state(seed);
        let back = checkpoint::decode(&checkpoint::encode(&psi), TruncationPolicy::exact()).unwrap();
        prop_assert!((psi.overlap(&back).norm() - psi.norm() * back.norm()).abs() < 1e-12);
        prop_assert_eq!(checkpoint::encode(&back), checkpoint::encode(&psi));
    }
}

#[test]
fn manifest_lists_every_cell_once() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[model]\nwidths = [4, 6]\nt_values = [0.1, 0.2, 0.3]\n[sampler]\ntrajectories = 5\n");
    let m = run_scan_with(&cfg, &Crystal).unwrap();
    assert_eq!(m.cells.len(), 6);
    assert!(m.all_completed());
    assert_eq!(m.exit_code(), EXIT_OK);
    let rows = read_depth_csv(&dir.path().join("depth.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.m == 5));
    // a re-run finds everything on disk
    let again = run_scan_with(&cfg, &Crystal).unwrap();
    assert!(again.cells.iter().all(|c| c.resumed));
}

#[test]
fn product_states_have_zero_entanglement() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[tee]\nwidths = [4, 5, 6]\nt_values = [0.0]\n");
    let m = run_tee_with(&cfg, &Crystal).unwrap();
    assert_eq!(m.exit_code(), EXIT_OK);
    let mut r = csv::Reader::from_path(dir.path().join("tee.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert_eq!(row[3].parse::<f64>().unwrap().abs(), 0.0);
        assert!(row[5].parse::<f64>().unwrap().abs() < 1e-12);
    }
}

#[test]
fn two_sizes_cannot_give_a_tee() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[tee]\nwidths = [4, 5]\n");
    let m = run_tee_with(&cfg, &Crystal).unwrap();
    assert_eq!(m.exit_code(), EXIT_PARTIAL);
    assert!(m.notes.iter().any(|n| n.contains("at least 3")));
}

#[test]
fn oversized_cuts_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[tee]\nwidths = [4, 5, 6, 17]\nmemory_budget = 100000000\n");
    let m = run_tee_with(&cfg, &Crystal).unwrap();
    let skipped: Vec<usize> = m.cells.iter().filter(|c| c.status == CellStatus::Skipped).map(|c| c.n).collect();
    assert_eq!(skipped, vec![34]);
}

fn synthetic_rows(sizes: &[usize], f: impl Fn(usize, f64) -> f64, noise: f64, seed: u64) -> Vec<DepthRow> {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut out = Vec::new();
    for &n in sizes {
        for i in 0..=30 {
            let t = i as f64 / 20.0;
            let y = f(n, t) + noise * normal.sample(&mut rng);
            out.push(DepthRow {
                n,
                t,
                chi: 32,
                m: 100,
                rejected_samples: 0,
                d_dw_mean: y,
                d_dw_sem: noise,
                d_tc_mean: 0.0,
                d_tc_sem: 0.0,
                d_tot_mean: y,
                d_tot_sem: noise,
            });
        }
    }
    out
}

#[test]
fn synthetic_peaks_are_recovered() {
    use mtc_core::analysis::{derivative_peak_of, Rational};
    let model = |n: usize| {
        let s = 1.0 + 2.0 / n as f64;
        // peak height about two layers, like a real depth curve
        Rational([4.0 * s * s, 0.0, 0.0, 0.0, 0.0, s.powi(6)])
    };
    let truth = |n: usize| derivative_peak_of(&model(n), 0.0, 1.5).unwrap().t;
    let rows = synthetic_rows(&[8, 12, 16, 20], |n, t| model(n).value(t), 0.01, 3);
    let cfg = RunConfig { analysis: mtc_core::config::AnalysisSection { bootstrap: 50, ..Default::default() }, ..Default::default() };
    let report = analyze_rows(&cfg, &rows);
    for f in report.fits.iter().filter(|f| f.quantity == Quantity::DTot) {
        let p = f.peak.expect("peak");
        assert!((p.t - truth(f.n)).abs() <= 0.02, "N={}: {} vs {}", f.n, p.t, truth(f.n));
    }
    assert!(report.d_tot.is_ok());
}

#[test]
fn zero_depth_tables_are_ordered_without_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let rows = synthetic_rows(&[8, 12, 16], |_, _| 0.0, 0.0, 0);
    let path = dir.path().join("depth.csv");
    let mut w = csv::Writer::from_path(&path).unwrap();
    for r in &rows {
        w.serialize(r).unwrap();
    }
    w.flush().unwrap();
    let cfg = config(dir.path(), "[analysis]\nnormalized_t = [0.2]\nbootstrap = 10\n");
    let (m, report) = run_analyze(&cfg, &path).unwrap();
    assert!(report.fits.iter().all(|f| f.flag.as_deref() == Some("no interior peak")));
    assert!(report.d_tot.is_err());
    assert_eq!(report.normalized[0].result.as_ref().unwrap().phase, mtc_core::analysis::Phase::Ordered);
    assert_eq!(m.exit_code(), EXIT_PARTIAL);
    for file in ["analysis.csv", "normalized.csv", "fit_curves.csv", "scaling.json", "manifest.json"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
}

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mtc_core::dmrg::{find_ground_state, DmrgConfig, InitialState};
use mtc_core::lattice::{build_lattice, enumerate_stabilizers, ModelParams};
use mtc_core::mpo::build_hamiltonian_mpo;
use mtc_core::parallel::{par_map_range, seq_map};
use mtc_core::sampler::{run_trajectory, SamplerConfig};

// Sequential against rayon-parallel trajectory batches on the same ground state.
// With the `parallel` feature off both arms run sequentially.
fn batches(c: &mut Criterion) {
    let cfg = SamplerConfig::default();
    let mut group = c.benchmark_group("trajectories");
    group.sample_size(10);
    for w in [4, 6] {
        let lat = build_lattice(w).unwrap();
        let stabs = enumerate_stabilizers(&lat);
        let mpo = build_hamiltonian_mpo(&lat, &stabs, &ModelParams::new(0.8));
        let mut psi = find_ground_state(&mpo, &DmrgConfig::with_chi(32), InitialState::Crystal { sublattice: 0 }, &lat)
            .unwrap()
            .psi;
        psi.canonicalize(0).unwrap();
        let m = 64u64;
        group.bench_with_input(BenchmarkId::new("sequential", 2 * w), &psi, |b, psi| {
            let streams: Vec<u64> = (0..m).collect();
            b.iter(|| seq_map(&streams, |&s| run_trajectory(psi, &stabs, &cfg, s).d_tot))
        });
        group.bench_with_input(BenchmarkId::new("parallel", 2 * w), &psi, |b, psi| {
            b.iter(|| par_map_range(m as usize, |s| run_trajectory(psi, &stabs, &cfg, s as u64).d_tot))
        });
    }
    group.finish();
}

criterion_group!(benches, batches);
criterion_main!(benches);

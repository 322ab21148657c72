use freqimpact::indicators::compute_all;
use freqimpact::model::{ExperimentDesign, Indicator, Mode};
use freqimpact::simulator::{
    gen_random_workload, ground_truth_shares, simulate_matrix, GenParams, WorkloadModel,
};
use proptest::prelude::*;

fn zero_out(w: &mut WorkloadModel, disk: bool, net: bool) {
    for p in &mut w.phases {
        if disk {
            p.disk_time_s.values_mut().for_each(|t| *t = 0.0);
        }
        if net {
            p.net_time_s.iter_mut().for_each(|n| n.seconds = 0.0);
        }
    }
}

proptest! {
    #[test]
    fn serial_workloads_match_ground_truth(seed in any::<u64>(), no_disk in any::<bool>(), no_net in any::<bool>()) {
        let d = ExperimentDesign::reference_design();
        let mut w = gen_random_workload(seed, &GenParams::for_design(&d)).unwrap();
        zero_out(&mut w, no_disk, no_net);
        let truth = ground_truth_shares(&w, &d.baseline).unwrap();
        let m = simulate_matrix(&w, &d).unwrap();
        for mode in [Mode::Disk, Mode::Memory] {
            let set = compute_all(&m, &d, &w.id, mode, &Indicator::ALL).unwrap();
            let cri = set.get(Indicator::Cri).unwrap();
            prop_assert!((cri - truth.cpu).abs() <= 1e-9, "cri {cri} vs {}", truth.cpu);

            // Upgrades remove all I/O, so the upgraded runtime fraction is cpu + memory.
            let mri = set.get(Indicator::Mri).unwrap();
            let want = truth.memory / (truth.cpu + truth.memory);
            prop_assert!((mri - want).abs() <= 1e-9, "mri {mri} vs {want}");

            let dri = set.get(Indicator::Dri).unwrap();
            let nri = set.get(Indicator::Nri).unwrap();
            prop_assert_eq!(dri > 0.0, truth.disk > 0.0, "dri {} disk {}", dri, truth.disk);
            prop_assert_eq!(nri > 0.0, truth.network > 0.0, "nri {} net {}", nri, truth.network);
        }
    }
}

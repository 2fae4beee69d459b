// scratch: per-component FQE basis samples for reward-weight scans
use std::path::PathBuf;
use orl_core::data::read_dataset;
use orl_core::env::RewardSpec;
use orl_core::ope::FqeConfig;
use orl_core::policy::PolicyArtifact;
use orl_core::rng;
use orl_core::selection::value_samples;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let (ds_path, best, worst, seed): (PathBuf, PathBuf, PathBuf, u64) =
        (args[1].clone().into(), args[2].clone().into(), args[3].clone().into(), args[4].parse().unwrap());
    let dataset = read_dataset(&ds_path).unwrap();
    let best = PolicyArtifact::load(&best).unwrap();
    let worst = PolicyArtifact::load(&worst).unwrap();
    let fqe = FqeConfig { iterations: 100, gradient_steps: 600, step_size: 1e-3, batch_size: 64, hidden: vec![64, 64], ..Default::default() };
    let job = rng::sub_seed(seed, "select-reward/basis");
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for (name, s, a, t) in [("state", true, false, false), ("action", false, true, false), ("terminal", false, false, true)] {
        let spec = RewardSpec::new(name, s, a, t);
        for (tag, pol) in [("best", &best), ("worst", &worst)] {
            eprintln!("fitting {name}/{tag}");
            cols.push(value_samples(&dataset, pol, &spec, &fqe, job).unwrap());
            names.push(format!("{name}_{tag}"));
        }
    }
    println!("{}", names.join(","));
    for i in 0..cols[0].len() {
        let row: Vec<String> = cols.iter().map(|c| format!("{}", c[i])).collect();
        println!("{}", row.join(","));
    }
}

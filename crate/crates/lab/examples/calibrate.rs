//! Prints the headline comparisons for a lab config (default when no path
//! is given): per-bucket SFT, the hard-ratio sweep, SFT-M, full SFT, GRPO.

use dcsft_core::curator::Variant;
use dcsft_core::DifficultyLabel;
use dcsft_lab::experiment::sweep_arms;
use dcsft_lab::stats::{mean, sign_test};
use dcsft_lab::{run_arms, Arm, LabConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mut cfg = match args.next() {
        Some(path) => LabConfig::load(path)?,
        None => LabConfig::default(),
    };
    let target: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(800);
    cfg.name = "rho".to_string();
    let bucket = |name: &str, b| Arm::sft(name, Variant::BucketOnly { bucket: b }).balanced();
    let mut arms = vec![
        bucket("easy", DifficultyLabel::Easy),
        bucket("medium", DifficultyLabel::Medium),
        bucket("hard", DifficultyLabel::Hard),
        Arm::sft("sft-m", Variant::SftM),
        Arm::sft("sft-full", Variant::Full),
        Arm::grpo("grpo-full", Variant::Full),
    ];
    cfg.plan.target_size = Some(target);
    arms.extend(sweep_arms(&cfg, &[0.0, 0.05, 0.135, 0.25]));
    let start = std::time::Instant::now();
    let reports = run_arms(&cfg, &arms)?;
    println!("{} arms x {} seeds in {:.1?}", arms.len(), cfg.n_seeds, start.elapsed());
    let sizes = &reports[0].runs;
    let counts: Vec<[f64; 3]> = sizes
        .iter()
        .map(|r| [r.bucket_counts.easy as f64, r.bucket_counts.medium as f64, r.bucket_counts.hard as f64])
        .collect();
    println!(
        "pool buckets e/m/h: {:.0} {:.0} {:.0}",
        mean(&counts.iter().map(|c| c[0]).collect::<Vec<_>>()),
        mean(&counts.iter().map(|c| c[1]).collect::<Vec<_>>()),
        mean(&counts.iter().map(|c| c[2]).collect::<Vec<_>>())
    );
    for r in &reports {
        let s = &r.summary;
        println!(
            "{:>14}  n {:>7.1}  ID {:.4}  OOD {:.4}  norm50 {:.4}  (init ID {:.4} OOD {:.4})",
            s.arm.name, s.mean_train_size, s.final_id_mean, s.final_ood_mean, s.leading_grad_norm_mean, s.initial_id_mean, s.initial_ood_mean
        );
    }
    let by = |n: &str| reports.iter().find(|r| r.summary.arm.name == n).unwrap();
    let t6 = sign_test(&by("medium").final_ood(), &by("hard").final_ood());
    println!("medium>hard OOD: {t6:?}; ID gap {:.4}", by("medium").summary.final_id_mean - by("hard").summary.final_id_mean);
    let t7 = sign_test(&by("rho-0").final_ood(), &by("rho-0.25").final_ood());
    println!(
        "rho0>rho.25 OOD: {t7:?}; drop at .05 {:.4}",
        by("rho-0").summary.final_ood_mean - by("rho-0.05").summary.final_ood_mean
    );
    println!("hard>easy norm: {:?}", sign_test(&by("hard").leading_norms(), &by("easy").leading_norms()));
    let (m, g, f) = (by("sft-m").summary.final_ood_mean, by("grpo-full").summary.final_ood_mean, by("sft-full").summary.final_ood_mean);
    println!("sftm-grpo {:.4} sftm-full {:.4} grpo-full {:.4}", m - g, m - f, g - f);
    Ok(())
}

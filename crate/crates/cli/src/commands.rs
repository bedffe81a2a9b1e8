use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dcsft_core::curator::{
    build_curated_set, difficulty_histogram, emit_sft_dataset_with, manifest_path_for, Balance, CurationPlan, Variant,
};
use dcsft_core::dataset::load_dataset;
use dcsft_core::grpo::{RewardGroup, StdMode};
use dcsft_core::rng::derive_seed;
use dcsft_core::verifiers::VerifyOptions;
use dcsft_core::{DifficultyLabel, Sample, SamplingParams, VerifiedResponseSet};
use dcsft_lab::experiment::{run_arms, sweep_arms, write_outputs};
use dcsft_lab::LabConfig;
use dcsft_sampler::cache::{read_response_sets, write_response_sets};
use dcsft_sampler::mock::{MockScript, MockServer};
use dcsft_sampler::{collect_responses, verify_batch, EndpointConfig, ResponseCache};
use serde::Serialize;

use crate::args::*;
use crate::record::Outcome;

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")
}

fn default_cache(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".cache.jsonl");
    out.with_file_name(name)
}

pub fn sample(args: &SampleArgs, seed: u64, outcome: &mut Outcome) -> Result<()> {
    outcome.inputs.push(args.data.clone());
    let samples = load_dataset(&args.data)?;
    let params = SamplingParams {
        g: args.g,
        temperature: args.temperature,
        top_p: args.top_p,
        seed: Some(seed),
        model_id: args.model.clone(),
    };
    let mut endpoint = EndpointConfig::new(&args.base_url);
    endpoint.api_key = std::env::var(&args.api_key_env).ok().filter(|k| !k.is_empty());
    endpoint.max_in_flight = args.max_in_flight;
    endpoint.request_timeout = args.timeout;
    endpoint.max_retries = args.retries;
    endpoint.use_n = !args.no_n;
    endpoint.validate()?;

    let cache_path = args.cache.clone().unwrap_or_else(|| default_cache(&args.out));
    let cache = ResponseCache::open(&cache_path)?;
    let report = runtime()?.block_on(collect_responses(&samples, &params, &endpoint, &cache))?;

    let sets: Vec<_> = report.successes().cloned().collect();
    write_response_sets(&args.out, &sets)?;
    outcome.outputs.push(args.out.clone());
    outcome.outputs.push(cache_path);
    println!(
        "collected {} of {} samples ({} from cache, {} requests)",
        sets.len(),
        samples.len(),
        report.cache_hits,
        report.requests_sent
    );
    let failures: Vec<_> = report.failures().collect();
    for f in &failures {
        eprintln!("sample `{}`: {}", f.sample_id, f.error);
    }
    if !failures.is_empty() {
        bail!("{} of {} samples failed", failures.len(), samples.len());
    }
    Ok(())
}

fn verified(args: &VerifyArgs, outcome: &mut Outcome) -> Result<(Vec<Sample>, Vec<VerifiedResponseSet>)> {
    outcome.inputs.push(args.data.clone());
    outcome.inputs.push(args.responses.clone());
    let samples = load_dataset(&args.data)?;
    let sets = read_response_sets(&args.responses)?;
    let opts = VerifyOptions {
        iou_threshold: args.iou_threshold,
        max_pixels: args.max_pixels,
    };
    let verified = verify_batch(&sets, &samples, &opts)?;
    Ok((samples, verified))
}

fn print_histogram(hist: &BTreeMap<DifficultyLabel, usize>) {
    let total: usize = hist.values().sum();
    for (label, n) in hist {
        let pct = if total == 0 { 0.0 } else { 100.0 * *n as f64 / total as f64 };
        println!("{:<7}{:>8}  {:>6.2}%", label.as_str(), n, pct);
    }
    println!("{:<7}{:>8}", "total", total);
}

fn plan_for(args: &CurateArgs, seed: u64) -> CurationPlan {
    let variant = match args.variant {
        VariantArg::SftM => Variant::SftM,
        VariantArg::SftEm => Variant::SftEm,
        VariantArg::Full => Variant::Full,
        VariantArg::HardRatio => Variant::HardRatio {
            rho: args.rho.expect("clap requires --rho"),
        },
        VariantArg::Bucket => Variant::BucketOnly {
            bucket: match args.bucket.expect("clap requires --bucket") {
                BucketArg::Easy => DifficultyLabel::Easy,
                BucketArg::Medium => DifficultyLabel::Medium,
                BucketArg::Hard => DifficultyLabel::Hard,
            },
        },
    };
    CurationPlan {
        variant,
        balance: match args.balance {
            BalanceArg::None => Balance::None,
            BalanceArg::Min => Balance::MinSubset,
        },
        seed: derive_seed(seed, "curate"),
        target_size: args.target_size,
    }
}

pub fn curate(args: &CurateArgs, seed: u64, outcome: &mut Outcome) -> Result<()> {
    let (samples, verified) = verified(&args.verify, outcome)?;
    print_histogram(&difficulty_histogram(&verified));
    if let Some(path) = &args.verified_out {
        let mut text = String::new();
        for v in &verified {
            text.push_str(&serde_json::to_string(v)?);
            text.push('\n');
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        outcome.outputs.push(path.clone());
    }
    let plan = plan_for(args, seed);
    let curated = build_curated_set(&verified, &plan)?;
    emit_sft_dataset_with(&curated.ids, &samples, &args.out, args.verify.max_pixels)?;
    let manifest_path = args.manifest.clone().unwrap_or_else(|| manifest_path_for(&args.out));
    curated.manifest.write(&manifest_path)?;
    outcome.outputs.push(args.out.clone());
    outcome.outputs.push(manifest_path.clone());
    println!("emitted {} samples to {}", curated.ids.len(), args.out.display());
    if let Some(rho) = curated.manifest.achieved_hard_ratio {
        println!("achieved hard ratio {rho:.6}");
    }
    println!("manifest {}", manifest_path.display());
    Ok(())
}

#[derive(Serialize)]
struct StatsOut {
    total: usize,
    histogram: BTreeMap<DifficultyLabel, usize>,
    examples: BTreeMap<DifficultyLabel, Vec<String>>,
}

pub fn stats(args: &StatsArgs, outcome: &mut Outcome) -> Result<()> {
    let (_, verified) = verified(&args.verify, outcome)?;
    let histogram = difficulty_histogram(&verified);
    let mut examples: BTreeMap<DifficultyLabel, Vec<String>> =
        DifficultyLabel::ALL.iter().map(|l| (*l, Vec::new())).collect();
    for v in &verified {
        let list = examples.entry(v.difficulty()).or_default();
        if list.len() < args.examples {
            list.push(v.sample_id().to_string());
        }
    }
    if args.json {
        let out = StatsOut {
            total: verified.len(),
            histogram,
            examples,
        };
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        print_histogram(&histogram);
        for (label, ids) in &examples {
            if !ids.is_empty() {
                println!("{label} e.g. {}", ids.join(", "));
            }
        }
    }
    Ok(())
}

pub fn advantage(args: &AdvantageArgs) -> Result<()> {
    let mode = match args.std {
        StdArg::Population => StdMode::Population,
        StdArg::Sample => StdMode::Sample,
    };
    let group = RewardGroup::with_mode(args.rewards.clone(), args.delta, mode)?;
    println!("mean {}", group.mean);
    println!("std {}", group.std);
    println!("advantages {}", serde_json::to_string(&group.advantages)?);
    println!("zero_update {}", group.is_zero_update());
    Ok(())
}

pub fn lab(args: &LabArgs, seed: Option<u64>, outcome: &mut Outcome) -> Result<LabConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            outcome.inputs.push(path.clone());
            LabConfig::load(path)?
        }
        None => LabConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = args.n_seeds {
        cfg.n_seeds = n;
    }
    cfg.validate()?;
    let arms = match &args.sweep {
        Some(rhos) if rhos.is_empty() => bail!("--sweep needs at least one ratio"),
        Some(rhos) => sweep_arms(&cfg, rhos),
        None => vec![cfg.arm()],
    };
    let reports = run_arms(&cfg, &arms)?;
    outcome.outputs.extend(write_outputs(&reports, &args.out)?);
    println!("{:<24}{:>10}{:>10}{:>10}{:>12}", "arm", "train n", "ID", "OOD", "norm");
    for r in &reports {
        let s = &r.summary;
        println!(
            "{:<24}{:>10.1}{:>10.4}{:>10.4}{:>12.4}",
            s.arm.name, s.mean_train_size, s.final_id_mean, s.final_ood_mean, s.leading_grad_norm_mean
        );
    }
    Ok(cfg)
}

pub fn mock_serve(args: &MockServeArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.script).with_context(|| format!("reading {}", args.script.display()))?;
    let script: MockScript = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.script.display()))?;
    runtime()?.block_on(async {
        let server = MockServer::bind(script, SocketAddr::from(([127, 0, 0, 1], args.port))).await?;
        println!("mock endpoint listening on {}", server.base_url());
        tokio::signal::ctrl_c().await?;
        server.shutdown().await;
        Ok(())
    })
}

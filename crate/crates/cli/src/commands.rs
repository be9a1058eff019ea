//! The four experiment commands: train, cost, report, posthoc.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use polyreuse_core::hwcost::{
    conv_cost_proposed, conv_cost_rs, memory_report, network_cost, CostParams,
};
use polyreuse_core::polyproj::{count_params, Degree, LayerParams};
use polyreuse_core::presets::ArchId;
use polyreuse_core::store;
use polyreuse_core::train::{evaluate, train, ModelParams, TrainConfig};

use crate::config::{scheme_from_entries, Resolved, SchemeEntry};
use crate::plot::{line_chart, Series};

/// Sidecar written next to every checkpoint; `report` and `posthoc` read it
/// back to recover the architecture and baseline.
#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub arch: String,
    pub scheme: Vec<SchemeEntry>,
    pub train: TrainConfig,
    pub final_accuracy: f64,
    pub param_count: u64,
    pub memory_kb: f64,
    pub baseline_label: String,
    pub baseline_params: u64,
    pub memory_reduction: f64,
    pub reference_accuracy: Option<f64>,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_train(resolved: &Resolved, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let net = resolved.network();
    let scheme = resolved.scheme(&net)?;
    let (train_set, test_set) = crate::config::load_dataset(resolved)?;

    eprintln!(
        "training {} ({} examples, {} epochs, lr {}, batch {}, seed {})",
        resolved.name,
        train_set.len(),
        resolved.train.epochs,
        resolved.train.learning_rate,
        resolved.train.batch_size,
        resolved.train.rng_seed
    );
    let outcome = train(&net, &scheme, &train_set, &test_set, &resolved.train)?;
    let final_accuracy = evaluate(&net, ModelParams::Coeffs(&outcome.store), &test_set)?;

    let counts = count_params(&scheme, &net)?;
    let params = CostParams::default();
    let memory = memory_report(&counts, &resolved.baseline_label, resolved.baseline_params, &params);

    write(&out_dir.join("metrics.csv"), &outcome.metrics.to_csv())?;
    store::write_file(&outcome.store, &out_dir.join("model.pwc"))?;
    fs::write(out_dir.join("model.q8"), store::export_q8(&outcome.store))
        .with_context(|| "writing model.q8")?;
    let summary = Summary {
        name: resolved.name.clone(),
        arch: resolved.arch.name().to_string(),
        scheme: resolved.scheme_entries.clone(),
        train: resolved.train,
        final_accuracy,
        param_count: outcome.store.param_count(),
        memory_kb: memory.total_memory_kb,
        baseline_label: resolved.baseline_label.clone(),
        baseline_params: resolved.baseline_params,
        memory_reduction: memory.memory_reduction,
        reference_accuracy: resolved.reference_accuracy,
    };
    write(&out_dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;

    println!(
        "{}: accuracy {:.4}, {} parameters, {:.3} KB at 8-bit, {:.1}x vs {}",
        resolved.name,
        final_accuracy,
        summary.param_count,
        summary.memory_kb,
        summary.memory_reduction,
        summary.baseline_label
    );
    if let Some(reference) = resolved.reference_accuracy {
        println!("reference accuracy for this configuration: {reference:.4}");
    }
    Ok(())
}

pub fn cmd_cost(resolved: &Resolved, out_dir: &Path, json: bool) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let net = resolved.network();
    let scheme = resolved.scheme(&net)?;
    let params = CostParams::default();
    let report = network_cost(&net, &scheme, &params)?;

    // Computation-reduction line against the named reference model, when the
    // published comparison uses one.
    let mut extra = String::new();
    if let Some(baseline_arch) = resolved.baseline_arch {
        let bnet = baseline_arch.network();
        let bscheme = polyreuse_core::polyproj::GroupScheme::none(&bnet);
        let bops = network_cost(&bnet, &bscheme, &params)?
            .total_ops_baseline
            .unwrap_or(0);
        let ours = report.total_ops_proposed.unwrap_or(1);
        extra = format!(
            "vs {} ({} ops): computation reduction {:.1}x\n",
            resolved.baseline_label,
            bops,
            bops as f64 / ours as f64
        );
    }

    write(&out_dir.join("cost.txt"), &format!("{}{}", report.to_text(), extra))?;
    write(&out_dir.join("cost.csv"), &report.to_csv())?;
    write(&out_dir.join("cost.json"), &report.to_json())?;

    // Sweep of single-filter costs over ifmap sizes, 3x3 and 5x5 filters,
    // proposed against the row-stationary baseline.
    let mut csv = String::from("ifmap,proposed_3x3,rs_3x3,proposed_5x5,rs_5x5\n");
    let mut series = vec![
        Series { label: "proposed 3x3".into(), color: "#1f77b4", points: vec![] },
        Series { label: "row-stationary 3x3".into(), color: "#ff7f0e", points: vec![] },
        Series { label: "proposed 5x5".into(), color: "#2ca02c", points: vec![] },
        Series { label: "row-stationary 5x5".into(), color: "#d62728", points: vec![] },
    ];
    for h in 3..=34usize {
        let p3 = conv_cost_proposed(h, h, 3, 3, Degree::Linear, &params)?;
        let r3 = conv_cost_rs(h, h, 3, 3)?;
        series[0].points.push((h as f64, p3 as f64));
        series[1].points.push((h as f64, r3 as f64));
        if h >= 5 {
            let p5 = conv_cost_proposed(h, h, 5, 5, Degree::Linear, &params)?;
            let r5 = conv_cost_rs(h, h, 5, 5)?;
            series[2].points.push((h as f64, p5 as f64));
            series[3].points.push((h as f64, r5 as f64));
            csv.push_str(&format!("{h},{p3},{r3},{p5},{r5}\n"));
        } else {
            csv.push_str(&format!("{h},{p3},{r3},,\n"));
        }
    }
    write(&out_dir.join("sweep.csv"), &csv)?;
    let svg = line_chart(
        "Adders and multipliers per filter vs ifmap size",
        "ifmap rows",
        "adders + multipliers",
        &series,
    );
    write(&out_dir.join("sweep.svg"), &svg)?;

    if json {
        println!("{}", report.to_json());
    } else {
        print!("{}{}", report.to_text(), extra);
    }
    Ok(())
}

pub fn cmd_report(checkpoint: &Path, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let coeff_store = store::read_file::<f64>(checkpoint)?;
    let summary = read_sidecar(checkpoint)?;
    let arch = ArchId::from_name(&summary.arch)
        .ok_or_else(|| anyhow!("sidecar names unknown arch {:?}", summary.arch))?;
    let net = arch.network();

    let labels = net.trainable_labels();
    let mut rows = Vec::new();
    for (index, label) in &labels {
        let Some(Some(slot)) = coeff_store.layers.get(*index) else {
            bail!("checkpoint is missing parameters for layer {label}");
        };
        let count = match &slot.params {
            LayerParams::Exact(w) => w.len() as u64,
            LayerParams::Poly(c) => c.param_count() as u64,
        };
        rows.push((label.clone(), count));
    }
    let total: u64 = rows.iter().map(|(_, c)| c).sum();
    let memory_kb = total as f64 / 1000.0;
    let baseline_kb = summary.baseline_params as f64 * 4.0 / 1000.0;

    let mut text = format!("{:<8} {:>12} {:>12}\n", "layer", "params", "memory KB");
    for (label, count) in &rows {
        text.push_str(&format!("{:<8} {:>12} {:>12.3}\n", label, count, *count as f64 / 1000.0));
    }
    text.push_str(&format!("{:<8} {:>12} {:>12.3}\n", "total", total, memory_kb));
    text.push_str(&format!(
        "baseline {}: {} params, {:.1} KB at 32-bit\n",
        summary.baseline_label, summary.baseline_params, baseline_kb
    ));
    text.push_str(&format!("memory reduction: {:.1}x\n", baseline_kb / memory_kb));
    text.push_str(&format!("accuracy: {:.4}\n", summary.final_accuracy));

    let json = serde_json::json!({
        "layers": rows.iter().map(|(l, c)| serde_json::json!({"layer": l, "params": c})).collect::<Vec<_>>(),
        "total_params": total,
        "memory_kb": memory_kb,
        "baseline_label": summary.baseline_label,
        "baseline_params": summary.baseline_params,
        "baseline_memory_kb": baseline_kb,
        "memory_reduction": baseline_kb / memory_kb,
        "accuracy": summary.final_accuracy,
    });
    write(&out_dir.join("report.txt"), &text)?;
    write(&out_dir.join("report.json"), &serde_json::to_string_pretty(&json)?)?;
    print!("{text}");
    Ok(())
}

pub fn cmd_posthoc(checkpoint: &Path, resolved: &Resolved, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let coeff_store = store::read_file::<f64>(checkpoint)?;
    let summary = read_sidecar(checkpoint)?;
    if summary.arch != resolved.arch.name() {
        bail!(
            "checkpoint architecture {} does not match requested scheme's {}",
            summary.arch,
            resolved.arch.name()
        );
    }
    let net = resolved.network();
    let scheme = scheme_from_entries(&net, &resolved.scheme_entries)?;
    let weights = coeff_store.to_weights(&net)?;
    let (_, test_set) = crate::config::load_dataset(resolved)?;

    let original = evaluate(&net, ModelParams::Raw(&weights), &test_set)?;
    let projected = polyreuse_core::train::post_hoc_project(&net, &weights, &scheme)?;
    let posthoc = evaluate(&net, ModelParams::Coeffs(&projected), &test_set)?;

    println!("original accuracy:            {original:.4}");
    println!("post-hoc projected accuracy:  {posthoc:.4}");
    if let Some(reference) = resolved.reference_accuracy {
        println!("trained-with-projection reference: {reference:.4}");
    }
    let json = serde_json::json!({
        "original_accuracy": original,
        "posthoc_accuracy": posthoc,
        "trained_reference_accuracy": resolved.reference_accuracy,
        "scheme": resolved.scheme_entries,
    });
    write(&out_dir.join("posthoc.json"), &serde_json::to_string_pretty(&json)?)?;
    Ok(())
}

fn read_sidecar(checkpoint: &Path) -> Result<Summary> {
    let path = checkpoint.with_file_name("summary.json");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading sidecar {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing sidecar {}", path.display()))
}

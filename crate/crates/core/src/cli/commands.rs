//! Pipeline stages behind the `dadp` verbs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;

use super::artifact::{load_checkpoint, Lineage, Manifest, StageWriter};
use crate::config::ExperimentConfig;
use crate::dyncore::io::{dataset_to_bytes, dataset_to_csv, load_dataset};
use crate::dyncore::{generate_dataset, Dataset, DomainSpec, EnvId, Lag};
use crate::encoder::{
    collect_embeddings, embedding_stats, embeddings_csv, linear_probe, reconstruct_params, train_encoder, EncoderBundle,
};
use crate::error::{Error, Result};
use crate::mixdiff::{train_policy, DiffusionPolicy, Variant};
use crate::rollout::{compare_context_sources, evaluate, sweep_csv, sweep_guidance, ContextMode, EvalReport, PolicyAgent};

pub const DATASET_FILE: &str = "dataset.bin";

/// Policy iterations averaged into one loss-curve row.
const LOSS_STRIDE: usize = 100;

fn lineage(cfg: &ExperimentConfig) -> Lineage {
    Lineage::new(cfg.hash(), cfg.seed)
}

fn encoder_file(i: usize) -> String {
    format!("encoder_s{i}.ckpt")
}

fn policy_file(v: Variant, i: usize) -> String {
    format!("policy_{}_s{i}.ckpt", v.name())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (mean, var.sqrt())
}

fn require_push(cfg: &ExperimentConfig, verb: &str) -> Result<()> {
    if cfg.env.env != EnvId::Push1D {
        return Err(Error::Config(format!(
            "`{verb}` needs a controllable system; the config uses {}",
            cfg.env.env.name()
        )));
    }
    Ok(())
}

fn domains_csv(iid: &[DomainSpec], ood: &[DomainSpec]) -> String {
    let mut s = String::from("domain_index,split,params\n");
    let rows = iid.iter().map(|d| ("IID", d)).chain(ood.iter().map(|d| ("OOD", d)));
    for (i, (split, d)) in rows.enumerate() {
        let p: Vec<String> = d.params.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{i},{split},{}", p.join(";"));
    }
    s
}

/// Expert dataset over the training grid.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let iid = cfg.iid_domains()?;
    let ood = cfg.ood_domains()?;
    let ds = generate_dataset(cfg.env.env, &iid, cfg.env.episodes_per_domain, cfg.env.episode_len, cfg.seed)?;
    let mut w = StageWriter::new(&cfg.output_dir, "gen-data", lineage(cfg))?;
    w.bytes(DATASET_FILE, &dataset_to_bytes(&ds))?;
    w.text("dataset.csv", &dataset_to_csv(&ds))?;
    w.text("domains.csv", &domains_csv(&iid, &ood))?;
    w.bytes("config.toml", cfg.to_toml().as_bytes())?;
    log::info!("{} trajectories over {} domains", ds.trajectory_count(), ds.domains.len());
    w.finish()
}

fn load_verified_dataset(cfg: &ExperimentConfig, l: &Lineage) -> Result<Dataset> {
    Manifest::verify(&cfg.output_dir, "gen-data", l)?;
    load_dataset(&cfg.output_dir.join(DATASET_FILE))
}

/// One encoder per replicate seed with the configured lag.
pub fn train_encoders(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let l = lineage(cfg);
    let ds = load_verified_dataset(cfg, &l)?;
    let ecfg = cfg.encoder.encoder_config(cfg.encoder.lag);
    let mut w = StageWriter::new(&cfg.output_dir, "train-encoder", l.clone())?;
    for i in 0..cfg.eval.seeds {
        let (bundle, log) = train_encoder(&ds, &ecfg, cfg.replicate_seed(i))?;
        let meta = l.metadata(json!({ "replicate": i }));
        w.checkpoint(&encoder_file(i), &bundle.to_checkpoint(meta))?;
        let mut csv = String::from("epoch,train_loss,val_loss,val_forward_mse\n");
        for e in 0..log.train_loss.len() {
            let v = log.val_loss.get(e).copied().unwrap_or(f64::NAN);
            let f = log.val_forward_mse.get(e).copied().unwrap_or(f64::NAN);
            let _ = writeln!(csv, "{e},{},{v},{f}", log.train_loss[e]);
        }
        w.text(&format!("encoder_s{i}_loss.csv"), &csv)?;
        log::info!("encoder {i}: final val loss {:?}", log.val_loss.last());
    }
    w.finish()
}

/// Probe metrics of one lag, per replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub lag: Lag,
    pub accuracy: Vec<f64>,
    pub recon_mse: Vec<f64>,
    pub ratio: Vec<f64>,
}

/// Trains one encoder per lag and replicate and probes its embeddings.
pub fn probe(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let l = lineage(cfg);
    let ds = load_verified_dataset(cfg, &l)?;
    let mut w = StageWriter::new(&cfg.output_dir, "probe", l)?;
    let mut rows = Vec::new();
    for &lag in &cfg.encoder.probe_lags {
        let ecfg = cfg.encoder.encoder_config(lag);
        let mut row = ProbeRow {
            lag,
            accuracy: Vec::new(),
            recon_mse: Vec::new(),
            ratio: Vec::new(),
        };
        for i in 0..cfg.eval.seeds {
            let seed = cfg.replicate_seed(i);
            let (bundle, _) = train_encoder(&ds, &ecfg, seed)?;
            let set = collect_embeddings(&bundle, &ds, cfg.encoder.probe_stride)?;
            row.accuracy.push(linear_probe(set.z.view(), &set.labels, seed)?);
            row.recon_mse.push(reconstruct_params(set.z.view(), set.params.view(), seed)?);
            row.ratio.push(embedding_stats(set.z.view(), &set.labels)?.ratio);
            if i == 0 {
                w.text(&format!("embeddings_lag{}.csv", lag.label()), &embeddings_csv(&set))?;
            }
        }
        log::info!("probe lag {}: accuracy {:?}", lag.label(), row.accuracy);
        rows.push(row);
    }
    w.text("probe.csv", &probe_csv(&rows))?;
    w.finish()
}

pub fn probe_csv(rows: &[ProbeRow]) -> String {
    let mut s = String::from("lag,accuracy,accuracy_std,recon_mse,recon_mse_std,variance_ratio,variance_ratio_std\n");
    for r in rows {
        let (a, asd) = mean_std(&r.accuracy);
        let (m, msd) = mean_std(&r.recon_mse);
        let (q, qsd) = mean_std(&r.ratio);
        let _ = writeln!(s, "{},{a},{asd},{m},{msd},{q},{qsd}", r.lag.label());
    }
    s
}

fn load_encoders(cfg: &ExperimentConfig, l: &Lineage) -> Result<Vec<(EncoderBundle, String)>> {
    (0..cfg.eval.seeds)
        .map(|i| {
            let ck = load_checkpoint(&cfg.output_dir, &encoder_file(i), l)?;
            Ok((EncoderBundle::from_checkpoint(&ck)?, ck.digest()))
        })
        .collect()
}

/// One policy per configured variant and replicate, each on the encoder of
/// its replicate.
pub fn train_policies(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    require_push(cfg, "train-policy")?;
    let l = lineage(cfg);
    let ds = load_verified_dataset(cfg, &l)?;
    Manifest::verify(&cfg.output_dir, "train-encoder", &l)?;
    let encoders = load_encoders(cfg, &l)?;
    let mut w = StageWriter::new(&cfg.output_dir, "train-policy", l.clone())?;
    for &variant in &cfg.policy.variants {
        let pcfg = cfg.policy.policy_config(variant);
        for (i, (enc, digest)) in encoders.iter().enumerate() {
            let (policy, log) = train_policy(&ds, enc, digest, &pcfg, cfg.replicate_seed(i))?;
            let meta = l.metadata(json!({ "replicate": i }));
            w.checkpoint(&policy_file(variant, i), &policy.to_checkpoint(meta))?;
            let mut csv = String::from("iteration,loss\n");
            for start in (0..log.loss.len()).step_by(LOSS_STRIDE) {
                let _ = writeln!(csv, "{start},{}", log.mean(start, start + LOSS_STRIDE));
            }
            w.text(&format!("policy_{}_s{i}_loss.csv", variant.name()), &csv)?;
            log::info!(
                "policy {} {i}: loss {:.5} -> {:.5}",
                variant.name(),
                log.mean(0, LOSS_STRIDE),
                log.mean(log.loss.len().saturating_sub(LOSS_STRIDE), log.loss.len())
            );
        }
    }
    w.finish()
}

/// Trained policies of one variant with the encoders they were trained on.
struct Models {
    policies: Vec<DiffusionPolicy>,
    encoders: Vec<EncoderBundle>,
}

impl Models {
    fn agents(&self) -> Vec<PolicyAgent<'_>> {
        self.policies
            .iter()
            .zip(&self.encoders)
            .map(|(policy, encoder)| PolicyAgent { policy, encoder })
            .collect()
    }
}

fn load_models(cfg: &ExperimentConfig, l: &Lineage, variant: Variant) -> Result<Models> {
    let encoders = load_encoders(cfg, l)?;
    let mut policies = Vec::new();
    for (i, (_, digest)) in encoders.iter().enumerate() {
        let ck = load_checkpoint(&cfg.output_dir, &policy_file(variant, i), l)?;
        let p = DiffusionPolicy::from_checkpoint(&ck)?;
        if &p.encoder_hash != digest {
            return Err(Error::Lineage(format!(
                "{} was trained against a different encoder than {}",
                policy_file(variant, i),
                encoder_file(i)
            )));
        }
        policies.push(p);
    }
    Ok(Models {
        policies,
        encoders: encoders.into_iter().map(|(e, _)| e).collect(),
    })
}

pub const SUMMARY_HEADER: &str = "variant,mode,seeds,iid_normalized,iid_std,ood_normalized,ood_std,mastery,mastery_std\n";

fn summary_row(variant: Variant, r: &EvalReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}\n",
        variant.name(),
        r.mode.name(),
        r.seeds,
        r.iid_normalized,
        r.iid_std,
        r.ood_normalized,
        r.ood_std,
        r.mastery,
        r.mastery_std
    )
}

/// Zero-shot evaluation of every variant under every configured context
/// source. Returns the reports in `(variant, report)` order.
pub fn eval(cfg: &ExperimentConfig) -> Result<Vec<(Variant, EvalReport)>> {
    cfg.validate()?;
    require_push(cfg, "eval")?;
    let l = lineage(cfg);
    Manifest::verify(&cfg.output_dir, "train-policy", &l)?;
    let (iid, ood) = (cfg.iid_domains()?, cfg.ood_domains()?);
    let mut w = StageWriter::new(&cfg.output_dir, "eval", l.clone())?;
    let mut out = Vec::new();
    let mut summary = String::from(SUMMARY_HEADER);
    for &variant in &cfg.policy.variants {
        let models = load_models(cfg, &l, variant)?;
        let agents = models.agents();
        let reports = if cfg.eval.modes.len() > 1 {
            let all = compare_context_sources(&agents, &iid, &ood, &cfg.eval_config(ContextMode::ColdStart))?;
            all.into_iter().filter(|r| cfg.eval.modes.contains(&r.mode)).collect()
        } else {
            vec![evaluate(&agents, &iid, &ood, &cfg.eval_config(cfg.eval.modes[0]))?]
        };
        for r in reports {
            w.text(&format!("eval_{}_{}.csv", variant.name(), r.mode.name()), &r.to_csv())?;
            summary.push_str(&summary_row(variant, &r));
            out.push((variant, r));
        }
    }
    w.text("eval_summary.csv", &summary)?;
    w.finish()?;
    Ok(out)
}

/// Guidance-scale sweep of every configured variant that uses the biased
/// prior.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<(Variant, Vec<(f64, EvalReport)>)>> {
    cfg.validate()?;
    require_push(cfg, "sweep")?;
    let l = lineage(cfg);
    Manifest::verify(&cfg.output_dir, "train-policy", &l)?;
    let (iid, ood) = (cfg.iid_domains()?, cfg.ood_domains()?);
    let mut w = StageWriter::new(&cfg.output_dir, "sweep", l.clone())?;
    let mut out = Vec::new();
    for &variant in cfg.policy.variants.iter().filter(|v| v.uses_bias()) {
        let models = load_models(cfg, &l, variant)?;
        let rows = sweep_guidance(
            &models.agents(),
            &cfg.eval.lambdas,
            &iid,
            &ood,
            &cfg.eval_config(ContextMode::ColdStart),
        )?;
        w.text(&format!("sweep_{}.csv", variant.name()), &sweep_csv(&rows))?;
        out.push((variant, rows));
    }
    if out.is_empty() {
        log::warn!("no configured variant uses the guidance scale; nothing swept");
    }
    w.finish()?;
    Ok(out)
}

/// Output layout of `report`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Text,
}

/// Stamped text artifact: name, lineage and body without the stamp.
struct Artifact {
    name: String,
    lineage: Lineage,
    body: String,
}

fn scan(dir: &Path) -> Result<Vec<Artifact>> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(_) => return Err(Error::Lineage(format!("no artifacts: {} does not exist", dir.display()))),
    };
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv") && !n.starts_with("report"))
        .collect();
    names.sort();
    let mut out = Vec::new();
    for name in names {
        let text = fs::read_to_string(dir.join(&name))?;
        if let Some(lineage) = Lineage::parse_stamp(&text) {
            let body = text.split_once('\n').map_or("", |(_, b)| b).to_string();
            out.push(Artifact { name, lineage, body });
        }
    }
    Ok(out)
}

/// Consolidated tables over every stamped artifact in `dir`: ablation
/// (variant x IID/OOD/mastery per context source), guidance sweeps and
/// probe metrics. Refuses directories that mix configurations.
pub fn report(dir: &Path, format: Format) -> Result<String> {
    let artifacts = scan(dir)?;
    let Some(first) = artifacts.first() else {
        return Err(Error::Lineage(format!("no artifacts in {}", dir.display())));
    };
    for a in &artifacts {
        first.lineage.expect(&a.lineage, &a.name)?;
    }
    let lineage = first.lineage.clone();
    let find = |name: &str| artifacts.iter().find(|a| a.name == name);
    let sweeps: Vec<&Artifact> = artifacts
        .iter()
        .filter(|a| a.name.starts_with("sweep_"))
        .collect();

    let mut tables: Vec<(String, String)> = Vec::new();
    if let Some(a) = find("eval_summary.csv") {
        tables.push(("ablation".into(), a.body.clone()));
    }
    for a in &sweeps {
        let variant = a.name.trim_start_matches("sweep_").trim_end_matches(".csv");
        tables.push((format!("guidance sweep {variant}"), a.body.clone()));
    }
    if let Some(a) = find("probe.csv") {
        tables.push(("probe".into(), a.body.clone()));
    }
    if tables.is_empty() {
        return Err(Error::Lineage(format!(
            "no artifacts in {}: run eval, sweep or probe first",
            dir.display()
        )));
    }

    let mut s = lineage.stamp();
    match format {
        Format::Csv => {
            for (title, body) in &tables {
                let _ = writeln!(s, "# {title}");
                s.push_str(body);
            }
        }
        Format::Text => {
            for (title, body) in &tables {
                let _ = writeln!(s, "\n{title}");
                s.push_str(&render_table(body));
            }
        }
    }
    Ok(s)
}

/// Aligned plain-text table of a CSV body; numbers shown to 3 decimals.
fn render_table(csv: &str) -> String {
    let rows: Vec<Vec<String>> = csv
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|c| match c.parse::<f64>() {
                    Ok(v) if c.contains('.') || c.contains('e') => format!("{v:.3}"),
                    _ => c.to_string(),
                })
                .collect()
        })
        .collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for r in &rows {
        let cells: Vec<String> = r.iter().enumerate().map(|(c, v)| format!("{v:>w$}", w = widths[c])).collect();
        let _ = writeln!(s, "  {}", cells.join("  "));
    }
    s
}

//! Stand-alone stages: the biased classifier and the VCAE.

use std::path::Path;

use anyhow::Result;
use debias_core::classifier::save_checkpoint;
use debias_core::debias::{compute_weights_clamped, train_biased_classifier};
use debias_core::vcae::{latent_rows, train_vcae, vcae_weights};

use crate::config::RunConfig;
use crate::output::{create_dir, csv_writer, write_json, write_metrics, write_weights};

/// Trains `ψ` for every seed into `out/seed<k>/`: checkpoint, per-sample
/// confidences, clamped weights and the GCE history.
pub fn train_biased(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    for &seed in &cfg.seeds {
        let (train, _) = cfg.datasets(seed)?;
        let p = cfg.pipeline_for(seed);
        let art = train_biased_classifier(&train, p.gce, p.t_bias, &p.biased_cfg())?;
        let dir = out.join(format!("seed{seed}"));
        create_dir(&dir)?;
        save_checkpoint(
            &art.params,
            &p.biased_cfg().optimizer,
            &dir.join("checkpoint"),
        )?;
        let weights = compute_weights_clamped(&art.confidences, p.gamma)?;
        write_weights(&dir.join("weights.csv"), &weights, train.aligned())?;
        let mut w = csv_writer(&dir.join("confidences.csv"))?;
        w.write_record(["index", "label", "aligned", "confidence"])?;
        for (i, c) in art.confidences.iter().enumerate() {
            w.write_record([
                i.to_string(),
                train.labels()[i].to_string(),
                u8::from(train.aligned()[i]).to_string(),
                c.to_string(),
            ])?;
        }
        w.flush()?;
        write_metrics(&dir.join("metrics.csv"), &[(seed, art.history)])?;
    }
    write_json(&out.join("config.json"), cfg)
}

/// Trains the VCAE for every seed into `out/seed<k>/`: the latent dump,
/// weights and per-epoch loss.
pub fn run_vcae(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    for &seed in &cfg.seeds {
        let (train, _) = cfg.datasets(seed)?;
        let p = cfg.pipeline_for(seed);
        p.vcae.validate(train.classes())?;
        let o = train_vcae(&train, &p.vcae, &p.vcae_cfg())?;
        let dir = out.join(format!("seed{seed}"));
        create_dir(&dir)?;
        let rows = latent_rows(&o.params, &train, &p.vcae)?;
        let mut w = csv_writer(&dir.join("latents.csv"))?;
        let mut header = vec!["index".to_string()];
        header.extend((0..p.vcae.dim_z).map(|k| format!("z_{k}")));
        header.extend(["label", "aligned", "p_y_given_z", "weight"].map(String::from));
        w.write_record(&header)?;
        for r in &rows {
            let mut rec = vec![r.index.to_string()];
            rec.extend(r.z.iter().map(f64::to_string));
            rec.push(r.label.to_string());
            rec.push(u8::from(r.aligned).to_string());
            rec.push(r.p_y_given_z.to_string());
            rec.push(r.weight.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        write_weights(
            &dir.join("weights.csv"),
            &vcae_weights(&o.params, &train, &p.vcae)?,
            train.aligned(),
        )?;
        let mut w = csv_writer(&dir.join("history.csv"))?;
        w.write_record(["seed", "epoch", "loss"])?;
        for (e, l) in o.history.iter().enumerate() {
            w.write_record([seed.to_string(), e.to_string(), l.to_string()])?;
        }
        w.flush()?;
    }
    write_json(&out.join("config.json"), cfg)
}

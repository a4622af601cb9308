use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use svkit::backend::{Backend, BackendKind};
use svkit::calibration::{apply_fusion, calibrate_pipeline, fuse_weighted, train_logreg, FusionModel};
use svkit::frontend::{apply_vad, energy_vad, fbank, plp, stmn};
use svkit::io::{read_features, read_scores, read_wav, write_features, write_scores, write_wav};
use svkit::metrics::evaluate;
use svkit::nnet::{init_weights, load_weights, save_weights, ArchKind, Extractor, NetworkSpec};
use svkit::scorenorm::{build_cohort, snorm_trials, Cohort};
use svkit::synth::{gen_plda_data, gen_toy_corpus, gen_trials, random_plda_model, PldaSynthSpec, ToyCorpusSpec};
use svkit::{parse_trials, ScoreSet, TrialList, Waveform};

use crate::args::*;
use crate::config::{FeatureKind, PipelineConfig};
use crate::formats::*;
use crate::UsageError;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_trials(path: &Path) -> Result<TrialList> {
    parse_trials(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_scores(path: &Path) -> Result<ScoreSet> {
    read_scores(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn save_scores(path: &Path, s: &ScoreSet) -> Result<()> {
    write_scores(path, s).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub fn feats(a: &FeatsArgs, cfg: &PipelineConfig) -> Result<()> {
    let kind = match a.kind {
        Some(FeatureChoice::Fbank) => FeatureKind::Fbank,
        Some(FeatureChoice::Plp) => FeatureKind::Plp,
        None => cfg.features,
    };
    let entries = read_scp(&a.scp)?;
    let masks = a.vad.as_deref().map(read_vad).transpose()?;
    let use_vad = !a.no_vad && (masks.is_some() || cfg.vad);
    create_dir(&a.out)?;
    let fc = &cfg.feature;
    let written = entries
        .par_iter()
        .map(|(utt, wav)| -> Result<(String, String)> {
            let wave = read_wav(wav).with_context(|| format!("reading {}", wav.display()))?;
            let mut f = match kind {
                FeatureKind::Fbank => fbank(&wave, fc),
                FeatureKind::Plp => plp(&wave, fc),
            }
            .with_context(|| format!("features for {utt}"))?;
            if cfg.stmn && !a.no_stmn {
                f = stmn(&f, fc.stmn_window);
            }
            if use_vad {
                let mask = match &masks {
                    Some(m) => m.get(utt).cloned().with_context(|| format!("no VAD mask for {utt}"))?,
                    None => energy_vad(&wave, fc)?,
                };
                f = apply_vad(&f, &mask).with_context(|| format!("VAD for {utt}"))?;
            }
            let name = format!("{utt}.svf");
            write_features(a.out.join(&name), &f)?;
            Ok((utt.clone(), name))
        })
        .collect::<Result<Vec<_>>>()?;
    write_scp(&a.out.join("feats.scp"), &written)?;
    eprintln!("wrote {} feature files to {}", written.len(), a.out.display());
    Ok(())
}

pub fn vad(a: &VadArgs, cfg: &PipelineConfig) -> Result<()> {
    let entries = read_scp(&a.scp)?;
    let masks = entries
        .par_iter()
        .map(|(utt, wav)| {
            let wave = read_wav(wav).with_context(|| format!("reading {}", wav.display()))?;
            Ok((utt.clone(), energy_vad(&wave, &cfg.feature)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let speech: usize = masks.iter().map(|(_, m)| m.speech_frames()).sum();
    let total: usize = masks.iter().map(|(_, m)| m.len()).sum();
    write_vad(&a.out, &masks)?;
    eprintln!("{speech} of {total} frames marked as speech");
    Ok(())
}

pub fn embed(a: &EmbedArgs, cfg: &PipelineConfig) -> Result<()> {
    let arch: ArchKind = match &a.arch {
        Some(s) => s.parse().map_err(|e: svkit::Error| usage(e.to_string()))?,
        None => cfg.arch,
    };
    let entries = read_scp(&a.feats)?;
    if entries.is_empty() {
        bail!("{}: no utterances", a.feats.display());
    }
    let feats = entries
        .par_iter()
        .map(|(u, p)| {
            read_features(p, cfg.feature.frame_shift)
                .with_context(|| format!("reading {}", p.display()))
                .map(|f| (u.clone(), f))
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = feats[0].1.cols();
    // the classifier layers are not used for embedding extraction
    let spec = NetworkSpec::preset(arch, dim, 2)?;
    let weights = match a.weights.as_ref().or(cfg.weights.as_ref()) {
        Some(p) => load_weights(p).with_context(|| format!("loading {}", p.display()))?,
        None => init_weights(&spec, cfg.seed)?,
    };
    if let Some(p) = &a.save_weights {
        save_weights(&weights, p).with_context(|| format!("writing {}", p.display()))?;
    }
    let net = Extractor::new(&spec, &weights)?;
    let embs = feats
        .par_iter()
        .map(|(u, f)| {
            let e = net.embed(f).with_context(|| format!("embedding {u}"))?;
            Ok((u.clone(), e.vector))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    write_embeddings(&a.out, &embs)?;
    eprintln!(
        "wrote {} {arch} embeddings of dimension {}",
        embs.len(),
        spec.embedding_dim
    );
    Ok(())
}

fn train_backend(embs: &BTreeMap<String, Vec<f64>>, utt2spk: Option<&Path>, cfg: &PipelineConfig) -> Result<Backend> {
    let (xs, labels) = match utt2spk {
        Some(p) => labelled_embeddings(embs, &read_utt2spk(p)?)?,
        None if cfg.backend == BackendKind::Cosine => (embs.values().cloned().collect(), vec![0; embs.len()]),
        None => return Err(usage("a PLDA backend needs --utt2spk or --model")),
    };
    let bc = cfg.backend_config(xs[0].len());
    let b = Backend::train(&xs, &labels, &bc).context("training backend")?;
    eprintln!("trained {} backend on {} embeddings", bc.kind, xs.len());
    Ok(b)
}

fn obtain_backend(
    src: &BackendSource,
    scored: &BTreeMap<String, Vec<f64>>,
    cfg: &PipelineConfig,
) -> Result<(Backend, BTreeMap<String, Vec<f64>>)> {
    let train = match &src.train_embeddings {
        Some(p) => read_embeddings(p)?,
        None => scored.clone(),
    };
    let backend = match &src.model {
        Some(p) => Backend::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => train_backend(&train, src.utt2spk.as_deref(), cfg)?,
    };
    Ok((backend, train))
}

fn obtain_cohort(
    src: &CohortSource,
    backend_src: &BackendSource,
    backend: &Backend,
    train: &BTreeMap<String, Vec<f64>>,
) -> Result<Option<Cohort>> {
    if let Some(p) = &src.cohort {
        return Ok(Some(
            Cohort::load(p).with_context(|| format!("loading {}", p.display()))?,
        ));
    }
    let Some(u2s) = src.cohort_utt2spk.as_ref().or(backend_src.utt2spk.as_ref()) else {
        return Ok(None);
    };
    let embs = match &src.cohort_embeddings {
        Some(p) => read_embeddings(p)?,
        None => train.clone(),
    };
    let (xs, labels) = labelled_embeddings(&embs, &read_utt2spk(u2s)?)?;
    Ok(Some(build_cohort(&xs, &labels, backend).context("building cohort")?))
}

pub fn train_plda(a: &TrainArgs, cfg: &PipelineConfig) -> Result<()> {
    let embs = read_embeddings(&a.embeddings)?;
    let backend = train_backend(&embs, Some(&a.utt2spk), cfg)?;
    backend
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = &a.cohort_out {
        let (xs, labels) = labelled_embeddings(&embs, &read_utt2spk(&a.utt2spk)?)?;
        let cohort = build_cohort(&xs, &labels, &backend)?;
        cohort.save(p).with_context(|| format!("writing {}", p.display()))?;
        eprintln!("cohort of {} speakers", cohort.len());
    }
    Ok(())
}

fn to_hash(m: &BTreeMap<String, Vec<f64>>) -> HashMap<String, Vec<f64>> {
    m.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
}

/// Score trials in parallel chunks; output keeps trial order.
fn score_parallel(backend: &Backend, embs: &HashMap<String, Vec<f64>>, trials: &TrialList) -> Result<ScoreSet> {
    let chunk = 256;
    let parts = trials
        .trials
        .par_chunks(chunk)
        .map(|c| {
            let sub = TrialList { trials: c.to_vec() };
            backend.score_trials(embs, &sub).map(|s| s.scores)
        })
        .collect::<svkit::Result<Vec<_>>>()?;
    Ok(ScoreSet::new(parts.into_iter().flatten().collect()))
}

pub fn score(a: &ScoreArgs, cfg: &PipelineConfig) -> Result<()> {
    let embs = read_embeddings(&a.embeddings)?;
    let trials = load_trials(&a.trials)?;
    let (backend, train) = obtain_backend(&a.backend, &embs, cfg)?;
    let lookup = to_hash(&embs);
    let mut scores = score_parallel(&backend, &lookup, &trials)?;
    if cfg.snorm {
        if let Some(cohort) = obtain_cohort(&a.cohort, &a.backend, &backend, &train)? {
            scores = snorm_trials(&backend, &cohort, &lookup, &trials, &scores, &cfg.snorm_config())?;
            eprintln!(
                "applied S-norm with {} cohort speakers, top {}",
                cohort.len(),
                cfg.snorm_x
            );
        }
    }
    save_scores(&a.out, &scores)?;
    eprintln!("scored {} trials with the {} backend", scores.len(), backend.kind());
    Ok(())
}

pub fn snorm(a: &SnormArgs, cfg: &PipelineConfig) -> Result<()> {
    let embs = read_embeddings(&a.embeddings)?;
    let trials = load_trials(&a.trials)?;
    let raw = load_scores(&a.scores)?;
    let (backend, train) = obtain_backend(&a.backend, &embs, cfg)?;
    let cohort = obtain_cohort(&a.cohort, &a.backend, &backend, &train)?
        .ok_or_else(|| usage("S-norm needs --cohort, --cohort-utt2spk or --utt2spk"))?;
    let out = snorm_trials(&backend, &cohort, &to_hash(&embs), &trials, &raw, &cfg.snorm_config())?;
    // keep the order of the input score file
    save_scores(&a.out, &ScoreSet::from_values(&trials, out.values()))?;
    Ok(())
}

pub fn calibrate(a: &CalibrateArgs, cfg: &PipelineConfig) -> Result<()> {
    let sets = a.scores.iter().map(|p| load_scores(p)).collect::<Result<Vec<_>>>()?;
    if let Some(m) = &a.apply {
        let model = FusionModel::load(m).with_context(|| format!("loading {}", m.display()))?;
        save_scores(&a.out, &apply_fusion(&sets, &model)?)?;
        return Ok(());
    }
    let key_path = a
        .key
        .as_ref()
        .ok_or_else(|| usage("calibration needs --key or --apply"))?;
    let key = load_trials(key_path)?;
    let mut lr = cfg.logreg();
    if let Some(p) = a.prior {
        lr.prior = p;
    }
    if sets.len() == 1 {
        let values = sets[0].aligned_values(&key)?;
        let rows: Vec<Vec<f64>> = values.into_iter().map(|v| vec![v]).collect();
        let model = train_logreg(&rows, &key.labels()?, &lr)?;
        save_scores(&a.out, &apply_fusion(&sets, &model)?)?;
        if let Some(p) = &a.model_out {
            model.save(p)?;
        }
        eprintln!("calibration weight {:.6} offset {:.6}", model.weights[0], model.offset);
    } else {
        let r = calibrate_pipeline(&sets, &key, &lr)?;
        // scores go through the composed map so that `--apply` reproduces them exactly
        let model = r.composed();
        save_scores(&a.out, &apply_fusion(&sets, &model)?)?;
        if let Some(p) = &a.model_out {
            model.save(p)?;
        }
    }
    Ok(())
}

pub fn fuse(a: &FuseArgs, cfg: &PipelineConfig) -> Result<()> {
    let sets = a.scores.iter().map(|p| load_scores(p)).collect::<Result<Vec<_>>>()?;
    let out = match &a.model {
        Some(m) => apply_fusion(
            &sets,
            &FusionModel::load(m).with_context(|| format!("loading {}", m.display()))?,
        )?,
        None => {
            let w = a.weights.clone().unwrap_or_else(|| cfg.fusion_weights.clone());
            if w.len() != sets.len() {
                return Err(usage(format!(
                    "{} weights given for {} score files",
                    w.len(),
                    sets.len()
                )));
            }
            fuse_weighted(&sets, &w)?
        }
    };
    save_scores(&a.out, &out)
}

pub fn eval(a: &EvalArgs, cfg: &PipelineConfig) -> Result<()> {
    let scores = load_scores(&a.scores)?;
    let key = load_trials(&a.key)?;
    let report = evaluate(&scores, &key, &cfg.dcf())?;
    println!("{report}");
    if let Some(p) = &a.out {
        fs::write(p, format!("{report}\n")).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn default_counts(labels: &[usize], a: &SynthArgs) -> (usize, usize) {
    let n = labels.len();
    let mut tgt = 0;
    for i in 0..n {
        for j in i + 1..n {
            tgt += (labels[i] == labels[j]) as usize;
        }
    }
    let non = n * n.saturating_sub(1) / 2 - tgt;
    (
        a.targets.unwrap_or(tgt.min(1000)),
        a.nontargets.unwrap_or(non.min(1000)),
    )
}

pub fn synth(a: &SynthArgs, cfg: &PipelineConfig) -> Result<()> {
    if a.speakers < 2 || a.utts == 0 {
        return Err(usage("synth needs at least 2 speakers and 1 utterance each"));
    }
    create_dir(&a.out)?;
    let (ids, labels) = match a.kind {
        SynthKind::Corpus => {
            let spec = ToyCorpusSpec {
                seed: cfg.seed,
                num_speakers: a.speakers,
                utts_per_speaker: a.utts,
                duration_s: a.duration,
                ..Default::default()
            };
            let corpus = gen_toy_corpus(&spec)?;
            let wav_dir = a.out.join("wav");
            create_dir(&wav_dir)?;
            let ids = corpus.ids();
            let mut scp = Vec::new();
            for (id, w) in ids.iter().zip(&corpus.waves) {
                write_wav(wav_dir.join(format!("{id}.wav")), &quantized(w))?;
                scp.push((id.clone(), format!("wav/{id}.wav")));
            }
            write_scp(&a.out.join("wav.scp"), &scp)?;
            (ids, corpus.labels)
        }
        SynthKind::Embeddings => {
            let rank = (a.dim / 2).max(1);
            let model = random_plda_model(a.dim, rank, rank, 2.0, 1.0, 0.5, cfg.seed);
            let data = gen_plda_data(&PldaSynthSpec {
                seed: cfg.seed,
                num_speakers: a.speakers,
                utts_per_speaker: a.utts,
                model,
            });
            let ids = data.ids();
            let embs = ids.iter().cloned().zip(data.embeddings).collect();
            write_embeddings(&a.out.join("embeddings.svw"), &embs)?;
            (ids, data.labels)
        }
    };
    let u2s: Vec<(String, String)> = ids
        .iter()
        .zip(&labels)
        .map(|(u, s)| (u.clone(), format!("spk{s:03}")))
        .collect();
    write_utt2spk(&a.out.join("utt2spk"), &u2s)?;
    let (nt, nn) = default_counts(&labels, a);
    let trials = gen_trials(&labels, nt, nn, cfg.seed)?;
    fs::write(a.out.join("trials"), trials.to_text())?;
    eprintln!(
        "wrote {} utterances and {} trials to {}",
        ids.len(),
        trials.len(),
        a.out.display()
    );
    Ok(())
}

/// The 16-bit round trip applied up front so in-memory and on-disk audio agree.
fn quantized(w: &Waveform) -> Waveform {
    Waveform::new(
        w.samples
            .iter()
            .map(|s| (s * 32767.0).round().clamp(-32768.0, 32767.0) / 32767.0)
            .collect(),
        w.sample_rate,
    )
}

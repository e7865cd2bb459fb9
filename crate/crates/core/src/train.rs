//! Multi-task training: next-POI cross entropy plus weighted InfoNCE over
//! two augmented views, squared-L2 penalty, Adam, early stopping on
//! validation HR@10, and resumable checkpoints.
//!
//! Each batch element is encoded on its own tape so elements run in
//! parallel. The contrastive loss couples the batch, so it is evaluated on a
//! small separate tape over the user vectors; its gradient with respect to
//! each user vector is then pushed back through the element tapes as a
//! linear term.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::graphs::{add_master_node, build_global_temporal, GlobalTemporalGraph, TrajectoryGraph};
use crate::gsan::{rec_loss, CategoryVocab, DistanceBins, GraphInputs, Gsan};
use crate::ingest::{Catalog, DatasetSplit, Sample};
use crate::numerics::{accumulate_grads, AdamState, ParamSet, Tape, Tensor, Var};
use crate::pretrain::Pretrained;
use crate::rng;
use crate::ssl::{infonce, make_views, AugmentConfig, CorrelationIndex};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// `rec + λ·ssl + γ·Σθ²` over regularized trainable parameters.
pub fn total_loss(rec: f64, ssl: f64, params: &ParamSet, lambda: f64, gamma: f64) -> f64 {
    rec + lambda * ssl + gamma * params.regularized_sum_squares()
}

/// Loss weights shared by the batch objective and its gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub gamma: f64,
    pub temperature: f64,
}

impl LossWeights {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            lambda: cfg.lambda,
            gamma: cfg.gamma,
            temperature: cfg.temperature,
        }
    }
}

/// One supervised graph with its optional pair of augmented views.
#[derive(Debug, Clone)]
pub struct BatchItem<'a> {
    pub inputs: &'a GraphInputs,
    pub target: usize,
    pub views: Option<(GraphInputs, GraphInputs)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchLosses {
    pub rec: f64,
    /// Summed over the batch rows; zero when no views were drawn.
    pub ssl: f64,
    pub total: f64,
}

fn contrastive_active(items: &[BatchItem], weights: &LossWeights) -> bool {
    weights.lambda > 0.0 && items.len() >= 2 && items.iter().all(|i| i.views.is_some())
}

/// The whole batch objective on one tape. Used as the reference for the
/// parallel gradient path and for finite-difference checks.
pub fn batch_objective(
    tape: &mut Tape,
    model: &Gsan,
    params: &ParamSet,
    items: &[BatchItem],
    weights: &LossWeights,
) -> Result<Var> {
    let bound = model.bind(tape, params);
    let mut users = Vec::with_capacity(items.len());
    let mut targets = Vec::with_capacity(items.len());
    for item in items {
        users.push(model.encode(tape, &bound, item.inputs)?.user);
        targets.push(item.target);
    }
    let stacked = tape.concat_rows(&users);
    let logits = model.logits(tape, &bound, stacked);
    let mut terms = vec![rec_loss(tape, logits, &targets)];
    if contrastive_active(items, weights) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for item in items {
            let (va, vb) = item.views.as_ref().expect("checked");
            a.push(model.encode(tape, &bound, va)?.user);
            b.push(model.encode(tape, &bound, vb)?.user);
        }
        let (a, b) = (tape.concat_rows(&a), tape.concat_rows(&b));
        let ssl = infonce(tape, a, b, weights.temperature)?;
        terms.push(tape.scale(ssl, weights.lambda));
    }
    if weights.gamma > 0.0 {
        for id in params.ids() {
            let e = params.entry(id);
            if e.regularized && e.trainable {
                let v = tape.param(id, &e.value);
                let sq = tape.sum_squares(v);
                terms.push(tape.scale(sq, weights.gamma));
            }
        }
    }
    Ok(tape.add_all(&terms))
}

struct ElementPass {
    tape: Tape,
    rec: Var,
    views: Option<(Var, Var)>,
}

/// Loss values and one dense gradient per parameter, computed with one tape
/// per batch element.
pub fn batch_gradients(
    model: &Gsan,
    params: &ParamSet,
    items: &[BatchItem],
    weights: &LossWeights,
) -> Result<(BatchLosses, Vec<Tensor>)> {
    let contrastive = contrastive_active(items, weights);
    let passes: Vec<ElementPass> = items
        .par_iter()
        .map(|item| {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, params);
            let user = model.encode(&mut tape, &bound, item.inputs)?.user;
            let logits = model.logits(&mut tape, &bound, user);
            let rec = rec_loss(&mut tape, logits, &[item.target]);
            let views = match (&item.views, contrastive) {
                (Some((va, vb)), true) => Some((
                    model.encode(&mut tape, &bound, va)?.user,
                    model.encode(&mut tape, &bound, vb)?.user,
                )),
                _ => None,
            };
            Ok(ElementPass { tape, rec, views })
        })
        .collect::<Result<_>>()?;

    let n = items.len() as f64;
    let rec = passes.iter().map(|p| p.tape.value(p.rec).item()).sum::<f64>() / n;

    let (ssl, view_grads) = if contrastive {
        let rows = |pick: fn(&(Var, Var)) -> Var| -> Vec<Vec<f64>> {
            passes
                .iter()
                .map(|p| p.tape.value(pick(p.views.as_ref().expect("views"))).data().to_vec())
                .collect()
        };
        let mut tape = Tape::new();
        let a = tape.input(Tensor::from_rows(&rows(|v| v.0))?);
        let b = tape.input(Tensor::from_rows(&rows(|v| v.1))?);
        let loss = infonce(&mut tape, a, b, weights.temperature)?;
        let grads = tape.backward(loss);
        let (ga, gb) = (grads.of(a).expect("input").to_vec(), grads.of(b).expect("input").to_vec());
        (tape.value(loss).item(), Some((ga, gb)))
    } else {
        (0.0, None)
    };

    let per_element: Vec<Vec<(crate::numerics::ParamId, Tensor)>> = passes
        .into_par_iter()
        .enumerate()
        .map(|(k, mut p)| {
            let mut terms = vec![p.tape.scale(p.rec, 1.0 / n)];
            if let (Some((ua, ub)), Some((ga, gb))) = (p.views, &view_grads) {
                let d = p.tape.shape(ua).1;
                for (u, g) in [(ua, ga), (ub, gb)] {
                    let row: Vec<f64> = g[k * d..(k + 1) * d].iter().map(|x| x * weights.lambda).collect();
                    let c = p.tape.constant(Tensor::row_vector(row));
                    let prod = p.tape.mul(c, u);
                    terms.push(p.tape.sum(prod));
                }
            }
            let objective = p.tape.add_all(&terms);
            p.tape.backward(objective).into_params()
        })
        .collect();
    let mut grads = accumulate_grads(params, per_element.into_iter().flatten().collect());

    if weights.gamma > 0.0 {
        for (i, id) in params.ids().enumerate() {
            let e = params.entry(id);
            if e.regularized && e.trainable {
                for (g, t) in grads[i].data_mut().iter_mut().zip(e.value.data()) {
                    *g += 2.0 * weights.gamma * t;
                }
            }
        }
    }
    let total = total_loss(rec, ssl, params, weights.lambda, weights.gamma);
    Ok((BatchLosses { rec, ssl, total }, grads))
}

/// Everything derived from a dataset split that training and evaluation
/// need.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub catalog: Catalog,
    pub gt: GlobalTemporalGraph,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    /// Prefix graph of each training sample.
    pub graphs: Vec<TrajectoryGraph>,
    /// Graph of each full training sequence, used for distance bins and the
    /// category vocabulary.
    pub sequence_graphs: Vec<TrajectoryGraph>,
}

impl TrainingData {
    pub fn from_split(split: &DatasetSplit, cfg: &RunConfig) -> Result<Self> {
        let catalog = split.catalog.clone();
        let sequences = split.train_sequences()?;
        let gt = build_global_temporal(&sequences, catalog.len(), cfg.max_neighbors);
        let train = split.train_samples(cfg.all_prefixes)?;
        if train.is_empty() {
            return Err(Error::Data("no training samples (every training sequence is shorter than 2)".into()));
        }
        let graphs = train
            .iter()
            .map(|s| TrajectoryGraph::from_sequence(&s.prefix, &catalog))
            .collect();
        let sequence_graphs = sequences
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| TrajectoryGraph::from_sequence(s, &catalog))
            .collect();
        Ok(Self {
            val: split.eval_samples(&split.val)?,
            test: split.eval_samples(&split.test)?,
            catalog,
            gt,
            train,
            graphs,
            sequence_graphs,
        })
    }
}

/// Epoch counter and early-stopping state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Progress {
    /// Completed epochs.
    pub epoch: usize,
    pub best_hr: Option<f64>,
    pub best_epoch: usize,
    pub since_best: usize,
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub rec_loss: f64,
    pub ssl_loss: f64,
    pub total_loss: f64,
    pub val_hr10: Option<f64>,
    pub val_ndcg10: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitOutcome {
    Completed,
    EarlyStopped,
    Interrupted,
}

pub struct Trainer {
    pub cfg: RunConfig,
    pub data: TrainingData,
    pub model: Gsan,
    pub params: ParamSet,
    pub adam: AdamState,
    pub progress: Progress,
    /// Parameters at the best validation epoch so far.
    pub best: ParamSet,
    index: CorrelationIndex,
    inputs: Vec<GraphInputs>,
}

impl Trainer {
    /// Builds the encoder and its inputs. Without pretrained tables the POI
    /// matrix starts random and augmentation has no correlated POIs to draw
    /// on.
    pub fn new(cfg: RunConfig, data: TrainingData, pretrained: Option<&Pretrained>) -> Result<Self> {
        cfg.validate()?;
        let masters: Vec<_> = data
            .sequence_graphs
            .iter()
            .map(|g| add_master_node(g.clone(), &data.catalog, cfg.spd_cap))
            .collect();
        let bins = DistanceBins::from_graphs(&masters, cfg.dist_bins);
        let vocab = CategoryVocab::from_graphs(&data.sequence_graphs);
        let (model, mut params) = Gsan::new(cfg.gsan(), bins, vocab, data.catalog.len(), cfg.seed)?;
        let index = match pretrained {
            Some(p) => {
                model.load_poi_embeddings(&mut params, &p.fused)?;
                if cfg.freeze_poi {
                    params.set_trainable(model.poi_param(), false);
                }
                CorrelationIndex::build(&p.spatial, &p.temporal, cfg.correlation_top)?
            }
            None => CorrelationIndex::empty(data.catalog.len()),
        };
        let inputs = data
            .graphs
            .par_iter()
            .map(|g| model.prepare(&add_master_node(g.clone(), &data.catalog, cfg.spd_cap), &data.gt))
            .collect::<Result<_>>()?;
        let adam = AdamState::new(&params, cfg.adam());
        Ok(Self {
            best: params.clone(),
            cfg,
            data,
            model,
            params,
            adam,
            progress: Progress::default(),
            index,
            inputs,
        })
    }

    pub fn correlation_index(&self) -> &CorrelationIndex {
        &self.index
    }

    fn batch_items(&self, epoch: usize, batch: &[usize]) -> Result<Vec<BatchItem<'_>>> {
        let augment: AugmentConfig = self.cfg.augment();
        let want_views = self.cfg.lambda > 0.0 && batch.len() >= 2;
        let view_seed = rng::child_seed(rng::derive_seed(self.cfg.seed, "augmentation"), epoch as u64);
        batch
            .par_iter()
            .map(|&si| {
                let views = if want_views {
                    let mut r = rng::child(view_seed, si as u64);
                    let pair = make_views(&self.data.graphs[si], &augment, &self.index, &self.data.catalog, &mut r);
                    let prep = |g: TrajectoryGraph| {
                        self.model
                            .prepare(&add_master_node(g, &self.data.catalog, self.cfg.spd_cap), &self.data.gt)
                    };
                    Some((prep(pair.view_a)?, prep(pair.view_b)?))
                } else {
                    None
                };
                Ok(BatchItem {
                    inputs: &self.inputs[si],
                    target: self.data.train[si].target.index(),
                    views,
                })
            })
            .collect()
    }

    /// One pass over the training samples. Returns `None` (with parameters
    /// and optimizer state rolled back to the epoch start) if `should_stop`
    /// fires between batches.
    pub fn run_epoch(&mut self, should_stop: &dyn Fn() -> bool) -> Result<Option<EpochRecord>> {
        let start = Instant::now();
        let epoch = self.progress.epoch;
        let mut order: Vec<usize> = (0..self.data.train.len()).collect();
        order.shuffle(&mut rng::child(rng::derive_seed(self.cfg.seed, "batching"), epoch as u64));
        let snapshot = (self.params.clone(), self.adam.clone());
        let weights = LossWeights::from_config(&self.cfg);
        let (mut rec, mut ssl, mut total) = (0.0, 0.0, 0.0);
        let batches: Vec<&[usize]> = order.chunks(self.cfg.batch_size).collect();
        for batch in &batches {
            if should_stop() {
                (self.params, self.adam) = snapshot;
                return Ok(None);
            }
            let items = self.batch_items(epoch, batch)?;
            let (losses, grads) = batch_gradients(&self.model, &self.params, &items, &weights)?;
            if !losses.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                let detail: Vec<String> = batch
                    .iter()
                    .map(|&si| {
                        let s = &self.data.train[si];
                        let ids: Vec<&str> = s.prefix.iter().map(|p| self.data.catalog.poi(*p).poi_id.as_str()).collect();
                        format!("[{}] -> {}", ids.join(" "), self.data.catalog.poi(s.target).poi_id)
                    })
                    .collect();
                return Err(Error::Numeric(format!(
                    "epoch {}: loss rec={} ssl={} total={} on batch {}",
                    epoch + 1,
                    losses.rec,
                    losses.ssl,
                    losses.total,
                    detail.join("; ")
                )));
            }
            self.adam.step(&mut self.params, &grads);
            rec += losses.rec;
            ssl += losses.ssl;
            total += losses.total;
        }
        let nb = batches.len() as f64;
        let val = if self.data.val.is_empty() {
            None
        } else {
            Some(self.evaluate_split("val", &self.data.val, &self.params)?)
        };
        let hr = val.as_ref().and_then(|r| r.at(10)).map(|m| m.hr);
        let ndcg = val.as_ref().and_then(|r| r.at(10)).map(|m| m.ndcg);
        self.progress.epoch += 1;
        match hr {
            Some(h) if self.progress.best_hr.is_some_and(|b| h <= b) => {
                self.progress.since_best += 1;
                if self.progress.since_best >= self.cfg.patience {
                    self.progress.stopped = true;
                }
            }
            _ => {
                self.progress.best_hr = hr.or(self.progress.best_hr);
                self.progress.best_epoch = self.progress.epoch;
                self.progress.since_best = 0;
                self.best = self.params.clone();
            }
        }
        Ok(Some(EpochRecord {
            epoch: self.progress.epoch,
            rec_loss: rec / nb,
            ssl_loss: ssl / nb,
            total_loss: total / nb,
            val_hr10: hr,
            val_ndcg10: ndcg,
            seconds: start.elapsed().as_secs_f64(),
        }))
    }

    /// Trains until the epoch budget, early stopping or `should_stop`.
    pub fn fit(
        &mut self,
        should_stop: &dyn Fn() -> bool,
        on_epoch: &mut dyn FnMut(&EpochRecord, &Trainer) -> Result<()>,
    ) -> Result<FitOutcome> {
        while self.progress.epoch < self.cfg.epochs {
            if self.progress.stopped {
                return Ok(FitOutcome::EarlyStopped);
            }
            match self.run_epoch(should_stop)? {
                Some(rec) => {
                    log::info!(
                        "epoch {} rec {:.4} ssl {:.4} val HR@10 {}",
                        rec.epoch,
                        rec.rec_loss,
                        rec.ssl_loss,
                        rec.val_hr10.map_or("-".into(), |h| format!("{h:.4}"))
                    );
                    on_epoch(&rec, self)?;
                }
                None => return Ok(FitOutcome::Interrupted),
            }
        }
        Ok(if self.progress.stopped {
            FitOutcome::EarlyStopped
        } else {
            FitOutcome::Completed
        })
    }

    pub fn evaluate_split(&self, name: &str, samples: &[Sample], params: &ParamSet) -> Result<MetricsReport> {
        evaluate(
            name,
            &self.model,
            params,
            &self.data.catalog,
            &self.data.gt,
            samples,
            &crate::eval::DEFAULT_KS,
        )
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut sections = Vec::new();
        let mut push = |prefix: &str, set: &ParamSet, values: Option<&[Tensor]>| {
            for (i, e) in set.entries().iter().enumerate() {
                let t = values.map_or(&e.value, |v| &v[i]);
                sections.push((format!("{prefix}/{}", e.name), t.clone()));
            }
        };
        push("param", &self.params, None);
        push("best", &self.best, None);
        push("adam.m", &self.params, Some(&self.adam.m));
        push("adam.v", &self.params, Some(&self.adam.v));
        let manifest = Manifest {
            model: self.model.clone(),
            config: self.cfg.clone(),
            progress: self.progress.clone(),
            adam_step: self.adam.step,
            sections: sections
                .iter()
                .map(|(name, t)| SectionInfo {
                    name: name.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                })
                .collect(),
        };
        write_checkpoint(path, &manifest, sections.iter().map(|(_, t)| t))
    }

    /// Rebuilds a trainer from the same data and pretrained tables, then
    /// restores parameters, optimizer moments and progress.
    pub fn resume(path: &Path, data: TrainingData, pretrained: Option<&Pretrained>) -> Result<Self> {
        let ckpt = Checkpoint::read(path)?;
        let mut t = Self::new(ckpt.manifest.config.clone(), data, pretrained)?;
        if t.model != ckpt.manifest.model {
            return Err(Error::Data(format!(
                "{}: checkpoint was written for a different dataset or model shape",
                path.display()
            )));
        }
        let names: Vec<String> = t.params.entries().iter().map(|e| e.name.clone()).collect();
        for (i, name) in names.iter().enumerate() {
            let id = crate::numerics::ParamId(i);
            t.params.assign(id, ckpt.tensor(&format!("param/{name}"))?)?;
            t.best.assign(id, ckpt.tensor(&format!("best/{name}"))?)?;
            t.adam.m[i] = ckpt.tensor(&format!("adam.m/{name}"))?;
            t.adam.v[i] = ckpt.tensor(&format!("adam.v/{name}"))?;
        }
        t.adam.step = ckpt.manifest.adam_step;
        t.progress = ckpt.manifest.progress;
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: Gsan,
    pub config: RunConfig,
    pub progress: Progress,
    pub adam_step: u64,
    pub sections: Vec<SectionInfo>,
}

/// Layout: magic, version (u32 LE), manifest length (u64 LE), manifest JSON,
/// then every section's values as f64 LE in manifest order. Written to a
/// temporary sibling and renamed into place.
fn write_checkpoint<'a>(path: &Path, manifest: &Manifest, tensors: impl Iterator<Item = &'a Tensor>) -> Result<()> {
    let json = serde_json::to_vec(manifest).map_err(|e| Error::Data(format!("manifest: {e}")))?;
    let mut buf = Vec::with_capacity(json.len() + 16);
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for t in tensors {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = temp_sibling(path);
    let io = |e| Error::io(&tmp, e);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&buf).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".tmp");
    PathBuf::from(s)
}

/// A parsed checkpoint file.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: Manifest,
    tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "checkpoint",
            });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let truncated = || Error::Data(format!("{}: truncated checkpoint", path.display()));
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let json = bytes.get(16..16 + len).ok_or_else(truncated)?;
        let manifest: Manifest =
            serde_json::from_slice(json).map_err(|e| Error::Data(format!("{}: manifest: {e}", path.display())))?;
        let mut offset = 16 + len;
        let mut tensors = Vec::with_capacity(manifest.sections.len());
        for s in &manifest.sections {
            let n = s.rows * s.cols;
            let raw = bytes.get(offset..offset + 8 * n).ok_or_else(truncated)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Tensor::from_vec(s.rows, s.cols, data)?);
            offset += 8 * n;
        }
        if offset != bytes.len() {
            return Err(Error::Data(format!("{}: trailing bytes after the last section", path.display())));
        }
        Ok(Self { manifest, tensors })
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        self.manifest
            .sections
            .iter()
            .position(|s| s.name == name)
            .map(|i| self.tensors[i].clone())
            .ok_or_else(|| Error::Data(format!("checkpoint has no section `{name}`")))
    }

    /// The encoder with its best-validation parameters.
    pub fn best_model(&self) -> Result<(Gsan, ParamSet)> {
        let m = &self.manifest.model;
        let (model, mut params) = Gsan::new(m.config.clone(), m.bins, m.vocab.clone(), m.num_pois, 0)?;
        let names: Vec<String> = params.entries().iter().map(|e| e.name.clone()).collect();
        for (i, name) in names.iter().enumerate() {
            params.assign(crate::numerics::ParamId(i), self.tensor(&format!("best/{name}"))?)?;
        }
        Ok((model, params))
    }
}

/// Appends one JSON line per record.
pub fn append_report(path: &Path, record: &EpochRecord) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(record).map_err(|e| Error::Data(e.to_string()))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

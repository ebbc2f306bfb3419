//! Orchestration of the full manipulation pipeline per sample:
//! transform → K-line curation → normalize → mix-up → compensation →
//! denormalize → final curation, gated by a [`ManipulationPolicy`].
//!
//! Randomness is derived per sample as hash(master seed, epoch, sample id),
//! so batch fan-out order never changes the result.

use crate::coint::CointMatrix;
use crate::curation::{
    binary_mix, enforce_kline_consistency, rolling_denormalize, rolling_normalize,
    BinaryMixConfig, OhlcLayout, WindowStats,
};
use crate::data::{ForecastSample, PanelSeries, RollingStats, CLOSE};
use crate::mixups::{apply_mixup, sample_mix_target, MixSamplerConfig};
use crate::policy::{ManipulationPolicy, OperationSet};
use crate::provenance::{ChoiceRecord, ProvenanceRecord};
use crate::transforms::apply_transform;
use crate::{seeds, CoreError, Result};
use ndarray::Array2;
use sha2::{Digest, Sha256};

/// Everything the pipeline needs besides the policy: fitted statistics,
/// the cointegration matrix (when mix-ups are enabled), the training panel
/// and samples, and the master seed.
pub struct ManipulationContext<'a> {
    pub ops: &'a OperationSet,
    pub stats: &'a RollingStats,
    pub coint: Option<&'a CointMatrix>,
    pub train: &'a PanelSeries,
    pub samples: &'a [ForecastSample],
    pub layout: OhlcLayout,
    pub binary_mix: BinaryMixConfig,
    pub sampler: MixSamplerConfig,
    pub lookback: usize,
    pub master_seed: u64,
}

impl<'a> ManipulationContext<'a> {
    pub fn validate(&self) -> Result<()> {
        self.ops.validate()?;
        self.binary_mix.validate()?;
        if self.ops.m() > 0 && self.coint.is_none() {
            return Err(CoreError::Config(
                "mix-ups enabled but no cointegration matrix provided".into(),
            ));
        }
        if self.ops.m() > 0 && self.train.num_stocks() < 2 {
            return Err(CoreError::Config(
                "mix-ups need at least 2 stocks in the panel".into(),
            ));
        }
        Ok(())
    }

    /// Hash of every configuration choice that affects regenerated bytes.
    /// Replay refuses logs whose hash differs.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"driftforge-manipulation-v1");
        for t in &self.ops.transforms {
            h.update(t.name().as_bytes());
        }
        h.update(b"|");
        for m in &self.ops.mixups {
            h.update(m.name().as_bytes());
        }
        h.update(b"|");
        for v in [
            self.layout.open as u64,
            self.layout.high as u64,
            self.layout.low as u64,
            self.layout.close as u64,
            self.binary_mix.bins as u64,
            self.sampler.candidates as u64,
            self.lookback as u64,
            self.stats.window as u64,
            self.master_seed,
        ] {
            h.update(v.to_le_bytes());
        }
        h.update(self.binary_mix.b_max.to_le_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn stats_for(&self, sample: &ForecastSample) -> Result<WindowStats> {
        WindowStats::for_window(self.stats, sample.stock, sample.end_index, self.lookback)
    }

    /// Time-aligned partner window and label for a mix-up, in normalized
    /// space with its own stock's statistics.
    fn partner(&self, end_index: usize, stock: usize) -> Result<(Array2<f64>, f64)> {
        let start = end_index + 1 - self.lookback;
        let raw = self.train.window(stock, start, self.lookback);
        let stats = WindowStats::for_window(self.stats, stock, end_index, self.lookback)?;
        let z = rolling_normalize(&raw, &stats)?;
        let c_now = self.train.get(end_index, stock, CLOSE);
        let c_next = self.train.get(end_index + 1, stock, CLOSE);
        Ok((z, (c_next - c_now) / c_now))
    }
}

/// Result of manipulating one batch. The manipulated count is exactly
/// round(α·B).
#[derive(Debug, Clone)]
pub struct AugmentedBatch {
    pub sample_ids: Vec<usize>,
    pub windows: Vec<Array2<f64>>,
    pub targets: Vec<f64>,
    pub manipulated: Vec<bool>,
}

impl AugmentedBatch {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn manipulated_count(&self) -> usize {
        self.manipulated.iter().filter(|&&m| m).count()
    }

    /// SHA-256 over windows and targets in batch order.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (w, t) in self.windows.iter().zip(&self.targets) {
            for v in w.iter() {
                h.update(v.to_le_bytes());
            }
            h.update(t.to_le_bytes());
        }
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Which partner a mix-up stage uses: drawn from the pipeline stream, or
/// pinned (weighted-sum variants freeze it per (sample, column)).
enum PartnerChoice {
    Draw,
    Fixed(usize),
}

/// Apply one (transform, mix-up column) combination to one sample at a
/// given strength. This is the shared pipeline body for both the sampled
/// path and the weighted-sum path.
fn apply_combo(
    ctx: &ManipulationContext,
    sample: &ForecastSample,
    transform_ix: usize,
    col_ix: usize,
    lambda: f64,
    pipeline_seed: [u8; 32],
    partner: PartnerChoice,
) -> Result<(Array2<f64>, f64)> {
    let mut rng = seeds::rng_from(pipeline_seed);
    let kind = ctx.ops.transforms[transform_ix];

    // 1. single-stock transform on raw values (target-invariant)
    let transformed = apply_transform(kind, lambda, &sample.window, &mut rng)?;
    // 2. curation in original space
    let curated = enforce_kline_consistency(&transformed, ctx.layout)?;
    // 3. rolling normalization
    let stats = ctx.stats_for(sample)?;
    let z = rolling_normalize(&curated, &stats)?;

    // 4. mix-up in normalized space (when enabled)
    let (mixed, mixed_target) = if let Some(&mix_kind) = ctx.ops.mixups.get(col_ix) {
        let coint = ctx.coint.ok_or_else(|| {
            CoreError::Config("mix-ups enabled but no cointegration matrix provided".into())
        })?;
        let partner_ix = match partner {
            PartnerChoice::Draw => sample_mix_target(
                sample.stock,
                lambda,
                coint,
                ctx.sampler.candidates,
                &mut rng,
            )?,
            PartnerChoice::Fixed(ix) => ix,
        };
        let (pz, pt) = ctx.partner(sample.end_index, partner_ix)?;
        apply_mixup(
            mix_kind,
            lambda,
            (&z, sample.target),
            (&pz, pt),
            &mut rng,
        )?
    } else {
        (z.clone(), sample.target)
    };

    // 5. mutual-information compensation toward the original
    let original_z = rolling_normalize(&sample.window, &stats)?;
    let outcome = binary_mix(&original_z, &mixed, &ctx.binary_mix, &mut rng)?;
    // target-invariant paths stay bit-exact
    let target = if mixed_target == sample.target {
        sample.target
    } else {
        outcome.b_mix * sample.target + (1.0 - outcome.b_mix) * mixed_target
    };

    // 6. back to original value space, then re-enforce bar validity
    // (mix-ups in z-space can break it)
    let denorm = rolling_denormalize(&outcome.window, &stats)?;
    let final_window = enforce_kline_consistency(&denorm, ctx.layout)?;
    Ok((final_window, target))
}

/// Manipulate one batch of sample ids under the policy. Exactly
/// round(α·B) samples, selected uniformly at random, run the pipeline with
/// an operation combination drawn from Categorical(p); the rest pass
/// through untouched. Returns the batch plus a replayable provenance
/// record.
pub fn manipulate(
    sample_ids: &[usize],
    policy: &ManipulationPolicy,
    ctx: &ManipulationContext,
    epoch: u64,
    step: u64,
) -> Result<(AugmentedBatch, ProvenanceRecord)> {
    policy.validate(ctx.ops)?;
    ctx.validate()?;
    let batch_size = sample_ids.len();
    let count = ((policy.alpha * batch_size as f64).round() as usize).min(batch_size);

    let mut step_rng = seeds::rng_from(seeds::step_seed(ctx.master_seed, epoch, step));
    let mut selected = vec![false; batch_size];
    for ix in rand::seq::index::sample(&mut step_rng, batch_size, count) {
        selected[ix] = true;
    }

    let mut windows = Vec::with_capacity(batch_size);
    let mut targets = Vec::with_capacity(batch_size);
    let mut choices = Vec::with_capacity(count);
    for (pos, &sid) in sample_ids.iter().enumerate() {
        let sample = ctx
            .samples
            .get(sid)
            .ok_or_else(|| CoreError::InvalidData(format!("sample id {sid} out of range")))?;
        if !selected[pos] {
            windows.push(sample.window.clone());
            targets.push(sample.target);
            continue;
        }
        let seed = seeds::sample_seed(ctx.master_seed, epoch, sid as u64);
        let mut choice_rng = seeds::rng_from(seeds::subseed(&seed, "choice"));
        let (ti, cj) = policy.sample_combo(&mut choice_rng);
        let lambda = policy.lambda[(ti, cj)];
        let pipeline_seed = seeds::subseed(&seed, "pipeline");
        let (w, t) = apply_combo(ctx, sample, ti, cj, lambda, pipeline_seed, PartnerChoice::Draw)?;
        windows.push(w);
        targets.push(t);
        choices.push(ChoiceRecord {
            sample_id: sid,
            transform: ti,
            mixup: cj,
            lambda,
            seed: seeds::seed_to_hex(&seed),
        });
    }

    let batch = AugmentedBatch {
        sample_ids: sample_ids.to_vec(),
        windows,
        targets,
        manipulated: selected,
    };
    let record = ProvenanceRecord {
        step,
        epoch,
        sample_ids: sample_ids.to_vec(),
        alpha: policy.alpha,
        p_rows: policy.p.nrows(),
        p_cols: policy.p.ncols(),
        p: policy.p.iter().copied().collect(),
        lambda: policy.lambda.iter().copied().collect(),
        choices,
        config_hash: ctx.config_hash(),
        batch_checksum: batch.checksum(),
    };
    Ok((batch, record))
}

/// All n×cols deterministic variants of one sample, shared by the
/// weighted sum and the planner's gradient path. Variant (i, j) applies
/// combination (i, j) unconditionally at strength λ_ij; the mix partner is
/// frozen per (sample, column) using the column-mean strength so the
/// result is a deterministic function of (p, λ).
pub struct VariantSet {
    pub windows: Vec<Array2<f64>>,
    pub targets: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl VariantSet {
    pub fn window(&self, i: usize, j: usize) -> &Array2<f64> {
        &self.windows[i * self.cols + j]
    }

    pub fn target(&self, i: usize, j: usize) -> f64 {
        self.targets[i * self.cols + j]
    }
}

pub fn augment_variants(
    sample_id: usize,
    policy: &ManipulationPolicy,
    ctx: &ManipulationContext,
    epoch: u64,
) -> Result<VariantSet> {
    policy.validate(ctx.ops)?;
    ctx.validate()?;
    let sample = ctx
        .samples
        .get(sample_id)
        .ok_or_else(|| CoreError::InvalidData(format!("sample id {sample_id} out of range")))?;
    let (n, cols) = policy.p.dim();

    // one frozen partner per column
    let mut partners = Vec::with_capacity(cols);
    for j in 0..cols {
        if ctx.ops.mixups.get(j).is_some() {
            let coint = ctx.coint.expect("validated above");
            let seed = seeds::derive(
                ctx.master_seed,
                "partner",
                &[epoch, sample_id as u64, j as u64],
            );
            let mut rng = seeds::rng_from(seed);
            let lam = policy.lambda_col_mean(j);
            partners.push(Some(sample_mix_target(
                sample.stock,
                lam,
                coint,
                ctx.sampler.candidates,
                &mut rng,
            )?));
        } else {
            partners.push(None);
        }
    }

    let mut windows = Vec::with_capacity(n * cols);
    let mut targets = Vec::with_capacity(n * cols);
    for i in 0..n {
        for (j, slot) in partners.iter().enumerate() {
            let seed = seeds::derive(
                ctx.master_seed,
                "variant",
                &[epoch, sample_id as u64, i as u64, j as u64],
            );
            let partner = match slot {
                Some(ix) => PartnerChoice::Fixed(*ix),
                None => PartnerChoice::Draw, // unreachable: no mix stage for this column
            };
            let (w, t) = apply_combo(ctx, sample, i, j, policy.lambda[(i, j)], seed, partner)?;
            windows.push(w);
            targets.push(t);
        }
    }
    Ok(VariantSet {
        windows,
        targets,
        rows: n,
        cols,
    })
}

/// The p-weighted convex blend of every deterministic variant (features
/// and labels). Used only by planner updates; linear in p by construction.
pub fn weighted_sum_augment(
    sample_id: usize,
    policy: &ManipulationPolicy,
    ctx: &ManipulationContext,
    epoch: u64,
) -> Result<(Array2<f64>, f64)> {
    let variants = augment_variants(sample_id, policy, ctx, epoch)?;
    let sample = &ctx.samples[sample_id];
    let mut window = Array2::zeros(sample.window.dim());
    let mut target = 0.0;
    for i in 0..variants.rows {
        for j in 0..variants.cols {
            let w = policy.p[(i, j)];
            window.zip_mut_with(variants.window(i, j), |acc, &v| *acc += w * v);
            target += w * variants.target(i, j);
        }
    }
    Ok((window, target))
}

/// Regenerate batches from provenance records. Bit-identical output is
/// verified against each record's checksum; the config hash guards against
/// replaying under a different configuration.
pub fn replay(
    records: &[ProvenanceRecord],
    ctx: &ManipulationContext,
) -> Result<Vec<AugmentedBatch>> {
    ctx.validate()?;
    let expected_hash = ctx.config_hash();
    let mut out = Vec::with_capacity(records.len());
    for record in records {
        if record.config_hash != expected_hash {
            return Err(CoreError::ProvenanceMismatch {
                field: "config_hash".into(),
                details: format!(
                    "log has {}, current configuration is {}",
                    record.config_hash, expected_hash
                ),
            });
        }
        let mut windows = Vec::with_capacity(record.sample_ids.len());
        let mut targets = Vec::with_capacity(record.sample_ids.len());
        let mut manipulated = vec![false; record.sample_ids.len()];
        for &sid in &record.sample_ids {
            let sample = ctx.samples.get(sid).ok_or_else(|| {
                CoreError::ProvenanceMismatch {
                    field: "sample_ids".into(),
                    details: format!("sample id {sid} not present in the dataset"),
                }
            })?;
            windows.push(sample.window.clone());
            targets.push(sample.target);
        }
        for choice in &record.choices {
            let pos = record
                .sample_ids
                .iter()
                .position(|&sid| sid == choice.sample_id)
                .ok_or_else(|| CoreError::ProvenanceMismatch {
                    field: "choices".into(),
                    details: format!("choice for sample {} not in batch", choice.sample_id),
                })?;
            let seed = seeds::seed_from_hex(&choice.seed).ok_or_else(|| {
                CoreError::ProvenanceMismatch {
                    field: "seed".into(),
                    details: format!("malformed seed `{}`", choice.seed),
                }
            })?;
            let sample = &ctx.samples[choice.sample_id];
            let pipeline_seed = seeds::subseed(&seed, "pipeline");
            let (w, t) = apply_combo(
                ctx,
                sample,
                choice.transform,
                choice.mixup,
                choice.lambda,
                pipeline_seed,
                PartnerChoice::Draw,
            )?;
            windows[pos] = w;
            targets[pos] = t;
            manipulated[pos] = true;
        }
        let batch = AugmentedBatch {
            sample_ids: record.sample_ids.clone(),
            windows,
            targets,
            manipulated,
        };
        let checksum = batch.checksum();
        if checksum != record.batch_checksum {
            return Err(CoreError::ProvenanceMismatch {
                field: "batch_checksum".into(),
                details: format!(
                    "step {}: regenerated {checksum} differs from recorded {}",
                    record.step, record.batch_checksum
                ),
            });
        }
        out.push(batch);
    }
    Ok(out)
}

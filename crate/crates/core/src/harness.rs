//! The stress protocol end to end: sweep images × edit templates × strengths
//! × seeds, run every trial as a coupled edit, decode informed and blind,
//! attach matched closed-form theory columns, and emit deterministic reports.
//!
//! Trials are scheduled in parallel over images, but every random draw comes
//! from a stream keyed by (image, edit, strength, seed, stage), and rows are
//! assembled in canonical lane order, so reports are byte-identical for any
//! worker count.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{fano_lower_bound, mi_upper_bound};
use crate::edit::{coupled_edit, BandGains, EditConfig, EditMode, MaskSpec};
use crate::error::{Error, Result};
use crate::metrics::{bit_accuracy, majority_vote, psnr, roc_auc, ssim};
use crate::schedule::{NoiseSchedule, ScheduleSpec};
use crate::spectral::{band_energies, BandPartition};
use crate::stream::derive_stream;
use crate::tensor::{load_image, synth_image, SynthKind};
use crate::watermark::{
    decode_bits, decode_soft, detect_statistic, ecc_encode, embed, make_carriers, BandProfile,
    CarrierBank, Payload, WatermarkKey,
};
use crate::{Image, Real};

/// Stage tags appended to the (image, edit, strength, seed) lane tuple.
pub const STAGE_IMAGE: u64 = 10;
pub const STAGE_PAYLOAD: u64 = 11;
pub const STAGE_EDIT: u64 = 12;

/// Where trial images come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    /// Generated per image index from the master seed.
    Synthetic { kind: SynthKind },
    /// `.dws`/`.png` files, sorted by file name; must match the configured
    /// dimensions and cover `n_images`.
    Directory { path: PathBuf },
}

impl Default for ImageSource {
    fn default() -> Self {
        ImageSource::Synthetic {
            kind: SynthKind::GaussianField,
        }
    }
}

/// Embedding strength, either explicit or derived from a fidelity target
/// via γ = 10^(−PSNR/20).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EmbedStrength {
    Gamma { gamma: f64 },
    TargetPsnr { target_psnr_db: f64 },
}

impl Default for EmbedStrength {
    fn default() -> Self {
        EmbedStrength::TargetPsnr {
            target_psnr_db: 40.0,
        }
    }
}

impl EmbedStrength {
    pub fn gamma(&self) -> Result<f64> {
        let gamma = match *self {
            EmbedStrength::Gamma { gamma } => gamma,
            EmbedStrength::TargetPsnr { target_psnr_db } => {
                if !target_psnr_db.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "target PSNR must be finite, got {target_psnr_db}"
                    )));
                }
                10f64.powf(-target_psnr_db / 20.0)
            }
        };
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "embedding strength must be finite and nonnegative, got {gamma}"
            )));
        }
        Ok(gamma)
    }
}

/// Family of a suite entry; decides the kernel mode and masking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Global,
    Local,
    Resynth,
}

/// One edit family in the suite; the sweep instantiates it at every strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditTemplate {
    pub name: String,
    pub kind: EditKind,
    pub band_gains: BandGains,
    pub n_steps: usize,
    pub coupling_kappa: f64,
    pub anchor_sigma: f64,
    /// Side fraction of the centered edit region; required for local edits,
    /// forbidden otherwise.
    pub mask_side_fraction: Option<f64>,
}

impl Default for EditTemplate {
    fn default() -> Self {
        EditTemplate::global()
    }
}

impl EditTemplate {
    pub fn global() -> Self {
        EditTemplate {
            name: "global".into(),
            kind: EditKind::Global,
            band_gains: BandGains::default(),
            n_steps: 5,
            coupling_kappa: 0.15,
            anchor_sigma: 2.0,
            mask_side_fraction: None,
        }
    }

    pub fn local() -> Self {
        EditTemplate {
            name: "local".into(),
            kind: EditKind::Local,
            mask_side_fraction: Some(0.5),
            ..EditTemplate::global()
        }
    }

    pub fn resynth() -> Self {
        EditTemplate {
            name: "resynth".into(),
            kind: EditKind::Resynth,
            ..EditTemplate::global()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidConfig("edit template needs a name".into()));
        }
        match (self.kind, self.mask_side_fraction) {
            (EditKind::Local, None) => {
                return Err(Error::InvalidConfig(format!(
                    "local edit '{}' needs mask_side_fraction",
                    self.name
                )))
            }
            (EditKind::Global | EditKind::Resynth, Some(_)) => {
                return Err(Error::InvalidConfig(format!(
                    "edit '{}' is not local; drop mask_side_fraction",
                    self.name
                )))
            }
            _ => {}
        }
        self.to_config(0.0, Vec::new()).validate()
    }

    /// Instantiates the template at one strength, recording the lane tuple.
    pub fn to_config(&self, t_star: f64, seed_lanes: Vec<u64>) -> EditConfig {
        EditConfig {
            t_star,
            n_steps: self.n_steps,
            band_gains: self.band_gains,
            mode: match self.kind {
                EditKind::Resynth => EditMode::Resynth,
                _ => EditMode::LinearShrink,
            },
            mask: self.mask_side_fraction.map(|side_fraction| MaskSpec::CenteredRect {
                side_fraction,
            }),
            coupling_kappa: self.coupling_kappa,
            anchor_sigma: self.anchor_sigma,
            seed_lanes,
        }
    }
}

/// Complete description of one stress run; the JSON config mirrors this
/// struct field-for-field, with every field optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub n_images: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub image_source: ImageSource,
    pub edit_suite: Vec<EditTemplate>,
    /// Edit strengths t* swept for every suite entry.
    pub strengths: Vec<f64>,
    pub seeds_per_instruction: usize,
    /// Information payload length in bits (multiple of 4, for hex reporting).
    pub payload_bits: usize,
    /// Repetition factor of the error-correcting layer; odd, 1 disables ECC.
    pub ecc_repetition: usize,
    pub embed_strength: EmbedStrength,
    /// Carrier spectral profile.
    pub band_profile: BandProfile,
    pub band_partition: BandPartition,
    pub schedule: ScheduleSpec,
    pub master_seed: u64,
    /// Worker threads; 0 picks the machine default. Reports do not depend on
    /// this value.
    pub workers: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            n_images: 16,
            height: 64,
            width: 64,
            channels: 3,
            image_source: ImageSource::default(),
            edit_suite: vec![
                EditTemplate::global(),
                EditTemplate::local(),
                EditTemplate::resynth(),
            ],
            strengths: vec![0.2, 0.4, 0.6, 0.8],
            seeds_per_instruction: 3,
            payload_bits: 96,
            ecc_repetition: 3,
            embed_strength: EmbedStrength::default(),
            band_profile: BandProfile::default(),
            band_partition: BandPartition::default(),
            schedule: ScheduleSpec::default(),
            master_seed: 7,
            workers: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_images == 0 {
            return Err(Error::InvalidConfig("n_images must be positive".into()));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::InvalidConfig(format!(
                "images must be at least 8x8, got {}x{}",
                self.height, self.width
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::InvalidConfig(format!(
                "channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        if self.edit_suite.is_empty() {
            return Err(Error::InvalidConfig("edit suite is empty".into()));
        }
        let mut names: Vec<&str> = self.edit_suite.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.edit_suite.len() {
            return Err(Error::InvalidConfig("edit template names must be unique".into()));
        }
        for template in &self.edit_suite {
            template.validate()?;
        }
        if self.strengths.is_empty() {
            return Err(Error::InvalidConfig("strengths list is empty".into()));
        }
        for &t in &self.strengths {
            if !(t.is_finite() && (0.0..=1.0).contains(&t)) {
                return Err(Error::InvalidConfig(format!(
                    "edit strength must lie in [0, 1], got {t}"
                )));
            }
        }
        if self.seeds_per_instruction == 0 {
            return Err(Error::InvalidConfig("seeds_per_instruction must be positive".into()));
        }
        if self.payload_bits == 0 || self.payload_bits % 4 != 0 {
            return Err(Error::InvalidConfig(format!(
                "payload_bits must be a positive multiple of 4, got {}",
                self.payload_bits
            )));
        }
        if self.ecc_repetition % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "ecc_repetition must be odd, got {}",
                self.ecc_repetition
            )));
        }
        let d = self.height * self.width * self.channels;
        let coded = self.payload_bits * self.ecc_repetition;
        if coded > d / 16 {
            return Err(Error::CapacityExceeded {
                requested: coded,
                available: d / 16,
                d,
            });
        }
        self.embed_strength.gamma()?;
        self.band_profile.validate()?;
        self.band_partition.validate()?;
        NoiseSchedule::<Real>::from_spec(self.schedule)?;
        Ok(())
    }
}

/// One (image, edit, strength, seed) trial. Field order here is the CSV
/// column order of `rows.csv`.
///
/// Bit accuracies are measured on the information bits after repetition
/// decoding; `msg_ok_noecc_informed` instead decodes each bit from the first
/// copy of its block. `null_detect_*` score the unwatermarked control edited
/// with the same noise. Empty CSV cells mean "undefined here" (for example
/// PSNR of an identical pair, or theory columns at t* = 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub image_idx: usize,
    pub edit: String,
    pub t_star: f64,
    pub seed_idx: usize,
    pub payload_hex: String,
    pub alpha_bar: f64,
    pub start_step: usize,
    pub snr_theory: Option<f64>,
    pub snr_empirical: Option<f64>,
    pub ba_clean_informed: f64,
    pub ba_clean_blind: f64,
    pub ba_informed: f64,
    pub ber_informed: f64,
    pub msg_ok_informed: bool,
    pub msg_ok_noecc_informed: bool,
    pub detect_informed: f64,
    pub null_detect_informed: f64,
    pub ba_blind: f64,
    pub ber_blind: f64,
    pub msg_ok_blind: bool,
    pub detect_blind: f64,
    pub null_detect_blind: f64,
    pub psnr_wm: Option<f64>,
    pub psnr_edit: Option<f64>,
    pub ssim_edit: f64,
    pub surv_low: f64,
    pub surv_mid: f64,
    pub surv_high: f64,
    pub inj_low: f64,
    pub inj_mid: f64,
    pub inj_high: f64,
    pub rho_low: Option<f64>,
    pub rho_mid: Option<f64>,
    pub rho_high: Option<f64>,
    pub mi_bound_nats: Option<f64>,
    pub fano_bound: f64,
}

/// Per-(edit, strength) summary. Field order is the CSV column order of
/// `aggregates.csv`.
///
/// Means and standard deviations pool all rows of the cell; retention ratios
/// pool as ratio-of-sums; AUCs compare detect scores against the matched
/// nulls; `ba_vote_informed` averages per-image majority votes across seeds
/// and is empty when the seed count is even.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub edit: String,
    pub t_star: f64,
    pub rows: usize,
    pub ba_informed_mean: f64,
    pub ba_informed_std: f64,
    pub ba_blind_mean: f64,
    pub ba_blind_std: f64,
    pub ba_vote_informed: Option<f64>,
    pub msg_rate_informed: f64,
    pub msg_rate_noecc_informed: f64,
    pub msg_rate_blind: f64,
    pub detect_auc_informed: f64,
    pub detect_auc_blind: f64,
    pub psnr_wm_mean: Option<f64>,
    pub psnr_edit_mean: Option<f64>,
    pub ssim_edit_mean: f64,
    pub rho_low: Option<f64>,
    pub rho_mid: Option<f64>,
    pub rho_high: Option<f64>,
    pub snr_theory: Option<f64>,
    pub snr_empirical_mean: Option<f64>,
    pub mi_bound_nats: Option<f64>,
    pub fano_bound: f64,
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressReport {
    pub config: ProtocolConfig,
    pub rows: Vec<TrialRow>,
    pub aggregates: Vec<AggregateRow>,
}

/// Majority-vote BA of several decodes of the same payload.
pub fn vote_decode(decoded: &[Vec<u8>], truth: &[u8]) -> Result<f64> {
    let voted = majority_vote(decoded)?;
    Ok(bit_accuracy(&voted, truth)?.0)
}

/// Runs the full protocol described by `config`.
///
/// # Arguments
/// * `config` - validated run description; see `ProtocolConfig`.
///
/// # Returns
/// The report with one row per (image, edit, strength, seed) in canonical
/// order plus per-(edit, strength) aggregates, identical for any worker
/// count.
pub fn run_dewst(config: &ProtocolConfig) -> Result<StressReport> {
    config.validate()?;
    let sched = NoiseSchedule::<Real>::from_spec(config.schedule)?;
    let gamma = config.embed_strength.gamma()?;
    let key = WatermarkKey::new(config.master_seed, config.band_profile)?;
    let bank = make_carriers::<Real>(
        &key,
        config.payload_bits * config.ecc_repetition,
        config.height,
        config.width,
        config.channels,
        &config.band_partition,
    )?;
    let files = match &config.image_source {
        ImageSource::Synthetic { .. } => Vec::new(),
        ImageSource::Directory { path } => list_images(path, config.n_images)?,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let per_image: Result<Vec<ImageResult>> = pool.install(|| {
        (0..config.n_images)
            .into_par_iter()
            .map(|image_idx| run_image(config, &sched, &bank, gamma, &files, image_idx))
            .collect()
    });
    let per_image = per_image?;

    let mut rows = Vec::with_capacity(
        config.n_images
            * config.edit_suite.len()
            * config.strengths.len()
            * config.seeds_per_instruction,
    );
    let mut votes = Vec::new();
    for result in per_image {
        rows.extend(result.rows);
        votes.extend(result.votes);
    }
    let aggregates = aggregate(config, &rows, &votes)?;
    Ok(StressReport {
        config: config.clone(),
        rows,
        aggregates,
    })
}

struct ImageResult {
    rows: Vec<TrialRow>,
    votes: Vec<VoteCell>,
}

struct VoteCell {
    edit_idx: usize,
    strength_idx: usize,
    ba: f64,
}

fn list_images(dir: &Path, needed: usize) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("dws") | Some("png")
            )
        })
        .collect();
    files.sort();
    if files.len() < needed {
        return Err(Error::InvalidConfig(format!(
            "image directory {} holds {} usable files, config needs {}",
            dir.display(),
            files.len(),
            needed
        )));
    }
    files.truncate(needed);
    Ok(files)
}

fn run_image(
    config: &ProtocolConfig,
    sched: &NoiseSchedule<Real>,
    bank: &CarrierBank<Real>,
    gamma: f64,
    files: &[PathBuf],
    image_idx: usize,
) -> Result<ImageResult> {
    let i = image_idx as u64;
    let x: Image = match &config.image_source {
        ImageSource::Synthetic { kind } => {
            let mut rng = derive_stream(config.master_seed, &[i, 0, 0, 0, STAGE_IMAGE]);
            synth_image(*kind, config.height, config.width, config.channels, &mut rng)
        }
        ImageSource::Directory { .. } => {
            let img = load_image(&files[image_idx])?;
            if img.dims() != (config.height, config.width, config.channels) {
                return Err(Error::ShapeMismatch(format!(
                    "{} is {:?}, config wants {:?}",
                    files[image_idx].display(),
                    img.dims(),
                    (config.height, config.width, config.channels)
                )));
            }
            img
        }
    };

    let mut payload_rng = derive_stream(config.master_seed, &[i, 0, 0, 0, STAGE_PAYLOAD]);
    let payload = Payload::random(config.payload_bits, &mut payload_rng)?;
    let payload_hex = payload.to_hex()?;
    let coded = ecc_encode(&payload, config.ecc_repetition)?;
    let x_w = embed(&x, &coded.coded_bits, bank, gamma)?;
    let psnr_wm = finite_or_none(psnr(&x, &x_w)?);

    let injected = &x_w - &x;
    let inj = band_energies(&injected, &config.band_partition)?;
    let (inj_low, inj_mid, inj_high) = (f64::from(inj.low), f64::from(inj.mid), f64::from(inj.high));

    let clean_informed = DecodeOutcome::from_scores(
        &decode_soft(&x_w, Some(&x), bank)?,
        bank.d(),
        &payload,
        config.ecc_repetition,
    )?;
    let clean_blind = DecodeOutcome::from_scores(
        &decode_soft(&x_w, None, bank)?,
        bank.d(),
        &payload,
        config.ecc_repetition,
    )?;

    let mut rows = Vec::new();
    let mut votes = Vec::new();
    for (edit_idx, template) in config.edit_suite.iter().enumerate() {
        for (strength_idx, &t_star) in config.strengths.iter().enumerate() {
            let mut seed_decodes: Vec<Vec<u8>> = Vec::with_capacity(config.seeds_per_instruction);
            for seed_idx in 0..config.seeds_per_instruction {
                let lanes = [i, edit_idx as u64, strength_idx as u64, seed_idx as u64, STAGE_EDIT];
                let edit_config = template.to_config(t_star, lanes.to_vec());
                let mut rng = derive_stream(config.master_seed, &lanes);
                let outcome = coupled_edit(&x_w, &x, &edit_config, sched, &config.band_partition, &mut rng)?;
                let baseline = outcome.baseline_edited.as_ref().expect("coupled edits return a baseline");

                let informed = DecodeOutcome::from_scores(
                    &decode_soft(&outcome.edited, Some(&x), bank)?,
                    bank.d(),
                    &payload,
                    config.ecc_repetition,
                )?;
                let blind = DecodeOutcome::from_scores(
                    &decode_soft(&outcome.edited, None, bank)?,
                    bank.d(),
                    &payload,
                    config.ecc_repetition,
                )?;
                let null_detect_informed =
                    detect_statistic(&decode_soft(baseline, Some(&x), bank)?, bank.d());
                let null_detect_blind =
                    detect_statistic(&decode_soft(baseline, None, bank)?, bank.d());

                let surviving = &outcome.edited - baseline;
                let surv = band_energies(&surviving, &config.band_partition)?;
                let ratio = |num: f64, den: f64| (den > 0.0).then(|| num / den);

                let ab = outcome.realized_alpha_bar;
                let snr_theory =
                    finite_or_none(sched.snr_theoretical(outcome.start_step, gamma)?);
                let mi_bound = finite_or_none(mi_upper_bound(bank.d(), gamma, ab));
                // An unbounded information ceiling (t* = 0) constrains nothing.
                let fano_bound = match mi_bound {
                    Some(mi) => fano_lower_bound(mi, config.payload_bits)?,
                    None => 0.0,
                };

                seed_decodes.push(informed.info_bits.clone());
                rows.push(TrialRow {
                    image_idx,
                    edit: template.name.clone(),
                    t_star,
                    seed_idx,
                    payload_hex: payload_hex.clone(),
                    alpha_bar: ab,
                    start_step: outcome.start_step,
                    snr_theory,
                    snr_empirical: outcome.snr_empirical,
                    ba_clean_informed: clean_informed.ba,
                    ba_clean_blind: clean_blind.ba,
                    ba_informed: informed.ba,
                    ber_informed: informed.ber,
                    msg_ok_informed: informed.msg_ok,
                    msg_ok_noecc_informed: informed.msg_ok_noecc,
                    detect_informed: informed.detect,
                    null_detect_informed,
                    ba_blind: blind.ba,
                    ber_blind: blind.ber,
                    msg_ok_blind: blind.msg_ok,
                    detect_blind: blind.detect,
                    null_detect_blind,
                    psnr_wm,
                    psnr_edit: finite_or_none(psnr(&x_w, &outcome.edited)?),
                    ssim_edit: ssim(&x_w, &outcome.edited)?,
                    surv_low: f64::from(surv.low),
                    surv_mid: f64::from(surv.mid),
                    surv_high: f64::from(surv.high),
                    inj_low,
                    inj_mid,
                    inj_high,
                    rho_low: ratio(f64::from(surv.low), inj_low),
                    rho_mid: ratio(f64::from(surv.mid), inj_mid),
                    rho_high: ratio(f64::from(surv.high), inj_high),
                    mi_bound_nats: mi_bound,
                    fano_bound,
                });
            }
            if config.seeds_per_instruction % 2 == 1 {
                votes.push(VoteCell {
                    edit_idx,
                    strength_idx,
                    ba: vote_decode(&seed_decodes, payload.bits())?,
                });
            }
        }
    }
    Ok(ImageResult { rows, votes })
}

/// Everything one decode pass yields for the report.
struct DecodeOutcome {
    ba: f64,
    ber: f64,
    msg_ok: bool,
    msg_ok_noecc: bool,
    detect: f64,
    info_bits: Vec<u8>,
}

impl DecodeOutcome {
    fn from_scores(
        scores: &[Real],
        d: usize,
        payload: &Payload,
        repetition: usize,
    ) -> Result<Self> {
        let coded_bits = decode_bits(scores);
        let (decoded, _margins) = crate::watermark::ecc_decode(&coded_bits, repetition)?;
        let (ba, ber) = bit_accuracy(decoded.bits(), payload.bits())?;
        let first_copies: Vec<u8> = coded_bits.iter().step_by(repetition).copied().collect();
        Ok(DecodeOutcome {
            ba,
            ber,
            msg_ok: decoded.bits() == payload.bits(),
            msg_ok_noecc: first_copies == payload.bits(),
            detect: detect_statistic(scores, d),
            info_bits: decoded.bits().to_vec(),
        })
    }
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(
    config: &ProtocolConfig,
    rows: &[TrialRow],
    votes: &[VoteCell],
) -> Result<Vec<AggregateRow>> {
    let seeds = config.seeds_per_instruction;
    let n_strengths = config.strengths.len();
    let per_image = config.edit_suite.len() * n_strengths * seeds;
    let mut out = Vec::with_capacity(config.edit_suite.len() * n_strengths);
    for (edit_idx, template) in config.edit_suite.iter().enumerate() {
        for (strength_idx, &t_star) in config.strengths.iter().enumerate() {
            // Rows were assembled in canonical nested order, so each cell is
            // an arithmetic slice per image.
            let cell: Vec<&TrialRow> = (0..config.n_images)
                .flat_map(|img| {
                    let base = img * per_image + (edit_idx * n_strengths + strength_idx) * seeds;
                    rows[base..base + seeds].iter()
                })
                .collect();
            let rate = |f: &dyn Fn(&TrialRow) -> bool| {
                cell.iter().filter(|r| f(r)).count() as f64 / cell.len() as f64
            };
            let (ba_informed_mean, ba_informed_std) =
                mean_std(&cell.iter().map(|r| r.ba_informed).collect::<Vec<_>>());
            let (ba_blind_mean, ba_blind_std) =
                mean_std(&cell.iter().map(|r| r.ba_blind).collect::<Vec<_>>());
            let pos_informed: Vec<f64> = cell.iter().map(|r| r.detect_informed).collect();
            let neg_informed: Vec<f64> = cell.iter().map(|r| r.null_detect_informed).collect();
            let pos_blind: Vec<f64> = cell.iter().map(|r| r.detect_blind).collect();
            let neg_blind: Vec<f64> = cell.iter().map(|r| r.null_detect_blind).collect();
            let pooled_rho = |surv: &dyn Fn(&TrialRow) -> f64, inj: &dyn Fn(&TrialRow) -> f64| {
                let den: f64 = cell.iter().map(|r| inj(r)).sum();
                (den > 0.0).then(|| cell.iter().map(|r| surv(r)).sum::<f64>() / den)
            };
            let cell_votes: Vec<f64> = votes
                .iter()
                .filter(|v| v.edit_idx == edit_idx && v.strength_idx == strength_idx)
                .map(|v| v.ba)
                .collect();
            out.push(AggregateRow {
                edit: template.name.clone(),
                t_star,
                rows: cell.len(),
                ba_informed_mean,
                ba_informed_std,
                ba_blind_mean,
                ba_blind_std,
                ba_vote_informed: mean(cell_votes.iter().copied()),
                msg_rate_informed: rate(&|r| r.msg_ok_informed),
                msg_rate_noecc_informed: rate(&|r| r.msg_ok_noecc_informed),
                msg_rate_blind: rate(&|r| r.msg_ok_blind),
                detect_auc_informed: roc_auc(&pos_informed, &neg_informed)?,
                detect_auc_blind: roc_auc(&pos_blind, &neg_blind)?,
                psnr_wm_mean: mean(cell.iter().filter_map(|r| r.psnr_wm)),
                psnr_edit_mean: mean(cell.iter().filter_map(|r| r.psnr_edit)),
                ssim_edit_mean: mean(cell.iter().map(|r| r.ssim_edit)).expect("cell is nonempty"),
                rho_low: pooled_rho(&|r| r.surv_low, &|r| r.inj_low),
                rho_mid: pooled_rho(&|r| r.surv_mid, &|r| r.inj_mid),
                rho_high: pooled_rho(&|r| r.surv_high, &|r| r.inj_high),
                snr_theory: cell[0].snr_theory,
                snr_empirical_mean: mean(cell.iter().filter_map(|r| r.snr_empirical)),
                mi_bound_nats: cell[0].mi_bound_nats,
                fano_bound: cell[0].fano_bound,
            });
        }
    }
    Ok(out)
}

/// Report serialization format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Column order of `rows.csv`; kept in sync with `TrialRow` by a unit test.
pub const TRIAL_COLUMNS: &[&str] = &[
    "image_idx",
    "edit",
    "t_star",
    "seed_idx",
    "payload_hex",
    "alpha_bar",
    "start_step",
    "snr_theory",
    "snr_empirical",
    "ba_clean_informed",
    "ba_clean_blind",
    "ba_informed",
    "ber_informed",
    "msg_ok_informed",
    "msg_ok_noecc_informed",
    "detect_informed",
    "null_detect_informed",
    "ba_blind",
    "ber_blind",
    "msg_ok_blind",
    "detect_blind",
    "null_detect_blind",
    "psnr_wm",
    "psnr_edit",
    "ssim_edit",
    "surv_low",
    "surv_mid",
    "surv_high",
    "inj_low",
    "inj_mid",
    "inj_high",
    "rho_low",
    "rho_mid",
    "rho_high",
    "mi_bound_nats",
    "fano_bound",
];

/// Column order of `aggregates.csv`; kept in sync with `AggregateRow` by a
/// unit test.
pub const AGGREGATE_COLUMNS: &[&str] = &[
    "edit",
    "t_star",
    "rows",
    "ba_informed_mean",
    "ba_informed_std",
    "ba_blind_mean",
    "ba_blind_std",
    "ba_vote_informed",
    "msg_rate_informed",
    "msg_rate_noecc_informed",
    "msg_rate_blind",
    "detect_auc_informed",
    "detect_auc_blind",
    "psnr_wm_mean",
    "psnr_edit_mean",
    "ssim_edit_mean",
    "rho_low",
    "rho_mid",
    "rho_high",
    "snr_theory",
    "snr_empirical_mean",
    "mi_bound_nats",
    "fano_bound",
];

/// Writes the report under `dir`.
///
/// CSV format produces `rows.csv` (one line per trial, columns per
/// `TRIAL_COLUMNS`) and `aggregates.csv` (`AGGREGATE_COLUMNS`); JSON produces
/// a single `report.json` mirroring `StressReport`. Floats are written in
/// shortest round-trip form, so identical reports serialize to identical
/// bytes.
///
/// # Arguments
/// * `report` - the run output.
/// * `format` - CSV pair or single JSON document.
/// * `dir` - output directory, created if missing.
///
/// # Returns
/// Paths of the files written.
pub fn emit_report(report: &StressReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match format {
        ReportFormat::Csv => {
            let rows_path = dir.join("rows.csv");
            write_csv(&rows_path, TRIAL_COLUMNS, &report.rows)?;
            let agg_path = dir.join("aggregates.csv");
            write_csv(&agg_path, AGGREGATE_COLUMNS, &report.aggregates)?;
            Ok(vec![rows_path, agg_path])
        }
        ReportFormat::Json => {
            let path = dir.join("report.json");
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::to_writer_pretty(file, report)
                .map_err(|e| Error::InvalidConfig(format!("report serialization: {e}")))?;
            Ok(vec![path])
        }
    }
}

fn write_csv<R: Serialize>(path: &Path, columns: &[&str], records: &[R]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let csv_err = |e: csv::Error| Error::InvalidConfig(format!("csv write: {e}"));
    // Explicit header so an empty report still documents its columns.
    writer.write_record(columns).map_err(csv_err)?;
    for record in records {
        writer.serialize(record).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Small config that exercises every stage quickly.
    fn small_config() -> ProtocolConfig {
        ProtocolConfig {
            n_images: 2,
            height: 32,
            width: 32,
            channels: 3,
            edit_suite: vec![EditTemplate::global()],
            strengths: vec![0.2, 0.8],
            seeds_per_instruction: 3,
            payload_bits: 16,
            ecc_repetition: 3,
            embed_strength: EmbedStrength::Gamma { gamma: 0.3 },
            ..ProtocolConfig::default()
        }
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        assert!(ProtocolConfig::default().validate().is_ok());
        let bad = |f: &dyn Fn(&mut ProtocolConfig)| {
            let mut c = small_config();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(&|c| c.n_images = 0));
        assert!(bad(&|c| c.height = 4));
        assert!(bad(&|c| c.channels = 2));
        assert!(bad(&|c| c.edit_suite.clear()));
        assert!(bad(&|c| c.edit_suite = vec![EditTemplate::global(), EditTemplate::global()]));
        assert!(bad(&|c| c.strengths.clear()));
        assert!(bad(&|c| c.strengths = vec![1.5]));
        assert!(bad(&|c| c.seeds_per_instruction = 0));
        assert!(bad(&|c| c.payload_bits = 13));
        assert!(bad(&|c| c.ecc_repetition = 2));
        assert!(bad(&|c| c.payload_bits = 4096));
        assert!(bad(&|c| c.embed_strength = EmbedStrength::Gamma { gamma: -1.0 }));
        assert!(bad(&|c| {
            c.edit_suite = vec![EditTemplate {
                mask_side_fraction: Some(0.5),
                ..EditTemplate::global()
            }]
        }));
        assert!(bad(&|c| {
            c.edit_suite = vec![EditTemplate {
                mask_side_fraction: None,
                ..EditTemplate::local()
            }]
        }));
    }

    #[test]
    fn row_count_is_the_sweep_product() {
        let report = run_dewst(&small_config()).unwrap();
        assert_eq!(report.rows.len(), 2 * 1 * 2 * 3);
        assert_eq!(report.aggregates.len(), 2);
        // Canonical order: image-major, then edit, strength, seed.
        let key: Vec<(usize, f64, usize)> = report
            .rows
            .iter()
            .map(|r| (r.image_idx, r.t_star, r.seed_idx))
            .collect();
        let mut sorted = key.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(key, sorted);
    }

    #[test]
    fn identity_suite_recovers_everything() {
        let config = ProtocolConfig {
            edit_suite: vec![EditTemplate {
                name: "identity".into(),
                n_steps: 0,
                ..EditTemplate::global()
            }],
            strengths: vec![0.0],
            ..small_config()
        };
        let report = run_dewst(&config).unwrap();
        let agg = &report.aggregates[0];
        assert!(agg.ba_informed_mean >= 0.99, "ba {}", agg.ba_informed_mean);
        assert_eq!(agg.msg_rate_informed, 1.0);
        for row in &report.rows {
            assert_eq!(row.alpha_bar, 1.0);
            assert_eq!(row.ba_informed, 1.0);
            assert!(row.msg_ok_informed);
            // Identity edit leaves the watermarked image untouched.
            assert_eq!(row.psnr_edit, None);
            assert!(row.snr_theory.is_none());
            assert_eq!(row.fano_bound, 0.0);
            assert!(row.detect_informed > row.null_detect_informed);
        }
    }

    #[test]
    fn detector_auc_degrades_with_strength() {
        let config = ProtocolConfig {
            n_images: 4,
            ..small_config()
        };
        let report = run_dewst(&config).unwrap();
        let auc = |t: f64| {
            report
                .aggregates
                .iter()
                .find(|a| a.t_star == t)
                .unwrap()
                .detect_auc_informed
        };
        assert!(auc(0.2) > auc(0.8), "auc(0.2)={} auc(0.8)={}", auc(0.2), auc(0.8));
        assert!(auc(0.2) > 0.9, "mild edit should separate, got {}", auc(0.2));
    }

    #[test]
    fn reports_round_trip_through_csv_and_json() {
        let report = run_dewst(&small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv_paths = emit_report(&report, ReportFormat::Csv, dir.path()).unwrap();
        let json_paths = emit_report(&report, ReportFormat::Json, dir.path()).unwrap();

        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(&csv_paths[0])
            .unwrap();
        let rows: Vec<TrialRow> = reader.deserialize().collect::<std::result::Result<_, _>>().unwrap();
        assert_eq!(rows, report.rows);
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(&csv_paths[1])
            .unwrap();
        let aggs: Vec<AggregateRow> = reader.deserialize().collect::<std::result::Result<_, _>>().unwrap();
        assert_eq!(aggs, report.aggregates);

        let text = std::fs::read_to_string(&json_paths[0]).unwrap();
        let parsed: StressReport = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn csv_columns_match_the_documented_order() {
        let report = run_dewst(&small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&report, ReportFormat::Csv, dir.path()).unwrap();
        let rows_text = std::fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(rows_text.lines().next().unwrap(), TRIAL_COLUMNS.join(","));
        let agg_text = std::fs::read_to_string(&paths[1]).unwrap();
        assert_eq!(agg_text.lines().next().unwrap(), AGGREGATE_COLUMNS.join(","));
        assert_eq!(rows_text.lines().count(), 1 + report.rows.len());
    }

    #[test]
    fn empty_suite_emits_header_only_rows() {
        // An empty report is never produced by run_dewst (config validation
        // forbids it), but emit_report must still write a parseable header.
        let report = StressReport {
            config: small_config(),
            rows: Vec::new(),
            aggregates: Vec::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&report, ReportFormat::Csv, dir.path()).unwrap();
        let text = std::fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.lines().next().unwrap(), TRIAL_COLUMNS.join(","));
    }

    #[test]
    fn reports_are_identical_for_any_worker_count() {
        let mut config = small_config();
        config.workers = 1;
        let serial = run_dewst(&config).unwrap();
        config.workers = 4;
        let parallel = run_dewst(&config).unwrap();
        assert_eq!(serial.rows, parallel.rows);
        assert_eq!(serial.aggregates, parallel.aggregates);

        let dir = tempfile::tempdir().unwrap();
        let a = emit_report(&serial, ReportFormat::Csv, &dir.path().join("a")).unwrap();
        let b = emit_report(&parallel, ReportFormat::Csv, &dir.path().join("b")).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
        }
    }

    #[test]
    fn directory_source_round_trips_synthetic_images() {
        let dir = tempfile::tempdir().unwrap();
        for idx in 0..2 {
            let mut rng = derive_stream(99, &[idx]);
            let img: Image = synth_image(SynthKind::GaussianField, 32, 32, 3, &mut rng);
            crate::tensor::save_raw(&img, &dir.path().join(format!("img_{idx}.dws"))).unwrap();
        }
        let config = ProtocolConfig {
            image_source: ImageSource::Directory {
                path: dir.path().to_path_buf(),
            },
            ..small_config()
        };
        let report = run_dewst(&config).unwrap();
        assert_eq!(report.rows.len(), 12);
        // Asking for more images than the directory holds is a config error.
        let starved = ProtocolConfig {
            n_images: 9,
            ..config
        };
        assert!(run_dewst(&starved).is_err());
    }

    #[test]
    fn vote_decode_matches_hand_cases() {
        let truth = vec![1, 0, 1, 1];
        let unanimous = vec![truth.clone(), truth.clone(), truth.clone()];
        assert_eq!(vote_decode(&unanimous, &truth).unwrap(), 1.0);
        let split = vec![vec![1, 0, 1, 1], vec![0, 0, 1, 0], vec![1, 1, 1, 0]];
        // Votes: 1,0,1,0 → three of four bits match.
        assert_eq!(vote_decode(&split, &truth).unwrap(), 0.75);
        assert!(vote_decode(&unanimous[..2], &truth).is_err());
    }

    #[test]
    fn config_json_round_trip_with_partial_fields() {
        let full = ProtocolConfig::default();
        let text = serde_json::to_string(&full).unwrap();
        let back: ProtocolConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, full);

        let partial: ProtocolConfig =
            serde_json::from_str(r#"{"n_images": 3, "embed_strength": {"gamma": 0.25}}"#).unwrap();
        assert_eq!(partial.n_images, 3);
        assert_eq!(partial.embed_strength, EmbedStrength::Gamma { gamma: 0.25 });
        assert_eq!(partial.payload_bits, 96);
        assert_eq!(partial.strengths, vec![0.2, 0.4, 0.6, 0.8]);

        let with_target: ProtocolConfig =
            serde_json::from_str(r#"{"embed_strength": {"target_psnr_db": 46.0}}"#).unwrap();
        let gamma = with_target.embed_strength.gamma().unwrap();
        assert!((gamma - 10f64.powf(-2.3)).abs() < 1e-15);

        assert!(serde_json::from_str::<ProtocolConfig>(r#"{"n_imagez": 3}"#).is_err());
    }
}

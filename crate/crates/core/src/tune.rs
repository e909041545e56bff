//! Derivative-free tuning of the carrier band profile against an edit suite.
//!
//! The only trainable knobs of the linear embedder are the band energy
//! fractions and the overall strength. The strength is pinned by the
//! fidelity floor (γ = 10^(−floor/20), which meets the floor exactly for
//! unit-power carriers), leaving a search over the 2-simplex of band
//! fractions. The objective is the mean informed bit error rate over a
//! fixed, pre-drawn set of (image, edit, strength, seed) cases, so every
//! profile is scored against common random numbers.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::edit::coupled_edit;
use crate::error::{Error, Result};
use crate::harness::{EditTemplate, STAGE_EDIT, STAGE_IMAGE, STAGE_PAYLOAD};
use crate::metrics::bit_accuracy;
use crate::schedule::{NoiseSchedule, ScheduleSpec};
use crate::spectral::BandPartition;
use crate::stream::{derive_stream, RngStream};
use crate::tensor::{synth_image, SynthKind};
use crate::watermark::{decode_bits, decode_soft, embed, make_carriers, BandProfile, Payload, WatermarkKey};
use crate::{Image, Real};

/// A tuned embedding: carrier band fractions plus the strength that meets
/// the fidelity floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainVector {
    pub profile: BandProfile,
    pub gamma: f64,
}

/// Evaluation context knobs; the defaults keep single evaluations cheap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneOptions {
    pub n_images: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Raw payload bits per image; the tuner embeds without repetition
    /// coding so the objective is the uncoded channel BER.
    pub payload_bits: usize,
    pub seeds_per_case: usize,
    pub image_kind: SynthKind,
    pub band_partition: BandPartition,
    pub schedule: ScheduleSpec,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            n_images: 2,
            height: 32,
            width: 32,
            channels: 3,
            payload_bits: 48,
            seeds_per_case: 2,
            image_kind: SynthKind::GaussianField,
            band_partition: BandPartition::default(),
            schedule: ScheduleSpec::default(),
        }
    }
}

/// One objective evaluation. Field order is the trace CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub low: f64,
    pub mid: f64,
    pub high: f64,
    pub gamma: f64,
    pub ber: f64,
    pub psnr_db: f64,
}

/// Column order of the trace CSV; kept in sync with `TraceRow` by a test.
pub const TRACE_COLUMNS: &[&str] = &["iteration", "low", "mid", "high", "gamma", "ber", "psnr_db"];

/// Writes an evaluation trace as CSV.
pub fn write_trace_csv(trace: &[TraceRow], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let csv_err = |e: csv::Error| Error::InvalidConfig(format!("csv write: {e}"));
    writer.write_record(TRACE_COLUMNS).map_err(csv_err)?;
    for row in trace {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Coordinate-search tuner over the band simplex with a fixed evaluation
/// context (images, payloads, and edit noise drawn once at construction).
pub struct Tuner {
    options: TuneOptions,
    cases: Vec<CaseSpec>,
    images: Vec<Image>,
    payloads: Vec<Payload>,
    sched: NoiseSchedule<Real>,
    gamma: f64,
    psnr_floor_db: f64,
    budget: usize,
    used: usize,
    eval_seed: u64,
    random_start: BandProfile,
    memo: HashMap<[u64; 3], (f64, f64)>,
    trace: Vec<TraceRow>,
}

struct CaseSpec {
    edit_idx: usize,
    strength_idx: usize,
    config_proto: EditTemplate,
    t_star: f64,
}

/// Search geometry: initial mass-transfer step, halved until this floor.
const STEP_START: f64 = 0.2;
const STEP_MIN: f64 = 0.01;

impl Tuner {
    /// Builds the evaluation context.
    ///
    /// # Arguments
    /// * `edit_suite` - edit families the embedding must survive.
    /// * `strengths` - t* values sampled for every family.
    /// * `psnr_floor_db` - embedding fidelity floor, at least 30 dB.
    /// * `budget` - maximum fresh objective evaluations for `run`, at
    ///   least 20.
    /// * `options` - evaluation context sizes.
    /// * `rng` - seeds the fixed evaluation set and the random restart.
    ///
    /// # Returns
    /// A tuner whose objective is deterministic given `rng`.
    pub fn new(
        edit_suite: &[EditTemplate],
        strengths: &[f64],
        psnr_floor_db: f64,
        budget: usize,
        options: TuneOptions,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if budget < 20 {
            return Err(Error::InvalidConfig(format!(
                "tuning budget must be at least 20 evaluations, got {budget}"
            )));
        }
        if !(psnr_floor_db.is_finite() && psnr_floor_db >= 30.0) {
            return Err(Error::InvalidConfig(format!(
                "fidelity floor must be at least 30 dB, got {psnr_floor_db}"
            )));
        }
        let gamma = 10f64.powf(-psnr_floor_db / 20.0);
        if gamma < f64::MIN_POSITIVE {
            return Err(Error::InfeasibleFloor {
                floor_db: psnr_floor_db,
            });
        }
        if edit_suite.is_empty() || strengths.is_empty() {
            return Err(Error::InvalidConfig(
                "tuning needs a nonempty edit suite and strength list".into(),
            ));
        }
        for template in edit_suite {
            template.validate()?;
        }
        for &t in strengths {
            if !(t.is_finite() && (0.0..=1.0).contains(&t)) {
                return Err(Error::InvalidConfig(format!(
                    "edit strength must lie in [0, 1], got {t}"
                )));
            }
        }
        if options.n_images == 0 || options.seeds_per_case == 0 || options.payload_bits == 0 {
            return Err(Error::InvalidConfig(
                "tuning context needs images, seeds, and payload bits".into(),
            ));
        }
        let d = options.height * options.width * options.channels;
        if options.payload_bits > d / 16 {
            return Err(Error::CapacityExceeded {
                requested: options.payload_bits,
                available: d / 16,
                d,
            });
        }
        let sched = NoiseSchedule::from_spec(options.schedule)?;

        let eval_seed = rng.next_u64();
        let random_start = dirichlet_profile(rng);
        let images: Vec<Image> = (0..options.n_images)
            .map(|i| {
                let mut stream = derive_stream(eval_seed, &[i as u64, 0, 0, 0, STAGE_IMAGE]);
                synth_image(
                    options.image_kind,
                    options.height,
                    options.width,
                    options.channels,
                    &mut stream,
                )
            })
            .collect();
        let payloads: Vec<Payload> = (0..options.n_images)
            .map(|i| {
                let mut stream = derive_stream(eval_seed, &[i as u64, 0, 0, 0, STAGE_PAYLOAD]);
                Payload::random(options.payload_bits, &mut stream)
            })
            .collect::<Result<_>>()?;
        let cases: Vec<CaseSpec> = edit_suite
            .iter()
            .enumerate()
            .flat_map(|(edit_idx, template)| {
                strengths.iter().enumerate().map(move |(strength_idx, &t_star)| CaseSpec {
                    edit_idx,
                    strength_idx,
                    config_proto: template.clone(),
                    t_star,
                })
            })
            .collect();
        Ok(Tuner {
            options,
            cases,
            images,
            payloads,
            sched,
            gamma,
            psnr_floor_db,
            budget,
            used: 0,
            eval_seed,
            random_start,
            memo: HashMap::new(),
            trace: Vec::new(),
        })
    }

    /// Strength every evaluation embeds with.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Fresh evaluations consumed so far.
    pub fn evaluations_used(&self) -> usize {
        self.used
    }

    /// All fresh evaluations, in order.
    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn into_trace(self) -> Vec<TraceRow> {
        self.trace
    }

    /// Scores a profile: (mean informed BER over the fixed cases, mean
    /// embedding PSNR in dB). Results are memoized per exact profile.
    pub fn evaluate(&mut self, profile: &BandProfile) -> Result<(f64, f64)> {
        let key = profile_key(profile);
        if let Some(&hit) = self.memo.get(&key) {
            return Ok(hit);
        }
        profile.validate()?;
        let bank = make_carriers::<Real>(
            &WatermarkKey::new(self.eval_seed, *profile)?,
            self.options.payload_bits,
            self.options.height,
            self.options.width,
            self.options.channels,
            &self.options.band_partition,
        )?;
        let mut wrong_bits = 0usize;
        let mut total_bits = 0usize;
        let mut psnr_sum = 0.0f64;
        for (i, (x, payload)) in self.images.iter().zip(&self.payloads).enumerate() {
            let x_w = embed(x, payload.bits(), &bank, self.gamma)?;
            psnr_sum += crate::metrics::psnr(x, &x_w)?;
            for case in &self.cases {
                for seed_idx in 0..self.options.seeds_per_case {
                    let lanes = [
                        i as u64,
                        case.edit_idx as u64,
                        case.strength_idx as u64,
                        seed_idx as u64,
                        STAGE_EDIT,
                    ];
                    let config = case.config_proto.to_config(case.t_star, lanes.to_vec());
                    let mut stream = derive_stream(self.eval_seed, &lanes);
                    let outcome = coupled_edit(
                        &x_w,
                        x,
                        &config,
                        &self.sched,
                        &self.options.band_partition,
                        &mut stream,
                    )?;
                    let scores = decode_soft(&outcome.edited, Some(x), &bank)?;
                    let decoded = decode_bits(&scores);
                    let (_, ber) = bit_accuracy(&decoded, payload.bits())?;
                    wrong_bits += (ber * decoded.len() as f64).round() as usize;
                    total_bits += decoded.len();
                }
            }
        }
        let ber = wrong_bits as f64 / total_bits as f64;
        let psnr_db = psnr_sum / self.images.len() as f64;
        self.memo.insert(key, (ber, psnr_db));
        self.trace.push(TraceRow {
            iteration: self.trace.len(),
            low: profile.low,
            mid: profile.mid,
            high: profile.high,
            gamma: self.gamma,
            ber,
            psnr_db,
        });
        self.used += 1;
        Ok((ber, psnr_db))
    }

    /// Evaluates within the budget; `None` once the budget is spent and the
    /// profile is not already memoized.
    fn try_evaluate(&mut self, profile: &BandProfile) -> Result<Option<(f64, f64)>> {
        if self.used >= self.budget && !self.memo.contains_key(&profile_key(profile)) {
            return Ok(None);
        }
        self.evaluate(profile).map(Some)
    }

    /// Coordinate search with step halving from three restarts (default
    /// profile, uniform, one random draw), bounded by the budget.
    ///
    /// # Returns
    /// The best profile found with the floor-matching strength; errors if
    /// its re-measured embedding fidelity misses the floor.
    pub fn run(&mut self) -> Result<GainVector> {
        let starts = [
            BandProfile::default(),
            BandProfile::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)?,
            self.random_start,
        ];
        let mut best: Option<(BandProfile, f64)> = None;
        'restarts: for start in starts {
            let Some((mut current_ber, _)) = self.try_evaluate(&start)? else {
                break 'restarts;
            };
            let mut current = start;
            if best.map_or(true, |(_, b)| current_ber < b) {
                best = Some((current, current_ber));
            }
            let mut step = STEP_START;
            while step >= STEP_MIN {
                let mut round_best: Option<(BandProfile, f64)> = None;
                for (src, dst) in TRANSFER_PAIRS {
                    let Some(candidate) = transfer(&current, src, dst, step) else {
                        continue;
                    };
                    let Some((ber, _)) = self.try_evaluate(&candidate)? else {
                        break 'restarts;
                    };
                    if round_best.map_or(true, |(_, b)| ber < b) {
                        round_best = Some((candidate, ber));
                    }
                }
                match round_best {
                    Some((profile, ber)) if ber < current_ber => {
                        current = profile;
                        current_ber = ber;
                        if best.map_or(true, |(_, b)| ber < b) {
                            best = Some((profile, ber));
                        }
                    }
                    _ => step /= 2.0,
                }
            }
        }
        let (profile, _) = best.ok_or_else(|| {
            Error::InvalidConfig("tuning budget spent before any evaluation".into())
        })?;
        self.certify(profile)
    }

    /// Exhaustive search on the simplex grid with `divisions` subdivisions
    /// per edge (20 gives the 5% grid). Shares the memo with `run` and is
    /// not budget-limited: it is the verification oracle.
    pub fn grid_search(&mut self, divisions: usize) -> Result<(GainVector, f64)> {
        if divisions == 0 {
            return Err(Error::InvalidConfig("grid needs at least one division".into()));
        }
        let mut best: Option<(BandProfile, f64)> = None;
        for i in 0..=divisions {
            for j in 0..=divisions - i {
                let k = divisions - i - j;
                let den = divisions as f64;
                let profile = BandProfile::new(i as f64 / den, j as f64 / den, k as f64 / den)?;
                let (ber, _) = self.evaluate(&profile)?;
                if best.map_or(true, |(_, b)| ber < b) {
                    best = Some((profile, ber));
                }
            }
        }
        let (profile, ber) = best.expect("grid is nonempty");
        Ok((self.certify(profile)?, ber))
    }

    /// Re-checks the measured embedding fidelity of a chosen profile
    /// against the floor before handing it out.
    fn certify(&mut self, profile: BandProfile) -> Result<GainVector> {
        let (_, psnr_db) = self.evaluate(&profile)?;
        if psnr_db < self.psnr_floor_db - 0.05 {
            return Err(Error::InfeasibleFloor {
                floor_db: self.psnr_floor_db,
            });
        }
        Ok(GainVector {
            profile,
            gamma: self.gamma,
        })
    }
}

/// Ordered (source, destination) band index pairs for mass transfers.
const TRANSFER_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];

fn profile_key(profile: &BandProfile) -> [u64; 3] {
    [
        profile.low.to_bits(),
        profile.mid.to_bits(),
        profile.high.to_bits(),
    ]
}

/// Moves `step` of mass (clipped to what the source holds) between bands;
/// None when the source is already empty.
fn transfer(profile: &BandProfile, src: usize, dst: usize, step: f64) -> Option<BandProfile> {
    let mut f = [profile.low, profile.mid, profile.high];
    let moved = step.min(f[src]);
    if moved <= 0.0 {
        return None;
    }
    f[src] -= moved;
    f[dst] += moved;
    // Renormalize so accumulated rounding never trips the sum invariant.
    let sum: f64 = f.iter().sum();
    Some(BandProfile::new(f[0] / sum, f[1] / sum, f[2] / sum).expect("transfer stays on the simplex"))
}

/// Uniform draw from the simplex via normalized exponentials.
fn dirichlet_profile(rng: &mut RngStream) -> BandProfile {
    let mut draws = [0.0f64; 3];
    for slot in &mut draws {
        *slot = -(1.0 - rng.uniform()).ln();
    }
    let sum: f64 = draws.iter().sum();
    if sum <= 0.0 {
        return BandProfile::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0).expect("uniform profile is valid");
    }
    BandProfile::new(draws[0] / sum, draws[1] / sum, draws[2] / sum)
        .expect("normalized exponentials lie on the simplex")
}

/// One-call tuning with the default evaluation context.
///
/// # Arguments
/// * `edit_suite` - edit families to survive.
/// * `strengths` - t* values per family.
/// * `psnr_floor_db` - fidelity floor (≥ 30 dB) that pins γ.
/// * `budget` - fresh evaluation cap (≥ 20).
/// * `rng` - randomness source; results are deterministic given it.
///
/// # Returns
/// The best gain vector and the full evaluation trace.
pub fn tune_gains(
    edit_suite: &[EditTemplate],
    strengths: &[f64],
    psnr_floor_db: f64,
    budget: usize,
    rng: &mut RngStream,
) -> Result<(GainVector, Vec<TraceRow>)> {
    let mut tuner = Tuner::new(
        edit_suite,
        strengths,
        psnr_floor_db,
        budget,
        TuneOptions::default(),
        rng,
    )?;
    let best = tuner.run()?;
    Ok((best, tuner.into_trace()))
}

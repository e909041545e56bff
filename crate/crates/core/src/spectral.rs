//! Radial frequency bands and band-energy diagnostics.
//!
//! Every DFT bin belongs to exactly one of three bands, split by its radial
//! frequency `f` in cycles per pixel: low (`f < f1`, including DC), mid
//! (`f1 <= f < f2`), and high (`f >= f2`, up to `sqrt(2)/2` at the corner).
//! The DFT is unitary, so the three band energies of a residual sum to its
//! squared norm exactly (Parseval), which the retention ratios rely on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;
use crate::{fft, Scalar};

/// Radial frequency band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Low,
    Mid,
    High,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Low, Band::Mid, Band::High];

    pub fn name(self) -> &'static str {
        match self {
            Band::Low => "low",
            Band::Mid => "mid",
            Band::High => "high",
        }
    }
}

/// Band edges in cycles per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPartition {
    pub f1: f64,
    pub f2: f64,
}

impl Default for BandPartition {
    fn default() -> Self {
        BandPartition {
            f1: 1.0 / 8.0,
            f2: 1.0 / 4.0,
        }
    }
}

impl BandPartition {
    pub fn validate(&self) -> Result<()> {
        let max = std::f64::consts::FRAC_1_SQRT_2;
        if !(self.f1 > 0.0 && self.f1 < self.f2 && self.f2 <= max) {
            return Err(Error::InvalidConfig(format!(
                "band edges must satisfy 0 < f1 < f2 <= {max:.4}, got ({}, {})",
                self.f1, self.f2
            )));
        }
        Ok(())
    }

    /// Band containing radial frequency `f`.
    pub fn band_of(&self, f: f64) -> Band {
        if f < self.f1 {
            Band::Low
        } else if f < self.f2 {
            Band::Mid
        } else {
            Band::High
        }
    }
}

/// Per-bin band labels for an `h x w` DFT plane, row-major.
pub(crate) fn bin_bands(h: usize, w: usize, partition: &BandPartition) -> Vec<Band> {
    let mut bands = Vec::with_capacity(h * w);
    for ky in 0..h {
        for kx in 0..w {
            bands.push(partition.band_of(fft::radial_frequency(ky, kx, h, w)));
        }
    }
    bands
}

/// Energies of a residual image split by band, summed over channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandEnergies<T> {
    pub low: T,
    pub mid: T,
    pub high: T,
}

impl<T: Scalar> BandEnergies<T> {
    pub fn total(&self) -> T {
        self.low + self.mid + self.high
    }

    pub fn get(&self, band: Band) -> T {
        match band {
            Band::Low => self.low,
            Band::Mid => self.mid,
            Band::High => self.high,
        }
    }
}

/// Computes all three band energies of `residual` in one DFT pass per channel.
pub fn band_energies<T: Scalar>(
    residual: &ImageTensor<T>,
    partition: &BandPartition,
) -> Result<BandEnergies<T>> {
    partition.validate()?;
    let (h, w, c) = residual.dims();
    let bands = bin_bands(h, w, partition);
    let mut acc = [T::zero(); 3];
    for ch in 0..c {
        let spec = fft::forward(residual.channel(ch), h, w);
        for (bin, band) in spec.iter().zip(&bands) {
            let idx = match band {
                Band::Low => 0,
                Band::Mid => 1,
                Band::High => 2,
            };
            acc[idx] += bin.norm_sqr();
        }
    }
    Ok(BandEnergies {
        low: acc[0],
        mid: acc[1],
        high: acc[2],
    })
}

/// Energy of `residual` inside a single band.
pub fn band_energy<T: Scalar>(
    residual: &ImageTensor<T>,
    band: Band,
    partition: &BandPartition,
) -> Result<T> {
    Ok(band_energies(residual, partition)?.get(band))
}

/// One band's row in a retention report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RetentionRow {
    pub band: Band,
    /// Mean band energy of edited-pair residuals.
    pub surviving_energy: f64,
    /// Mean band energy of unedited watermark residuals.
    pub injected_energy: f64,
    /// Ratio of the two means.
    pub retention: f64,
}

/// Per-band watermark retention across a set of coupled pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetentionReport {
    pub rows: [RetentionRow; 3],
    pub pair_count: usize,
}

impl RetentionReport {
    pub fn retention(&self, band: Band) -> f64 {
        self.rows
            .iter()
            .find(|r| r.band == band)
            .expect("all bands present")
            .retention
    }

    /// Writes the report as CSV: `band,numerator_energy,denominator_energy,rho`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let io_err = |e: csv::Error| Error::InvalidConfig(format!("csv write failed: {e}"));
        wtr.write_record(["band", "numerator_energy", "denominator_energy", "rho"])
            .map_err(io_err)?;
        for row in &self.rows {
            wtr.write_record([
                row.band.name().to_string(),
                format!("{}", row.surviving_energy),
                format!("{}", row.injected_energy),
                format!("{}", row.retention),
            ])
            .map_err(io_err)?;
        }
        wtr.flush().map_err(|e| Error::InvalidConfig(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

/// Per-band retention ratios: mean surviving band energy over mean injected
/// band energy.
///
/// `edited_pairs` holds `(edited_watermarked, edited_baseline)` images from
/// coupled edits; `input_pairs` holds the matching `(watermarked, original)`
/// inputs. Ratios use the mean over pairs in both numerator and denominator,
/// so heavily-watermarked pairs weigh in proportionally rather than each pair
/// voting equally.
pub fn spectral_retention<T: Scalar>(
    edited_pairs: &[(&ImageTensor<T>, &ImageTensor<T>)],
    input_pairs: &[(&ImageTensor<T>, &ImageTensor<T>)],
    partition: &BandPartition,
) -> Result<RetentionReport> {
    if edited_pairs.len() != input_pairs.len() || edited_pairs.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "need equal, nonzero pair counts; got {} edited and {} input",
            edited_pairs.len(),
            input_pairs.len()
        )));
    }
    let mut surviving = [0.0f64; 3];
    let mut injected = [0.0f64; 3];
    let sum_into = |acc: &mut [f64; 3], pair: &(&ImageTensor<T>, &ImageTensor<T>)| -> Result<()> {
        let residual = pair.0 - pair.1;
        let e = band_energies(&residual, partition)?;
        for (slot, band) in acc.iter_mut().zip(Band::ALL) {
            *slot += e.get(band).to_f64().expect("scalar converts to f64");
        }
        Ok(())
    };
    for pair in edited_pairs {
        sum_into(&mut surviving, pair)?;
    }
    for pair in input_pairs {
        sum_into(&mut injected, pair)?;
    }
    let n = edited_pairs.len() as f64;
    let mut rows = [RetentionRow {
        band: Band::Low,
        surviving_energy: 0.0,
        injected_energy: 0.0,
        retention: 0.0,
    }; 3];
    for (i, band) in Band::ALL.into_iter().enumerate() {
        if injected[i] <= 0.0 {
            return Err(Error::DegenerateBand { band });
        }
        rows[i] = RetentionRow {
            band,
            surviving_energy: surviving[i] / n,
            injected_energy: injected[i] / n,
            retention: surviving[i] / injected[i],
        };
    }
    Ok(RetentionReport {
        rows,
        pair_count: edited_pairs.len(),
    })
}

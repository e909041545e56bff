//! Recovery and fidelity metrics: bit accuracy, empirical ROC statistics,
//! PSNR, windowed SSIM, and per-bit majority voting.
//!
//! All statistics are step-function empirical (no interpolation) so repeated
//! runs on identical inputs are bit-identical.

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;
use crate::watermark::reflect;
use crate::Scalar;

/// Fraction of matching positions, with its complement: `(BA, BER)`.
pub fn bit_accuracy(decoded: &[u8], truth: &[u8]) -> Result<(f64, f64)> {
    if decoded.len() != truth.len() || decoded.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "bit vectors must be equal and nonempty: {} vs {}",
            decoded.len(),
            truth.len()
        )));
    }
    let matches = decoded.iter().zip(truth).filter(|(a, b)| a == b).count();
    let ba = matches as f64 / decoded.len() as f64;
    Ok((ba, 1.0 - ba))
}

/// Probability a random positive score outranks a random negative one, ties
/// counted half (Mann-Whitney).
pub fn roc_auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, "positive")?;
    check_scores(neg, "negative")?;
    // Midrank formulation: AUC = (R_pos − P(P+1)/2) / (P·N).
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores are finite"));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // Ranks are 1-based; a tie group spanning ranks i+1..=j shares the mean.
        let midrank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let p = pos.len() as f64;
    let n = neg.len() as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// False positive rate at the largest threshold reaching the target true
/// positive rate, under the decision rule `score ≥ threshold`.
pub fn fpr_at_tpr(pos: &[f64], neg: &[f64], target_tpr: f64) -> Result<f64> {
    check_scores(pos, "positive")?;
    check_scores(neg, "negative")?;
    if !(target_tpr > 0.0 && target_tpr <= 1.0) {
        return Err(Error::OutOfRange(format!(
            "target TPR must be in (0, 1], got {target_tpr}"
        )));
    }
    // TPR(τ) = #{pos ≥ τ}/P steps down as τ grows, so the largest τ with
    // TPR ≥ k/P is the k-th largest positive score, k = ceil(target·P).
    let p = pos.len();
    let k = ((target_tpr * p as f64 - 1e-9).ceil() as usize).clamp(1, p);
    let mut sorted: Vec<f64> = pos.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("scores are finite"));
    let threshold = sorted[k - 1];
    let fp = neg.iter().filter(|s| **s >= threshold).count();
    Ok(fp as f64 / neg.len() as f64)
}

fn check_scores(scores: &[f64], which: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidConfig(format!("{which} score set is empty")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::OutOfRange(format!("{which} scores must be finite")));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB for unit dynamic range; +∞ when equal.
pub fn psnr<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(format!(
            "psnr shapes {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let mse = (a - b).norm_sq().to_f64().expect("finite") / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

/// Mean structural similarity over all 8×8 windows (stride 1, reflect
/// padding), K1 = 0.01, K2 = 0.03, unit dynamic range, population variances.
pub fn ssim<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(format!(
            "ssim shapes {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    const WIN: usize = 8;
    const C1: f64 = 1e-4;
    const C2: f64 = 9e-4;
    let (h, w, c) = a.dims();
    let (ph, pw) = (h + WIN - 1, w + WIN - 1);
    let inv_n = 1.0 / (WIN * WIN) as f64;
    let mut total = 0.0f64;
    for ch in 0..c {
        // Windows are centered with 3 samples before and 4 after each pixel.
        let pa = pad_reflect(a.channel(ch), h, w, 3, ph, pw);
        let pb = pad_reflect(b.channel(ch), h, w, 3, ph, pw);
        let sa = integral(&pa, ph, pw);
        let sb = integral(&pb, ph, pw);
        let saa = integral_prod(&pa, &pa, ph, pw);
        let sbb = integral_prod(&pb, &pb, ph, pw);
        let sab = integral_prod(&pa, &pb, ph, pw);
        for y in 0..h {
            for x in 0..w {
                let mu_a = window_sum(&sa, pw, y, x, WIN) * inv_n;
                let mu_b = window_sum(&sb, pw, y, x, WIN) * inv_n;
                let var_a = window_sum(&saa, pw, y, x, WIN) * inv_n - mu_a * mu_a;
                let var_b = window_sum(&sbb, pw, y, x, WIN) * inv_n - mu_b * mu_b;
                let cov = window_sum(&sab, pw, y, x, WIN) * inv_n - mu_a * mu_b;
                let lum = (2.0 * mu_a * mu_b + C1) / (mu_a * mu_a + mu_b * mu_b + C1);
                let cs = (2.0 * cov + C2) / (var_a + var_b + C2);
                total += lum * cs;
            }
        }
    }
    Ok(total / (h * w * c) as f64)
}

fn pad_reflect<T: Scalar>(
    plane: &[T],
    h: usize,
    w: usize,
    before: usize,
    ph: usize,
    pw: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(ph * pw);
    for y in 0..ph {
        let sy = reflect(y as i64 - before as i64, h);
        for x in 0..pw {
            let sx = reflect(x as i64 - before as i64, w);
            out.push(plane[sy * w + sx].to_f64().expect("finite"));
        }
    }
    out
}

/// Summed-area table with a zero top row and left column.
fn integral(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut s = vec![0.0f64; (h + 1) * (w + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += plane[y * w + x];
            s[(y + 1) * (w + 1) + (x + 1)] = s[y * (w + 1) + (x + 1)] + row;
        }
    }
    s
}

fn integral_prod(a: &[f64], b: &[f64], h: usize, w: usize) -> Vec<f64> {
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    integral(&prod, h, w)
}

fn window_sum(s: &[f64], pw: usize, y: usize, x: usize, win: usize) -> f64 {
    let w1 = pw + 1;
    s[(y + win) * w1 + (x + win)] + s[y * w1 + x] - s[y * w1 + (x + win)] - s[(y + win) * w1 + x]
}

/// Per-bit majority across an odd number of decoded payloads.
pub fn majority_vote(rows: &[Vec<u8>]) -> Result<Vec<u8>> {
    if rows.is_empty() || rows.len() % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "majority vote needs an odd number of rows, got {}",
            rows.len()
        )));
    }
    let len = rows[0].len();
    if rows.iter().any(|r| r.len() != len) || len == 0 {
        return Err(Error::ShapeMismatch("vote rows must share a nonzero length".into()));
    }
    let half = rows.len() as u32 / 2;
    Ok((0..len)
        .map(|i| {
            let ones: u32 = rows.iter().map(|r| u32::from(r[i])).sum();
            u8::from(ones > half)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bit_accuracy_counts() {
        assert_eq!(bit_accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), (1.0, 0.0));
        assert_eq!(bit_accuracy(&[0, 1, 0], &[1, 0, 1]).unwrap(), (0.0, 1.0));
        assert_eq!(
            bit_accuracy(&[1, 0, 1, 1], &[1, 0, 1, 0]).unwrap(),
            (0.75, 0.25)
        );
        assert!(bit_accuracy(&[1], &[1, 0]).is_err());
        assert!(bit_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn auc_hand_cases() {
        assert_eq!(roc_auc(&[5.0, 6.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.5);
        // Two pairs: (1 vs 2) loses, (3 vs 2) wins.
        assert_eq!(roc_auc(&[1.0, 3.0], &[2.0]).unwrap(), 0.5);
        assert!(roc_auc(&[], &[1.0]).is_err());
        assert!(roc_auc(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn fpr_hand_cases() {
        // Threshold sweep on interleaved odds and evens: the largest τ with
        // TPR ≥ 0.8 is 4 (four of five positives ≥ 4), and three of five
        // negatives {5, 7, 9} are ≥ 4.
        let pos = [2.0, 4.0, 6.0, 8.0, 10.0];
        let neg = [1.0, 3.0, 5.0, 7.0, 9.0];
        assert_eq!(fpr_at_tpr(&pos, &neg, 0.8).unwrap(), 0.6);
        // Perfectly separable data: zero false positives at any target.
        assert_eq!(fpr_at_tpr(&[5.0, 6.0, 7.0], &[1.0, 2.0], 0.95).unwrap(), 0.0);
        // Identical multisets: FPR tracks the achieved TPR ceil(k)/n.
        let same: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(fpr_at_tpr(&same, &same, 0.95).unwrap(), 0.95);
        assert!(fpr_at_tpr(&pos, &neg, 0.0).is_err());
        assert!(fpr_at_tpr(&pos, &neg, 1.1).is_err());
    }

    #[test]
    fn fpr_threshold_is_largest_achieving_target() {
        // k = ceil(0.5 · 4) = 2; second-largest positive is 3; FPR counts
        // negatives ≥ 3.
        let pos = [1.0, 2.0, 3.0, 4.0];
        let neg = [2.5, 3.5];
        assert_eq!(fpr_at_tpr(&pos, &neg, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn psnr_cases() {
        let a = ImageTensor::<f64>::filled(8, 8, 1, 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = ImageTensor::<f64>::filled(8, 8, 1, 0.6);
        let p = psnr(&a, &b).unwrap();
        assert!((p - 20.0).abs() < 1e-9, "psnr {p}");
        let half = ImageTensor::<f64>::filled(8, 8, 1, 0.55);
        assert!(psnr(&a, &half).unwrap() > p);
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let mut a = ImageTensor::<f64>::zeros(16, 16, 1);
        for y in 0..16 {
            for x in 0..16 {
                a.set(y, x, 0, ((y + x) % 2) as f64);
            }
        }
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);

        // b = 1 − a on a pixel checker: every window has means 0.5,
        // variances 0.25, covariance −0.25, so each term is
        // (−0.5 + C2)/(0.5 + C2) with luminance exactly 1; the reflect
        // padding continues the checker so edge windows are identical.
        let mut b = a.clone();
        for v in b.data_mut() {
            *v = 1.0 - *v;
        }
        let got = ssim(&a, &b).unwrap();
        let want = (-0.5 + 9e-4) / (0.5 + 9e-4);
        assert!((got - want).abs() < 1e-9, "ssim {got} vs {want}");
        assert!(got < -0.9);
    }

    #[test]
    fn ssim_penalizes_blur_less_than_inversion() {
        let mut a = ImageTensor::<f64>::zeros(16, 16, 1);
        for y in 0..16 {
            for x in 0..16 {
                a.set(y, x, 0, ((y / 4 + x / 4) % 2) as f64);
            }
        }
        let blurred = crate::watermark::box_blur5(&a);
        let mut inverted = a.clone();
        for v in inverted.data_mut() {
            *v = 1.0 - *v;
        }
        let s_blur = ssim(&a, &blurred).unwrap();
        let s_inv = ssim(&a, &inverted).unwrap();
        assert!(s_blur > 0.0 && s_blur < 1.0);
        assert!(s_inv < s_blur);
    }

    #[test]
    fn vote_cases() {
        assert_eq!(majority_vote(&[vec![1, 0, 1]]).unwrap(), vec![1, 0, 1]);
        assert_eq!(
            majority_vote(&[vec![1, 0], vec![1, 0], vec![1, 0]]).unwrap(),
            vec![1, 0]
        );
        assert_eq!(
            majority_vote(&[vec![1, 0, 1], vec![1, 1, 0], vec![0, 0, 1]]).unwrap(),
            vec![1, 0, 1]
        );
        assert!(majority_vote(&[vec![1], vec![0]]).is_err());
        assert!(majority_vote(&[]).is_err());
        assert!(majority_vote(&[vec![1], vec![0, 1], vec![1]]).is_err());
    }

    proptest! {
        #[test]
        fn auc_complement_sums_to_one(
            pos in proptest::collection::vec(0..20i32, 1..30),
            neg in proptest::collection::vec(0..20i32, 1..30),
        ) {
            // Integer scores force plenty of ties.
            let pos: Vec<f64> = pos.into_iter().map(f64::from).collect();
            let neg: Vec<f64> = neg.into_iter().map(f64::from).collect();
            let fwd = roc_auc(&pos, &neg).unwrap();
            let rev = roc_auc(&neg, &pos).unwrap();
            prop_assert!((fwd + rev - 1.0).abs() < 1e-12);
        }

        #[test]
        fn bit_accuracy_is_symmetric(bits in proptest::collection::vec(0..2u8, 1..64), flips in proptest::collection::vec(0..2u8, 1..64)) {
            let n = bits.len().min(flips.len());
            let a = &bits[..n];
            let b: Vec<u8> = a.iter().zip(&flips[..n]).map(|(x, f)| x ^ f).collect();
            prop_assert_eq!(bit_accuracy(a, &b).unwrap(), bit_accuracy(&b, a).unwrap());
        }

        #[test]
        fn psnr_decreases_with_mse(offset in 0.01f64..0.5) {
            let a = ImageTensor::<f64>::filled(8, 8, 1, 0.2);
            let b = ImageTensor::<f64>::filled(8, 8, 1, 0.2 + offset);
            let c = ImageTensor::<f64>::filled(8, 8, 1, 0.2 + offset * 1.5);
            prop_assert!(psnr(&a, &b).unwrap() > psnr(&a, &c).unwrap());
        }
    }
}

//! Image-encryption statistics: histogram, entropy, NPCR, UACI, adjacent-pixel
//! correlation and the plaintext/key sensitivity experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::container::{encrypt_image_with, ContainerError};
use crate::gf::FieldSpec;
use crate::image::{bytes_to_symbols, symbols_to_bytes, GrayImage};
use crate::kernel::{CipherParams, Mode};
use crate::key::{derive_params, InitVector, KeyMaterial};
use crate::permutation::KeyPermutation;

pub const DEFAULT_PAIRS: usize = 2500;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("cannot compute entropy of empty data")]
    EmptyData,
    #[error("images differ in size: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("correlation is undefined: a marginal has zero variance")]
    ZeroVariance,
    #[error("image has no adjacent pairs in the {0} direction")]
    NoPairs(Direction),
    #[error("no key bit flip yields a distinct valid key")]
    NoKeyFlip,
    #[error("pixel index {index} outside an image of {len} pixels")]
    PixelIndex { index: usize, len: usize },
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut bins = [0u64; 256];
    for &p in img.pixels() {
        bins[p as usize] += 1;
    }
    bins
}

/// Alphabet for entropy: bits, nibbles or bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Width {
    Bit = 1,
    Nibble = 4,
    Byte = 8,
}

impl Width {
    pub fn bits(self) -> u32 {
        self as u32
    }
}

/// Shannon entropy in bits of the empirical distribution of `width`-bit
/// symbols in `data`.
pub fn entropy(data: &[u8], width: Width) -> Result<f64, StatsError> {
    if data.is_empty() {
        return Err(StatsError::EmptyData);
    }
    let mut counts = vec![0u64; 1 << width.bits()];
    for &b in data {
        match width {
            Width::Byte => counts[b as usize] += 1,
            Width::Nibble => {
                counts[(b >> 4) as usize] += 1;
                counts[(b & 15) as usize] += 1;
            }
            Width::Bit => {
                let ones = b.count_ones() as u64;
                counts[1] += ones;
                counts[0] += 8 - ones;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum())
}

/// Comparison granularity for NPCR/UACI.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// Pixels (bytes), intensity range 255.
    #[default]
    Byte,
    /// GF(16) symbols (nibbles), intensity range 15.
    Symbol,
}

fn units(img: &GrayImage, g: Granularity) -> Vec<u8> {
    match g {
        Granularity::Byte => img.pixels().to_vec(),
        Granularity::Symbol => bytes_to_symbols(img.pixels()).into_symbols(),
    }
}

fn check_sizes(a: &GrayImage, b: &GrayImage) -> Result<(), StatsError> {
    if a.same_size(b) {
        Ok(())
    } else {
        Err(StatsError::SizeMismatch(a.width(), a.height(), b.width(), b.height()))
    }
}

/// Percentage of positions where the two images differ.
pub fn npcr(a: &GrayImage, b: &GrayImage, g: Granularity) -> Result<f64, StatsError> {
    check_sizes(a, b)?;
    let (x, y) = (units(a, g), units(b, g));
    let diff = x.iter().zip(&y).filter(|(p, q)| p != q).count();
    Ok(100.0 * diff as f64 / x.len() as f64)
}

/// Mean absolute difference as a percentage of the intensity range.
pub fn uaci(a: &GrayImage, b: &GrayImage, g: Granularity) -> Result<f64, StatsError> {
    check_sizes(a, b)?;
    let range = match g {
        Granularity::Byte => 255.0,
        Granularity::Symbol => 15.0,
    };
    let (x, y) = (units(a, g), units(b, g));
    let sum: u64 = x.iter().zip(&y).map(|(&p, &q)| p.abs_diff(q) as u64).sum();
    Ok(100.0 * sum as f64 / (range * x.len() as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Horizontal,
    Vertical,
    Diagonal,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Horizontal, Direction::Vertical, Direction::Diagonal];

    fn offset(self) -> (usize, usize) {
        match self {
            Direction::Horizontal => (1, 0),
            Direction::Vertical => (0, 1),
            Direction::Diagonal => (1, 1),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Horizontal => "horizontal",
            Direction::Vertical => "vertical",
            Direction::Diagonal => "diagonal",
        })
    }
}

/// Pearson correlation coefficient of paired samples.
pub fn pearson(pairs: &[(f64, f64)]) -> Result<f64, StatsError> {
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if pairs.is_empty() || sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// `n` adjacent pixel pairs drawn uniformly (with replacement) using a
/// generator seeded with `seed`.
pub fn sample_pairs(img: &GrayImage, dir: Direction, n: usize, seed: u64) -> Result<Vec<(f64, f64)>, StatsError> {
    let (dx, dy) = dir.offset();
    if img.width() <= dx || img.height() <= dy {
        return Err(StatsError::NoPairs(dir));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let x = rng.random_range(0..img.width() - dx);
            let y = rng.random_range(0..img.height() - dy);
            (img.get(x, y) as f64, img.get(x + dx, y + dy) as f64)
        })
        .collect())
}

pub fn adjacent_correlation(img: &GrayImage, dir: Direction, n: usize, seed: u64) -> Result<f64, StatsError> {
    pearson(&sample_pairs(img, dir, n, seed)?)
}

/// Applies the key permutation to every nibble of every pixel and nothing else.
pub fn permute_only(img: &GrayImage, perm: &KeyPermutation) -> GrayImage {
    let symbols: Vec<u8> = bytes_to_symbols(img.pixels()).symbols().iter().map(|&s| perm.apply(s)).collect();
    let pixels = symbols_to_bytes(&symbols).expect("even count of 4-bit symbols");
    GrayImage::new(img.width(), img.height(), pixels).expect("same dimensions")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SensitivityKind {
    Plaintext,
    Key,
}

/// Which pixel the plaintext experiment perturbs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PixelChoice {
    Random,
    Index(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensitivityResult {
    pub kind: SensitivityKind,
    pub npcr: f64,
    pub uaci: f64,
    /// Flipped pixel index or key bit position.
    pub position: usize,
    pub seed: u64,
}

/// One run of the plaintext or key sensitivity experiment.
///
/// The plaintext experiment flips the low bit of one pixel; the key
/// experiment flips one key bit, moving to the next position when the flip
/// gives a rejected key or one that derives identical parameters. Both
/// encryptions share the IV and whitening prefix drawn from `seed`.
pub fn sensitivity_experiment(
    kind: SensitivityKind,
    key: &KeyMaterial,
    ell: usize,
    img: &GrayImage,
    seed: u64,
    pixel: PixelChoice,
) -> Result<SensitivityResult, StatsError> {
    let field = FieldSpec::Gf16;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = derive_params(key, ell, field, Mode::SelfSynchronous).map_err(ContainerError::from)?;
    let iv = InitVector::random(&mut rng, field, ell);
    let whitening: Vec<u8> = (0..params.iota()).map(|_| rng.random_range(0..16)).collect();
    let encrypt = |p: &CipherParams, im: &GrayImage| -> Result<GrayImage, StatsError> {
        Ok(encrypt_image_with(p, key.prec(), im, &iv, &whitening)?.cipher_image()?)
    };
    let c1 = encrypt(&params, img)?;
    let (c2, position) = match kind {
        SensitivityKind::Plaintext => {
            let len = img.pixels().len();
            let index = match pixel {
                PixelChoice::Random => rng.random_range(0..len),
                PixelChoice::Index(i) if i < len => i,
                PixelChoice::Index(index) => return Err(StatsError::PixelIndex { index, len }),
            };
            let mut other = img.clone();
            other.pixels_mut()[index] ^= 1;
            (encrypt(&params, &other)?, index)
        }
        SensitivityKind::Key => {
            let bits = key.to_bits(ell);
            let start = rng.random_range(0..bits.len());
            let (pos, flipped) = (0..bits.len())
                .map(|k| (start + k) % bits.len())
                .find_map(|pos| {
                    let mut b = bits.clone();
                    b[pos] = !b[pos];
                    let p = KeyMaterial::from_bits(&b, ell).ok()?;
                    let derived = derive_params(&p, ell, field, Mode::SelfSynchronous).ok()?;
                    (derived != params).then_some((pos, derived))
                })
                .ok_or(StatsError::NoKeyFlip)?;
            (encrypt(&flipped, img)?, pos)
        }
    };
    Ok(SensitivityResult {
        kind,
        npcr: npcr(&c1, &c2, Granularity::Byte)?,
        uaci: uaci(&c1, &c2, Granularity::Byte)?,
        position,
        seed,
    })
}

/// One row of an analysis report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRecord {
    pub name: String,
    pub params: String,
    pub value: f64,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub records: Vec<MetricRecord>,
}

impl AnalysisReport {
    pub fn push(&mut self, name: &str, params: impl Into<String>, value: f64, seed: Option<u64>) {
        self.records.push(MetricRecord { name: name.to_string(), params: params.into(), value, seed });
    }

    pub fn get(&self, name: &str) -> Option<&MetricRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> Result<String, StatsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String, StatsError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn histogram_csv(bins: &[u64; 256]) -> Result<String, StatsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["value", "count"])?;
    for (v, c) in bins.iter().enumerate() {
        w.write_record([v.to_string(), c.to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, px: Vec<u8>) -> GrayImage {
        GrayImage::new(w, h, px).unwrap()
    }

    fn random_image(seed: u64, w: usize, h: usize) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        img(w, h, (0..w * h).map(|_| rng.random()).collect())
    }

    #[test]
    fn histogram_counts() {
        let h = histogram(&img(2, 2, vec![7; 4]));
        assert_eq!(h[7], 4);
        assert_eq!(h.iter().sum::<u64>(), 4);
        let r = random_image(1, 37, 11);
        assert_eq!(histogram(&r).iter().sum::<u64>(), 37 * 11);
    }

    #[test]
    fn entropy_examples() {
        let all_nibbles: Vec<u8> = (0..8u8).map(|i| (2 * i) << 4 | (2 * i + 1)).collect();
        assert_eq!(entropy(&all_nibbles, Width::Nibble).unwrap(), 4.0);
        assert_eq!(entropy(&[9; 100], Width::Byte).unwrap(), 0.0);
        assert_eq!(entropy(&[0x0f], Width::Bit).unwrap(), 1.0);
        let all: Vec<u8> = (0..=255).collect();
        assert_eq!(entropy(&all, Width::Byte).unwrap(), 8.0);
        assert!(matches!(entropy(&[], Width::Byte), Err(StatsError::EmptyData)));
        // p = (3/4, 1/4)
        let h = entropy(&[0x01, 0x00], Width::Nibble).unwrap();
        let expect = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        assert!((h - expect).abs() < 1e-12);
    }

    #[test]
    fn entropy_bounded_by_width() {
        for seed in 0..5 {
            let data = random_image(seed, 64, 1).into_pixels();
            for w in [Width::Bit, Width::Nibble, Width::Byte] {
                assert!(entropy(&data, w).unwrap() <= w.bits() as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn npcr_uaci_examples() {
        let a = img(2, 2, vec![0; 4]);
        let b = img(2, 2, vec![255; 4]);
        assert_eq!(npcr(&a, &a, Granularity::Byte).unwrap(), 0.0);
        assert_eq!(uaci(&a, &a, Granularity::Byte).unwrap(), 0.0);
        assert_eq!(npcr(&a, &b, Granularity::Byte).unwrap(), 100.0);
        assert_eq!(uaci(&a, &b, Granularity::Byte).unwrap(), 100.0);
        assert_eq!(uaci(&a, &b, Granularity::Symbol).unwrap(), 100.0);
        let c = img(2, 2, vec![0x0f, 0, 0, 0]);
        assert_eq!(npcr(&a, &c, Granularity::Byte).unwrap(), 25.0);
        assert_eq!(npcr(&a, &c, Granularity::Symbol).unwrap(), 12.5);
        assert!(matches!(npcr(&a, &img(1, 4, vec![0; 4]), Granularity::Byte), Err(StatsError::SizeMismatch(..))));
    }

    #[test]
    fn npcr_uaci_symmetric_and_bounded() {
        for seed in 0..5 {
            let (a, b) = (random_image(seed, 16, 16), random_image(seed + 100, 16, 16));
            for g in [Granularity::Byte, Granularity::Symbol] {
                let (n, u) = (npcr(&a, &b, g).unwrap(), uaci(&a, &b, g).unwrap());
                assert_eq!(n, npcr(&b, &a, g).unwrap());
                assert_eq!(u, uaci(&b, &a, g).unwrap());
                assert!((0.0..=100.0).contains(&n) && (0.0..=100.0).contains(&u));
            }
        }
    }

    #[test]
    fn random_images_npcr_matches_expectation() {
        let expect = 100.0 * (1.0 - 1.0 / 256.0);
        let mean: f64 =
            (0..10).map(|s| npcr(&random_image(s, 256, 256), &random_image(s + 50, 256, 256), Granularity::Byte).unwrap()).sum::<f64>() / 10.0;
        assert!((mean - expect).abs() < 0.2, "{mean}");
    }

    #[test]
    fn pearson_examples() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 256) as f64).collect();
        let same: Vec<_> = xs.iter().map(|&x| (x, x)).collect();
        let anti: Vec<_> = xs.iter().map(|&x| (x, 255.0 - x)).collect();
        assert!((pearson(&same).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&anti).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson(&[(1.0, 2.0), (1.0, 3.0)]), Err(StatsError::ZeroVariance)));
    }

    #[test]
    fn correlation_is_affine_invariant_and_deterministic() {
        let im = crate::image::gradient(64, 64).unwrap();
        let pairs = sample_pairs(&random_image(3, 64, 64), Direction::Diagonal, 500, 9).unwrap();
        let scaled: Vec<_> = pairs.iter().map(|&(x, y)| (3.0 * x + 7.0, 3.0 * y + 7.0)).collect();
        assert!((pearson(&pairs).unwrap() - pearson(&scaled).unwrap()).abs() < 1e-12);
        for d in Direction::ALL {
            assert_eq!(adjacent_correlation(&im, d, 2500, 5).unwrap(), adjacent_correlation(&im, d, 2500, 5).unwrap());
            assert!(adjacent_correlation(&im, d, 2500, 5).unwrap() > 0.95);
        }
        assert!(matches!(adjacent_correlation(&img(1, 3, vec![1, 2, 3]), Direction::Horizontal, 10, 0), Err(StatsError::NoPairs(_))));
    }

    #[test]
    fn report_serialization() {
        let mut r = AnalysisReport::default();
        r.push("npcr", "granularity=byte", 99.6, None);
        r.push("correlation", "direction=horizontal;n=2500", 0.01, Some(7));
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().next().unwrap(), "name,params,value,seed");
        assert_eq!(csv.lines().nth(2).unwrap(), "correlation,direction=horizontal;n=2500,0.01,7");
        let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(json["records"][1]["seed"], 7);
        let h = histogram_csv(&histogram(&img(1, 1, vec![3]))).unwrap();
        assert_eq!(h.lines().count(), 257);
        assert_eq!(h.lines().nth(4).unwrap(), "3,1");
    }

    #[test]
    fn sensitivity_is_deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let key = KeyMaterial::random(&mut rng, 16, 6, 8).unwrap();
        let im = random_image(5, 16, 16);
        let a = sensitivity_experiment(SensitivityKind::Key, &key, 8, &im, 11, PixelChoice::Random).unwrap();
        let b = sensitivity_experiment(SensitivityKind::Key, &key, 8, &im, 11, PixelChoice::Random).unwrap();
        assert_eq!(a, b);
        let p = sensitivity_experiment(SensitivityKind::Plaintext, &key, 8, &im, 11, PixelChoice::Index(0)).unwrap();
        assert!(p.npcr > 95.0, "{}", p.npcr);
        // flipping the last pixel only disturbs the final cipher vectors
        let last = sensitivity_experiment(SensitivityKind::Plaintext, &key, 8, &im, 11, PixelChoice::Index(255)).unwrap();
        assert!(last.npcr < 5.0);
    }
}

//! Edit-operation and time-warping measures over integer token sequences.
//!
//! Every function here is a pure dynamic program over two slices of state
//! codes. Distances accept empty inputs; normalized similarities reject the
//! both-empty case because their denominators vanish. DTW needs at least one
//! token on each side.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single encoded state.
pub type Token = u32;

/// Jaro-Winkler prefix scale.
pub const WINKLER_PREFIX_SCALE: f64 = 0.1;
/// Longest common prefix credited by Jaro-Winkler.
pub const WINKLER_MAX_PREFIX: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasureError {
    #[error("{kind} is undefined when both sequences are empty")]
    BothEmpty { kind: MeasureKind },
    #[error("{kind} requires both sequences to be non-empty")]
    EmptyInput { kind: MeasureKind },
    #[error("unknown measure `{0}`")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Distance,
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Levenshtein,
    LevenshteinRatio,
    Jaro,
    JaroWinkler,
    LcsSimilarity,
    LcSubstringSimilarity,
    Damerau,
    DamerauSimilarity,
    Dtw,
    DtwSimilarity,
}

impl MeasureKind {
    /// All ten measures in report order.
    pub const ALL: [MeasureKind; 10] = [
        MeasureKind::Levenshtein,
        MeasureKind::LevenshteinRatio,
        MeasureKind::Jaro,
        MeasureKind::JaroWinkler,
        MeasureKind::LcsSimilarity,
        MeasureKind::LcSubstringSimilarity,
        MeasureKind::Damerau,
        MeasureKind::DamerauSimilarity,
        MeasureKind::Dtw,
        MeasureKind::DtwSimilarity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Levenshtein => "levenshtein",
            MeasureKind::LevenshteinRatio => "levenshtein_ratio",
            MeasureKind::Jaro => "jaro",
            MeasureKind::JaroWinkler => "jaro_winkler",
            MeasureKind::LcsSimilarity => "lcs_similarity",
            MeasureKind::LcSubstringSimilarity => "lc_substring_similarity",
            MeasureKind::Damerau => "damerau",
            MeasureKind::DamerauSimilarity => "damerau_similarity",
            MeasureKind::Dtw => "dtw",
            MeasureKind::DtwSimilarity => "dtw_similarity",
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            MeasureKind::Levenshtein | MeasureKind::Damerau | MeasureKind::Dtw => {
                Orientation::Distance
            }
            _ => Orientation::Similarity,
        }
    }

    /// Whether `compute_measure` accepts this pair of lengths.
    pub fn accepts(self, len_a: usize, len_b: usize) -> bool {
        match self {
            MeasureKind::Levenshtein | MeasureKind::Jaro | MeasureKind::JaroWinkler => true,
            MeasureKind::Damerau => true,
            MeasureKind::Dtw | MeasureKind::DtwSimilarity => len_a > 0 && len_b > 0,
            _ => len_a + len_b > 0,
        }
    }

    /// Whether `value` lies in the range this measure can produce.
    pub fn in_range(self, value: f64) -> bool {
        match self.orientation() {
            Orientation::Similarity => (0.0..=1.0).contains(&value),
            Orientation::Distance => value.is_finite() && value >= 0.0,
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = MeasureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let kind = match key.as_str() {
            "levenshtein" | "leven" => MeasureKind::Levenshtein,
            "levenshtein_ratio" | "leven_ratio" => MeasureKind::LevenshteinRatio,
            "jaro" => MeasureKind::Jaro,
            "jaro_winkler" => MeasureKind::JaroWinkler,
            "lcs_similarity" | "lc_subsequence" | "lcs" => MeasureKind::LcsSimilarity,
            "lc_substring_similarity" | "lc_substring" => MeasureKind::LcSubstringSimilarity,
            "damerau" => MeasureKind::Damerau,
            "damerau_similarity" => MeasureKind::DamerauSimilarity,
            "dtw" => MeasureKind::Dtw,
            "dtw_similarity" | "dtw_sim" => MeasureKind::DtwSimilarity,
            _ => return Err(MeasureError::UnknownKind(s.to_string())),
        };
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureValue {
    pub kind: MeasureKind,
    pub value: f64,
}

impl MeasureValue {
    pub fn orientation(&self) -> Orientation {
        self.kind.orientation()
    }
}

pub fn levenshtein(a: &[Token], b: &[Token]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

pub fn levenshtein_ratio(a: &[Token], b: &[Token]) -> Result<f64, MeasureError> {
    let total = a.len() + b.len();
    if total == 0 {
        return Err(MeasureError::BothEmpty {
            kind: MeasureKind::LevenshteinRatio,
        });
    }
    let d = levenshtein(a, b);
    Ok((total - d) as f64 / total as f64)
}

pub fn jaro(a: &[Token], b: &[Token]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);

    let mut a_matched = vec![false; a.len()];
    let mut b_matched = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, &x) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_matched[j] && b[j] == x {
                a_matched[i] = true;
                b_matched[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }

    // Walk both matched subsequences in order and count disagreements.
    let mut out_of_order = 0usize;
    let mut b_iter = b.iter().zip(&b_matched).filter(|(_, &m)| m).map(|(t, _)| t);
    for (x, _) in a.iter().zip(&a_matched).filter(|(_, &m)| m) {
        if let Some(y) = b_iter.next() {
            if x != y {
                out_of_order += 1;
            }
        }
    }

    let m = matches as f64;
    let t = out_of_order as f64 / 2.0;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Length of the common prefix, capped at [`WINKLER_MAX_PREFIX`].
pub fn common_prefix_len(a: &[Token], b: &[Token]) -> usize {
    a.iter()
        .zip(b)
        .take(WINKLER_MAX_PREFIX)
        .take_while(|(x, y)| x == y)
        .count()
}

pub fn jaro_winkler(a: &[Token], b: &[Token]) -> f64 {
    let sim = jaro(a, b);
    let prefix = common_prefix_len(a, b) as f64;
    sim + prefix * WINKLER_PREFIX_SCALE * (1.0 - sim)
}

pub fn lcs_length(a: &[Token], b: &[Token]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for &x in a {
        for (j, &y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

pub fn lcs_similarity(a: &[Token], b: &[Token]) -> Result<f64, MeasureError> {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return Err(MeasureError::BothEmpty {
            kind: MeasureKind::LcsSimilarity,
        });
    }
    Ok(lcs_length(a, b) as f64 / longest as f64)
}

pub fn lc_substring_length(a: &[Token], b: &[Token]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &x in a {
        for (j, &y) in b.iter().enumerate() {
            curr[j + 1] = if x == y { prev[j] + 1 } else { 0 };
            best = best.max(curr[j + 1]);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    best
}

pub fn lc_substring_similarity(a: &[Token], b: &[Token]) -> Result<f64, MeasureError> {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return Err(MeasureError::BothEmpty {
            kind: MeasureKind::LcSubstringSimilarity,
        });
    }
    Ok(lc_substring_length(a, b) as f64 / longest as f64)
}

/// Restricted Damerau-Levenshtein (optimal string alignment): adjacent
/// transpositions cost 1, and no substring is edited twice.
pub fn damerau(a: &[Token], b: &[Token]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let n = b.len();
    let mut before: Vec<usize> = vec![0; n + 1];
    let mut prev: Vec<usize> = (0..=n).collect();
    let mut curr = vec![0; n + 1];
    for i in 1..=a.len() {
        curr[0] = i;
        for j in 1..=n {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (prev[j] + 1).min(curr[j - 1] + 1).min(prev[j - 1] + cost);
            if i >= 2 && j >= 2 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(before[j - 2] + 1);
            }
            curr[j] = best;
        }
        // rotate: before <- prev <- curr
        std::mem::swap(&mut before, &mut prev);
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[n]
}

pub fn damerau_similarity(a: &[Token], b: &[Token]) -> Result<f64, MeasureError> {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return Err(MeasureError::BothEmpty {
            kind: MeasureKind::DamerauSimilarity,
        });
    }
    let d = damerau(a, b);
    debug_assert!(d <= longest, "OSA distance exceeds the longer length");
    Ok(1.0 - d as f64 / longest as f64)
}

/// Unconstrained DTW with local cost `|a_i - b_j|` on the integer codes.
pub fn dtw(a: &[Token], b: &[Token]) -> Result<f64, MeasureError> {
    if a.is_empty() || b.is_empty() {
        return Err(MeasureError::EmptyInput {
            kind: MeasureKind::Dtw,
        });
    }
    let cost = |x: Token, y: Token| f64::from(x.abs_diff(y));
    let n = b.len();
    let mut prev = vec![f64::INFINITY; n + 1];
    let mut curr = vec![f64::INFINITY; n + 1];
    prev[0] = 0.0;
    for &x in a {
        curr[0] = f64::INFINITY;
        for j in 1..=n {
            let best = prev[j].min(curr[j - 1]).min(prev[j - 1]);
            curr[j] = cost(x, b[j - 1]) + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[n])
}

pub fn dtw_similarity(a: &[Token], b: &[Token]) -> Result<f64, MeasureError> {
    let d = dtw(a, b).map_err(|_| MeasureError::EmptyInput {
        kind: MeasureKind::DtwSimilarity,
    })?;
    Ok(1.0 / (1.0 + d))
}

/// Uniform dispatch over all ten measures.
pub fn compute_measure(
    kind: MeasureKind,
    a: &[Token],
    b: &[Token],
) -> Result<MeasureValue, MeasureError> {
    let value = match kind {
        MeasureKind::Levenshtein => levenshtein(a, b) as f64,
        MeasureKind::LevenshteinRatio => levenshtein_ratio(a, b)?,
        MeasureKind::Jaro => jaro(a, b),
        MeasureKind::JaroWinkler => jaro_winkler(a, b),
        MeasureKind::LcsSimilarity => lcs_similarity(a, b)?,
        MeasureKind::LcSubstringSimilarity => lc_substring_similarity(a, b)?,
        MeasureKind::Damerau => damerau(a, b) as f64,
        MeasureKind::DamerauSimilarity => damerau_similarity(a, b)?,
        MeasureKind::Dtw => dtw(a, b)?,
        MeasureKind::DtwSimilarity => dtw_similarity(a, b)?,
    };
    Ok(MeasureValue { kind, value })
}

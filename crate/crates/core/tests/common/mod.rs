//! Brute-force reference implementations used only by tests.
//!
//! Each oracle follows the textbook definition directly (recursion,
//! enumeration) and shares no code with the library's dynamic programs.

#![allow(dead_code)]

use std::collections::HashMap;

use trajdrift::seqmeasure::{MeasureKind, Token};

/// Every sequence over `0..alphabet` with length at most `max_len`.
pub fn all_sequences(alphabet: Token, max_len: usize) -> Vec<Vec<Token>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for t in 0..alphabet {
                let mut e: Vec<Token> = s.clone();
                e.push(t);
                next.push(e);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Edit distance from the three-way recursion on suffixes.
pub fn levenshtein(a: &[Token], b: &[Token]) -> usize {
    fn go(a: &[Token], b: &[Token], memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        let key = (a.len(), b.len());
        if let Some(&v) = memo.get(&key) {
            return v;
        }
        let v = (go(&a[1..], b, memo) + 1)
            .min(go(a, &b[1..], memo) + 1)
            .min(go(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]));
        memo.insert(key, v);
        v
    }
    go(a, b, &mut HashMap::new())
}

/// Optimal string alignment distance: the edit recursion plus a swap of
/// the two leading tokens, applied to untouched prefixes only.
pub fn osa(a: &[Token], b: &[Token]) -> usize {
    fn go(a: &[Token], b: &[Token], memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        let key = (a.len(), b.len());
        if let Some(&v) = memo.get(&key) {
            return v;
        }
        let mut v = (go(&a[1..], b, memo) + 1)
            .min(go(a, &b[1..], memo) + 1)
            .min(go(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]));
        if a.len() >= 2 && b.len() >= 2 && a[0] == b[1] && a[1] == b[0] {
            v = v.min(go(&a[2..], &b[2..], memo) + 1);
        }
        memo.insert(key, v);
        v
    }
    go(a, b, &mut HashMap::new())
}

fn is_subsequence(needle: &[Token], hay: &[Token]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|x| it.any(|y| y == x))
}

/// Longest common subsequence by trying every subsequence of `a`.
pub fn lcs(a: &[Token], b: &[Token]) -> usize {
    assert!(a.len() < 20, "subset enumeration is exponential");
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let picked: Vec<Token> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).collect();
        if picked.len() > best && is_subsequence(&picked, b) {
            best = picked.len();
        }
    }
    best
}

/// Longest common contiguous run by trying every substring of `a`.
pub fn lc_substring(a: &[Token], b: &[Token]) -> usize {
    let mut best = 0;
    for i in 0..a.len() {
        for j in i + 1..=a.len() {
            let sub = &a[i..j];
            if sub.len() > best && b.windows(sub.len()).any(|w| w == sub) {
                best = sub.len();
            }
        }
    }
    best
}

/// Minimum-cost warping path found by walking every monotone path from the
/// first pair to the last. Branches whose partial cost already reaches the
/// best complete path are cut; costs are non-negative so the minimum is exact.
pub fn dtw(a: &[Token], b: &[Token]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    fn walk(a: &[Token], b: &[Token], i: usize, j: usize, acc: u64, best: &mut u64) {
        let acc = acc + u64::from(a[i].abs_diff(b[j]));
        if acc >= *best {
            return;
        }
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = acc;
            return;
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
    }
    let mut best = u64::MAX;
    walk(a, b, 0, 0, 0, &mut best);
    best as f64
}

/// Jaro similarity written from the definition: matches within the window
/// claimed left to right, transpositions as half the mismatched positions
/// between the two ordered match lists.
pub fn jaro(a: &[Token], b: &[Token]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let reach = (a.len().max(b.len()) / 2).saturating_sub(1) as isize;
    let mut taken = vec![false; b.len()];
    let mut a_order = Vec::new();
    let mut b_positions = Vec::new();
    for (i, x) in a.iter().enumerate() {
        let found = (0..b.len()).find(|&j| !taken[j] && (j as isize - i as isize).abs() <= reach && b[j] == *x);
        if let Some(j) = found {
            taken[j] = true;
            a_order.push(*x);
            b_positions.push(j);
        }
    }
    let m = a_order.len();
    if m == 0 {
        return 0.0;
    }
    b_positions.sort_unstable();
    let b_order: Vec<Token> = b_positions.iter().map(|&j| b[j]).collect();
    let half = a_order.iter().zip(&b_order).filter(|(x, y)| x != y).count();
    let (m, t) = (m as f64, half as f64 / 2.0);
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

pub fn jaro_winkler(a: &[Token], b: &[Token]) -> f64 {
    let j = jaro(a, b);
    let mut prefix = 0;
    while prefix < 4 && prefix < a.len() && prefix < b.len() && a[prefix] == b[prefix] {
        prefix += 1;
    }
    j + prefix as f64 * 0.1 * (1.0 - j)
}

/// Oracle value for any measure, or `None` where the measure is undefined.
pub fn measure(kind: MeasureKind, a: &[Token], b: &[Token]) -> Option<f64> {
    let longest = a.len().max(b.len()) as f64;
    let total = (a.len() + b.len()) as f64;
    let both_empty = a.is_empty() && b.is_empty();
    let either_empty = a.is_empty() || b.is_empty();
    match kind {
        MeasureKind::Levenshtein => Some(levenshtein(a, b) as f64),
        MeasureKind::LevenshteinRatio => (!both_empty).then(|| (total - levenshtein(a, b) as f64) / total),
        MeasureKind::Jaro => Some(jaro(a, b)),
        MeasureKind::JaroWinkler => Some(jaro_winkler(a, b)),
        MeasureKind::LcsSimilarity => (!both_empty).then(|| lcs(a, b) as f64 / longest),
        MeasureKind::LcSubstringSimilarity => (!both_empty).then(|| lc_substring(a, b) as f64 / longest),
        MeasureKind::Damerau => Some(osa(a, b) as f64),
        MeasureKind::DamerauSimilarity => (!both_empty).then(|| 1.0 - osa(a, b) as f64 / longest),
        MeasureKind::Dtw => (!either_empty).then(|| dtw(a, b)),
        MeasureKind::DtwSimilarity => (!either_empty).then(|| 1.0 / (1.0 + dtw(a, b))),
    }
}

/// Integer-valued measures must match exactly; the rest within `1e-12`.
pub fn is_integer_measure(kind: MeasureKind) -> bool {
    matches!(kind, MeasureKind::Levenshtein | MeasureKind::Damerau | MeasureKind::Dtw)
}

/// Mixed-radix packing with the first dimension least significant.
pub fn mixed_radix(bins: [usize; 4], base: usize) -> u64 {
    bins.iter().rev().fold(0u64, |acc, &b| acc * base as u64 + b as u64)
}

/// Value table printed for the 5x5 maze (row-major, goal shown as 1).
pub const MAZE_VALUES: [[f64; 5]; 5] = [
    [0.46, 0.52, 0.58, 0.65, 0.73],
    [0.51, 0.58, 0.65, 0.74, 0.84],
    [0.57, 0.65, 0.74, 0.85, 0.96],
    [0.62, 0.71, 0.82, 0.95, 1.00],
    [0.59, 0.67, 0.76, 0.86, 0.96],
];

/// Printed policy arrows; `'G'` marks the goal.
pub const MAZE_POLICY: [[char; 5]; 5] = [
    ['→', '→', '→', '↓', '↓'],
    ['→', '→', '→', '↓', '↓'],
    ['→', '→', '→', '→', '↓'],
    ['→', '→', '→', '→', 'G'],
    ['→', '→', '→', '→', '↑'],
];

pub const MAZE_OPTIMAL_PATH: [Token; 8] = [0, 1, 2, 3, 8, 13, 14, 19];

/// Compares `kind` against its oracle on every pair of sequences up to
/// length 6 over three symbols; returns a description of each disagreement.
pub fn exhaustive_mismatches(kind: MeasureKind) -> Vec<String> {
    use rayon::prelude::*;
    use trajdrift::seqmeasure::compute_measure;

    let seqs = all_sequences(3, 6);
    seqs.par_iter()
        .flat_map_iter(|a| {
            seqs.iter().filter_map(move |b| {
                let got = compute_measure(kind, a, b).ok().map(|v| v.value);
                let want = measure(kind, a, b);
                let agree = match (got, want) {
                    (None, None) => true,
                    (Some(g), Some(w)) if is_integer_measure(kind) => g == w,
                    (Some(g), Some(w)) => (g - w).abs() <= 1e-12,
                    _ => false,
                };
                (!agree).then(|| format!("{kind} {a:?} {b:?}: got {got:?}, oracle {want:?}"))
            })
        })
        .collect()
}

/// Printed confusion counts `(tp, fp, tn, fn)` and metrics
/// `(accuracy, precision, recall, f1)` for the maze evaluation.
pub const MAZE_METRICS: [(&str, [u64; 4], [f64; 4]); 10] = [
    ("levenshtein", [7, 0, 10, 1], [0.944, 1.000, 0.875, 0.933]),
    ("levenshtein ratio", [8, 0, 10, 0], [1.000, 1.000, 1.000, 1.000]),
    ("jaro", [5, 0, 10, 3], [0.833, 1.000, 0.625, 0.769]),
    ("jaro-winkler", [8, 0, 10, 0], [1.000, 1.000, 1.000, 1.000]),
    ("lc subsequence", [6, 0, 10, 2], [0.889, 1.000, 0.750, 0.857]),
    ("lc substring", [7, 0, 10, 1], [0.944, 1.000, 0.875, 0.933]),
    ("damerau", [7, 0, 10, 1], [0.944, 1.000, 0.875, 0.933]),
    ("damerau similarity", [7, 0, 10, 1], [0.944, 1.000, 0.875, 0.933]),
    ("dtw", [6, 0, 10, 2], [0.889, 1.000, 0.750, 0.857]),
    ("dtw similarity", [8, 0, 10, 0], [1.000, 1.000, 1.000, 1.000]),
];

/// Same layout for the cart-pole evaluation.
pub const CARTPOLE_METRICS: [(&str, [u64; 4], [f64; 4]); 10] = [
    ("levenshtein", [8, 0, 14, 6], [0.786, 1.000, 0.571, 0.727]),
    ("levenshtein ratio", [12, 0, 14, 2], [0.929, 1.000, 0.857, 0.923]),
    ("jaro", [9, 0, 14, 5], [0.821, 1.000, 0.643, 0.783]),
    ("jaro-winkler", [10, 0, 14, 4], [0.857, 1.000, 0.714, 0.833]),
    ("lc subsequence", [11, 0, 14, 3], [0.893, 1.000, 0.786, 0.880]),
    ("lc substring", [10, 1, 14, 3], [0.857, 0.909, 0.769, 0.833]),
    ("damerau", [9, 0, 14, 5], [0.821, 1.000, 0.643, 0.783]),
    ("damerau similarity", [14, 0, 14, 0], [1.000, 1.000, 1.000, 1.000]),
    ("dtw", [11, 0, 14, 3], [0.893, 1.000, 0.786, 0.880]),
    ("dtw similarity", [14, 0, 14, 0], [1.000, 1.000, 1.000, 1.000]),
];

/// Rows whose computed metrics do not print as the table's 3-decimal values.
pub fn metric_mismatches(table: &[(&str, [u64; 4], [f64; 4])]) -> Vec<String> {
    use trajdrift::stats::{confusion_metrics, ConfusionCounts};
    let mut bad = Vec::new();
    for (name, [tp, fp, tn, fn_], printed) in table {
        let m = confusion_metrics(&ConfusionCounts::new(*tp, *fp, *tn, *fn_)).unwrap();
        let got = [m.accuracy, m.precision.value, m.recall.value, m.f1.value];
        for (g, p) in got.iter().zip(printed) {
            if format!("{g:.3}") != format!("{p:.3}") {
                bad.push(format!("{name}: computed {g:.3}, printed {p:.3}"));
            }
        }
    }
    bad
}

/// Welch statistic from statrs descriptive statistics and its Student's t
/// survival function; `(t, df, p)`.
pub fn reference_welch(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::statistics::Statistics;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (a.variance() / na, b.variance() / nb);
    let t = (a.mean() - b.mean()) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    (t, df, 2.0 * dist.sf(t.abs()))
}

/// `count` sample pairs with sizes in 5..=5000 and assorted means and spreads.
pub fn random_sample_pairs(count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
                let n = rng.random_range(5..=5000);
                let mean = rng.random_range(-10.0..10.0);
                let sd = rng.random_range(0.1..5.0);
                let normal = Normal::new(mean, sd).unwrap();
                (0..n).map(|_| normal.sample(rng)).collect::<Vec<f64>>()
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            (a, b)
        })
        .collect()
}

/// Largest absolute disagreement in `(t, df, p)` against the reference.
pub fn welch_max_errors(pairs: &[(Vec<f64>, Vec<f64>)]) -> [f64; 3] {
    let mut worst = [0.0f64; 3];
    for (a, b) in pairs {
        let got = trajdrift::stats::welch_t_test(a, b, 0.05).unwrap();
        let (t, df, p) = reference_welch(a, b);
        worst[0] = worst[0].max((got.t - t).abs());
        worst[1] = worst[1].max((got.df - df).abs());
        worst[2] = worst[2].max((got.p - p).abs());
    }
    worst
}

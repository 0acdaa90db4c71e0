//! Brute-force reference implementations, written for clarity over speed and
//! sharing no code with the library.

use rust_stemmers::{Algorithm, Stemmer};

/// Full `(n+1) x (m+1)` LCS table.
pub fn lcs_table(a: &[String], b: &[String]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

pub fn rouge_l(a: &[String], b: &[String]) -> f64 {
    let l = lcs_table(a, b) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, r) = (l / a.len() as f64, l / b.len() as f64);
    2.0 * p * r / (p + r)
}

/// Precision at every positive, with the rank of item `i` counted as one
/// plus the items that beat it (higher score, or equal score and earlier).
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let rank = |i: usize| {
        1 + (0..scores.len())
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
            .count()
    };
    let pos: Vec<usize> = (0..scores.len()).filter(|&i| positive[i]).collect();
    if pos.is_empty() {
        return None;
    }
    let sum: f64 = pos
        .iter()
        .map(|&i| {
            let r = rank(i);
            let hits = pos.iter().filter(|&&k| rank(k) <= r).count();
            hits as f64 / r as f64
        })
        .sum();
    Some(sum / pos.len() as f64)
}

/// Every positive/negative pair: 1 if ordered right, 1/2 if tied.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut credit2 = 0u64;
    let mut pairs = 0u64;
    for i in (0..scores.len()).filter(|&i| positive[i]) {
        for j in (0..scores.len()).filter(|&j| !positive[j]) {
            pairs += 1;
            credit2 += if scores[i] > scores[j] {
                2
            } else if scores[i] == scores[j] {
                1
            } else {
                0
            };
        }
    }
    (pairs > 0).then(|| credit2 as f64 / (2 * pairs) as f64)
}

pub fn stems(tokens: &[String]) -> Vec<String> {
    let s = Stemmer::create(Algorithm::English);
    tokens.iter().map(|t| s.stem(t).into_owned()).collect()
}

/// Every partial matching of candidate to reference positions with equal
/// stems: returns `(max matches, min chunks among maximal matchings)`.
pub fn meteor_exhaustive(cand: &[String], reference: &[String]) -> (usize, usize) {
    let cs = stems(cand);
    let rs = stems(reference);
    let mut best = (0usize, usize::MAX);
    let mut assign: Vec<Option<usize>> = vec![None; cand.len()];
    fn rec(
        i: usize,
        cs: &[String],
        rs: &[String],
        used: &mut Vec<bool>,
        assign: &mut Vec<Option<usize>>,
        best: &mut (usize, usize),
    ) {
        if i == cs.len() {
            let pairs: Vec<(usize, usize)> =
                assign.iter().enumerate().filter_map(|(i, a)| a.map(|j| (i, j))).collect();
            let m = pairs.len();
            let chunks = (0..m).filter(|&k| k == 0 || !(pairs[k].0 == pairs[k - 1].0 + 1 && pairs[k].1 == pairs[k - 1].1 + 1)).count();
            if m > best.0 || (m == best.0 && chunks < best.1) {
                *best = (m, chunks);
            }
            return;
        }
        rec(i + 1, cs, rs, used, assign, best);
        for j in 0..rs.len() {
            if !used[j] && cs[i] == rs[j] {
                used[j] = true;
                assign[i] = Some(j);
                rec(i + 1, cs, rs, used, assign, best);
                assign[i] = None;
                used[j] = false;
            }
        }
    }
    rec(0, &cs, &rs, &mut vec![false; rs.len()], &mut assign, &mut best);
    if best.0 == 0 {
        (0, 0)
    } else {
        best
    }
}

pub fn meteor_score(len_c: usize, len_r: usize, m: usize, chunks: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / len_c as f64;
    let r = m as f64 / len_r as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    f * (1.0 - 0.5 * (chunks as f64 / m as f64).powi(3))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / (na * nb)
}

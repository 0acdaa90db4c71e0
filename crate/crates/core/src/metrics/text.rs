use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::MetricsError;
use crate::tokenize::tokenize;

fn tokens(text: &str) -> Result<Vec<String>, MetricsError> {
    let t = tokenize(text);
    if t.is_empty() {
        Err(MetricsError::EmptyText(text.chars().take(40).collect()))
    } else {
        Ok(t)
    }
}

/// Length of the longest common subsequence, one DP row at a time.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l_tokens<T: PartialEq>(cand: &[T], reference: &[T]) -> f64 {
    let l = lcs_len(cand, reference);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / cand.len() as f64;
    let r = l as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

pub fn rouge_l_f1(candidate: &str, reference: &str) -> Result<f64, MetricsError> {
    Ok(rouge_l_tokens(&tokens(candidate)?, &tokens(reference)?))
}

/// Search nodes allowed per METEOR alignment before settling for the best
/// alignment found so far. Short sentences never get near it.
pub const METEOR_NODE_BUDGET: usize = 200_000;

/// A minimum-chunk alignment and how it was found.
#[derive(Clone, Debug, PartialEq)]
pub struct MeteorAlignment {
    /// `(candidate index, reference index)`, ascending in the candidate.
    pub pairs: Vec<(usize, usize)>,
    pub chunks: usize,
    pub exact: usize,
    /// False if the node budget ran out before the search finished.
    pub proven_optimal: bool,
}

/// Token classes: two tokens can align iff their stems agree (equal tokens
/// always do).
fn stem_classes(cand: &[String], reference: &[String]) -> (Vec<usize>, Vec<usize>) {
    let stemmer = Stemmer::create(Algorithm::English);
    let mut names: Vec<String> = Vec::new();
    let mut class = |t: &String| {
        let s = stemmer.stem(t).into_owned();
        match names.iter().position(|n| *n == s) {
            Some(i) => i,
            None => {
                names.push(s);
                names.len() - 1
            }
        }
    };
    let c = cand.iter().map(&mut class).collect();
    let r = reference.iter().map(&mut class).collect();
    (c, r)
}

struct Search<'a> {
    cand: &'a [String],
    reference: &'a [String],
    cc: Vec<usize>,
    rc: Vec<usize>,
    /// Matches still owed per class.
    quota: Vec<usize>,
    /// Candidate tokens of each class at or after the current position.
    remaining: Vec<usize>,
    used: Vec<bool>,
    pairs: Vec<(usize, usize)>,
    best: Option<(usize, usize, Vec<(usize, usize)>)>,
    nodes: usize,
    exhausted: bool,
}

impl Search<'_> {
    fn better(&self, chunks: usize, exact: usize) -> bool {
        match &self.best {
            None => true,
            Some((bc, be, _)) => chunks < *bc || (chunks == *bc && exact > *be),
        }
    }

    fn go(&mut self, i: usize, chunks: usize, exact: usize) {
        self.nodes += 1;
        if self.nodes > METEOR_NODE_BUDGET {
            self.exhausted = true;
            return;
        }
        if let Some((bc, _, _)) = &self.best {
            if chunks > *bc {
                return;
            }
        }
        if i == self.cand.len() {
            if self.better(chunks, exact) {
                self.best = Some((chunks, exact, self.pairs.clone()));
            }
            return;
        }
        let c = self.cc[i];
        self.remaining[c] -= 1;
        if self.quota[c] > 0 {
            // continuing the previous chunk first finds good bounds early
            let cont = self
                .pairs
                .last()
                .filter(|&&(pi, _)| pi + 1 == i)
                .map(|&(_, pj)| pj + 1);
            let mut order: Vec<usize> = Vec::new();
            if let Some(j) = cont {
                if j < self.reference.len() {
                    order.push(j);
                }
            }
            order.extend((0..self.reference.len()).filter(|&j| Some(j) != cont));
            for j in order {
                if self.used[j] || self.rc[j] != c {
                    continue;
                }
                let extends = cont == Some(j);
                let is_exact = usize::from(self.cand[i] == self.reference[j]);
                self.used[j] = true;
                self.quota[c] -= 1;
                self.pairs.push((i, j));
                self.go(i + 1, chunks + usize::from(!extends), exact + is_exact);
                self.pairs.pop();
                self.quota[c] += 1;
                self.used[j] = false;
                if self.exhausted {
                    break;
                }
            }
        }
        // leaving token i unmatched is only allowed if the quota can still be met
        if !self.exhausted && self.remaining[c] >= self.quota[c] {
            self.go(i + 1, chunks, exact);
        }
        self.remaining[c] += 1;
    }
}

/// Maximum matching under exact-or-stem equality with the fewest chunks;
/// among those, the most exact matches.
pub fn meteor_align(cand: &[String], reference: &[String]) -> MeteorAlignment {
    let (cc, rc) = stem_classes(cand, reference);
    let k = cc.iter().chain(&rc).copied().max().map_or(0, |m| m + 1);
    let mut quota = vec![0usize; k];
    let mut remaining = vec![0usize; k];
    for c in 0..k {
        let nc = cc.iter().filter(|&&x| x == c).count();
        let nr = rc.iter().filter(|&&x| x == c).count();
        quota[c] = nc.min(nr);
        remaining[c] = nc;
    }
    let mut s = Search {
        cand,
        reference,
        cc,
        rc,
        quota,
        remaining,
        used: vec![false; reference.len()],
        pairs: Vec::new(),
        best: None,
        nodes: 0,
        exhausted: false,
    };
    s.go(0, 0, 0);
    let proven_optimal = !s.exhausted;
    let (chunks, exact, pairs) = match s.best.take() {
        Some(b) => b,
        None => greedy_alignment(&s),
    };
    MeteorAlignment {
        pairs,
        chunks,
        exact,
        proven_optimal,
    }
}

/// Left-to-right first-fit alignment, used only if the budget ran out before
/// any complete alignment was reached.
fn greedy_alignment(s: &Search<'_>) -> (usize, usize, Vec<(usize, usize)>) {
    let mut used = vec![false; s.reference.len()];
    let mut quota = s.quota.clone();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..s.cand.len() {
        let c = s.cc[i];
        if quota[c] == 0 {
            continue;
        }
        let prefer = pairs.last().filter(|&&(pi, _)| pi + 1 == i).map(|&(_, pj)| pj + 1);
        let pick = prefer
            .filter(|&j| j < used.len() && !used[j] && s.rc[j] == c)
            .or_else(|| (0..used.len()).find(|&j| !used[j] && s.rc[j] == c));
        if let Some(j) = pick {
            used[j] = true;
            quota[c] -= 1;
            pairs.push((i, j));
        }
    }
    let exact = pairs.iter().filter(|&&(i, j)| s.cand[i] == s.reference[j]).count();
    (count_chunks(&pairs), exact, pairs)
}

/// Chunks in an alignment sorted by candidate index: a new chunk starts
/// wherever the next pair is not `(i + 1, j + 1)`.
pub fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    pairs
        .iter()
        .enumerate()
        .filter(|&(k, &(i, j))| k == 0 || pairs[k - 1] != (i.wrapping_sub(1), j.wrapping_sub(1)))
        .count()
}

pub fn meteor_tokens(cand: &[String], reference: &[String]) -> f64 {
    let a = meteor_align(cand, reference);
    let m = a.pairs.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (a.chunks as f64 / m as f64).powi(3);
    f_mean * (1.0 - penalty)
}

pub fn meteor(candidate: &str, reference: &str) -> Result<f64, MetricsError> {
    Ok(meteor_tokens(&tokens(candidate)?, &tokens(reference)?))
}

/// Maps tokens to one finite vector each.
pub trait TokenEmbedder: Send + Sync {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, MetricsError>;
}

/// Deterministic test provider: each distinct token gets a vector with
/// entries uniform in `[0, 1)` drawn from a hash of `(seed, token)`. Entries
/// are non-negative, so every cosine and every score lands in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 64, seed: 0 }
    }
}

impl TokenEmbedder for HashEmbedder {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, MetricsError> {
        if self.dim == 0 {
            return Err(MetricsError::Provider("zero embedding dimension".into()));
        }
        Ok(tokens
            .iter()
            .map(|t| {
                let mut h = Sha256::new();
                h.update(self.seed.to_le_bytes());
                h.update(t.as_bytes());
                let seed: [u8; 32] = h.finalize().into();
                let mut rng = ChaCha8Rng::from_seed(seed);
                (0..self.dim).map(|_| rng.gen::<f64>()).collect()
            })
            .collect())
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        d / (na * nb)
    }
}

/// Greedy-matching F1 without idf weights or baseline rescaling.
pub fn bert_score_f1(candidate: &str, reference: &str, provider: &dyn TokenEmbedder) -> Result<f64, MetricsError> {
    let ct = tokens(candidate)?;
    let rt = tokens(reference)?;
    let ce = provider.embed(&ct)?;
    let re = provider.embed(&rt)?;
    if ce.len() != ct.len() || re.len() != rt.len() {
        return Err(MetricsError::Provider("one vector per token expected".into()));
    }
    if ce.iter().chain(&re).flatten().any(|x| !x.is_finite()) {
        return Err(MetricsError::Provider("non-finite embedding".into()));
    }
    let sim: Vec<Vec<f64>> = ce.iter().map(|c| re.iter().map(|r| cosine(c, r)).collect()).collect();
    let p = sim.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum::<f64>()
        / ct.len() as f64;
    let r = (0..rt.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / rt.len() as f64;
    Ok(if p + r <= 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextScore {
    pub rouge_l_f1: f64,
    pub meteor: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bert_f1: Option<f64>,
}

pub fn score_text(
    candidate: &str,
    reference: &str,
    provider: Option<&dyn TokenEmbedder>,
) -> Result<TextScore, MetricsError> {
    Ok(TextScore {
        rouge_l_f1: rouge_l_f1(candidate, reference)?,
        meteor: meteor(candidate, reference)?,
        bert_f1: provider.map(|p| bert_score_f1(candidate, reference, p)).transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn rouge_hand_values() {
        assert_eq!(rouge_l_f1("the cat sat", "the cat sat").unwrap(), 1.0);
        assert!((rouge_l_f1("the cat", "the cat sat").unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(rouge_l_f1("a b", "c d").unwrap(), 0.0);
        assert!(rouge_l_f1("...", "a").is_err());
    }

    #[test]
    fn meteor_hand_values() {
        assert_eq!(meteor("a b c d", "a b c d").unwrap(), 0.9921875);
        assert_eq!(meteor("a b", "b a").unwrap(), 0.5);
        assert_eq!(meteor("x y", "a b").unwrap(), 0.0);
    }

    #[test]
    fn stems_align() {
        let a = meteor_align(&toks("vehicles braking"), &toks("vehicle brakes"));
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!((a.chunks, a.exact), (1, 0));
    }

    #[test]
    fn prefers_fewer_chunks_over_first_fit() {
        // first-fit would pair the leading "the" with reference 0 and split
        let a = meteor_align(&toks("the car the road"), &toks("on the road the car"));
        assert_eq!(a.chunks, 2);
        assert!(a.proven_optimal);
    }

    #[test]
    fn bert_identity_and_range() {
        let p = HashEmbedder::default();
        assert!((bert_score_f1("a quick test", "a quick test", &p).unwrap() - 1.0).abs() < 1e-12);
        let s = bert_score_f1("alpha beta", "gamma delta epsilon", &p).unwrap();
        assert!((0.0..=1.0).contains(&s));
        let t = score_text("a b", "a b", None).unwrap();
        assert_eq!(t.bert_f1, None);
    }
}

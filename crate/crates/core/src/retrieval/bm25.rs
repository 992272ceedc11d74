//! Okapi BM25 over an inverted index.
//!
//! score(q, d) = Σ_{t ∈ q} idf(t) · tf(t,d)·(k1+1) / (tf(t,d) + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = ln(1 + (N − df(t) + 0.5) / (df(t) + 0.5))
//!
//! The sum runs over query tokens with repetition, so a term that appears
//! twice in the query contributes twice. The `1 +` inside the logarithm
//! keeps every idf, and therefore every score, non-negative.

use std::collections::HashMap;

use super::tokenize::tokenize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone)]
pub struct LexicalIndex {
    params: Bm25Params,
    /// term -> [(doc, term frequency)], docs ascending.
    postings: HashMap<String, Vec<(usize, u32)>>,
    doc_len: Vec<usize>,
    avg_len: f64,
}

impl LexicalIndex {
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a str>, params: Bm25Params) -> Self {
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_len = Vec::new();
        for (doc, text) in docs.into_iter().enumerate() {
            let tokens = tokenize(text);
            doc_len.push(tokens.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, freq) in tf {
                postings.entry(term).or_default().push((doc, freq));
            }
        }
        let avg_len = if doc_len.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<usize>() as f64 / doc_len.len() as f64
        };
        LexicalIndex {
            params,
            postings,
            doc_len,
            avg_len,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_len.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_len.is_empty()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// BM25 score of every document for `query`, in document order.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.len()];
        let Bm25Params { k1, b } = self.params;
        for term in tokenize(query) {
            let Some(posting) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.idf(&term);
            for &(doc, tf) in posting {
                let tf = tf as f64;
                let norm = if self.avg_len > 0.0 {
                    1.0 - b + b * self.doc_len[doc] as f64 / self.avg_len
                } else {
                    1.0
                };
                scores[doc] += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }
        scores
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idf_is_nonnegative_even_for_ubiquitous_terms() {
        let idx = LexicalIndex::build(["a b", "a c", "a d"], Bm25Params::default());
        assert!(idx.idf("a") > 0.0);
        assert!(idx.idf("b") > idx.idf("a"));
    }

    #[test]
    fn no_overlap_scores_zero() {
        let idx = LexicalIndex::build(["red car", "blue sky"], Bm25Params::default());
        assert_eq!(idx.scores("green tea"), vec![0.0, 0.0]);
    }

    #[test]
    fn hand_computed_single_term() {
        // N=3, df(cat)=1, doc0 length 2, avgdl = (2+1+3)/3 = 2
        let idx = LexicalIndex::build(["cat dog", "dog", "bird bird fish"], Bm25Params::default());
        let idf = (1.0f64 + (3.0 - 1.0 + 0.5) / (1.0 + 0.5)).ln();
        let tf_part = 1.0 * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 2.0 / 2.0));
        let s = idx.scores("cat");
        assert!((s[0] - idf * tf_part).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }
}

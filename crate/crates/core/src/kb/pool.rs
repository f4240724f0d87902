use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use super::{Concept, KbError};

/// Frequency-ranked dictionary words eligible as negative-fact endpoints.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DictionaryPool {
    entries: Vec<Concept>,
    rank: HashMap<Concept, usize>,
}

impl DictionaryPool {
    /// Wraps an already-ranked, duplicate-free list.
    pub fn from_ranked(entries: Vec<Concept>) -> DictionaryPool {
        let mut seen = HashSet::new();
        let entries: Vec<Concept> = entries.into_iter().filter(|c| seen.insert(c.clone())).collect();
        let rank = entries.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        DictionaryPool { entries, rank }
    }

    pub fn entries(&self) -> &[Concept] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rank(&self, concept: &Concept) -> Option<usize> {
        self.rank.get(concept).copied()
    }

    pub fn contains(&self, concept: &Concept) -> bool {
        self.rank.contains_key(concept)
    }

    pub fn get(&self, rank: usize) -> Option<&Concept> {
        self.entries.get(rank)
    }
}

/// Keeps the `top_k` most frequent words that also appear in `word_list`.
///
/// Words absent from the frequency list are not available. Equal counts
/// order by label.
pub fn build_dictionary_pool<'a>(
    word_list: impl IntoIterator<Item = &'a str>,
    frequencies: &HashMap<String, u64>,
    top_k: usize,
) -> Result<DictionaryPool, KbError> {
    if top_k == 0 {
        return Err(KbError::InvalidTopK);
    }
    let words: HashSet<Concept> = word_list.into_iter().filter_map(Concept::new).collect();
    let mut counts: HashMap<Concept, u64> = HashMap::new();
    for (word, &count) in frequencies {
        if let Some(concept) = Concept::new(word).filter(|c| words.contains(c)) {
            let slot = counts.entry(concept).or_insert(0);
            *slot = (*slot).max(count);
        }
    }
    let mut ranked: Vec<(Concept, u64)> = counts.into_iter().collect();
    ranked.sort_by(|(a, ca), (b, cb)| cb.cmp(ca).then_with(|| a.cmp(b)));
    ranked.truncate(top_k);
    Ok(DictionaryPool::from_ranked(
        ranked.into_iter().map(|(c, _)| c).collect(),
    ))
}

/// One word per line; blank lines and `#` comments are ignored.
pub fn read_word_list(path: &Path) -> Result<Vec<String>, KbError> {
    let reader = super::open_dump(path)?;
    let mut words = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| KbError::io(path.display().to_string(), e))?;
        let word = line.trim();
        if !word.is_empty() && !word.starts_with('#') {
            words.push(word.to_owned());
        }
    }
    Ok(words)
}

/// `word<TAB>count` per line.
pub fn read_frequency_list(path: &Path) -> Result<HashMap<String, u64>, KbError> {
    let reader = super::open_dump(path)?;
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| KbError::io(path.display().to_string(), e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: &str| KbError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: message.to_owned(),
        };
        let (word, count) = line
            .rsplit_once('\t')
            .ok_or_else(|| parse_err("expected `word<TAB>count`"))?;
        let count: u64 = count
            .trim()
            .parse()
            .map_err(|_| parse_err("count is not a non-negative integer"))?;
        let slot = out.entry(word.trim().to_owned()).or_insert(0);
        *slot = (*slot).max(count);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn freqs(pairs: &[(&str, u64)]) -> HashMap<String, u64> {
        pairs.iter().map(|(w, c)| (w.to_string(), *c)).collect()
    }

    fn labels(pool: &DictionaryPool) -> Vec<&str> {
        pool.entries().iter().map(Concept::label).collect()
    }

    #[test]
    fn non_dictionary_words_are_excluded() {
        let f = freqs(&[("cat", 10), ("dog", 5), ("xyzzy", 99)]);
        let pool = build_dictionary_pool(["cat", "dog"], &f, 2).unwrap();
        assert_eq!(labels(&pool), ["cat", "dog"]);
        let pool = build_dictionary_pool(["cat", "dog"], &f, 1).unwrap();
        assert_eq!(labels(&pool), ["cat"]);
    }

    #[test]
    fn oversized_top_k_returns_everything() {
        let f = freqs(&[("cat", 10), ("dog", 5)]);
        let pool = build_dictionary_pool(["cat", "dog", "emu"], &f, 100).unwrap();
        assert_eq!(labels(&pool), ["cat", "dog"]);
        assert!(matches!(
            build_dictionary_pool(["cat"], &f, 0),
            Err(KbError::InvalidTopK)
        ));
    }

    #[test]
    fn ties_break_by_label() {
        let words = ["pear", "apple", "fig", "kiwi", "date"];
        let f = freqs(&[("pear", 3), ("apple", 3), ("fig", 3), ("kiwi", 3), ("date", 3)]);
        let pool = build_dictionary_pool(words, &f, 5).unwrap();
        assert_eq!(labels(&pool), ["apple", "date", "fig", "kiwi", "pear"]);
        let pool = build_dictionary_pool(words, &f, 3).unwrap();
        assert_eq!(labels(&pool), ["apple", "date", "fig"]);
        assert_eq!(pool.rank(&Concept::new("fig").unwrap()), Some(2));
    }

    #[test]
    fn reads_lists_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let wl = dir.path().join("words.txt");
        let fl = dir.path().join("freq.tsv");
        std::fs::write(&wl, "cat\n\n# comment\ndog\n").unwrap();
        std::fs::write(&fl, "cat\t10\ndog\t5\n").unwrap();
        assert_eq!(read_word_list(&wl).unwrap(), ["cat", "dog"]);
        assert_eq!(read_frequency_list(&fl).unwrap()["cat"], 10);

        std::fs::write(&fl, "cat\t10\ndog five\n").unwrap();
        match read_frequency_list(&fl) {
            Err(KbError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}

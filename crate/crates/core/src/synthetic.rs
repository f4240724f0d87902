//! Seeded synthetic worlds: a small knowledge graph in dump format, word and
//! frequency lists, and anchor questions that mention connected concepts.
//! Used by tests and for trying the pipeline without external data.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::write_dataset;
use crate::extraction::{is_stopword, AnchorExample, CHOICE_COUNT};
use crate::hashing::{keyed_rng, seed_material};
use crate::kb::RelationKind;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub concepts: usize,
    pub edges: usize,
    pub anchors: usize,
    /// Share of concepts made of two words.
    pub multiword_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 1,
            concepts: 300,
            edges: 1500,
            anchors: 100,
            multiword_rate: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub concepts: Vec<String>,
    pub edges: Vec<(String, RelationKind, String)>,
    pub anchors: Vec<AnchorExample>,
    /// Single words with corpus counts; includes words outside the graph.
    pub frequencies: Vec<(String, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticPaths {
    pub dump: PathBuf,
    pub dataset: PathBuf,
    pub word_list: PathBuf,
    pub frequency_list: PathBuf,
}

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const FRAMES: [(&str, &str, &str); 6] = [
    ("Where would a", "go after the", "?"),
    ("Why does the", "need a", "most of the time?"),
    ("What happens when a", "meets the", "?"),
    ("Which thing is like a", "and also the", "?"),
    ("If you had a", "and a", ", what would you do?"),
    ("How might the", "help with", "?"),
];

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(VOWELS.choose(rng).unwrap());
    }
    if rng.gen_bool(0.3) {
        w.push_str(ONSETS.choose(rng).unwrap());
    }
    w
}

fn fresh_words(rng: &mut ChaCha8Rng, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = pseudo_word(rng);
        if !is_stopword(&w) && taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticWorld {
    assert!(spec.concepts >= CHOICE_COUNT + 2, "too few concepts");
    let mut rng = keyed_rng(&seed_material(spec.seed, &["synthetic-world"]));
    let mut taken = BTreeSet::new();
    let singles = fresh_words(&mut rng, spec.concepts, &mut taken);
    let concepts: Vec<String> = singles
        .iter()
        .enumerate()
        .map(|(i, w)| {
            if rng.gen_bool(spec.multiword_rate) {
                format!("{w} {}", singles[(i + 1) % singles.len()])
            } else {
                w.clone()
            }
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut edge_set = BTreeSet::new();
    let max_edges = concepts.len() * (concepts.len() - 1) * RelationKind::ALL.len();
    while edge_set.len() < spec.edges.min(max_edges) {
        let a = rng.gen_range(0..concepts.len());
        let b = rng.gen_range(0..concepts.len());
        if a != b {
            edge_set.insert((a, RelationKind::ALL[rng.gen_range(0..RelationKind::ALL.len())], b));
        }
    }
    let edges: Vec<(usize, RelationKind, usize)> = edge_set.into_iter().collect();

    let mut anchors = Vec::with_capacity(spec.anchors);
    for i in 0..spec.anchors {
        let (a, _, b) = if edges.is_empty() {
            (0, RelationKind::IsA, 1)
        } else {
            edges[rng.gen_range(0..edges.len())]
        };
        let (start, middle, end) = FRAMES[rng.gen_range(0..FRAMES.len())];
        let question = format!("{start} {} {middle} {}{end}", concepts[a], concepts[b]);
        let mut picked: Vec<usize> = Vec::new();
        let near: Vec<usize> = edges
            .iter()
            .filter(|e| e.0 == a || e.2 == a || e.0 == b || e.2 == b)
            .map(|e| if e.0 == a || e.0 == b { e.2 } else { e.0 })
            .collect();
        while picked.len() < CHOICE_COUNT {
            let c = if !near.is_empty() && rng.gen_bool(0.5) {
                near[rng.gen_range(0..near.len())]
            } else {
                rng.gen_range(0..concepts.len())
            };
            if c != a && c != b && !picked.contains(&c) {
                picked.push(c);
            }
        }
        let choices = picked.iter().map(|&c| concepts[c].clone()).collect();
        let anchor = AnchorExample::new(format!("syn-{i:05}"), question, choices, rng.gen_range(0..CHOICE_COUNT))
            .expect("generated anchor is well formed");
        anchors.push(anchor);
    }

    let mut frequencies: Vec<(String, u64)> = singles.iter().map(|w| (w.clone(), rng.gen_range(1..100_000))).collect();
    for w in fresh_words(&mut rng, spec.concepts / 10 + 1, &mut taken) {
        frequencies.push((w, rng.gen_range(1..100_000)));
    }

    SyntheticWorld {
        edges: edges
            .into_iter()
            .map(|(a, r, b)| (concepts[a].clone(), r, concepts[b].clone()))
            .collect(),
        concepts,
        anchors,
        frequencies,
    }
}

fn uri(label: &str) -> String {
    format!("/c/en/{}", label.replace(' ', "_"))
}

/// Writes edges as dump rows, plus a few rows the ingester must drop.
pub fn write_dump<W: Write>(mut out: W, world: &SyntheticWorld) -> io::Result<()> {
    for (a, r, b) in &world.edges {
        let rel = format!("/r/{}", r.name());
        writeln!(
            out,
            "/a/[{rel}/,{}/,{}/]\t{rel}\t{}\t{}/n\t{{\"weight\": 1.0}}",
            uri(a),
            uri(b),
            uri(a),
            uri(b)
        )?;
    }
    if let Some((a, _, b)) = world.edges.first() {
        writeln!(out, "/a/x\t/r/ExternalURL\t{}\thttp://example.org\t{{}}", uri(a))?;
        writeln!(out, "/a/y\t/r/IsA\t/c/fr/{}\t{}\t{{}}", a.replace(' ', "_"), uri(b))?;
        writeln!(out, "not a row")?;
    }
    Ok(())
}

pub fn write_world(world: &SyntheticWorld, dir: &Path) -> io::Result<SyntheticPaths> {
    fs::create_dir_all(dir)?;
    let paths = SyntheticPaths {
        dump: dir.join("assertions.tsv"),
        dataset: dir.join("dev.jsonl"),
        word_list: dir.join("words.txt"),
        frequency_list: dir.join("frequencies.tsv"),
    };
    let mut buf = Vec::new();
    write_dump(&mut buf, world)?;
    fs::write(&paths.dump, buf)?;
    let mut buf = Vec::new();
    write_dataset(&mut buf, &world.anchors)?;
    fs::write(&paths.dataset, buf)?;
    let words: String = world.frequencies.iter().map(|(w, _)| format!("{w}\n")).collect();
    fs::write(&paths.word_list, words)?;
    let freqs: String = world.frequencies.iter().map(|(w, c)| format!("{w}\t{c}\n")).collect();
    fs::write(&paths.frequency_list, freqs)?;
    Ok(paths)
}

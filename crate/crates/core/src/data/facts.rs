//! Synthetic single-hop fact questions answerable by one search.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{QAItem, QuestionType};
use crate::tools::{FixtureSearch, SearchDoc};

pub const DATASET: &str = "nq";

const ONSETS: [&str; 14] = ["b", "d", "k", "l", "m", "n", "r", "s", "t", "v", "z", "br", "st", "gr"];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ae"];

fn name(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    let mut s = String::new();
    for _ in 0..syllables {
        s.push_str(ONSETS.choose(rng).expect("onsets"));
        s.push_str(VOWELS.choose(rng).expect("vowels"));
    }
    if rng.gen_bool(0.5) {
        s.push('n');
    }
    let mut chars = s.chars();
    let first = chars.next().expect("non-empty").to_ascii_uppercase();
    std::iter::once(first).chain(chars).collect()
}

/// Questions plus a fixture backend whose first document titles the answer.
pub struct FactSet {
    pub items: Vec<QAItem>,
    pub search: FixtureSearch,
}

pub fn gen_fact_lookup(n: usize, seed: u64) -> FactSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut search = FixtureSearch::new();
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let (question, answer) = match rng.gen_range(0..3) {
            0 => {
                let land = name(&mut rng, 3);
                (format!("What is the capital of {land}?"), name(&mut rng, 2))
            }
            1 => {
                let element = name(&mut rng, 3);
                (format!("Who discovered {element}ium?"), format!("{} {}", name(&mut rng, 2), name(&mut rng, 2)))
            }
            _ => {
                let river = name(&mut rng, 2);
                (format!("Which sea does the {river} river flow into?"), format!("{} Sea", name(&mut rng, 2)))
            }
        };
        let docs = vec![
            SearchDoc::titled(answer.clone(), format!("{answer} is the answer to: {question}")),
            SearchDoc::titled(name(&mut rng, 3), "An unrelated page."),
        ];
        search.insert(&question, docs);
        items.push(QAItem::new(format!("fact-{i:05}"), question, answer, QuestionType::Fact, DATASET));
    }
    FactSet { items, search }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::SearchBackend;

    #[test]
    fn fixture_titles_the_answer() {
        let set = gen_fact_lookup(30, 2);
        for item in &set.items {
            let docs = set.search.search(&item.question, 5).unwrap();
            assert_eq!(docs[0].title, item.answer);
        }
        assert_eq!(gen_fact_lookup(30, 2).items, set.items);
    }
}

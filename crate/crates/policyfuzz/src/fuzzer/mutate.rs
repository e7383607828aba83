//! Input mutation: one strategy per call, drawn uniformly.

use rand::Rng;

use crate::http::HttpRequest;

/// One corpus item: a request template plus the state seed.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub request: HttpRequest,
    pub seed: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MutationStrategy {
    ReplaceParamValue,
    AddOrDeleteParam,
    FlipSeedBits,
    FreshSeed,
    SeedIncrement,
}

const STRATEGIES: [MutationStrategy; 5] = [
    MutationStrategy::ReplaceParamValue,
    MutationStrategy::AddOrDeleteParam,
    MutationStrategy::FlipSeedBits,
    MutationStrategy::FreshSeed,
    MutationStrategy::SeedIncrement,
];

const DICTIONARY: [&str; 10] = [
    "1", "0", "true", "admin", "id", "json", "debug", "..", "\u{17}", "%00",
];

const PARAM_NAMES: [&str; 6] = ["q", "id", "page", "debug", "token", "kind"];

fn random_value<R: Rng>(rng: &mut R) -> String {
    if rng.gen_bool(0.5) {
        DICTIONARY[rng.gen_range(0..DICTIONARY.len())].to_string()
    } else {
        let len = rng.gen_range(1..8usize);
        (0..len)
            .map(|_| {
                if rng.gen_bool(0.15) {
                    // Control characters included on purpose.
                    char::from_u32(rng.gen_range(1..0x20u32)).unwrap()
                } else {
                    char::from(rng.gen_range(b'a'..=b'z'))
                }
            })
            .collect()
    }
}

/// Apply one uniformly drawn strategy. The path is never touched.
pub fn mutate<R: Rng>(entry: &CorpusEntry, rng: &mut R) -> CorpusEntry {
    mutate_with_strategy(entry, rng).0
}

pub fn mutate_with_strategy<R: Rng>(
    entry: &CorpusEntry,
    rng: &mut R,
) -> (CorpusEntry, MutationStrategy) {
    let strategy = STRATEGIES[rng.gen_range(0..STRATEGIES.len())];
    let mut out = entry.clone();
    match strategy {
        MutationStrategy::ReplaceParamValue => {
            let mut params: Vec<(String, String)> = entry.request.query_params().to_vec();
            if params.is_empty() {
                params.push((
                    PARAM_NAMES[rng.gen_range(0..PARAM_NAMES.len())].to_string(),
                    random_value(rng),
                ));
            } else {
                let idx = rng.gen_range(0..params.len());
                params[idx].1 = random_value(rng);
            }
            if let Ok(req) = entry.request.with_params(params) {
                out.request = req;
            }
        }
        MutationStrategy::AddOrDeleteParam => {
            let mut params: Vec<(String, String)> = entry.request.query_params().to_vec();
            if !params.is_empty() && rng.gen_bool(0.5) {
                let idx = rng.gen_range(0..params.len());
                params.remove(idx);
            } else {
                params.push((
                    PARAM_NAMES[rng.gen_range(0..PARAM_NAMES.len())].to_string(),
                    random_value(rng),
                ));
            }
            if let Ok(req) = entry.request.with_params(params) {
                out.request = req;
            }
        }
        MutationStrategy::FlipSeedBits => {
            let flips = rng.gen_range(1..=4usize);
            let mut positions = Vec::with_capacity(flips);
            while positions.len() < flips {
                let pos = rng.gen_range(0..32u32);
                if !positions.contains(&pos) {
                    positions.push(pos);
                }
            }
            for pos in positions {
                out.seed ^= 1 << pos;
            }
        }
        MutationStrategy::FreshSeed => {
            out.seed = rng.gen();
        }
        MutationStrategy::SeedIncrement => {
            out.seed = out.seed.wrapping_add(1);
        }
    }
    (out, strategy)
}

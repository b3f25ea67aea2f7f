#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tarag_core::annotation::AnnotationSource;
use tarag_core::eval::{McqaItem, QueryType};
use tarag_core::ingest::{ChunkRecord, CorpusIndex, IngestConfig, Manifest};
use tarag_core::providers::{embed_texts, EmbeddingProvider, Providers, StubEmbedder};
use tarag_core::{ChunkId, Date, TimeInterval};

pub const FIXED_TIMESTAMP: &str = "2024-01-01T00:00:00Z";

pub fn chunk(id: u32, doc: &str, text: impl Into<String>, events: Vec<TimeInterval>, published: Date) -> ChunkRecord {
    let text = text.into();
    ChunkRecord {
        chunk_id: ChunkId(id),
        doc_id: doc.to_string(),
        seq: 0,
        token_count: text.split_whitespace().count(),
        text,
        event_intervals: events,
        pub_time_est: published,
        interval_source: AnnotationSource::Rule,
        pub_source: AnnotationSource::Rule,
    }
}

/// Index `chunks` with the stub embedder at `dim`; returns it with matching
/// offline providers.
pub fn stub_index(chunks: Vec<ChunkRecord>, dim: usize) -> (CorpusIndex, Providers) {
    let providers = Providers::offline(dim);
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let embeddings = embed_texts(providers.embedder.as_ref(), &texts).unwrap();
    let cfg = IngestConfig {
        build_timestamp: Some(FIXED_TIMESTAMP.into()),
        ..IngestConfig::default()
    };
    let manifest = Manifest::new(StubEmbedder::new(dim).id(), dim, providers.llm.id(), &cfg);
    (CorpusIndex::assemble(manifest, chunks, embeddings).unwrap(), providers)
}

pub fn random_interval(rng: &mut impl Rng, lo: i32, hi: i32, max_len: i32) -> TimeInterval {
    let s = rng.gen_range(lo..hi);
    let len = rng.gen_range(1..=max_len);
    TimeInterval::from_days(s, s + len).unwrap()
}

pub const TOPICS: [&str; 12] = [
    "tariff", "vaccine", "satellite", "election", "drought", "merger", "strike", "reactor", "pipeline", "summit",
    "glacier", "stadium",
];

pub const FILLER: [&str; 24] = [
    "amber", "basalt", "cobalt", "delta", "ember", "fjord", "granite", "harbor", "indigo", "jasper", "kelp",
    "lagoon", "mesa", "nimbus", "onyx", "prairie", "quartz", "ridge", "sierra", "tundra", "umber", "valley",
    "willow", "zephyr",
];

/// `n` chunks between 2010 and 2020: a topic word, a few filler words and
/// the event's month and year, with a random event interval of up to two
/// years.
pub fn synthetic_corpus(rng: &mut impl Rng, n: u32) -> Vec<ChunkRecord> {
    let lo = Date::ymd(2010, 1, 1).to_days();
    let hi = Date::ymd(2020, 1, 1).to_days();
    (0..n)
        .map(|i| {
            let mut events = vec![random_interval(rng, lo, hi, 730)];
            if rng.gen_bool(0.2) {
                events.push(random_interval(rng, lo, hi, 90));
            }
            let e = events[0].start();
            let mut words = vec![TOPICS[rng.gen_range(0..TOPICS.len())].to_string()];
            for _ in 0..rng.gen_range(1..6) {
                words.push(FILLER[rng.gen_range(0..FILLER.len())].to_string());
            }
            words.push(format!("{} {}", e.month_name(), e.year()));
            let published = e.add_days(rng.gen_range(0..60)).unwrap();
            chunk(i, &format!("doc{:04}", i / 3), words.join(" "), events, published)
        })
        .collect()
}

/// 25 entities x 60 months, one chunk each; text carries the entity token,
/// a seeded run of filler words and the month and year.
pub fn planted_corpus() -> (CorpusIndex, Providers) {
    let mut rng = ChaCha8Rng::seed_from_u64(2015);
    let mut chunks = Vec::new();
    for e in 0..25 {
        for m in 0..60u32 {
            let month = TimeInterval::month(2015 + (m / 12) as i32, m % 12 + 1).unwrap();
            let mut words = vec![format!("entity{e:02}")];
            for _ in 0..rng.gen_range(1..=6) {
                words.push(FILLER[rng.gen_range(0..FILLER.len())].to_string());
            }
            let d = month.start();
            words.push(format!("{} {}", d.month_name(), d.year()));
            let id = chunks.len() as u32;
            chunks.push(chunk(id, &format!("e{e:02}m{m:02}"), words.join(" "), vec![month], d));
        }
    }
    stub_index(chunks, 256)
}

pub fn planted_items() -> Vec<McqaItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    (0..50)
        .map(|i| {
            let span = rng.gen_range(2..=4);
            let y1 = rng.gen_range(2015..=2019 - span);
            McqaItem {
                item_id: format!("planted-{i}"),
                question: format!("trend of entity{:02} from {y1} to {}", i % 25, y1 + span),
                choices: ["rising", "falling", "flat", "volatile"].map(String::from).to_vec(),
                gold_index: 0,
                query_type: QueryType::TimeIntervalYears,
            }
        })
        .collect()
}

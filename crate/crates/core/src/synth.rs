//! Deterministic synthetic corpora, stores and scripted cassettes for
//! exercising the harness without a model backend or real knowledge base.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::candidates::CandidateSet;
use crate::corpus::{Document, Mention};
use crate::kb::{AliasTable, Entity, EntityStore, LinkCount};
use crate::llm::CassetteRecord;
use crate::pipeline::{Linker, PipelineConfig, PipelineError, Stores};
use crate::prompts::{
    option_letter, render_augmentation_prompt, render_selection_prompt, AuxiliaryContext, TemplateSet, ABSTAIN_OPTION,
};
use crate::retrieval::{LexicalIndex, Retriever};

const GIVEN: [&str; 12] =
    ["Alma", "Bruno", "Celia", "Dorian", "Edith", "Felix", "Greta", "Hugo", "Ines", "Jonas", "Karin", "Lucas"];
const FAMILY: [&str; 12] =
    ["Varga", "Holm", "Okafor", "Brandt", "Silva", "Moreau", "Lindqvist", "Petrov", "Tanaka", "Quinn", "Ruiz", "Weber"];
const ROLES: [&str; 8] = [
    "a chess grandmaster",
    "a marine biologist",
    "a jazz pianist",
    "a mountain guide",
    "a civil engineer",
    "a football coach",
    "a novelist",
    "a glassblower",
];
const PLACES: [&str; 8] = ["Tallinn", "Porto", "Lagos", "Kyoto", "Quito", "Bergen", "Adelaide", "Graz"];

/// A corpus with matching stores.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub corpus: Vec<Document>,
    pub counts: Vec<LinkCount>,
    pub entities: EntityStore,
    /// Mentions whose gold is reachable through the alias table.
    pub covered: usize,
}

impl Fixture {
    pub fn alias_table(&self) -> AliasTable {
        AliasTable::build(&self.counts).expect("fixture counts are valid")
    }

    pub fn stores(&self, with_retrieval: bool) -> Stores {
        let retriever = with_retrieval.then(|| {
            Box::new(LexicalIndex::build(&self.entities).expect("fixture entities index")) as Box<dyn Retriever>
        });
        Stores { alias: self.alias_table(), entities: self.entities.clone(), retriever }
    }
}

fn person_id(g: usize, f: usize) -> String {
    format!("{}_{}", GIVEN[g], FAMILY[f])
}

/// `n_mentions` mentions in documents of at most `per_doc` mentions each.
pub fn fixture(n_mentions: usize, n_covered: usize, per_doc: usize, seed: u64) -> Fixture {
    assert!(per_doc > 0);
    let mut layout = vec![per_doc; n_mentions / per_doc];
    if !n_mentions.is_multiple_of(per_doc) {
        layout.push(n_mentions % per_doc);
    }
    fixture_with_layout(&layout, n_covered, seed)
}

/// Documents holding `layout[i]` mentions each. Exactly `n_covered` golds are
/// listed in the alias table under their surface; the others are absent from
/// both the alias table and the entity store, so no candidate generator can
/// propose them. Every mention has at least two alias candidates.
pub fn fixture_with_layout(layout: &[usize], n_covered: usize, seed: u64) -> Fixture {
    let n_mentions: usize = layout.iter().sum();
    assert!(n_covered <= n_mentions);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entities = EntityStore::new();
    for g in 0..GIVEN.len() {
        for f in 0..FAMILY.len() {
            let desc = format!(
                "{} {} is {} from {}.",
                GIVEN[g],
                FAMILY[f],
                ROLES[(g * 7 + f * 3) % ROLES.len()],
                PLACES[(g + f * 5) % PLACES.len()]
            );
            entities.insert(Entity::new(person_id(g, f), desc)).expect("unique ids");
        }
    }

    let mut uncovered: Vec<bool> = (0..n_mentions).map(|i| i >= n_covered).collect();
    uncovered.shuffle(&mut rng);
    let mut uncovered = uncovered.into_iter().enumerate();

    let mut counts = Vec::new();
    let mut corpus = Vec::new();
    for &size in layout {
        let mut sentences = Vec::new();
        let mut mentions = Vec::new();
        let mut offset = 0;
        for (i, is_uncovered) in uncovered.by_ref().take(size) {
            // The surface is unique to this mention; ambiguity comes from
            // several given names sharing it in the alias table.
            let f = rng.gen_range(0..FAMILY.len());
            let surface = format!("{} {}", FAMILY[f], i);
            let mut givens: Vec<usize> = (0..GIVEN.len()).collect();
            givens.shuffle(&mut rng);
            let n_alias = rng.gen_range(2..=4);
            let gold = if is_uncovered {
                format!("Unlisted_{}_{}", FAMILY[f], i)
            } else {
                person_id(givens[rng.gen_range(0..n_alias)], f)
            };
            let listed = if is_uncovered { &givens[1..=n_alias] } else { &givens[..n_alias] };
            for (rank, &g) in listed.iter().enumerate() {
                let count = (10 * (n_alias - rank)) as i64 + rng.gen_range(0..5);
                counts.push(LinkCount::new(surface.clone(), person_id(g, f), count));
            }
            let place = PLACES[rng.gen_range(0..PLACES.len())];
            let role = ROLES[rng.gen_range(0..ROLES.len())];
            let lead = format!("In {place}, ");
            let start = offset + lead.chars().count();
            let sentence = format!("{lead}{surface} spoke about life as {role}.");
            offset += sentence.chars().count() + 1;
            sentences.push(sentence);
            mentions.push(Mention { start, end: start + surface.chars().count(), surface, gold_entity: gold });
        }
        corpus.push(Document { doc_id: format!("doc-{:03}", corpus.len()), text: sentences.join(" "), mentions });
    }
    Fixture { corpus, counts, entities, covered: n_covered }
}

/// 100 mentions, 93 with the gold reachable.
pub fn oracle_fixture() -> Fixture {
    fixture(100, 93, 4, 7)
}

/// 50 documents holding 144 mentions, the shape of the KORE50 benchmark.
pub fn kore_shaped_fixture() -> Fixture {
    let layout: Vec<usize> = (0..50).map(|d| if d % 8 == 7 { 2 } else { 3 }).collect();
    fixture_with_layout(&layout, 127, 50)
}

/// How a scripted cassette answers the selection question for one mention.
pub type Answer<'a> = dyn Fn(&Mention, &CandidateSet) -> String + 'a;

/// Selection answer of a perfect annotator: the gold letter when the gold is
/// a candidate, the abstention option otherwise.
pub fn gold_answer(mention: &Mention, candidates: &CandidateSet) -> String {
    match candidates.ids().position(|id| crate::eval::entity_equal(id, &mention.gold_entity)) {
        Some(i) => option_letter(i).to_string(),
        None => ABSTAIN_OPTION.to_string(),
    }
}

/// The canned augmentation answer used by scripted cassettes.
pub fn aux_answer(mention: &Mention) -> String {
    format!("\"{}\" refers to a person named in the passage.", mention.surface)
}

/// Records answering every request `config` would issue over `corpus`.
/// Mentions with no candidates get no records.
pub fn script_cassette(
    config: &PipelineConfig,
    templates: &TemplateSet,
    stores: &Stores,
    corpus: &[Document],
    answer: &Answer<'_>,
) -> Result<Vec<CassetteRecord>, PipelineError> {
    let probe = crate::llm::LlmClient::replay(std::sync::Arc::new(crate::llm::Cassette::in_memory()));
    let linker = Linker::new(config.clone(), templates.clone(), stores, &probe)?;
    let mut records = Vec::new();
    for doc in corpus {
        for (i, m) in doc.mentions.iter().enumerate() {
            let cands = linker.candidates(doc, i)?;
            if cands.is_empty() {
                continue;
            }
            let aux = if config.use_augmentation {
                let req = render_augmentation_prompt(templates, &config.prompt, doc, m);
                let text = aux_answer(m);
                records.push(CassetteRecord::new(&req, text.clone(), 40));
                Some(AuxiliaryContext { doc_id: doc.doc_id.clone(), mention_index: i, text })
            } else {
                None
            };
            let req = render_selection_prompt(templates, &config.prompt, doc, m, aux.as_ref(), &cands);
            records.push(CassetteRecord::new(&req, answer(m, &cands), 25));
        }
    }
    Ok(records)
}

//! Deterministic synthetic worlds: graph, link statistics, annotated corpus, and the
//! latent type system the world was built around.
//!
//! Instances carry a random bit signature over `n_latent_axes` latent classes. Each
//! latent class has subclasses; members attach to a random subclass via `instance_of`,
//! so membership in the latent class needs the transitive `subclass_of` closure.
//! Topic classes (`wikipedia_category`) and many small distractor classes
//! (`instance_of`) add further candidate relations.
//!
//! Surfaces come in three flavors:
//! * separable: all candidates have pairwise distinct latent signatures;
//! * ambiguous: the gold shares its signature with a more-linked candidate;
//! * generic: a subclass entity competes with a few of its own instances.
//!
//! Every mention from a separable or generic surface is resolved by the latent system,
//! and every mention from an ambiguous surface is not, so the latent Oracle accuracy is
//! exactly the fraction of non-ambiguous mentions.
//!
//! Mention contexts contain cue words: for each latent axis a polarity cue with
//! probability `signal`, for each topic axis with probability `weak_signal`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedCorpus, Document, Mention};
use crate::kg::{EdgeKind, EntityId, KnowledgeGraph, LinkStats};
use crate::rng;
use crate::typesys::{Relation, TypeAxis, TypeSystem};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("inconsistent synthetic world config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_entities: usize,
    pub n_latent_axes: usize,
    pub subclasses_per_axis: usize,
    pub latent_rate: f64,
    pub n_topic_axes: usize,
    pub topic_rate: f64,
    pub n_distractors: usize,
    pub distractor_rate: f64,
    pub n_surfaces: usize,
    pub min_candidates: usize,
    pub max_candidates: usize,
    pub n_documents: usize,
    pub mentions_per_doc: usize,
    /// Fraction of mentions the latent system fully disambiguates.
    pub disambiguable_fraction: f64,
    /// Probability that a separable mention's gold is its most-linked candidate.
    pub top_gold_rate: f64,
    pub generic_rate: f64,
    pub multiword_rate: f64,
    pub signal: f64,
    pub weak_signal: f64,
    pub context_tokens: usize,
    pub filler_vocab: usize,
    pub cue_variants: usize,
    pub languages: Vec<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_entities: 500,
            n_latent_axes: 6,
            subclasses_per_axis: 2,
            latent_rate: 0.5,
            n_topic_axes: 4,
            topic_rate: 0.3,
            n_distractors: 60,
            distractor_rate: 0.04,
            n_surfaces: 300,
            min_candidates: 2,
            max_candidates: 4,
            n_documents: 200,
            mentions_per_doc: 5,
            disambiguable_fraction: 0.9,
            top_gold_rate: 0.65,
            generic_rate: 0.05,
            multiword_rate: 0.3,
            signal: 0.85,
            weak_signal: 0.35,
            context_tokens: 4,
            filler_vocab: 300,
            cue_variants: 3,
            languages: vec!["en".into()],
        }
    }
}

impl SynthConfig {
    fn check(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::Config(m.into()));
        if self.n_entities == 0 || self.n_surfaces == 0 || self.n_documents == 0 || self.mentions_per_doc == 0 {
            return fail("entity, surface, document and mention counts must be at least 1");
        }
        if self.n_latent_axes > self.n_entities {
            return fail("more latent axes than entities");
        }
        if self.n_latent_axes > 64 {
            return fail("at most 64 latent axes are supported");
        }
        if self.min_candidates == 0 || self.min_candidates > self.max_candidates {
            return fail("candidate bounds must satisfy 1 <= min <= max");
        }
        if self.languages.is_empty() || self.filler_vocab == 0 || self.cue_variants == 0 {
            return fail("languages, filler vocabulary and cue variants must be non-empty");
        }
        for (name, p) in [
            ("latent_rate", self.latent_rate),
            ("topic_rate", self.topic_rate),
            ("distractor_rate", self.distractor_rate),
            ("disambiguable_fraction", self.disambiguable_fraction),
            ("top_gold_rate", self.top_gold_rate),
            ("generic_rate", self.generic_rate),
            ("multiword_rate", self.multiword_rate),
            ("signal", self.signal),
            ("weak_signal", self.weak_signal),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub graph: KnowledgeGraph,
    pub stats: LinkStats,
    pub corpus: AnnotatedCorpus,
    /// The latent axes the world was generated from.
    pub latent: TypeSystem,
    /// Per mention in corpus order: whether the latent system resolves it.
    pub separable: Vec<bool>,
}

#[derive(Clone, Copy, PartialEq)]
enum SurfaceKind {
    Separable,
    Ambiguous,
    Generic,
}

struct Surface {
    text: String,
    kind: SurfaceKind,
    /// (entity index, count), unsorted.
    candidates: Vec<(usize, u64)>,
    /// Gold for ambiguous and generic surfaces.
    fixed_gold: Option<usize>,
}

struct Entities {
    signature: Vec<u64>,
    topics: Vec<Vec<bool>>,
}

fn descending_counts(rng: &mut ChaCha8Rng, n: usize) -> Vec<u64> {
    let base = rng.gen_range(40.0..400.0_f64);
    let mut counts: Vec<u64> = (0..n)
        .map(|r| (base / ((r + 1) as f64).powf(1.3) * rng.gen_range(0.8..1.2)).max(1.0) as u64)
        .collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    for i in 1..n {
        if counts[i] >= counts[i - 1] && counts[i - 1] > 1 {
            counts[i] = counts[i - 1] - 1;
        }
    }
    counts
}

pub fn generate_synthetic_world(seed: u64, config: &SynthConfig) -> Result<SyntheticWorld, SynthError> {
    config.check()?;
    let mut rng = rng::stream(&[seed, 0x5717]);
    let mut graph = KnowledgeGraph::new();
    let mut next = 0u64;
    let mut add = |graph: &mut KnowledgeGraph, label: String| {
        let id = EntityId(next);
        next += 1;
        graph.add_entity(id, label).expect("fresh id");
        id
    };

    let n = config.n_entities;
    let instances: Vec<EntityId> = (0..n).map(|i| add(&mut graph, format!("entity_{i}"))).collect();
    let mut latent_roots = Vec::new();
    let mut subclasses: Vec<Vec<EntityId>> = Vec::new();
    for k in 0..config.n_latent_axes {
        let root = add(&mut graph, format!("latent_{k}"));
        let subs: Vec<EntityId> = (0..config.subclasses_per_axis)
            .map(|j| add(&mut graph, format!("latent_{k}_sub_{j}")))
            .collect();
        for s in &subs {
            graph.add_edge(*s, EdgeKind::SubclassOf, root).expect("new edge");
        }
        latent_roots.push(root);
        subclasses.push(subs);
    }
    let topic_roots: Vec<EntityId> = (0..config.n_topic_axes)
        .map(|t| add(&mut graph, format!("topic_{t}")))
        .collect();
    let distractors: Vec<EntityId> = (0..config.n_distractors)
        .map(|d| add(&mut graph, format!("misc_{d}")))
        .collect();

    // Membership edges.
    let mut ents = Entities {
        signature: vec![0; n],
        topics: vec![vec![false; config.n_topic_axes]; n],
    };
    let mut sub_members: HashMap<EntityId, Vec<usize>> = HashMap::new();
    for i in 0..n {
        for k in 0..config.n_latent_axes {
            if rng.gen_bool(config.latent_rate) {
                ents.signature[i] |= 1 << k;
                let target = match subclasses[k].as_slice() {
                    [] => latent_roots[k],
                    subs => *subs.choose(&mut rng).unwrap(),
                };
                sub_members.entry(target).or_default().push(i);
                graph.add_edge(instances[i], EdgeKind::InstanceOf, target).expect("new edge");
            }
        }
        for t in 0..config.n_topic_axes {
            if rng.gen_bool(config.topic_rate) {
                ents.topics[i][t] = true;
                graph
                    .add_edge(instances[i], EdgeKind::WikipediaCategory, topic_roots[t])
                    .expect("new edge");
            }
        }
    }
    for d in &distractors {
        let mut any = false;
        for i in 0..n {
            if rng.gen_bool(config.distractor_rate) {
                graph.add_edge(instances[i], EdgeKind::InstanceOf, *d).expect("new edge");
                any = true;
            }
        }
        if !any {
            let i = rng.gen_range(0..n);
            graph.add_edge(instances[i], EdgeKind::InstanceOf, *d).expect("new edge");
        }
    }

    let mut groups: HashMap<u64, Vec<usize>> = HashMap::new();
    for i in 0..n {
        groups.entry(ents.signature[i]).or_default().push(i);
    }
    let mut shared: Vec<&Vec<usize>> = groups.values().filter(|g| g.len() >= 2).collect();
    shared.sort();

    // Surfaces.
    let single = config.max_candidates == 1;
    let mut surfaces: Vec<Surface> = Vec::new();
    let n_generic = if single || config.subclasses_per_axis == 0 {
        0
    } else {
        (config.n_surfaces as f64 * config.generic_rate).round() as usize
    };
    let want_ambiguous = !single && config.disambiguable_fraction < 1.0;
    if want_ambiguous && shared.is_empty() {
        return Err(SynthError::Config(
            "no two entities share a latent signature; ambiguous surfaces impossible".into(),
        ));
    }
    let surface_text = |rng: &mut ChaCha8Rng, s: usize| {
        if rng.gen_bool(config.multiword_rate) {
            format!("w{s} v{s}")
        } else {
            format!("w{s}")
        }
    };
    for s in 0..config.n_surfaces {
        let text = surface_text(&mut rng, s);
        let ambiguous = want_ambiguous && (s % 4 == 3 || config.disambiguable_fraction == 0.0);
        let c = rng.gen_range(config.min_candidates..=config.max_candidates);
        if ambiguous {
            let group = shared.choose(&mut rng).unwrap();
            let pair: Vec<usize> = group.choose_multiple(&mut rng, 2).copied().collect();
            let mut cands = pair.clone();
            while cands.len() < c {
                let e = rng.gen_range(0..n);
                if !cands.contains(&e) {
                    cands.push(e);
                }
            }
            let counts = descending_counts(&mut rng, cands.len());
            let mut order: Vec<usize> = (0..cands.len()).collect();
            order.shuffle(&mut rng);
            let mut assigned: Vec<(usize, u64)> =
                cands.iter().zip(&order).map(|(e, &r)| (*e, counts[r])).collect();
            // The pair's more-linked member must outrank the gold.
            if assigned[0].1 < assigned[1].1 || (assigned[0].1 == assigned[1].1 && instances[pair[0]] > instances[pair[1]]) {
                let (a, b) = (assigned[0].1, assigned[1].1);
                assigned[0].1 = b;
                assigned[1].1 = a;
            }
            if assigned[0].1 == assigned[1].1 {
                assigned[0].1 += 1;
            }
            surfaces.push(Surface {
                text,
                kind: SurfaceKind::Ambiguous,
                candidates: assigned,
                fixed_gold: Some(pair[1]),
            });
        } else {
            let mut cands: Vec<usize> = Vec::new();
            let mut tries = 0;
            while cands.len() < c && tries < 200 {
                tries += 1;
                let e = rng.gen_range(0..n);
                if cands.iter().all(|&x| ents.signature[x] != ents.signature[e]) {
                    cands.push(e);
                }
            }
            let counts = descending_counts(&mut rng, cands.len());
            cands.shuffle(&mut rng);
            surfaces.push(Surface {
                text,
                kind: SurfaceKind::Separable,
                candidates: cands.into_iter().zip(counts).collect(),
                fixed_gold: None,
            });
        }
    }
    // Generic surfaces: a subclass competing with its own instances.
    let mut generic_classes: Vec<(&EntityId, &Vec<usize>)> =
        sub_members.iter().filter(|(_, m)| !m.is_empty()).collect();
    generic_classes.sort();
    let class_index = |id: EntityId| graph.index_of(id).expect("declared class");
    for g in 0..n_generic.min(generic_classes.len() * 4) {
        let (class, members) = generic_classes[rng.gen_range(0..generic_classes.len())];
        let k = rng.gen_range(1..=members.len().min(3));
        let picked: Vec<usize> = members.choose_multiple(&mut rng, k).copied().collect();
        let mut counts = descending_counts(&mut rng, k + 1);
        counts[0] += 10;
        let mut candidates = vec![(class_index(*class), counts[0])];
        candidates.extend(picked.into_iter().zip(counts[1..].iter().copied()));
        surfaces.push(Surface {
            text: format!("g{g}"),
            kind: SurfaceKind::Generic,
            candidates,
            fixed_gold: Some(class_index(*class)),
        });
    }

    let mut stats = LinkStats::new();
    for s in &surfaces {
        for &(e, c) in &s.candidates {
            stats.add(&s.text, graph.id_at(e), c).expect("positive count");
        }
    }

    let latent = TypeSystem::new(
        latent_roots
            .iter()
            .enumerate()
            .map(|(k, r)| TypeAxis::discovered(format!("latent_{k}"), Relation::new(*r, EdgeKind::InstanceOf)))
            .collect(),
    )
    .expect("unique names");

    // Corpus.
    let separable_ids: Vec<usize> = (0..surfaces.len())
        .filter(|&i| surfaces[i].kind != SurfaceKind::Ambiguous)
        .collect();
    let ambiguous_ids: Vec<usize> = (0..surfaces.len())
        .filter(|&i| surfaces[i].kind == SurfaceKind::Ambiguous)
        .collect();
    let mut documents = Vec::with_capacity(config.n_documents);
    let mut separable = Vec::new();
    for d in 0..config.n_documents {
        let mut tokens: Vec<String> = Vec::new();
        let mut mentions = Vec::new();
        for _ in 0..config.mentions_per_doc {
            let pick_separable = ambiguous_ids.is_empty() || rng.gen_bool(config.disambiguable_fraction);
            let surface = if pick_separable {
                &surfaces[*separable_ids.choose(&mut rng).unwrap()]
            } else {
                &surfaces[*ambiguous_ids.choose(&mut rng).unwrap()]
            };
            let gold = match surface.fixed_gold {
                Some(g) => g,
                None => {
                    let top = surface.candidates.iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).unwrap().0;
                    if surface.candidates.len() == 1 || rng.gen_bool(config.top_gold_rate) {
                        top
                    } else {
                        let others: Vec<usize> =
                            surface.candidates.iter().map(|c| c.0).filter(|&e| e != top).collect();
                        *others.choose(&mut rng).unwrap()
                    }
                }
            };
            separable.push(surface.kind != SurfaceKind::Ambiguous);

            // Context cues from the gold entity's classes.
            let (sig, topics) = if gold < n {
                (ents.signature[gold], ents.topics[gold].clone())
            } else {
                (0, vec![false; config.n_topic_axes])
            };
            let mut context: Vec<String> = Vec::new();
            for k in 0..config.n_latent_axes {
                if rng.gen_bool(config.signal) {
                    let pol = if sig >> k & 1 == 1 { 'p' } else { 'n' };
                    context.push(format!("k{k}{pol}{}", rng.gen_range(0..config.cue_variants)));
                }
            }
            for (t, member) in topics.iter().enumerate() {
                if rng.gen_bool(config.weak_signal) {
                    let pol = if *member { 'p' } else { 'n' };
                    context.push(format!("t{t}{pol}{}", rng.gen_range(0..config.cue_variants)));
                }
            }
            let slots = (2 * config.context_tokens).max(context.len());
            while context.len() < slots {
                context.push(format!("f{}", rng.gen_range(0..config.filler_vocab)));
            }
            context.shuffle(&mut rng);
            let right = context.split_off(slots / 2);
            tokens.extend(context);
            let start = tokens.len();
            tokens.extend(surface.text.split(' ').map(str::to_string));
            mentions.push(Mention {
                start,
                end: tokens.len(),
                gold: graph.id_at(gold),
                candidates: None,
            });
            tokens.extend(right);
        }
        documents.push(Document {
            doc_id: format!("doc{d}"),
            lang: config.languages[d % config.languages.len()].clone(),
            tokens,
            mentions,
        });
    }
    let corpus = AnnotatedCorpus::new(documents).expect("generated spans are valid");
    Ok(SyntheticWorld {
        graph,
        stats,
        corpus,
        latent,
        separable,
    })
}

impl SyntheticWorld {
    /// Writes the world as `entities.tsv`, `edges.tsv`, `links.tsv`, `corpus.jsonl`
    /// and `latent_system.json` into `dir`.
    pub fn save(&self, dir: &std::path::Path) -> std::io::Result<()> {
        let io = |e: crate::kg::KgError| std::io::Error::other(e.to_string());
        self.graph.save(dir).map_err(io)?;
        self.stats.save(&dir.join("links.tsv")).map_err(io)?;
        self.corpus.save(&dir.join("corpus.jsonl"))?;
        std::fs::write(dir.join("latent_system.json"), self.latent.to_json_string())
    }
}

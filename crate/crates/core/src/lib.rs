pub mod corpus;
pub mod design;
pub mod eval;
pub mod kg;
pub mod learnability;
pub mod linker;
pub mod pipeline;
pub mod rng;
pub mod search;
pub mod simplify;
pub mod synth;
pub mod typeclf;
pub mod typesys;
pub mod vocab;

pub use corpus::{resolve, AnnotatedCorpus, Document, Mention, MentionRef, ResolvedMention};
pub use design::{evaluate_rules, whatif_axis, DesignSettings, DesignWorld, EvaluationResponse, WorldSource};
pub use eval::{objective_j, oracle_accuracy, s_greedy, system_accuracy, Accuracy, ObjectiveConfig};
pub use kg::{EdgeKind, EntityId, KnowledgeGraph, LinkStats};
pub use learnability::{auc, LearnabilityConfig};
pub use linker::{fit_smoothing, link_corpus, Pooling, SmoothingParams};
pub use search::{run_search, CandidatePool, Method, OracleObjective, SearchConfig, SearchResult};
pub use simplify::{simplify, SimplifyConfig};
pub use synth::{generate_synthetic_world, SynthConfig, SyntheticWorld};
pub use typeclf::{BeliefSource, TokenClassifierModel, TrainConfig};
pub use typesys::{Labeler, MembershipCache, Relation, TypeAxis, TypeExpr, TypeSystem};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use typeforge::corpus::{resolve, AnnotatedCorpus};
use typeforge::design::{evaluate_rules, DesignSettings, DesignWorld};
use typeforge::eval::{s_greedy, system_accuracy, ObjectiveConfig};
use typeforge::kg::{load_graph, load_graph_files, load_links, EdgeKind, KnowledgeGraph, LinkStats};
use typeforge::learnability::{learnability, write_axis_tsv, LearnabilityConfig};
use typeforge::linker::{fit_smoothing, link_corpus, predictions, Pooling, SmoothingGrid, SmoothingParams};
use typeforge::pipeline::{desk_train_config, discover_pool, run_pipeline, PipelineConfig};
use typeforge::search::{enumerate_relations, lambda_sweep, run_search, write_sweep_tsv, write_trace_tsv, Method, OracleObjective, SearchConfig};
use typeforge::simplify::{simplify, SimplifyConfig};
use typeforge::synth::{generate_synthetic_world, SynthConfig};
use typeforge::typeclf::{label_corpus, train, TokenClassifierModel, TrainConfig};
use typeforge::typesys::{Labeler, MembershipCache, TypeSystem};
use typeforge::kg::Commonness;

use crate::service::{self, ServiceConfig, DEFAULT_RELATION_ROOTS};

#[derive(Parser, Debug)]
#[command(name = "typeforge", version, about = "Type system discovery and type-aware entity linking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate raw graph and link files and write them as a world directory.
    Ingest {
        #[arg(long)]
        entities: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        links: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic world directory.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON file with generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge link counts of mentions into their type parents.
    Simplify {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        links: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration TSV report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score candidate axes with window classifiers.
    Learnability {
        #[command(flatten)]
        pool: PoolArgs,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search for a type system maximizing the objective.
    Search {
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        pool: PoolArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long, default_value_t = typeforge::eval::DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Train the token type classifier.
    Train {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON file with training settings; defaults to the desk preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Link a corpus with a trained classifier.
    Link {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Fit a shared alpha and beta by grid search on this corpus first.
        #[arg(long)]
        fit_on: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PoolingArg::Max)]
        pooling: PoolingArg,
        /// Decisions as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Oracle statistics and error table for a type system.
    Evaluate {
        #[command(flatten)]
        world: WorldArgs,
        /// Authored system JSON; the empty system when absent.
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long, default_value_t = typeforge::eval::DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        learnability: f64,
    },
    /// Search under several lambdas and seeds; emits one TSV row per lambda.
    LambdaSweep {
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        pool: PoolArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4, 1e-5])]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long, value_enum, default_value_t = MethodArg::Greedy)]
        method: MethodArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simplify, search, train, smooth and link in one run.
    Pipeline {
        #[command(flatten)]
        world: WorldArgs,
        /// JSON file with pipeline settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the design-session HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value_t = DEFAULT_RELATION_ROOTS)]
        relation_roots: usize,
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct WorldArgs {
    /// Directory with entities.tsv and edges.tsv.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub links: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct PoolArgs {
    /// Edge kinds that define candidate axes.
    #[arg(long, value_delimiter = ',', default_values_t = [EdgeKind::InstanceOf, EdgeKind::WikipediaCategory])]
    pub kinds: Vec<EdgeKind>,
    /// Number of most common roots to consider.
    #[arg(long, default_value_t = 64)]
    pub roots: usize,
    #[arg(long, default_value_t = 4)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub learn_seed: u64,
}

impl PoolArgs {
    fn config(&self) -> LearnabilityConfig {
        LearnabilityConfig {
            runs: self.runs,
            seed: self.learn_seed,
            ..LearnabilityConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SearchArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Greedy)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub beam_width: usize,
    /// Use the reduced CEM and GA budgets.
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub max_evaluations: Option<usize>,
}

impl SearchArgs {
    fn config(&self) -> SearchConfig {
        let m = self.method.into();
        let base = if self.desk { SearchConfig::desk(m) } else { SearchConfig::method(m) };
        SearchConfig {
            seed: self.seed,
            beam_width: self.beam_width,
            max_evaluations: self.max_evaluations,
            ..base
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum MethodArg {
    Greedy,
    Beam,
    Cem,
    Ga,
    Random,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Greedy => Method::Greedy,
            MethodArg::Beam => Method::Beam,
            MethodArg::Cem => Method::Cem,
            MethodArg::Ga => Method::Ga,
            MethodArg::Random => Method::Random,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum PoolingArg {
    Max,
    Product,
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::Max => Pooling::Max,
            PoolingArg::Product => Pooling::Product,
        }
    }
}

struct World {
    graph: KnowledgeGraph,
    stats: LinkStats,
    corpus: AnnotatedCorpus,
}

impl WorldArgs {
    fn load(&self) -> Result<World> {
        let graph = load_graph(&self.graph).with_context(|| format!("loading graph from {}", self.graph.display()))?;
        let stats = load_links(&self.links, &graph).with_context(|| format!("loading {}", self.links.display()))?;
        let corpus = load_corpus(&self.corpus)?;
        Ok(World { graph, stats, corpus })
    }
}

fn load_corpus(path: &Path) -> Result<AnnotatedCorpus> {
    AnnotatedCorpus::load(path).with_context(|| format!("loading {}", path.display()))
}

fn load_system(path: &Path) -> Result<TypeSystem> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TypeSystem::from_json_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { entities, edges, links, out } => {
            let graph = load_graph_files(&entities, &edges)?;
            let stats = load_links(&links, &graph)?;
            std::fs::create_dir_all(&out)?;
            graph.save(&out)?;
            stats.save(&out.join("links.tsv"))?;
            print_json(&serde_json::json!({
                "entities": graph.len(),
                "edges": graph.edges().len(),
                "mentions": stats.len(),
                "links": stats.total_links(),
            }))
        }
        Command::Synth { seed, config, out } => {
            let cfg: SynthConfig = match config {
                Some(p) => load_json(&p)?,
                None => SynthConfig::default(),
            };
            let w = generate_synthetic_world(seed, &cfg)?;
            std::fs::create_dir_all(&out)?;
            w.save(&out)?;
            print_json(&serde_json::json!({
                "entities": w.graph.len(),
                "documents": w.corpus.documents.len(),
                "mentions": w.corpus.num_mentions(),
                "latent_axes": w.latent.len(),
            }))
        }
        Command::Simplify { graph, links, out, report } => {
            let g = load_graph(&graph)?;
            let stats = load_links(&links, &g)?;
            let (simplified, rep) = simplify(&stats, &g, &SimplifyConfig::default());
            simplified.save(&out)?;
            if let Some(p) = report {
                rep.write_tsv(create(&p)?)?;
            }
            print_json(&rep)
        }
        Command::Learnability { pool, graph, corpus, out } => {
            let g = load_graph(&graph)?;
            let c = load_corpus(&corpus)?;
            let rels = enumerate_relations(&g, &pool.kinds, Commonness::ChildCount, pool.roots);
            let scores = learnability(&rels, &c, &g, &pool.config())?;
            write_axis_tsv(&scores.axes, create(&out)?)?;
            print_json(&serde_json::json!({
                "axes": scores.axes.len(),
                "unlearnable": scores.axes.iter().filter(|a| a.unlearnable).count(),
                "mean_auc": scores.system,
            }))
        }
        Command::Search { world, pool, search, lambda, out, trace } => {
            let w = world.load()?;
            let mentions = resolve(&w.corpus, &w.stats, &w.graph);
            let cache = MembershipCache::new();
            let (cands, _) = discover_pool(&w.graph, &w.corpus, &pool.kinds, pool.roots, &pool.config(), &cache)?;
            let obj = OracleObjective::new(&cands, &mentions, ObjectiveConfig::new(lambda)?);
            let res = run_search(&obj, &search.config())?;
            let system = TypeSystem::from_relations(&cands.relations(&res.axes));
            std::fs::write(&out, system.to_json_string())?;
            if let Some(p) = trace {
                write_trace_tsv(&res.trace, &cands, create(&p)?)?;
            }
            print_json(&serde_json::json!({
                "method": res.method,
                "pool": cands.len(),
                "axes": res.axes.len(),
                "j": res.score.j,
                "s_oracle": res.score.accuracy,
                "s_greedy": obj.s_greedy(),
                "evaluations": res.evaluations,
                "iterations": res.iterations,
            }))
        }
        Command::Train { graph, corpus, system, out, config, epochs, seed } => {
            let g = load_graph(&graph)?;
            let c = load_corpus(&corpus)?;
            let sys = load_system(&system)?;
            let mut cfg: TrainConfig = match config {
                Some(p) => load_json(&p)?,
                None => desk_train_config(),
            };
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let labeling = label_corpus(&c, &g, &sys, &MembershipCache::new())?;
            let (model, report) = train(&c, &labeling, &cfg)?;
            model.save(&out)?;
            print_json(&report)
        }
        Command::Link { world, system, model, alpha, beta, fit_on, pooling, out } => {
            let w = world.load()?;
            let sys = load_system(&system)?;
            let model = TokenClassifierModel::load(&model)?;
            let labeler = Labeler::new(&w.graph, &sys, &MembershipCache::new())?;
            let pooling = Pooling::from(pooling);
            let params = match fit_on {
                Some(p) => {
                    if alpha.is_some() || beta.is_some() {
                        bail!("--fit-on cannot be combined with --alpha or --beta");
                    }
                    let dev = load_corpus(&p)?;
                    let dev_m = resolve(&dev, &w.stats, &w.graph);
                    fit_smoothing(&dev, &dev_m, &model, &labeler, &SmoothingGrid::default(), pooling)?.params
                }
                None => SmoothingParams::uniform(labeler.num_axes(), alpha.unwrap_or(0.9), beta.unwrap_or(0.9)),
            };
            let mentions = resolve(&w.corpus, &w.stats, &w.graph);
            let decisions = link_corpus(&w.corpus, &mentions, &model, &labeler, &params, pooling)?;
            if let Some(p) = out {
                let mut f = create(&p)?;
                for d in &decisions {
                    serde_json::to_writer(&mut f, d)?;
                    writeln!(f)?;
                }
            }
            let acc = system_accuracy(&predictions(&decisions), &mentions)?;
            print_json(&serde_json::json!({
                "params": params,
                "accuracy": acc.value(),
                "s_greedy": s_greedy(&mentions).value(),
                "hits": acc.hits,
                "total": acc.total,
            }))
        }
        Command::Evaluate { world, system, lambda, learnability } => {
            let w = world.load()?;
            let sys = match system {
                Some(p) => load_system(&p)?,
                None => TypeSystem::empty(),
            };
            let dw = DesignWorld::new(w.graph, w.stats, w.corpus, 0);
            let settings = DesignSettings {
                lambda,
                learnability,
                ..DesignSettings::default()
            };
            print_json(&evaluate_rules(&dw, &sys, &settings)?.response)
        }
        Command::LambdaSweep { world, pool, lambdas, seeds, method, out } => {
            let w = world.load()?;
            let mentions = resolve(&w.corpus, &w.stats, &w.graph);
            let cache = MembershipCache::new();
            let seed_list: Vec<u64> = (0..seeds).collect();
            let pools = seed_list
                .iter()
                .map(|&s| {
                    let cfg = LearnabilityConfig { seed: s, ..pool.config() };
                    discover_pool(&w.graph, &w.corpus, &pool.kinds, pool.roots, &cfg, &cache).map(|p| p.0)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let rows = lambda_sweep(&lambdas, &seed_list, &SearchConfig::desk(method.into()), |lambda, seed| {
                let cfg = ObjectiveConfig::new(lambda).expect("lambda checked");
                OracleObjective::new(&pools[seed as usize], &mentions, cfg)
            })?;
            match out {
                Some(p) => write_sweep_tsv(&rows, create(&p)?)?,
                None => write_sweep_tsv(&rows, std::io::stdout().lock())?,
            }
            Ok(())
        }
        Command::Pipeline { world, config, out } => {
            let w = world.load()?;
            let cfg: PipelineConfig = match config {
                Some(p) => load_json(&p)?,
                None => PipelineConfig::default(),
            };
            let res = run_pipeline(&w.graph, &w.stats, &w.corpus, &cfg)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("system.json"), res.system.to_json_string())?;
                res.stats.save(&dir.join("links.simplified.tsv"))?;
                if let Some(m) = &res.model {
                    m.save(&dir.join("model.json"))?;
                }
                serde_json::to_writer_pretty(create(&dir.join("report.json"))?, &res.report)?;
            }
            print_json(&serde_json::json!({
                "s_greedy": res.report.greedy.value(),
                "s_oracle": res.report.oracle.value(),
                "linked": res.report.linked.value(),
                "axes": res.system.len(),
                "smoothing": res.report.smoothing.as_ref().map(|s| &s.params),
            }))
        }
        Command::Serve { addr, relation_roots, snapshots } => {
            if let Some(d) = &snapshots {
                std::fs::create_dir_all(d)?;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(
                &addr,
                ServiceConfig {
                    relation_roots,
                    snapshot_dir: snapshots,
                },
            ))
        }
    }
}

use std::error::Error as StdError;
use std::fmt::Write as _;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use advtext_core::attack::{all_pairs, attack, overlap_study, run_campaign, AttackConfig, Knowledge, Strategies};
use advtext_core::codec::{tokenize, Alphabet, Doc, Vocabulary};
use advtext_core::desk::DeskModel;
use advtext_core::models::{
    evaluate, train_classifier, CharArch, Classifier, ClassifierHandle, ExternalOracle, OracleLimits, Transport,
    WordArch,
};
use advtext_core::nn::TrainConfig;
use advtext_core::occlusion::{deviations, hsps_from_table, mine_htps_black};
use advtext_core::perturb::Lexicons;
use advtext_core::saliency::{fgsm_baseline, hsps, mine_htps, token_scores, HotSpan, HtpTable, SaliencyConfig};
use advtext_core::store::{self, Settings};
use advtext_core::{desk, toydata};
use advtext_service::AppState;

use crate::{
    AttackArgs, AttackOpts, CampaignArgs, Cli, Command, DeskArg, EvalArgs, FgsmArgs, KindArg, MineArgs, ModeArg,
    OverlapArgs, ServeArgs, TextArgs, TextSource, TrainArgs,
};

type Result<T = ()> = std::result::Result<T, Box<dyn StdError>>;

/// Settings plus the command-level values that shaped this run.
struct Effective {
    settings: Settings,
    run: Vec<(&'static str, String)>,
}

impl Effective {
    fn set(&mut self, key: &'static str, value: impl ToString) {
        self.run.push((key, value.to_string()));
    }

    fn set_path(&mut self, key: &'static str, value: &Option<PathBuf>) {
        if let Some(p) = value {
            self.set(key, p.display());
        }
    }

    fn print(&self) {
        let mut s = String::from("# effective configuration\n");
        s.push_str(&self.settings.to_ini());
        if !self.run.is_empty() {
            s.push_str("[run]\n");
            for (k, v) in &self.run {
                let _ = writeln!(s, "{k}={v}");
            }
        }
        eprint!("{s}");
    }

    fn saliency(&self) -> SaliencyConfig {
        SaliencyConfig {
            hot_chars: self.settings.hot_chars,
            min_hot_chars: self.settings.min_hot_chars,
            hot_words: self.settings.hot_words,
        }
    }

    fn lexicons(&self) -> Result<Lexicons> {
        Ok(match &self.settings.lexicon_dir {
            Some(dir) => store::load_lexicons(dir, self.settings.year)?,
            None => Lexicons {
                year: self.settings.year,
                ..toydata::lexicons()
            },
        })
    }
}

pub fn run(cli: Cli) -> Result {
    let settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let mut eff = Effective {
        settings,
        run: Vec::new(),
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err("--jobs must be at least 1".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        eff.set("jobs", n);
    }
    eff.set_path("config", &cli.config);
    if let Some(dir) = &cli.make_toy_data {
        eff.set("make_toy_data", dir.display());
        eff.print();
        desk::write_toy_data(dir)?;
        println!("wrote toy corpora and lexicons to {}", dir.display());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err("no subcommand given; see --help".into());
    };
    match command {
        Command::Train(a) => train(eff, a),
        Command::Eval(a) => eval(eff, a),
        Command::HtpMine(a) => htp_mine(eff, a),
        Command::Saliency(a) => saliency(eff, a),
        Command::Occlude(a) => occlude(eff, a),
        Command::Attack(a) => attack_one(eff, a),
        Command::Campaign(a) => campaign(eff, a),
        Command::Overlap(a) => overlap(eff, a),
        Command::FgsmDemo(a) => fgsm_demo(eff, a),
        Command::Serve(a) => serve(eff, a),
    }
}

fn read_text(src: &TextSource) -> Result<String> {
    match (&src.text, &src.text_file) {
        (Some(t), _) => Ok(t.clone()),
        (None, Some(p)) => Ok(store::read_text(p)?.trim_end_matches(['\n', '\r']).to_string()),
        (None, None) => Err("give the text with --text or --text-file".into()),
    }
}

fn write_out(path: &Path, content: &str) -> Result {
    store::write_text(path, content)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn pct(p: f64) -> String {
    format!("{:.1}%", 100.0 * p)
}

fn conf_line(classes: &[String], probs: &[f64]) -> String {
    classes
        .iter()
        .zip(probs)
        .map(|(c, p)| format!("{c} {}", pct(*p)))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Labels in first-appearance order, unless a configured class list covers them.
fn resolve_classes(settings: &Settings, docs: &[Doc]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for d in docs {
        if let Some(l) = &d.label {
            if !seen.contains(l) {
                seen.push(l.clone());
            }
        }
    }
    for known in [&settings.topic_classes, &settings.sentiment_classes] {
        if !seen.is_empty() && seen.iter().all(|l| known.contains(l)) {
            return known.clone();
        }
    }
    seen
}

fn train(mut eff: Effective, a: TrainArgs) -> Result {
    let id =
        a.id.clone()
            .or_else(|| a.out.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "model".into());
    let (mut h, curve) = if let Some(d) = a.desk {
        let m = match d {
            DeskArg::TopicChar => DeskModel::TopicChar,
            DeskArg::TopicWord => DeskModel::TopicWord,
            DeskArg::SentimentChar => DeskModel::SentimentChar,
            DeskArg::SentimentWord => DeskModel::SentimentWord,
        };
        let cfg = m.train_config();
        eff.set("recipe", m.name());
        eff.set("len", m.input_len());
        eff.set("epochs", cfg.epochs);
        eff.set("learning_rate", format!("{:?}", cfg.learning_rate));
        eff.set("batch_size", cfg.batch_size);
        eff.set("seed", cfg.seed);
        eff.set("out", a.out.display());
        eff.print();
        m.train(&m.corpus())?
    } else {
        let s = &mut eff.settings;
        s.epochs = a.epochs.unwrap_or(s.epochs);
        s.learning_rate = a.learning_rate.unwrap_or(s.learning_rate);
        s.batch_size = a.batch_size.unwrap_or(s.batch_size);
        s.seed = a.seed.unwrap_or(s.seed);
        let len = a.len.unwrap_or(match a.kind {
            KindArg::Char => s.char_len,
            KindArg::Word => s.word_len,
        });
        match a.kind {
            KindArg::Char => s.char_len = len,
            KindArg::Word => s.word_len = len,
        }
        let path = a.data.as_ref().expect("clap requires --data without --desk");
        let docs = store::load_dataset(path)?;
        let classes = a
            .classes
            .clone()
            .unwrap_or_else(|| resolve_classes(&eff.settings, &docs));
        eff.set("data", path.display());
        eff.set("kind", format!("{:?}", a.kind).to_lowercase());
        eff.set("classes", classes.join(","));
        eff.set_path("embeddings", &a.embeddings);
        eff.set("out", a.out.display());
        eff.print();
        let s = &eff.settings;
        let mut h = match a.kind {
            KindArg::Char => {
                ClassifierHandle::build_char_cnn(&id, classes, Alphabet::default(), len, &CharArch::desk(), s.seed)?
            }
            KindArg::Word => {
                let vocab = match &a.embeddings {
                    Some(p) => Vocabulary::parse_embeddings(&store::read_text(p)?)?,
                    None => Vocabulary::build(docs.iter().map(|d| d.text()), 1, 20_000),
                };
                ClassifierHandle::build_word_cnn(&id, classes, vocab, len, &WordArch::default(), s.seed)?
            }
        };
        let cfg = TrainConfig {
            epochs: s.epochs,
            learning_rate: s.learning_rate,
            batch_size: s.batch_size,
            seed: s.seed,
        };
        let curve = train_classifier(&mut h, &docs, &cfg)?;
        (h, curve)
    };
    h.id = id;
    for (i, loss) in curve.iter().enumerate() {
        println!("epoch {:>3}  loss {loss:.6}", i + 1);
    }
    store::save_checkpoint(&a.out, &h)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn eval(mut eff: Effective, a: EvalArgs) -> Result {
    eff.set("model", a.model.display());
    eff.set("data", a.data.display());
    eff.set_path("out", &a.out);
    eff.print();
    let h = store::load_checkpoint(&a.model)?;
    let docs = store::load_dataset(&a.data)?;
    let report = evaluate(&h, &docs)?;
    print!("{}", report.render());
    if let Some(out) = &a.out {
        write_out(out, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn htp_mine(mut eff: Effective, a: MineArgs) -> Result {
    eff.settings.top_n = a.top_n.unwrap_or(eff.settings.top_n);
    eff.set("model", a.model.display());
    eff.set("data", a.data.display());
    eff.set("mode", format!("{:?}", a.mode).to_lowercase());
    eff.set_path("out", &a.out);
    eff.set_path("dump", &a.dump);
    eff.print();
    let h = store::load_checkpoint(&a.model)?;
    let docs = store::load_dataset(&a.data)?;
    let mined = match a.mode {
        ModeArg::White => mine_htps(&h, &docs, eff.settings.top_n, &eff.saliency())?,
        ModeArg::Black => mine_htps_black(&h, &docs, eff.settings.top_n)?,
    };
    print!("{}", mined.table.render());
    if let Some(out) = &a.out {
        write_out(out, &store::htp_to_string(&mined.table))?;
    }
    if let Some(dump) = &a.dump {
        write_out(dump, &store::dump_to_string(&mined.dump))?;
    }
    Ok(())
}

fn print_scores(doc: &Doc, scores: &[f64], spans: &[HotSpan]) {
    println!("{:>5}  {:>12}  token", "index", "score");
    for (i, (t, s)) in doc.tokens().iter().zip(scores).enumerate() {
        println!("{i:>5}  {s:>12.6}  {}", t.word);
    }
    println!("hot spans:");
    for s in spans {
        println!("  [{}, {})  {:>10.6}  {}", s.start, s.end, s.score, s.surface);
    }
}

fn scores_json(text: &str, scores: &[f64], spans: &[HotSpan]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&serde_json::json!({
        "tokens": tokenize(text),
        "scores": scores,
        "hsps": spans,
    }))?)
}

fn saliency(mut eff: Effective, a: TextArgs) -> Result {
    eff.settings.hot_words = a.k.unwrap_or(eff.settings.hot_words);
    eff.set("model", a.model.display());
    eff.set_path("out", &a.out);
    eff.print();
    let h = store::load_checkpoint(&a.model)?;
    let doc = Doc::unlabeled(read_text(&a.source)?);
    let scores = token_scores(&h, &doc)?;
    let spans = hsps(&h, &doc, &eff.saliency())?;
    print_scores(&doc, &scores, &spans);
    if let Some(out) = &a.out {
        write_out(out, &scores_json(doc.text(), &scores, &spans)?)?;
    }
    Ok(())
}

fn occlude(mut eff: Effective, a: TextArgs) -> Result {
    eff.settings.black_k = a.k.unwrap_or(eff.settings.black_k);
    eff.set("model", a.model.display());
    eff.set_path("out", &a.out);
    eff.print();
    let h = store::load_checkpoint(&a.model)?;
    let doc = Doc::unlabeled(read_text(&a.source)?);
    let (scores, spans) = if doc.tokens().is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let table = deviations(&h, &doc)?;
        let spans = hsps_from_table(&doc, &table, eff.settings.black_k);
        println!("predicted {}", h.classes()[table.class]);
        (table.deviations, spans)
    };
    print_scores(&doc, &scores, &spans);
    if let Some(out) = &a.out {
        write_out(out, &scores_json(doc.text(), &scores, &spans)?)?;
    }
    Ok(())
}

/// Attack settings and the HTP table; without a table, insertions are off
/// unless explicitly requested.
fn attack_setup(eff: &mut Effective, target: &str, o: &AttackOpts) -> Result<(AttackConfig, HtpTable)> {
    let s = &mut eff.settings;
    s.budget = o.budget.unwrap_or(s.budget);
    s.cap = o.cap.unwrap_or(s.cap);
    let strategies = match (&o.strategies, &o.htp) {
        (Some(list), _) => Strategies::parse(list)?,
        (None, Some(_)) => Strategies::ALL,
        (None, None) => Strategies {
            insert: false,
            ..Strategies::ALL
        },
    };
    let mut cfg = AttackConfig::new(target);
    cfg.budget = s.budget;
    cfg.cap = s.cap;
    cfg.min_gain = s.min_gain;
    cfg.black_k = s.black_k;
    cfg.strategies = strategies;
    cfg.knowledge = match o.mode {
        ModeArg::White => Knowledge::White,
        ModeArg::Black => Knowledge::Black,
    };
    cfg.saliency = eff.saliency();
    eff.set("mode", format!("{:?}", o.mode).to_lowercase());
    eff.set("strategies", strategies);
    eff.set_path("htp", &o.htp);
    let htps = match &o.htp {
        Some(p) => store::load_htp(p)?,
        None => HtpTable {
            classes: Vec::new(),
            entries: Vec::new(),
        },
    };
    Ok((cfg, htps))
}

fn attack_one(mut eff: Effective, a: AttackArgs) -> Result {
    eff.set("model", a.model.display());
    eff.set("target", &a.target);
    eff.set_path("out", &a.out);
    let (cfg, htps) = attack_setup(&mut eff, &a.target, &a.opts)?;
    let lex = eff.lexicons()?;
    eff.print();
    let h = store::load_checkpoint(&a.model)?;
    let doc = Doc::new("input", read_text(&a.source)?, None);
    let trace = attack(&h, &doc, &htps, &lex, &cfg)?;
    let classes = h.classes();
    println!("source {} -> target {}", trace.source, trace.target);
    let t = h.class_index(&trace.target)?;
    for (i, s) in trace.steps.iter().enumerate() {
        let p = &s.perturbation;
        println!(
            "{:>2}. {:?} {:?} at {}: {:?} -> {:?}  target {} -> {}",
            i + 1,
            p.kind,
            p.method,
            p.start,
            p.removed,
            p.inserted,
            pct(s.conf_before.get(t)),
            pct(s.conf_after.get(t))
        );
    }
    println!(
        "outcome {} after {} steps, {} classifications",
        trace.outcome,
        trace.steps.len(),
        trace.classifications
    );
    println!("final confidences: {}", conf_line(classes, trace.final_conf.probs()));
    println!("final text:\n{}", trace.final_text);
    if let Some(out) = &a.out {
        write_out(out, &store::trace_to_string(&trace))?;
    }
    Ok(())
}

fn campaign(mut eff: Effective, a: CampaignArgs) -> Result {
    eff.set("model", a.model.display());
    eff.set("data", a.data.display());
    eff.set("per_pair", a.per_pair);
    eff.set_path("out", &a.out);
    eff.set_path("traces", &a.traces);
    let (base, htps) = attack_setup(&mut eff, "", &a.opts)?;
    let lex = eff.lexicons()?;
    eff.print();
    let h = store::load_checkpoint(&a.model)?;
    let docs = store::load_dataset(&a.data)?;
    let pairs = all_pairs(h.classes());
    let (report, traces) = run_campaign(&h, &docs, &pairs, a.per_pair, &htps, &lex, &base)?;
    print!("{}", report.render());
    if let Some(out) = &a.out {
        write_out(out, &report.to_csv()?)?;
    }
    if let Some(path) = &a.traces {
        write_out(path, &serde_json::to_string_pretty(&traces)?)?;
    }
    Ok(())
}

fn overlap(mut eff: Effective, a: OverlapArgs) -> Result {
    eff.settings.top_n = a.top_n.unwrap_or(eff.settings.top_n);
    eff.set("white", a.white.display());
    eff.set("black", a.black.display());
    eff.set_path("out", &a.out);
    eff.print();
    let n = eff.settings.top_n;
    let counts = overlap_study(&store::load_htp(&a.white)?, &store::load_htp(&a.black)?, n)?;
    let mut csv = String::from("class,overlap,top_n\n");
    for (class, k) in &counts {
        println!("{class:<16} {k:>3}/{n}");
        let _ = writeln!(csv, "{class},{k},{n}");
    }
    if let Some(out) = &a.out {
        write_out(out, &csv)?;
    }
    Ok(())
}

fn fgsm_demo(mut eff: Effective, a: FgsmArgs) -> Result {
    eff.set("model", a.model.display());
    eff.set("epsilon", a.epsilon);
    eff.set_path("out", &a.out);
    eff.print();
    let h = store::load_checkpoint(&a.model)?;
    let doc = Doc::unlabeled(read_text(&a.source)?);
    let r = fgsm_baseline(&h, &doc, a.epsilon)?;
    println!(
        "before ({}):\n{}",
        conf_line(h.classes(), r.original.probs()),
        doc.text()
    );
    println!("after ({}):\n{}", conf_line(h.classes(), r.perturbed.probs()), r.text);
    println!("{} of {} characters changed", r.changed.len(), doc.char_len());
    if let Some(out) = &a.out {
        write_out(out, &r.text)?;
    }
    Ok(())
}

fn serve(mut eff: Effective, a: ServeArgs) -> Result {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse()?;
    eff.set("listen", addr);
    for m in &a.models {
        eff.set("model", m.display());
    }
    for e in a.htps.iter().chain(&a.externals) {
        eff.set("attach", e);
    }
    eff.set_path("snapshot_dir", &a.snapshot_dir);
    let lex = eff.lexicons()?;
    eff.print();
    let mut handles = Vec::new();
    for path in &a.models {
        handles.push(store::load_checkpoint(path)?);
    }
    for spec in &a.externals {
        let (id, url) = spec
            .split_once('=')
            .ok_or_else(|| format!("--external wants ID=URL, got `{spec}`"))?;
        let oracle = ExternalOracle::new(Transport::Http { url: url.to_string() }, OracleLimits::default())?;
        handles.push(ClassifierHandle::external(id, a.external_classes.clone(), oracle)?);
    }
    if handles.is_empty() {
        return Err("serve needs at least one --model or --external".into());
    }
    let mut tables = Vec::new();
    for spec in &a.htps {
        let (id, path) = spec
            .split_once('=')
            .ok_or_else(|| format!("--htp wants ID=FILE, got `{spec}`"))?;
        if !handles.iter().any(|h| h.id == id) {
            return Err(format!("--htp names unknown model `{id}`").into());
        }
        tables.push((id.to_string(), store::load_htp(Path::new(path))?));
    }
    let mut builder = AppState::builder(lex);
    for h in handles {
        let table = tables.iter().find(|(id, _)| *id == h.id).map(|(_, t)| t.clone());
        builder = builder.model(h, table);
    }
    if let Some(dir) = &a.snapshot_dir {
        builder = builder.snapshot_dir(dir);
    }
    let state = builder.build();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(advtext_service::serve(addr, state, |bound| {
        println!("listening on http://{bound}");
        let _ = std::io::stdout().flush();
    }))?;
    Ok(())
}

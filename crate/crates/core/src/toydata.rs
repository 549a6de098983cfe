//! Seeded generators for the bundled desk-scale corpora and lexicons.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::Doc;
use crate::perturb::Lexicons;

pub const TOPIC_CLASSES: [&str; 4] = ["Company", "Building", "Film", "Transportation"];
pub const SENTIMENT_CLASSES: [&str; 2] = ["Positive", "Negative"];

#[derive(Debug, Clone)]
pub struct Corpus {
    pub classes: Vec<String>,
    pub train: Vec<Doc>,
    pub test: Vec<Doc>,
}

struct TopicLex {
    nouns: &'static [&'static str],
    adjs: &'static [&'static str],
    facts: &'static [&'static str],
}

const COMPANY: TopicLex = TopicLex {
    nouns: &[
        "company",
        "corporation",
        "firm",
        "manufacturer",
        "retailer",
        "software company",
        "holding company",
    ],
    adjs: &["private", "public", "multinational", "family-owned", "independent"],
    facts: &[
        "The company was founded in {year} by {person} and is headquartered in {place}.",
        "It employs about {num} people and reported revenue of {num} million dollars.",
        "The firm sells its products and services to customers in {num} countries.",
        "In {year} the company was acquired by {name} Group and became a subsidiary.",
        "Its shares are traded on the stock exchange and investors include {person}.",
        "The business operates stores and offices across {place}.",
        "The corporation is a leading brand in the retail industry.",
        "Its software products are used by many businesses.",
    ],
};

const BUILDING: TopicLex = TopicLex {
    nouns: &[
        "building",
        "historic house",
        "church",
        "tower",
        "hall",
        "office building",
        "mansion",
    ],
    adjs: &["historic", "listed", "brick", "stone", "tall"],
    facts: &[
        "The building was constructed in {year} and designed by the architect {person}.",
        "It is listed on the National Register of Historic Places.",
        "The house has {small} floors and was built in the Gothic Revival style.",
        "The church was renovated in {year} and its tower is a local landmark.",
        "Its architecture combines stone walls with a brick facade.",
        "The historic hall now serves as a museum.",
        "The tower rises {num} feet above the street and has {small} storeys.",
        "The mansion was built for {person} in the nineteenth century.",
    ],
};

const FILM: TopicLex = TopicLex {
    nouns: &[
        "film",
        "drama film",
        "comedy film",
        "documentary film",
        "thriller",
        "movie",
    ],
    adjs: &["independent", "romantic", "animated", "silent", "crime"],
    facts: &[
        "The film was directed by {person} and stars {person} and {person}.",
        "It was released in {year} and premiered at the {name} Film Festival.",
        "The screenplay was written by {person}, based on a novel.",
        "The movie received mixed reviews but was a box office success.",
        "The cast also includes {person} in a supporting role.",
        "It was produced by {name} Pictures and filmed in {place}.",
        "A sequel to the film was released in {year}.",
        "The drama won an award for best director.",
    ],
};

const TRANSPORT: TopicLex = TopicLex {
    nouns: &[
        "aircraft",
        "ship",
        "locomotive",
        "steam locomotive",
        "cruiser",
        "automobile",
        "submarine",
    ],
    adjs: &["military", "passenger", "cargo", "diesel", "twin-engine"],
    facts: &[
        "The aircraft was designed by {name} Aviation and first flew in {year}.",
        "The ship was launched in {year} and served with the navy.",
        "The locomotive class was built for the {name} Railway.",
        "It is powered by a diesel engine and has a top speed of {num} km/h.",
        "The vessel had a displacement of {num} tons and a crew of {small} hundred.",
        "The car was produced as a sedan and a wagon.",
        "The submarine was commissioned in {year} and decommissioned later.",
        "The engine and the wings were redesigned for the later variant.",
    ],
};

const TOPIC_FILLER: &[&str] = &[
    "It is named after {person}, who lived in {place}.",
    "The name comes from a local word meaning river.",
    "{person} later wrote about it in a short book.",
    "In {year} it was mentioned in a report by the city council.",
    "Little is known about its early years.",
    "Several photographs from {year} survive in the archives.",
    "Its history is described in records from {place}.",
    "It became widely known in {place} after {year}.",
    "A description appears in a guide published in {year}.",
    "{person} visited it several times and described it in letters.",
    "The first public mention dates from {year}.",
    "Much of the early documentation was lost in a fire.",
    "It is often mentioned together with other examples from {place}.",
    "Since {year} its story has been told in several local newspapers.",
    "Records show that {person} was involved from the start.",
    "Its early years were shaped by events in {place}.",
];

const SYLLABLES: &[&str] = &[
    "ka", "ri", "mo", "len", "tor", "va", "bel", "dan", "es", "ko", "mar", "ru", "sel", "tin", "ab", "or", "hal", "pe",
    "gu", "nor",
];

const PLACES: &[&str] = &[
    "Ohio", "Texas", "London", "Berlin", "Toronto", "Sydney", "Chicago", "Paris", "Madrid", "Oslo", "Vienna", "Denver",
    "Glasgow", "Lisbon",
];

fn topic_lex(class: usize) -> &'static TopicLex {
    [&COMPANY, &BUILDING, &FILM, &TRANSPORT][class]
}

fn name(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=3);
    let mut s: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
    s[..1].make_ascii_uppercase();
    s
}

fn fill(template: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').expect("closed slot");
        let slot = match &rest[open + 1..close] {
            "year" => rng.gen_range(1850..2015).to_string(),
            "num" => rng.gen_range(12..990).to_string(),
            "small" => rng.gen_range(2..9).to_string(),
            "person" => format!("{} {}", name(rng), name(rng)),
            "name" => name(rng),
            "place" => PLACES.choose(rng).unwrap().to_string(),
            other => panic!("unknown slot {other}"),
        };
        out.push_str(&slot);
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}

fn article(word: &str) -> &'static str {
    if word.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

fn topic_doc(class: usize, rng: &mut ChaCha8Rng) -> String {
    let lex = topic_lex(class);
    let adj = lex.adjs.choose(rng).unwrap();
    let noun = lex.nouns.choose(rng).unwrap();
    let mut sentences = vec![format!(
        "{} is {} {adj} {noun} in {}.",
        name(rng),
        article(adj),
        PLACES.choose(rng).unwrap()
    )];
    let mut facts: Vec<&str> = lex.facts.to_vec();
    facts.shuffle(rng);
    let n_facts = rng.gen_range(3..=5);
    let mut body: Vec<String> = facts[..n_facts].iter().map(|f| fill(f, rng)).collect();
    let mut filler: Vec<&str> = TOPIC_FILLER.to_vec();
    filler.shuffle(rng);
    for f in &filler[..rng.gen_range(6..=9)] {
        body.push(fill(f, rng));
    }
    // occasional sentence borrowed from another class
    if rng.gen_bool(0.2) {
        let other = (class + rng.gen_range(1..4)) % 4;
        body.push(fill(topic_lex(other).facts.choose(rng).unwrap(), rng));
    }
    body.shuffle(rng);
    sentences.extend(body);
    sentences.join(" ")
}

const ASPECTS: &[&str] = &[
    "battery", "screen", "camera", "sound", "software", "keyboard", "price", "design", "speaker", "menu", "remote",
    "case",
];
const PRODUCTS: &[&str] = &[
    "phone", "player", "router", "camera", "laptop", "printer", "headset", "tablet",
];

const POSITIVE: &[&str] = &[
    "the {aspect} is {very}{padj}",
    "i love the {aspect}",
    "i love this {product}",
    "{padj} {aspect}",
    "the {aspect} works {very}well",
    "highly recommended",
    "this is the best {product} i have owned",
    "{very}happy with the {aspect}",
    "a {padj} {product}",
    "the {aspect} feels {very}{padj}",
    "great value",
    "the {aspect} is {very}easy to use",
    "{very}pleased with the {aspect}",
    "the {aspect} is {very}nice",
];

const NEGATIVE: &[&str] = &[
    "the {aspect} is {very}{nadj}",
    "the {aspect} does not work",
    "i would not buy it again",
    "{nadj} {aspect}",
    "the {aspect} broke after a {span}",
    "this is the worst {product} i have owned",
    "{very}disappointed with the {aspect}",
    "a {nadj} {product}",
    "the {aspect} is not good",
    "not worth the money",
    "the {aspect} stopped working",
    "there is a problem with the {aspect}",
    "the {aspect} is {very}slow",
    "the {aspect} is {very}annoying",
    "one flaw is the {aspect}",
];

const POS_ADJ: &[&str] = &[
    "great",
    "excellent",
    "amazing",
    "perfect",
    "fantastic",
    "solid",
    "superb",
];
const NEG_ADJ: &[&str] = &["terrible", "poor", "awful", "useless", "horrible", "flimsy", "cheap"];
const VERY: &[&str] = &["", "", "", "very ", "really ", "quite ", "pretty "];
const LEADS: &[&str] = &[
    "",
    "",
    "",
    "",
    "honestly , ",
    "so far ",
    "after a {span} ",
    "in short , ",
    "for me ",
];
const TAILS: &[&str] = &[
    "",
    "",
    "",
    "",
    " for the price",
    " in my opinion",
    " overall",
    " so far",
    " for daily use",
];
const SPANS: &[&str] = &["week", "month", "day", "year", "few days"];

const NEUTRAL: &[&str] = &[
    "i bought this {product} last {month}",
    "the {aspect} is black and silver",
    "it came in a small box with a cable",
    "i use the {product} every day for work",
    "my brother has the same {product}",
    "the {aspect} is on the left side",
    "it was delivered on a {day}",
    "i read the manual before using the {aspect}",
    "i got it as a gift from my wife",
    "the {aspect} has two buttons",
    "i mostly use it in the kitchen",
    "the {product} replaced an older one",
    "setup took about {num} minutes",
    "the box says it weighs {num} grams",
    "we have had it for a {span} now",
    "i ordered the blue version",
    "the {aspect} comes with a manual",
    "my old {product} was from another brand",
];

const MONTHS: &[&str] = &["january", "march", "june", "august", "october", "december"];
const DAYS: &[&str] = &["monday", "tuesday", "friday", "saturday"];

fn fill_review(template: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = template.to_string();
    for (slot, list) in [
        ("{aspect}", ASPECTS),
        ("{product}", PRODUCTS),
        ("{month}", MONTHS),
        ("{day}", DAYS),
        ("{padj}", POS_ADJ),
        ("{nadj}", NEG_ADJ),
        ("{very}", VERY),
        ("{span}", SPANS),
    ] {
        while out.contains(slot) {
            out = out.replacen(slot, list.choose(rng).unwrap(), 1);
        }
    }
    out.replace("{num}", &rng.gen_range(5..60).to_string())
}

fn opinion(list: &[&str], rng: &mut ChaCha8Rng) -> String {
    let core = list.choose(rng).unwrap();
    let lead = LEADS.choose(rng).unwrap();
    let tail = TAILS.choose(rng).unwrap();
    fill_review(&format!("{lead}{core}{tail} ."), rng)
}

fn review(class: usize, rng: &mut ChaCha8Rng) -> String {
    let (own, other) = if class == 0 {
        (POSITIVE, NEGATIVE)
    } else {
        (NEGATIVE, POSITIVE)
    };
    let mut parts: Vec<String> = (0..rng.gen_range(2..=3)).map(|_| opinion(own, rng)).collect();
    for _ in 0..rng.gen_range(2..=4) {
        parts.push(fill_review(&format!("{} .", NEUTRAL.choose(rng).unwrap()), rng));
    }
    if rng.gen_bool(0.15) {
        parts.push(format!("but {}", opinion(other, rng)));
        parts.push(opinion(own, rng));
    }
    let last = parts.len() - 1;
    parts[..last].shuffle(rng);
    parts.join(" ")
}

fn split(
    classes: &[&str],
    n_train: usize,
    n_test: usize,
    seed: u64,
    gen: fn(usize, &mut ChaCha8Rng) -> String,
) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |n: usize, id0: usize| -> Vec<Doc> {
        (0..n)
            .map(|i| {
                let class = i % classes.len();
                Doc::new(
                    (id0 + i).to_string(),
                    gen(class, &mut rng),
                    Some(classes[class].to_string()),
                )
            })
            .collect()
    };
    let mut train = make(n_train, 1);
    let test = make(n_test, 1);
    train.shuffle(&mut rng);
    for (i, d) in train.iter_mut().enumerate() {
        d.id = (i + 1).to_string();
    }
    Corpus {
        classes: classes.iter().map(|c| c.to_string()).collect(),
        train,
        test,
    }
}

/// Four-class encyclopedia-style corpus.
pub fn topic_corpus(n_train: usize, n_test: usize, seed: u64) -> Corpus {
    split(&TOPIC_CLASSES, n_train, n_test, seed, topic_doc)
}

/// Two-class product review corpus with space-separated punctuation.
pub fn sentiment_corpus(n_train: usize, n_test: usize, seed: u64) -> Corpus {
    split(&SENTIMENT_CLASSES, n_train, n_test, seed, review)
}

/// Up to three rule-made misspellings: an inner transposition, a dropped
/// inner letter and a doubled consonant.
pub fn misspellings_of(word: &str) -> Vec<String> {
    let c: Vec<char> = word.chars().collect();
    let n = c.len();
    let mut out = Vec::new();
    if n < 4 || !c.iter().all(|x| x.is_ascii_lowercase()) {
        return out;
    }
    if let Some(i) = (1..n - 2).find(|&i| c[i] != c[i + 1]) {
        let mut v = c.clone();
        v.swap(i, i + 1);
        out.push(v.into_iter().collect());
    }
    if let Some(i) = (1..n - 1).rev().find(|&i| "aeiou".contains(c[i])) {
        let mut v = c.clone();
        v.remove(i);
        out.push(v.into_iter().collect());
    }
    if let Some(i) = (1..n - 1).find(|&i| !"aeiou".contains(c[i]) && c[i] != c[i - 1] && c[i] != c[i + 1]) {
        let mut v = c.clone();
        v.insert(i, c[i]);
        out.push(v.into_iter().collect());
    }
    out.retain(|m| m != word);
    out.dedup();
    out
}

fn corpus_words() -> BTreeSet<String> {
    let mut texts: Vec<&str> = Vec::new();
    for lex in [&COMPANY, &BUILDING, &FILM, &TRANSPORT] {
        texts.extend(lex.nouns);
        texts.extend(lex.adjs);
        texts.extend(lex.facts);
    }
    for list in [
        TOPIC_FILLER,
        POSITIVE,
        NEGATIVE,
        NEUTRAL,
        ASPECTS,
        PRODUCTS,
        POS_ADJ,
        NEG_ADJ,
    ] {
        texts.extend(list);
    }
    texts
        .iter()
        .flat_map(|t| t.split(|c: char| !c.is_ascii_alphabetic()))
        .filter(|w| w.len() >= 4)
        .map(str::to_lowercase)
        .collect()
}

const DISPENSABLE: &[&str] = &[
    "very",
    "really",
    "quite",
    "also",
    "highly",
    "overall",
    "later",
    "widely",
    "famous",
    "notable",
    "local",
    "small",
    "large",
    "tall",
    "mixed",
    "private",
    "public",
    "independent",
    "multinational",
    "family-owned",
    "historic",
    "listed",
    "brick",
    "stone",
    "romantic",
    "animated",
    "silent",
    "crime",
    "military",
    "passenger",
    "cargo",
    "diesel",
    "twin-engine",
    "leading",
    "many",
    "short",
    "british",
    "nice",
    "easy",
    "every",
];

const PARAPHRASES: &[(&str, &str)] = &[
    ("different from", "not"),
    ("is headquartered in", "is based in"),
    ("was founded in", "started in"),
    ("was directed by", "was made by"),
    ("was constructed in", "was erected in"),
    ("was built for", "was made for"),
    ("box office success", "hit"),
    ("does not work", "fails"),
    ("would not buy", "won't buy"),
    ("highly recommended", "recommended"),
    ("is not good", "is bad"),
    ("i love", "i like"),
];

// Single-slot only: multi-slot payloads cost more characters than they gain.
const TEMPLATES: &[&str] = &[", a <htp>,", "( <htp> )"];

/// Lexicons matching the generated corpora.
pub fn lexicons() -> Lexicons {
    let misspellings = corpus_words()
        .into_iter()
        .filter_map(|w| {
            let m = misspellings_of(&w);
            (!m.is_empty()).then_some((w, m))
        })
        .collect();
    Lexicons {
        misspellings,
        homoglyphs: vec![('l', '1'), ('o', '0'), ('i', '1'), ('s', '5'), ('e', '3'), ('a', '@')],
        paraphrases: PARAPHRASES
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
        dispensable: DISPENSABLE.iter().map(|w| w.to_string()).collect(),
        templates: TEMPLATES.iter().map(|t| t.to_string()).collect(),
        year: 1996,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpora_are_seeded_and_balanced() {
        let a = topic_corpus(40, 8, 3);
        let b = topic_corpus(40, 8, 3);
        assert_eq!(a.train, b.train);
        for c in TOPIC_CLASSES {
            let n = a.train.iter().filter(|d| d.label.as_deref() == Some(c)).count();
            assert_eq!(n, 10);
        }
        assert_ne!(a.train, topic_corpus(40, 8, 4).train);
        let s = sentiment_corpus(10, 4, 1);
        assert!(s.test.iter().all(|d| d.text().ends_with('.')));
    }

    #[test]
    fn rule_misspellings() {
        assert_eq!(misspellings_of("film")[0], "flim");
        assert!(misspellings_of("cat").is_empty());
        let lex = lexicons();
        lex.validate().unwrap();
        assert!(lex.misspellings["building"].iter().all(|m| m != "building"));
    }
}

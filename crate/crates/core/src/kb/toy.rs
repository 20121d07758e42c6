// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic synthetic knowledge graph in the input triple format.
//!
//! Concepts belong to one of eight domains. Within a domain they draw
//! (relation, object) facts from shared pools, so same-domain concepts
//! overlap in knowledge and cross-domain concepts mostly do not. A sprinkling
//! of excluded-relation lines exercises the ingestion filter.

use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};

use crate::{rng, Error, Result};

/// The bundled toy graph: 1,000 concepts carrying 3,075 retained triples.
pub const BUNDLED_TOY_KB: &str = include_str!("../../data/toy_kb.tsv");
pub const BUNDLED_CONCEPTS: usize = 1000;
pub const BUNDLED_TRIPLES: usize = 3075;
pub const BUNDLED_SEED: u64 = 20251;

struct Domain {
    stem: &'static str,
    facts: &'static [(&'static str, &'static [&'static str])],
}

const DOMAINS: &[Domain] = &[
    Domain {
        stem: "beast",
        facts: &[
            ("IsA", &["animal", "creature", "mammal", "predator"]),
            ("HasA", &["fur", "claws", "tail", "teeth"]),
            ("CapableOf", &["run", "swim", "hunt", "climb"]),
            ("AtLocation", &["forest", "jungle", "zoo", "den"]),
            ("HasProperty", &["wild", "fast", "furry", "strong"]),
            ("PartOf", &["herd", "pack", "ecosystem"]),
            ("ReceivesAction", &["fed", "tamed", "hunted"]),
            ("LocatedNear", &["river", "cave"]),
        ],
    },
    Domain {
        stem: "gadget",
        facts: &[
            ("IsA", &["tool", "device", "implement", "utensil"]),
            ("MadeOf", &["steel", "iron", "wood", "plastic"]),
            ("UsedFor", &["cutting", "building", "repairing", "digging"]),
            ("AtLocation", &["workshop", "garage", "shed", "toolbox"]),
            ("HasProperty", &["sharp", "heavy", "durable", "handy"]),
            ("HasA", &["handle", "blade", "grip"]),
            ("ReceivesAction", &["sharpened", "repaired", "held"]),
            ("PartOf", &["toolkit", "workbench"]),
        ],
    },
    Domain {
        stem: "dish",
        facts: &[
            ("IsA", &["food", "meal", "snack", "delicacy"]),
            ("MadeOf", &["flour", "sugar", "rice", "milk"]),
            ("HasProperty", &["sweet", "salty", "spicy", "fresh"]),
            ("AtLocation", &["kitchen", "bakery", "market", "pantry"]),
            ("UsedFor", &["eating", "cooking", "feasting"]),
            ("ReceivesAction", &["cooked", "baked", "eaten", "served"]),
            ("HasA", &["crust", "filling", "sauce"]),
            ("LocatedNear", &["oven", "stove"]),
        ],
    },
    Domain {
        stem: "vehicle",
        facts: &[
            ("IsA", &["vehicle", "machine", "transport", "conveyance"]),
            ("HasA", &["wheels", "engine", "brakes", "seats"]),
            ("UsedFor", &["driving", "travel", "hauling", "racing"]),
            ("AtLocation", &["road", "highway", "port", "depot"]),
            ("CapableOf", &["accelerate", "carry", "turn"]),
            ("MadeOf", &["metal", "rubber", "glass"]),
            ("ReceivesAction", &["driven", "parked", "fueled"]),
            ("DefinedAs", &["a moving machine", "a means of transport"]),
        ],
    },
    Domain {
        stem: "plant",
        facts: &[
            ("IsA", &["plant", "shrub", "herb", "flower"]),
            ("HasA", &["leaves", "roots", "petals", "stems"]),
            ("AtLocation", &["garden", "meadow", "greenhouse", "field"]),
            ("HasProperty", &["green", "fragrant", "tall", "leafy"]),
            ("CapableOf", &["grow", "bloom", "photosynthesize"]),
            ("ReceivesAction", &["watered", "planted", "pruned"]),
            ("PartOf", &["hedge", "bouquet"]),
            ("InstanceOf", &["vegetation", "flora"]),
        ],
    },
    Domain {
        stem: "edifice",
        facts: &[
            ("IsA", &["building", "structure", "dwelling", "shelter"]),
            ("HasA", &["roof", "walls", "windows", "doors"]),
            ("MadeOf", &["brick", "stone", "concrete", "timber"]),
            ("AtLocation", &["city", "village", "street", "hill"]),
            ("UsedFor", &["living", "working", "storage"]),
            ("HasProperty", &["old", "spacious", "sturdy"]),
            ("PartOf", &["town", "district", "campus"]),
            ("LocatedNear", &["square", "park"]),
        ],
    },
    Domain {
        stem: "instrument",
        facts: &[
            ("IsA", &["instrument", "artifact", "apparatus"]),
            ("HasA", &["strings", "keys", "reed", "bell"]),
            ("UsedFor", &["music", "singing", "dancing", "performing"]),
            ("AtLocation", &["concert", "orchestra", "studio", "stage"]),
            ("MadeOf", &["brass", "maple", "copper"]),
            ("HasProperty", &["loud", "melodic", "resonant"]),
            ("ReceivesAction", &["played", "tuned", "strummed"]),
            ("FormOf", &["a flute", "a drum"]),
        ],
    },
    Domain {
        stem: "garment",
        facts: &[
            ("IsA", &["garment", "clothing", "apparel", "attire"]),
            ("MadeOf", &["cotton", "wool", "silk", "leather"]),
            ("UsedFor", &["wearing", "warmth", "fashion"]),
            ("AtLocation", &["closet", "wardrobe", "shop", "drawer"]),
            ("HasProperty", &["soft", "warm", "colorful", "elegant"]),
            ("HasA", &["buttons", "pockets", "sleeves", "collar"]),
            ("ReceivesAction", &["worn", "washed", "ironed", "folded"]),
            ("Synonym", &["outfit", "garb"]),
        ],
    },
];

const NOISE: &[(&str, &str)] = &[("Causes", "surprise"), ("RelatedTo", "thing"), ("HasContext", "daily life")];

/// Generates a triple file with exactly `n_triples` retained triples spread
/// over `n_concepts` concepts (each gets `n_triples / n_concepts`, some one
/// more), plus excluded-relation lines on every seventh concept.
pub fn generate_toy_kb(n_concepts: usize, n_triples: usize, seed: u64) -> Result<String> {
    if n_concepts == 0 || n_triples < n_concepts {
        return Err(Error::invalid(format!(
            "need at least one triple per concept (concepts={n_concepts}, triples={n_triples})"
        )));
    }
    let base = n_triples / n_concepts;
    let extra = n_triples % n_concepts;
    if base + 1 > 20 {
        return Err(Error::invalid("too many triples per concept for the toy domains"));
    }
    let mut rng = rng::stream(seed, "toy-kb");
    let mut order: Vec<usize> = (0..n_concepts).collect();
    order.shuffle(&mut rng);
    let mut counts = vec![base; n_concepts];
    for &i in &order[..extra] {
        counts[i] += 1;
    }

    let names: Vec<String> = (0..n_concepts)
        .map(|i| format!("{}{:04}", DOMAINS[i % DOMAINS.len()].stem, i))
        .collect();

    let mut out = String::from("# synthetic toy knowledge graph: subject<TAB>relation<TAB>object\n");
    for i in 0..n_concepts {
        let domain = &DOMAINS[i % DOMAINS.len()];
        let mut options: Vec<(String, String)> = domain
            .facts
            .iter()
            .flat_map(|(rel, objs)| objs.iter().map(move |o| (rel.to_string(), o.to_string())))
            .collect();
        // Concept-valued objects: a same-domain peer and a foreign concept.
        let same: Vec<usize> = (0..n_concepts).filter(|&j| j != i && j % DOMAINS.len() == i % DOMAINS.len()).collect();
        let other: Vec<usize> = (0..n_concepts).filter(|&j| j % DOMAINS.len() != i % DOMAINS.len()).collect();
        if let Some(&j) = same.choose(&mut rng) {
            options.push(("SimilarTo".into(), names[j].clone()));
        }
        if let Some(&j) = other.choose(&mut rng) {
            options.push(("DistinctFrom".into(), names[j].clone()));
        }
        if let Some(&j) = other.choose(&mut rng) {
            options.push(("Antonym".into(), names[j].clone()));
        }
        options.shuffle(&mut rng);

        // Prefer distinct relations per concept, then fill.
        let mut chosen: Vec<&(String, String)> = Vec::new();
        for opt in &options {
            if chosen.len() == counts[i] {
                break;
            }
            if chosen.iter().all(|c| c.0 != opt.0) {
                chosen.push(opt);
            }
        }
        for opt in &options {
            if chosen.len() == counts[i] {
                break;
            }
            if !chosen.contains(&opt) {
                chosen.push(opt);
            }
        }
        for (rel, obj) in chosen {
            writeln!(out, "{}\t{}\t{}", names[i], rel, obj).unwrap();
        }
        if i % 7 == 3 {
            let (rel, obj) = NOISE[(i / 7) % NOISE.len()];
            writeln!(out, "{}\t{}\t{}", names[i], rel, obj).unwrap();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{parse_knowledge_graph, IngestOptions};

    #[test]
    fn exact_counts() {
        let text = generate_toy_kb(50, 160, 1).unwrap();
        let kb = parse_knowledge_graph(&text, &IngestOptions::default()).unwrap();
        assert_eq!(kb.concepts.len(), 50);
        assert_eq!(kb.triples.len(), 160);
        assert!(kb.excluded_count > 0);
        assert_eq!(kb.duplicate_count, 0);
    }

    #[test]
    fn bundled_file_matches_generator() {
        let text = generate_toy_kb(BUNDLED_CONCEPTS, BUNDLED_TRIPLES, BUNDLED_SEED).unwrap();
        assert_eq!(text, BUNDLED_TOY_KB);
    }
}

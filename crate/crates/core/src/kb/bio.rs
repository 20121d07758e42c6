// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic biographies used as concept-free second-stage training data.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::{rng, Error, Result};

const CITIES: &[&str] = &[
    "london", "paris", "tokyo", "cairo", "lima", "oslo", "dublin", "madrid", "vienna", "prague", "seoul", "nairobi",
    "boston", "denver", "austin", "toronto", "sydney", "mumbai", "lisbon", "athens",
];
const EMPLOYERS: &[&str] = &[
    "acme", "globex", "initech", "umbrella", "hooli", "vandelay", "stark", "wayne", "wonka", "cyberdyne", "soylent",
    "tyrell", "aperture", "oscorp", "dunder", "monarch",
];
const FIELDS: &[&str] = &[
    "physics", "history", "biology", "economics", "medicine", "law", "music", "chemistry", "geology", "philosophy",
    "mathematics", "architecture", "linguistics", "astronomy",
];
const FIRST_SYLLABLES: &[&str] = &["Ca", "Jo", "Wil", "Ha", "Yu", "Cle", "Hen", "Ja", "We", "Chri", "Ju", "Hol"];
const LAST_SYLLABLES: &[&str] = &["ton", "ley", "wick", "more", "field", "by", "ham", "croft", "well", "combe"];

const BIRTH: &[&str] = &[
    "{name} was born in {year} .",
    "{name} came into the world in {year} .",
    "the birth year of {name} is {year} .",
];
const CITY: &[&str] = &[
    "{name} grew up in {city} .",
    "{name} spent childhood years in {city} .",
    "{name} lived in {city} for many years .",
];
const WORK: &[&str] = &[
    "{name} works for {employer} .",
    "{name} is employed by {employer} .",
    "{name} joined {employer} after school .",
];
const STUDY: &[&str] = &[
    "{name} studied {field} .",
    "{name} holds a degree in {field} .",
    "{name} wrote a thesis on {field} .",
];

/// Lowercased vocabulary of the corpus, excluding the person names. Fictional
/// concept names are drawn to avoid these words.
pub(crate) fn reserved_words() -> impl Iterator<Item = String> {
    let templates = BIRTH.iter().chain(CITY).chain(WORK).chain(STUDY);
    CITIES
        .iter()
        .chain(EMPLOYERS)
        .chain(FIELDS)
        .map(|w| w.to_string())
        .chain(templates.flat_map(|t| t.split_whitespace().map(|w| w.to_lowercase())))
        .chain(std::iter::once("the".to_string()))
}

/// Deterministic biographies: four sentences per person covering birth year,
/// city, employer and field. Person names are capitalised pseudo-words, which
/// keeps them disjoint from the lowercase fictional concept names.
pub fn generate_bio_corpus(n_people: usize, seed: u64) -> Result<Vec<String>> {
    if n_people == 0 {
        return Err(Error::invalid("n_people must be at least 1"));
    }
    let mut rng = rng::stream(seed, "bio");
    let mut out = Vec::with_capacity(4 * n_people);
    let mut used = std::collections::HashSet::new();
    for i in 0..n_people {
        let mut name = format!(
            "{}{} {}{}",
            FIRST_SYLLABLES.choose(&mut rng).unwrap(),
            ["n", "ra", "lie", "so", "ma"].choose(&mut rng).unwrap(),
            ["Mc", "Ash", "Bro", "Kin", "Dal"].choose(&mut rng).unwrap(),
            LAST_SYLLABLES.choose(&mut rng).unwrap(),
        );
        if !used.insert(name.clone()) {
            name = format!("{name} {}", roman(i + 1));
            used.insert(name.clone());
        }
        let year = rng.random_range(1900..2005).to_string();
        let fill = |t: &str, key: &str, val: &str| t.replace("{name}", &name).replace(key, val);
        out.push(fill(BIRTH.choose(&mut rng).unwrap(), "{year}", &year));
        out.push(fill(CITY.choose(&mut rng).unwrap(), "{city}", CITIES.choose(&mut rng).unwrap()));
        out.push(fill(WORK.choose(&mut rng).unwrap(), "{employer}", EMPLOYERS.choose(&mut rng).unwrap()));
        out.push(fill(STUDY.choose(&mut rng).unwrap(), "{field}", FIELDS.choose(&mut rng).unwrap()));
    }
    Ok(out)
}

fn roman(mut n: usize) -> String {
    const TABLE: &[(usize, &str)] = &[
        (1000, "M"),
        (900, "CM"),
        (500, "D"),
        (400, "CD"),
        (100, "C"),
        (90, "XC"),
        (50, "L"),
        (40, "XL"),
        (10, "X"),
        (9, "IX"),
        (5, "V"),
        (4, "IV"),
        (1, "I"),
    ];
    let mut s = String::new();
    for &(v, r) in TABLE {
        while n >= v {
            s.push_str(r);
            n -= v;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_people_rejected() {
        assert!(generate_bio_corpus(0, 1).is_err());
    }

    #[test]
    fn deterministic_and_sized() {
        let a = generate_bio_corpus(100, 4).unwrap();
        assert_eq!(a, generate_bio_corpus(100, 4).unwrap());
        assert!(a.len() >= 300);
        assert_ne!(a, generate_bio_corpus(100, 5).unwrap());
    }

    #[test]
    fn roman_numerals() {
        assert_eq!(roman(1994), "MCMXCIV");
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::{map_relation_category, Concept, ConceptSplit, Concreteness, KnowledgeBase, KnowledgeTriple, RelationType};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownRelationPolicy {
    /// Drop the line, count it and log a warning.
    #[default]
    DropWithWarning,
    Error,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub unknown_relation: UnknownRelationPolicy,
}

/// Reads a triple file. See [`parse_knowledge_graph`] for the format.
pub fn load_knowledge_graph(path: &Path, opts: &IngestOptions) -> Result<KnowledgeBase> {
    let text = std::fs::read_to_string(path)?;
    parse_knowledge_graph(&text, opts).map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        },
        other => other,
    })
}

/// Parses `subject<TAB>relation<TAB>object[<TAB>concreteness]` lines.
///
/// Blank lines and lines starting with `#` are skipped. Triples whose
/// relation maps to the excluded category are dropped and counted, exact
/// duplicate triples are collapsed. Concept ids follow first appearance as
/// the subject of a retained triple.
pub fn parse_knowledge_graph(text: &str, opts: &IngestOptions) -> Result<KnowledgeBase> {
    let mut kb = KnowledgeBase::default();
    let mut concept_ids: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<(String, String, String)> = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(parse_err(line_no, format!("expected 3 or 4 tab-separated fields, found {}", fields.len())));
        }
        let (subject, relation, object) = (fields[0], fields[1], fields[2]);
        if subject.is_empty() || relation.is_empty() || object.is_empty() {
            return Err(parse_err(line_no, "empty subject, relation or object"));
        }
        let concreteness = match fields.get(3).copied() {
            None | Some("") => None,
            Some("concrete") => Some(Concreteness::Concrete),
            Some("abstract") => Some(Concreteness::Abstract),
            Some(other) => return Err(parse_err(line_no, format!("unknown concreteness `{other}`"))),
        };

        let relation = RelationType::new(relation);
        let category = map_relation_category(&relation);
        if !category.is_retained() {
            if relation.is_known() {
                kb.excluded_count += 1;
            } else {
                match opts.unknown_relation {
                    UnknownRelationPolicy::DropWithWarning => {
                        log::warn!("line {line_no}: dropping unknown relation `{relation}`");
                        kb.unknown_count += 1;
                    }
                    UnknownRelationPolicy::Error => {
                        return Err(Error::UnknownRelation {
                            relation: relation.0,
                            line: line_no,
                        })
                    }
                }
            }
            continue;
        }

        if !seen.insert((subject.to_string(), relation.0.clone(), object.to_string())) {
            kb.duplicate_count += 1;
            continue;
        }

        let next_id = kb.concepts.len();
        let subject_id = *concept_ids.entry(subject.to_string()).or_insert_with(|| {
            kb.concepts.push(Concept {
                id: next_id,
                real_name: subject.to_string(),
                fictional_name: String::new(),
                concreteness,
                split: ConceptSplit::TrainOnly,
            });
            next_id
        });
        if kb.concepts[subject_id].concreteness.is_none() {
            kb.concepts[subject_id].concreteness = concreteness;
        }
        kb.triples.push(KnowledgeTriple {
            id: kb.triples.len(),
            subject: subject_id,
            relation,
            object: object.to_string(),
            category,
        });
    }
    Ok(kb)
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: "<input>".into(),
        line,
        msg: msg.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::KnowledgeCategory;

    #[test]
    fn excluded_relation_is_dropped_and_counted() {
        let text = "dog\tIsA\tanimal\ndog\tCauses\tbarking\nwheel\tPartOf\tcar\n";
        let kb = parse_knowledge_graph(text, &IngestOptions::default()).unwrap();
        assert_eq!(kb.triples.len(), 2);
        assert_eq!(kb.excluded_count, 1);
        assert_eq!(kb.triples[0].category, KnowledgeCategory::HAH);
        assert_eq!(kb.triples[1].category, KnowledgeCategory::MAH);
        assert_eq!(kb.concepts.len(), 2);
    }

    #[test]
    fn empty_input_is_empty_kb() {
        let kb = parse_knowledge_graph("", &IngestOptions::default()).unwrap();
        assert!(kb.concepts.is_empty());
        assert!(kb.triples.is_empty());
    }

    #[test]
    fn duplicates_collapse_to_a_set() {
        let lines = ["dog\tIsA\tanimal", "dog\tIsA\tanimal", "cat\tIsA\tanimal", "dog\tIsA\tanimal"];
        let kb = parse_knowledge_graph(&lines.join("\n"), &IngestOptions::default()).unwrap();
        let distinct: HashSet<&str> = lines.iter().copied().collect();
        assert_eq!(kb.triples.len(), distinct.len());
        assert_eq!(kb.duplicate_count, 2);
    }

    #[test]
    fn malformed_line_names_its_number() {
        let text = "# header\ndog\tIsA\tanimal\nbroken line without tabs\n";
        match parse_knowledge_graph(text, &IngestOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_relation_policy() {
        let text = "dog\tIsA\tanimal\ndog\tSnorts\tloudly\n";
        let kb = parse_knowledge_graph(text, &IngestOptions::default()).unwrap();
        assert_eq!((kb.triples.len(), kb.unknown_count, kb.excluded_count), (1, 1, 0));

        let strict = IngestOptions {
            unknown_relation: UnknownRelationPolicy::Error,
        };
        assert!(matches!(
            parse_knowledge_graph(text, &strict),
            Err(Error::UnknownRelation { line: 2, .. })
        ));
    }

    #[test]
    fn optional_concreteness_column() {
        let text = "dog\tIsA\tanimal\tconcrete\nidea\tIsA\tthought\tabstract\n";
        let kb = parse_knowledge_graph(text, &IngestOptions::default()).unwrap();
        assert_eq!(kb.concepts[0].concreteness, Some(Concreteness::Concrete));
        assert_eq!(kb.concepts[1].concreteness, Some(Concreteness::Abstract));
    }
}

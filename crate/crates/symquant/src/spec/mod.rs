//! Protocol specification language: abstract syntax, parser, printer, checker.

mod ast;
mod parse;
mod print;
mod typecheck;

pub use ast::*;
pub use parse::{parse_certificate, parse_formula, parse_spec};
pub use print::print_spec;
pub use typecheck::{typecheck, Diagnostic};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("duplicate declaration of {kind} `{name}`")]
    Duplicate { kind: &'static str, name: String },
    #[error("unknown {kind} `{name}` in {context}")]
    Unknown {
        kind: &'static str,
        name: String,
        context: String,
    },
    #[error("no safety property declared")]
    NoSafety,
    #[error("no init declared")]
    NoInit,
    #[error("spec has errors: {}", .0.iter().map(|d| d.message.as_str()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
}

/// Parses and typechecks in one step.
pub fn load_spec(text: &str) -> Result<ProtocolSpec, SpecError> {
    let spec = parse_spec(text)?;
    let diags = typecheck(&spec);
    if diags.is_empty() {
        Ok(spec)
    } else {
        Err(SpecError::Invalid(diags))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn toy_consensus_shape() {
        let spec = parse_spec(corpus::TOY_CONSENSUS).unwrap();
        let sorts: Vec<_> = spec.sorts.iter().map(|s| (s.name.as_str(), s.kind.clone())).collect();
        assert_eq!(
            sorts,
            vec![
                ("node", SortKind::Independent),
                ("value", SortKind::Independent),
                ("quorum", SortKind::Majority { base: "node".into() }),
            ]
        );
        let state: Vec<_> = spec
            .state_relations()
            .map(|r| (r.name.as_str(), r.arg_sorts.clone()))
            .collect();
        assert_eq!(
            state,
            vec![
                ("vote", vec!["node".to_string(), "value".to_string()]),
                ("decision", vec!["value".to_string()]),
            ]
        );
        let defs: Vec<_> = spec.definitions().map(|r| r.name.as_str()).collect();
        assert_eq!(defs, vec!["didNotVote", "chosenAt"]);
        assert!(spec.relations.iter().any(|r| r.role
            == RelationRole::Membership {
                dependent: "quorum".into()
            }));
        assert!(typecheck(&spec).is_empty());
    }

    #[test]
    fn empty_document_has_no_safety() {
        assert_eq!(parse_spec("").unwrap_err(), SpecError::NoSafety);
        assert_eq!(
            parse_spec("; only a comment\n").unwrap_err().to_string(),
            "no safety property declared"
        );
    }

    #[test]
    fn undeclared_sort_names_relation() {
        let err = parse_spec("(sort node)\n(relation vote (node value))\n(init true)\n(safety true)").unwrap_err();
        assert_eq!(
            err,
            SpecError::Unknown {
                kind: "sort",
                name: "value".into(),
                context: "relation vote".into()
            }
        );
        assert!(err.to_string().contains("relation vote"));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_spec("(sort node)\n(relation r (node)\n").unwrap_err();
        assert!(matches!(err, SpecError::Syntax { line: 2, col: 1, .. }), "{err:?}");
        let err = parse_spec("(sort node)\n(init (and (r x))) (safety true)").unwrap_err();
        assert!(matches!(err, SpecError::Unknown { kind: "relation", .. }), "{err:?}");
        let err = parse_spec("(sort a)\n(sort a)\n(init true)(safety true)").unwrap_err();
        assert_eq!(
            err,
            SpecError::Duplicate {
                kind: "sort",
                name: "a".into()
            }
        );
    }

    #[test]
    fn double_update_is_diagnosed() {
        let text = "(sort node)(relation r (node))(init true)
            (action X ((n node)) :update ((r (forall ((N node)) (r' N))) (r (forall ((N node)) (r' N)))))
            (safety true)";
        let diags = typecheck(&parse_spec(text).unwrap());
        assert_eq!(
            diags.iter().map(|d| d.message.as_str()).collect::<Vec<_>>(),
            vec!["relation r updated twice in action X"]
        );
    }

    #[test]
    fn self_reference_is_cyclic() {
        let text = "(sort node)(definition (d (n node)) (d n))(init true)(safety true)";
        let diags = typecheck(&parse_spec(text).unwrap());
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.starts_with("cyclic definition"), "{diags:?}");
    }

    #[test]
    fn scoping_and_primes_are_checked() {
        let text = "(sort node)(sort value)(relation r (node))(relation s (node))
            (init (r X))
            (action A ((n node)) :guard (r' n) :update ((r (and (s' n) (r' n)))))
            (safety (forall ((V value)) (r V)))";
        let msgs: Vec<String> = typecheck(&parse_spec(text).unwrap())
            .into_iter()
            .map(|d| d.message)
            .collect();
        assert_eq!(
            msgs,
            vec![
                "argument 1 of r has sort value, expected node in safety",
                "primed relation r' outside an action update in action A",
                "unbound variable X in init",
                "update of r mentions primed relation s' in action A",
            ]
        );
    }

    #[test]
    fn corpus_round_trips() {
        for b in corpus::all() {
            let spec = parse_spec(b.text).unwrap();
            assert!(typecheck(&spec).is_empty(), "{}: {:?}", b.name, typecheck(&spec));
            let printed = print_spec(&spec);
            assert_eq!(parse_spec(&printed).unwrap(), spec, "{}", b.name);
        }
    }

    #[test]
    fn certificate_forms_parse() {
        let spec = parse_spec(corpus::TOY_CONSENSUS).unwrap();
        let fs = parse_certificate(
            &spec,
            "; comment\n(invariant (forall ((V value)) (exists ((Q quorum)) (or (not (decision V)) (chosenAt Q V)))))\n(safety true)",
        )
        .unwrap();
        assert_eq!(fs.len(), 2);
    }
}

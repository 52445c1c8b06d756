//! Named character bank: each character contributes one or more exemplar
//! embeddings; assignment costs are distances to a single representative
//! exemplar per character, picked by highest mean similarity to the rest.

use std::collections::BTreeSet;
use std::path::Path;

use crate::chapter::Embedding;
use crate::error::Error;
use crate::{Result, DEFAULT_ETA};

#[derive(Debug, Clone, PartialEq)]
pub struct BankCharacter {
    pub name: String,
    /// Unit-normalized; non-empty; all the same dimension.
    pub exemplars: Vec<Embedding>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacterBank {
    /// Cost of the catch-all "other" label, strictly positive.
    pub eta: f64,
    pub characters: Vec<BankCharacter>,
}

/// Crop-by-label cost matrix: `rows[i][j]` is the cost of giving crop `i`
/// the bank character `j`; column `num_named` is the constant "other" cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: Vec<Vec<f64>>,
    pub num_named: usize,
    pub eta: f64,
}

impl CostMatrix {
    /// Number of crops.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column index of the "other" label.
    pub fn other_label(&self) -> usize {
        self.num_named
    }
}

impl CharacterBank {
    pub fn new(eta: f64, characters: Vec<BankCharacter>) -> Result<Self> {
        let bank = CharacterBank { eta, characters };
        bank.validate()?;
        Ok(bank)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: raw::Bank = serde_json::from_str(s).map_err(|source| Error::Json {
            path: "<string>".into(),
            source,
        })?;
        Self::from_raw(raw)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.into(),
            source,
        })?;
        let raw: raw::Bank = serde_json::from_str(&body).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        Self::from_raw(raw)
    }

    pub fn to_json_string(&self) -> String {
        let raw = raw::Bank {
            eta: Some(self.eta),
            characters: self
                .characters
                .iter()
                .map(|c| raw::Character {
                    name: c.name.clone(),
                    exemplars: c
                        .exemplars
                        .iter()
                        .map(|e| e.as_slice().to_vec())
                        .collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&raw).expect("bank serializes");
        s.push('\n');
        s
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|source| Error::Write {
            path: path.into(),
            source,
        })
    }

    fn from_raw(raw: raw::Bank) -> Result<Self> {
        let mut characters = Vec::with_capacity(raw.characters.len());
        for rc in raw.characters {
            let exemplars = rc
                .exemplars
                .into_iter()
                .map(Embedding::unit)
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::invalid("bank", format!("character {:?}: {e}", rc.name)))?;
            characters.push(BankCharacter {
                name: rc.name,
                exemplars,
            });
        }
        Self::new(raw.eta.unwrap_or(DEFAULT_ETA), characters)
    }

    fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(Error::invalid(
                "bank",
                format!("eta must be positive, got {}", self.eta),
            ));
        }
        let mut names = BTreeSet::new();
        let mut dim = None;
        for c in &self.characters {
            if c.name.is_empty() {
                return Err(Error::invalid("bank", "empty character name"));
            }
            if c.name == "other" {
                return Err(Error::invalid(
                    "bank",
                    "\"other\" is reserved for the catch-all label",
                ));
            }
            if !names.insert(c.name.as_str()) {
                return Err(Error::invalid(
                    "bank",
                    format!("duplicate character name {:?}", c.name),
                ));
            }
            if c.exemplars.is_empty() {
                return Err(Error::invalid(
                    "bank",
                    format!("character {:?} has no exemplars", c.name),
                ));
            }
            for e in &c.exemplars {
                match dim {
                    None => dim = Some(e.dim()),
                    Some(d) if d != e.dim() => {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            found: e.dim(),
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Number of named characters.
    pub fn len(&self) -> usize {
        self.characters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.characters.is_empty()
    }

    /// Exemplar dimension; None for an empty bank.
    pub fn dim(&self) -> Option<usize> {
        self.characters.first().map(|c| c.exemplars[0].dim())
    }

    pub fn names(&self) -> Vec<&str> {
        self.characters.iter().map(|c| c.name.as_str()).collect()
    }

    /// Label column index -> display name; column `len()` is "other".
    pub fn label_name(&self, label: usize) -> &str {
        if label < self.characters.len() {
            &self.characters[label].name
        } else {
            "other"
        }
    }

    /// The exemplar with the highest mean dot product against the
    /// character's other exemplars; ties resolve to the lowest index.
    /// A single exemplar represents itself.
    pub fn representative(&self, char_index: usize) -> Result<&Embedding> {
        let c = self
            .characters
            .get(char_index)
            .ok_or_else(|| Error::input(format!("no bank character at index {char_index}")))?;
        Ok(representative_of(&c.exemplars))
    }

    /// One representative per character, bank order.
    pub fn representatives(&self) -> Vec<&Embedding> {
        self.characters
            .iter()
            .map(|c| representative_of(&c.exemplars))
            .collect()
    }

    /// Distance rows from each embedding to every representative, with the
    /// constant eta column appended.
    pub fn cost_matrix(&self, embeddings: &[Embedding]) -> Result<CostMatrix> {
        let reps = self.representatives();
        if let Some(bank_dim) = self.dim() {
            for e in embeddings {
                if e.dim() != bank_dim {
                    return Err(Error::DimensionMismatch {
                        expected: bank_dim,
                        found: e.dim(),
                    });
                }
            }
        }
        let rows = embeddings
            .iter()
            .map(|e| {
                let mut row: Vec<f64> = reps.iter().map(|r| e.distance(r)).collect();
                row.push(self.eta);
                row
            })
            .collect();
        Ok(CostMatrix {
            rows,
            num_named: self.characters.len(),
            eta: self.eta,
        })
    }
}

fn representative_of(exemplars: &[Embedding]) -> &Embedding {
    if exemplars.len() == 1 {
        return &exemplars[0];
    }
    let mut best = 0usize;
    let mut best_sim = f64::NEG_INFINITY;
    for (i, e) in exemplars.iter().enumerate() {
        let total: f64 = exemplars
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, o)| dot(e.as_slice(), o.as_slice()))
            .sum();
        let mean = total / (exemplars.len() - 1) as f64;
        if mean > best_sim {
            best_sim = mean;
            best = i;
        }
    }
    &exemplars[best]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

mod raw {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    pub struct Bank {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub eta: Option<f64>,
        pub characters: Vec<Character>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct Character {
        pub name: String,
        pub exemplars: Vec<Vec<f64>>,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn unit(v: Vec<f64>) -> Embedding {
        Embedding::unit(v).unwrap()
    }

    #[test]
    fn parses_with_default_eta() {
        let bank = CharacterBank::from_json_str(
            r#"{"characters": [{"name": "alice", "exemplars": [[1.0, 0.0]]}]}"#,
        )
        .unwrap();
        assert_eq!(bank.eta, DEFAULT_ETA);
        assert_eq!(bank.len(), 1);
        assert_eq!(bank.dim(), Some(2));
    }

    #[test]
    fn round_trips() {
        let bank = CharacterBank::from_json_str(
            r#"{"eta": 0.5, "characters": [
                {"name": "alice", "exemplars": [[1.0, 0.0], [0.8, 0.6]]},
                {"name": "bob", "exemplars": [[0.0, 1.0]]}
            ]}"#,
        )
        .unwrap();
        let back = CharacterBank::from_json_str(&bank.to_json_string()).unwrap();
        assert_eq!(bank, back);
    }

    #[test]
    fn rejects_bad_banks() {
        for (json, needle) in [
            (r#"{"characters": [{"name": "a", "exemplars": [[1.0]]}, {"name": "a", "exemplars": [[1.0]]}]}"#, "duplicate"),
            (r#"{"characters": [{"name": "a", "exemplars": []}]}"#, "no exemplars"),
            (r#"{"eta": 0.0, "characters": []}"#, "eta"),
            (r#"{"eta": -1.0, "characters": []}"#, "eta"),
            (r#"{"characters": [{"name": "", "exemplars": [[1.0]]}]}"#, "empty character name"),
            (r#"{"characters": [{"name": "other", "exemplars": [[1.0]]}]}"#, "reserved"),
            (r#"{"characters": [{"name": "a", "exemplars": [[0.0, 0.0]]}]}"#, "zero-norm"),
        ] {
            let err = CharacterBank::from_json_str(json).unwrap_err();
            assert!(err.to_string().contains(needle), "{json} -> {err}");
        }
    }

    #[test]
    fn rejects_mixed_dims() {
        let err = CharacterBank::from_json_str(
            r#"{"characters": [
                {"name": "a", "exemplars": [[1.0, 0.0]]},
                {"name": "b", "exemplars": [[1.0]]}
            ]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn single_exemplar_represents_itself() {
        let bank = CharacterBank::new(
            0.75,
            vec![BankCharacter {
                name: "a".into(),
                exemplars: vec![unit(vec![0.0, 1.0])],
            }],
        )
        .unwrap();
        assert_eq!(bank.representative(0).unwrap(), &unit(vec![0.0, 1.0]));
    }

    #[test]
    fn representative_is_the_central_exemplar() {
        // Unit circle at 0, 30, 60 degrees: the middle one maximizes mean
        // similarity to the others.
        let at = |deg: f64| {
            let r = deg.to_radians();
            unit(vec![r.cos(), r.sin()])
        };
        let bank = CharacterBank::new(
            0.75,
            vec![BankCharacter {
                name: "a".into(),
                exemplars: vec![at(0.0), at(30.0), at(60.0)],
            }],
        )
        .unwrap();
        assert_eq!(bank.representative(0).unwrap(), &at(30.0));
    }

    #[test]
    fn representative_tie_takes_lowest_index() {
        let e = unit(vec![1.0, 0.0]);
        let bank = CharacterBank::new(
            0.75,
            vec![BankCharacter {
                name: "a".into(),
                exemplars: vec![e.clone(), e.clone(), unit(vec![0.0, 1.0])],
            }],
        )
        .unwrap();
        // Exemplars 0 and 1 are identical, hence tied; index 0 wins.
        let rep = bank.representative(0).unwrap() as *const _;
        assert_eq!(rep, &bank.characters[0].exemplars[0] as *const _);
    }

    #[test]
    fn representative_matches_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [2usize, 5, 16] {
            for m in 2usize..=7 {
                let exemplars: Vec<Embedding> = (0..m)
                    .map(|_| {
                        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                        Embedding::unit(v).unwrap()
                    })
                    .collect();
                // Oracle: scan every candidate, mean dot product to others.
                let mut oracle = 0usize;
                let mut oracle_best = f64::NEG_INFINITY;
                for i in 0..m {
                    let mut total = 0.0;
                    for j in 0..m {
                        if i != j {
                            total += exemplars[i]
                                .as_slice()
                                .iter()
                                .zip(exemplars[j].as_slice())
                                .map(|(x, y)| x * y)
                                .sum::<f64>();
                        }
                    }
                    let mean = total / (m - 1) as f64;
                    if mean > oracle_best {
                        oracle_best = mean;
                        oracle = i;
                    }
                }
                let got = representative_of(&exemplars) as *const _;
                assert_eq!(got, &exemplars[oracle] as *const _, "dim {dim} m {m}");
            }
        }
    }

    #[test]
    fn cost_matrix_appends_eta_column() {
        let bank = CharacterBank::new(
            0.75,
            vec![
                BankCharacter {
                    name: "a".into(),
                    exemplars: vec![unit(vec![1.0, 0.0])],
                },
                BankCharacter {
                    name: "b".into(),
                    exemplars: vec![unit(vec![0.0, 1.0])],
                },
            ],
        )
        .unwrap();
        let m = bank.cost_matrix(&[unit(vec![1.0, 0.0])]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.num_named, 2);
        assert_eq!(m.other_label(), 2);
        assert!((m.rows[0][0] - 0.0).abs() < 1e-12);
        assert!((m.rows[0][1] - 2.0_f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.rows[0][2], 0.75);
    }

    #[test]
    fn cost_matrix_rejects_dim_mismatch() {
        let bank = CharacterBank::new(
            0.75,
            vec![BankCharacter {
                name: "a".into(),
                exemplars: vec![unit(vec![1.0, 0.0])],
            }],
        )
        .unwrap();
        let err = bank.cost_matrix(&[unit(vec![1.0, 0.0, 0.0])]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn label_names_cover_other() {
        let bank = CharacterBank::new(
            0.75,
            vec![BankCharacter {
                name: "a".into(),
                exemplars: vec![unit(vec![1.0, 0.0])],
            }],
        )
        .unwrap();
        assert_eq!(bank.label_name(0), "a");
        assert_eq!(bank.label_name(1), "other");
    }
}

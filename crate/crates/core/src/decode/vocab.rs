//! SMILES token vocabulary with per-token element and charge contributions.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::chem::{parse_molecule, Element};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const ARROW: &str = ">>";

pub const BOS_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const UNK_ID: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Bos,
    Eos,
    Unk,
    Arrow,
    Dot,
    /// An atom; `charge` is the formal charge of a bracket atom.
    Atom {
        element: Element,
        charge: i64,
    },
    /// Ring digits, bonds, branches and anything else without atoms.
    Other,
}

/// Splits SMILES text into lexemes: bracket atoms, two-letter organic
/// symbols, `%nn` ring labels, the `>>` arrow and single characters.
pub fn lex(s: &str) -> Vec<&str> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let len = match b[i] {
            b'[' => s[i..].find(']').map_or(s.len() - i, |j| j + 1),
            b'C' if b.get(i + 1) == Some(&b'l') => 2,
            b'B' if b.get(i + 1) == Some(&b'r') => 2,
            b'%' if b.len() >= i + 3 && b[i + 1].is_ascii_digit() && b[i + 2].is_ascii_digit() => 3,
            b'>' if b.get(i + 1) == Some(&b'>') => 2,
            _ => s[i..].chars().next().map_or(1, char::len_utf8),
        };
        out.push(&s[i..i + len]);
        i += len;
    }
    out
}

fn classify(tok: &str) -> TokenKind {
    match tok {
        BOS => return TokenKind::Bos,
        EOS => return TokenKind::Eos,
        UNK => return TokenKind::Unk,
        ARROW => return TokenKind::Arrow,
        "." => return TokenKind::Dot,
        _ => {}
    }
    let atomic = tok.starts_with('[')
        || matches!(
            tok,
            "B" | "C"
                | "N"
                | "O"
                | "P"
                | "S"
                | "F"
                | "Cl"
                | "Br"
                | "I"
                | "b"
                | "c"
                | "n"
                | "o"
                | "p"
                | "s"
        );
    if !atomic {
        return TokenKind::Other;
    }
    let element = if tok.starts_with('[') {
        // strip isotope, then take the longest known symbol
        let inner = tok
            .trim_start_matches('[')
            .trim_start_matches(|c: char| c.is_ascii_digit());
        let mut e = None;
        for len in [2, 1] {
            if let Some(sym) = inner.get(..len) {
                let cap = capitalize(sym);
                if let Some(el) = Element::from_symbol(&cap) {
                    if len == 2 && !sym[1..].chars().all(|c| c.is_ascii_lowercase()) {
                        continue;
                    }
                    e = Some(el);
                    break;
                }
            }
        }
        match e {
            Some(e) => e,
            None => return TokenKind::Other,
        }
    } else {
        Element::from_symbol(&capitalize(tok)).expect("organic subset symbol")
    };
    let charge = if tok.starts_with('[') {
        bracket_charge(tok)
    } else {
        0
    };
    TokenKind::Atom { element, charge }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

fn bracket_charge(tok: &str) -> i64 {
    let inner = tok.trim_start_matches('[').trim_end_matches(']');
    let inner = inner.split(':').next().unwrap_or("");
    let Some(pos) = inner.find(['+', '-']) else {
        return 0;
    };
    let sign = if inner[pos..].starts_with('+') { 1 } else { -1 };
    let rest = &inner[pos..];
    let digits: String = rest[1..].chars().take_while(char::is_ascii_digit).collect();
    if !digits.is_empty() {
        return sign * digits.parse::<i64>().unwrap_or(1);
    }
    // "++" / "--"
    sign * rest
        .chars()
        .take_while(|&c| c == rest.chars().next().unwrap())
        .count() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TokenVocabulary {
    tokens: Vec<String>,
    kinds: Vec<TokenKind>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for TokenVocabulary {
    fn from(tokens: Vec<String>) -> Self {
        TokenVocabulary::from_tokens(tokens)
    }
}

impl From<TokenVocabulary> for Vec<String> {
    fn from(v: TokenVocabulary) -> Self {
        v.tokens
    }
}

impl TokenVocabulary {
    /// Specials come first (BOS, EOS, UNK); duplicates are ignored.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut all = vec![BOS.to_string(), EOS.to_string(), UNK.to_string()];
        let mut seen: BTreeSet<String> = all.iter().cloned().collect();
        for t in tokens {
            if seen.insert(t.clone()) {
                all.push(t);
            }
        }
        let kinds = all.iter().map(|t| classify(t)).collect();
        let index = all
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        TokenVocabulary {
            tokens: all,
            kinds,
            index,
        }
    }

    /// Every lexeme of the given texts, sorted, plus the arrow.
    pub fn from_corpus<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set = BTreeSet::new();
        set.insert(ARROW.to_string());
        for t in texts {
            set.extend(lex(t).into_iter().map(str::to_string));
        }
        Self::from_tokens(set)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn kind(&self, id: u32) -> TokenKind {
        self.kinds[id as usize]
    }

    pub fn arrow_id(&self) -> Option<u32> {
        self.id(ARROW)
    }

    /// Lexes `s` and maps each lexeme to its id; lexemes missing from the
    /// vocabulary become UNK.
    pub fn tokenize(&self, s: &str) -> Vec<u32> {
        lex(s)
            .into_iter()
            .map(|t| self.id(t).unwrap_or(UNK_ID))
            .collect()
    }

    /// Concatenates token texts, skipping BOS and EOS.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&i| i != BOS_ID && i != EOS_ID)
            .map(|&i| self.token(i))
            .collect()
    }
}

/// Element of an atom token checked by parsing it as a molecule; used to
/// cross-check the contribution table. Aromatic atoms are parsed in their
/// aliphatic spelling since a lone aromatic atom is not valid SMILES.
pub fn parsed_contribution(token: &str) -> Option<(Element, i64)> {
    let m = parse_molecule(token).ok().or_else(|| {
        let pos = token.find(|c: char| c.is_ascii_alphabetic())?;
        let mut t = token.to_string();
        t[pos..pos + 1].make_ascii_uppercase();
        parse_molecule(&t).ok()
    })?;
    let a = m.atoms().first()?;
    (m.atoms().len() == 1).then_some((a.element, a.charge as i64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexing() {
        assert_eq!(lex("CCO"), vec!["C", "C", "O"]);
        assert_eq!(
            lex("c1ccccc1Cl"),
            vec!["c", "1", "c", "c", "c", "c", "c", "1", "Cl"]
        );
        assert_eq!(
            lex("[Na+].[Cl-]>>[Na]Cl"),
            vec!["[Na+]", ".", "[Cl-]", ">>", "[Na]", "Cl"]
        );
        assert_eq!(lex("C%12CC%12"), vec!["C", "%12", "C", "C", "%12"]);
        assert_eq!(lex("BrCB"), vec!["Br", "C", "B"]);
    }

    #[test]
    fn unknown_bracket_is_unk() {
        let v = TokenVocabulary::from_corpus(["CCO"]);
        let ids = v.tokenize("[Se]C");
        assert_eq!(ids, vec![UNK_ID, v.id("C").unwrap()]);
    }

    #[test]
    fn round_trip() {
        let s = "CC(=O)O.OCC>>CC(=O)OCC.O";
        let v = TokenVocabulary::from_corpus([s]);
        assert_eq!(v.detokenize(&v.tokenize(s)), s);
    }

    #[test]
    fn contributions_match_parsing() {
        let v = TokenVocabulary::from_corpus([
            "[Na+].[Cl-].[NH4+].[O-2].[13CH3-].c1ccncc1Br.[Fe+++]>>[H+].[Se]",
        ]);
        for id in 0..v.len() as u32 {
            if let TokenKind::Atom { element, charge } = v.kind(id) {
                assert_eq!(
                    parsed_contribution(v.token(id)),
                    Some((element, charge)),
                    "{}",
                    v.token(id)
                );
            }
        }
        assert_eq!(v.kind(v.id(ARROW).unwrap()), TokenKind::Arrow);
        assert_eq!(v.kind(v.id("(").unwrap_or(UNK_ID)), TokenKind::Unk);
    }

    #[test]
    fn serde_as_token_list() {
        let v = TokenVocabulary::from_corpus(["CCO>>CC=O"]);
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.starts_with(r#"["<s>","</s>","<unk>""#));
        let back: TokenVocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}

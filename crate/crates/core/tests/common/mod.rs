//! Synthetic template corpus shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rxnbench::reaction::{parse_reaction, ReactionRecord};
use rxnbench::rules::CompletionRule;

/// Substituents that attach through their last written atom.
pub const ALKYL: [&str; 10] = [
    "C", "CC", "CCC", "CC(C)", "CCCC", "CC(C)C", "CCCCC", "C1CCCCC1", "COCC", "CCOCC",
];
pub const ARYL: [&str; 10] = [
    "c1ccccc1",
    "Cc1ccccc1",
    "c1ccc(Cl)cc1",
    "c1ccc(F)cc1",
    "c1ccc(OC)cc1",
    "c1ccc(C)cc1",
    "c1cc(F)ccc1",
    "c1ccc(C(F)(F)F)cc1",
    "c1ccc2ccccc2c1",
    "c1ccncc1",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub id: String,
    pub incomplete: String,
    pub complete: String,
    pub template: String,
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).copied().expect("nonempty pool")
}

/// Reactants, products and the product indices dropped from the input.
type Built = (Vec<String>, Vec<String>, Vec<usize>, Vec<usize>);

fn family(k: usize, rng: &mut ChaCha8Rng) -> Built {
    let s = |x: &str| x.to_string();
    match k {
        // esterification, water missing
        0 => {
            let (a, b) = (pick(rng, &ALKYL), pick(rng, &ALKYL));
            (
                vec![format!("{a}C(=O)O"), format!("{b}O")],
                vec![format!("{a}C(=O)O{b}"), s("O")],
                vec![],
                vec![1],
            )
        }
        // amide from acid chloride, HCl missing
        1 => {
            let (a, b) = (pick(rng, &ARYL), pick(rng, &ALKYL));
            (
                vec![format!("{a}C(=O)Cl"), format!("{b}N")],
                vec![format!("{a}C(=O)N{b}"), s("Cl")],
                vec![],
                vec![1],
            )
        }
        // Suzuki coupling, boron byproduct missing
        2 => {
            let (a, b) = (pick(rng, &ARYL), pick(rng, &ARYL));
            (
                vec![format!("{a}Br"), format!("OB(O){b}")],
                vec![format!("{a}{}", b.replace('1', "9")), s("OB(O)Br")],
                vec![],
                vec![1],
            )
        }
        // Boc removal, CO2 and isobutene missing
        3 => {
            let a = pick(rng, &ALKYL);
            (
                vec![format!("{a}NC(=O)OC(C)(C)C")],
                vec![format!("{a}N"), s("O=C=O"), s("C=C(C)C")],
                vec![],
                vec![1, 2],
            )
        }
        // ester hydrolysis, water and alcohol missing
        4 => {
            let (a, b) = (
                pick(rng, &ARYL),
                pick(rng, &["CCCC", "CCCCC", "CC(C)CC", "CCCCCC"]),
            );
            (
                vec![format!("{a}C(=O)O{b}"), s("O")],
                vec![format!("{a}C(=O)O"), format!("{b}O")],
                vec![1],
                vec![1],
            )
        }
        // Wittig olefination, phosphine oxide missing
        5 => {
            let a = pick(rng, &ARYL);
            (
                vec![format!("{a}C=O"), s("C=P(c1ccccc1)(c1ccccc1)c1ccccc1")],
                vec![format!("{a}C=C"), s("O=P(c1ccccc1)(c1ccccc1)c1ccccc1")],
                vec![],
                vec![1],
            )
        }
        // reductive amination, hydrogen and water missing
        6 => {
            let (a, b) = (pick(rng, &ALKYL), pick(rng, &ALKYL));
            (
                vec![format!("{a}C=O"), format!("{b}N"), s("[H][H]")],
                vec![format!("{a}CN{b}"), s("O")],
                vec![2],
                vec![1],
            )
        }
        // phenol acetylation, acetic acid missing
        7 => {
            let a = pick(rng, &ARYL);
            (
                vec![format!("{a}O"), s("CC(=O)OC(C)=O")],
                vec![format!("{a}OC(C)=O"), s("CC(=O)O")],
                vec![],
                vec![1],
            )
        }
        // tosylation, HCl missing
        8 => {
            let a = pick(rng, &ALKYL);
            (
                vec![format!("{a}O"), s("Cc1ccc(S(=O)(=O)Cl)cc1")],
                vec![format!("{a}OS(=O)(=O)c1ccc(C)cc1"), s("Cl")],
                vec![],
                vec![1],
            )
        }
        // silyl ether cleavage, silyl fluoride missing
        _ => {
            let a = pick(rng, &ALKYL);
            (
                vec![format!("{a}O[Si](C)(C)C(C)(C)C"), s("F")],
                vec![format!("{a}O"), s("C[Si](C)(F)C(C)(C)C")],
                vec![],
                vec![1],
            )
        }
    }
}

pub const FAMILIES: usize = 10;

fn join(mols: &[String], skip: &[usize]) -> String {
    mols.iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(_, m)| m.as_str())
        .collect::<Vec<_>>()
        .join(".")
}

/// `n` reactions spread round-robin over the template families.
pub fn planted_corpus(n: usize, seed: u64) -> Vec<Row> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let k = if i < FAMILIES {
                i
            } else {
                rng.random_range(0..FAMILIES)
            };
            let (r, p, drop_r, drop_p) = family(k, &mut rng);
            Row {
                id: format!("rxn{i:05}"),
                incomplete: format!("{}>>{}", join(&r, &drop_r), join(&p, &drop_p)),
                complete: format!("{}>>{}", join(&r, &[]), join(&p, &[])),
                template: format!("t{k}"),
            }
        })
        .collect()
}

/// One planted row from a seed-chosen family.
pub fn planted_row(seed: u64) -> Row {
    planted_corpus(FAMILIES + 1, seed).pop().unwrap()
}

pub fn corpus_tsv(rows: &[Row]) -> String {
    let mut s = String::from("id\tincomplete_rxn\tcomplete_rxn\ttemplate_hash\n");
    for r in rows {
        writeln!(
            s,
            "{}\t{}\t{}\t{}",
            r.id, r.incomplete, r.complete, r.template
        )
        .unwrap();
    }
    s
}

pub fn write_corpus(path: &Path, rows: &[Row]) {
    std::fs::write(path, corpus_tsv(rows)).unwrap();
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Atom kinds for random molecules: (SMILES text, bond capacity, may form double bonds).
const KINDS: [(&str, u8, bool); 9] = [
    ("C", 4, true),
    ("N", 3, true),
    ("O", 2, true),
    ("S", 2, true),
    ("F", 1, false),
    ("Cl", 1, false),
    ("Br", 1, false),
    ("[O-]", 1, false),
    ("c9ccccc9", 1, false),
];
const KIND_WEIGHTS: [u32; 9] = [50, 10, 15, 5, 5, 5, 3, 3, 4];

/// Separate ionic or small components mixed into random reactions.
pub const SMALL: [&str; 8] = [
    "[Na+]", "[Cl-]", "[NH4+]", "[OH-]", "O", "[H+]", "[K+]", "[Br-]",
];

fn pick_kind(rng: &mut ChaCha8Rng) -> usize {
    let mut x = rng.random_range(0..KIND_WEIGHTS.iter().sum::<u32>());
    KIND_WEIGHTS
        .iter()
        .position(|&w| {
            let hit = x < w;
            x = x.saturating_sub(w);
            hit
        })
        .unwrap()
}

/// Random acyclic molecule with at most one extra ring closure, written
/// directly as SMILES. Valence is respected by construction.
pub fn random_molecule(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=10);
    let mut kinds = vec![pick_kind(rng)];
    let mut free = vec![KINDS[kinds[0]].1];
    let mut children: Vec<Vec<(usize, u8)>> = vec![Vec::new()];
    let mut parent = vec![usize::MAX];
    for _ in 1..n {
        let open: Vec<usize> = (0..kinds.len()).filter(|&i| free[i] > 0).collect();
        if open.is_empty() {
            break;
        }
        let k = pick_kind(rng);
        let p = open[rng.random_range(0..open.len())];
        let i = kinds.len();
        let order = if KINDS[k].2
            && KINDS[kinds[p]].2
            && free[p] >= 2
            && KINDS[k].1 >= 2
            && rng.random_bool(0.2)
        {
            2
        } else {
            1
        };
        kinds.push(k);
        free.push(KINDS[k].1 - order);
        free[p] -= order;
        children.push(Vec::new());
        children[p].push((i, order));
        parent.push(p);
    }
    // one ring closure between two non-adjacent open atoms
    let mut ring = Vec::new();
    if rng.random_bool(0.3) {
        let open: Vec<usize> = (0..kinds.len())
            .filter(|&i| free[i] > 0 && KINDS[kinds[i]].2)
            .collect();
        'outer: for (x, &a) in open.iter().enumerate() {
            for &b in &open[x + 1..] {
                if parent[a] != b && parent[b] != a && parent[a] != parent[b] {
                    ring = vec![a, b];
                    break 'outer;
                }
            }
        }
    }
    fn write(
        i: usize,
        kinds: &[usize],
        children: &[Vec<(usize, u8)>],
        ring: &[usize],
        out: &mut String,
    ) {
        out.push_str(KINDS[kinds[i]].0);
        if ring.contains(&i) {
            out.push('1');
        }
        let bond = |o: u8| if o == 2 { "=" } else { "" };
        let last = children[i].len().saturating_sub(1);
        for (k, &(c, o)) in children[i].iter().enumerate() {
            if k < last {
                out.push('(');
            }
            out.push_str(bond(o));
            write(c, kinds, children, ring, out);
            if k < last {
                out.push(')');
            }
        }
    }
    let mut s = String::new();
    write(0, &kinds, &children, &ring, &mut s);
    s
}

/// Random reaction text: one to three random molecules or small species per side.
pub fn random_reaction(rng: &mut ChaCha8Rng) -> String {
    let side = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(1..=3);
        (0..n)
            .map(|_| {
                if rng.random_bool(0.25) {
                    SMALL[rng.random_range(0..SMALL.len())].to_string()
                } else {
                    random_molecule(rng)
                }
            })
            .collect::<Vec<_>>()
            .join(".")
    };
    let r = side(rng);
    let p = side(rng);
    format!("{r}>>{p}")
}

/// Element counts and net charge of a SMILES string, computed directly from
/// its characters. Covers the subset of SMILES emitted by the generators
/// above and the fixtures: organic-subset atoms with lowest-valence
/// hydrogen filling, simple aromatic rings, bracket atoms, branches, ring
/// digits and '=' bonds.
pub fn oracle_formula(smiles: &str) -> (BTreeMap<String, i64>, i64) {
    struct A {
        sym: String,
        aromatic: bool,
        bracket: Option<i64>,
        single: u32,
        arom_bonds: u32,
    }
    let b = smiles.as_bytes();
    let mut atoms: Vec<A> = Vec::new();
    let mut counts: BTreeMap<String, i64> = BTreeMap::new();
    let mut charge = 0i64;
    let mut prev: Option<usize> = None;
    let mut stack: Vec<Option<usize>> = Vec::new();
    let mut rings: BTreeMap<u8, (usize, u32)> = BTreeMap::new();
    let mut pending: Option<u32> = None;
    let connect = |atoms: &mut Vec<A>, x: usize, y: usize, order: Option<u32>| {
        if order.is_none() && atoms[x].aromatic && atoms[y].aromatic {
            atoms[x].arom_bonds += 1;
            atoms[y].arom_bonds += 1;
        } else {
            let o = order.unwrap_or(1);
            atoms[x].single += o;
            atoms[y].single += o;
        }
    };
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        match c {
            '.' => prev = None,
            '(' => stack.push(prev),
            ')' => prev = stack.pop().unwrap(),
            '=' => pending = Some(2),
            '#' => pending = Some(3),
            '-' => pending = Some(1),
            '0'..='9' => {
                let a = prev.unwrap();
                if let Some((other, order)) = rings.remove(&b[i]) {
                    connect(
                        &mut atoms,
                        a,
                        other,
                        pending
                            .take()
                            .or(if order == 0 { None } else { Some(order) }),
                    );
                } else {
                    rings.insert(b[i], (a, pending.take().unwrap_or(0)));
                }
            }
            '[' => {
                let end = i + smiles[i..].find(']').unwrap();
                let inner = &smiles[i + 1..end];
                let mut chars = inner.char_indices().peekable();
                let (_, first) = chars.next().unwrap();
                let mut sym = first.to_ascii_uppercase().to_string();
                if let Some(&(_, l)) = chars.peek() {
                    if l.is_ascii_lowercase() {
                        sym.push(l);
                        chars.next();
                    }
                }
                let rest: String = chars.map(|(_, ch)| ch).collect();
                let mut h = 0;
                let mut q = 0;
                let mut r = rest.as_str();
                if let Some(t) = r.strip_prefix('H') {
                    let digits: String = t.chars().take_while(char::is_ascii_digit).collect();
                    h = if digits.is_empty() {
                        1
                    } else {
                        digits.parse().unwrap()
                    };
                    r = &t[digits.len()..];
                }
                if let Some(sign) = r.chars().next() {
                    let s = if sign == '+' { 1 } else { -1 };
                    let digits: String = r[1..].chars().take_while(char::is_ascii_digit).collect();
                    q = s * if digits.is_empty() {
                        r.chars().filter(|&x| x == sign).count() as i64
                    } else {
                        digits.parse().unwrap()
                    };
                }
                *counts.entry(sym.clone()).or_insert(0) += 1;
                if h > 0 {
                    *counts.entry("H".into()).or_insert(0) += h;
                }
                charge += q;
                atoms.push(A {
                    sym,
                    aromatic: first.is_ascii_lowercase(),
                    bracket: Some(h),
                    single: 0,
                    arom_bonds: 0,
                });
                let a = atoms.len() - 1;
                if let Some(p) = prev {
                    connect(&mut atoms, p, a, pending.take());
                }
                prev = Some(a);
                i = end;
            }
            _ => {
                let two = smiles.get(i..i + 2);
                let sym = if two == Some("Cl") || two == Some("Br") {
                    i += 1;
                    two.unwrap().to_string()
                } else {
                    c.to_ascii_uppercase().to_string()
                };
                *counts.entry(sym.clone()).or_insert(0) += 1;
                atoms.push(A {
                    sym,
                    aromatic: c.is_ascii_lowercase(),
                    bracket: None,
                    single: 0,
                    arom_bonds: 0,
                });
                let a = atoms.len() - 1;
                if let Some(p) = prev {
                    connect(&mut atoms, p, a, pending.take());
                }
                prev = Some(a);
            }
        }
        i += 1;
    }
    for a in &atoms {
        if a.bracket.is_some() {
            continue;
        }
        let valence: i64 = match a.sym.as_str() {
            "B" => 3,
            "C" => 4,
            "N" => 3,
            "O" => 2,
            "S" => 2,
            "P" => 3,
            _ => 1,
        };
        // an aromatic atom in one ring uses one valence unit per ring bond plus one shared unit
        let used = a.single as i64
            + if a.arom_bonds > 0 {
                a.arom_bonds as i64 + 1
            } else {
                0
            };
        let h = (valence - used).max(0);
        if h > 0 {
            *counts.entry("H".into()).or_insert(0) += h;
        }
    }
    (counts, charge)
}

/// Reactant-minus-product counts from [`oracle_formula`], zero entries dropped.
pub fn oracle_delta(reaction: &str) -> (BTreeMap<String, i64>, i64) {
    let (r, p) = reaction.split_once(">>").unwrap();
    let (mut counts, rq) = oracle_formula(r);
    let (pc, pq) = oracle_formula(p);
    for (e, n) in pc {
        *counts.entry(e).or_insert(0) -= n;
    }
    counts.retain(|_, n| *n != 0);
    (counts, rq - pq)
}

/// Balanced reaction with some rule additions undone: each picked rule's
/// added products move to the reactant side and its added reactants to the
/// product side, so the delta is a sum of rule triggers.
pub fn rule_coverable(seed: u64, rules: &[CompletionRule]) -> ReactionRecord {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let base = &planted_row(seed).complete;
    let mut r = parse_reaction(base).unwrap();
    for _ in 0..g.random_range(0..4) {
        let rule = &rules[g.random_range(0..rules.len())];
        r.reactants.extend(rule.add_products.iter().cloned());
        r.products.extend(rule.add_reactants.iter().cloned());
    }
    r
}

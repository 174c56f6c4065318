//! Implicit-hydrogen resolution for aromatic atoms, Kekulé assignment and
//! Hückel-style aromaticity perception.

use super::element::Element;
use super::molecule::{Atom, Bond, BondOrder};

const MAX_RING: usize = 8;
const MAX_CYCLES: usize = 5_000;
const MATCHING_BUDGET: usize = 1_000_000;

pub(crate) struct Resolved {
    pub hydrogens: u8,
    pub needs_pi: bool,
}

/// Hydrogen count of an organic-subset atom written without brackets.
/// `sigma` counts aromatic bonds as one. Returns `None` when the bond sum
/// exceeds every default valence.
pub(crate) fn unbracketed_hydrogens(
    element: Element,
    aromatic: bool,
    sigma: u32,
) -> Option<Resolved> {
    let v = element
        .default_valences()
        .iter()
        .map(|&v| v as u32)
        .find(|&v| v >= sigma)?;
    let needs_pi = aromatic && v > sigma;
    Some(Resolved {
        hydrogens: (v - sigma - needs_pi as u32) as u8,
        needs_pi,
    })
}

/// Whether an aromatic atom with a known hydrogen count still has an open
/// valence that must be filled by a Kekulé double bond.
pub(crate) fn needs_pi(atom: &Atom, sigma: u32) -> bool {
    let total = sigma + atom.hydrogens() as u32;
    atom.element
        .charged_valences(atom.charge)
        .into_iter()
        .map(u32::from)
        .find(|&v| v >= total)
        .is_some_and(|v| v > total)
}

pub(crate) fn bracket_needs_pi(atom: &Atom, sigma: u32) -> bool {
    needs_pi(atom, sigma)
}

/// Assigns alternating single/double bonds to the aromatic bonds so that
/// every atom in `needs_pi` receives exactly one double bond. Returns the
/// bond list with no aromatic orders left, or `None` if no assignment exists.
pub(crate) fn kekulize(atoms: &[Atom], bonds: &[Bond], needs_pi: &[bool]) -> Option<Vec<Bond>> {
    let n = atoms.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, b) in bonds.iter().enumerate() {
        if b.order == BondOrder::Aromatic && needs_pi[b.a] && needs_pi[b.b] {
            adj[b.a].push((b.b, i));
            adj[b.b].push((b.a, i));
        }
    }
    let mut matched: Vec<Option<usize>> = vec![None; n];
    let mut budget = MATCHING_BUDGET;
    if !match_all(&adj, needs_pi, &mut matched, &mut budget) {
        return None;
    }
    let mut out = bonds.to_vec();
    for b in &mut out {
        if b.order == BondOrder::Aromatic {
            b.order = BondOrder::Single;
        }
    }
    for (atom, m) in matched.iter().enumerate() {
        if let Some(bi) = *m {
            if out[bi].a == atom {
                out[bi].order = BondOrder::Double;
            }
        }
    }
    Some(out)
}

fn match_all(
    adj: &[Vec<(usize, usize)>],
    needs_pi: &[bool],
    matched: &mut [Option<usize>],
    budget: &mut usize,
) -> bool {
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    // Most constrained unmatched atom first.
    let mut pick: Option<(usize, usize)> = None;
    for u in 0..adj.len() {
        if !needs_pi[u] || matched[u].is_some() {
            continue;
        }
        let free = adj[u].iter().filter(|(v, _)| matched[*v].is_none()).count();
        if free == 0 {
            return false;
        }
        if pick.is_none_or(|(_, best)| free < best) {
            pick = Some((u, free));
        }
    }
    let Some((u, _)) = pick else {
        return true;
    };
    for &(v, bi) in &adj[u] {
        if matched[v].is_some() {
            continue;
        }
        matched[u] = Some(bi);
        matched[v] = Some(bi);
        if match_all(adj, needs_pi, matched, budget) {
            return true;
        }
        matched[u] = None;
        matched[v] = None;
    }
    false
}

/// Pi-electron role of an atom independent of any particular ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PiRole {
    Ineligible,
    /// Has a double bond to the given atom.
    Double(usize),
    /// Contributes a fixed number of electrons (lone pair, empty orbital).
    Fixed(u32),
}

fn pi_role(atoms: &[Atom], bonds: &[Bond], adj: &[Vec<(usize, usize)>], i: usize) -> PiRole {
    let atom = &atoms[i];
    if !atom.element.can_be_aromatic() {
        return PiRole::Ineligible;
    }
    let mut double = None;
    for &(j, bi) in &adj[i] {
        match bonds[bi].order {
            BondOrder::Triple => return PiRole::Ineligible,
            BondOrder::Double => {
                if double.is_some() {
                    return PiRole::Ineligible;
                }
                double = Some(j);
            }
            _ => {}
        }
    }
    if let Some(j) = double {
        return PiRole::Double(j);
    }
    let connections = adj[i].len() + atom.hydrogens() as usize;
    let e = atom.element;
    match (e, atom.charge) {
        (Element::N | Element::P | Element::AS, 0) if connections == 3 => PiRole::Fixed(2),
        (Element::N | Element::P, -1) if connections == 2 => PiRole::Fixed(2),
        (Element::O | Element::S | Element::SE | Element::TE, 0) if connections == 2 => {
            PiRole::Fixed(2)
        }
        (Element::C, -1) if connections == 3 => PiRole::Fixed(2),
        (Element::C, 1) if connections == 3 => PiRole::Fixed(0),
        (Element::B, 0) if connections == 3 => PiRole::Fixed(0),
        _ => PiRole::Ineligible,
    }
}

/// Simple cycles up to `MAX_RING` atoms within the eligible subgraph, each
/// as an ordered atom list.
fn cycles(adj: &[Vec<(usize, usize)>], eligible: &[bool]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let n = adj.len();
    let mut path = Vec::with_capacity(MAX_RING);
    let mut on_path = vec![false; n];
    for start in 0..n {
        if !eligible[start] {
            continue;
        }
        path.clear();
        path.push(start);
        on_path[start] = true;
        extend(adj, eligible, start, &mut path, &mut on_path, &mut out);
        on_path[start] = false;
        if out.len() >= MAX_CYCLES {
            break;
        }
    }
    out
}

fn extend(
    adj: &[Vec<(usize, usize)>],
    eligible: &[bool],
    start: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Vec<usize>>,
) {
    if out.len() >= MAX_CYCLES {
        return;
    }
    let last = *path.last().unwrap();
    for &(next, _) in &adj[last] {
        if next == start && path.len() >= 3 {
            // Each cycle is found twice (once per direction); keep one.
            if path[1] < *path.last().unwrap() {
                out.push(path.clone());
            }
            continue;
        }
        if next <= start || !eligible[next] || on_path[next] || path.len() >= MAX_RING {
            continue;
        }
        path.push(next);
        on_path[next] = true;
        extend(adj, eligible, start, path, on_path, out);
        on_path[next] = false;
        path.pop();
    }
}

struct RingCheck {
    /// Exocyclic double bonds to atoms outside this ring that must
    /// themselves end up aromatic (fused systems).
    depends_on: Vec<(usize, usize)>,
}

fn check_ring(
    atoms: &[Atom],
    roles: &[PiRole],
    in_cycle: &[bool],
    ring: &[usize],
) -> Option<RingCheck> {
    let len = ring.len();
    let mut electrons = 0;
    let mut depends_on = Vec::new();
    for (k, &i) in ring.iter().enumerate() {
        let prev = ring[(k + len - 1) % len];
        let next = ring[(k + 1) % len];
        match roles[i] {
            PiRole::Ineligible => return None,
            PiRole::Fixed(n) => electrons += n,
            PiRole::Double(j) if j == prev || j == next => electrons += 1,
            PiRole::Double(j) if ring.contains(&j) => return None,
            PiRole::Double(j) if in_cycle[j] => {
                // Double bond into a fused neighbor ring.
                electrons += 1;
                depends_on.push((i, j));
            }
            PiRole::Double(j) => {
                // Exocyclic C=O, C=N or C=S leaves the carbon's p orbital
                // empty; any other exocyclic double bond breaks the ring.
                let hetero = matches!(atoms[j].element, Element::O | Element::N | Element::S);
                if atoms[i].element != Element::C || !hetero {
                    return None;
                }
            }
        }
    }
    (electrons >= 2 && (electrons - 2) % 4 == 0).then_some(RingCheck { depends_on })
}

/// Marks aromatic atoms and bonds on a Kekulé structure. Aromatic flags from
/// the input are discarded; the result depends only on the Kekulé graph.
pub(crate) fn perceive(mut atoms: Vec<Atom>, kekule: Vec<Bond>) -> (Vec<Atom>, Vec<Bond>) {
    let n = atoms.len();
    for a in &mut atoms {
        a.aromatic = false;
    }
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, b) in kekule.iter().enumerate() {
        adj[b.a].push((b.b, i));
        adj[b.b].push((b.a, i));
    }
    let roles: Vec<PiRole> = (0..n).map(|i| pi_role(&atoms, &kekule, &adj, i)).collect();
    let eligible: Vec<bool> = roles.iter().map(|r| *r != PiRole::Ineligible).collect();
    if !eligible.iter().any(|&e| e) {
        return (atoms, kekule);
    }

    let rings = cycles(&adj, &eligible);
    let mut in_cycle = vec![false; n];
    for ring in &rings {
        for &i in ring {
            in_cycle[i] = true;
        }
    }
    let mut accepted: Vec<(Vec<usize>, RingCheck)> = rings
        .into_iter()
        .filter_map(|ring| check_ring(&atoms, &roles, &in_cycle, &ring).map(|c| (ring, c)))
        .collect();

    // Drop rings whose fused exocyclic partners are not themselves part of
    // an accepted ring sharing that bond, until stable.
    loop {
        let before = accepted.len();
        let snapshot: Vec<Vec<usize>> = accepted.iter().map(|(r, _)| r.clone()).collect();
        accepted.retain(|(_, check)| {
            check
                .depends_on
                .iter()
                .all(|&(i, j)| snapshot.iter().any(|r| ring_has_edge(r, i, j)))
        });
        if accepted.len() == before {
            break;
        }
    }
    if accepted.is_empty() {
        return (atoms, kekule);
    }

    let mut aromatic_bond = vec![false; kekule.len()];
    let mut aromatic_atom = vec![false; n];
    for (ring, _) in &accepted {
        let len = ring.len();
        for k in 0..len {
            let (i, j) = (ring[k], ring[(k + 1) % len]);
            aromatic_atom[i] = true;
            if let Some(&(_, bi)) = adj[i].iter().find(|(v, _)| *v == j) {
                aromatic_bond[bi] = true;
            }
        }
    }

    let mut out_atoms = atoms.clone();
    let mut out_bonds = kekule.clone();
    for (i, a) in out_atoms.iter_mut().enumerate() {
        a.aromatic = aromatic_atom[i];
    }
    for (bi, b) in out_bonds.iter_mut().enumerate() {
        if aromatic_bond[bi] {
            b.order = BondOrder::Aromatic;
        }
    }

    // The perceived form must be readable again: every aromatic atom that
    // still needs a double bond has to find a partner.
    let mut sigma = vec![0u32; n];
    for b in &out_bonds {
        sigma[b.a] += b.order.valence_contribution();
        sigma[b.b] += b.order.valence_contribution();
    }
    let need: Vec<bool> = (0..n)
        .map(|i| out_atoms[i].aromatic && needs_pi(&out_atoms[i], sigma[i]))
        .collect();
    if kekulize(&out_atoms, &out_bonds, &need).is_none() {
        return (atoms, kekule);
    }
    (out_atoms, out_bonds)
}

fn ring_has_edge(ring: &[usize], i: usize, j: usize) -> bool {
    let len = ring.len();
    (0..len).any(|k| {
        let (a, b) = (ring[k], ring[(k + 1) % len]);
        (a == i && b == j) || (a == j && b == i)
    })
}

//! Private set intersection over vertex identifiers.
//!
//! Two backends: `Plain`, a trusted-oracle intersection, and `Ddh`, the
//! classic two-round Diffie-Hellman protocol. In the DDH protocol each party
//! publishes `H(x)^k` for its own ids under a private exponent `k`, re-blinds
//! the peer's list with its own exponent, and compares the doubly blinded
//! values, which agree exactly on the common ids.
//!
//! Hashing maps an id to `g^(SHA-256(id) mod q) mod p`. That is fine for a
//! simulator but not a production hash-to-group: anyone who can solve
//! discrete logs in the group can recover the exponent.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use num_bigint::BigUint;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::NodeId;

/// Subgroup of quadratic residues of a safe prime `p = 2q + 1`, generated by 4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DdhGroup {
    pub name: &'static str,
    pub modulus: BigUint,
    pub order: BigUint,
    pub generator: BigUint,
}

impl DdhGroup {
    fn from_hex(name: &'static str, q_hex: &str) -> Self {
        let order = BigUint::parse_bytes(q_hex.as_bytes(), 16).expect("valid hex constant");
        let modulus = &order * 2u32 + 1u32;
        Self {
            name,
            modulus,
            order,
            generator: BigUint::from(4u32),
        }
    }

    /// 64-bit safe prime. Only for tests and quick simulations.
    pub fn test64() -> Self {
        Self::from_hex("test64", "400000000000361f")
    }

    /// 257-bit safe prime whose subgroup order exceeds 2^255.
    pub fn safe256() -> Self {
        Self::from_hex(
            "safe256",
            "800000000000000000000000000000000000000000000000000000003ade6d13",
        )
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "test64" => Some(Self::test64()),
            "safe256" => Some(Self::safe256()),
            _ => None,
        }
    }

    fn element_len(&self) -> usize {
        (self.modulus.bits() as usize).div_ceil(8)
    }

    fn hash_to_group(&self, id: NodeId) -> BigUint {
        let digest = Sha256::digest(id_bytes(id));
        let mut e = BigUint::from_bytes_be(&digest) % &self.order;
        if e == BigUint::ZERO {
            e = BigUint::from(1u32);
        }
        self.generator.modpow(&e, &self.modulus)
    }

    fn in_subgroup(&self, y: &BigUint) -> bool {
        *y != BigUint::ZERO
            && y < &self.modulus
            && y.modpow(&self.order, &self.modulus) == BigUint::from(1u32)
    }

    /// Maps arbitrary seed material to an exponent in `[1, q-1]`.
    pub fn secret_from_seed(&self, seed: u64, party: &str) -> BigUint {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(party.as_bytes());
        h.update(self.name.as_bytes());
        let wide = BigUint::from_bytes_be(&h.finalize());
        wide % (&self.order - 1u32) + 1u32
    }

    fn encode(&self, elems: &[BigUint]) -> Vec<u8> {
        let len = self.element_len();
        let mut out = Vec::with_capacity(len * elems.len());
        for e in elems {
            let b = e.to_bytes_be();
            out.extend(std::iter::repeat_n(0u8, len - b.len()));
            out.extend_from_slice(&b);
        }
        out
    }

    fn decode(&self, bytes: &[u8]) -> Result<Vec<BigUint>> {
        let len = self.element_len();
        if !bytes.len().is_multiple_of(len) {
            return Err(Error::PsiAbort(format!(
                "message length {} is not a multiple of {len}",
                bytes.len()
            )));
        }
        let elems: Vec<BigUint> = bytes.chunks(len).map(BigUint::from_bytes_be).collect();
        if let Some(bad) = elems.iter().position(|y| !self.in_subgroup(y)) {
            return Err(Error::PsiAbort(format!(
                "element {bad} is not in the subgroup"
            )));
        }
        Ok(elems)
    }
}

/// Big-endian u64 encoding of a vertex id: the plaintext form an id would
/// take on the wire.
pub fn id_bytes(id: NodeId) -> [u8; 8] {
    (id as u64).to_be_bytes()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PsiBackend {
    Plain,
    Ddh(DdhGroup),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PsiTranscript {
    messages: Vec<(String, Vec<u8>)>,
}

impl PsiTranscript {
    pub fn push(&mut self, sender: impl Into<String>, payload: Vec<u8>) {
        self.messages.push((sender.into(), payload));
    }

    pub fn messages(&self) -> &[(String, Vec<u8>)] {
        &self.messages
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// One `sender,hexpayload` line per message.
    pub fn to_hex_lines(&self) -> String {
        let mut s = String::new();
        for (sender, payload) in &self.messages {
            let _ = writeln!(s, "{sender},{}", hex::encode(payload));
        }
        s
    }

    pub fn from_hex_lines(text: &str) -> Result<Self> {
        let mut t = Self::default();
        for (n, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let (sender, payload) = line.split_once(',').ok_or_else(|| {
                Error::Decode(format!("transcript line {}: missing comma", n + 1))
            })?;
            let payload = hex::decode(payload.trim())
                .map_err(|e| Error::Decode(format!("transcript line {}: {e}", n + 1)))?;
            t.push(sender, payload);
        }
        Ok(t)
    }

    /// True if any message contains `needle` as a contiguous byte run.
    pub fn contains_bytes(&self, needle: &[u8]) -> bool {
        self.messages
            .iter()
            .any(|(_, p)| p.windows(needle.len()).any(|w| w == needle))
    }
}

pub fn psi_plain(a: &BTreeSet<NodeId>, b: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    a.intersection(b).copied().collect()
}

/// One participant of a DDH session.
#[derive(Debug, Clone)]
pub struct PsiParty<'a> {
    pub name: &'a str,
    pub ids: &'a BTreeSet<NodeId>,
    pub secret: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsiOutcome {
    pub seen_by_a: BTreeSet<NodeId>,
    pub seen_by_b: BTreeSet<NodeId>,
    pub transcript: PsiTranscript,
}

fn blind_all(group: &DdhGroup, elems: &[BigUint], secret: &BigUint) -> Vec<BigUint> {
    elems
        .iter()
        .map(|y| y.modpow(secret, &group.modulus))
        .collect()
}

fn check_secret(group: &DdhGroup, party: &PsiParty<'_>) -> Result<()> {
    if party.secret == BigUint::ZERO || party.secret >= group.order {
        return Err(Error::InvalidArgument(format!(
            "secret of party {} is outside [1, q-1]",
            party.name
        )));
    }
    Ok(())
}

fn distinct(values: &[BigUint], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(values.len());
    for v in values {
        if !seen.insert(v) {
            return Err(Error::PsiAbort(format!(
                "duplicate {what} value (hash collision; use a larger group)"
            )));
        }
    }
    Ok(())
}

/// Runs the two-round protocol in memory. Each party's first message lists
/// its blinded ids in ascending id order, which leaks nothing beyond the set
/// size since the blinded values are pseudorandom.
pub fn psi_ddh(a: &PsiParty<'_>, b: &PsiParty<'_>, group: &DdhGroup) -> Result<PsiOutcome> {
    check_secret(group, a)?;
    check_secret(group, b)?;
    let mut transcript = PsiTranscript::default();

    let a_ids: Vec<NodeId> = a.ids.iter().copied().collect();
    let b_ids: Vec<NodeId> = b.ids.iter().copied().collect();
    let a_hashed: Vec<BigUint> = a_ids.iter().map(|&x| group.hash_to_group(x)).collect();
    let b_hashed: Vec<BigUint> = b_ids.iter().map(|&x| group.hash_to_group(x)).collect();

    // Round 1: each side publishes H(x)^k under its own key.
    let msg_a1 = group.encode(&blind_all(group, &a_hashed, &a.secret));
    let msg_b1 = group.encode(&blind_all(group, &b_hashed, &b.secret));
    transcript.push(a.name, msg_a1.clone());
    transcript.push(b.name, msg_b1.clone());

    // Round 2: each side re-blinds the peer's list, preserving its order.
    let from_a = group.decode(&msg_a1)?;
    let from_b = group.decode(&msg_b1)?;
    distinct(&from_a, "blinded")?;
    distinct(&from_b, "blinded")?;
    let msg_b2 = group.encode(&blind_all(group, &from_a, &b.secret));
    let msg_a2 = group.encode(&blind_all(group, &from_b, &a.secret));
    transcript.push(a.name, msg_a2.clone());
    transcript.push(b.name, msg_b2.clone());

    // a holds H(a_i)^{ab} (sent back by b) and H(b_j)^{ba} (computed itself).
    let a_double = group.decode(&msg_b2)?;
    let b_double = group.decode(&msg_a2)?;
    distinct(&a_double, "double-blinded")?;
    distinct(&b_double, "double-blinded")?;
    if a_double.len() != a_ids.len() || b_double.len() != b_ids.len() {
        return Err(Error::PsiAbort("re-blinded list length changed".into()));
    }

    let b_index: HashMap<&BigUint, NodeId> = b_double
        .iter()
        .zip(&b_ids)
        .map(|(v, &id)| (v, id))
        .collect();
    let a_index: HashSet<&BigUint> = a_double.iter().collect();
    let seen_by_a = a_double
        .iter()
        .zip(&a_ids)
        .filter(|(v, _)| b_index.contains_key(v))
        .map(|(_, &id)| id)
        .collect();
    let seen_by_b = b_double
        .iter()
        .zip(&b_ids)
        .filter(|(v, _)| a_index.contains(v))
        .map(|(_, &id)| id)
        .collect();
    Ok(PsiOutcome {
        seen_by_a,
        seen_by_b,
        transcript,
    })
}

/// Intersection of two id sets via the configured backend. Returns the
/// intersection and the message transcript (empty for `Plain`).
pub fn intersect(
    backend: &PsiBackend,
    a: &BTreeSet<NodeId>,
    b: &BTreeSet<NodeId>,
    session_seed: u64,
) -> Result<(BTreeSet<NodeId>, PsiTranscript)> {
    match backend {
        PsiBackend::Plain => Ok((psi_plain(a, b), PsiTranscript::default())),
        PsiBackend::Ddh(group) => {
            let pa = PsiParty {
                name: "a",
                ids: a,
                secret: group.secret_from_seed(session_seed, "a"),
            };
            let pb = PsiParty {
                name: "b",
                ids: b,
                secret: group.secret_from_seed(session_seed, "b"),
            };
            let out = psi_ddh(&pa, &pb, group)?;
            if out.seen_by_a != out.seen_by_b {
                return Err(Error::PsiAbort(
                    "parties disagree on the intersection".into(),
                ));
            }
            Ok((out.seen_by_a, out.transcript))
        }
    }
}

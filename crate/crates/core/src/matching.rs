//! Temporal seller→buyer matchings under a stock limit.
//!
//! A matching pairs each chosen seller with a distinct later buyer. With a
//! stock limit `K`, no position `t` may be straddled by more than `K` pairs
//! (`seller ≤ t < buyer`), since every straddling pair is an item held in
//! stock at that moment.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::streams::{AgentStream, Role};

/// Largest stream the exhaustive oracle accepts.
pub const BRUTE_FORCE_MAX_LEN: usize = 20;

/// Inventory capacity: a positive bound or none at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StockCap {
    Bounded(usize),
    Unbounded,
}

impl StockCap {
    pub fn bounded(k: usize) -> Result<Self, MatchingError> {
        if k == 0 {
            return Err(MatchingError::InvalidCap);
        }
        Ok(Self::Bounded(k))
    }

    /// `true` if `stock` more items can still take one more.
    #[inline]
    pub fn has_room(self, stock: usize) -> bool {
        match self {
            StockCap::Bounded(k) => stock < k,
            StockCap::Unbounded => true,
        }
    }

    #[inline]
    pub fn admits(self, level: usize) -> bool {
        match self {
            StockCap::Bounded(k) => level <= k,
            StockCap::Unbounded => true,
        }
    }
}

impl fmt::Display for StockCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StockCap::Bounded(k) => write!(f, "{k}"),
            StockCap::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl FromStr for StockCap {
    type Err = MatchingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "unbounded" | "inf" | "∞" => Ok(StockCap::Unbounded),
            t => t
                .parse::<usize>()
                .map_err(|_| MatchingError::InvalidCapToken(t.to_string()))
                .and_then(StockCap::bounded),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchingError {
    #[error("stock cap must be at least 1")]
    InvalidCap,
    #[error("cannot parse stock cap `{0}` (expected a positive integer or `unbounded`)")]
    InvalidCapToken(String),
    #[error("exhaustive matching oracle is limited to {limit} agents, got {len}")]
    TooLarge { len: usize, limit: usize },
    #[error("invalid matching: {0}")]
    Invalid(String),
}

/// Pairs `(seller_index, buyer_index)`, 0-based positions in the stream.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemporalMatching {
    pub pairs: Vec<(usize, usize)>,
}

impl TemporalMatching {
    pub fn size(&self) -> usize {
        self.pairs.len()
    }

    /// Checks roles, ordering, distinctness and the temporal-cut bound.
    pub fn validate(&self, stream: &AgentStream, cap: StockCap) -> Result<(), MatchingError> {
        let roles = stream.roles();
        let n = roles.len();
        let mut used = vec![false; n];
        // diff[t] accumulates +1 at seller, −1 at buyer: cut(t) = prefix sum.
        let mut diff = vec![0i64; n + 1];
        for &(s, b) in &self.pairs {
            if s >= b || b >= n {
                return Err(MatchingError::Invalid(format!(
                    "pair ({s}, {b}) out of order or range"
                )));
            }
            if roles[s] != Role::Seller || roles[b] != Role::Buyer {
                return Err(MatchingError::Invalid(format!(
                    "pair ({s}, {b}) has wrong roles"
                )));
            }
            if std::mem::replace(&mut used[s], true) || std::mem::replace(&mut used[b], true) {
                return Err(MatchingError::Invalid(format!(
                    "agent reused in pair ({s}, {b})"
                )));
            }
            diff[s] += 1;
            diff[b] -= 1;
        }
        let mut cut = 0i64;
        for (t, d) in diff.iter().enumerate().take(n) {
            cut += d;
            if !cap.admits(cut as usize) {
                return Err(MatchingError::Invalid(format!(
                    "temporal cut after position {t} is {cut}, above cap {cap}"
                )));
            }
        }
        Ok(())
    }
}

/// Online FIFO matching: a seller joins the queue while it holds fewer than
/// `K` sellers; a buyer takes the front of the queue when it is nonempty.
pub fn fifo_match(stream: &AgentStream, cap: StockCap) -> TemporalMatching {
    let mut queue = VecDeque::new();
    let mut pairs = Vec::new();
    for (t, &role) in stream.roles().iter().enumerate() {
        match role {
            Role::Seller => {
                if cap.has_room(queue.len()) {
                    queue.push_back(t);
                }
            }
            Role::Buyer => {
                if let Some(s) = queue.pop_front() {
                    pairs.push((s, t));
                }
            }
        }
    }
    TemporalMatching { pairs }
}

/// Maximum matching size `κ` under the stock cap.
pub fn kappa(stream: &AgentStream, cap: StockCap) -> usize {
    fifo_match(stream, cap).size()
}

/// Vertex-cover bound `min_t (sellers before t + buyers from t on)` for
/// the uncapped matching problem.
pub fn kappa_cover_bound(stream: &AgentStream) -> usize {
    let roles = stream.roles();
    let mut sellers_before = 0;
    let mut buyers_after = stream.n_buyers();
    let mut best = sellers_before + buyers_after;
    for &r in roles {
        match r {
            Role::Seller => sellers_before += 1,
            Role::Buyer => buyers_after -= 1,
        }
        best = best.min(sellers_before + buyers_after);
    }
    best
}

/// Exhaustive search over seller→later-buyer assignments.
///
/// Every buyer is either left unmatched or assigned any still-free earlier
/// seller; partial assignments that push a temporal cut above the cap are
/// pruned.
pub fn brute_force_max_matching(
    stream: &AgentStream,
    cap: StockCap,
) -> Result<usize, MatchingError> {
    let n = stream.len();
    if n > BRUTE_FORCE_MAX_LEN {
        return Err(MatchingError::TooLarge {
            len: n,
            limit: BRUTE_FORCE_MAX_LEN,
        });
    }
    let roles = stream.roles();
    let buyers: Vec<usize> = (0..n).filter(|&t| roles[t] == Role::Buyer).collect();
    let mut search = Search {
        roles,
        buyers: &buyers,
        cap,
        seller_used: vec![false; n],
        cut: vec![0usize; n],
        best: 0,
    };
    search.run(0, 0);
    Ok(search.best)
}

struct Search<'a> {
    roles: &'a [Role],
    buyers: &'a [usize],
    cap: StockCap,
    seller_used: Vec<bool>,
    cut: Vec<usize>,
    best: usize,
}

impl Search<'_> {
    fn run(&mut self, next_buyer: usize, matched: usize) {
        if matched > self.best {
            self.best = matched;
        }
        if next_buyer == self.buyers.len()
            || matched + (self.buyers.len() - next_buyer) <= self.best
        {
            return;
        }
        let b = self.buyers[next_buyer];
        for s in 0..b {
            if self.roles[s] != Role::Seller || self.seller_used[s] {
                continue;
            }
            if !(s..b).all(|t| self.cap.has_room(self.cut[t])) {
                continue;
            }
            self.seller_used[s] = true;
            for t in s..b {
                self.cut[t] += 1;
            }
            self.run(next_buyer + 1, matched + 1);
            for t in s..b {
                self.cut[t] -= 1;
            }
            self.seller_used[s] = false;
        }
        self.run(next_buyer + 1, matched);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str) -> AgentStream {
        text.parse().unwrap()
    }

    fn k(v: usize) -> StockCap {
        StockCap::bounded(v).unwrap()
    }

    #[test]
    fn fifo_examples() {
        let m = fifo_match(&s("SBB"), StockCap::Unbounded);
        assert_eq!(m.pairs, vec![(0, 1)]);
        assert_eq!(fifo_match(&s("SSBB"), k(1)).size(), 1);
        let m = fifo_match(&s("SSBB"), k(2));
        assert_eq!(m.pairs, vec![(0, 2), (1, 3)]);
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(
            brute_force_max_matching(&s("SB"), StockCap::Unbounded).unwrap(),
            1
        );
        for cap in [k(1), k(2), k(5), StockCap::Unbounded] {
            assert_eq!(brute_force_max_matching(&s("BSSB"), cap).unwrap(), 1);
        }
        assert_eq!(brute_force_max_matching(&s("SSBB"), k(1)).unwrap(), 1);
        assert_eq!(brute_force_max_matching(&s("SSBB"), k(2)).unwrap(), 2);
    }

    #[test]
    fn brute_force_refuses_large_streams() {
        let long = s("(SB)^11");
        assert!(matches!(
            brute_force_max_matching(&long, StockCap::Unbounded),
            Err(MatchingError::TooLarge { len: 22, .. })
        ));
        assert!(brute_force_max_matching(&s("(SB)^10"), StockCap::Unbounded).is_ok());
    }

    #[test]
    fn kappa_examples() {
        for n in 1..8 {
            assert_eq!(kappa(&s(&format!("S B^{n}")), StockCap::Unbounded), 1);
        }
        for m in 1..20 {
            assert_eq!(kappa(&s(&format!("(S B)^{m}")), StockCap::Unbounded), m);
        }
        assert_eq!(kappa(&s("S^3 B^2"), StockCap::Unbounded), 2);
    }

    #[test]
    fn validator_rejects_bad_matchings() {
        let st = s("SSBB");
        let ok = TemporalMatching {
            pairs: vec![(0, 2), (1, 3)],
        };
        assert!(ok.validate(&st, k(2)).is_ok());
        assert!(ok.validate(&st, k(1)).is_err());
        for pairs in [
            vec![(2, 0)],
            vec![(0, 1)],
            vec![(0, 2), (0, 3)],
            vec![(0, 9)],
        ] {
            assert!(TemporalMatching { pairs }
                .validate(&st, StockCap::Unbounded)
                .is_err());
        }
    }

    #[test]
    fn stock_cap_parsing() {
        assert_eq!("3".parse::<StockCap>().unwrap(), k(3));
        assert_eq!(
            "unbounded".parse::<StockCap>().unwrap(),
            StockCap::Unbounded
        );
        assert!("0".parse::<StockCap>().is_err());
        assert!("x".parse::<StockCap>().is_err());
    }

    fn all_streams(max_len: usize) -> impl Iterator<Item = AgentStream> {
        (0..=max_len).flat_map(|len| {
            (0u32..(1 << len)).map(move |bits| {
                AgentStream::new(
                    (0..len)
                        .map(|i| {
                            if bits >> i & 1 == 1 {
                                Role::Seller
                            } else {
                                Role::Buyer
                            }
                        })
                        .collect(),
                )
            })
        })
    }

    #[test]
    fn fifo_is_valid_and_monotone_in_cap() {
        for st in all_streams(10) {
            let mut prev = 0;
            for cap in [k(1), k(2), k(3), k(4), StockCap::Unbounded] {
                let m = fifo_match(&st, cap);
                m.validate(&st, cap).unwrap();
                assert!(m.size() >= prev, "{st}");
                prev = m.size();
            }
        }
    }

    #[test]
    fn uncapped_kappa_equals_cover_bound() {
        for st in all_streams(12) {
            assert_eq!(
                kappa(&st, StockCap::Unbounded),
                kappa_cover_bound(&st),
                "{st}"
            );
        }
    }

    #[test]
    fn fifo_matches_oracle_up_to_length_nine() {
        // Full length-12 sweep lives in the acceptance suite.
        for st in all_streams(9) {
            for cap in [k(1), k(2), k(3), StockCap::Unbounded] {
                assert_eq!(
                    kappa(&st, cap),
                    brute_force_max_matching(&st, cap).unwrap(),
                    "{st} {cap}"
                );
            }
        }
    }
}

//! Agent streams: role sequences, a small pattern language, α-balance and
//! prefix domination.
//!
//! Pattern grammar (whitespace ignored):
//!
//! ```text
//! pattern := term+
//! term    := atom | atom '^' uint | '(' pattern ')' '^' uint
//! atom    := 'S' | 'B'
//! ```
//!
//! `"(S^2 B)^3"` expands to `SSBSSBSSB`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

/// Largest stream a pattern may expand to.
pub const MAX_EXPANSION: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Seller,
    Buyer,
}

impl Role {
    pub fn symbol(self) -> char {
        match self {
            Role::Seller => 'S',
            Role::Buyer => 'B',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StreamError {
    #[error("pattern syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("pattern expands to {length} roles, more than the limit of {limit}")]
    Overflow { length: u128, limit: u64 },
    #[error("{0}")]
    Domain(String),
}

/// A concrete sequence of sellers and buyers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AgentStream {
    roles: Vec<Role>,
    n_sellers: usize,
    n_buyers: usize,
}

impl AgentStream {
    pub fn new(roles: Vec<Role>) -> Self {
        let n_sellers = roles.iter().filter(|&&r| r == Role::Seller).count();
        let n_buyers = roles.len() - n_sellers;
        Self {
            roles,
            n_sellers,
            n_buyers,
        }
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn n_sellers(&self) -> usize {
        self.n_sellers
    }

    pub fn n_buyers(&self) -> usize {
        self.n_buyers
    }

    /// Number of sellers among the first `t` agents.
    pub fn prefix_sellers(&self, t: usize) -> usize {
        self.roles[..t.min(self.roles.len())]
            .iter()
            .filter(|&&r| r == Role::Seller)
            .count()
    }

    /// Running seller counts `c[t]` = sellers among the first `t` agents,
    /// for `t = 0..=len`.
    pub fn prefix_seller_counts(&self) -> Vec<usize> {
        let mut counts = Vec::with_capacity(self.roles.len() + 1);
        counts.push(0);
        let mut c = 0;
        for &r in &self.roles {
            if r == Role::Seller {
                c += 1;
            }
            counts.push(c);
        }
        counts
    }

    /// `true` iff there are exactly `alpha·n_B` sellers and the `i`-th buyer
    /// (1-based) is preceded by at least `alpha·i` sellers.
    pub fn is_alpha_balanced(&self, alpha: usize) -> bool {
        if alpha == 0 || self.n_sellers != alpha * self.n_buyers {
            return false;
        }
        let mut sellers = 0;
        let mut buyers = 0;
        for &r in &self.roles {
            match r {
                Role::Seller => sellers += 1,
                Role::Buyer => {
                    buyers += 1;
                    if sellers < alpha * buyers {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Weak prefix domination: every prefix of `self` holds at least as many
    /// sellers as the equally long prefix of `other`.
    pub fn prefix_dominates(&self, other: &AgentStream) -> Result<bool, StreamError> {
        if self.len() != other.len() {
            return Err(StreamError::Domain(format!(
                "prefix domination needs equal lengths, got {} and {}",
                self.len(),
                other.len()
            )));
        }
        let a = self.prefix_seller_counts();
        let b = other.prefix_seller_counts();
        Ok(a.iter().zip(&b).all(|(x, y)| x >= y))
    }

    /// A random α-balanced stream with `m` buyers. Each step picks a role
    /// with probability proportional to how many of that role remain, among
    /// the roles that keep the prefix balanced.
    pub fn random_balanced<R: Rng + ?Sized>(alpha: usize, m: usize, rng: &mut R) -> Self {
        let mut roles = Vec::with_capacity((alpha + 1) * m);
        let (mut sellers_left, mut buyers_left) = (alpha * m, m);
        let (mut sellers, mut buyers) = (0usize, 0usize);
        while sellers_left + buyers_left > 0 {
            let buyer_ok = buyers_left > 0 && sellers >= alpha * (buyers + 1);
            let seller_ok = sellers_left > 0;
            let pick_buyer = match (seller_ok, buyer_ok) {
                (true, true) => rng.random_range(0..sellers_left + buyers_left) >= sellers_left,
                (false, true) => true,
                _ => false,
            };
            if pick_buyer {
                roles.push(Role::Buyer);
                buyers += 1;
                buyers_left -= 1;
            } else {
                roles.push(Role::Seller);
                sellers += 1;
                sellers_left -= 1;
            }
        }
        Self::new(roles)
    }
}

impl fmt::Display for AgentStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.roles {
            write!(f, "{}", r.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for AgentStream {
    type Err = StreamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<StreamPattern>()?.expand()
    }
}

/// One element of a pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    /// A single role, optionally repeated (`S`, `B^4`).
    Atom { role: Role, reps: Option<u64> },
    /// A parenthesised sub-pattern repeated `reps` times.
    Group { body: Vec<Term>, reps: u64 },
}

/// Parsed stream pattern (a sequence of terms).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamPattern {
    terms: Vec<Term>,
}

fn terms_len(terms: &[Term]) -> u128 {
    terms
        .iter()
        .map(|t| match t {
            Term::Atom { reps, .. } => reps.unwrap_or(1) as u128,
            Term::Group { body, reps } => terms_len(body).saturating_mul(*reps as u128),
        })
        .fold(0u128, |a, b| a.saturating_add(b))
}

impl StreamPattern {
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Expanded length (saturating).
    pub fn len(&self) -> u128 {
        terms_len(&self.terms)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Materialise the pattern.
    pub fn expand(&self) -> Result<AgentStream, StreamError> {
        let length = self.len();
        if length > MAX_EXPANSION as u128 {
            return Err(StreamError::Overflow {
                length,
                limit: MAX_EXPANSION,
            });
        }
        let mut roles = Vec::with_capacity(length as usize);
        roles.extend(self.iter());
        Ok(AgentStream::new(roles))
    }

    /// Lazily generated roles; never materialises the stream.
    pub fn iter(&self) -> PatternIter<'_> {
        PatternIter {
            stack: vec![Frame {
                terms: &self.terms,
                index: 0,
                rep: 0,
                reps: 1,
            }],
            atom: None,
        }
    }
}

struct Frame<'a> {
    terms: &'a [Term],
    index: usize,
    rep: u64,
    reps: u64,
}

/// Streaming expansion of a [`StreamPattern`].
pub struct PatternIter<'a> {
    stack: Vec<Frame<'a>>,
    // Pending atom: role and remaining repetitions.
    atom: Option<(Role, u64)>,
}

impl Iterator for PatternIter<'_> {
    type Item = Role;

    fn next(&mut self) -> Option<Role> {
        loop {
            if let Some((role, left)) = self.atom {
                if left > 0 {
                    self.atom = Some((role, left - 1));
                    return Some(role);
                }
                self.atom = None;
            }
            let frame = self.stack.last_mut()?;
            if frame.index == frame.terms.len() {
                frame.rep += 1;
                if frame.rep < frame.reps {
                    frame.index = 0;
                } else {
                    self.stack.pop();
                }
                continue;
            }
            let term = &frame.terms[frame.index];
            frame.index += 1;
            match term {
                Term::Atom { role, reps } => self.atom = Some((*role, reps.unwrap_or(1))),
                Term::Group { body, reps } => {
                    if *reps > 0 && !body.is_empty() {
                        self.stack.push(Frame {
                            terms: body,
                            index: 0,
                            rep: 0,
                            reps: *reps,
                        });
                    }
                }
            }
        }
    }
}

fn render_terms(terms: &[Term], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for (i, t) in terms.iter().enumerate() {
        if i > 0 {
            f.write_str(" ")?;
        }
        match t {
            Term::Atom { role, reps: None } => write!(f, "{}", role.symbol())?,
            Term::Atom {
                role,
                reps: Some(k),
            } => write!(f, "{}^{k}", role.symbol())?,
            Term::Group { body, reps } => {
                f.write_str("(")?;
                render_terms(body, f)?;
                write!(f, ")^{reps}")?;
            }
        }
    }
    Ok(())
}

/// Canonical rendering; parses back to the same AST.
impl fmt::Display for StreamPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        render_terms(&self.terms, f)
    }
}

struct Parser<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    text: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<(usize, char)> {
        self.chars.get(self.pos).copied()
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.text.len(), |(i, _)| i)
    }

    fn error(&self, message: impl Into<String>) -> StreamError {
        StreamError::Syntax {
            position: self.offset(),
            message: message.into(),
        }
    }

    fn pattern(&mut self, nested: bool) -> Result<Vec<Term>, StreamError> {
        let mut terms = Vec::new();
        loop {
            match self.peek() {
                None => break,
                Some((_, ')')) if nested => break,
                Some(_) => terms.push(self.term()?),
            }
        }
        if terms.is_empty() {
            return Err(self.error("expected `S`, `B` or `(`"));
        }
        Ok(terms)
    }

    fn term(&mut self) -> Result<Term, StreamError> {
        let (_, c) = self.peek().ok_or_else(|| self.error("unexpected end"))?;
        match c {
            'S' | 'B' => {
                self.pos += 1;
                let role = if c == 'S' { Role::Seller } else { Role::Buyer };
                let reps = if matches!(self.peek(), Some((_, '^'))) {
                    self.pos += 1;
                    Some(self.uint()?)
                } else {
                    None
                };
                Ok(Term::Atom { role, reps })
            }
            '(' => {
                self.pos += 1;
                let body = self.pattern(true)?;
                match self.peek() {
                    Some((_, ')')) => self.pos += 1,
                    _ => return Err(self.error("expected `)`")),
                }
                match self.peek() {
                    Some((_, '^')) => self.pos += 1,
                    _ => return Err(self.error("a group must be followed by `^<count>`")),
                }
                Ok(Term::Group {
                    body,
                    reps: self.uint()?,
                })
            }
            other => Err(self.error(format!("unexpected character `{other}`"))),
        }
    }

    fn uint(&mut self) -> Result<u64, StreamError> {
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some((_, c)) = self.peek() {
            let Some(d) = c.to_digit(10) else { break };
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(d as u64))
                .ok_or_else(|| self.error("repetition count does not fit in 64 bits"))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.error("expected a repetition count"));
        }
        Ok(value)
    }
}

impl FromStr for StreamPattern {
    type Err = StreamError;

    /// Parses and enforces the expansion limit.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let chars: Vec<(usize, char)> = text
            .char_indices()
            .filter(|(_, c)| !c.is_whitespace())
            .collect();
        let mut parser = Parser {
            chars,
            pos: 0,
            text,
        };
        let terms = parser.pattern(false)?;
        let pattern = StreamPattern { terms };
        let length = pattern.len();
        if length > MAX_EXPANSION as u128 {
            return Err(StreamError::Overflow {
                length,
                limit: MAX_EXPANSION,
            });
        }
        Ok(pattern)
    }
}

/// `(S^alpha B)^m`, the least favourable α-balanced order.
pub fn interleaved(alpha: usize, m: usize) -> AgentStream {
    let mut roles = Vec::with_capacity((alpha + 1) * m);
    for _ in 0..m {
        roles.extend(std::iter::repeat_n(Role::Seller, alpha));
        roles.push(Role::Buyer);
    }
    AgentStream::new(roles)
}

/// `S^sellers B^buyers`.
pub fn sellers_then_buyers(sellers: usize, buyers: usize) -> AgentStream {
    let mut roles = vec![Role::Seller; sellers];
    roles.extend(std::iter::repeat_n(Role::Buyer, buyers));
    AgentStream::new(roles)
}
